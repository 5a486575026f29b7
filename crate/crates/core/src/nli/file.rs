use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NliBackend, PairKind, ScoreRequest};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{NliScores, ScoreForm};

/// One response-response entry of a `logits.jsonl` line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairLogits {
    pub i: usize,
    pub j: usize,
    pub s: [f64; 3],
}

/// A line of `logits.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitsRecord {
    pub id: String,
    pub qr: Vec<[f64; 3]>,
    pub rr: Vec<PairLogits>,
}

#[derive(Clone, Debug, PartialEq)]
struct RecordLogits {
    qr: Vec<NliScores>,
    rr: HashMap<(usize, usize), NliScores>,
}

impl RecordLogits {
    fn from_line(rec: &LogitsRecord) -> Result<Self> {
        let k = rec.qr.len();
        if k < 2 {
            return Err(Error::invalid(format!("qr has {k} entries, k must be ≥ 2")));
        }
        let qr = rec
            .qr
            .iter()
            .map(|t| NliScores::from_array(*t, ScoreForm::Logits))
            .collect::<Result<Vec<_>>>()?;
        let mut rr = HashMap::with_capacity(k * (k - 1));
        for p in &rec.rr {
            if p.i == p.j {
                return Err(Error::invalid(format!("self-pair forbidden: ({}, {})", p.i, p.j)));
            }
            if p.i >= k || p.j >= k {
                return Err(Error::invalid(format!(
                    "rr pair ({}, {}) out of range for k = {k}",
                    p.i, p.j
                )));
            }
            let s = NliScores::from_array(p.s, ScoreForm::Logits)?;
            if rr.insert((p.i, p.j), s).is_some() {
                return Err(Error::invalid(format!("duplicate rr pair ({}, {})", p.i, p.j)));
            }
        }
        if rr.len() != k * (k - 1) {
            return Err(Error::invalid(format!(
                "rr has {} pairs, expected k(k-1) = {} for k = {k}",
                rr.len(),
                k * (k - 1)
            )));
        }
        Ok(RecordLogits { qr, rr })
    }
}

/// Logits for whole datasets, indexed by record id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrecomputedScores {
    records: HashMap<String, RecordLogits>,
}

impl PrecomputedScores {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a LogitsRecord>) -> Result<Self> {
        let mut out = PrecomputedScores::default();
        for rec in records {
            out.insert(rec).map_err(|e| e.in_record(&rec.id))?;
        }
        Ok(out)
    }

    pub fn insert(&mut self, rec: &LogitsRecord) -> Result<()> {
        if rec.id.is_empty() {
            return Err(Error::invalid("id must be non-empty"));
        }
        let parsed = RecordLogits::from_line(rec)?;
        if self.records.insert(rec.id.clone(), parsed).is_some() {
            return Err(Error::invalid(format!("duplicate id {:?}", rec.id)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of stored responses for a record.
    pub fn k(&self, id: &str) -> Option<usize> {
        self.records.get(id).map(|r| r.qr.len())
    }

    pub fn qr(&self, id: &str, response: usize) -> Option<NliScores> {
        self.records.get(id)?.qr.get(response).copied()
    }

    pub fn rr(&self, id: &str, premise: usize, hypothesis: usize) -> Option<NliScores> {
        self.records.get(id)?.rr.get(&(premise, hypothesis)).copied()
    }

    /// Serializes back into `logits.jsonl` lines, sorted by id.
    pub fn to_records(&self) -> Vec<LogitsRecord> {
        let sorted: BTreeMap<_, _> = self.records.iter().collect();
        sorted
            .into_iter()
            .map(|(id, r)| {
                let k = r.qr.len();
                let mut rr = Vec::with_capacity(k * (k - 1));
                for i in 0..k {
                    for j in (0..k).filter(|&j| j != i) {
                        rr.push(PairLogits {
                            i,
                            j,
                            s: r.rr[&(i, j)].to_array(),
                        });
                    }
                }
                LogitsRecord {
                    id: id.clone(),
                    qr: r.qr.iter().map(NliScores::to_array).collect(),
                    rr,
                }
            })
            .collect()
    }
}

/// Loads and validates a `logits.jsonl` file.
pub fn load_precomputed(path: &Path) -> Result<PrecomputedScores> {
    let mut scores = PrecomputedScores::default();
    for (n, line) in io::read_lines(path)? {
        serde_json::from_str::<LogitsRecord>(&line)
            .map_err(Error::from)
            .and_then(|rec| scores.insert(&rec).map_err(|e| e.in_record(&rec.id)))
            .map_err(|e| e.at_line(n))?;
    }
    Ok(scores)
}

/// Serves precomputed logits. Read-only after load, so lookups need no locking.
#[derive(Clone, Debug)]
pub struct FileBackend {
    scores: PrecomputedScores,
}

impl FileBackend {
    pub fn new(scores: PrecomputedScores) -> Self {
        FileBackend { scores }
    }

    pub fn open(path: &Path) -> Result<Self> {
        load_precomputed(path).map(FileBackend::new)
    }

    pub fn scores(&self) -> &PrecomputedScores {
        &self.scores
    }
}

impl NliBackend for FileBackend {
    fn score_pair(&self, req: &ScoreRequest<'_>) -> Result<NliScores> {
        let key = req
            .key
            .ok_or_else(|| Error::invalid("file backend needs a record id and pair indices for every request"))?;
        let found = match key.kind {
            PairKind::QueryResponse { response } => self.scores.qr(key.record_id, response),
            PairKind::ResponseResponse { premise, hypothesis } => self.scores.rr(key.record_id, premise, hypothesis),
        };
        found.ok_or_else(|| Error::MissingPair(key.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nli::PairKey;

    fn full_record(id: &str, k: usize) -> LogitsRecord {
        let mut rr = Vec::new();
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    rr.push(PairLogits {
                        i,
                        j,
                        s: [i as f64, j as f64, -1.0],
                    });
                }
            }
        }
        LogitsRecord {
            id: id.into(),
            qr: (0..k).map(|i| [i as f64, 0.5, -0.5]).collect(),
            rr,
        }
    }

    #[test]
    fn k3_has_six_pairs() {
        let s = PrecomputedScores::from_records([&full_record("a", 3)]).unwrap();
        let mut count = 0;
        for i in 0..3 {
            for j in 0..3 {
                if s.rr("a", i, j).is_some() {
                    assert_ne!(i, j);
                    count += 1;
                }
            }
        }
        assert_eq!(count, 6);
        assert_eq!(s.k("a"), Some(3));
    }

    #[test]
    fn self_pair_forbidden() {
        let mut rec = full_record("a", 2);
        rec.rr.push(PairLogits {
            i: 1,
            j: 1,
            s: [0.0; 3],
        });
        let err = PrecomputedScores::from_records([&rec]).unwrap_err();
        assert!(err.to_string().contains("self-pair forbidden"), "{err}");
    }

    #[test]
    fn incomplete_or_duplicated_pairs_rejected() {
        let mut missing = full_record("a", 3);
        missing.rr.pop();
        assert!(PrecomputedScores::from_records([&missing]).is_err());

        let mut dup = full_record("a", 3);
        let first = dup.rr[0];
        dup.rr[1] = first;
        assert!(PrecomputedScores::from_records([&dup]).is_err());

        let mut oob = full_record("a", 2);
        oob.rr[0].j = 5;
        assert!(PrecomputedScores::from_records([&oob]).is_err());

        assert!(PrecomputedScores::from_records([&full_record("a", 2), &full_record("a", 2)]).is_err());
    }

    #[test]
    fn lookup_returns_stored_triple() {
        let backend = FileBackend::new(PrecomputedScores::from_records([&full_record("a", 3)]).unwrap());
        let req = ScoreRequest::new("q", "r").unwrap().with_key(PairKey {
            record_id: "a",
            kind: PairKind::ResponseResponse {
                premise: 2,
                hypothesis: 0,
            },
        });
        assert_eq!(backend.score_pair(&req).unwrap(), NliScores::logits(2.0, 0.0, -1.0));

        let missing = ScoreRequest::new("q", "r").unwrap().with_key(PairKey {
            record_id: "b",
            kind: PairKind::QueryResponse { response: 0 },
        });
        assert!(matches!(backend.score_pair(&missing), Err(Error::MissingPair(_))));
        assert!(backend.score_pair(&ScoreRequest::new("q", "r").unwrap()).is_err());
    }

    #[test]
    fn records_round_trip() {
        let recs = [full_record("b", 3), full_record("a", 2)];
        let s = PrecomputedScores::from_records(&recs).unwrap();
        let back = s.to_records();
        assert_eq!(back[0], recs[1]);
        assert_eq!(back[1], recs[0]);
    }
}
