//! Per-response feature extraction.
//!
//! For response `i` of a record the query-response triple scores
//! (premise = query, hypothesis = response `i`). The response-response triple
//! is the mean over every other response `j` of the scores for
//! (premise = response `i`, hypothesis = response `j`). All triples are
//! softmax-normalized before averaging, so every feature lies in `[0, 1]`.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{FeatureCombination, NliScores, QueryRecord, ResponseFeatures, ScoreForm};
use crate::nli::{normalize, NliBackend, PairKey, PairKind, ScoreRequest};

/// Normalized scores for every ordered pair of distinct responses.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseMatrix {
    k: usize,
    entries: BTreeMap<(usize, usize), NliScores>,
}

impl PairwiseMatrix {
    /// Requires exactly the `k(k-1)` off-diagonal entries, all probabilities.
    pub fn new(k: usize, entries: BTreeMap<(usize, usize), NliScores>) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("k must be ≥ 2"));
        }
        if entries.len() != k * (k - 1) {
            return Err(Error::invalid(format!(
                "pairwise matrix needs {} entries, got {}",
                k * (k - 1),
                entries.len()
            )));
        }
        for (&(i, j), s) in &entries {
            if i == j || i >= k || j >= k {
                return Err(Error::invalid(format!("invalid pair ({i}, {j}) for k = {k}")));
            }
            if s.form != ScoreForm::Probabilities {
                return Err(Error::invalid("pairwise matrix entries must be probabilities"));
            }
        }
        Ok(PairwiseMatrix { k, entries })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&NliScores> {
        self.entries.get(&(i, j))
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), &NliScores)> {
        self.entries.iter().map(|(&k, v)| (k, v))
    }
}

/// A classifier input row for one response.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub combination: FeatureCombination,
    pub response_index: usize,
}

fn score_normalized<B: NliBackend + ?Sized>(backend: &B, req: ScoreRequest<'_>) -> Result<NliScores> {
    let pair = req.key.map(|k| k.to_string()).unwrap_or_default();
    backend
        .score_pair(&req)
        .and_then(|s| normalize(&s))
        .map_err(|e| Error::Scoring {
            pair,
            source: Box::new(e),
        })
}

fn check_k(record: &QueryRecord) -> Result<()> {
    if record.k() < 2 {
        Err(Error::invalid("k must be ≥ 2"))
    } else {
        Ok(())
    }
}

/// Normalized query→response scores, in response order.
pub fn qr_features<B: NliBackend + ?Sized>(record: &QueryRecord, backend: &B) -> Result<Vec<NliScores>> {
    check_k(record)?;
    (0..record.k())
        .into_par_iter()
        .map(|i| {
            let req = ScoreRequest::new(&record.query, &record.responses[i])?.with_key(PairKey {
                record_id: &record.id,
                kind: PairKind::QueryResponse { response: i },
            });
            score_normalized(backend, req)
        })
        .collect()
}

/// Normalized scores for all `k(k-1)` ordered response pairs.
pub fn rr_matrix<B: NliBackend + ?Sized>(record: &QueryRecord, backend: &B) -> Result<PairwiseMatrix> {
    check_k(record)?;
    let k = record.k();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let scored = pairs
        .par_iter()
        .map(|&(i, j)| {
            let req = ScoreRequest::new(&record.responses[i], &record.responses[j])?.with_key(PairKey {
                record_id: &record.id,
                kind: PairKind::ResponseResponse {
                    premise: i,
                    hypothesis: j,
                },
            });
            score_normalized(backend, req).map(|s| ((i, j), s))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    PairwiseMatrix::new(k, scored)
}

/// Mean of response `i`'s row over the other `k - 1` responses.
pub fn rr_average(matrix: &PairwiseMatrix, i: usize) -> Result<NliScores> {
    let k = matrix.k();
    if i >= k {
        return Err(Error::invalid(format!("response index {i} out of range for k = {k}")));
    }
    let mut sum = [0.0f64; 3];
    for j in (0..k).filter(|&j| j != i) {
        let s = matrix.get(i, j).expect("matrix is complete").to_array();
        for (acc, v) in sum.iter_mut().zip(s) {
            *acc += v;
        }
    }
    let denom = (k - 1) as f64;
    let [e, n, c] = sum.map(|v| v / denom);
    Ok(NliScores {
        entailment: e,
        neutral: n,
        contradiction: c,
        form: ScoreForm::Probabilities,
    })
}

/// Query-response and averaged response-response triples for every response.
pub fn extract_features<B: NliBackend + ?Sized>(record: &QueryRecord, backend: &B) -> Result<Vec<ResponseFeatures>> {
    let qr = qr_features(record, backend)?;
    let matrix = rr_matrix(record, backend)?;
    qr.into_iter()
        .enumerate()
        .map(|(i, qr)| {
            Ok(ResponseFeatures {
                response_index: i,
                qr,
                rr_avg: rr_average(&matrix, i)?,
            })
        })
        .collect()
}

fn check_probabilities(s: &NliScores) -> Result<()> {
    if s.form == ScoreForm::Probabilities {
        Ok(())
    } else {
        Err(Error::invalid("features must be built from probabilities"))
    }
}

/// Projects the six features onto one combination's columns.
pub fn select_features(combination: FeatureCombination, qr: &NliScores, rr_avg: &NliScores) -> Result<Vec<f64>> {
    use FeatureCombination::*;
    check_probabilities(qr)?;
    check_probabilities(rr_avg)?;
    let (q, r) = (qr, rr_avg);
    Ok(match combination {
        Cc => vec![q.contradiction, r.contradiction],
        Ecec => vec![q.entailment, q.contradiction, r.entailment, r.contradiction],
        Qr => vec![q.entailment, q.contradiction, q.neutral],
        Rr => vec![r.entailment, r.contradiction, r.neutral],
        Qrrr => vec![
            q.entailment,
            q.contradiction,
            q.neutral,
            r.entailment,
            r.contradiction,
            r.neutral,
        ],
        TextQrrr => return Err(Error::invalid("text_qrrr is not numeric; use render_text_features")),
    })
}

/// [`select_features`] applied to one response's features.
pub fn feature_vector(combination: FeatureCombination, f: &ResponseFeatures) -> Result<FeatureVector> {
    Ok(FeatureVector {
        values: select_features(combination, &f.qr, &f.rr_avg)?,
        combination,
        response_index: f.response_index,
    })
}

/// Sentence form of the six scores for text classifiers. Scores are printed
/// with four decimals, ties rounding to even.
pub fn render_text_features(query: &str, response: &str, qr: &NliScores, rr_avg: &NliScores) -> String {
    format!(
        "The given question is {query} and the corresponding answer is {response}, \
         and they got the query-response entailment score: {:.4}, neutral score: {:.4}, \
         and contradiction score: {:.4}. And they got the response-response entailment \
         score: {:.4}, neutral score: {:.4}, contradiction score: {:.4}.",
        qr.entailment, qr.neutral, qr.contradiction, rr_avg.entailment, rr_avg.neutral, rr_avg.contradiction,
    )
}
