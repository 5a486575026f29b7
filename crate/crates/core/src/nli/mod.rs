//! Sources of NLI scores for ordered (premise, hypothesis) pairs.
//!
//! Two backends are provided: [`FileBackend`] serves logits precomputed into a
//! `logits.jsonl` file, keyed by record id and response indices, and
//! [`HttpBackend`] calls an external inference service. Both return logits;
//! [`normalize`] turns them into probabilities.

mod file;
mod http;

use std::path::PathBuf;
use std::time::Duration;

pub use file::{load_precomputed, FileBackend, LogitsRecord, PairLogits, PrecomputedScores};
pub use http::{HttpBackend, NLI_API_KEY_ENV};

use crate::error::{Error, Result};
use crate::model::{NliScores, ScoreForm};

/// Which pair of a record a request refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PairKind {
    /// premise = query, hypothesis = response `response`
    QueryResponse { response: usize },
    /// premise = response `premise`, hypothesis = response `hypothesis`
    ResponseResponse { premise: usize, hypothesis: usize },
}

/// Locates a pair inside a dataset; the file backend looks scores up by it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PairKey<'a> {
    pub record_id: &'a str,
    pub kind: PairKind,
}

impl std::fmt::Display for PairKey<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            PairKind::QueryResponse { response } => {
                write!(f, "{} query-response {response}", self.record_id)
            }
            PairKind::ResponseResponse { premise, hypothesis } => {
                write!(f, "{} response-response ({premise},{hypothesis})", self.record_id)
            }
        }
    }
}

/// One ordered text pair to score.
#[derive(Clone, Copy, Debug)]
pub struct ScoreRequest<'a> {
    pub premise: &'a str,
    pub hypothesis: &'a str,
    pub key: Option<PairKey<'a>>,
}

impl<'a> ScoreRequest<'a> {
    pub fn new(premise: &'a str, hypothesis: &'a str) -> Result<Self> {
        if premise.trim().is_empty() || hypothesis.trim().is_empty() {
            return Err(Error::invalid("premise and hypothesis must be non-empty"));
        }
        Ok(ScoreRequest {
            premise,
            hypothesis,
            key: None,
        })
    }

    pub fn with_key(mut self, key: PairKey<'a>) -> Self {
        self.key = Some(key);
        self
    }
}

/// Anything that can score an ordered text pair. Implementations must be
/// callable from several threads at once.
pub trait NliBackend: Send + Sync {
    /// Returns logits for the pair.
    fn score_pair(&self, req: &ScoreRequest<'_>) -> Result<NliScores>;
}

impl<B: NliBackend + ?Sized> NliBackend for &B {
    fn score_pair(&self, req: &ScoreRequest<'_>) -> Result<NliScores> {
        (**self).score_pair(req)
    }
}

impl<B: NliBackend + ?Sized> NliBackend for Box<B> {
    fn score_pair(&self, req: &ScoreRequest<'_>) -> Result<NliScores> {
        (**self).score_pair(req)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendKind {
    File(PathBuf),
    Http(String),
}

#[derive(Clone, Debug)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub max_in_flight: usize,
    pub timeout: Duration,
    pub retries: u32,
    pub initial_backoff: Duration,
}

impl BackendConfig {
    pub fn new(kind: BackendKind) -> Self {
        BackendConfig {
            kind,
            max_in_flight: 8,
            timeout: Duration::from_secs(30),
            retries: 3,
            initial_backoff: crate::http::DEFAULT_INITIAL_BACKOFF,
        }
    }

    pub fn open(&self) -> Result<Box<dyn NliBackend>> {
        if self.max_in_flight == 0 {
            return Err(Error::invalid("max_in_flight must be ≥ 1"));
        }
        Ok(match &self.kind {
            BackendKind::File(path) => Box::new(FileBackend::open(path)?),
            BackendKind::Http(url) => Box::new(HttpBackend::new(url, self)?),
        })
    }
}

/// Softmax over the three logits, max-subtracted for stability.
pub fn normalize(scores: &NliScores) -> Result<NliScores> {
    if scores.form != ScoreForm::Logits {
        return Err(Error::invalid("normalize expects logits"));
    }
    let v = scores.to_array();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = v.map(|x| (x - max).exp());
    let sum: f64 = exps.iter().sum();
    let [e, n, c] = exps.map(|x| x / sum);
    Ok(NliScores {
        entailment: e,
        neutral: n,
        contradiction: c,
        form: ScoreForm::Probabilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn argmax(v: [f64; 3]) -> usize {
        // first maximum wins
        let mut best = 0;
        for i in 1..3 {
            if v[i] > v[best] {
                best = i;
            }
        }
        best
    }

    #[test]
    fn zero_logits_are_uniform() {
        let p = normalize(&NliScores::logits(0.0, 0.0, 0.0)).unwrap();
        for x in p.to_array() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_direct_softmax() {
        // e^2, e^0, e^-1 over their sum, evaluated independently
        let (a, b, c) = (2f64.exp(), 1.0, (-1f64).exp());
        let s = a + b + c;
        let p = normalize(&NliScores::logits(2.0, 0.0, -1.0)).unwrap();
        // 40-digit mpmath evaluation
        let expect = [
            0.843_794_734_481_339_5,
            0.114_195_199_384_594_48,
            0.042_010_066_134_066_05,
        ];
        for ((got, want), direct) in p.to_array().iter().zip(expect).zip([a / s, b / s, c / s]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            assert!((got - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_finite_and_probabilities() {
        assert!(normalize(&NliScores::logits(f64::INFINITY, 0.0, 0.0)).is_err());
        assert!(normalize(&NliScores::logits(f64::NAN, 0.0, 0.0)).is_err());
        let p = NliScores::probabilities(0.2, 0.3, 0.5).unwrap();
        assert!(normalize(&p).is_err());
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let p = normalize(&NliScores::logits(1000.0, 999.0, -1000.0)).unwrap();
        let sum: f64 = p.to_array().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.entailment > p.neutral);
    }

    #[test]
    fn score_request_rejects_blank_text() {
        assert!(ScoreRequest::new(" ", "a").is_err());
        assert!(ScoreRequest::new("a", "").is_err());
        assert!(ScoreRequest::new("a", "b").is_ok());
    }

    proptest! {
        #[test]
        fn shift_invariant(x in -50.0..50.0f64, y in -50.0..50.0f64, z in -50.0..50.0f64, c in -100.0..100.0f64) {
            let a = normalize(&NliScores::logits(x, y, z)).unwrap().to_array();
            let b = normalize(&NliScores::logits(x + c, y + c, z + c)).unwrap().to_array();
            for i in 0..3 {
                prop_assert!((a[i] - b[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn sums_to_one_and_keeps_argmax(x in -80.0..80.0f64, y in -80.0..80.0f64, z in -80.0..80.0f64) {
            let p = normalize(&NliScores::logits(x, y, z)).unwrap().to_array();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            let l = [x, y, z];
            // monotone up to exact ties in the probability space
            prop_assert_eq!(p[argmax(l)], p[argmax(p)]);
        }
    }
}
