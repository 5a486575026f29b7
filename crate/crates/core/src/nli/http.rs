use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{BackendConfig, NliBackend, ScoreRequest};
use crate::error::{Error, Result};
use crate::http::{bearer_from_env, JsonClient, RetryPolicy};
use crate::model::NliScores;

/// Bearer token for the NLI service.
pub const NLI_API_KEY_ENV: &str = "NLI_API_KEY";

#[derive(Serialize)]
struct PairBody<'a> {
    premise: &'a str,
    hypothesis: &'a str,
}

#[derive(Serialize)]
struct BatchBody<'a> {
    pairs: Vec<PairBody<'a>>,
}

#[derive(Deserialize)]
struct LogitsBody {
    entailment: f64,
    neutral: f64,
    contradiction: f64,
}

impl LogitsBody {
    fn into_scores(self) -> Result<NliScores> {
        let s = NliScores::logits(self.entailment, self.neutral, self.contradiction);
        if s.to_array().iter().all(|x| x.is_finite()) {
            Ok(s)
        } else {
            Err(Error::Backend("service returned non-finite logits".into()))
        }
    }
}

#[derive(Deserialize)]
struct BatchReply {
    scores: Vec<LogitsBody>,
}

type CacheSlot = Arc<Mutex<Option<NliScores>>>;

/// Client for an NLI service speaking `POST /v1/nli`.
///
/// Results are cached per exact (premise, hypothesis) for the lifetime of the
/// backend. Concurrent callers asking for the same pair wait on one request.
pub struct HttpBackend {
    single_url: String,
    batch_url: String,
    client: JsonClient,
    cache: Mutex<HashMap<(String, String), CacheSlot>>,
}

impl HttpBackend {
    pub fn new(base_url: &str, config: &BackendConfig) -> Result<Self> {
        let base = base_url.trim_end_matches('/');
        if base.is_empty() {
            return Err(Error::invalid("NLI base URL must be non-empty"));
        }
        let policy = RetryPolicy {
            timeout: config.timeout,
            retries: config.retries,
            initial_backoff: config.initial_backoff,
        };
        Ok(HttpBackend {
            single_url: format!("{base}/v1/nli"),
            batch_url: format!("{base}/v1/nli/batch"),
            client: JsonClient::new(config.max_in_flight, policy, bearer_from_env(NLI_API_KEY_ENV))?,
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn slot(&self, req: &ScoreRequest<'_>) -> CacheSlot {
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        cache
            .entry((req.premise.to_owned(), req.hypothesis.to_owned()))
            .or_default()
            .clone()
    }

    /// Scores several pairs in one request; results come back in request order.
    pub fn score_batch(&self, reqs: &[ScoreRequest<'_>]) -> Result<Vec<NliScores>> {
        if reqs.is_empty() {
            return Ok(Vec::new());
        }
        let body = BatchBody {
            pairs: reqs
                .iter()
                .map(|r| PairBody {
                    premise: r.premise,
                    hypothesis: r.hypothesis,
                })
                .collect(),
        };
        let reply: BatchReply = self.client.post(&self.batch_url, &body)?;
        if reply.scores.len() != reqs.len() {
            return Err(Error::Backend(format!(
                "batch returned {} scores for {} pairs",
                reply.scores.len(),
                reqs.len()
            )));
        }
        let scores = reply
            .scores
            .into_iter()
            .map(LogitsBody::into_scores)
            .collect::<Result<Vec<_>>>()?;
        for (req, s) in reqs.iter().zip(&scores) {
            *self.slot(req).lock().unwrap_or_else(|e| e.into_inner()) = Some(*s);
        }
        Ok(scores)
    }

    /// Number of distinct pairs cached so far.
    pub fn cached_pairs(&self) -> usize {
        let cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        cache
            .values()
            .filter(|s| s.lock().map(|v| v.is_some()).unwrap_or(false))
            .count()
    }
}

impl NliBackend for HttpBackend {
    fn score_pair(&self, req: &ScoreRequest<'_>) -> Result<NliScores> {
        let slot = self.slot(req);
        let mut value = slot.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(s) = *value {
            return Ok(s);
        }
        let body = PairBody {
            premise: req.premise,
            hypothesis: req.hypothesis,
        };
        let scores = self
            .client
            .post::<_, LogitsBody>(&self.single_url, &body)?
            .into_scores()?;
        *value = Some(scores);
        Ok(scores)
    }
}
