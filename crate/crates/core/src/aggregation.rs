//! Turns per-response classifier labels into a query-level verdict.
//!
//! * overall prediction: hallucinated iff at least half the responses are
//!   labelled hallucinated (`2·Σp >= k`, exact integer arithmetic);
//! * confidence: the fraction of responses agreeing with that verdict;
//! * optimal response: among responses sharing the verdict, the one with the
//!   lowest weighted contradiction (verdict 1) or highest weighted entailment
//!   (verdict 0), weighting query-response by `epsilon1` and averaged
//!   response-response by `epsilon2`.

use crate::classifier::{label_from_proba, ClassifierModel};
use crate::error::{Error, Result};
use crate::features::{extract_features, select_features};
use crate::model::{PipelineOutput, QueryRecord, ResponseFeatures, ResponsePrediction};
use crate::nli::NliBackend;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregationConfig {
    pub epsilon1: f64,
    pub epsilon2: f64,
    /// Restrict the optimal-response search to responses whose label equals
    /// the overall prediction (falling back to all responses when none do).
    pub restrict_candidates: bool,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            epsilon1: 0.3,
            epsilon2: 0.7,
            restrict_candidates: true,
        }
    }
}

impl AggregationConfig {
    pub fn new(epsilon1: f64, epsilon2: f64, restrict_candidates: bool) -> Result<Self> {
        let c = AggregationConfig {
            epsilon1,
            epsilon2,
            restrict_candidates,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon1 >= 0.0 && self.epsilon2 >= 0.0) {
            return Err(Error::invalid("epsilon weights must be non-negative"));
        }
        if (self.epsilon1 + self.epsilon2 - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "epsilon1 + epsilon2 must equal 1, got {}",
                self.epsilon1 + self.epsilon2
            )));
        }
        Ok(())
    }
}

fn positives(p: &[u8]) -> Result<usize> {
    if p.is_empty() {
        return Err(Error::invalid("prediction list is empty"));
    }
    p.iter().try_fold(0usize, |acc, &v| match v {
        0 | 1 => Ok(acc + usize::from(v)),
        _ => Err(Error::invalid(format!("prediction {v} is not 0/1"))),
    })
}

/// Majority vote with ties going to hallucinated.
pub fn overall_prediction(p: &[u8]) -> Result<u8> {
    let s = positives(p)?;
    Ok(u8::from(2 * s >= p.len()))
}

/// Fraction of responses backing `y_hat`; always in `[0.5, 1]`.
pub fn confidence_score(p: &[u8], y_hat: u8) -> Result<f64> {
    let s = positives(p)?;
    let k = p.len();
    if overall_prediction(p)? != y_hat {
        return Err(Error::invalid(format!(
            "y_hat = {y_hat} disagrees with the majority of {p:?}"
        )));
    }
    let agreeing = if y_hat == 1 { s } else { k - s };
    Ok(agreeing as f64 / k as f64)
}

/// Index and text of the optimal response. Ties go to the lowest index.
pub fn optimal_response(
    features: &[ResponseFeatures],
    p: &[u8],
    y_hat: u8,
    responses: &[String],
    config: &AggregationConfig,
) -> Result<(usize, String)> {
    let k = features.len();
    if k == 0 {
        return Err(Error::invalid("no responses to choose from"));
    }
    if p.len() != k || responses.len() != k {
        return Err(Error::invalid(format!(
            "misaligned inputs: {k} feature rows, {} predictions, {} responses",
            p.len(),
            responses.len()
        )));
    }
    if y_hat > 1 {
        return Err(Error::invalid("y_hat must be 0 or 1"));
    }
    let mut candidates: Vec<usize> = if config.restrict_candidates {
        (0..k).filter(|&i| p[i] == y_hat).collect()
    } else {
        Vec::new()
    };
    if candidates.is_empty() {
        candidates = (0..k).collect();
    }
    let (e1, e2) = (config.epsilon1, config.epsilon2);
    let score = |i: usize| {
        let f = &features[i];
        if y_hat == 1 {
            // minimize contradiction by maximizing its negation
            -(e1 * f.qr.contradiction + e2 * f.rr_avg.contradiction)
        } else {
            e1 * f.qr.entailment + e2 * f.rr_avg.entailment
        }
    };
    let mut best = candidates[0];
    let mut best_score = score(best);
    for &i in &candidates[1..] {
        let s = score(i);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    Ok((best, responses[best].clone()))
}

/// Aggregates already-classified responses.
pub fn aggregate(
    features: &[ResponseFeatures],
    per_response: Vec<ResponsePrediction>,
    responses: &[String],
    config: &AggregationConfig,
) -> Result<PipelineOutput> {
    let p: Vec<u8> = per_response.iter().map(|r| r.p).collect();
    let overall = overall_prediction(&p)?;
    let confidence = confidence_score(&p, overall)?;
    let (optimal_index, optimal_response) = optimal_response(features, &p, overall, responses, config)?;
    Ok(PipelineOutput {
        per_response,
        overall,
        confidence,
        optimal_index,
        optimal_response,
    })
}

/// Classifies every response of `features` with `model`.
pub fn classify_responses(model: &ClassifierModel, features: &[ResponseFeatures]) -> Result<Vec<ResponsePrediction>> {
    features
        .iter()
        .map(|f| {
            let x = select_features(model.combination, &f.qr, &f.rr_avg)?;
            let proba = model.predict_proba(&x)?;
            Ok(ResponsePrediction {
                p: label_from_proba(proba, model.threshold),
                proba,
            })
        })
        .collect()
}

/// Runs the whole pipeline for one query.
pub fn run_pipeline<B: NliBackend + ?Sized>(
    record: &QueryRecord,
    backend: &B,
    model: &ClassifierModel,
    config: &AggregationConfig,
) -> Result<PipelineOutput> {
    let run = || {
        if !model.combination.is_numeric() {
            return Err(Error::invalid("the pipeline needs a numeric feature combination"));
        }
        config.validate()?;
        let features = extract_features(record, backend)?;
        let per_response = classify_responses(model, &features)?;
        aggregate(&features, per_response, &record.responses, config)
    };
    run().map_err(|e| e.in_record(&record.id))
}
