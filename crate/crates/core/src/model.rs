//! Domain types shared across the pipeline and their line-oriented JSON forms.
//!
//! Every record type round-trips through [`serialize_record`] and the matching
//! `parse_*` function. Parsing validates the invariants of each type; the only
//! fields allowed to be absent are the documented optionals (`gold_answer`,
//! `source_model`, `combination`).

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for a probability triple summing to one.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// Records that carry invariants beyond what serde can express.
pub trait Validate {
    fn validate(&self) -> Result<()>;
}

/// A query with its `k` sampled responses (and the gold answer when known).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    pub responses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_model: Option<String>,
}

impl QueryRecord {
    pub fn k(&self) -> usize {
        self.responses.len()
    }

    /// Keeps only the first `k` responses. `k` below 2 is rejected since the
    /// response-response average needs at least one other response.
    pub fn truncated(&self, k: usize) -> Result<QueryRecord> {
        if k < 2 {
            return Err(Error::invalid("k must be ≥ 2"));
        }
        let mut out = self.clone();
        out.responses.truncate(k);
        Ok(out)
    }
}

impl Validate for QueryRecord {
    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("id must be non-empty"));
        }
        if self.responses.len() < 2 {
            return Err(Error::invalid(format!(
                "k must be ≥ 2 (got {} responses)",
                self.responses.len()
            )));
        }
        if let Some(i) = self.responses.iter().position(|r| r.trim().is_empty()) {
            return Err(Error::invalid(format!("response {i} is empty")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreForm {
    Logits,
    Probabilities,
}

/// Entailment / neutral / contradiction scores for one ordered text pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NliScores {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
    pub form: ScoreForm,
}

impl NliScores {
    pub fn logits(entailment: f64, neutral: f64, contradiction: f64) -> Self {
        NliScores {
            entailment,
            neutral,
            contradiction,
            form: ScoreForm::Logits,
        }
    }

    /// Builds a probability triple, checking range and normalization.
    pub fn probabilities(entailment: f64, neutral: f64, contradiction: f64) -> Result<Self> {
        let s = NliScores {
            entailment,
            neutral,
            contradiction,
            form: ScoreForm::Probabilities,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_array(values: [f64; 3], form: ScoreForm) -> Result<Self> {
        let [e, n, c] = values;
        match form {
            ScoreForm::Logits => {
                let s = NliScores::logits(e, n, c);
                s.validate()?;
                Ok(s)
            }
            ScoreForm::Probabilities => NliScores::probabilities(e, n, c),
        }
    }

    /// `[entailment, neutral, contradiction]`
    pub fn to_array(&self) -> [f64; 3] {
        [self.entailment, self.neutral, self.contradiction]
    }
}

impl Validate for NliScores {
    fn validate(&self) -> Result<()> {
        let v = self.to_array();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("NLI scores"));
        }
        if self.form == ScoreForm::Probabilities {
            if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::invalid(format!("probability component outside [0,1]: {v:?}")));
            }
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
                return Err(Error::invalid(format!("probabilities sum to {sum}, expected 1")));
            }
        }
        Ok(())
    }
}

/// Query-response triple plus the averaged response-response triple for one response.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseFeatures {
    pub response_index: usize,
    pub qr: NliScores,
    pub rr_avg: NliScores,
}

impl Validate for ResponseFeatures {
    fn validate(&self) -> Result<()> {
        for s in [&self.qr, &self.rr_avg] {
            if s.form != ScoreForm::Probabilities {
                return Err(Error::invalid("response features must be probabilities"));
            }
            s.validate()?;
        }
        Ok(())
    }
}

/// Which subset of the six numeric features feeds the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureCombination {
    Cc,
    Ecec,
    Qr,
    Rr,
    Qrrr,
    TextQrrr,
}

impl FeatureCombination {
    pub const ALL: [FeatureCombination; 6] = [
        FeatureCombination::Cc,
        FeatureCombination::Ecec,
        FeatureCombination::Qr,
        FeatureCombination::Rr,
        FeatureCombination::Qrrr,
        FeatureCombination::TextQrrr,
    ];

    /// Numeric dimensionality; `None` for the text rendering.
    pub fn dimension(self) -> Option<usize> {
        self.columns().map(<[&str]>::len)
    }

    pub fn is_numeric(self) -> bool {
        self != FeatureCombination::TextQrrr
    }

    /// Column names in the order the feature vector is laid out.
    pub fn columns(self) -> Option<&'static [&'static str]> {
        use FeatureCombination::*;
        Some(match self {
            Cc => &["qr.contradiction", "rr_avg.contradiction"],
            Ecec => &[
                "qr.entailment",
                "qr.contradiction",
                "rr_avg.entailment",
                "rr_avg.contradiction",
            ],
            Qr => &["qr.entailment", "qr.contradiction", "qr.neutral"],
            Rr => &["rr_avg.entailment", "rr_avg.contradiction", "rr_avg.neutral"],
            Qrrr => &[
                "qr.entailment",
                "qr.contradiction",
                "qr.neutral",
                "rr_avg.entailment",
                "rr_avg.contradiction",
                "rr_avg.neutral",
            ],
            TextQrrr => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        use FeatureCombination::*;
        match self {
            Cc => "cc",
            Ecec => "ecec",
            Qr => "qr",
            Rr => "rr",
            Qrrr => "qrrr",
            TextQrrr => "text_qrrr",
        }
    }
}

impl fmt::Display for FeatureCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureCombination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // "EC-EC", "QR+RR" and "text_qrrr" style spellings all match
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '+' | '_'))
            .map(|c| c.to_ascii_lowercase())
            .collect();
        FeatureCombination::ALL
            .into_iter()
            .find(|c| c.as_str().replace('_', "") == key)
            .ok_or_else(|| Error::invalid(format!("unknown feature combination {s:?}")))
    }
}

/// Classifier output for one response.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponsePrediction {
    pub p: u8,
    pub proba: f64,
}

/// Everything the pipeline reports for one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub per_response: Vec<ResponsePrediction>,
    pub overall: u8,
    pub confidence: f64,
    pub optimal_index: usize,
    pub optimal_response: String,
}

impl Validate for PipelineOutput {
    fn validate(&self) -> Result<()> {
        if self.per_response.is_empty() {
            return Err(Error::invalid("per_response must be non-empty"));
        }
        for (i, r) in self.per_response.iter().enumerate() {
            check_binary(r.p, "per_response.p")?;
            if !(0.0..=1.0).contains(&r.proba) {
                return Err(Error::invalid(format!("proba of response {i} outside [0,1]")));
            }
        }
        check_binary(self.overall, "overall")?;
        if !(0.5..=1.0).contains(&self.confidence) {
            return Err(Error::invalid(format!(
                "confidence {} outside [0.5,1]",
                self.confidence
            )));
        }
        if self.optimal_index >= self.per_response.len() {
            return Err(Error::invalid("optimal_index out of range"));
        }
        Ok(())
    }
}

/// A line of `predictions.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    #[serde(flatten)]
    pub output: PipelineOutput,
}

impl Validate for PredictionRecord {
    fn validate(&self) -> Result<()> {
        check_id(&self.id)?;
        self.output.validate()
    }
}

/// A line of `labels.jsonl`: one 0/1 label per response, in response order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub labels: Vec<u8>,
}

impl Validate for LabelRecord {
    fn validate(&self) -> Result<()> {
        check_id(&self.id)?;
        if self.labels.is_empty() {
            return Err(Error::invalid("labels must be non-empty"));
        }
        self.labels.iter().try_for_each(|&l| check_binary(l, "label"))
    }
}

/// Per-response entry of `features.jsonl`, triples as `[e, n, c]` probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub qr: [f64; 3],
    pub rr_avg: [f64; 3],
}

impl FeatureEntry {
    pub fn to_features(&self, response_index: usize) -> Result<ResponseFeatures> {
        Ok(ResponseFeatures {
            response_index,
            qr: NliScores::from_array(self.qr, ScoreForm::Probabilities)?,
            rr_avg: NliScores::from_array(self.rr_avg, ScoreForm::Probabilities)?,
        })
    }
}

impl From<&ResponseFeatures> for FeatureEntry {
    fn from(f: &ResponseFeatures) -> Self {
        FeatureEntry {
            qr: f.qr.to_array(),
            rr_avg: f.rr_avg.to_array(),
        }
    }
}

/// A line of `features.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combination: Option<FeatureCombination>,
    pub features: Vec<FeatureEntry>,
}

impl FeatureRecord {
    pub fn from_features(
        id: impl Into<String>,
        combination: Option<FeatureCombination>,
        features: &[ResponseFeatures],
    ) -> Self {
        FeatureRecord {
            id: id.into(),
            combination,
            features: features.iter().map(FeatureEntry::from).collect(),
        }
    }

    pub fn response_features(&self) -> Result<Vec<ResponseFeatures>> {
        self.features
            .iter()
            .enumerate()
            .map(|(i, f)| f.to_features(i))
            .collect()
    }
}

impl Validate for FeatureRecord {
    fn validate(&self) -> Result<()> {
        check_id(&self.id)?;
        if self.features.is_empty() {
            return Err(Error::invalid("features must be non-empty"));
        }
        self.response_features().map(|_| ())
    }
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() {
        Err(Error::invalid("id must be non-empty"))
    } else {
        Ok(())
    }
}

fn check_binary(v: u8, what: &str) -> Result<()> {
    if v > 1 {
        Err(Error::invalid(format!("{what} must be 0 or 1, got {v}")))
    } else {
        Ok(())
    }
}

/// Parses and validates any record type from one JSON line.
pub fn parse_record<T: DeserializeOwned + Validate>(line: &str) -> Result<T> {
    let rec: T = serde_json::from_str(line)?;
    rec.validate()?;
    Ok(rec)
}

pub fn parse_query_record(line: &str) -> Result<QueryRecord> {
    parse_record(line)
}

pub fn parse_label_record(line: &str) -> Result<LabelRecord> {
    parse_record(line)
}

pub fn parse_feature_record(line: &str) -> Result<FeatureRecord> {
    parse_record(line)
}

pub fn parse_prediction_record(line: &str) -> Result<PredictionRecord> {
    parse_record(line)
}

/// Single-line JSON with keys in declaration order.
pub fn serialize_record<T: Serialize>(record: &T) -> String {
    serde_json::to_string(record).expect("core records always serialize")
}
