use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{balanced_accuracy, f1_score, hallucination_rate, roc_auc};
use crate::aggregation::overall_prediction;
use crate::error::{Error, Result};
use crate::model::{LabelRecord, PredictionRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Every response label against its gold label.
    PerResponse,
    /// Each query's overall prediction against the majority vote of its gold
    /// labels (ties count as hallucinated).
    PerQuery,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-response" => Ok(EvalMode::PerResponse),
            "per-query" => Ok(EvalMode::PerQuery),
            _ => Err(Error::invalid(format!("unknown evaluation mode {s:?}"))),
        }
    }
}

/// Per-response labels and scores for one query, from either a predictions
/// line or a plain labels line.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredLabels {
    pub labels: Vec<u8>,
    pub probas: Vec<f64>,
    pub overall: u8,
}

impl From<&PredictionRecord> for ScoredLabels {
    fn from(r: &PredictionRecord) -> Self {
        ScoredLabels {
            labels: r.output.per_response.iter().map(|p| p.p).collect(),
            probas: r.output.per_response.iter().map(|p| p.proba).collect(),
            overall: r.output.overall,
        }
    }
}

impl TryFrom<&LabelRecord> for ScoredLabels {
    type Error = Error;

    fn try_from(r: &LabelRecord) -> Result<Self> {
        Ok(ScoredLabels {
            labels: r.labels.clone(),
            probas: r.labels.iter().map(|&l| f64::from(l)).collect(),
            overall: overall_prediction(&r.labels)?,
        })
    }
}

impl ScoredLabels {
    /// Accepts a `predictions.jsonl` or a `labels.jsonl` line.
    pub fn parse_line(line: &str) -> Result<(String, ScoredLabels)> {
        let v: serde_json::Value = serde_json::from_str(line)?;
        if v.get("per_response").is_some() {
            let r: PredictionRecord = crate::model::parse_record(line)?;
            Ok((r.id.clone(), ScoredLabels::from(&r)))
        } else {
            let r: LabelRecord = crate::model::parse_record(line)?;
            Ok((r.id.clone(), ScoredLabels::try_from(&r)?))
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct EvalInputs {
    pub predictions: BTreeMap<String, ScoredLabels>,
    pub gold: BTreeMap<String, Vec<u8>>,
    /// Optional category per record id for a breakdown.
    pub categories: Option<HashMap<String, String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub f1: f64,
    /// `null` when the gold labels contain a single class.
    pub auc: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub hallucination_rate: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub overall: CategoryReport,
    pub mode: EvalMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub by_category: Option<BTreeMap<String, CategoryReport>>,
}

#[derive(Default)]
struct Accumulator {
    pred: Vec<u8>,
    scores: Vec<f64>,
    gold: Vec<u8>,
    query_overall: Vec<u8>,
}

impl Accumulator {
    fn push(&mut self, mode: EvalMode, pred: &ScoredLabels, gold: &[u8]) -> Result<()> {
        match mode {
            EvalMode::PerResponse => {
                self.pred.extend(&pred.labels);
                self.scores.extend(&pred.probas);
                self.gold.extend(gold);
            }
            EvalMode::PerQuery => {
                self.pred.push(pred.overall);
                self.scores
                    .push(pred.probas.iter().sum::<f64>() / pred.probas.len() as f64);
                self.gold.push(overall_prediction(gold)?);
            }
        }
        self.query_overall.push(pred.overall);
        Ok(())
    }

    fn report(&self) -> Result<CategoryReport> {
        Ok(CategoryReport {
            f1: f1_score(&self.pred, &self.gold)?,
            auc: roc_auc(&self.scores, &self.gold).ok(),
            balanced_accuracy: balanced_accuracy(&self.pred, &self.gold).ok(),
            hallucination_rate: hallucination_rate(&self.query_overall)?,
            n: self.gold.len(),
        })
    }
}

/// Scores predictions against gold labels. Records that cannot be matched are
/// returned as errors alongside the report; gold lists longer than the
/// prediction (responses truncated at predict time) are cut to its length.
pub fn evaluate(inputs: &EvalInputs, mode: EvalMode) -> Result<(EvalReport, Vec<Error>)> {
    let mut all = Accumulator::default();
    let mut per_cat: BTreeMap<String, Accumulator> = BTreeMap::new();
    let mut errors = Vec::new();
    for (id, pred) in &inputs.predictions {
        let Some(gold) = inputs.gold.get(id) else {
            errors.push(Error::invalid("no gold labels").in_record(id));
            continue;
        };
        if gold.len() < pred.labels.len() {
            errors.push(
                Error::invalid(format!(
                    "{} gold labels for {} predictions",
                    gold.len(),
                    pred.labels.len()
                ))
                .in_record(id),
            );
            continue;
        }
        let gold = &gold[..pred.labels.len()];
        all.push(mode, pred, gold)?;
        if let Some(cats) = &inputs.categories {
            let cat = cats.get(id).cloned().unwrap_or_else(|| "unknown".to_owned());
            per_cat.entry(cat).or_default().push(mode, pred, gold)?;
        }
    }
    if all.gold.is_empty() {
        return Err(Error::Metric(
            "nothing to evaluate: no prediction matched a gold record".into(),
        ));
    }
    let by_category = match inputs.categories {
        Some(_) => Some(
            per_cat
                .into_iter()
                .map(|(k, acc)| acc.report().map(|r| (k, r)))
                .collect::<Result<BTreeMap<_, _>>>()?,
        ),
        None => None,
    };
    Ok((
        EvalReport {
            overall: all.report()?,
            mode,
            by_category,
        },
        errors,
    ))
}
