//! Versioned JSON model files.
//!
//! The checksum is the hex SHA-256 of the compact JSON serialization of every
//! field preceding it, in file order. Floats are written in shortest
//! round-trip form, so a loaded model reproduces the saved one bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ClassifierModel, Member};
use crate::error::{Error, Result};
use crate::io;
use crate::model::FeatureCombination;

pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Serialize)]
struct Body<'a> {
    format_version: u64,
    combination: FeatureCombination,
    feature_order: &'a [String],
    threshold: f64,
    members: &'a [Member],
    weights: &'a [f64],
    seed: u64,
}

#[derive(Serialize)]
struct Document<'a> {
    #[serde(flatten)]
    body: Body<'a>,
    checksum: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredModel {
    format_version: u64,
    combination: FeatureCombination,
    feature_order: Vec<String>,
    threshold: f64,
    members: Vec<Member>,
    weights: Vec<f64>,
    seed: u64,
    checksum: String,
}

fn body(model: &ClassifierModel) -> Body<'_> {
    Body {
        format_version: MODEL_FORMAT_VERSION,
        combination: model.combination,
        feature_order: &model.feature_order,
        threshold: model.threshold,
        members: &model.members,
        weights: &model.weights,
        seed: model.seed,
    }
}

/// Bytes the checksum is computed over.
pub fn canonical_body(model: &ClassifierModel) -> Vec<u8> {
    serde_json::to_vec(&body(model)).expect("model serializes")
}

fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn model_to_json(model: &ClassifierModel) -> String {
    let doc = Document {
        body: body(model),
        checksum: checksum(&canonical_body(model)),
    };
    serde_json::to_string(&doc).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<ClassifierModel> {
    // a truncated file fails here as malformed JSON
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::invalid("model file has no format_version"))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::UnsupportedModelVersion(version));
    }
    let stored: StoredModel = serde_json::from_value(value)?;
    debug_assert_eq!(stored.format_version, MODEL_FORMAT_VERSION);
    let model = ClassifierModel {
        combination: stored.combination,
        feature_order: stored.feature_order,
        threshold: stored.threshold,
        members: stored.members,
        weights: stored.weights,
        seed: stored.seed,
    };
    let computed = checksum(&canonical_body(&model));
    if !computed.eq_ignore_ascii_case(&stored.checksum) {
        return Err(Error::Checksum {
            expected: stored.checksum,
            computed,
        });
    }
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &ClassifierModel, path: &Path) -> Result<()> {
    model.validate()?;
    io::write_string(path, &model_to_json(model))
}

pub fn load_model(path: &Path) -> Result<ClassifierModel> {
    model_from_json(&io::read_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train_ensemble, EnsembleConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model() -> ClassifierModel {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..120).map(|_| (0..4).map(|_| rng.random()).collect()).collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[3] > 0.5)).collect();
        let mut cfg = EnsembleConfig::new(FeatureCombination::Ecec, 5);
        cfg.boosters.iter_mut().for_each(|b| b.n_trees = 15);
        train_ensemble(&x, &y, &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = small_model();
        let text = model_to_json(&m);
        assert!(text.starts_with(r#"{"format_version":1,"combination":"ecec","feature_order":"#));
        assert!(text.contains(r#""checksum":""#));
        let back = model_from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_json(&back), text);
    }

    #[test]
    fn checksum_covers_body_bytes() {
        let m = small_model();
        let expected = hex::encode(Sha256::digest(canonical_body(&m)));
        let v: serde_json::Value = serde_json::from_str(&model_to_json(&m)).unwrap();
        assert_eq!(v["checksum"], expected.as_str());
        assert_eq!(expected.len(), 64);
    }

    #[test]
    fn rejects_other_versions() {
        let text = model_to_json(&small_model()).replacen(r#""format_version":1"#, r#""format_version":999"#, 1);
        let err = model_from_json(&text).unwrap_err();
        assert!(matches!(err, Error::UnsupportedModelVersion(999)));
        assert!(err.to_string().contains("unsupported model version"));
    }

    #[test]
    fn rejects_edits_and_truncation() {
        let text = model_to_json(&small_model());
        let edited = text.replacen(r#""threshold":0.5"#, r#""threshold":0.6"#, 1);
        assert_ne!(edited, text);
        assert!(matches!(model_from_json(&edited), Err(Error::Checksum { .. })));
        assert!(model_from_json(&text[..text.len() / 2]).is_err());
        assert!(model_from_json("").is_err());
    }
}
