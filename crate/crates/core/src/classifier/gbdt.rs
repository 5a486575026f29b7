//! Gradient boosting on binomial log-loss.
//!
//! Each stage fits a squared-error regression tree to the negative gradient
//! `y - sigmoid(F)` and adds `learning_rate` times the leaf mean to the score.
//! With `learning_rate <= 1` and no subsampling every stage is a gradient step
//! within the loss's curvature bound, so training log-loss never increases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Grower, SquaredError, Tree};
use super::{check_training_data, GbdtParams};
use crate::error::Result;

/// Bounds applied to the base rate before taking its log-odds.
pub const BASE_RATE_CLAMP: (f64, f64) = (1e-6, 1.0 - 1e-6);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub params: GbdtParams,
    pub n_features: usize,
    pub init_score: f64,
    pub trees: Vec<Tree>,
}

impl GbdtModel {
    /// Raw additive score (log-odds).
    pub fn decision_function(&self, x: &[f64]) -> f64 {
        self.trees.iter().fold(self.init_score, |acc, t| acc + t.predict(x))
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision_function(x))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binomial log-loss of raw scores against 0/1 labels.
pub fn log_loss(scores: &[f64], y: &[u8]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(y)
        .map(|(&z, &t)| {
            // log(1 + e^-z) for t = 1, log(1 + e^z) for t = 0
            let m = if t == 1 { -z } else { z };
            if m > 0.0 {
                m + (-m).exp().ln_1p()
            } else {
                m.exp().ln_1p()
            }
        })
        .sum();
    total / scores.len() as f64
}

pub(crate) fn initial_score(y: &[u8]) -> f64 {
    let rate = y.iter().map(|&v| f64::from(v)).sum::<f64>() / y.len() as f64;
    let p = rate.clamp(BASE_RATE_CLAMP.0, BASE_RATE_CLAMP.1);
    (p / (1.0 - p)).ln()
}

/// Fits a boosted model. `seed` drives only the per-stage row subsample.
pub fn train_gbdt(x: &[Vec<f64>], y: &[u8], params: &GbdtParams, seed: u64) -> Result<GbdtModel> {
    train_gbdt_traced(x, y, params, seed, |_| {})
}

/// As [`train_gbdt`], calling `on_stage` with the training log-loss before the
/// first stage and after every stage.
pub fn train_gbdt_traced(
    x: &[Vec<f64>],
    y: &[u8],
    params: &GbdtParams,
    seed: u64,
    mut on_stage: impl FnMut(f64),
) -> Result<GbdtModel> {
    params.validate()?;
    let d = check_training_data(x, y)?;
    let n = x.len();
    let init_score = initial_score(y);
    let mut scores = vec![init_score; n];
    on_stage(log_loss(&scores, y));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_size = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut residuals = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        for ((r, &s), &t) in residuals.iter_mut().zip(&scores).zip(y) {
            *r = f64::from(t) - sigmoid(s);
        }
        let rows = if sample_size < n {
            let mut idx = rand::seq::index::sample(&mut rng, n, sample_size).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..n).collect()
        };
        let tree = Grower {
            x,
            targets: &residuals,
            max_depth: params.max_depth,
            min_samples_leaf: 1,
            criterion: SquaredError {
                scale: params.learning_rate,
            },
        }
        .grow(rows);
        for (s, row) in scores.iter_mut().zip(x) {
            *s += tree.predict(row);
        }
        trees.push(tree);
        on_stage(log_loss(&scores, y));
    }
    Ok(GbdtModel {
        params: *params,
        n_features: d,
        init_score,
        trees,
    })
}
