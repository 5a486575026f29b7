//! Hallucination classifier: a soft-voting ensemble of one CART tree and two
//! gradient-boosted tree models over NLI feature vectors.

mod gbdt;
mod persist;
mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gbdt::{log_loss, sigmoid, train_gbdt, train_gbdt_traced, GbdtModel, BASE_RATE_CLAMP};
pub use persist::{canonical_body, load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT_VERSION};
pub use tree::{train_tree, DecisionTree, Node, Tree};

use crate::error::{Error, Result};
use crate::model::FeatureCombination;

pub const MAX_TREE_DEPTH: usize = 32;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    #[default]
    Gini,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub split_criterion: SplitCriterion,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_samples_leaf: 1,
            split_criterion: SplitCriterion::Gini,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.max_depth > MAX_TREE_DEPTH {
            return Err(Error::invalid(format!(
                "max_depth must be in [1, {MAX_TREE_DEPTH}], got {}",
                self.max_depth
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid("learning_rate must be in (0, 1]"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::invalid("subsample must be in (0, 1]"));
        }
        if self.max_depth == 0 || self.max_depth > MAX_TREE_DEPTH {
            return Err(Error::invalid(format!("max_depth must be in [1, {MAX_TREE_DEPTH}]")));
        }
        Ok(())
    }
}

/// Checks a training set and returns its dimensionality.
pub(crate) fn check_training_data(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Training("training set is empty".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Training(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::Training("feature vectors are empty".into()));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Training(format!(
                "row {i} has {} features, expected {d}",
                row.len()
            )));
        }
        if row.iter().any(|v| v.is_nan()) {
            return Err(Error::Training(format!("row {i} contains NaN")));
        }
    }
    if let Some(i) = y.iter().position(|&l| l > 1) {
        return Err(Error::Training(format!("label {i} is not 0/1")));
    }
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Member {
    DecisionTree(DecisionTree),
    Gbdt(GbdtModel),
}

impl Member {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            Member::DecisionTree(t) => t.predict_proba(x),
            Member::Gbdt(g) => g.predict_proba(x),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Member::DecisionTree(t) => t.n_features,
            Member::Gbdt(g) => g.n_features,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub combination: FeatureCombination,
    pub tree: TreeParams,
    pub boosters: Vec<GbdtParams>,
    pub threshold: f64,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn new(combination: FeatureCombination, seed: u64) -> Self {
        EnsembleConfig {
            combination,
            tree: TreeParams::default(),
            boosters: vec![
                GbdtParams {
                    n_trees: 300,
                    learning_rate: 0.05,
                    max_depth: 4,
                    subsample: 0.8,
                },
                GbdtParams {
                    n_trees: 200,
                    learning_rate: 0.1,
                    max_depth: 3,
                    subsample: 1.0,
                },
            ],
            threshold: DEFAULT_THRESHOLD,
            seed,
        }
    }
}

/// A trained soft-voting ensemble plus the feature layout it expects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub combination: FeatureCombination,
    pub feature_order: Vec<String>,
    pub threshold: f64,
    pub members: Vec<Member>,
    pub weights: Vec<f64>,
    pub seed: u64,
}

impl ClassifierModel {
    pub fn dimension(&self) -> usize {
        self.feature_order.len()
    }

    pub fn validate(&self) -> Result<()> {
        let columns = self
            .combination
            .columns()
            .ok_or_else(|| Error::invalid("classifier needs a numeric feature combination"))?;
        if self
            .feature_order
            .iter()
            .map(String::as_str)
            .ne(columns.iter().copied())
        {
            return Err(Error::invalid(format!(
                "feature_order {:?} does not match combination {}",
                self.feature_order, self.combination
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid("threshold must be in (0, 1)"));
        }
        if self.members.is_empty() || self.members.len() != self.weights.len() {
            return Err(Error::invalid("members and weights must be non-empty and aligned"));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        if let Some(m) = self.members.iter().find(|m| m.n_features() != columns.len()) {
            return Err(Error::invalid(format!(
                "member trained on {} features, combination has {}",
                m.n_features(),
                columns.len()
            )));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("feature vector"));
        }
        Ok(())
    }

    /// Per-member probabilities, in member order.
    pub fn member_probas(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.members.iter().map(|m| m.predict_proba(x)).collect())
    }

    /// Weighted mean of the member probabilities.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let p: f64 = self
            .member_probas(x)?
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| p * w)
            .sum();
        Ok(p.clamp(0.0, 1.0))
    }

    /// `1` (hallucinated) iff the probability reaches the model's threshold.
    pub fn predict_label(&self, x: &[f64]) -> Result<u8> {
        self.predict_label_at(x, self.threshold)
    }

    pub fn predict_label_at(&self, x: &[f64], threshold: f64) -> Result<u8> {
        Ok(label_from_proba(self.predict_proba(x)?, threshold))
    }
}

/// Inclusive at the boundary: a probability equal to the threshold is `1`.
pub fn label_from_proba(proba: f64, threshold: f64) -> u8 {
    u8::from(proba >= threshold)
}

/// Trains the tree and both boosters (member `m` seeded with `seed + m`) and
/// combines them with equal weights.
pub fn train_ensemble(x: &[Vec<f64>], y: &[u8], config: &EnsembleConfig) -> Result<ClassifierModel> {
    let columns = config
        .combination
        .columns()
        .ok_or_else(|| Error::invalid("classifier needs a numeric feature combination"))?;
    let d = check_training_data(x, y)?;
    if d != columns.len() {
        return Err(Error::DimensionMismatch {
            expected: columns.len(),
            got: d,
        });
    }
    if !(config.threshold > 0.0 && config.threshold < 1.0) {
        return Err(Error::invalid("threshold must be in (0, 1)"));
    }
    config.tree.validate()?;
    config.boosters.iter().try_for_each(GbdtParams::validate)?;

    enum Plan<'a> {
        Tree(&'a TreeParams),
        Gbdt(&'a GbdtParams),
    }
    let specs: Vec<Plan> = std::iter::once(Plan::Tree(&config.tree))
        .chain(config.boosters.iter().map(Plan::Gbdt))
        .collect();
    let members = specs
        .par_iter()
        .enumerate()
        .map(|(m, plan)| {
            let seed = config.seed.wrapping_add(m as u64);
            match plan {
                Plan::Tree(p) => train_tree(x, y, p, seed).map(Member::DecisionTree),
                Plan::Gbdt(p) => train_gbdt(x, y, p, seed).map(Member::Gbdt),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = vec![1.0 / members.len() as f64; members.len()];
    let model = ClassifierModel {
        combination: config.combination,
        feature_order: columns.iter().map(|s| s.to_string()).collect(),
        threshold: config.threshold,
        members,
        weights,
        seed: config.seed,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_member(p: f64, d: usize) -> Member {
        Member::DecisionTree(DecisionTree {
            params: TreeParams::default(),
            n_features: d,
            tree: Tree::leaf(p),
        })
    }

    fn fixed_model(probas: &[f64]) -> ClassifierModel {
        ClassifierModel {
            combination: FeatureCombination::Cc,
            feature_order: vec!["qr.contradiction".into(), "rr_avg.contradiction".into()],
            threshold: 0.5,
            members: probas.iter().map(|&p| constant_member(p, 2)).collect(),
            weights: vec![1.0 / probas.len() as f64; probas.len()],
            seed: 0,
        }
    }

    fn noisy_rule_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
        let y = x
            .iter()
            .map(|r| u8::from(r[1] > 0.5) ^ u8::from(rng.random::<f64>() < 0.05))
            .collect();
        (x, y)
    }

    #[test]
    fn soft_vote_is_the_mean() {
        let m = fixed_model(&[0.2, 0.4, 0.6]);
        let p = m.predict_proba(&[0.0, 0.0]).unwrap();
        assert!((p - 0.4).abs() < 1e-15, "{p}");
        assert_eq!(m.predict_label(&[0.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn boundary_is_inclusive() {
        assert_eq!(label_from_proba(0.5, 0.5), 1);
        assert_eq!(label_from_proba(0.49, 0.5), 0);
        let m = fixed_model(&[0.5]);
        assert_eq!(m.predict_label(&[0.1, 0.1]).unwrap(), 1);
    }

    #[test]
    fn input_checks() {
        let m = fixed_model(&[0.5]);
        assert!(matches!(m.predict_proba(&[0.1]), Err(Error::DimensionMismatch { .. })));
        assert!(m.predict_proba(&[0.1, f64::NAN]).is_err());
    }

    #[test]
    fn single_class_training_predicts_that_class() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0, 0.5]).collect();
        for class in [0u8, 1] {
            let y = vec![class; 20];
            let m = train_ensemble(&x, &y, &EnsembleConfig::new(FeatureCombination::Cc, 1)).unwrap();
            for row in &x {
                assert_eq!(m.predict_label(row).unwrap(), class);
            }
        }
    }

    #[test]
    fn ensemble_shape_and_determinism() {
        let (x, y) = noisy_rule_data(300, 2);
        let cfg = EnsembleConfig::new(FeatureCombination::Cc, 42);
        let a = train_ensemble(&x, &y, &cfg).unwrap();
        let b = train_ensemble(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.members.len(), 3);
        assert!(matches!(a.members[0], Member::DecisionTree(_)));
        assert_eq!(a.weights, vec![1.0 / 3.0; 3]);
        assert_eq!(a.feature_order, ["qr.contradiction", "rr_avg.contradiction"]);
        for row in x.iter().take(50) {
            let direct: f64 = a.members.iter().map(|m| m.predict_proba(row)).sum::<f64>() / 3.0;
            assert!((a.predict_proba(row).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_rejects_mismatched_combination() {
        let (x, y) = noisy_rule_data(50, 2);
        assert!(train_ensemble(&x, &y, &EnsembleConfig::new(FeatureCombination::Qrrr, 0)).is_err());
        assert!(train_ensemble(&x, &y, &EnsembleConfig::new(FeatureCombination::TextQrrr, 0)).is_err());
    }

    #[test]
    fn validate_catches_broken_models() {
        let mut m = fixed_model(&[0.2, 0.4]);
        assert!(m.validate().is_ok());
        m.weights = vec![0.7, 0.7];
        assert!(m.validate().is_err());
        let mut m = fixed_model(&[0.2]);
        m.feature_order.reverse();
        assert!(m.validate().is_err());
        let mut m = fixed_model(&[0.2]);
        m.threshold = 1.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn param_validation() {
        let t = TreeParams {
            max_depth: 33,
            ..TreeParams::default()
        };
        assert!(t.validate().is_err());
        let g = GbdtParams {
            n_trees: 1,
            learning_rate: 1.5,
            max_depth: 3,
            subsample: 1.0,
        };
        assert!(g.validate().is_err());
        let g = GbdtParams {
            n_trees: 1,
            learning_rate: 0.1,
            max_depth: 3,
            subsample: 0.0,
        };
        assert!(g.validate().is_err());
    }

    proptest! {
        #[test]
        fn raising_threshold_never_adds_positives(p in 0.0..=1.0f64, t1 in 0.01..0.99f64, t2 in 0.01..0.99f64) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(label_from_proba(p, hi) <= label_from_proba(p, lo));
        }
    }
}
