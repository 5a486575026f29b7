//! Classification metrics and annotator agreement. Class `1` (hallucinated)
//! is the positive class throughout.

mod report;

pub use report::{evaluate, CategoryReport, EvalInputs, EvalMode, EvalReport, ScoredLabels};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_labels(pred: &[u8], gold: &[u8]) -> Result<Self> {
        check_lengths(pred.len(), gold.len())?;
        let mut c = ConfusionCounts::default();
        for (&p, &g) in pred.iter().zip(gold) {
            match (p, g) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 0) => c.tn += 1,
                (0, 1) => c.fn_ += 1,
                _ => return Err(Error::Metric(format!("labels must be 0/1, got ({p}, {g})"))),
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Zero when there are no true or predicted positives.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 || self.tp == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Metric(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::Metric("no samples".into()));
    }
    Ok(())
}

/// F1 of the positive class; `0` when precision + recall is zero.
pub fn f1_score(pred: &[u8], gold: &[u8]) -> Result<f64> {
    Ok(ConfusionCounts::from_labels(pred, gold)?.f1())
}

/// Mean of the two per-class recalls. Undefined unless both classes occur in `gold`.
pub fn balanced_accuracy(pred: &[u8], gold: &[u8]) -> Result<f64> {
    let c = ConfusionCounts::from_labels(pred, gold)?;
    let (pos, neg) = (c.tp + c.fn_, c.tn + c.fp);
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(
            "balanced accuracy undefined: gold has a single class".into(),
        ));
    }
    let tpr = c.tp as f64 / pos as f64;
    let tnr = c.tn as f64 / neg as f64;
    Ok((tpr + tnr) / 2.0)
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
/// Computed in O(n log n) by ranking.
pub fn roc_auc(scores: &[f64], gold: &[u8]) -> Result<f64> {
    check_lengths(scores.len(), gold.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    if let Some(&g) = gold.iter().find(|&&g| g > 1) {
        return Err(Error::Metric(format!("labels must be 0/1, got {g}")));
    }
    let n_pos = gold.iter().filter(|&&g| g == 1).count();
    let n_neg = gold.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUC undefined: gold has a single class".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of (1-based, tie-averaged) ranks of the positives, doubled to stay integral
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let group_rank2 = (i + 1 + j + 1) as u128; // twice the mean rank
        let positives = order[i..=j].iter().filter(|&&k| gold[k] == 1).count() as u128;
        rank_sum2 += group_rank2 * positives;
        i = j + 1;
    }
    let (p, q) = (n_pos as u128, n_neg as u128);
    // U = R - p(p+1)/2, so 2U = 2R - p(p+1)
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * q) as f64)
}

/// Percentage of queries predicted hallucinated.
pub fn hallucination_rate(overall: &[u8]) -> Result<f64> {
    if overall.is_empty() {
        return Err(Error::Metric("no predictions".into()));
    }
    let ones = overall.iter().filter(|&&v| v == 1).count();
    Ok(100.0 * ones as f64 / overall.len() as f64)
}

/// Percentage of positions where two label lists agree.
pub fn agreement_rate(a: &[u8], b: &[u8]) -> Result<f64> {
    check_lengths(a.len(), b.len())?;
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(100.0 * same as f64 / a.len() as f64)
}

/// Fleiss' kappa for binary ratings, one row per item and one column per
/// rater. When every rating falls in one category both observed and expected
/// agreement are 1 and kappa is reported as 1.
pub fn fleiss_kappa(ratings: &[Vec<u8>]) -> Result<f64> {
    let n_items = ratings.len();
    if n_items == 0 {
        return Err(Error::Metric("no items".into()));
    }
    let raters = ratings[0].len();
    if raters < 2 {
        return Err(Error::Metric("fleiss kappa needs at least 2 raters".into()));
    }
    let mut ones_total = 0usize;
    let mut p_bar = 0.0;
    for (i, row) in ratings.iter().enumerate() {
        if row.len() != raters {
            return Err(Error::Metric(format!(
                "item {i} has {} ratings, expected {raters}",
                row.len()
            )));
        }
        if row.iter().any(|&r| r > 1) {
            return Err(Error::Metric(format!("item {i} has a rating outside 0/1")));
        }
        let ones = row.iter().filter(|&&r| r == 1).count();
        let zeros = raters - ones;
        ones_total += ones;
        let agreeing_pairs = ones * ones.saturating_sub(1) + zeros * zeros.saturating_sub(1);
        p_bar += agreeing_pairs as f64 / (raters * (raters - 1)) as f64;
    }
    p_bar /= n_items as f64;
    let p1 = ones_total as f64 / (n_items * raters) as f64;
    let p_e = p1 * p1 + (1.0 - p1) * (1.0 - p1);
    if ones_total == 0 || ones_total == n_items * raters {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise_auc(scores: &[f64], gold: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if gold[i] == 1 && gold[j] == 0 {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap(), 1.0);
        assert_eq!(f1_score(&[0, 0, 0], &[1, 0, 1]).unwrap(), 0.0);
        // tp=3, fp=1, fn=2: P = 0.75, R = 0.6
        let pred = [1, 1, 1, 1, 0, 0, 0];
        let gold = [1, 1, 1, 0, 1, 1, 0];
        let c = ConfusionCounts::from_labels(&pred, &gold).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (3, 1, 1, 2));
        let expect = 2.0 * 0.75 * 0.6 / (0.75 + 0.6);
        assert!((f1_score(&pred, &gold).unwrap() - expect).abs() < 1e-15);
        assert!(f1_score(&[1], &[1, 0]).is_err());
        assert!(f1_score(&[], &[]).is_err());
    }

    #[test]
    fn balanced_accuracy_examples() {
        assert_eq!(balanced_accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&[1, 1, 1, 1], &[1, 0, 0, 1]).unwrap(), 0.5);
        let err = balanced_accuracy(&[1, 0], &[1, 1]).unwrap_err();
        assert!(err.to_string().contains("balanced accuracy undefined"));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.9], &[1, 0]).unwrap(), 0.0);
        assert!(roc_auc(&[0.1, 0.9], &[1, 1]).is_err());
        assert!(roc_auc(&[f64::NAN, 0.9], &[1, 0]).is_err());
    }

    #[test]
    fn rates() {
        assert_eq!(hallucination_rate(&[1, 1]).unwrap(), 100.0);
        assert_eq!(hallucination_rate(&[1, 0, 0, 0]).unwrap(), 25.0);
        assert!(hallucination_rate(&[]).is_err());
        assert_eq!(agreement_rate(&[1, 0, 1], &[1, 0, 1]).unwrap(), 100.0);
        assert_eq!(agreement_rate(&[1, 0, 1], &[0, 1, 0]).unwrap(), 0.0);
        assert!(agreement_rate(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn fleiss_examples() {
        let unanimous = vec![vec![1, 1, 1], vec![0, 0, 0], vec![1, 1, 1]];
        assert_eq!(fleiss_kappa(&unanimous).unwrap(), 1.0);
        assert_eq!(fleiss_kappa(&[vec![0, 0], vec![0, 0]]).unwrap(), 1.0);
        assert!(fleiss_kappa(&[vec![1]]).is_err());
        assert!(fleiss_kappa(&[]).is_err());
        assert!(fleiss_kappa(&[vec![1, 0], vec![1]]).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(data in prop::collection::vec((0u8..20, 0u8..=1), 2..120)) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 7.0).collect();
            let gold: Vec<u8> = data.iter().map(|(_, g)| *g).collect();
            prop_assume!(gold.contains(&0) && gold.contains(&1));
            let fast = roc_auc(&scores, &gold).unwrap();
            prop_assert!((fast - pairwise_auc(&scores, &gold)).abs() < 1e-9);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(data in prop::collection::vec((-5.0..5.0f64, 0u8..=1), 2..80)) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
            let gold: Vec<u8> = data.iter().map(|(_, g)| *g).collect();
            prop_assume!(gold.contains(&0) && gold.contains(&1));
            let warped: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
            prop_assert!((roc_auc(&scores, &gold).unwrap() - roc_auc(&warped, &gold).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn auc_flips_with_negated_scores(n in 2usize..60, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let gold: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
            prop_assume!(gold.contains(&0) && gold.contains(&1));
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let total = roc_auc(&scores, &gold).unwrap() + roc_auc(&neg, &gold).unwrap();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn metrics_invariant_under_joint_permutation(data in prop::collection::vec((0u8..=1, 0u8..=1, 0.0..1.0f64), 2..50), rot in 0usize..50) {
            let pred: Vec<u8> = data.iter().map(|d| d.0).collect();
            let gold: Vec<u8> = data.iter().map(|d| d.1).collect();
            let scores: Vec<f64> = data.iter().map(|d| d.2).collect();
            let r = rot % data.len();
            let mut p2 = pred.clone(); p2.rotate_left(r);
            let mut g2 = gold.clone(); g2.rotate_left(r);
            let mut s2 = scores.clone(); s2.rotate_left(r);
            prop_assert_eq!(f1_score(&pred, &gold).unwrap(), f1_score(&p2, &g2).unwrap());
            if gold.contains(&0) && gold.contains(&1) {
                prop_assert_eq!(balanced_accuracy(&pred, &gold).unwrap(), balanced_accuracy(&p2, &g2).unwrap());
                prop_assert_eq!(roc_auc(&scores, &gold).unwrap(), roc_auc(&s2, &g2).unwrap());
            }
        }
    }
}
