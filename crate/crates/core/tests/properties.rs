mod common;

use hallucounter::aggregation::{run_pipeline, AggregationConfig};
use hallucounter::classifier::load_model;
use hallucounter::model::QueryRecord;
use hallucounter::nli::{FileBackend, LogitsRecord, PairLogits, PrecomputedScores};
use proptest::prelude::*;

fn logits() -> impl Strategy<Value = [f64; 3]> {
    [-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64]
}

/// Query-response logits, a k×k response-response logit grid and a permutation.
type Instance = (Vec<[f64; 3]>, Vec<Vec<[f64; 3]>>, Vec<usize>);

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..=7).prop_flat_map(|k| {
        (
            prop::collection::vec(logits(), k),
            prop::collection::vec(prop::collection::vec(logits(), k), k),
            Just((0..k).collect::<Vec<_>>()).prop_shuffle(),
        )
    })
}

fn build(qr: &[[f64; 3]], rr: &[Vec<[f64; 3]>], order: &[usize]) -> (QueryRecord, FileBackend) {
    let k = qr.len();
    let record = QueryRecord {
        id: "p".into(),
        query: "Which planet in our solar system is known as the red planet?".into(),
        gold_answer: None,
        responses: order.iter().map(|&i| format!("response {i}")).collect(),
        source_model: None,
    };
    let line = LogitsRecord {
        id: "p".into(),
        qr: order.iter().map(|&i| qr[i]).collect(),
        rr: (0..k)
            .flat_map(|a| (0..k).filter(move |&b| b != a).map(move |b| (a, b)))
            .map(|(a, b)| PairLogits {
                i: a,
                j: b,
                s: rr[order[a]][order[b]],
            })
            .collect(),
    };
    (
        record,
        FileBackend::new(PrecomputedScores::from_records([&line]).unwrap()),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Reordering the responses reorders the per-response output and leaves
    /// the query-level verdict and the chosen response text unchanged.
    #[test]
    fn pipeline_is_permutation_covariant((qr, rr, order) in instance()) {
        let model = load_model(&common::golden_dir().join("expected/model.json")).unwrap();
        let config = AggregationConfig::default();
        let identity: Vec<usize> = (0..qr.len()).collect();
        let (r0, b0) = build(&qr, &rr, &identity);
        let (r1, b1) = build(&qr, &rr, &order);
        let a = run_pipeline(&r0, &b0, &model, &config).unwrap();
        let b = run_pipeline(&r1, &b1, &model, &config).unwrap();
        for (pos, &orig) in order.iter().enumerate() {
            prop_assert_eq!(b.per_response[pos].p, a.per_response[orig].p);
            prop_assert!((b.per_response[pos].proba - a.per_response[orig].proba).abs() < 1e-12);
        }
        prop_assert_eq!(a.overall, b.overall);
        prop_assert_eq!(a.confidence, b.confidence);
        prop_assert_eq!(&a.optimal_response, &b.optimal_response);
    }
}
