use catenc_core::consensus::{exhaustive_consensus, symdiff_distance, WeakOrder};
use catenc_core::evaluation::{auc, Relation};
use catenc_core::table::{load_dataset, Column};
use catenc_core::{DataTable, EncoderSpec, FittedPipeline, LoadOptions, Strategy as Encoding, TaskKind};
use proptest::prelude::*;

fn relation(m: usize) -> impl proptest::strategy::Strategy<Value = Relation> {
    proptest::collection::vec(0u8..3, m * m).prop_map(move |cells| {
        let mut r = Relation::empty((0..m).map(|i| format!("c{i}")).collect());
        for i in 0..m {
            for j in i + 1..m {
                match cells[i * m + j] {
                    0 => r.beats[i][j] = true,
                    1 => r.beats[j][i] = true,
                    _ => {}
                }
            }
        }
        r
    })
}

fn scored() -> impl proptest::strategy::Strategy<Value = (Vec<f64>, Vec<bool>)> {
    proptest::collection::vec((0u8..20, any::<bool>()), 2..200)
        .prop_filter("both classes", |v| v.iter().any(|p| p.1) && v.iter().any(|p| !p.1))
        .prop_map(|v| v.into_iter().map(|(s, l)| (f64::from(s), l)).unzip())
}

proptest! {
    #[test]
    fn symdiff_is_a_metric((a, b, c) in (2usize..6).prop_flat_map(|m| (relation(m), relation(m), relation(m)))) {
        let d = |x: &Relation, y: &Relation| symdiff_distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
    }

    #[test]
    fn consensus_of_identical_weak_orders_is_that_order(tiers in proptest::collection::vec(1usize..5, 2..6), copies in 1usize..4) {
        let order = WeakOrder::normalized(&tiers);
        let labels: Vec<String> = (0..tiers.len()).map(|i| format!("c{i}")).collect();
        let rels = vec![order.relation(labels); copies];
        let c = exhaustive_consensus(&rels).unwrap();
        prop_assert_eq!(c.total_distance, 0);
        prop_assert_eq!(c.order.tiers, order.tiers);
    }

    #[test]
    fn auc_is_rank_invariant_and_flips((scores, labels) in scored()) {
        let base = auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (s / 3.0).exp()).collect();
        prop_assert_eq!(auc(&squashed, &labels).unwrap(), base);
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        prop_assert!((auc(&scores, &flipped).unwrap() - (1.0 - base)).abs() < 1e-12);
    }

    #[test]
    fn pipeline_output_is_numeric_and_complete(
        cells in proptest::collection::vec((0u8..40, proptest::option::of(0u8..6), -5.0f64..5.0), 30..120),
        test_cells in proptest::collection::vec((0u8..60, proptest::option::of(0u8..9)), 1..40),
        strategy in proptest::sample::select(Encoding::ALL.to_vec()),
        hct in 2usize..30,
        folds in prop_oneof![Just(0usize), Just(3usize)],
    ) {
        let build = |a: Vec<String>, b: Vec<Option<String>>, y: Vec<f64>| {
            DataTable::with_task(
                vec![Column::categorical_dense("a", &a), Column::categorical("b", &b), Column::numeric_dense("y", &y)],
                "y",
                TaskKind::Regression,
            )
            .unwrap()
        };
        let train = build(
            cells.iter().map(|c| format!("a{}", c.0)).collect(),
            cells.iter().map(|c| c.1.map(|v| format!("b{v}"))).collect(),
            cells.iter().map(|c| c.2).collect(),
        );
        let test = build(
            test_cells.iter().map(|c| format!("a{}", c.0)).collect(),
            test_cells.iter().map(|c| c.1.map(|v| format!("b{v}"))).collect(),
            vec![0.0; test_cells.len()],
        );
        let spec = EncoderSpec::new(strategy, hct).with_folds(if strategy == Encoding::Glmm { folds } else { 0 });
        let (pipe, fitted) = FittedPipeline::fit(&train, &spec).unwrap();
        let out = pipe.transform(&test).unwrap();
        prop_assert_eq!(out.feature_names(), fitted.feature_names());
        for t in [&fitted, &out] {
            let x = t.feature_matrix().unwrap();
            prop_assert!(x.iter().all(|v| v.is_finite()));
        }
    }
}

#[test]
fn csv_round_trip_with_custom_missing_token() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let schema = dir.path().join("d.schema.json");
    std::fs::write(&csv, "c,z,y\nred,1.5,a\nNA,NA,b\nblue,2,a\nred,3,b\n").unwrap();
    std::fs::write(
        &schema,
        r#"{"target": "y", "columns": [
            {"name": "c", "kind": "categorical"},
            {"name": "z", "kind": "numeric"},
            {"name": "y", "kind": "categorical"}]}"#,
    )
    .unwrap();
    let opts = LoadOptions {
        missing_tokens: vec!["NA".into()],
    };
    let t = load_dataset(&csv, &schema, &opts).unwrap();
    assert_eq!(t.n_rows(), 4);
    assert_eq!(t.task(), TaskKind::Binary);
    assert_eq!(t.column("c").unwrap().n_missing(), 1);
    assert_eq!(t.column("z").unwrap().numeric_values().unwrap()[1], None);
    assert_eq!(t.column("c").unwrap().n_observed_levels(), 2);
}
