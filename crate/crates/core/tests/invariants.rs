use proptest::prelude::*;
use wola_core::aggregation::{Aggregator, UpdateSet};
use wola_core::numerics::{geometric_median_objective, weiszfeld_geometric_median, VectorBatch};
use wola_core::preagg::PreAggregator;

fn batch(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), n)
}

fn updates(rows: &[Vec<f64>], f: usize) -> UpdateSet {
    UpdateSet::new(VectorBatch::new(rows.to_vec()).unwrap(), f).unwrap()
}

const ROBUST: [Aggregator; 5] = [
    Aggregator::CwMed,
    Aggregator::CwTm,
    Aggregator::Gm,
    Aggregator::Krum,
    Aggregator::MKrum,
];

proptest! {
    #[test]
    fn coordinatewise_rules_stay_in_range(rows in batch(7, 3)) {
        let u = updates(&rows, 2);
        for agg in [Aggregator::CwMed, Aggregator::CwTm, Aggregator::Mean] {
            let out = agg.aggregate(&u).unwrap();
            for k in 0..3 {
                let lo = rows.iter().map(|r| r[k]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out[k] >= lo - 1e-12 && out[k] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn cwmed_and_cwtm_ignore_order(rows in batch(6, 4), shift in 1usize..6) {
        let mut rotated = rows.clone();
        rotated.rotate_left(shift);
        for agg in [Aggregator::CwMed, Aggregator::CwTm, Aggregator::Mean] {
            let a = agg.aggregate(&updates(&rows, 1)).unwrap();
            let b = agg.aggregate(&updates(&rotated, 1)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn identical_inputs_are_a_fixed_point(row in prop::collection::vec(-5.0f64..5.0, 5), n in 4usize..10) {
        let rows = vec![row.clone(); n];
        let u = updates(&rows, (n - 3).min((n - 1) / 2));
        for agg in ROBUST {
            let out = agg.aggregate(&u).unwrap();
            for (x, y) in out.iter().zip(&row) {
                prop_assert!((x - y).abs() < 1e-9, "{}", agg.name());
            }
        }
    }

    #[test]
    fn gm_beats_every_input_row(rows in batch(9, 3)) {
        let b = VectorBatch::new(rows.clone()).unwrap();
        let gm = weiszfeld_geometric_median(&b, 1e-9, 1000).unwrap();
        let best = geometric_median_objective(&b, &gm);
        for r in &rows {
            prop_assert!(best <= geometric_median_objective(&b, r) + 1e-7);
        }
        prop_assert!(best <= geometric_median_objective(&b, &b.mean()) + 1e-7);
    }

    #[test]
    fn gm_with_a_heavy_row(rows in batch(5, 4), heavy in prop::collection::vec(-10.0f64..10.0, 4), copies in 1usize..5) {
        let mut all = rows.clone();
        all.extend(std::iter::repeat_n(heavy, copies));
        let b = VectorBatch::new(all).unwrap();
        let gm = weiszfeld_geometric_median(&b, 1e-9, 1000).unwrap();
        let v = geometric_median_objective(&b, &gm);
        for r in b.rows() {
            prop_assert!(v <= geometric_median_objective(&b, r) + 1e-7);
        }
    }

    #[test]
    fn preaggregators_keep_count_and_dim(rows in batch(10, 3), seed in any::<u64>()) {
        let u = updates(&rows, 2);
        for p in [PreAggregator::None, PreAggregator::Bucketing, PreAggregator::Nnm] {
            let out = p.apply(&u, seed).unwrap();
            prop_assert_eq!(out.dim(), 3);
            prop_assert!(out.n() >= 1 && out.n() <= 10);
        }
        let nnm = PreAggregator::Nnm.apply(&u, seed).unwrap();
        prop_assert_eq!(nnm.n(), 10);
    }
}
