//! Transport solver checked against brute-force enumeration of the vertices
//! of the transportation polytope.

use nalgebra::{DMatrix, DVector};
use otfilter::ensemble::Ensemble;
use otfilter::transport::{
    apply_transport, build_cost_matrix, solve_transport, verify_plan, CostMatrix, CostMetric, WeightVector,
};
use proptest::prelude::*;

#[path = "support/lp_oracle.rs"]
mod lp_oracle;
use lp_oracle::brute_force_min;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (CostMatrix, WeightVector) {
    let members: Vec<DVector<f64>> =
        (0..n).map(|_| DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0))).collect();
    let cost = build_cost_matrix(&Ensemble::from_members(&members).unwrap(), CostMetric::Euclidean);
    let raw: Vec<f64> =
        (0..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() }).collect();
    let raw = if raw.iter().all(|w| *w == 0.0) { vec![1.0; n] } else { raw };
    (cost, WeightVector::from_unnormalized(raw).unwrap())
}

#[test]
fn two_member_indicator_weights_match_enumeration() {
    let cost = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
    let (best, vertices) = brute_force_min(&cost, &[1.0, 0.0]);
    // Two feasible bases, both degenerate on the same vertex: a zero row
    // sum forces t_21 = t_22 = 0 and the column sums fix the rest.
    assert_eq!(vertices.len(), 2);
    for v in &vertices {
        assert_eq!(v, &DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 0.0]));
    }
    let plan = solve_transport(
        &CostMatrix::from_matrix(cost, CostMetric::Euclidean).unwrap(),
        &WeightVector::new(vec![1.0, 0.0]).unwrap(),
    )
    .unwrap();
    assert_eq!(plan.as_matrix(), &vertices[0]);
    assert_eq!(plan.objective_value(), best);
}

#[test]
fn three_member_random_instances_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..25 {
        let raw = DMatrix::from_fn(3, 3, |_, _| rng.random_range(0.0..5.0));
        let cost = CostMatrix::from_matrix(raw, CostMetric::Euclidean).unwrap();
        let weights = WeightVector::from_unnormalized((0..3).map(|_| rng.random::<f64>()).collect()).unwrap();
        let (best, _) = brute_force_min(cost.as_matrix(), weights.as_slice());
        let plan = solve_transport(&cost, &weights).unwrap();
        assert!((plan.objective_value() - best).abs() < 1e-8, "{} vs {best}", plan.objective_value());
        assert!(verify_plan(&plan, &weights, 1e-9).passed);
    }
}

#[test]
fn small_ensembles_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for n in 2..=4 {
        for _ in 0..20 {
            let (cost, weights) = random_instance(&mut rng, n);
            let (best, _) = brute_force_min(cost.as_matrix(), weights.as_slice());
            let plan = solve_transport(&cost, &weights).unwrap();
            assert!((plan.objective_value() - best).abs() < 1e-8);
            assert!(verify_plan(&plan, &weights, 1e-9).passed);
        }
    }
}

#[test]
fn hundred_member_solve_is_fast_and_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let start = std::time::Instant::now();
    for _ in 0..20 {
        let (cost, weights) = random_instance(&mut rng, 100);
        let plan = solve_transport(&cost, &weights).unwrap();
        assert!(verify_plan(&plan, &weights, 1e-9).passed);
    }
    assert!(start.elapsed().as_secs_f64() < 20.0);
}

fn ensemble_strategy() -> impl Strategy<Value = (Ensemble, Vec<f64>)> {
    (1usize..=12, 1usize..=3).prop_flat_map(|(n, dim)| {
        (proptest::collection::vec(-10.0f64..10.0, n * dim), proptest::collection::vec(0.0f64..1.0, n))
            .prop_map(move |(vals, w)| {
                let e = Ensemble::from_matrix(DMatrix::from_vec(dim, n, vals)).unwrap();
                let w = if w.iter().sum::<f64>() <= 0.0 { vec![1.0; n] } else { w };
                (e, w)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn plans_are_feasible_and_preserve_weighted_mean((prior, raw) in ensemble_strategy()) {
        let weights = WeightVector::from_unnormalized(raw).unwrap();
        for metric in [CostMetric::Euclidean, CostMetric::SquaredEuclidean] {
            let plan = solve_transport(&build_cost_matrix(&prior, metric), &weights).unwrap();
            let report = verify_plan(&plan, &weights, 1e-9);
            prop_assert!(report.passed, "{report:?}");
            prop_assert!(report.min_entry >= 0.0);

            let post = apply_transport(&prior, &plan).unwrap();
            let expected = prior.as_matrix() * DVector::from_column_slice(weights.as_slice());
            let err = (post.mean() - expected).amax();
            prop_assert!(err <= 1e-10, "weighted mean error {err}");

            // Posterior members stay within the per-coordinate bounds of the prior.
            for d in 0..prior.dim() {
                let row = prior.as_matrix().row(d);
                let (lo, hi) = (row.min(), row.max());
                for v in post.as_matrix().row(d).iter() {
                    prop_assert!(*v >= lo - 1e-10 && *v <= hi + 1e-10);
                }
            }
        }
    }

    #[test]
    fn uniform_weights_are_a_fixed_point((prior, _) in ensemble_strategy()) {
        let weights = WeightVector::uniform(prior.len()).unwrap();
        let plan = solve_transport(&build_cost_matrix(&prior, CostMetric::Euclidean), &weights).unwrap();
        prop_assert!(plan.objective_value().abs() <= 1e-12);
        let post = apply_transport(&prior, &plan).unwrap();
        let mut a: Vec<Vec<f64>> = prior.members().map(|m| m.iter().copied().collect()).collect();
        let mut b: Vec<Vec<f64>> = post.members().map(|m| m.iter().copied().collect()).collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.iter().zip(y) {
                prop_assert!((u - v).abs() <= 1e-10);
            }
        }
    }
}
