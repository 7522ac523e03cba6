use adaptive_sensing::config::RunConfig;
use adaptive_sensing::sensing::{db_to_linear, SensingModel};
use adaptive_sensing::solver::{backward_induction, extract_thresholds, DurationPolicy, Model, Scenario, ValueTable};
use proptest::prelude::*;

fn scenario(gamma: f64, perfect: bool, overhead: f64) -> Scenario {
    let mut sc = Scenario::baseline().with_gamma(gamma);
    sc.grid.n_p = 51;
    sc.costs.overhead = overhead;
    if !perfect {
        sc.sensing = SensingModel::new(0.9, db_to_linear(-25.0), 31_250.0).unwrap();
        sc.costs.k_sense = 0.01;
    }
    sc
}

fn columns(v: &ValueTable, n_active: usize) -> impl Iterator<Item = (usize, &[f64])> {
    (0..n_active).map(move |k| (k, v.column(k)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn values_are_increasing_and_convex_in_belief(
        gamma in 0.0f64..=1.0,
        perfect in any::<bool>(),
        overhead in prop_oneof![Just(0.0), Just(1.0)],
        ts in 1u32..=10,
        tt in 1u32..=30,
    ) {
        let model = Model::new(scenario(gamma, perfect, overhead)).unwrap();
        let sol = backward_induction(&model, &DurationPolicy::Fixed { sense: ts as f64, tx: tt as f64 }).unwrap();
        for (k, col) in columns(&sol.values, sol.policy.n_active()) {
            for w in col.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9, "decreasing at t={k}");
            }
            for w in col.windows(3) {
                prop_assert!(w[0] + w[2] >= 2.0 * w[1] - 1e-9, "not convex at t={k}");
            }
        }
    }

    #[test]
    fn values_do_not_fall_as_collisions_get_cheaper(
        g1 in 0.0f64..=1.0,
        g2 in 0.0f64..=1.0,
        perfect in any::<bool>(),
        ts in 1u32..=10,
        tt in 1u32..=30,
    ) {
        let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
        let base = Model::new(scenario(lo, perfect, 1.0)).unwrap();
        let mode = DurationPolicy::Fixed { sense: ts as f64, tx: tt as f64 };
        let a = backward_induction(&base, &mode).unwrap();
        let b = backward_induction(&base.with_gamma(hi).unwrap(), &mode).unwrap();
        for (x, y) in a.values.column(0).iter().zip(b.values.column(0)) {
            prop_assert!(*y >= *x - 1e-9);
        }
        prop_assert!(b.value_at_start() >= a.value_at_start() - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn per_state_dominates_fixed_under_imperfect_sensing(gamma in 0.0f64..=1.0, ts in 1u32..=10, tt in 1u32..=30) {
        let model = Model::new(scenario(gamma, false, 1.0)).unwrap();
        let fixed = backward_induction(&model, &DurationPolicy::Fixed { sense: ts as f64, tx: tt as f64 }).unwrap();
        let adaptive = backward_induction(&model, &DurationPolicy::PerState).unwrap();
        for k in 0..fixed.policy.n_active() {
            for (f, a) in fixed.values.column(k).iter().zip(adaptive.values.column(k)) {
                prop_assert!(*a >= *f - 1e-9, "t={k}");
            }
        }
    }
}

#[test]
fn thresholds_are_stable_under_grid_refinement() {
    let cfg = RunConfig::preset("fig2").unwrap();
    let mode = DurationPolicy::Fixed { sense: 20.0, tx: 7.0 };
    let at = |n_p: usize| {
        let mut sc = cfg.scenario;
        sc.grid.n_p = n_p;
        let model = Model::new(sc).unwrap();
        let sol = backward_induction(&model, &mode).unwrap();
        extract_thresholds(&model, &sol, 200.0).unwrap()
    };
    let (a, b) = (at(201), at(401));
    assert!((a.p1.unwrap() - b.p1.unwrap()).abs() < 0.01, "{a:?} vs {b:?}");
    assert!((a.p2.unwrap() - b.p2.unwrap()).abs() < 0.01, "{a:?} vs {b:?}");
}
