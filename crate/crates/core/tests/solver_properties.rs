mod common;

use proptest::prelude::*;
use sparsum::dfo::{dfo_solve, dfo_step, lipschitz_constant, DfoConfig, LIPSCHITZ_SAFETY};
use sparsum::l1path::{forward_stepwise, solve_l1_unit_sum};
use sparsum::{is_feasible, objective, ConstraintSpec, Weights, FEASIBILITY_TOL};

use common::{brute_sparse_regression, random_data, rng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn descent_iterates_stay_feasible_and_descend(
        seed in 0u64..10_000,
        k in 1usize..=6,
        s in 0.0..1.5f64,
        inflate in prop::bool::ANY,
    ) {
        let mut r = rng(seed);
        let data = random_data(&mut r, 15, 6);
        let spec = ConstraintSpec::new(k, s).unwrap();
        let mut l = lipschitz_constant(&data).unwrap() * LIPSCHITZ_SAFETY;
        if inflate {
            l *= 10.0;
        }
        let mut w = Weights::unit(6, (seed % 6) as usize);
        let mut f = objective(&data, &w).unwrap();
        for _ in 0..50 {
            let next = dfo_step(&data, &spec, &w, l).unwrap();
            prop_assert!(is_feasible(&next, &spec, FEASIBILITY_TOL));
            let fn_ = objective(&data, &next).unwrap();
            prop_assert!(fn_ <= f + 1e-10 * f.max(1.0));
            w = next;
            f = fn_;
        }
    }

    #[test]
    fn descent_never_beats_the_exact_optimum(seed in 0u64..10_000, k in 1usize..=3, s in 0.0..1.0f64) {
        let mut r = rng(seed);
        let data = random_data(&mut r, 12, 5);
        let spec = ConstraintSpec::new(k, s).unwrap();
        let init = forward_stepwise(&data, &spec).unwrap();
        let init_obj = objective(&data, &init).unwrap();
        let (w, rep) = dfo_solve(&data, &spec, &init, &DfoConfig::default()).unwrap();
        let (opt, _) = brute_sparse_regression(&data, k, s);
        prop_assert!(is_feasible(&w, &spec, FEASIBILITY_TOL));
        prop_assert!(rep.objective <= init_obj + 1e-12);
        prop_assert!(rep.objective >= opt - 1e-8 * opt.max(1.0));
    }

    #[test]
    fn convex_fit_bounds_every_cardinality_fit(seed in 0u64..10_000, s in 0.0..1.0f64) {
        let mut r = rng(seed);
        let data = random_data(&mut r, 12, 5);
        let (_, full) = solve_l1_unit_sum(&data, s, 1e-11).unwrap();
        for k in 1..=5 {
            let (opt, _) = brute_sparse_regression(&data, k, s);
            prop_assert!(full.objective <= opt + 1e-7 * opt.max(1.0));
        }
    }
}

#[test]
fn slack_budget_solution_satisfies_normal_equations() {
    let mut checked = 0;
    for seed in 0..40 {
        let mut r = rng(seed);
        let data = random_data(&mut r, 30, 6);
        let s = 50.0;
        let (w, _) = solve_l1_unit_sum(&data, s, 1e-14).unwrap();
        assert!(w.l1_norm() < 1.0 + 2.0 * s);
        let x = data.x();
        let resid = x * nalgebra::DVector::from_column_slice(&w) - data.y();
        let g = x.tr_mul(&resid);
        let mu = g.mean();
        let scale = x.norm() * data.y().norm();
        let dev = g.iter().map(|v| (v - mu).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-5 * scale, "seed {seed}: {dev}");
        checked += 1;
    }
    assert_eq!(checked, 40);
}
