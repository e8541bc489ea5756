mod common;

use proptest::prelude::*;
use thermalab_core::basis::{Basis, DensityOperator};
use thermalab_core::gibbs::{berry_esseen_error, gibbs_state, relative_entropy_direct, relative_entropy_to_gibbs, solve_beta};
use thermalab_core::hamiltonian::HermitianOperator;
use thermalab_core::spectrum::{diagonalize, EnergyLevels};
use thermalab_core::stats::normal_cdf;

fn levels_strategy() -> impl Strategy<Value = EnergyLevels> {
    prop::collection::vec(-5.0f64..5.0, 2..40).prop_filter_map("needs spread", |mut e| {
        e.sort_by(f64::total_cmp);
        (e[e.len() - 1] - e[0] > 0.5).then(|| EnergyLevels::new(e, 1e-9).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gibbs_weights_normalized_and_ordered(levels in levels_strategy(), beta in -3.0f64..3.0) {
        let g = gibbs_state(&levels, beta).unwrap();
        prop_assert!((g.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let e = levels.energies();
        let mean: f64 = g.weights.iter().zip(e).map(|(w, x)| w * x).sum();
        prop_assert!((mean - g.mean_energy).abs() <= 1e-10);
        // log Z by direct summation around the minimum
        let m = if beta >= 0.0 { levels.min() } else { levels.max() };
        let lz = -beta * m + e.iter().map(|x| (-beta * (x - m)).exp()).sum::<f64>().ln();
        prop_assert!((lz - g.log_z).abs() <= 1e-10 * lz.abs().max(1.0));
    }

    #[test]
    fn beta_solver_roundtrip(levels in levels_strategy(), beta in -2.0f64..2.0) {
        let target = gibbs_state(&levels, beta).unwrap().mean_energy;
        let span = levels.max() - levels.min();
        prop_assume!(target > levels.min() + 0.01 * span && target < levels.max() - 0.01 * span);
        let b = solve_beta(&levels, target, 1e-11).unwrap();
        let e = gibbs_state(&levels, b).unwrap().mean_energy;
        prop_assert!((e - target).abs() <= 1e-11);
    }

    #[test]
    fn relative_entropy_routes_agree(d in 2usize..=8, beta in 0.0f64..2.0, seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let h = HermitianOperator::new(common::random_hermitian(d, &mut r)).unwrap();
        let s = diagonalize(&h).unwrap();
        let tau = DensityOperator::new(Basis::Computational, common::random_density(d, &mut r));
        let a = relative_entropy_to_gibbs(&tau, &s, beta).unwrap();
        let b = relative_entropy_direct(&tau, &s, beta).unwrap();
        prop_assert!(a >= -1e-12);
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn berry_esseen_error_in_unit_interval(levels in levels_strategy(), beta in -1.0f64..1.0) {
        let g = gibbs_state(&levels, beta).unwrap();
        let be = berry_esseen_error(&levels, &g.weights).unwrap();
        prop_assert!((0.0..=1.0).contains(&be.zeta));
    }
}

#[test]
fn gibbs_state_has_zero_relative_entropy_to_itself() {
    let h = HermitianOperator::new(common::random_hermitian(6, &mut common::rng(3))).unwrap();
    let s = diagonalize(&h).unwrap();
    let g = gibbs_state(s.levels(), 0.7).unwrap().to_computational(&s).unwrap();
    assert!(relative_entropy_to_gibbs(&g, &s, 0.7).unwrap().abs() < 1e-12);
}

#[test]
fn two_level_berry_esseen_closed_form() {
    // symmetric two-point law vs N(0,1): sup at 0^-, 1/2 - Phi(-1)
    let levels = EnergyLevels::new(vec![-1.0, 1.0], 1e-9).unwrap();
    let be = berry_esseen_error(&levels, &[0.5, 0.5]).unwrap();
    assert!((be.zeta - (0.5 - normal_cdf(-1.0))).abs() < 1e-12);
}
