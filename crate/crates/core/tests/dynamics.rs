mod common;

use common::*;
use faer::Mat;
use thermalab_core::basis::{Basis, DensityOperator, Observable, StateVector};
use thermalab_core::dynamics::*;
use thermalab_core::ensemble::{conjugate_hamiltonian, sample_block_haar};
use thermalab_core::equilibrium::ensemble_average_equilibrium;
use thermalab_core::hamiltonian::Pauli;
use thermalab_core::linalg::{self, c64};
use thermalab_core::rng::SampleSeed;
use thermalab_core::spectrum::EnergyLevels;
use thermalab_core::stats::mean_se;
use thermalab_core::windows::{partition_spectrum, WindowPartition};

fn eigen_observable(s: &thermalab_core::spectrum::Spectrum, op: &thermalab_core::hamiltonian::HermitianOperator) -> Observable {
    Observable::new(Basis::Eigen, s.matrix_to_eigen(op.as_ref()))
}

#[test]
fn expected_dynamics_matches_monte_carlo() {
    let (_, _, s) = chain(8);
    let psi = s.vector_to_eigen(&neel(8)).unwrap();
    let a = eigen_observable(&s, &site_observable(8, 3, Pauli::Z));
    let part = partition_spectrum(s.levels(), 1.5, None).unwrap();
    let grid = TimeGrid::new(vec![0.0, 0.5, 1.0, 2.0, 5.0]).unwrap();
    let formula = expected_dynamics(&psi, &a, s.levels(), &part, &grid).unwrap();
    let direct = psi.expectation(a.matrix().as_ref()).re;
    assert!((formula.values[0] - direct).abs() < 1e-10);
    let mc = mc_dynamics_concentration(&psi, &a, s.levels(), &part, &grid, 300, 11, 0.1).unwrap();
    for (p, f) in mc.points.iter().zip(&formula.values) {
        let z = (p.mean - f).abs() / p.se.max(1e-300);
        assert!(z <= 4.0 || (p.mean - f).abs() < 1e-10, "t={} mc={} formula={} se={}", p.t, p.mean, f, p.se);
    }
}

#[test]
fn singleton_windows_are_deterministic() {
    let levels = EnergyLevels::new(vec![0.0, 0.4, 1.1, 1.7, 2.9], 1e-9).unwrap();
    let part = WindowPartition::per_class(&levels);
    let mut r = rng(3);
    let psi = StateVector::new(Basis::Eigen, random_vector(5, &mut r));
    let a = Observable::new(Basis::Eigen, linalg::diagonal(&[1.0, -1.0, 0.5, 0.2, -0.3]));
    let grid = TimeGrid::uniform(4.0, 6).unwrap();
    let mc = mc_dynamics_concentration(&psi, &a, &levels, &part, &grid, 20, 1, 0.1).unwrap();
    for p in &mc.points {
        assert!(p.variance < 1e-28);
    }
    // random phases: the formula is exact single-Hamiltonian evolution
    let full = Observable::new(Basis::Eigen, random_hermitian(5, &mut r));
    let ed = expected_dynamics(&psi, &full, &levels, &part, &grid).unwrap();
    let mc = mc_dynamics_concentration(&psi, &full, &levels, &part, &grid, 500, 2, 0.1).unwrap();
    for (p, f) in mc.points.iter().zip(&ed.values) {
        assert!((p.mean - f).abs() < 1e-10);
    }
}

#[test]
fn single_window_at_time_zero_has_no_spread() {
    let levels = EnergyLevels::new((0..6).map(|i| i as f64 * 0.3).collect(), 1e-9).unwrap();
    let part = WindowPartition::single_window(&levels);
    let mut r = rng(4);
    let psi = StateVector::new(Basis::Eigen, random_vector(6, &mut r));
    let a = Observable::new(Basis::Eigen, random_hermitian(6, &mut r));
    let grid = TimeGrid::new(vec![0.0]).unwrap();
    let mc = mc_dynamics_concentration(&psi, &a, &levels, &part, &grid, 30, 1, 0.1).unwrap();
    assert!(mc.points[0].variance < 1e-26);
    assert!((mc.points[0].mean - psi.expectation(a.matrix().as_ref()).re).abs() < 1e-12);
}

#[test]
fn long_time_limit_of_expected_dynamics() {
    let levels = EnergyLevels::new(vec![0.0, 0.37, 0.81, 1.23, 1.94, 2.41, 3.13, 3.58], 1e-9).unwrap();
    let part = partition_spectrum(&levels, 1.0, Some(0.0)).unwrap();
    let mut r = rng(5);
    let psi = StateVector::new(Basis::Eigen, random_vector(8, &mut r));
    let a = Observable::new(Basis::Eigen, random_hermitian(8, &mut r));
    let min_gap = levels.energies().windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let t_max = 1e3 / min_gap;
    let grid = TimeGrid::uniform(t_max, 200_001).unwrap();
    let ed = expected_dynamics(&psi, &a, &levels, &part, &grid).unwrap();
    let avg = trapezoid_mean(&ed.values);
    let rho = ensemble_average_equilibrium(&psi, &part).unwrap();
    let direct = rho.expectation(a.matrix().as_ref()).re;
    assert!((ed.equilibrium - direct).abs() < 1e-12);
    assert!((avg - direct).abs() < 1e-2, "{avg} vs {direct}");
}

#[test]
fn evolution_conserves_energy_and_is_real() {
    let (_, h, s) = chain(6);
    let psi = s.vector_to_eigen(&neel(6)).unwrap();
    let hh = eigen_observable(&s, &h);
    let grid = TimeGrid::uniform(20.0, 101).unwrap();
    let series = evolve_expectation(&psi, s.levels(), &hh, &grid).unwrap();
    for v in &series.values {
        assert!((v - series.values[0]).abs() < 1e-10);
    }
    let a = eigen_observable(&s, &site_observable(6, 2, Pauli::X));
    let series = evolve_expectation(&psi, s.levels(), &a, &grid).unwrap();
    assert!(series.max_imaginary < 1e-11);
    assert!((series.values[0] - psi.expectation(a.matrix().as_ref()).re).abs() < 1e-11);
    let rho = DensityOperator::pure(&psi);
    let dense = evolve_expectation(&rho, s.levels(), &a, &grid).unwrap();
    for (x, y) in dense.values.iter().zip(&series.values) {
        assert!((x - y).abs() < 1e-11);
    }
}

#[test]
fn long_time_average_converges_like_inverse_time() {
    let (_, _, s) = chain(6);
    let psi = s.vector_to_eigen(&neel(6)).unwrap();
    let a = eigen_observable(&s, &site_observable(6, 0, Pauli::Z));
    let mut ts = Vec::new();
    let mut ds = Vec::new();
    for k in 0..4 {
        let t = 400.0 * 4f64.powi(k);
        let avg = long_time_average(&psi, s.levels(), &a, t, (t * 60.0) as usize + 1).unwrap();
        ts.push(t.ln());
        ds.push(avg.distance.ln());
    }
    let fit = thermalab_core::stats::linear_fit(&ts, &ds).unwrap();
    assert!(fit.slope < -0.5 && fit.slope > -1.5, "slope {}", fit.slope);
}

/// Uniform levels with a deterministic jitter of at most 0.3 spacings.
fn jittered_levels(n: usize, spacing: f64) -> EnergyLevels {
    let e = (0..n).map(|i| (i as f64 + 0.5 + 0.3 * ((i as f64 * 1.618).fract() - 0.5)) * spacing).collect();
    EnergyLevels::new(e, 1e-12).unwrap()
}

/// Exact `(1/T) int_0^T F_k dt` from the pair sum.
fn exact_f_average(e: &[f64], t: f64) -> f64 {
    let d = e.len() as f64;
    let mut s = 0.0;
    for (i, a) in e.iter().enumerate() {
        for (j, b) in e.iter().enumerate() {
            if i != j {
                let x = (a - b) * t;
                s += x.sin() / x;
            }
        }
    }
    s / (d * (d - 1.0))
}

#[test]
fn window_functions_average_out() {
    let delta = 1.0;
    let levels = jittered_levels(512, delta / 32.0);
    let part = partition_spectrum(&levels, delta, Some(0.0)).unwrap();
    let t_max = 1e4 / delta;
    let grid = TimeGrid::uniform(t_max, 100_001).unwrap();
    let wd = window_dynamics(&levels, &part, &grid).unwrap();
    for (k, w) in part.windows().iter().enumerate() {
        assert!(!wd.singleton[k]);
        let series: Vec<f64> = wd.f.iter().map(|row| row[k]).collect();
        let avg = trapezoid_mean(&series);
        assert!(avg.abs() <= 1e-2, "window {k}: {avg}");
        let exact = exact_f_average(&levels.energies()[w.range.clone()], t_max);
        assert!((avg - exact).abs() < 1e-3, "window {k}: {avg} vs {exact}");
        for row in &wd.phi {
            assert!(row[k].norm() <= 1.0 + 1e-12);
        }
        let d = wd.dims[k] as f64;
        for row in &wd.f {
            assert!(row[k] >= -1.0 / (d - 1.0) - 1e-12 && row[k] <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn constant_dos_relaxation() {
    // 4096 equally spaced levels, 16 windows of 256
    let n = 4096;
    let delta = 1.0;
    let spacing = 16.0 * delta / n as f64;
    let levels = EnergyLevels::new((0..n).map(|i| (i as f64 + 0.5) * spacing).collect(), 1e-12).unwrap();
    let part = partition_spectrum(&levels, delta, Some(0.0)).unwrap();
    assert_eq!(part.len(), 16);
    let grid = TimeGrid::logarithmic(0.5, 60.0, 600).unwrap();
    let wd = window_dynamics(&levels, &part, &grid).unwrap();
    let r = relaxation_bound(&wd, 1.0, delta);
    let env = upper_envelope(&r.iter().map(|p| p.bound).collect::<Vec<_>>());
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (p, e) in r.iter().zip(&env) {
        if (3.0..=30.0).contains(&(delta * p.t)) {
            x.push(p.t.ln());
            y.push(e.ln());
        }
    }
    let slope = thermalab_core::stats::linear_fit(&x, &y).unwrap().slope;
    assert!((slope + 2.0).abs() <= 0.3, "slope {slope}");
    for row in constant_dos_comparison(&levels, &part, &grid).unwrap() {
        assert!(row.error <= row.spacing_bound + 1e-12);
        let width = part.windows()[row.window].width();
        assert!((row.flat.norm_sqr() - flat_window_modulus_sqr(width, row.t)).abs() < 1e-12);
    }
}

#[test]
fn distance_bound_on_conjugated_chain() {
    let (_, h, s) = chain(8);
    let part = partition_spectrum(s.levels(), 1.0, None).unwrap();
    let u = sample_block_haar(&part, SampleSeed::new(7, 0));
    let hp = conjugate_hamiltonian(&s, &u).unwrap().operator;
    let rho = DensityOperator::pure(&neel(8));
    let grid = TimeGrid::uniform(5.0, 50).unwrap();
    let series = dynamics_distance_bound(&rho, &h, &hp, &grid).unwrap();
    assert!(series.norm_difference <= part.max_width() + 1e-9);
    assert!(series.distance.iter().zip(&series.bound).all(|(d, b)| *d <= b + 1e-8));
    assert!(series.distance[1] > 0.0);
}

#[test]
fn late_time_variance_shrinks_with_window_size() {
    let (_, _, s) = chain(8);
    let psi = s.vector_to_eigen(&neel(8)).unwrap();
    let a = eigen_observable(&s, &site_observable(8, 3, Pauli::Z));
    let grid = TimeGrid::new(vec![100.0]).unwrap();
    let fine = partition_spectrum(s.levels(), 2.0, None).unwrap();
    let coarse = partition_spectrum(s.levels(), 8.0, None).unwrap();
    let vf = mc_dynamics_concentration(&psi, &a, s.levels(), &fine, &grid, 200, 1, 0.1).unwrap();
    let vc = mc_dynamics_concentration(&psi, &a, s.levels(), &coarse, &grid, 200, 1, 0.1).unwrap();
    let ratio = vf.points[0].variance / vc.points[0].variance;
    assert!((2.0..=8.0).contains(&ratio), "ratio {ratio}");
    assert!(vc.points[0].levy_reference < vf.points[0].levy_reference);
}

#[test]
fn series_means_are_consistent() {
    let xs = [1.0, 2.0, 3.0];
    assert_eq!(trapezoid_mean(&xs), 2.0);
    assert!((mean_se(&xs).mean - 2.0).abs() < 1e-15);
    let m = Mat::<c64>::zeros(1, 1);
    assert_eq!(m.nrows(), 1);
}
