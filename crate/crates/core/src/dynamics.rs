//! Time evolution in the eigenbasis, window phase functions, the relaxation
//! bound and Monte-Carlo checks of dynamics over the smoothing ensemble.

use faer::{Col, Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, DensityOperator, Observable, StateVector};
use crate::ensemble::{sample_block_haar, BlockUnitary, Direction};
use crate::equilibrium::{dephase, dephase_pure};
use crate::error::{Error, Result};
use crate::hamiltonian::HermitianOperator;
use crate::linalg::{self, c64, ZERO};
use crate::rng::SampleSeed;
use crate::spectrum::EnergyLevels;
use crate::stats::{mean_se, sample_variance};
use crate::windows::WindowPartition;

/// Materializing propagators is refused above this dimension.
pub const PROPAGATOR_DIM_GUARD: usize = 1 << 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    /// Constant spacing, when the grid is uniform.
    spacing: Option<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("empty time grid".into()));
        }
        if times[0] < 0.0 || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("times must be finite and nonnegative".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        Ok(Self { times, spacing: None })
    }

    /// `n` equally spaced points on `[0, t_max]`.
    pub fn uniform(t_max: f64, n: usize) -> Result<Self> {
        if !(t_max > 0.0) || n < 2 {
            return Err(Error::InvalidArgument("uniform grid needs t_max > 0 and at least two points".into()));
        }
        let h = t_max / (n - 1) as f64;
        let times = (0..n).map(|i| if i == n - 1 { t_max } else { i as f64 * h }).collect();
        Ok(Self { times, spacing: Some(h) })
    }

    /// `n` points spaced evenly in `ln t` on `[t_min, t_max]`.
    pub fn logarithmic(t_min: f64, t_max: f64, n: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_max > t_min) || n < 2 {
            return Err(Error::InvalidArgument("log grid needs 0 < t_min < t_max and n >= 2".into()));
        }
        let (a, b) = (t_min.ln(), t_max.ln());
        let times = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }
}

fn phases(energies: &[f64], t: f64) -> Vec<c64> {
    energies.iter().map(|&e| c64::cis(-e * t)).collect()
}

/// `y^dag A y`.
fn quadratic_form(a: MatRef<'_, c64>, y: &Col<c64>) -> c64 {
    let ay = a * y;
    (0..y.nrows()).fold(ZERO, |acc, i| acc + y[i].conj() * ay[i])
}

/// A state whose evolution under `H` can be computed from eigenbasis data.
pub trait Evolvable {
    fn dim(&self) -> usize;
    /// `tr(rho(t) A)` with `A` written in the eigenbasis.
    fn expectation_at(&self, energies: &[f64], a: MatRef<'_, c64>, t: f64) -> c64;
    /// `tr(rho_inf A)`.
    fn equilibrium_value(&self, levels: &EnergyLevels, a: MatRef<'_, c64>) -> Result<f64>;
    fn check(&self) -> Result<()>;
}

impl Evolvable for StateVector {
    fn dim(&self) -> usize {
        StateVector::dim(self)
    }

    fn expectation_at(&self, energies: &[f64], a: MatRef<'_, c64>, t: f64) -> c64 {
        let ph = phases(energies, t);
        let c = self.amplitudes();
        let y = Col::from_fn(c.nrows(), |i| ph[i] * c[i]);
        quadratic_form(a, &y)
    }

    fn equilibrium_value(&self, levels: &EnergyLevels, a: MatRef<'_, c64>) -> Result<f64> {
        Ok(dephase_pure(self.amplitudes(), levels.classes()).expectation(a))
    }

    fn check(&self) -> Result<()> {
        self.require(Basis::Eigen).map(|_| ())
    }
}

impl Evolvable for DensityOperator {
    fn dim(&self) -> usize {
        DensityOperator::dim(self)
    }

    fn expectation_at(&self, energies: &[f64], a: MatRef<'_, c64>, t: f64) -> c64 {
        // rho(t)_{nu mu} = rho_{nu mu} e^{-i (E_nu - E_mu) t}
        let ph = phases(energies, t);
        let m = self.matrix();
        let mut acc = ZERO;
        for mu in 0..m.ncols() {
            let pm = ph[mu].conj();
            for nu in 0..m.nrows() {
                acc += m[(nu, mu)] * ph[nu] * pm * a[(mu, nu)];
            }
        }
        acc
    }

    fn equilibrium_value(&self, levels: &EnergyLevels, a: MatRef<'_, c64>) -> Result<f64> {
        Ok(dephase(self, levels)?.expectation(a))
    }

    fn check(&self) -> Result<()> {
        self.require(Basis::Eigen).map(|_| ())
    }
}

fn check_inputs<S: Evolvable>(state: &S, levels: &EnergyLevels, a: &Observable) -> Result<()> {
    state.check()?;
    a.require(Basis::Eigen)?;
    if state.dim() != levels.dim() || a.matrix().nrows() != levels.dim() {
        return Err(Error::DimensionMismatch { expected: levels.dim(), got: state.dim() });
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpectationSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest `|Im <A>(t)|`, which should be rounding noise.
    pub max_imaginary: f64,
}

pub fn evolve_expectation<S: Evolvable + Sync>(
    state: &S,
    levels: &EnergyLevels,
    a: &Observable,
    grid: &TimeGrid,
) -> Result<ExpectationSeries> {
    check_inputs(state, levels, a)?;
    let am = a.matrix().as_ref();
    let raw: Vec<c64> = grid.times().par_iter().map(|&t| state.expectation_at(levels.energies(), am, t)).collect();
    Ok(ExpectationSeries {
        times: grid.times().to_vec(),
        values: raw.iter().map(|z| z.re).collect(),
        max_imaginary: raw.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
    })
}

/// Trapezoidal mean of samples on a uniform grid.
pub fn trapezoid_mean(values: &[f64]) -> f64 {
    match values.len() {
        0 => f64::NAN,
        1 => values[0],
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            (inner + 0.5 * (values[0] + values[n - 1])) / (n - 1) as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LongTimeAverage {
    pub t_max: f64,
    pub average: f64,
    pub equilibrium: f64,
    pub distance: f64,
}

/// `(1/T) int_0^T <A>(t) dt` by the trapezoid rule, compared with `tr(rho_inf A)`.
pub fn long_time_average<S: Evolvable + Sync>(
    state: &S,
    levels: &EnergyLevels,
    a: &Observable,
    t_max: f64,
    n_points: usize,
) -> Result<LongTimeAverage> {
    let grid = TimeGrid::uniform(t_max, n_points)?;
    let series = evolve_expectation(state, levels, a, &grid)?;
    let average = trapezoid_mean(&series.values);
    let equilibrium = state.equilibrium_value(levels, a.matrix().as_ref())?;
    Ok(LongTimeAverage { t_max, average, equilibrium, distance: (average - equilibrium).abs() })
}

#[derive(Clone, Debug)]
pub struct WindowDynamics {
    pub times: Vec<f64>,
    /// `phi[t][k] = (1/d_k) sum_{nu in W_k} e^{-i t E_nu}`.
    pub phi: Vec<Vec<c64>>,
    /// `f[t][k] = (d_k |phi_k|^2 - 1) / (d_k - 1)`, and 1 for singletons.
    pub f: Vec<Vec<f64>>,
    pub dims: Vec<usize>,
    pub widths: Vec<f64>,
    pub singleton: Vec<bool>,
}

impl WindowDynamics {
    pub fn num_windows(&self) -> usize {
        self.dims.len()
    }
}

pub fn window_phi(energies: &[f64], t: f64) -> c64 {
    let s = energies.iter().fold(ZERO, |acc, &e| acc + c64::cis(-e * t));
    s / energies.len() as f64
}

pub fn window_f(phi: c64, d: usize) -> f64 {
    if d < 2 {
        1.0
    } else {
        let d = d as f64;
        (d * phi.norm_sqr() - 1.0) / (d - 1.0)
    }
}

pub fn window_dynamics(levels: &EnergyLevels, partition: &WindowPartition, grid: &TimeGrid) -> Result<WindowDynamics> {
    partition.check_levels(levels)?;
    let e = levels.energies();
    let wins = partition.windows();
    let rows: Vec<(Vec<c64>, Vec<f64>)> = grid
        .times()
        .par_iter()
        .map(|&t| {
            let phi: Vec<c64> = wins.iter().map(|w| window_phi(&e[w.range.clone()], t)).collect();
            let f = phi.iter().zip(wins).map(|(p, w)| window_f(*p, w.dim())).collect();
            (phi, f)
        })
        .collect();
    let (phi, f) = rows.into_iter().unzip();
    Ok(WindowDynamics {
        times: grid.times().to_vec(),
        phi,
        f,
        dims: partition.dims(),
        widths: wins.iter().map(|w| w.width()).collect(),
        singleton: wins.iter().map(|w| w.dim() == 1).collect(),
    })
}

/// Window-resolved overlaps of a pure state with an observable.
struct WindowMoments {
    /// `<psi_j|A|psi_k>` at `[(j, k)]`.
    cross: Mat<c64>,
    /// `(q_k tr A_kk + <psi_k|A|psi_k>) / (d_k + 1)`.
    haar: Vec<f64>,
}

fn window_moments(c: &Col<c64>, a: MatRef<'_, c64>, partition: &WindowPartition) -> WindowMoments {
    let wins = partition.windows();
    let kk = wins.len();
    let mut cross = Mat::<c64>::zeros(kk, kk);
    for (j, wj) in wins.iter().enumerate() {
        for (k, wk) in wins.iter().enumerate() {
            // <psi_j| A |psi_k> = sum_{a in j, b in k} conj(c_a) A_ab c_b
            let mut s = ZERO;
            for ia in wj.range.clone() {
                let mut row = ZERO;
                for ib in wk.range.clone() {
                    row += a[(ia, ib)] * c[ib];
                }
                s += c[ia].conj() * row;
            }
            cross[(j, k)] = s;
        }
    }
    let haar = wins
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let q: f64 = w.range.clone().map(|i| c[i].norm_sqr()).sum();
            let tr: f64 = w.range.clone().map(|i| a[(i, i)].re).sum();
            (q * tr + cross[(k, k)].re) / (w.dim() as f64 + 1.0)
        })
        .collect();
    WindowMoments { cross, haar }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpectedDynamics {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Time-independent part, `E_U[tr(A psi_U^inf)]`.
    pub equilibrium: f64,
}

/// Ensemble mean of `<A>(t)` for `psi` evolved by `U H U^dag`:
/// the equilibrium term, the cross-window coherences weighted by
/// `phi_k conj(phi_k')`, and the in-window excess weighted by `F_k`.
pub fn expected_dynamics(
    psi: &StateVector,
    a: &Observable,
    levels: &EnergyLevels,
    partition: &WindowPartition,
    grid: &TimeGrid,
) -> Result<ExpectedDynamics> {
    check_inputs(psi, levels, a)?;
    partition.check_levels(levels)?;
    let wd = window_dynamics(levels, partition, grid)?;
    let m = window_moments(psi.amplitudes(), a.matrix().as_ref(), partition);
    let kk = partition.len();
    let equilibrium: f64 = m.haar.iter().sum();
    let values = wd
        .phi
        .iter()
        .zip(&wd.f)
        .map(|(phi, f)| {
            let mut v = equilibrium;
            for k in 0..kk {
                for kp in 0..kk {
                    if k != kp {
                        v += (phi[k] * phi[kp].conj() * m.cross[(kp, k)]).re;
                    }
                }
                v += f[k] * (m.cross[(k, k)].re - m.haar[k]);
            }
            v
        })
        .collect();
    Ok(ExpectedDynamics { times: wd.times, values, equilibrium })
}

/// `<A>(t)` for `psi` evolved by `U H U^dag`, all in the eigenbasis of `H`.
pub fn sampled_expectation(energies: &[f64], u: &BlockUnitary, c: &Col<c64>, a: MatRef<'_, c64>, t: f64) -> f64 {
    let rotated = u.apply_raw(c, Direction::Adjoint);
    let ph = phases(energies, t);
    let evolved = Col::from_fn(rotated.nrows(), |i| ph[i] * rotated[i]);
    let y = u.apply_raw(&evolved, Direction::Forward);
    quadratic_form(a, &y).re
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RelaxationPoint {
    pub t: f64,
    /// `||A|| (K^2 max |phi_k phi_j| + 2 max F_k)`.
    pub bound: f64,
    pub phi_term: f64,
    pub f_term: f64,
    /// Same bound with every window replaced by a flat density of width `delta`.
    pub constant_dos: f64,
}

fn sinc_half(x: f64) -> f64 {
    let h = 0.5 * x;
    if h.abs() < 1e-8 {
        1.0 - h * h / 6.0
    } else {
        h.sin() / h
    }
}

/// `sin^2(delta t / 2) / (delta t / 2)^2`.
pub fn flat_window_modulus_sqr(delta: f64, t: f64) -> f64 {
    sinc_half(delta * t).powi(2)
}

pub fn relaxation_bound(wd: &WindowDynamics, a_norm: f64, delta: f64) -> Vec<RelaxationPoint> {
    let kk = wd.num_windows() as f64;
    wd.times
        .iter()
        .zip(wd.phi.iter().zip(&wd.f))
        .map(|(&t, (phi, f))| {
            let max_phi = phi.iter().map(|p| p.norm()).fold(0.0, f64::max);
            let phi_term = kk * kk * max_phi * max_phi;
            let f_term = 2.0 * f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s = flat_window_modulus_sqr(delta, t);
            let flat_f = wd
                .dims
                .iter()
                .map(|&d| if d < 2 { 1.0 } else { (d as f64 * s - 1.0) / (d as f64 - 1.0) })
                .fold(f64::NEG_INFINITY, f64::max);
            RelaxationPoint {
                t,
                bound: a_norm * (phi_term + f_term),
                phi_term,
                f_term,
                constant_dos: a_norm * (kk * kk * s + 2.0 * flat_f),
            }
        })
        .collect()
}

/// `sup_{s >= t} R(s)` over the grid.
pub fn upper_envelope(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    for i in (0..out.len().saturating_sub(1)).rev() {
        out[i] = out[i].max(out[i + 1]);
    }
    out
}

#[derive(Clone, Debug)]
pub struct FlatWindowRow {
    pub t: f64,
    pub window: usize,
    pub exact: c64,
    pub flat: c64,
    pub error: f64,
    /// `t * max spacing` inside the window, edges included.
    pub spacing_bound: f64,
}

/// `(1/delta) int_lo^{lo+delta} e^{-itE} dE = e^{-it lo} (1 - e^{-it delta}) / (it delta)`.
pub fn flat_window_phi(lo: f64, delta: f64, t: f64) -> c64 {
    c64::cis(-t * (lo + 0.5 * delta)) * sinc_half(delta * t)
}

pub fn constant_dos_comparison(
    levels: &EnergyLevels,
    partition: &WindowPartition,
    grid: &TimeGrid,
) -> Result<Vec<FlatWindowRow>> {
    partition.check_levels(levels)?;
    let e = levels.energies();
    let mut rows = Vec::with_capacity(grid.len() * partition.len());
    for &t in grid.times() {
        for (k, w) in partition.windows().iter().enumerate() {
            let seg = &e[w.range.clone()];
            let mut gap = (seg[0] - w.lo).max(w.hi - seg[seg.len() - 1]);
            for p in seg.windows(2) {
                gap = gap.max(p[1] - p[0]);
            }
            let exact = window_phi(seg, t);
            let flat = flat_window_phi(w.lo, w.width(), t);
            rows.push(FlatWindowRow { t, window: k, exact, flat, error: (exact - flat).norm(), spacing_bound: t * gap });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistanceSeries {
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub bound: Vec<f64>,
    pub norm_difference: f64,
    pub max_excess: f64,
}

pub const DISTANCE_BOUND_SLACK: f64 = 1e-8;

/// `||e^{-iHt} rho e^{iHt} - e^{-iH't} rho e^{iH't}||_1` against `2 t ||H - H'||`.
/// A violation beyond `1e-8` is returned as an error.
pub fn dynamics_distance_bound(
    rho: &DensityOperator,
    h: &HermitianOperator,
    h_prime: &HermitianOperator,
    grid: &TimeGrid,
) -> Result<DistanceSeries> {
    rho.require(Basis::Computational)?;
    let n = h.dim();
    if h_prime.dim() != n || rho.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h_prime.dim() });
    }
    if n > PROPAGATOR_DIM_GUARD {
        return Err(Error::DimensionGuard { dim: n, guard: PROPAGATOR_DIM_GUARD });
    }
    let diff = h.matrix() - h_prime.matrix();
    let norm_difference = linalg::spectral_norm_hermitian(diff.as_ref())?;
    let (ea, va) = linalg::eigh(h.as_ref())?;
    let (eb, vb) = linalg::eigh(h_prime.as_ref())?;
    let evolve = |e: &[f64], v: &Mat<c64>, t: f64| -> Mat<c64> {
        let ph = phases(e, t);
        let scaled = Mat::from_fn(n, n, |i, j| v[(i, j)] * ph[j]);
        let u = &scaled * v.adjoint();
        &u * rho.matrix() * u.adjoint()
    };
    let distance = grid
        .times()
        .par_iter()
        .map(|&t| {
            let a = evolve(&ea, &va, t);
            let b = evolve(&eb, &vb, t);
            linalg::trace_norm_hermitian((&a - &b).as_ref())
        })
        .collect::<Result<Vec<f64>>>()?;
    let bound: Vec<f64> = grid.times().iter().map(|t| 2.0 * t * norm_difference).collect();
    let max_excess = distance.iter().zip(&bound).map(|(d, b)| d - b).fold(f64::NEG_INFINITY, f64::max);
    if max_excess > DISTANCE_BOUND_SLACK {
        return Err(Error::BoundViolated(format!("trace distance exceeds 2 t ||H - H'|| by {max_excess:e}")));
    }
    Ok(DistanceSeries { times: grid.times().to_vec(), distance, bound, norm_difference, max_excess })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcentrationPoint {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    pub variance: f64,
    /// Fraction of samples with `|<A> - mean| > epsilon`.
    pub tail_frequency: f64,
    /// `exp(-c d_min eps^2 / ||A||^2)`.
    pub levy_reference: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DynamicsConcentration {
    pub d_min: usize,
    pub epsilon: f64,
    pub levy_constant: f64,
    pub points: Vec<ConcentrationPoint>,
    /// `samples[s][t]`.
    pub samples: Vec<Vec<f64>>,
}

/// Lipschitz constant `4 ||A||` combined with the Haar concentration exponent
/// `d / 12` gives `c = 1 / 192`.
pub const DEFAULT_LEVY_CONSTANT: f64 = 1.0 / 192.0;

#[allow(clippy::too_many_arguments)]
pub fn mc_dynamics_concentration(
    psi: &StateVector,
    a: &Observable,
    levels: &EnergyLevels,
    partition: &WindowPartition,
    grid: &TimeGrid,
    n_samples: usize,
    master_seed: u64,
    epsilon: f64,
) -> Result<DynamicsConcentration> {
    check_inputs(psi, levels, a)?;
    partition.check_levels(levels)?;
    if n_samples < 10 {
        return Err(Error::InvalidArgument("need at least 10 samples".into()));
    }
    let am = a.matrix().as_ref();
    let a_norm = linalg::spectral_norm_hermitian(am)?;
    let c = psi.amplitudes();
    let samples: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let u = sample_block_haar(partition, SampleSeed::new(master_seed, s));
            grid.times().iter().map(|&t| sampled_expectation(levels.energies(), &u, c, am, t)).collect()
        })
        .collect();
    let d_min = partition.min_dim();
    let levy = if a_norm > 0.0 {
        (-DEFAULT_LEVY_CONSTANT * d_min as f64 * epsilon * epsilon / (a_norm * a_norm)).exp()
    } else {
        0.0
    };
    let points = grid
        .times()
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let xs: Vec<f64> = samples.iter().map(|s| s[ti]).collect();
            let ms = mean_se(&xs);
            let tail = xs.iter().filter(|x| (*x - ms.mean).abs() > epsilon).count() as f64 / xs.len() as f64;
            ConcentrationPoint {
                t,
                mean: ms.mean,
                se: ms.se,
                variance: sample_variance(&xs),
                tail_frequency: tail,
                levy_reference: levy,
            }
        })
        .collect();
    Ok(DynamicsConcentration { d_min, epsilon, levy_constant: DEFAULT_LEVY_CONSTANT, points, samples })
}
