//! Gibbs states, inverse-temperature solving, energy statistics, correlation
//! length fits, relative entropy and the local-thermality sufficient condition.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, DensityOperator};
use crate::error::{Error, Result};
use crate::lattice::{lattice_distance, LatticeSpec, Region};
use crate::linalg::{self, c64};
use crate::locality::partial_trace;
use crate::microcanonical::von_neumann_entropy;
use crate::spectrum::{EnergyLevels, Spectrum};
use crate::stats::{linear_fit, normal_cdf, pairwise_sum};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GibbsData {
    pub beta: f64,
    pub log_z: f64,
    pub mean_energy: f64,
    pub variance: f64,
    /// `e^{-beta E_nu} / Z` in eigenvalue order.
    pub weights: Vec<f64>,
}

impl GibbsData {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator::from_diagonal(Basis::Eigen, &self.weights)
    }

    /// `V diag(w) V^dag`.
    pub fn to_computational(&self, spectrum: &Spectrum) -> Result<DensityOperator> {
        if spectrum.dim() != self.weights.len() {
            return Err(Error::DimensionMismatch { expected: spectrum.dim(), got: self.weights.len() });
        }
        let v = spectrum.vectors();
        let scaled = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * self.weights[j]);
        Ok(DensityOperator::new(Basis::Computational, linalg::hermitian_part((&scaled * v.adjoint()).as_ref())))
    }

    /// `V diag(sqrt w)`, so that the state is `X X^dag`.
    pub fn factor(&self, spectrum: &Spectrum) -> Mat<c64> {
        let v = spectrum.vectors();
        Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * self.weights[j].sqrt())
    }
}

pub fn gibbs_state(levels: &EnergyLevels, beta: f64) -> Result<GibbsData> {
    if !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta = {beta} is not finite")));
    }
    let e = levels.energies();
    // shift by the smallest exponent so the largest term is exactly 1
    let shift = e.iter().map(|&x| beta * x).fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = e.iter().map(|&x| (shift - beta * x).exp()).collect();
    let z = pairwise_sum(&raw);
    let weights: Vec<f64> = raw.iter().map(|r| r / z).collect();
    let mean_energy = pairwise_sum(&weights.iter().zip(e).map(|(w, x)| w * x).collect::<Vec<_>>());
    let variance =
        pairwise_sum(&weights.iter().zip(e).map(|(w, x)| w * (x - mean_energy).powi(2)).collect::<Vec<_>>());
    Ok(GibbsData { beta, log_z: z.ln() - shift, mean_energy, variance, weights })
}

pub const BETA_BRACKET_START: f64 = 64.0;
pub const BETA_BRACKET_LIMIT: f64 = 1048576.0;

/// Inverse temperature with `|E_beta - target| <= tol` by bisection.
pub fn solve_beta(levels: &EnergyLevels, target: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let (min, max) = (levels.min(), levels.max());
    if !(target > min && target < max) {
        return Err(Error::UnattainableEnergy { target, min, max });
    }
    let energy = |b: f64| gibbs_state(levels, b).map(|g| g.mean_energy);
    let mut hi = BETA_BRACKET_START;
    // E(-hi) > target > E(hi) once the bracket is wide enough
    loop {
        if energy(-hi)? >= target && energy(hi)? <= target {
            break;
        }
        hi *= 2.0;
        if hi > BETA_BRACKET_LIMIT {
            return Err(Error::BetaNonConvergence(format!("no sign change for |beta| <= {BETA_BRACKET_LIMIT}")));
        }
    }
    let (mut a, mut b) = (-hi, hi);
    for _ in 0..400 {
        let mid = 0.5 * (a + b);
        let em = energy(mid)?;
        if (em - target).abs() <= tol {
            return Ok(mid);
        }
        if em > target {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    let mid = 0.5 * (a + b);
    let err = (energy(mid)? - target).abs();
    if err <= tol {
        Ok(mid)
    } else {
        Err(Error::BetaNonConvergence(format!("bisection stalled at |E - target| = {err:e}")))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BerryEsseen {
    pub zeta: f64,
    /// Energy at which the supremum is attained.
    pub location: f64,
}

/// `sup_x |F(x) - G(x)|` for the energy distribution given by `weights`
/// against the Gaussian with the same mean and variance.
pub fn berry_esseen_error(levels: &EnergyLevels, weights: &[f64]) -> Result<BerryEsseen> {
    if weights.len() != levels.dim() {
        return Err(Error::DimensionMismatch { expected: levels.dim(), got: weights.len() });
    }
    let total = pairwise_sum(weights);
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!("weights sum to {total}")));
    }
    let e = levels.energies();
    let mean = pairwise_sum(&weights.iter().zip(e).map(|(w, x)| w * x).collect::<Vec<_>>());
    let var = pairwise_sum(&weights.iter().zip(e).map(|(w, x)| w * (x - mean).powi(2)).collect::<Vec<_>>());
    if !(var > 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    let sd = var.sqrt();
    let mut best = BerryEsseen { zeta: 0.0, location: e[0] };
    let mut below = 0.0;
    for class in levels.classes() {
        let at = e[class.start];
        let mass: f64 = weights[class.clone()].iter().sum();
        let g = normal_cdf((at - mean) / sd);
        let above = below + mass;
        for dev in [(above - g).abs(), (below - g).abs()] {
            if dev > best.zeta {
                best = BerryEsseen { zeta: dev, location: at };
            }
        }
        below = above;
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CorrelatorRow {
    pub distance: usize,
    pub correlator: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationDecayFit {
    pub xi: f64,
    /// `intercept / ln N` of the log-linear fit.
    pub z: f64,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub table: Vec<CorrelatorRow>,
    /// Rows that entered the fit (magnitude above the noise floor).
    pub used: usize,
}

pub const CORRELATOR_FLOOR: f64 = 1e-14;

/// Least-squares fit of `ln |c(r)| = intercept - r / xi`.
pub fn fit_decay(table: &[CorrelatorRow], n_sites: usize) -> Result<CorrelationDecayFit> {
    let usable: Vec<&CorrelatorRow> = table.iter().filter(|r| r.correlator.abs() > CORRELATOR_FLOOR).collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "only {} correlators above {CORRELATOR_FLOOR:e}; state looks uncorrelated",
            usable.len()
        )));
    }
    let x: Vec<f64> = usable.iter().map(|r| r.distance as f64).collect();
    let y: Vec<f64> = usable.iter().map(|r| r.correlator.abs().ln()).collect();
    let fit = linear_fit(&x, &y)?;
    if !(fit.slope < 0.0) {
        return Err(Error::InsufficientData(format!("correlators do not decay (slope {})", fit.slope)));
    }
    let ln_n = (n_sites as f64).ln();
    Ok(CorrelationDecayFit {
        xi: -1.0 / fit.slope,
        z: if ln_n > 0.0 { fit.intercept / ln_n } else { f64::NAN },
        slope: fit.slope,
        intercept: fit.intercept,
        residual: fit.residual,
        table: table.to_vec(),
        used: usable.len(),
    })
}

/// Connected correlators `tr(P_x Q_y rho) - tr(P_x rho) tr(Q_y rho)` between
/// site 0 and its translate by `r` along the first axis.
pub fn connected_correlators(
    rho: &DensityOperator,
    lattice: &LatticeSpec,
    p: MatRef<'_, c64>,
    q: MatRef<'_, c64>,
    offsets: &[usize],
) -> Result<Vec<CorrelatorRow>> {
    rho.require(Basis::Computational)?;
    let d = lattice.local_dim;
    for probe in [p, q] {
        if probe.nrows() != d || probe.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: probe.nrows() });
        }
        let norm = linalg::spectral_norm_hermitian(probe)?;
        if (norm - 1.0).abs() > 1e-12 || linalg::hermitian_deviation(probe) > 1e-12 {
            return Err(Error::InvalidArgument("probes must be Hermitian with unit norm".into()));
        }
    }
    let pq = linalg::kron(p, q);
    let expect = |m: &Mat<c64>, o: MatRef<'_, c64>| -> f64 { linalg::trace((m * o).as_ref()).re };
    let x = 0usize;
    let rho_x = partial_trace(rho, &Region::new(vec![x])?, lattice)?;
    let px = expect(&rho_x.matrix, p);
    let mut rows = Vec::with_capacity(offsets.len());
    for &r in offsets {
        let mut shift = vec![0i64; lattice.dimension];
        shift[0] = r as i64;
        let y = lattice
            .translate(x, &shift)
            .filter(|&y| y != x)
            .ok_or_else(|| Error::InvalidArgument(format!("offset {r} leaves the lattice or wraps onto the origin")))?;
        let rho_xy = partial_trace(rho, &Region::new(vec![x, y])?, lattice)?;
        let rho_y = partial_trace(rho, &Region::new(vec![y])?, lattice)?;
        let c = expect(&rho_xy.matrix, pq.as_ref()) - px * expect(&rho_y.matrix, q);
        rows.push(CorrelatorRow { distance: lattice_distance(x, y, lattice)?, correlator: c });
    }
    Ok(rows)
}

pub fn fit_correlation_length(
    rho: &DensityOperator,
    lattice: &LatticeSpec,
    p: MatRef<'_, c64>,
    q: MatRef<'_, c64>,
    offsets: &[usize],
) -> Result<CorrelationDecayFit> {
    let table = connected_correlators(rho, lattice, p, q, offsets)?;
    fit_decay(&table, lattice.num_sites())
}

fn eigen_diagonal(tau: &DensityOperator, spectrum: &Spectrum) -> Result<Vec<f64>> {
    if tau.dim() != spectrum.dim() {
        return Err(Error::DimensionMismatch { expected: spectrum.dim(), got: tau.dim() });
    }
    Ok(match tau.basis() {
        Basis::Eigen => tau.diagonal(),
        Basis::Computational => {
            let m = spectrum.matrix_to_eigen(tau.matrix().as_ref());
            (0..m.nrows()).map(|i| m[(i, i)].re).collect()
        }
    })
}

/// `S(tau || g_beta) = -S(tau) + beta tr(H tau) + ln Z`, in nats.
pub fn relative_entropy_to_gibbs(tau: &DensityOperator, spectrum: &Spectrum, beta: f64) -> Result<f64> {
    tau.validate(1e-8, -1e-10)?;
    let g = gibbs_state(spectrum.levels(), beta)?;
    let diag = eigen_diagonal(tau, spectrum)?;
    let energy: f64 = diag.iter().zip(spectrum.energies()).map(|(p, e)| p * e).sum();
    Ok(-von_neumann_entropy(tau)? + beta * energy + g.log_z)
}

/// `tr(tau ln tau) - tr(tau ln g_beta)` through matrix logarithms in the
/// computational basis; `tau` must have full rank.
pub fn relative_entropy_direct(tau: &DensityOperator, spectrum: &Spectrum, beta: f64) -> Result<f64> {
    tau.validate(1e-8, -1e-10)?;
    let tau_c = match tau.basis() {
        Basis::Computational => tau.matrix().clone(),
        Basis::Eigen => spectrum.matrix_to_computational(tau.matrix().as_ref()),
    };
    let vals = linalg::eigvalsh(linalg::hermitian_part(tau_c.as_ref()).as_ref())?;
    if vals[0] <= 0.0 {
        return Err(Error::InvalidState("direct relative entropy needs a full-rank state".into()));
    }
    let g = gibbs_state(spectrum.levels(), beta)?;
    let log_tau = linalg::hermitian_function(tau_c.as_ref(), f64::ln)?;
    let v = spectrum.vectors();
    let scaled = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * g.weights[j].ln());
    let log_g = &scaled * v.adjoint();
    let diff = &log_tau - &log_g;
    Ok(linalg::trace((&tau_c * &diff).as_ref()).re)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum XiSource {
    Manual,
    Fitted,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndistinguishabilityCheck {
    pub relative_entropy_bits: f64,
    pub epsilon: f64,
    pub l: usize,
    pub xi: f64,
    pub xi_source: XiSource,
    pub z: f64,
    /// `(S + 3)/eps`.
    pub entropy_term: f64,
    /// `(2 xi ln(d) l^D + l + 2) / (xi ln 2)`.
    pub geometry_term: f64,
    /// `log2(N^{z+1})`.
    pub size_term: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    /// `7 sqrt(eps)` bound on the mean local trace distance, when satisfied.
    pub guaranteed_distance: Option<f64>,
}

/// Sufficient condition for `tau` to be locally indistinguishable from a
/// state with `(xi, z)` decay of correlations. The relative entropy enters
/// in bits, the remaining logarithms as written (natural `ln`, base-2 `log`).
pub fn check_indistinguishability_condition(
    relative_entropy_nats: f64,
    epsilon: f64,
    l: usize,
    xi: f64,
    xi_source: XiSource,
    z: f64,
    lattice: &LatticeSpec,
) -> Result<IndistinguishabilityCheck> {
    if !(epsilon > 0.0) || !(xi > 0.0) {
        return Err(Error::InvalidArgument("epsilon and xi must be positive".into()));
    }
    let dd = lattice.dimension as i32;
    let n = lattice.num_sites() as f64;
    let s_bits = relative_entropy_nats / std::f64::consts::LN_2;
    let entropy_term = (s_bits + 3.0) / epsilon;
    let ln_d = (lattice.local_dim as f64).ln();
    let geometry_term = (2.0 * xi * ln_d * (l as f64).powi(dd) + l as f64 + 2.0) / (xi * std::f64::consts::LN_2);
    let size_term = (z + 1.0) * n.log2();
    let lhs = entropy_term + geometry_term + size_term;
    let rhs = (epsilon * n / (4f64.ln().powi(dd) * xi.powi(dd))).powf(1.0 / (dd as f64 + 1.0));
    let satisfied = lhs <= rhs;
    Ok(IndistinguishabilityCheck {
        relative_entropy_bits: s_bits,
        epsilon,
        l,
        xi,
        xi_source,
        z,
        entropy_term,
        geometry_term,
        size_term,
        lhs,
        rhs,
        satisfied,
        guaranteed_distance: satisfied.then(|| 7.0 * epsilon.sqrt()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{HermitianOperator, Pauli};
    use crate::lattice::Boundary;
    use crate::spectrum::diagonalize;

    fn qubit() -> EnergyLevels {
        EnergyLevels::new(vec![-1.0, 1.0], 1e-9).unwrap()
    }

    #[test]
    fn gibbs_examples() {
        let l = EnergyLevels::new(vec![-1.0, 0.5, 2.0, 3.0], 1e-9).unwrap();
        let g = gibbs_state(&l, 0.0).unwrap();
        assert!(g.weights.iter().all(|w| (w - 0.25).abs() < 1e-15));
        assert!((g.mean_energy - 1.125).abs() < 1e-15);
        let g = gibbs_state(&qubit(), 50.0).unwrap();
        assert!(g.weights[0] >= 1.0 - 2.0 * (-100f64).exp());
        let g = gibbs_state(&qubit(), 1.0).unwrap();
        assert!((g.mean_energy + 1f64.tanh()).abs() < 1e-15);
        assert!((g.log_z - (2.0 * 1f64.cosh()).ln()).abs() < 1e-15);
        let huge = gibbs_state(&qubit(), 1e6).unwrap();
        assert!(huge.log_z.is_finite() && (huge.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn beta_solver_examples() {
        let q = qubit();
        assert!((solve_beta(&q, -1f64.tanh(), 1e-13).unwrap() - 1.0).abs() < 1e-9);
        assert!(solve_beta(&q, 0.0, 1e-12).unwrap().abs() < 1e-9);
        assert!(matches!(solve_beta(&q, -1.0, 1e-9), Err(Error::UnattainableEnergy { .. })));
        assert!(matches!(solve_beta(&q, 1.5, 1e-9), Err(Error::UnattainableEnergy { .. })));
    }

    #[test]
    fn berry_esseen_qubit() {
        let be = berry_esseen_error(&qubit(), &[0.5, 0.5]).unwrap();
        assert!((be.zeta - (0.5 - normal_cdf(-1.0))).abs() < 1e-15);
        let l = EnergyLevels::new(vec![-1.0, 0.0, 1.0], 1e-9).unwrap();
        assert!(matches!(berry_esseen_error(&l, &[0.0, 1.0, 0.0]), Err(Error::DegenerateDistribution)));
    }

    #[test]
    fn relative_entropy_routes() {
        let h = HermitianOperator::new(Pauli::Z.matrix()).unwrap();
        let s = diagonalize(&h).unwrap();
        let g = gibbs_state(s.levels(), 0.7).unwrap();
        assert!(relative_entropy_to_gibbs(&g.to_density(), &s, 0.7).unwrap().abs() < 1e-12);
        let proj = DensityOperator::from_diagonal(Basis::Eigen, &[0.0, 1.0]);
        let want = 0.7 * s.energies()[1] + g.log_z;
        assert!((relative_entropy_to_gibbs(&proj, &s, 0.7).unwrap() - want).abs() < 1e-12);
        let mut m = linalg::diagonal(&[0.3, 0.7]);
        m[(0, 1)] = c64::new(0.1, 0.2);
        m[(1, 0)] = c64::new(0.1, -0.2);
        let tau = DensityOperator::new(Basis::Computational, m);
        let a = relative_entropy_to_gibbs(&tau, &s, 0.7).unwrap();
        let b = relative_entropy_direct(&tau, &s, 0.7).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} {b}");
    }

    #[test]
    fn checker_arithmetic() {
        let lat = LatticeSpec::chain(8, Boundary::Open);
        let c = check_indistinguishability_condition(0.0, 0.5, 1, 1.0, XiSource::Manual, 0.0, &lat).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((c.entropy_term - 6.0).abs() < 1e-15);
        assert!((c.geometry_term - (2.0 * ln2 + 3.0) / ln2).abs() < 1e-14);
        assert!((c.size_term - 3.0).abs() < 1e-15);
        assert!((c.rhs - (4.0 / 4f64.ln()).sqrt()).abs() < 1e-14);
        assert!(!c.satisfied && c.guaranteed_distance.is_none());
        let doubled = check_indistinguishability_condition(0.0, 0.5, 1, 2.0, XiSource::Manual, 0.0, &lat).unwrap();
        assert!(doubled.geometry_term < c.geometry_term);
        assert!(doubled.rhs < c.rhs);
    }
}
