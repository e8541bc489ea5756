//! Infinite-time averages, their ensemble means, and Monte-Carlo statistics
//! of dephased states over the smoothing ensemble.

use std::ops::Range;

use faer::{Col, Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{Basis, DensityOperator, StateVector};
use crate::ensemble::{conjugated_energy, sample_block_haar, Direction};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, ZERO};
use crate::rng::SampleSeed;
use crate::spectrum::EnergyLevels;
use crate::stats::{mean_se, MeanSe};
use crate::windows::WindowPartition;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Digest of the initial state amplitudes.
    pub initial_state: Option<String>,
    pub seed: Option<SampleSeed>,
}

/// A state that commutes with `H`: one dense block per degeneracy class,
/// written in the eigenbasis (1x1 blocks for nondegenerate levels).
#[derive(Clone, Debug)]
pub struct EquilibriumState {
    dim: usize,
    classes: Vec<Range<usize>>,
    blocks: Vec<Mat<c64>>,
    pub provenance: Provenance,
}

impl EquilibriumState {
    pub fn from_blocks(dim: usize, classes: Vec<Range<usize>>, blocks: Vec<Mat<c64>>) -> Result<Self> {
        if classes.len() != blocks.len() || classes.iter().map(|c| c.len()).sum::<usize>() != dim {
            return Err(Error::InvalidArgument("class blocks do not tile the space".into()));
        }
        Ok(Self { dim, classes, blocks, provenance: Provenance::default() })
    }

    /// Diagonal state; `weights` must be constant on degeneracy classes to
    /// be an honest equilibrium state, but this is not checked.
    pub fn from_diagonal(levels: &EnergyLevels, weights: &[f64]) -> Self {
        let classes = levels.classes().to_vec();
        let blocks = classes
            .iter()
            .map(|c| Mat::from_fn(c.len(), c.len(), |i, j| if i == j { c64::new(weights[c.start + i], 0.0) } else { ZERO }))
            .collect();
        Self { dim: levels.dim(), classes, blocks, provenance: Provenance::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> &[Range<usize>] {
        &self.classes
    }

    pub fn blocks(&self) -> &[Mat<c64>] {
        &self.blocks
    }

    /// Populations `<nu|rho|nu>`.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.dim];
        for (c, b) in self.classes.iter().zip(&self.blocks) {
            for i in 0..c.len() {
                w[c.start + i] = b[(i, i)].re;
            }
        }
        w
    }

    pub fn trace(&self) -> f64 {
        crate::stats::pairwise_sum(&self.weights())
    }

    /// `tr(rho A)` for `A` in the eigenbasis.
    pub fn expectation(&self, a: MatRef<'_, c64>) -> f64 {
        let mut acc = 0.0;
        for (c, b) in self.classes.iter().zip(&self.blocks) {
            for i in 0..c.len() {
                for j in 0..c.len() {
                    acc += (b[(i, j)] * a[(c.start + j, c.start + i)]).re;
                }
            }
        }
        acc
    }

    /// Von Neumann entropy (nats) restricted to the classes in `range`.
    pub fn partial_entropy(&self, range: Range<usize>) -> Result<f64> {
        let mut s = 0.0;
        for (c, b) in self.classes.iter().zip(&self.blocks) {
            if c.start >= range.start && c.end <= range.end {
                s += block_entropy(b)?;
            }
        }
        Ok(s)
    }

    pub fn entropy(&self) -> Result<f64> {
        self.partial_entropy(0..self.dim)
    }

    pub fn to_density(&self, guard: usize) -> Result<DensityOperator> {
        if self.dim > guard {
            return Err(Error::DimensionGuard { dim: self.dim, guard });
        }
        let mut m = Mat::<c64>::zeros(self.dim, self.dim);
        for (c, b) in self.classes.iter().zip(&self.blocks) {
            for j in 0..c.len() {
                for i in 0..c.len() {
                    m[(c.start + i, c.start + j)] = b[(i, j)];
                }
            }
        }
        Ok(DensityOperator::new(Basis::Eigen, m))
    }

    /// Columns `X` with `rho = X X^dag` once the eigenbasis is expressed by
    /// `frame` (e.g. `V` or `V U`). Zero-weight directions are dropped.
    pub fn factor(&self, frame: MatRef<'_, c64>) -> Result<Mat<c64>> {
        let mut cols: Vec<Col<c64>> = Vec::new();
        for (c, b) in self.classes.iter().zip(&self.blocks) {
            if c.len() == 1 {
                let w = b[(0, 0)].re;
                if w > 0.0 {
                    let s = w.sqrt();
                    cols.push(Col::from_fn(frame.nrows(), |i| frame[(i, c.start)] * s));
                }
                continue;
            }
            let (vals, q) = linalg::eigh(linalg::hermitian_part(b.as_ref()).as_ref())?;
            let sub = frame.subcols(c.start, c.len());
            for (k, &lam) in vals.iter().enumerate() {
                if lam > 0.0 {
                    let v = sub * q.col(k);
                    let s = lam.sqrt();
                    cols.push(Col::from_fn(frame.nrows(), |i| v[i] * s));
                }
            }
        }
        Ok(Mat::from_fn(frame.nrows(), cols.len(), |i, j| cols[j][i]))
    }
}

pub(crate) fn block_entropy(b: &Mat<c64>) -> Result<f64> {
    if b.nrows() == 1 {
        return Ok(xlogx_neg(b[(0, 0)].re));
    }
    let vals = linalg::eigvalsh(linalg::hermitian_part(b.as_ref()).as_ref())?;
    Ok(vals.into_iter().map(xlogx_neg).sum())
}

/// `-x ln x` with `0 ln 0 = 0` and negative dust clipped.
pub(crate) fn xlogx_neg(x: f64) -> f64 {
    if x > 0.0 {
        -x * x.ln()
    } else {
        0.0
    }
}

pub fn state_digest(c: &Col<c64>) -> String {
    let mut h = Sha256::new();
    for i in 0..c.nrows() {
        h.update(c[i].re.to_bits().to_le_bytes());
        h.update(c[i].im.to_bits().to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Keeps the degeneracy-class blocks of an eigenbasis state.
pub fn dephase(rho: &DensityOperator, levels: &EnergyLevels) -> Result<EquilibriumState> {
    rho.require(Basis::Eigen)?;
    if rho.dim() != levels.dim() {
        return Err(Error::DimensionMismatch { expected: levels.dim(), got: rho.dim() });
    }
    let m = rho.matrix();
    let classes = levels.classes().to_vec();
    let blocks = classes
        .iter()
        .map(|c| Mat::from_fn(c.len(), c.len(), |i, j| m[(c.start + i, c.start + j)]))
        .collect();
    Ok(EquilibriumState { dim: levels.dim(), classes, blocks, provenance: Provenance::default() })
}

/// Dephased pure state: each class block is the rank-one `P c c^dag P`.
pub fn dephase_pure(c: &Col<c64>, classes: &[Range<usize>]) -> EquilibriumState {
    let blocks = classes
        .iter()
        .map(|r| Mat::from_fn(r.len(), r.len(), |i, j| c[r.start + i] * c[r.start + j].conj()))
        .collect();
    EquilibriumState {
        dim: c.nrows(),
        classes: classes.to_vec(),
        blocks,
        provenance: Provenance { initial_state: Some(state_digest(c)), seed: None },
    }
}

/// `rho_inf` of `U H U^dag` for the eigenbasis vector `c` of `H`, written in
/// the rotated eigenbasis `V U`. Its populations are `|(U^dag c)_nu|^2`.
pub fn dephase_under_sample(c: &Col<c64>, u: &crate::ensemble::BlockUnitary, classes: &[Range<usize>]) -> EquilibriumState {
    let rotated = u.apply_raw(c, Direction::Adjoint);
    let mut eq = dephase_pure(&rotated, classes);
    eq.provenance = Provenance { initial_state: Some(state_digest(c)), seed: u.seed() };
    eq
}

/// `E_U[rho_inf] = sum_k (q_k 1_k + Pi_k psi psi^dag Pi_k) / (d_k + 1)` in
/// the eigenbasis.
pub fn ensemble_average_equilibrium(psi: &StateVector, partition: &WindowPartition) -> Result<DensityOperator> {
    psi.require(Basis::Eigen)?;
    if psi.dim() != partition.dim() {
        return Err(Error::DimensionMismatch { expected: partition.dim(), got: psi.dim() });
    }
    let c = psi.amplitudes();
    let n = psi.dim();
    let mut m = Mat::<c64>::zeros(n, n);
    for w in partition.windows() {
        let r = w.range.clone();
        let q: f64 = r.clone().map(|i| c[i].norm_sqr()).sum();
        let inv = 1.0 / (w.dim() as f64 + 1.0);
        for i in r.clone() {
            for j in r.clone() {
                let mut v = c[i] * c[j].conj();
                if i == j {
                    v += c64::new(q, 0.0);
                }
                m[(i, j)] = v * inv;
            }
        }
    }
    Ok(DensityOperator::new(Basis::Eigen, m))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipationStatistics {
    /// `sum_nu |<nu|U|psi>|^4` per sample.
    pub purities: Vec<f64>,
    pub mean: MeanSe,
    /// `sum_k q_k^2/(d_k+1)`: one of the two pairings only, half the true value.
    pub single_pairing_formula: f64,
    /// `sum_k 2 q_k^2/(d_k+1)`, the Haar fourth moment.
    pub haar_formula: f64,
    /// `-ln(mean purity)`.
    pub entropy_proxy: f64,
}

pub fn participation_statistics(
    psi: &StateVector,
    partition: &WindowPartition,
    n_samples: usize,
    master_seed: u64,
) -> Result<ParticipationStatistics> {
    psi.require(Basis::Eigen)?;
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let c = psi.amplitudes();
    let purities: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let u = sample_block_haar(partition, SampleSeed::new(master_seed, s));
            let y = u.apply_raw(c, Direction::Forward);
            (0..y.nrows()).map(|i| y[i].norm_sqr().powi(2)).sum()
        })
        .collect();
    let q = partition.window_weights(&probabilities(c));
    let dims = partition.dims();
    let single_pairing_formula = q.iter().zip(&dims).map(|(q, &d)| q * q / (d as f64 + 1.0)).sum();
    let haar_formula = haar_purity(&q, &dims);
    let mean = mean_se(&purities);
    Ok(ParticipationStatistics { entropy_proxy: -mean.mean.ln(), mean, single_pairing_formula, haar_formula, purities })
}

/// `E sum_nu |<nu|U psi>|^4 = sum_k 2 q_k^2 / (d_k + 1)`.
pub fn haar_purity(q: &[f64], dims: &[usize]) -> f64 {
    q.iter().zip(dims).map(|(q, &d)| 2.0 * q * q / (d as f64 + 1.0)).sum()
}

pub fn probabilities(c: &Col<c64>) -> Vec<f64> {
    (0..c.nrows()).map(|i| c[i].norm_sqr()).collect()
}

/// Parameters of the product-state tail bound `exp(-2 eta^2 N / w^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailBoundParams {
    /// Per-site offset `delta` in the threshold `mu + eta N + delta N`.
    pub delta: f64,
    pub w: f64,
    pub n_sites: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub threshold: f64,
    /// `sum_{E_nu >= threshold} p_nu`.
    pub tail_weight: f64,
    /// `eta = (threshold - mu)/N - delta` when bound parameters are given.
    pub eta: Option<f64>,
    pub bound: Option<f64>,
    /// Whether `delta >= w/sqrt(N)`, the regime in which the bound is stated.
    pub applicable: Option<bool>,
    pub exceeds_bound: Option<bool>,
}

pub fn tail_bound(eta: f64, n_sites: usize, w: f64) -> f64 {
    if eta <= 0.0 {
        return 1.0;
    }
    (-2.0 * eta * eta * n_sites as f64 / (w * w)).exp()
}

/// Upper-tail weights of an eigenbasis population vector at the given
/// absolute energies; energies in the bound are measured from the state's
/// mean energy.
pub fn energy_tail_report(
    weights: &[f64],
    levels: &EnergyLevels,
    thresholds: &[f64],
    bound: Option<TailBoundParams>,
) -> Result<Vec<TailRow>> {
    if weights.len() != levels.dim() {
        return Err(Error::DimensionMismatch { expected: levels.dim(), got: weights.len() });
    }
    let e = levels.energies();
    // suffix[i] = sum_{j >= i} w_j
    let mut suffix = vec![0.0; e.len() + 1];
    for i in (0..e.len()).rev() {
        suffix[i] = suffix[i + 1] + weights[i];
    }
    let mu: f64 = weights.iter().zip(e).map(|(w, x)| w * x).sum();
    Ok(thresholds
        .iter()
        .map(|&x| {
            let start = e.partition_point(|&v| v < x);
            let tail_weight = suffix[start];
            let (eta, b, applicable) = match bound {
                Some(p) => {
                    let n = p.n_sites as f64;
                    let eta = (x - mu) / n - p.delta;
                    (Some(eta), Some(tail_bound(eta, p.n_sites, p.w)), Some(p.delta >= p.w / n.sqrt()))
                }
                None => (None, None, None),
            };
            TailRow { threshold: x, tail_weight, eta, bound: b, applicable, exceeds_bound: b.map(|b| tail_weight > b) }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyConcentration {
    pub reference: f64,
    pub energies: Vec<f64>,
    pub mean_shift: f64,
    pub std: f64,
    pub max_deviation: f64,
    /// `max_k delta_k`, the hard bound on `|mean shift|`.
    pub bound: f64,
}

/// Samples `<psi|U^dag H U|psi>` over the ensemble.
pub fn mc_energy_concentration(
    psi: &StateVector,
    levels: &EnergyLevels,
    partition: &WindowPartition,
    n_samples: usize,
    master_seed: u64,
) -> Result<EnergyConcentration> {
    psi.require(Basis::Eigen)?;
    partition.check_levels(levels)?;
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let c = psi.amplitudes();
    let e = levels.energies();
    let reference: f64 = (0..c.nrows()).map(|i| c[i].norm_sqr() * e[i]).sum();
    let energies: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| conjugated_energy(e, &sample_block_haar(partition, SampleSeed::new(master_seed, s)), c))
        .collect();
    let stats = mean_se(&energies);
    let mean_shift = stats.mean - reference;
    let max_deviation = energies.iter().map(|x| (x - reference).abs()).fold(0.0, f64::max);
    let bound = partition.max_width();
    if mean_shift.abs() > bound + 1e-12 * reference.abs().max(1.0) {
        return Err(Error::BoundViolated(format!("mean energy shift {mean_shift} exceeds window width {bound}")));
    }
    Ok(EnergyConcentration { reference, energies, mean_shift, std: stats.std, max_deviation, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::windows::partition_spectrum;

    fn levels(e: &[f64]) -> EnergyLevels {
        EnergyLevels::new(e.to_vec(), 1e-9).unwrap()
    }

    #[test]
    fn dephase_plus_state_on_qubit() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = StateVector::from_slice(Basis::Eigen, &[c64::new(s, 0.0), c64::new(s, 0.0)]);
        let eq = dephase(&DensityOperator::pure(&plus), &levels(&[-1.0, 1.0])).unwrap();
        let w = eq.weights();
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dephase_keeps_degenerate_block() {
        let l = levels(&[0.0, 0.0, 1.0]);
        let v = StateVector::from_slice(Basis::Eigen, &[c64::new(0.6, 0.0), c64::new(0.0, 0.8), linalg::ZERO]);
        let rho = DensityOperator::pure(&v);
        let eq = dephase(&rho, &l).unwrap();
        assert_eq!(eq.blocks()[0].nrows(), 2);
        assert!((eq.blocks()[0][(0, 1)] - rho.matrix()[(0, 1)]).norm() < 1e-15);
        assert!(eq.entropy().unwrap().abs() < 1e-12);
    }

    #[test]
    fn singleton_average_is_dephased_state() {
        let l = levels(&[0.0, 1.0, 2.0]);
        let p = WindowPartition::per_class(&l);
        let v = StateVector::normalized(
            Basis::Eigen,
            Col::from_fn(3, |i| c64::new(1.0 + i as f64, 0.5 * i as f64)),
        )
        .unwrap();
        let avg = ensemble_average_equilibrium(&v, &p).unwrap();
        for i in 0..3 {
            assert!((avg.matrix()[(i, i)].re - v.amplitudes()[i].norm_sqr()).abs() < 1e-15);
        }
    }

    #[test]
    fn tail_report_edges() {
        let l = levels(&[0.0, 1.0, 2.0]);
        let rows = energy_tail_report(&[0.2, 0.3, 0.5], &l, &[-1.0, 1.0, 3.0], None).unwrap();
        let t: Vec<f64> = rows.iter().map(|r| r.tail_weight).collect();
        assert!((t[0] - 1.0).abs() < 1e-15 && (t[1] - 0.8).abs() < 1e-15 && t[2] == 0.0);
    }

    #[test]
    fn energy_concentration_trivial_windows() {
        let l = levels(&[0.0, 1.0, 2.5, 3.0]);
        let p = partition_spectrum(&l, 0.1, None).unwrap();
        let v = StateVector::normalized(Basis::Eigen, Col::from_fn(4, |i| c64::new(1.0, i as f64))).unwrap();
        let r = mc_energy_concentration(&v, &l, &p, 10, 3).unwrap();
        assert!(r.energies.iter().all(|&x| (x - r.reference).abs() < 1e-14));
    }
}
