//! Eigendecomposition, degeneracy classes and basis changes.

use std::ops::Range;

use faer::{Col, Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::basis::{Basis, DensityOperator, Observable, StateVector};
use crate::error::{Error, Result};
use crate::hamiltonian::HermitianOperator;
use crate::linalg::{self, c64};

pub const DEFAULT_DEGENERACY_RTOL: f64 = 1e-9;
/// Residual and orthonormality tolerance, relative to `max |H_ij|`.
pub const RESIDUAL_RTOL: f64 = 1e-10;
/// Above this dimension complex residuals are estimated with random probes.
const EXACT_RESIDUAL_MAX_DIM: usize = 2048;

/// Ascending eigenvalues grouped into degeneracy classes. This is all the
/// window machinery needs, so synthetic spectra can skip eigenvectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyLevels {
    energies: Vec<f64>,
    classes: Vec<Range<usize>>,
    fingerprint: u64,
}

impl EnergyLevels {
    pub fn new(energies: Vec<f64>, rel_tol: f64) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::InvalidArgument("spectrum is empty".into()));
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidArgument("non-finite eigenvalue".into()));
        }
        if energies.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("eigenvalues must be nondecreasing".into()));
        }
        let classes = degeneracy_classes(&energies, rel_tol);
        let fingerprint = fingerprint_energies(&energies);
        Ok(Self { energies, classes, fingerprint })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn classes(&self) -> &[Range<usize>] {
        &self.classes
    }

    pub fn min(&self) -> f64 {
        self.energies[0]
    }

    pub fn max(&self) -> f64 {
        self.energies[self.energies.len() - 1]
    }

    /// Hash of the eigenvalue bit patterns, used to tie partitions to spectra.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.classes.len() == self.energies.len()
    }

    /// `tr(H)/dim`.
    pub fn mean(&self) -> f64 {
        crate::stats::pairwise_sum(&self.energies) / self.dim() as f64
    }
}

fn fingerprint_energies(e: &[f64]) -> u64 {
    let mut h = Sha256::new();
    for v in e {
        h.update(v.to_bits().to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Maximal runs whose consecutive gaps are at most `rel_tol * max(1, max|E|)`.
pub fn degeneracy_classes(eigs: &[f64], rel_tol: f64) -> Vec<Range<usize>> {
    if eigs.is_empty() {
        return Vec::new();
    }
    let scale = eigs.iter().fold(1.0f64, |a, e| a.max(e.abs()));
    let tol = rel_tol * scale;
    let mut classes = Vec::new();
    let mut start = 0;
    for i in 1..eigs.len() {
        if eigs[i] - eigs[i - 1] > tol {
            classes.push(start..i);
            start = i;
        }
    }
    classes.push(start..eigs.len());
    classes
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualRecord {
    /// `max |H V - V Lambda|`.
    pub residual: f64,
    /// `max |V^dag V - I|`.
    pub orthonormality: f64,
    /// False when the values are random-probe estimates.
    pub exact: bool,
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    levels: EnergyLevels,
    vectors: Mat<c64>,
    residual: ResidualRecord,
}

pub fn diagonalize(h: &HermitianOperator) -> Result<Spectrum> {
    diagonalize_with_tol(h, DEFAULT_DEGENERACY_RTOL)
}

pub fn diagonalize_with_tol(h: &HermitianOperator, rel_tol: f64) -> Result<Spectrum> {
    let (vals, mut v) = linalg::eigh(h.as_ref())?;
    fix_phases(&mut v);
    let residual = residual_record(h.as_ref(), &vals, v.as_ref());
    let allowed = RESIDUAL_RTOL * linalg::max_abs(h.as_ref()).max(f64::MIN_POSITIVE);
    if !(residual.residual <= allowed) || !(residual.orthonormality <= RESIDUAL_RTOL.max(allowed)) {
        return Err(Error::EigenNonConvergence { residual: residual.residual });
    }
    Ok(Spectrum { levels: EnergyLevels::new(vals, rel_tol)?, vectors: v, residual })
}

/// Scale each column so that its largest-magnitude entry (first on ties) is
/// real and positive.
pub fn fix_phases(v: &mut Mat<c64>) {
    for j in 0..v.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..v.nrows() {
            let a = v[(i, j)].norm();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if best_abs > 0.0 {
            let p = v[(best, j)].conj() / best_abs;
            for i in 0..v.nrows() {
                v[(i, j)] *= p;
            }
            v[(best, j)] = c64::new(v[(best, j)].re, 0.0);
        }
    }
}

pub fn residual_record(h: MatRef<'_, c64>, vals: &[f64], v: MatRef<'_, c64>) -> ResidualRecord {
    let n = vals.len();
    if n <= EXACT_RESIDUAL_MAX_DIM || (linalg::is_real(h) && linalg::is_real(v)) {
        let hv = if linalg::is_real(h) && linalg::is_real(v) {
            let hr = Mat::<f64>::from_fn(n, n, |i, j| h[(i, j)].re);
            let vr = Mat::<f64>::from_fn(n, n, |i, j| v[(i, j)].re);
            let hv = &hr * &vr;
            let g = vr.transpose() * &vr;
            let mut res = 0.0f64;
            let mut orth = 0.0f64;
            for j in 0..n {
                for i in 0..n {
                    res = res.max((hv[(i, j)] - vr[(i, j)] * vals[j]).abs());
                    let id = if i == j { 1.0 } else { 0.0 };
                    orth = orth.max((g[(i, j)] - id).abs());
                }
            }
            return ResidualRecord { residual: res, orthonormality: orth, exact: true };
        } else {
            h * v
        };
        let g = v.adjoint() * v;
        let mut res = 0.0f64;
        let mut orth = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                res = res.max((hv[(i, j)] - v[(i, j)] * vals[j]).norm());
                let id = if i == j { linalg::ONE } else { linalg::ZERO };
                orth = orth.max((g[(i, j)] - id).norm());
            }
        }
        ResidualRecord { residual: res, orthonormality: orth, exact: true }
    } else {
        probe_residual(h, vals, v, 4)
    }
}

/// Random-probe estimate: `|(HV - V Lambda) x|_inf / |x|_inf`, and the same
/// for `V^dag V - I`, over a few Gaussian probes.
fn probe_residual(h: MatRef<'_, c64>, vals: &[f64], v: MatRef<'_, c64>, probes: usize) -> ResidualRecord {
    let n = vals.len();
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    let mut res = 0.0f64;
    let mut orth = 0.0f64;
    for _ in 0..probes {
        let x = Col::<c64>::from_fn(n, |_| {
            c64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let xmax = (0..n).fold(0.0f64, |a, i| a.max(x[i].norm()));
        let vx = v * &x;
        let hvx = h * &vx;
        let lx = Col::<c64>::from_fn(n, |i| x[i] * vals[i]);
        let vlx = v * &lx;
        let gx = v.adjoint() * &vx;
        for i in 0..n {
            res = res.max((hvx[i] - vlx[i]).norm() / xmax);
            orth = orth.max((gx[i] - x[i]).norm() / xmax);
        }
    }
    ResidualRecord { residual: res, orthonormality: orth, exact: false }
}

impl Spectrum {
    /// Assemble from stored parts; no residual check against a Hamiltonian.
    pub fn from_parts(energies: Vec<f64>, vectors: Mat<c64>, rel_tol: f64) -> Result<Self> {
        let n = energies.len();
        if vectors.nrows() != n || vectors.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: vectors.nrows() });
        }
        let levels = EnergyLevels::new(energies, rel_tol)?;
        Ok(Self {
            levels,
            vectors,
            residual: ResidualRecord { residual: f64::NAN, orthonormality: f64::NAN, exact: false },
        })
    }

    /// Recompute the residual record against `h` and fail if it is too large.
    pub fn verify_against(&mut self, h: MatRef<'_, c64>) -> Result<ResidualRecord> {
        let rec = if self.dim() <= EXACT_RESIDUAL_MAX_DIM {
            residual_record(h, self.energies(), self.vectors.as_ref())
        } else {
            probe_residual(h, self.energies(), self.vectors.as_ref(), 2)
        };
        let allowed = RESIDUAL_RTOL * linalg::max_abs(h).max(f64::MIN_POSITIVE);
        if !(rec.residual <= allowed) || !(rec.orthonormality <= RESIDUAL_RTOL.max(allowed)) {
            return Err(Error::EigenNonConvergence { residual: rec.residual });
        }
        self.residual = rec;
        Ok(rec)
    }

    pub fn levels(&self) -> &EnergyLevels {
        &self.levels
    }

    pub fn energies(&self) -> &[f64] {
        self.levels.energies()
    }

    pub fn classes(&self) -> &[Range<usize>] {
        self.levels.classes()
    }

    pub fn dim(&self) -> usize {
        self.levels.dim()
    }

    pub fn vectors(&self) -> MatRef<'_, c64> {
        self.vectors.as_ref()
    }

    pub fn residual(&self) -> ResidualRecord {
        self.residual
    }

    pub fn vector_to_eigen(&self, psi: &StateVector) -> Result<StateVector> {
        self.check_dim(psi.dim())?;
        match psi.basis() {
            Basis::Eigen => Ok(psi.clone()),
            Basis::Computational => {
                Ok(StateVector::new(Basis::Eigen, self.vectors.adjoint() * psi.amplitudes()))
            }
        }
    }

    pub fn vector_to_computational(&self, c: &StateVector) -> Result<StateVector> {
        self.check_dim(c.dim())?;
        match c.basis() {
            Basis::Computational => Ok(c.clone()),
            Basis::Eigen => Ok(StateVector::new(Basis::Computational, &self.vectors * c.amplitudes())),
        }
    }

    /// `V^dag A V`.
    pub fn matrix_to_eigen(&self, a: MatRef<'_, c64>) -> Mat<c64> {
        let av = a * &self.vectors;
        self.vectors.adjoint() * av
    }

    /// `V A V^dag`.
    pub fn matrix_to_computational(&self, a: MatRef<'_, c64>) -> Mat<c64> {
        let va = &self.vectors * a;
        va * self.vectors.adjoint()
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: n });
        }
        Ok(())
    }
}

/// Objects that can be rewritten in the other basis of a spectrum.
pub trait BasisTagged: Sized {
    fn basis(&self) -> Basis;
    fn to_basis(&self, spectrum: &Spectrum, target: Basis) -> Result<Self>;
}

impl BasisTagged for StateVector {
    fn basis(&self) -> Basis {
        StateVector::basis(self)
    }
    fn to_basis(&self, spectrum: &Spectrum, target: Basis) -> Result<Self> {
        match target {
            Basis::Eigen => spectrum.vector_to_eigen(self),
            Basis::Computational => spectrum.vector_to_computational(self),
        }
    }
}

fn convert_matrix(spectrum: &Spectrum, m: &Mat<c64>, from: Basis, to: Basis) -> Result<Mat<c64>> {
    spectrum.check_dim(m.nrows())?;
    Ok(match (from, to) {
        (a, b) if a == b => m.clone(),
        (Basis::Computational, Basis::Eigen) => spectrum.matrix_to_eigen(m.as_ref()),
        _ => spectrum.matrix_to_computational(m.as_ref()),
    })
}

impl BasisTagged for DensityOperator {
    fn basis(&self) -> Basis {
        DensityOperator::basis(self)
    }
    fn to_basis(&self, spectrum: &Spectrum, target: Basis) -> Result<Self> {
        let m = convert_matrix(spectrum, self.matrix(), self.basis(), target)?;
        Ok(DensityOperator::new(target, m))
    }
}

impl BasisTagged for Observable {
    fn basis(&self) -> Basis {
        Observable::basis(self)
    }
    fn to_basis(&self, spectrum: &Spectrum, target: Basis) -> Result<Self> {
        let m = convert_matrix(spectrum, self.matrix(), self.basis(), target)?;
        Ok(Observable::new(target, m))
    }
}

/// Rewrite `x` in `target`; a no-op when it is already there.
pub fn change_basis<T: BasisTagged>(x: &T, spectrum: &Spectrum, target: Basis) -> Result<T> {
    x.to_basis(spectrum, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Pauli;

    #[test]
    fn pauli_spectra() {
        let z = diagonalize(&HermitianOperator::new(Pauli::Z.matrix()).unwrap()).unwrap();
        assert_eq!(z.energies(), &[-1.0, 1.0]);
        let x = diagonalize(&HermitianOperator::new(Pauli::X.matrix()).unwrap()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((x.energies()[0] + 1.0).abs() < 1e-15);
        let v = x.vectors();
        // (|0> - |1>)/sqrt2 with the largest (first on tie) entry positive
        assert!((v[(0, 0)].re - s).abs() < 1e-15 && (v[(1, 0)].re + s).abs() < 1e-15);
        assert!((v[(0, 1)].re - s).abs() < 1e-15 && (v[(1, 1)].re - s).abs() < 1e-15);
    }

    #[test]
    fn classes_examples() {
        assert_eq!(degeneracy_classes(&[-1.0, 1.0], 1e-8), vec![0..1, 1..2]);
        assert_eq!(degeneracy_classes(&[0.0, 0.0, 1.0], 1e-8), vec![0..2, 2..3]);
    }

    #[test]
    fn eigenstate_maps_to_unit_vector() {
        let h = HermitianOperator::new(Mat::from_fn(3, 3, |i, j| {
            c64::new((i + j) as f64, if i < j { 0.5 } else if i > j { -0.5 } else { 0.0 })
        }))
        .unwrap();
        let s = diagonalize(&h).unwrap();
        let col = s.vectors().col(1).to_owned();
        let c = s.vector_to_eigen(&StateVector::new(Basis::Computational, col)).unwrap();
        for i in 0..3 {
            let want = if i == 1 { 1.0 } else { 0.0 };
            assert!((c.amplitudes()[i] - c64::new(want, 0.0)).norm() < 1e-12);
        }
    }
}
