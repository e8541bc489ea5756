//! States and operators that carry the basis they are written in.

use faer::{Col, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c64, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Computational,
    Eigen,
}

#[derive(Clone, Debug)]
pub struct StateVector {
    basis: Basis,
    amplitudes: Col<c64>,
}

impl StateVector {
    pub fn new(basis: Basis, amplitudes: Col<c64>) -> Self {
        Self { basis, amplitudes }
    }

    pub fn from_slice(basis: Basis, amplitudes: &[c64]) -> Self {
        Self::new(basis, Col::from_fn(amplitudes.len(), |i| amplitudes[i]))
    }

    /// Rescales to unit norm; a zero vector is rejected.
    pub fn normalized(basis: Basis, amplitudes: Col<c64>) -> Result<Self> {
        let norm = amplitudes.norm_l2();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState("state vector has zero or non-finite norm".into()));
        }
        Ok(Self::new(basis, Col::from_fn(amplitudes.nrows(), |i| amplitudes[i] / norm)))
    }

    pub fn basis_state(basis: Basis, dim: usize, index: usize) -> Self {
        Self::new(basis, Col::from_fn(dim, |i| if i == index { linalg::ONE } else { ZERO }))
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.nrows()
    }

    pub fn amplitudes(&self) -> &Col<c64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm_l2()
    }

    pub fn require(&self, basis: Basis) -> Result<&Self> {
        if self.basis == basis {
            Ok(self)
        } else {
            Err(Error::BasisMismatch { expected: basis })
        }
    }

    /// `<psi|A|psi>` with `A` written in the same basis.
    pub fn expectation(&self, a: MatRef<'_, c64>) -> c64 {
        let v = self.amplitudes.as_ref();
        let av = a * v;
        (0..v.nrows()).fold(ZERO, |acc, i| acc + v[i].conj() * av[i])
    }
}

#[derive(Clone, Debug)]
pub struct DensityOperator {
    basis: Basis,
    matrix: Mat<c64>,
}

impl DensityOperator {
    pub fn new(basis: Basis, matrix: Mat<c64>) -> Self {
        Self { basis, matrix }
    }

    pub fn pure(state: &StateVector) -> Self {
        let v = state.amplitudes();
        let n = v.nrows();
        Self::new(state.basis(), Mat::from_fn(n, n, |i, j| v[i] * v[j].conj()))
    }

    pub fn from_diagonal(basis: Basis, weights: &[f64]) -> Self {
        Self::new(basis, linalg::diagonal(weights))
    }

    pub fn maximally_mixed(basis: Basis, dim: usize) -> Self {
        Self::from_diagonal(basis, &vec![1.0 / dim as f64; dim])
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<c64> {
        self.matrix
    }

    pub fn require(&self, basis: Basis) -> Result<&Self> {
        if self.basis == basis {
            Ok(self)
        } else {
            Err(Error::BasisMismatch { expected: basis })
        }
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(self.matrix.as_ref()).re
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// `tr(rho A)` with `A` written in the same basis.
    pub fn expectation(&self, a: MatRef<'_, c64>) -> c64 {
        let n = self.dim();
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                acc += self.matrix[(i, j)] * a[(j, i)];
            }
        }
        acc
    }

    /// Checks Hermiticity, unit trace and an eigenvalue floor.
    pub fn validate(&self, trace_tol: f64, eig_floor: f64) -> Result<()> {
        let m = self.matrix.as_ref();
        let dev = linalg::hermitian_deviation(m);
        let allowed = 1e-10 * linalg::max_abs(m).max(1.0);
        if dev > allowed {
            return Err(Error::NotHermitian { deviation: dev, allowed });
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > trace_tol {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let vals = linalg::eigvalsh(linalg::hermitian_part(m).as_ref())?;
        if let Some(&min) = vals.first() {
            if min < eig_floor {
                return Err(Error::InvalidState(format!("eigenvalue {min:e} below floor {eig_floor:e}")));
            }
        }
        Ok(())
    }
}

/// A Hermitian observable tagged with its basis.
#[derive(Clone, Debug)]
pub struct Observable {
    basis: Basis,
    matrix: Mat<c64>,
}

impl Observable {
    pub fn new(basis: Basis, matrix: Mat<c64>) -> Self {
        Self { basis, matrix }
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn require(&self, basis: Basis) -> Result<&Self> {
        if self.basis == basis {
            Ok(self)
        } else {
            Err(Error::BasisMismatch { expected: basis })
        }
    }
}
