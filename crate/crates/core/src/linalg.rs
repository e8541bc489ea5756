//! Dense helpers layered on faer. Built without faer's rayon backend, so every
//! kernel here is sequential and bit-reproducible for a fixed input.

use faer::{Mat, MatRef, Side};

pub use faer::c64;

use crate::error::{Error, Result};

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };

pub fn identity(n: usize) -> Mat<c64> {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn diagonal(entries: &[f64]) -> Mat<c64> {
    let n = entries.len();
    Mat::from_fn(n, n, |i, j| if i == j { c64::new(entries[i], 0.0) } else { ZERO })
}

pub fn max_abs(m: MatRef<'_, c64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m[(i, j)].norm());
        }
    }
    best
}

/// Largest entry of `|M - M^dag|`.
pub fn hermitian_deviation(m: MatRef<'_, c64>) -> f64 {
    let n = m.nrows();
    let mut best = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            best = best.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    best
}

pub fn hermitian_part(m: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

pub fn adjoint(m: MatRef<'_, c64>) -> Mat<c64> {
    m.adjoint().to_owned()
}

pub fn trace(m: MatRef<'_, c64>) -> c64 {
    (0..m.nrows().min(m.ncols())).fold(ZERO, |acc, i| acc + m[(i, i)])
}

pub fn is_real(m: MatRef<'_, c64>) -> bool {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)].im != 0.0 {
                return false;
            }
        }
    }
    true
}

pub fn kron(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * br, a.ncols() * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

pub fn matmul(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    a * b
}

/// Hermitian eigendecomposition with ascending eigenvalues. Real symmetric
/// input takes the (much cheaper) real path.
pub fn eigh(m: MatRef<'_, c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    let n = m.nrows();
    if is_real(m) {
        let re = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)].re);
        let evd = re
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::EigenNonConvergence { residual: f64::NAN })?;
        let vals = (0..n).map(|i| evd.S()[i]).collect();
        let u = evd.U();
        Ok((vals, Mat::from_fn(n, n, |i, j| c64::new(u[(i, j)], 0.0))))
    } else {
        let evd = m
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::EigenNonConvergence { residual: f64::NAN })?;
        let vals = (0..n).map(|i| evd.S()[i].re).collect();
        Ok((vals, evd.U().to_owned()))
    }
}

pub fn eigvalsh(m: MatRef<'_, c64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    if is_real(m) {
        let re = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)].re);
        re.self_adjoint_eigenvalues(Side::Lower)
            .map_err(|_| Error::EigenNonConvergence { residual: f64::NAN })
    } else {
        let vals = m
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|_| Error::EigenNonConvergence { residual: f64::NAN })?;
        Ok(vals)
    }
}

/// Operator norm of a Hermitian matrix.
pub fn spectral_norm_hermitian(m: MatRef<'_, c64>) -> Result<f64> {
    let vals = eigvalsh(hermitian_part(m).as_ref())?;
    Ok(vals.iter().fold(0.0f64, |a, v| a.max(v.abs())))
}

/// Schatten-1 norm of a Hermitian matrix.
pub fn trace_norm_hermitian(m: MatRef<'_, c64>) -> Result<f64> {
    let vals = eigvalsh(hermitian_part(m).as_ref())?;
    Ok(vals.iter().map(|v| v.abs()).sum())
}

/// `V f(Λ) V^dag` for Hermitian input.
pub fn hermitian_function(m: MatRef<'_, c64>, f: impl Fn(f64) -> f64) -> Result<Mat<c64>> {
    let (vals, v) = eigh(hermitian_part(m).as_ref())?;
    let n = vals.len();
    let scaled = Mat::from_fn(n, n, |i, j| v[(i, j)] * f(vals[j]));
    Ok(&scaled * v.adjoint())
}

/// Entrywise max of `|A - B|`.
pub fn max_abs_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            best = best.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    best
}

/// `max |U^dag U - I|`.
pub fn unitarity_defect(u: MatRef<'_, c64>) -> f64 {
    let g = u.adjoint() * u;
    max_abs_diff(g.as_ref(), identity(u.ncols()).as_ref())
}
