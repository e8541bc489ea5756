//! Reduced states on lattice regions, trace distances, `D_l` and the
//! translation-invariance gap.

use faer::{Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, DensityOperator};
use crate::error::{Error, Result};
use crate::hamiltonian::{HermitianOperator, SitePermutation};
use crate::lattice::{enumerate_hypercubes, LatticeSpec, Region};
use crate::linalg::{self, c64, ZERO};
use crate::spectrum::Spectrum;
use crate::stats::pairwise_sum;

/// Floor below which a reduced-state eigenvalue is treated as a bug.
pub const EIGEN_FLOOR: f64 = -1e-10;
pub const REDUCED_TRACE_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct ReducedState {
    pub region: Region,
    pub matrix: Mat<c64>,
}

impl ReducedState {
    fn checked(region: Region, matrix: Mat<c64>) -> Result<Self> {
        let tr = linalg::trace(matrix.as_ref()).re;
        if (tr - 1.0).abs() > REDUCED_TRACE_TOL {
            return Err(Error::InvalidState(format!("reduced state has trace {tr}")));
        }
        let vals = linalg::eigvalsh(linalg::hermitian_part(matrix.as_ref()).as_ref())?;
        if vals[0] < EIGEN_FLOOR {
            return Err(Error::InvalidState(format!("reduced state eigenvalue {:e} below floor", vals[0])));
        }
        Ok(Self { region, matrix })
    }
}

/// Index bookkeeping for splitting the computational basis into
/// region and complement digits.
struct Split {
    /// `rows[e * dc + a]` is the global index with region digits `a` and
    /// environment digits `e`.
    rows: Vec<usize>,
    dc: usize,
    de: usize,
}

fn split(region: &Region, lattice: &LatticeSpec, dim: usize) -> Result<Split> {
    let region = Region::on(lattice, region.sites().to_vec())?;
    let d = lattice.local_dim;
    let n = lattice.num_sites();
    match lattice.hilbert_dim_unchecked() {
        Some(full) if full == dim => {}
        _ => return Err(Error::DimensionMismatch { expected: lattice.hilbert_dim_unchecked().unwrap_or(0), got: dim }),
    }
    let w = |s: usize| d.pow((n - 1 - s) as u32);
    let env: Vec<usize> = (0..n).filter(|s| !region.contains(*s)).collect();
    let dc = d.pow(region.len() as u32);
    let de = dim / dc;
    let digits_to_offset = |sites: &[usize], mut idx: usize| {
        let mut off = 0;
        for &s in sites.iter().rev() {
            off += (idx % d) * w(s);
            idx /= d;
        }
        off
    };
    let a_off: Vec<usize> = (0..dc).map(|a| digits_to_offset(region.sites(), a)).collect();
    let mut rows = Vec::with_capacity(dim);
    for e in 0..de {
        let eo = digits_to_offset(&env, e);
        rows.extend(a_off.iter().map(|ao| eo + ao));
    }
    Ok(Split { rows, dc, de })
}

/// Anything that can be reduced to a lattice region.
pub trait LocalState: Sync {
    fn dim(&self) -> usize;
    fn reduce(&self, region: &Region, lattice: &LatticeSpec) -> Result<ReducedState>;
}

impl LocalState for DensityOperator {
    fn dim(&self) -> usize {
        DensityOperator::dim(self)
    }

    fn reduce(&self, region: &Region, lattice: &LatticeSpec) -> Result<ReducedState> {
        partial_trace(self, region, lattice)
    }
}

/// `rho = X X^dag` with `X` in the computational basis; avoids ever forming
/// a dense `dim x dim` state.
#[derive(Clone, Debug)]
pub struct FactoredState {
    factor: Mat<c64>,
}

impl FactoredState {
    pub fn new(factor: Mat<c64>) -> Self {
        Self { factor }
    }

    pub fn factor(&self) -> MatRef<'_, c64> {
        self.factor.as_ref()
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator::new(Basis::Computational, &self.factor * self.factor.adjoint())
    }
}

impl LocalState for FactoredState {
    fn dim(&self) -> usize {
        self.factor.nrows()
    }

    fn reduce(&self, region: &Region, lattice: &LatticeSpec) -> Result<ReducedState> {
        let sp = split(region, lattice, self.factor.nrows())?;
        let x = self.factor.as_ref();
        let mut m = Mat::<c64>::zeros(sp.dc, sp.dc);
        for col in 0..x.ncols() {
            let xc = x.col(col);
            for e in 0..sp.de {
                let rows = &sp.rows[e * sp.dc..(e + 1) * sp.dc];
                for (a, &ra) in rows.iter().enumerate() {
                    let va = xc[ra];
                    if va == ZERO {
                        continue;
                    }
                    for (b, &rb) in rows.iter().enumerate() {
                        m[(a, b)] += va * xc[rb].conj();
                    }
                }
            }
        }
        ReducedState::checked(Region::new(region.sites().to_vec())?, m)
    }
}

/// Trace over the complement of `keep`; the reduced basis orders the kept
/// sites as listed in `keep`.
pub fn partial_trace(rho: &DensityOperator, keep: &Region, lattice: &LatticeSpec) -> Result<ReducedState> {
    rho.require(Basis::Computational)?;
    let m = partial_trace_raw(rho.matrix().as_ref(), keep, lattice)?;
    ReducedState::checked(keep.clone(), m)
}

/// Unchecked partial trace of any square operator.
pub fn partial_trace_raw(m: MatRef<'_, c64>, keep: &Region, lattice: &LatticeSpec) -> Result<Mat<c64>> {
    let sp = split(keep, lattice, m.nrows())?;
    let mut out = Mat::<c64>::zeros(sp.dc, sp.dc);
    for e in 0..sp.de {
        let rows = &sp.rows[e * sp.dc..(e + 1) * sp.dc];
        for (b, &rb) in rows.iter().enumerate() {
            for (a, &ra) in rows.iter().enumerate() {
                out[(a, b)] += m[(ra, rb)];
            }
        }
    }
    Ok(out)
}

/// `||rho - sigma||_1`.
pub fn trace_distance(rho: MatRef<'_, c64>, sigma: MatRef<'_, c64>) -> Result<f64> {
    if rho.nrows() != sigma.nrows() || rho.ncols() != sigma.ncols() {
        return Err(Error::DimensionMismatch { expected: rho.nrows(), got: sigma.nrows() });
    }
    let diff = rho - sigma;
    linalg::trace_norm_hermitian(diff.as_ref())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalDistinguishability {
    pub l: usize,
    pub value: f64,
    pub regions: Vec<Region>,
    pub per_cube: Vec<f64>,
}

/// `D_l(rho, sigma)`: mean trace distance over all side-`l` hypercubes.
pub fn local_distinguishability<A: LocalState, B: LocalState>(
    rho: &A,
    sigma: &B,
    l: usize,
    lattice: &LatticeSpec,
) -> Result<LocalDistinguishability> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: sigma.dim() });
    }
    let regions = enumerate_hypercubes(lattice, l)?;
    let per_cube = regions
        .par_iter()
        .map(|c| {
            let a = rho.reduce(c, lattice)?;
            let b = sigma.reduce(c, lattice)?;
            trace_distance(a.matrix.as_ref(), b.matrix.as_ref())
        })
        .collect::<Result<Vec<f64>>>()?;
    let value = pairwise_sum(&per_cube) / per_cube.len() as f64;
    Ok(LocalDistinguishability { l, value, regions, per_cube })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TranslationGap {
    pub shift: Vec<i64>,
    /// `|tr(rho (A_X - A_Y))|`.
    pub gap: f64,
    /// `|<nu|T|nu>|` for every eigenvector.
    pub eigen_invariance: Vec<f64>,
    pub min_invariance: f64,
}

/// Compares `A` placed on `x` and on its translate `y`. The shift between the
/// regions is computed, not assumed.
pub fn translation_gap<S: LocalState>(
    rho: &S,
    a_block: &HermitianOperator,
    x: &Region,
    y: &Region,
    lattice: &LatticeSpec,
    spectrum: &Spectrum,
    t: &SitePermutation,
) -> Result<TranslationGap> {
    let shift = x.translation_to(y, lattice).ok_or(Error::NotCongruent)?;
    let want = lattice.local_dim.pow(x.len() as u32);
    if a_block.dim() != want {
        return Err(Error::DimensionMismatch { expected: want, got: a_block.dim() });
    }
    let ex = |r: &Region| -> Result<f64> {
        let red = rho.reduce(r, lattice)?;
        let mut acc = ZERO;
        for i in 0..want {
            for j in 0..want {
                acc += red.matrix[(i, j)] * a_block.as_ref()[(j, i)];
            }
        }
        Ok(acc.re)
    };
    let gap = (ex(x)? - ex(y)?).abs();
    if t.dim() != spectrum.dim() {
        return Err(Error::DimensionMismatch { expected: spectrum.dim(), got: t.dim() });
    }
    let v = spectrum.vectors();
    let eigen_invariance: Vec<f64> = (0..spectrum.dim()).map(|k| t.diagonal_element(v.col(k)).norm()).collect();
    let min_invariance = eigen_invariance.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(TranslationGap { shift, gap, eigen_invariance, min_invariance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;

    fn qubits(n: usize) -> LatticeSpec {
        LatticeSpec::chain(n, Boundary::Open)
    }

    #[test]
    fn bell_pair_reduces_to_identity_half() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut m = Mat::<c64>::zeros(4, 4);
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            m[(i, j)] = c64::new(s * s, 0.0);
        }
        let rho = DensityOperator::new(Basis::Computational, m);
        for site in 0..2 {
            let r = partial_trace(&rho, &Region::new(vec![site]).unwrap(), &qubits(2)).unwrap();
            let want = linalg::diagonal(&[0.5, 0.5]);
            assert!(linalg::max_abs_diff(r.matrix.as_ref(), want.as_ref()) < 1e-15);
        }
    }

    #[test]
    fn trace_distance_examples() {
        let zero = linalg::diagonal(&[1.0, 0.0]);
        let one = linalg::diagonal(&[0.0, 1.0]);
        let mixed = linalg::diagonal(&[0.5, 0.5]);
        assert!(trace_distance(zero.as_ref(), zero.as_ref()).unwrap().abs() < 1e-15);
        assert!((trace_distance(zero.as_ref(), one.as_ref()).unwrap() - 2.0).abs() < 1e-15);
        assert!((trace_distance(zero.as_ref(), mixed.as_ref()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn basis_tag_enforced() {
        let rho = DensityOperator::maximally_mixed(Basis::Eigen, 4);
        assert!(partial_trace(&rho, &Region::new(vec![0]).unwrap(), &qubits(2)).is_err());
    }

    #[test]
    fn factored_matches_dense() {
        let x = Mat::<c64>::from_fn(8, 3, |i, j| c64::new((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.05));
        let norm: f64 = (0..8).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| x[(i, j)].norm_sqr()).sum();
        let x = Mat::from_fn(8, 3, |i, j| x[(i, j)] / norm.sqrt());
        let f = FactoredState::new(x);
        let dense = f.to_density();
        for sites in [vec![0], vec![2], vec![2, 0], vec![0, 1, 2]] {
            let r = Region::new(sites).unwrap();
            let a = f.reduce(&r, &qubits(3)).unwrap();
            let b = partial_trace(&dense, &r, &qubits(3)).unwrap();
            assert!(linalg::max_abs_diff(a.matrix.as_ref(), b.matrix.as_ref()) < 1e-15);
        }
    }
}
