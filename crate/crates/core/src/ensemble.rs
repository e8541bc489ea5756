//! Sampling `U = (+)_k U_k` with independent Haar blocks on each window.

use std::ops::Range;

use faer::{Col, Mat, MatRef};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::{Basis, StateVector};
use crate::error::{Error, Result};
use crate::hamiltonian::HermitianOperator;
use crate::lattice::DEFAULT_DIM_GUARD;
use crate::linalg::{self, c64};
use crate::rng::SampleSeed;
use crate::spectrum::Spectrum;
use crate::windows::WindowPartition;

/// Haar-random `d x d` unitary: Ginibre matrix, QR, then column phases that
/// make the diagonal of `R` real positive.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Mat<c64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let g = Mat::<c64>::from_fn(d, d, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c64::new(re * s, im * s)
    });
    if d == 1 {
        let z = g[(0, 0)];
        let n = z.norm();
        return Mat::from_fn(1, 1, |_, _| if n > 0.0 { z / n } else { linalg::ONE });
    }
    let qr = g.qr();
    let r = qr.R();
    let mut q = qr.compute_Q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        let phase = if n > 0.0 { rjj / n } else { linalg::ONE };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Adjoint,
}

/// Block-diagonal unitary stored as its blocks.
#[derive(Clone, Debug)]
pub struct BlockUnitary {
    blocks: Vec<Mat<c64>>,
    ranges: Vec<Range<usize>>,
    dim: usize,
    partition_digest: String,
    levels_fingerprint: u64,
    seed: Option<SampleSeed>,
}

/// Draws one element of the ensemble. Window `k` uses the random stream
/// keyed by `(seed.master, seed.sample, k)`.
pub fn sample_block_haar(partition: &WindowPartition, seed: SampleSeed) -> BlockUnitary {
    let ranges: Vec<Range<usize>> = partition.windows().iter().map(|w| w.range.clone()).collect();
    let blocks = ranges
        .iter()
        .enumerate()
        .map(|(k, r)| haar_unitary(r.len(), &mut seed.stream(k as u64)))
        .collect();
    BlockUnitary {
        blocks,
        ranges,
        dim: partition.dim(),
        partition_digest: partition.digest(),
        levels_fingerprint: partition.levels_fingerprint(),
        seed: Some(seed),
    }
}

impl BlockUnitary {
    pub fn identity(partition: &WindowPartition) -> Self {
        let ranges: Vec<Range<usize>> = partition.windows().iter().map(|w| w.range.clone()).collect();
        Self {
            blocks: ranges.iter().map(|r| linalg::identity(r.len())).collect(),
            ranges,
            dim: partition.dim(),
            partition_digest: partition.digest(),
            levels_fingerprint: partition.levels_fingerprint(),
            seed: None,
        }
    }

    /// Assemble from explicit blocks (sizes must match the partition).
    pub fn from_blocks(partition: &WindowPartition, blocks: Vec<Mat<c64>>) -> Result<Self> {
        let ranges: Vec<Range<usize>> = partition.windows().iter().map(|w| w.range.clone()).collect();
        if blocks.len() != ranges.len() {
            return Err(Error::DimensionMismatch { expected: ranges.len(), got: blocks.len() });
        }
        for (b, r) in blocks.iter().zip(&ranges) {
            if b.nrows() != r.len() || b.ncols() != r.len() {
                return Err(Error::DimensionMismatch { expected: r.len(), got: b.nrows() });
            }
        }
        Ok(Self {
            blocks,
            ranges,
            dim: partition.dim(),
            partition_digest: partition.digest(),
            levels_fingerprint: partition.levels_fingerprint(),
            seed: None,
        })
    }

    pub fn blocks(&self) -> &[Mat<c64>] {
        &self.blocks
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> Option<SampleSeed> {
        self.seed
    }

    pub fn partition_digest(&self) -> &str {
        &self.partition_digest
    }

    pub fn belongs_to(&self, partition: &WindowPartition) -> bool {
        self.partition_digest == partition.digest()
    }

    /// Largest `max |U_k^dag U_k - I|` over blocks.
    pub fn unitarity_defect(&self) -> f64 {
        self.blocks.iter().map(|b| linalg::unitarity_defect(b.as_ref())).fold(0.0, f64::max)
    }

    /// Block-wise product with a raw eigenbasis vector.
    pub fn apply_raw(&self, c: &Col<c64>, direction: Direction) -> Col<c64> {
        let mut out = Col::<c64>::zeros(self.dim);
        for (b, r) in self.blocks.iter().zip(&self.ranges) {
            let seg = c.as_ref().subrows(r.start, r.len());
            let y = match direction {
                Direction::Forward => b * seg,
                Direction::Adjoint => b.adjoint() * seg,
            };
            for (i, idx) in r.clone().enumerate() {
                out[idx] = y[i];
            }
        }
        out
    }

    /// Dense matrix; refused above `guard`.
    pub fn to_dense(&self, guard: usize) -> Result<Mat<c64>> {
        if self.dim > guard {
            return Err(Error::DimensionGuard { dim: self.dim, guard });
        }
        let mut m = Mat::<c64>::zeros(self.dim, self.dim);
        for (b, r) in self.blocks.iter().zip(&self.ranges) {
            for j in 0..r.len() {
                for i in 0..r.len() {
                    m[(r.start + i, r.start + j)] = b[(i, j)];
                }
            }
        }
        Ok(m)
    }

    /// `V U` computed block by block: columns `m_k` are `V[:, m_k] U_k`.
    pub fn rotate_frame(&self, v: MatRef<'_, c64>) -> Mat<c64> {
        let mut w = Mat::<c64>::zeros(v.nrows(), self.dim);
        for (b, r) in self.blocks.iter().zip(&self.ranges) {
            let cols = v.subcols(r.start, r.len());
            let prod = cols * b;
            w.as_mut().subcols_mut(r.start, r.len()).copy_from(&prod);
        }
        w
    }
}

/// `U psi` or `U^dag psi` for an eigenbasis vector.
pub fn apply_block_unitary(u: &BlockUnitary, psi: &StateVector, direction: Direction) -> Result<StateVector> {
    psi.require(Basis::Eigen)?;
    if psi.dim() != u.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), got: psi.dim() });
    }
    Ok(StateVector::new(Basis::Eigen, u.apply_raw(psi.amplitudes(), direction)))
}

/// `H' = V U Lambda U^dag V^dag` together with its eigenbasis `W = V U`.
#[derive(Clone, Debug)]
pub struct ConjugatedHamiltonian {
    pub operator: HermitianOperator,
    pub frame: Mat<c64>,
}

pub fn conjugate_hamiltonian(spectrum: &Spectrum, u: &BlockUnitary) -> Result<ConjugatedHamiltonian> {
    conjugate_hamiltonian_guarded(spectrum, u, DEFAULT_DIM_GUARD)
}

pub fn conjugate_hamiltonian_guarded(
    spectrum: &Spectrum,
    u: &BlockUnitary,
    guard: usize,
) -> Result<ConjugatedHamiltonian> {
    check_partition_dim(spectrum, u)?;
    if spectrum.dim() > guard {
        return Err(Error::DimensionGuard { dim: spectrum.dim(), guard });
    }
    let frame = u.rotate_frame(spectrum.vectors());
    let e = spectrum.energies();
    let scaled = Mat::from_fn(frame.nrows(), frame.ncols(), |i, j| frame[(i, j)] * e[j]);
    let h = &scaled * frame.adjoint();
    let operator = HermitianOperator::new(linalg::hermitian_part(h.as_ref()))?;
    Ok(ConjugatedHamiltonian { operator, frame })
}

fn check_partition_dim(spectrum: &Spectrum, u: &BlockUnitary) -> Result<()> {
    if spectrum.dim() != u.dim() || spectrum.levels().fingerprint() != u.levels_fingerprint {
        return Err(Error::PartitionMismatch);
    }
    Ok(())
}

/// `<psi| U^dag Lambda U |psi>` for an eigenbasis vector, without forming `H'`.
pub fn conjugated_energy(energies: &[f64], u: &BlockUnitary, c: &Col<c64>) -> f64 {
    let y = u.apply_raw(c, Direction::Forward);
    (0..y.nrows()).map(|i| y[i].norm_sqr() * energies[i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::EnergyLevels;
    use crate::windows::partition_spectrum;

    #[test]
    fn haar_blocks_are_unitary() {
        let mut rng = crate::rng::stream_rng(1, 2, 3);
        for d in [1, 2, 5, 16] {
            let u = haar_unitary(d, &mut rng);
            assert!(linalg::unitarity_defect(u.as_ref()) < 1e-13);
        }
    }

    #[test]
    fn singleton_blocks_are_phases() {
        let l = EnergyLevels::new(vec![0.0, 1.0, 2.0], 1e-9).unwrap();
        let p = partition_spectrum(&l, 0.5, None).unwrap();
        let u = sample_block_haar(&p, SampleSeed::new(4, 0));
        for b in u.blocks() {
            assert_eq!(b.nrows(), 1);
            assert!((b[(0, 0)].norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn reproducible_from_seed() {
        let l = EnergyLevels::new((0..12).map(f64::from).collect(), 1e-9).unwrap();
        let p = partition_spectrum(&l, 4.0, None).unwrap();
        let a = sample_block_haar(&p, SampleSeed::new(9, 3));
        let b = sample_block_haar(&p, SampleSeed::new(9, 3));
        let c = sample_block_haar(&p, SampleSeed::new(9, 4));
        let da = a.to_dense(64).unwrap();
        assert_eq!(linalg::max_abs_diff(da.as_ref(), b.to_dense(64).unwrap().as_ref()), 0.0);
        assert!(linalg::max_abs_diff(da.as_ref(), c.to_dense(64).unwrap().as_ref()) > 0.0);
        assert!(a.to_dense(8).is_err());
    }

    #[test]
    fn forward_then_adjoint_roundtrip() {
        let l = EnergyLevels::new((0..10).map(|i| i as f64 * 0.3).collect(), 1e-9).unwrap();
        let p = partition_spectrum(&l, 1.0, None).unwrap();
        let u = sample_block_haar(&p, SampleSeed::new(1, 1));
        let mut rng = crate::rng::stream_rng(5, 5, 5);
        let v = StateVector::normalized(
            Basis::Eigen,
            Col::from_fn(10, |_| c64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))),
        )
        .unwrap();
        let f = apply_block_unitary(&u, &v, Direction::Forward).unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-12);
        let back = apply_block_unitary(&u, &f, Direction::Adjoint).unwrap();
        for i in 0..10 {
            assert!((back.amplitudes()[i] - v.amplitudes()[i]).norm() < 1e-12);
        }
        let comp = StateVector::new(Basis::Computational, v.amplitudes().clone());
        assert!(apply_block_unitary(&u, &comp, Direction::Forward).is_err());
    }
}
