#![allow(dead_code)]

use faer::{Col, Mat};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thermalab_core::basis::{Basis, StateVector};
use thermalab_core::hamiltonian::{build_hamiltonian, embed_observable, HermitianOperator, ModelSpec, Pauli};
use thermalab_core::lattice::Region;
use thermalab_core::linalg::c64;
use thermalab_core::spectrum::{diagonalize, Spectrum};

pub fn chain(n: usize) -> (ModelSpec, HermitianOperator, Spectrum) {
    let spec = ModelSpec::default_chain(n);
    let h = build_hamiltonian(&spec).unwrap().operator;
    let s = diagonalize(&h).unwrap();
    (spec, h, s)
}

/// Computational basis state with the given bit pattern (site 0 first).
pub fn product_state(bits: &[u8]) -> StateVector {
    let n = bits.len();
    let idx = bits.iter().fold(0usize, |acc, &b| acc * 2 + b as usize);
    StateVector::basis_state(Basis::Computational, 1 << n, idx)
}

pub fn neel(n: usize) -> StateVector {
    product_state(&(0..n).map(|i| (i % 2) as u8).collect::<Vec<_>>())
}

pub fn site_observable(n: usize, site: usize, p: Pauli) -> HermitianOperator {
    let lat = thermalab_core::lattice::LatticeSpec::chain(n, thermalab_core::lattice::Boundary::Open);
    embed_observable(&HermitianOperator::new(p.matrix()).unwrap(), &Region::new(vec![site]).unwrap(), &lat).unwrap()
}

pub fn random_vector(d: usize, rng: &mut impl Rng) -> Col<c64> {
    let v = Col::from_fn(d, |_| c64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    let n = v.norm_l2();
    Col::from_fn(d, |i| v[i] / n)
}

pub fn random_hermitian(d: usize, rng: &mut impl Rng) -> Mat<c64> {
    let g = Mat::from_fn(d, d, |_, _| c64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    Mat::from_fn(d, d, |i, j| (g[(i, j)] + g[(j, i)].conj()) * 0.5)
}

/// Random full-rank density matrix `G G^dag / tr`.
pub fn random_density(d: usize, rng: &mut impl Rng) -> Mat<c64> {
    let g = Mat::from_fn(d, d, |_, _| c64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    let m = &g * g.adjoint();
    let tr: f64 = (0..d).map(|i| m[(i, i)].re).sum();
    Mat::from_fn(d, d, |i, j| m[(i, j)] / tr)
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha20Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha20Rng::seed_from_u64(seed)
}
