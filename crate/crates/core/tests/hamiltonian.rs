mod common;

use faer::Mat;
use proptest::prelude::*;
use thermalab_core::hamiltonian::{build_hamiltonian, CustomTerm, ModelKind, ModelSpec, Pauli};
use thermalab_core::lattice::{enumerate_hypercubes, Boundary, LatticeSpec, Region};
use thermalab_core::linalg::{self, c64};
use thermalab_core::spectrum::{diagonalize, Spectrum};

/// Pauli string with `ops` on the listed sites and identity elsewhere.
fn pauli_string(n: usize, ops: &[(usize, Pauli)]) -> Mat<c64> {
    (0..n).fold(linalg::identity(1), |acc, s| {
        let p = ops.iter().find(|(k, _)| *k == s).map_or(Pauli::I, |(_, p)| *p);
        linalg::kron(acc.as_ref(), p.matrix().as_ref())
    })
}

fn add_scaled(acc: &mut Mat<c64>, m: &Mat<c64>, s: f64) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc[(i, j)] += m[(i, j)] * s;
        }
    }
}

fn bonds(n: usize, boundary: Boundary) -> Vec<(usize, usize)> {
    let mut b: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
    if boundary == Boundary::Periodic && n > 2 {
        b.push((n - 1, 0));
    }
    b
}

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::Open), Just(Boundary::Periodic)]
}

fn digits(mut i: usize, n: usize, d: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for k in (0..n).rev() {
        out[k] = i % d;
        i /= d;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ising_matches_pauli_strings(n in 2usize..=5, b in boundary(), j in -2.0f64..2.0, hx in -2.0f64..2.0, hz in -2.0f64..2.0) {
        let spec = ModelSpec { lattice: LatticeSpec::chain(n, b), model: ModelKind::MixedFieldIsing { j, hx, hz }, locality: None };
        let h = build_hamiltonian(&spec).unwrap().operator;
        let mut oracle = Mat::<c64>::zeros(1 << n, 1 << n);
        for (a, c) in bonds(n, b) {
            add_scaled(&mut oracle, &pauli_string(n, &[(a, Pauli::Z), (c, Pauli::Z)]), j);
        }
        for s in 0..n {
            add_scaled(&mut oracle, &pauli_string(n, &[(s, Pauli::X)]), hx);
            add_scaled(&mut oracle, &pauli_string(n, &[(s, Pauli::Z)]), hz);
        }
        prop_assert!(linalg::max_abs_diff(h.as_ref(), oracle.as_ref()) <= 1e-12);
    }

    #[test]
    fn xxz_matches_pauli_strings(n in 2usize..=5, b in boundary(), j in -2.0f64..2.0, delta in -2.0f64..2.0, hz in -2.0f64..2.0) {
        let spec = ModelSpec { lattice: LatticeSpec::chain(n, b), model: ModelKind::HeisenbergXxz { j, delta, hz }, locality: None };
        let h = build_hamiltonian(&spec).unwrap().operator;
        let mut oracle = Mat::<c64>::zeros(1 << n, 1 << n);
        for (a, c) in bonds(n, b) {
            add_scaled(&mut oracle, &pauli_string(n, &[(a, Pauli::X), (c, Pauli::X)]), j);
            add_scaled(&mut oracle, &pauli_string(n, &[(a, Pauli::Y), (c, Pauli::Y)]), j);
            add_scaled(&mut oracle, &pauli_string(n, &[(a, Pauli::Z), (c, Pauli::Z)]), j * delta);
        }
        for s in 0..n {
            add_scaled(&mut oracle, &pauli_string(n, &[(s, Pauli::Z)]), hz);
        }
        prop_assert!(linalg::max_abs_diff(h.as_ref(), oracle.as_ref()) <= 1e-12);
    }

    #[test]
    fn custom_terms_match_digit_embedding(n in 2usize..=3, d in 2usize..=3, seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let lat = LatticeSpec::new(1, n, d, Boundary::Open).unwrap();
        let dim = d.pow(n as u32);
        // both site orders, to exercise non-sorted regions
        let (a, b) = if seed % 2 == 0 { (0, n - 1) } else { (n - 1, 0) };
        let block = common::random_hermitian(d * d, &mut r);
        let rows = (0..d * d).map(|i| (0..d * d).map(|j| [block[(i, j)].re, block[(i, j)].im]).collect()).collect();
        let spec = ModelSpec {
            lattice: lat,
            model: ModelKind::CustomTerms { terms: vec![CustomTerm { sites: Region::new(vec![a, b]).unwrap(), block: rows }] },
            locality: None,
        };
        let h = build_hamiltonian(&spec).unwrap().operator;
        let oracle = Mat::from_fn(dim, dim, |i, j| {
            let (di, dj) = (digits(i, n, d), digits(j, n, d));
            if (0..n).any(|s| s != a && s != b && di[s] != dj[s]) {
                return c64::new(0.0, 0.0);
            }
            block[(di[a] * d + di[b], dj[a] * d + dj[b])]
        });
        prop_assert!(linalg::max_abs_diff(h.as_ref(), oracle.as_ref()) <= 1e-12);
    }

    #[test]
    fn spectrum_reconstructs_operator(n in 2usize..=6, hx in 0.1f64..2.0, hz in -1.0f64..1.0) {
        let spec = ModelSpec { lattice: LatticeSpec::chain(n, Boundary::Open), model: ModelKind::MixedFieldIsing { j: 1.0, hx, hz }, locality: None };
        let h = build_hamiltonian(&spec).unwrap().operator;
        let s: Spectrum = diagonalize(&h).unwrap();
        prop_assert!(s.energies().windows(2).all(|w| w[0] <= w[1]));
        let v = s.vectors();
        let recon = v * linalg::diagonal(s.energies()) * v.adjoint();
        prop_assert!(linalg::max_abs_diff(recon.as_ref(), h.as_ref()) <= 1e-10 * h.operator_norm().unwrap().max(1.0));
        prop_assert!(linalg::unitarity_defect(v) <= 1e-10);
    }

    #[test]
    fn site_coordinates_roundtrip(dim in 1usize..=3, side in 1usize..=5) {
        let lat = LatticeSpec::new(dim, side, 2, Boundary::Periodic).unwrap();
        for s in 0..lat.num_sites() {
            prop_assert_eq!(lat.site(&lat.coords(s)), s);
        }
    }

    #[test]
    fn periodic_cube_count(dim in 1usize..=2, side in 2usize..=5, l in 1usize..=2) {
        prop_assume!(l <= side);
        let lat = LatticeSpec::new(dim, side, 2, Boundary::Periodic).unwrap();
        let cubes = enumerate_hypercubes(&lat, l).unwrap();
        // one cube per base site, translates of the full box included
        prop_assert_eq!(cubes.len(), side.pow(dim as u32));
        prop_assert!(cubes.iter().all(|c| c.len() == l.pow(dim as u32)));
    }
}

#[test]
fn default_chain_is_open_mixed_field_ising() {
    let h = build_hamiltonian(&ModelSpec::default_chain(3)).unwrap().operator;
    let mut oracle = Mat::<c64>::zeros(8, 8);
    for (a, c) in [(0, 1), (1, 2)] {
        add_scaled(&mut oracle, &pauli_string(3, &[(a, Pauli::Z), (c, Pauli::Z)]), 1.0);
    }
    for s in 0..3 {
        add_scaled(&mut oracle, &pauli_string(3, &[(s, Pauli::X)]), 1.05);
        add_scaled(&mut oracle, &pauli_string(3, &[(s, Pauli::Z)]), 0.5);
    }
    assert!(linalg::max_abs_diff(h.as_ref(), oracle.as_ref()) <= 1e-14);
}
