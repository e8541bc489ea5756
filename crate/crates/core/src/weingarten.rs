//! Exact Weingarten values in degrees 2 and 3 and Monte-Carlo checks of
//! low Haar moments and of equilibrium-value fluctuations.

use faer::{Col, Mat, MatRef};
use num_rational::Ratio;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, Observable, StateVector};
use crate::ensemble::{haar_unitary, sample_block_haar, Direction};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, ZERO};
use crate::rng::{stream_rng, SampleSeed};
use crate::spectrum::EnergyLevels;
use crate::stats::{mean_se, sample_variance};
use crate::windows::WindowPartition;

pub type Rational = Ratio<i128>;

/// Cycle type of a permutation of 2 or 3 elements, parts in decreasing order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PermutationLabel {
    degree: usize,
    cycle_type: Vec<usize>,
}

impl PermutationLabel {
    pub fn new(mut cycle_type: Vec<usize>) -> Result<Self> {
        cycle_type.sort_unstable_by(|a, b| b.cmp(a));
        let degree: usize = cycle_type.iter().sum();
        if !(2..=3).contains(&degree) || cycle_type.contains(&0) {
            return Err(Error::InvalidArgument(format!("unsupported cycle type {cycle_type:?}")));
        }
        Ok(Self { degree, cycle_type })
    }

    pub fn identity(degree: usize) -> Result<Self> {
        Self::new(vec![1; degree])
    }

    pub fn transposition(degree: usize) -> Result<Self> {
        let mut c = vec![2];
        c.extend(std::iter::repeat_n(1, degree.saturating_sub(2)));
        Self::new(c)
    }

    pub fn three_cycle() -> Self {
        Self { degree: 3, cycle_type: vec![3] }
    }

    /// Label of the permutation `i -> images[i]`.
    pub fn of(images: &[usize]) -> Result<Self> {
        Self::new(cycles(images).ok_or_else(|| Error::InvalidArgument("not a permutation".into()))?)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn cycle_type(&self) -> &[usize] {
        &self.cycle_type
    }

    pub fn num_cycles(&self) -> usize {
        self.cycle_type.len()
    }
}

fn cycles(images: &[usize]) -> Option<Vec<usize>> {
    let n = images.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut len = 0;
        let mut x = s;
        while x < n && !seen[x] {
            seen[x] = true;
            x = images[x];
            len += 1;
        }
        if x != s {
            return None;
        }
        out.push(len);
    }
    Some(out)
}

/// Exact `Wg(sigma, d)` for degrees 2 (`d >= 2`) and 3 (`d >= 3`).
pub fn weingarten(label: &PermutationLabel, d: usize) -> Result<Rational> {
    let min_d = label.degree;
    if d < min_d {
        return Err(Error::InvalidArgument(format!("Weingarten function of degree {} needs d >= {min_d}", label.degree)));
    }
    let d = d as i128;
    let r = |n: i128, m: i128| Rational::new(n, m);
    Ok(match (label.degree, label.cycle_type.as_slice()) {
        (2, [1, 1]) => r(1, d * d - 1),
        (2, [2]) => r(-1, d * (d * d - 1)),
        (3, [1, 1, 1]) => r(d * d - 2, d * (d * d - 1) * (d * d - 4)),
        (3, [2, 1]) => r(-1, (d * d - 1) * (d * d - 4)),
        (3, [3]) => r(2, d * (d * d - 1) * (d * d - 4)),
        _ => unreachable!("labels are validated on construction"),
    })
}

pub fn weingarten_f64(label: &PermutationLabel, d: usize) -> Result<f64> {
    let w = weingarten(label, d)?;
    Ok(*w.numer() as f64 / *w.denom() as f64)
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q: Vec<usize> = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

fn compose(a: &[usize], b: &[usize]) -> Vec<usize> {
    b.iter().map(|&x| a[x]).collect()
}

fn inverse(a: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; a.len()];
    for (i, &x) in a.iter().enumerate() {
        inv[x] = i;
    }
    inv
}

/// `sum_tau Wg(sigma tau^{-1}, d) d^{#cycles(tau)}` for every `sigma`,
/// which must be `[sigma = id]`.
pub fn gram_identity(degree: usize, d: usize) -> Result<Vec<(Vec<usize>, Rational)>> {
    let perms = permutations(degree);
    perms
        .iter()
        .map(|sigma| {
            let mut acc = Rational::from_integer(0);
            for tau in &perms {
                let label = PermutationLabel::of(&compose(sigma, &inverse(tau)))?;
                let cyc = cycles(tau).expect("valid permutation").len() as u32;
                acc += weingarten(&label, d)? * Rational::from_integer((d as i128).pow(cyc));
            }
            Ok((sigma.clone(), acc))
        })
        .collect()
}

/// `E[tr(U A U^dag B) tr(U C U^dag D)]` from the degree-2 Weingarten expansion.
pub fn second_moment_exact(
    a: MatRef<'_, c64>,
    b: MatRef<'_, c64>,
    c: MatRef<'_, c64>,
    dm: MatRef<'_, c64>,
) -> Result<c64> {
    let d = a.nrows();
    let wg_e = weingarten_f64(&PermutationLabel::identity(2)?, d)?;
    let wg_t = weingarten_f64(&PermutationLabel::transposition(2)?, d)?;
    let tr = |m: MatRef<'_, c64>| linalg::trace(m);
    let (ta, tb, tc, td) = (tr(a), tr(b), tr(c), tr(dm));
    let tac = tr((a * c).as_ref());
    let tbd = tr((b * dm).as_ref());
    Ok((ta * tc * tb * td + tac * tbd) * wg_e + (ta * tc * tbd + tac * tb * td) * wg_t)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HaarMomentReport {
    pub d: usize,
    pub n_samples: usize,
    /// Largest `|mean - tr(A)/d delta_ij| / se` over entries (real and imaginary parts).
    pub first_moment_max_z: f64,
    /// Largest per-sample `max |U A U^dag - tr(A)/d 1|`.
    pub first_moment_max_sample_deviation: f64,
    pub second_moment_exact: [f64; 2],
    pub second_moment_mc: [f64; 2],
    pub second_moment_se: [f64; 2],
    pub second_moment_z: f64,
    pub max_z: f64,
}

fn ginibre(d: usize, rng: &mut impl rand::Rng) -> Mat<c64> {
    Mat::from_fn(d, d, |_, _| c64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
}

/// Deviation in standard errors, or 0/inf when the spread vanishes.
fn z(dev: f64, se: f64) -> f64 {
    if se > 0.0 {
        dev.abs() / se
    } else if dev.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Monte-Carlo check of the first and second Haar moments with the operators
/// given explicitly.
pub fn haar_moment_verify_with(
    ops: [&Mat<c64>; 4],
    n_samples: usize,
    master_seed: u64,
) -> Result<HaarMomentReport> {
    let d = ops[0].nrows();
    if !(2..=16).contains(&d) || ops.iter().any(|m| m.nrows() != d || m.ncols() != d) {
        return Err(Error::InvalidArgument("operators must be square with 2 <= d <= 16".into()));
    }
    if n_samples < 1000 {
        return Err(Error::InvalidArgument("need at least 1000 samples".into()));
    }
    let [a, b, c, dm] = ops;
    let target_a = linalg::trace(a.as_ref()) / d as f64;
    let per_sample: Vec<(Mat<c64>, c64, f64)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let u = haar_unitary(d, &mut SampleSeed::new(master_seed, s).stream(0));
            let uau = &u * a * u.adjoint();
            let ucu = &u * c * u.adjoint();
            let x = linalg::trace((&uau * b).as_ref()) * linalg::trace((&ucu * dm).as_ref());
            let mut dev = 0.0f64;
            for i in 0..d {
                for j in 0..d {
                    let want = if i == j { target_a } else { ZERO };
                    dev = dev.max((uau[(i, j)] - want).norm());
                }
            }
            (uau, x, dev)
        })
        .collect();
    let mut first_z = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let want = if i == j { target_a } else { ZERO };
            let re: Vec<f64> = per_sample.iter().map(|p| p.0[(i, j)].re).collect();
            let im: Vec<f64> = per_sample.iter().map(|p| p.0[(i, j)].im).collect();
            let (mr, mi) = (mean_se(&re), mean_se(&im));
            first_z = first_z.max(z(mr.mean - want.re, mr.se)).max(z(mi.mean - want.im, mi.se));
        }
    }
    let exact = second_moment_exact(a.as_ref(), b.as_ref(), c.as_ref(), dm.as_ref())?;
    let re: Vec<f64> = per_sample.iter().map(|p| p.1.re).collect();
    let im: Vec<f64> = per_sample.iter().map(|p| p.1.im).collect();
    let (mr, mi) = (mean_se(&re), mean_se(&im));
    let second_z = z(mr.mean - exact.re, mr.se).max(z(mi.mean - exact.im, mi.se));
    Ok(HaarMomentReport {
        d,
        n_samples,
        first_moment_max_z: first_z,
        first_moment_max_sample_deviation: per_sample.iter().map(|p| p.2).fold(0.0, f64::max),
        second_moment_exact: [exact.re, exact.im],
        second_moment_mc: [mr.mean, mi.mean],
        second_moment_se: [mr.se, mi.se],
        second_moment_z: second_z,
        max_z: first_z.max(second_z),
    })
}

/// Same check with Ginibre-random `A, B, C, D` drawn from a reserved stream.
pub fn haar_moment_verify(d: usize, n_samples: usize, master_seed: u64) -> Result<HaarMomentReport> {
    let mut rng = stream_rng(master_seed, u64::MAX, 0);
    let ops: Vec<Mat<c64>> = (0..4).map(|_| ginibre(d, &mut rng)).collect();
    haar_moment_verify_with([&ops[0], &ops[1], &ops[2], &ops[3]], n_samples, master_seed)
}

/// `tr(rho_inf^{U H U^dag} A)` for a pure state; costs `sum_k d_k^3`.
pub fn sampled_equilibrium_value(
    c: &Col<c64>,
    a: MatRef<'_, c64>,
    u: &crate::ensemble::BlockUnitary,
    levels: &EnergyLevels,
) -> f64 {
    let rotated = u.apply_raw(c, Direction::Adjoint);
    let classes = levels.classes();
    let mut acc = 0.0;
    for (blk, r) in u.blocks().iter().zip(u.ranges()) {
        let a_kk = a.submatrix(r.start, r.start, r.len(), r.len());
        let m = blk.adjoint() * a_kk * blk;
        for cls in classes.iter().filter(|cl| cl.start >= r.start && cl.end <= r.end) {
            for i in cls.clone() {
                for j in cls.clone() {
                    // rho_ij = c'_i conj(c'_j), contracted with M_ji
                    acc += (rotated[i] * rotated[j].conj() * m[(j - r.start, i - r.start)]).re;
                }
            }
        }
    }
    acc
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquilibriumVariance {
    pub d_min: usize,
    pub n_samples: usize,
    pub mean: f64,
    pub variance: f64,
    /// `variance * d_min`.
    pub scaled: f64,
}

pub fn equilibrium_variance(
    psi: &StateVector,
    a: &Observable,
    levels: &EnergyLevels,
    partition: &WindowPartition,
    n_samples: usize,
    master_seed: u64,
) -> Result<EquilibriumVariance> {
    psi.require(Basis::Eigen)?;
    a.require(Basis::Eigen)?;
    partition.check_levels(levels)?;
    if psi.dim() != levels.dim() || a.matrix().nrows() != levels.dim() {
        return Err(Error::DimensionMismatch { expected: levels.dim(), got: psi.dim() });
    }
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let am = a.matrix().as_ref();
    let values: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let u = sample_block_haar(partition, SampleSeed::new(master_seed, s));
            sampled_equilibrium_value(psi.amplitudes(), am, &u, levels)
        })
        .collect();
    let variance = sample_variance(&values);
    let d_min = partition.min_dim();
    Ok(EquilibriumVariance { d_min, n_samples, mean: mean_se(&values).mean, variance, scaled: variance * d_min as f64 })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SecondMomentCheck {
    pub first: EquilibriumVariance,
    pub second: EquilibriumVariance,
    /// Ratio of `variance * d_min` between the two partitions (at least 1).
    pub constant_ratio: f64,
    /// Whether `variance * d_min` agrees within a factor 3.
    pub stable: bool,
}

pub const SCALING_FACTOR_TOLERANCE: f64 = 3.0;

/// Fluctuations of `tr(rho_inf A)` should scale like `1 / d_min`; compares
/// `variance * d_min` across two partitions.
pub fn equilibrium_second_moment_check(
    psi: &StateVector,
    a: &Observable,
    levels: &EnergyLevels,
    partitions: [&WindowPartition; 2],
    n_samples: usize,
    master_seed: u64,
) -> Result<SecondMomentCheck> {
    let first = equilibrium_variance(psi, a, levels, partitions[0], n_samples, master_seed)?;
    let second = equilibrium_variance(psi, a, levels, partitions[1], n_samples, master_seed.wrapping_add(1))?;
    let (x, y) = (first.scaled, second.scaled);
    let constant_ratio = if x == 0.0 && y == 0.0 { 1.0 } else { x.max(y) / x.min(y) };
    Ok(SecondMomentCheck { first, second, constant_ratio, stable: constant_ratio <= SCALING_FACTOR_TOLERANCE })
}
