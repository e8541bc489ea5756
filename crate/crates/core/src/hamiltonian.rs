//! Dense assembly of local spin Hamiltonians, embedded observables and
//! lattice translation operators.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeSpec, Region, DEFAULT_DIM_GUARD};
use crate::linalg::{self, c64, ONE, ZERO};

/// Dense matrix checked to be Hermitian up to `1e-12` relative.
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    matrix: Mat<c64>,
    deviation: f64,
}

pub const HERMITIAN_RTOL: f64 = 1e-12;

impl HermitianOperator {
    pub fn new(matrix: Mat<c64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        let deviation = linalg::hermitian_deviation(matrix.as_ref());
        let allowed = HERMITIAN_RTOL * linalg::max_abs(matrix.as_ref());
        if deviation > allowed {
            return Err(Error::NotHermitian { deviation, allowed });
        }
        Ok(Self { matrix, deviation })
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        Self { matrix: linalg::diagonal(d), deviation: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn as_ref(&self) -> MatRef<'_, c64> {
        self.matrix.as_ref()
    }

    /// Recorded `max |M - M^dag|`.
    pub fn deviation(&self) -> f64 {
        self.deviation
    }

    pub fn operator_norm(&self) -> Result<f64> {
        linalg::spectral_norm_hermitian(self.as_ref())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> Mat<c64> {
        let i = c64::new(0.0, 1.0);
        let e = match self {
            Pauli::I => [ONE, ZERO, ZERO, ONE],
            Pauli::X => [ZERO, ONE, ONE, ZERO],
            Pauli::Y => [ZERO, -i, i, ZERO],
            Pauli::Z => [ONE, ZERO, ZERO, -ONE],
        };
        Mat::from_fn(2, 2, |r, c| e[2 * r + c])
    }
}

/// Serialized Hermitian block: rows of `[re, im]` pairs.
pub type ComplexRows = Vec<Vec<[f64; 2]>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomTerm {
    pub sites: Region,
    pub block: ComplexRows,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelKind {
    /// `J sum_<ij> Z_i Z_j + hx sum_i X_i + hz sum_i Z_i`
    MixedFieldIsing { j: f64, hx: f64, hz: f64 },
    /// `J sum_<ij> (X X + Y Y + delta Z Z) + hz sum_i Z_i`
    HeisenbergXxz { j: f64, delta: f64, hz: f64 },
    CustomTerms { terms: Vec<CustomTerm> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub lattice: LatticeSpec,
    pub model: ModelKind,
    /// Declared locality radius; terms wider than this are rejected.
    #[serde(default)]
    pub locality: Option<usize>,
}

pub const DEFAULT_ISING: ModelKind = ModelKind::MixedFieldIsing { j: 1.0, hx: 1.05, hz: 0.5 };

impl ModelSpec {
    /// Open mixed-field Ising chain with `(J, hx, hz) = (1, 1.05, 0.5)`.
    pub fn default_chain(n: usize) -> Self {
        Self { lattice: LatticeSpec::chain(n, Boundary::Open), model: DEFAULT_ISING, locality: None }
    }

    pub fn with_lattice(&self, lattice: LatticeSpec) -> Self {
        Self { lattice, ..self.clone() }
    }

    /// Multiply every coupling by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let model = match &self.model {
            ModelKind::MixedFieldIsing { j, hx, hz } => {
                ModelKind::MixedFieldIsing { j: j * lambda, hx: hx * lambda, hz: hz * lambda }
            }
            ModelKind::HeisenbergXxz { j, delta, hz } => {
                ModelKind::HeisenbergXxz { j: j * lambda, delta: *delta, hz: hz * lambda }
            }
            ModelKind::CustomTerms { terms } => ModelKind::CustomTerms {
                terms: terms
                    .iter()
                    .map(|t| CustomTerm {
                        sites: t.sites.clone(),
                        block: t
                            .block
                            .iter()
                            .map(|row| row.iter().map(|[a, b]| [a * lambda, b * lambda]).collect())
                            .collect(),
                    })
                    .collect(),
            },
        };
        Self { model, ..self.clone() }
    }
}

/// One local term `coefficient * block` with `||block|| = 1`.
#[derive(Clone, Debug)]
pub struct Term {
    pub support: Region,
    pub coefficient: f64,
    pub block: Mat<c64>,
    pub label: String,
}

#[derive(Clone, Debug)]
pub struct BuiltHamiltonian {
    pub operator: HermitianOperator,
    pub terms: Vec<Term>,
    /// Largest support diameter among the terms.
    pub locality: usize,
}

/// Nearest-neighbour bonds; periodic wrap bonds only when `n > 2` so that no
/// bond is counted twice.
pub fn nearest_neighbour_bonds(lattice: &LatticeSpec) -> Vec<(usize, usize)> {
    let mut bonds = Vec::new();
    let n = lattice.side;
    for s in 0..lattice.num_sites() {
        let c = lattice.coords(s);
        for axis in 0..lattice.dimension {
            let wraps = c[axis] + 1 == n;
            let include = if wraps { lattice.boundary == Boundary::Periodic && n > 2 } else { true };
            if include {
                let mut c2 = c.clone();
                c2[axis] = (c[axis] + 1) % n;
                bonds.push((s, lattice.site(&c2)));
            }
        }
    }
    bonds
}

fn pauli_string(ops: &[Pauli]) -> Mat<c64> {
    ops.iter().fold(linalg::identity(1), |acc, p| linalg::kron(acc.as_ref(), p.matrix().as_ref()))
}

fn rows_to_mat(rows: &ComplexRows) -> Result<Mat<c64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("custom block must be square".into()));
    }
    Ok(Mat::from_fn(n, n, |i, j| c64::new(rows[i][j][0], rows[i][j][1])))
}

fn raw_terms(spec: &ModelSpec) -> Result<Vec<(Region, Mat<c64>, String)>> {
    let lat = &spec.lattice;
    let mut raw = Vec::new();
    let two_site = |a: Pauli, b: Pauli| pauli_string(&[a, b]);
    match &spec.model {
        ModelKind::MixedFieldIsing { j, hx, hz } => {
            require_qubits(lat)?;
            for (a, b) in nearest_neighbour_bonds(lat) {
                let m = two_site(Pauli::Z, Pauli::Z);
                raw.push((Region::new(vec![a, b])?, scale(&m, *j), format!("ZZ({a},{b})")));
            }
            for s in 0..lat.num_sites() {
                raw.push((Region::new(vec![s])?, scale(&Pauli::X.matrix(), *hx), format!("X({s})")));
                raw.push((Region::new(vec![s])?, scale(&Pauli::Z.matrix(), *hz), format!("Z({s})")));
            }
        }
        ModelKind::HeisenbergXxz { j, delta, hz } => {
            require_qubits(lat)?;
            for (a, b) in nearest_neighbour_bonds(lat) {
                let m = &two_site(Pauli::X, Pauli::X)
                    + &two_site(Pauli::Y, Pauli::Y)
                    + &scale(&two_site(Pauli::Z, Pauli::Z), *delta);
                raw.push((Region::new(vec![a, b])?, scale(&m, *j), format!("XXZ({a},{b})")));
            }
            for s in 0..lat.num_sites() {
                raw.push((Region::new(vec![s])?, scale(&Pauli::Z.matrix(), *hz), format!("Z({s})")));
            }
        }
        ModelKind::CustomTerms { terms } => {
            for (k, t) in terms.iter().enumerate() {
                let region = Region::on(lat, t.sites.sites().to_vec())?;
                let m = rows_to_mat(&t.block)?;
                let want = lat.local_dim.pow(region.len() as u32);
                if m.nrows() != want {
                    return Err(Error::DimensionMismatch { expected: want, got: m.nrows() });
                }
                HermitianOperator::new(m.clone())?;
                raw.push((region, m, format!("custom#{k}")));
            }
        }
    }
    for (_, m, _) in &raw {
        if m.as_ref().norm_max().is_nan() || !m.as_ref().norm_max().is_finite() {
            return Err(Error::InvalidArgument("couplings must be finite".into()));
        }
    }
    Ok(raw)
}

fn require_qubits(lat: &LatticeSpec) -> Result<()> {
    if lat.local_dim != 2 {
        return Err(Error::Unsupported("spin-1/2 models need local_dim = 2".into()));
    }
    Ok(())
}

fn scale(m: &Mat<c64>, s: f64) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

pub fn build_hamiltonian(spec: &ModelSpec) -> Result<BuiltHamiltonian> {
    build_hamiltonian_guarded(spec, DEFAULT_DIM_GUARD)
}

pub fn build_hamiltonian_guarded(spec: &ModelSpec, guard: usize) -> Result<BuiltHamiltonian> {
    spec.lattice.validate()?;
    let dim = spec.lattice.hilbert_dim(guard)?;
    let mut h = Mat::<c64>::zeros(dim, dim);
    let mut terms = Vec::new();
    let mut locality = 0;
    for (support, m, label) in raw_terms(spec)? {
        let norm = linalg::spectral_norm_hermitian(m.as_ref())?;
        let diameter = support.diameter(&spec.lattice)?;
        if let Some(k) = spec.locality {
            if diameter > k {
                return Err(Error::InvalidArgument(format!(
                    "term {label} has diameter {diameter} above declared locality {k}"
                )));
            }
        }
        locality = locality.max(diameter);
        embed_add(&mut h, m.as_ref(), &support, &spec.lattice, 1.0);
        let block = if norm > 0.0 { scale(&m, 1.0 / norm) } else { m };
        terms.push(Term { support, coefficient: norm, block, label });
    }
    let operator = HermitianOperator::new(h)?;
    Ok(BuiltHamiltonian { operator, terms, locality })
}

/// Adds `scale * (block on region) (x) identity` into `h`.
pub(crate) fn embed_add(
    h: &mut Mat<c64>,
    block: MatRef<'_, c64>,
    region: &Region,
    lattice: &LatticeSpec,
    scale: f64,
) {
    let d = lattice.local_dim;
    let n_sites = lattice.num_sites();
    let dim = h.nrows();
    let r = region.len();
    let weights: Vec<usize> = region.sites().iter().map(|&s| d.pow((n_sites - 1 - s) as u32)).collect();
    let local_dim = d.pow(r as u32);
    // Offset contributed by local index b on the region's digits.
    let offsets: Vec<usize> = (0..local_dim)
        .map(|b| {
            let mut rem = b;
            let mut off = 0;
            for m in (0..r).rev() {
                off += (rem % d) * weights[m];
                rem /= d;
            }
            off
        })
        .collect();
    for i in 0..dim {
        let mut a = 0;
        let mut base = i;
        for &w in &weights {
            let digit = (i / w) % d;
            a = a * d + digit;
            base -= digit * w;
        }
        for (b, off) in offsets.iter().enumerate() {
            let v = block[(a, b)];
            if v != ZERO {
                h[(i, base + off)] += v * scale;
            }
        }
    }
}

/// Operator acting as `op_block` on `region` and as identity elsewhere.
pub fn embed_observable(
    op_block: &HermitianOperator,
    region: &Region,
    lattice: &LatticeSpec,
) -> Result<HermitianOperator> {
    embed_observable_guarded(op_block, region, lattice, DEFAULT_DIM_GUARD)
}

pub fn embed_observable_guarded(
    op_block: &HermitianOperator,
    region: &Region,
    lattice: &LatticeSpec,
    guard: usize,
) -> Result<HermitianOperator> {
    let region = Region::on(lattice, region.sites().to_vec())?;
    let want = lattice.local_dim.pow(region.len() as u32);
    if op_block.dim() != want {
        return Err(Error::DimensionMismatch { expected: want, got: op_block.dim() });
    }
    let dim = lattice.hilbert_dim(guard)?;
    let mut h = Mat::<c64>::zeros(dim, dim);
    embed_add(&mut h, op_block.as_ref(), &region, lattice, 1.0);
    Ok(HermitianOperator { matrix: h, deviation: op_block.deviation() })
}

/// Basis permutation `T|x> = |images[x]>` induced by a site permutation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SitePermutation {
    images: Vec<usize>,
}

impl SitePermutation {
    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn dim(&self) -> usize {
        self.images.len()
    }

    pub fn matrix(&self) -> Mat<c64> {
        let n = self.images.len();
        let mut m = Mat::<c64>::zeros(n, n);
        for (x, &y) in self.images.iter().enumerate() {
            m[(y, x)] = ONE;
        }
        m
    }

    pub fn compose(&self, other: &SitePermutation) -> SitePermutation {
        SitePermutation { images: other.images.iter().map(|&y| self.images[y]).collect() }
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &y)| i == y)
    }

    /// `<nu|T|nu>` for a column vector.
    pub fn diagonal_element(&self, v: faer::ColRef<'_, c64>) -> c64 {
        self.images.iter().enumerate().fold(ZERO, |acc, (x, &y)| acc + v[y].conj() * v[x])
    }
}

/// Cyclic shift by one site along `axis`; only defined for periodic lattices.
pub fn translation_operator(lattice: &LatticeSpec, axis: usize) -> Result<SitePermutation> {
    translation_operator_guarded(lattice, axis, DEFAULT_DIM_GUARD)
}

pub fn translation_operator_guarded(lattice: &LatticeSpec, axis: usize, guard: usize) -> Result<SitePermutation> {
    if lattice.boundary != Boundary::Periodic {
        return Err(Error::Unsupported("translation operator requires periodic boundary".into()));
    }
    if axis >= lattice.dimension {
        return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
    }
    let dim = lattice.hilbert_dim(guard)?;
    let n_sites = lattice.num_sites();
    let d = lattice.local_dim;
    let mut shift = vec![0i64; lattice.dimension];
    shift[axis] = 1;
    let site_image: Vec<usize> = (0..n_sites).map(|s| lattice.translate(s, &shift).unwrap()).collect();
    let w: Vec<usize> = (0..n_sites).map(|s| d.pow((n_sites - 1 - s) as u32)).collect();
    let images = (0..dim)
        .map(|x| (0..n_sites).map(|s| ((x / w[s]) % d) * w[site_image[s]]).sum())
        .collect();
    Ok(SitePermutation { images })
}
