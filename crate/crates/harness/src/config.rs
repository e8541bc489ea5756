//! Experiment configuration: JSON schema, parameter policies and the stable
//! config hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use thermalab_core::basis::{Basis, StateVector};
use thermalab_core::dynamics::TimeGrid;
use thermalab_core::hamiltonian::{ModelSpec, Pauli};
use thermalab_core::lattice::LatticeSpec;

use crate::error::{HarnessError, Result};

/// Window width policy. Widths are absolute energies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaPolicy {
    Absolute { value: f64 },
    /// `factor * sigma` with `sigma` the energy standard deviation of the
    /// Gibbs state at the resolved inverse temperature.
    SigmaRelative { factor: f64 },
    /// `prefactor * N^((1 - alpha)/(D + 1) - kappa)`.
    NPower { prefactor: f64, alpha: f64, kappa: f64 },
    /// One window holding the whole spectrum.
    SingleWindow,
    /// One window per degeneracy class (the ensemble acts trivially).
    PerClass,
}

impl DeltaPolicy {
    pub fn resolve(&self, n_sites: usize, dimension: usize, sigma: f64) -> Result<Option<f64>> {
        let v = match *self {
            DeltaPolicy::Absolute { value } => Some(value),
            DeltaPolicy::SigmaRelative { factor } => Some(factor * sigma),
            DeltaPolicy::NPower { prefactor, alpha, kappa } => {
                if !(0.0..1.0).contains(&alpha) {
                    return Err(HarnessError::Config(format!("alpha = {alpha} must lie in [0, 1)")));
                }
                let exponent = (1.0 - alpha) / (dimension as f64 + 1.0) - kappa;
                Some(prefactor * (n_sites as f64).powf(exponent))
            }
            DeltaPolicy::SingleWindow | DeltaPolicy::PerClass => None,
        };
        if let Some(x) = v {
            if !(x > 0.0 && x.is_finite()) {
                return Err(HarnessError::Config(format!("window width resolved to {x}")));
            }
        }
        Ok(v)
    }
}

/// Half-width of the energy shell `[E - Delta, E + Delta)` used for the
/// micro-canonical split. Always resolved to a whole number of windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShellPolicy {
    Windows { count: usize },
    /// `factor * sigma`, rounded up to whole windows.
    SigmaRelative { factor: f64 },
}

impl ShellPolicy {
    pub fn resolve(&self, delta: f64, sigma: f64) -> Result<f64> {
        let m = match *self {
            ShellPolicy::Windows { count } => count,
            ShellPolicy::SigmaRelative { factor } => {
                let x = factor * sigma / delta;
                if !(x > 0.0 && x.is_finite()) {
                    return Err(HarnessError::Config(format!("shell half-width resolved to {x} windows")));
                }
                x.ceil() as usize
            }
        };
        if m == 0 {
            return Err(HarnessError::Config("shell must span at least one window".into()));
        }
        Ok(m as f64 * delta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaPolicy {
    Explicit { value: f64 },
    /// Match the mean energy of the initial state.
    FromState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// Computational product state whose energy is closest to `tr(H)/dim`
    /// (lowest index on ties).
    MidSpectrumProduct,
    /// Alternating `0101...` pattern.
    Neel,
    /// Explicit digits, site 0 first.
    Product { digits: Vec<usize> },
}

impl InitialState {
    pub fn build(&self, lattice: &LatticeSpec, diagonal: &[f64], mean_energy: f64) -> Result<StateVector> {
        let dim = diagonal.len();
        let n = lattice.num_sites();
        let d = lattice.local_dim;
        let from_digits = |digits: &[usize]| -> Result<StateVector> {
            if digits.len() != n || digits.iter().any(|&x| x >= d) {
                return Err(HarnessError::Config(format!("product state needs {n} digits below {d}")));
            }
            let idx = digits.iter().fold(0usize, |acc, &x| acc * d + x);
            Ok(StateVector::basis_state(Basis::Computational, dim, idx))
        };
        match self {
            InitialState::MidSpectrumProduct => {
                let mut best = 0;
                for (i, &e) in diagonal.iter().enumerate() {
                    if (e - mean_energy).abs() < (diagonal[best] - mean_energy).abs() {
                        best = i;
                    }
                }
                Ok(StateVector::basis_state(Basis::Computational, dim, best))
            }
            InitialState::Neel => from_digits(&(0..n).map(|i| i % 2).collect::<Vec<_>>()),
            InitialState::Product { digits } => from_digits(digits),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeGridSpec {
    Uniform { t_max: f64, points: usize },
    Logarithmic { t_min: f64, t_max: f64, points: usize },
    Explicit { times: Vec<f64> },
}

impl TimeGridSpec {
    pub fn build(&self) -> Result<TimeGrid> {
        Ok(match self {
            TimeGridSpec::Uniform { t_max, points } => TimeGrid::uniform(*t_max, *points)?,
            TimeGridSpec::Logarithmic { t_min, t_max, points } => TimeGrid::logarithmic(*t_min, *t_max, *points)?,
            TimeGridSpec::Explicit { times } => TimeGrid::new(times.clone())?,
        })
    }
}

/// Single-site probe observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub site: usize,
    pub pauli: PauliLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PauliLabel {
    X,
    Y,
    Z,
}

impl From<PauliLabel> for Pauli {
    fn from(p: PauliLabel) -> Self {
        match p {
            PauliLabel::X => Pauli::X,
            PauliLabel::Y => Pauli::Y,
            PauliLabel::Z => Pauli::Z,
        }
    }
}

/// Parameters of the local-thermality sufficient condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub epsilon: f64,
    /// Manual correlation length; the fitted value is used when absent.
    #[serde(default)]
    pub xi: Option<f64>,
    /// Amplitude exponent used with a manual `xi`.
    #[serde(default)]
    pub z: f64,
}

impl Default for ConditionSpec {
    fn default() -> Self {
        Self { epsilon: 0.1, xi: None, z: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Side lengths to scan; defaults to the model's own side.
    #[serde(default)]
    pub sizes: Vec<usize>,
    pub delta: DeltaPolicy,
    #[serde(default = "default_shell")]
    pub shell: ShellPolicy,
    pub beta: BetaPolicy,
    #[serde(default = "default_initial_state")]
    pub initial_state: InitialState,
    #[serde(default = "default_l")]
    pub l: Vec<usize>,
    #[serde(default = "default_time_grid")]
    pub time_grid: TimeGridSpec,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Samples for the single-window reference runs.
    #[serde(default = "default_reference_samples")]
    pub reference_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_observable")]
    pub observable: ObservableSpec,
    #[serde(default)]
    pub condition: ConditionSpec,
    /// Sigma factors scanned by the sweep command.
    #[serde(default = "default_sweep")]
    pub sweep_factors: Vec<f64>,
    /// Block dimensions for the Haar moment checks.
    #[serde(default = "default_moment_dims")]
    pub moment_dims: Vec<usize>,
    #[serde(default = "default_moment_samples")]
    pub moment_samples: usize,
    /// Largest site count for which dense-state diagnostics (correlation fit,
    /// dynamics distance) are attempted.
    #[serde(default = "default_dense_limit")]
    pub dense_site_limit: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_shell() -> ShellPolicy {
    ShellPolicy::Windows { count: 2 }
}
fn default_initial_state() -> InitialState {
    InitialState::MidSpectrumProduct
}
fn default_l() -> Vec<usize> {
    vec![1]
}
fn default_time_grid() -> TimeGridSpec {
    TimeGridSpec::Uniform { t_max: 10.0, points: 51 }
}
fn default_samples() -> usize {
    20
}
fn default_reference_samples() -> usize {
    5
}
fn default_observable() -> ObservableSpec {
    ObservableSpec { site: 0, pauli: PauliLabel::Z }
}
fn default_sweep() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}
fn default_moment_dims() -> Vec<usize> {
    vec![2, 4, 8]
}
fn default_moment_samples() -> usize {
    20_000
}
fn default_dense_limit() -> usize {
    10
}

impl ExperimentConfig {
    /// Default chain, `delta = sigma/2`, `beta` from the state.
    pub fn default_chain(sizes: Vec<usize>) -> Self {
        let first = sizes.first().copied().unwrap_or(8);
        Self {
            model: ModelSpec::default_chain(first),
            sizes,
            delta: DeltaPolicy::SigmaRelative { factor: 0.5 },
            shell: default_shell(),
            beta: BetaPolicy::FromState,
            initial_state: default_initial_state(),
            l: default_l(),
            time_grid: default_time_grid(),
            samples: default_samples(),
            reference_samples: default_reference_samples(),
            seed: 0,
            observable: default_observable(),
            condition: ConditionSpec::default(),
            sweep_factors: default_sweep(),
            moment_dims: default_moment_dims(),
            moment_samples: default_moment_samples(),
            dense_site_limit: default_dense_limit(),
            output_dir: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolve everything that can be checked without building a spectrum.
    pub fn validate(&self) -> Result<()> {
        self.model.lattice.validate()?;
        for lat in self.lattices() {
            lat.validate()?;
            if self.observable.site >= lat.num_sites() {
                return Err(HarnessError::Config(format!(
                    "observable site {} outside a lattice of {} sites",
                    self.observable.site,
                    lat.num_sites()
                )));
            }
            if self.l.iter().any(|&l| l == 0 || l > lat.side) {
                return Err(HarnessError::Config(format!("cube sides {:?} must lie in 1..={}", self.l, lat.side)));
            }
        }
        if self.samples == 0 {
            return Err(HarnessError::Config("samples must be positive".into()));
        }
        if self.l.is_empty() {
            return Err(HarnessError::Config("need at least one cube side".into()));
        }
        self.time_grid.build()?;
        self.delta.resolve(self.model.lattice.num_sites(), self.model.lattice.dimension, 1.0)?;
        if let BetaPolicy::Explicit { value } = self.beta {
            if !value.is_finite() {
                return Err(HarnessError::Config("beta must be finite".into()));
            }
        }
        if !(self.condition.epsilon > 0.0) {
            return Err(HarnessError::Config("epsilon must be positive".into()));
        }
        Ok(())
    }

    /// One lattice per requested side, sharing the model's geometry.
    pub fn lattices(&self) -> Vec<LatticeSpec> {
        if self.sizes.is_empty() {
            return vec![self.model.lattice.clone()];
        }
        self.sizes.iter().map(|&side| LatticeSpec { side, ..self.model.lattice.clone() }).collect()
    }

    pub fn model_for(&self, lattice: &LatticeSpec) -> ModelSpec {
        self.model.with_lattice(lattice.clone())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// SHA-256 of the canonical JSON form (object keys sorted), hex encoded.
    /// The output directory does not enter the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        canonical_hash(&c)
    }
}

/// Hash of any serializable value through sorted-key JSON.
pub fn canonical_hash<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("config values serialize");
    let text = serde_json::to_string(&v).expect("json values serialize");
    hex(&Sha256::digest(text.as_bytes()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_field_order() {
        let a = r#"{"model":{"lattice":{"dimension":1,"side":4,"local_dim":2,"boundary":"Open"},
            "model":{"kind":"MixedFieldIsing","j":1.0,"hx":1.05,"hz":0.5}},
            "delta":{"kind":"sigma_relative","factor":0.5},"beta":{"kind":"from_state"},"seed":3}"#;
        let b = r#"{"seed":3,"beta":{"kind":"from_state"},"delta":{"factor":0.5,"kind":"sigma_relative"},
            "model":{"model":{"hz":0.5,"hx":1.05,"j":1.0,"kind":"MixedFieldIsing"},
            "lattice":{"boundary":"Open","local_dim":2,"side":4,"dimension":1}}}"#;
        let ca: ExperimentConfig = serde_json::from_str(a).unwrap();
        let cb: ExperimentConfig = serde_json::from_str(b).unwrap();
        assert_eq!(ca.hash(), cb.hash());
        assert_ne!(ca.hash(), ca.clone().with_seed(4).hash());
    }

    #[test]
    fn n_power_policy() {
        let p = DeltaPolicy::NPower { prefactor: 2.0, alpha: 0.5, kappa: 0.0 };
        let d = p.resolve(16, 1, 1.0).unwrap().unwrap();
        assert!((d - 2.0 * 16f64.powf(0.25)).abs() < 1e-12);
        assert!(DeltaPolicy::NPower { prefactor: 1.0, alpha: 1.0, kappa: 0.0 }.resolve(4, 1, 1.0).is_err());
    }

    #[test]
    fn shell_rounds_up_to_windows() {
        let s = ShellPolicy::SigmaRelative { factor: 1.0 };
        assert_eq!(s.resolve(0.4, 1.0).unwrap(), 3.0 * 0.4);
        assert_eq!(ShellPolicy::Windows { count: 2 }.resolve(0.5, 9.0).unwrap(), 1.0);
    }

    #[test]
    fn mid_spectrum_product_picks_closest() {
        let lat = LatticeSpec::chain(2, thermalab_core::lattice::Boundary::Open);
        let s = InitialState::MidSpectrumProduct.build(&lat, &[3.0, -0.5, 0.5, 1.0], 0.0).unwrap();
        assert_eq!(s.amplitudes()[1].re, 1.0);
        let neel = InitialState::Neel.build(&lat, &[0.0; 4], 0.0).unwrap();
        assert_eq!(neel.amplitudes()[1].re, 1.0);
    }
}
