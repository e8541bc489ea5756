//! Top-level pipelines. Each command fills a [`Recorder`] with tables and
//! metrics; writing them out is left to the caller.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use faer::Mat;
use rayon::prelude::*;

use thermalab_core::basis::{Basis, DensityOperator, Observable, StateVector};
use thermalab_core::dynamics::{
    dynamics_distance_bound, expected_dynamics, mc_dynamics_concentration, relaxation_bound, window_dynamics,
    PROPAGATOR_DIM_GUARD,
};
use thermalab_core::ensemble::{conjugate_hamiltonian, sample_block_haar, BlockUnitary};
use thermalab_core::equilibrium::{
    dephase_pure, dephase_under_sample, energy_tail_report, mc_energy_concentration, participation_statistics,
    probabilities, EquilibriumState, TailBoundParams,
};
use thermalab_core::gibbs::{
    berry_esseen_error, check_indistinguishability_condition, fit_correlation_length, gibbs_state, solve_beta,
    GibbsData, XiSource,
};
use thermalab_core::hamiltonian::{build_hamiltonian, embed_observable, HermitianOperator, ModelSpec, Pauli};
use thermalab_core::lattice::{enumerate_hypercubes, LatticeSpec, Region};
use thermalab_core::linalg::{self, c64};
use thermalab_core::locality::{local_distinguishability, FactoredState, LocalState, ReducedState};
use thermalab_core::microcanonical::decompose_agme;
use thermalab_core::rng::SampleSeed;
use thermalab_core::spectrum::{diagonalize, EnergyLevels, Spectrum};
use thermalab_core::stats::{linear_fit, mean_se, median, pairwise_sum, z_score};
use thermalab_core::weingarten::{
    equilibrium_second_moment_check, haar_moment_verify, permutations, weingarten, PermutationLabel,
};
use thermalab_core::windows::{partition_spectrum, spectral_assumption_report, WindowPartition};

use crate::cache::SpectrumCache;
use crate::config::{BetaPolicy, DeltaPolicy, ExperimentConfig};
use crate::error::{HarnessError, Result, StageContext};
use crate::report::{Recorder, Table, Unit};

/// Samples are run in parallel only below this dimension, which bounds the
/// number of dense `dim x dim` factors alive at once.
pub const PARALLEL_SAMPLE_MAX_DIM: usize = 1 << 10;

/// Solver tolerance per site for `E_beta = E_target`.
pub const BETA_TOL_PER_SITE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Sample,
    Equilibrium,
    Thermality,
    Dynamics,
    Moments,
    Sweep,
    CheckAssumptions,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Spectrum,
        Command::Sample,
        Command::Equilibrium,
        Command::Thermality,
        Command::Dynamics,
        Command::Moments,
        Command::Sweep,
        Command::CheckAssumptions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Sample => "sample",
            Command::Equilibrium => "equilibrium",
            Command::Thermality => "thermality",
            Command::Dynamics => "dynamics",
            Command::Moments => "moments",
            Command::Sweep => "sweep",
            Command::CheckAssumptions => "check-assumptions",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Context {
    pub cache: Option<PathBuf>,
}

/// Everything derived from one lattice size before sampling starts.
pub struct System {
    pub lattice: LatticeSpec,
    pub model: ModelSpec,
    pub h: HermitianOperator,
    pub term_norm_per_site: f64,
    pub spectrum: Spectrum,
    pub cache_hit: bool,
    /// Initial state in the eigenbasis.
    pub c: StateVector,
    pub state_energy: f64,
    pub state_std: f64,
    pub gibbs: GibbsData,
    pub delta: Option<f64>,
    pub partition: WindowPartition,
}

impl System {
    pub fn n_sites(&self) -> usize {
        self.lattice.num_sites()
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn label(&self) -> String {
        format!("N={}", self.n_sites())
    }

    pub fn levels(&self) -> &EnergyLevels {
        self.spectrum.levels()
    }

    /// Partition for an explicit width, or the configured one.
    pub fn partition_for(&self, policy: &DeltaPolicy) -> Result<(Option<f64>, WindowPartition)> {
        let delta = policy.resolve(self.n_sites(), self.lattice.dimension, self.gibbs.std())?;
        let part = match (policy, delta) {
            (DeltaPolicy::SingleWindow, _) => WindowPartition::single_window(self.levels()),
            (DeltaPolicy::PerClass, _) => WindowPartition::per_class(self.levels()),
            (_, Some(d)) => partition_spectrum(self.levels(), d, None).stage("partition")?,
            (_, None) => unreachable!("width policies always resolve"),
        };
        Ok((delta, part))
    }
}

pub fn build_system(cfg: &ExperimentConfig, lattice: &LatticeSpec, ctx: &Context, rec: &mut Recorder) -> Result<System> {
    let model = cfg.model_for(lattice);
    let tag = format!("N={}", lattice.num_sites());
    let t = Instant::now();
    let built = build_hamiltonian(&model).stage("build")?;
    rec.record_time(&format!("build[{tag}]"), t.elapsed().as_secs_f64());
    let mut per_site = vec![0.0; lattice.num_sites()];
    for term in &built.terms {
        for &s in term.support.sites() {
            per_site[s] += term.coefficient.abs();
        }
    }
    let term_norm_per_site = per_site.iter().copied().fold(0.0, f64::max);
    let h = built.operator;

    let cache = ctx.cache.as_ref().map(SpectrumCache::new).transpose()?;
    let t = Instant::now();
    let loaded = match &cache {
        Some(c) => c.load(&model, &h)?,
        None => None,
    };
    let cache_hit = loaded.is_some();
    if cache_hit {
        rec.record_time(&format!("cache_load[{tag}]"), t.elapsed().as_secs_f64());
    }
    let t = Instant::now();
    let spectrum = match loaded {
        Some(s) => s,
        None => diagonalize(&h).stage("diagonalize")?,
    };
    let eig_seconds = if cache_hit { 0.0 } else { t.elapsed().as_secs_f64() };
    rec.record_time(&format!("eigensolver[{tag}]"), eig_seconds);
    if let (Some(c), false) = (&cache, cache_hit) {
        c.store(&model, &spectrum)?;
    }

    let dim = spectrum.dim();
    let diag: Vec<f64> = (0..dim).map(|i| h.matrix()[(i, i)].re).collect();
    let psi = cfg.initial_state.build(lattice, &diag, spectrum.levels().mean())?;
    let c = spectrum.vector_to_eigen(&psi).stage("initial state")?;
    let p = probabilities(c.amplitudes());
    let e = spectrum.energies();
    let state_energy = pairwise_sum(&p.iter().zip(e).map(|(p, e)| p * e).collect::<Vec<_>>());
    let second = pairwise_sum(&p.iter().zip(e).map(|(p, e)| p * (e - state_energy).powi(2)).collect::<Vec<_>>());
    let beta = match cfg.beta {
        BetaPolicy::Explicit { value } => value,
        BetaPolicy::FromState => {
            solve_beta(spectrum.levels(), state_energy, BETA_TOL_PER_SITE * lattice.num_sites() as f64)
                .stage("solve beta")?
        }
    };
    let gibbs = gibbs_state(spectrum.levels(), beta).stage("gibbs")?;
    let mut sys = System {
        lattice: lattice.clone(),
        model,
        h,
        term_norm_per_site,
        spectrum,
        cache_hit,
        c,
        state_energy,
        state_std: second.max(0.0).sqrt(),
        gibbs,
        delta: None,
        partition: WindowPartition::single_window(&EnergyLevels::new(vec![0.0], 1e-9)?),
    };
    let (delta, partition) = sys.partition_for(&cfg.delta)?;
    sys.delta = delta;
    sys.partition = partition;
    Ok(sys)
}

/// Reduced states computed once and reused across samples.
pub struct PrecomputedLocal {
    dim: usize,
    reduced: HashMap<Vec<usize>, ReducedState>,
}

impl PrecomputedLocal {
    pub fn new<S: LocalState>(state: &S, lattice: &LatticeSpec, ls: &[usize]) -> Result<Self> {
        let mut regions = Vec::new();
        for &l in ls {
            regions.extend(enumerate_hypercubes(lattice, l)?);
        }
        let reduced = regions
            .par_iter()
            .map(|r| Ok((r.sites().to_vec(), state.reduce(r, lattice)?)))
            .collect::<thermalab_core::Result<HashMap<_, _>>>()?;
        Ok(Self { dim: state.dim(), reduced })
    }
}

impl LocalState for PrecomputedLocal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn reduce(&self, region: &Region, _lattice: &LatticeSpec) -> thermalab_core::Result<ReducedState> {
        self.reduced
            .get(region.sites())
            .cloned()
            .ok_or_else(|| thermalab_core::Error::InvalidArgument(format!("region {:?} was not precomputed", region.sites())))
    }
}

/// Map over sample indices, in parallel for small systems. Results are always
/// in sample order.
fn map_samples<T: Send>(n: usize, dim: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    if dim <= PARALLEL_SAMPLE_MAX_DIM {
        (0..n as u64).into_par_iter().map(f).collect()
    } else {
        (0..n as u64).map(f).collect()
    }
}

/// Stream index for a sub-experiment so that different commands never share
/// unitaries by accident.
fn sub_seed(master: u64, tag: u64) -> u64 {
    master ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

const SEED_THERMALIZATION: u64 = 1;
const SEED_INVARIANCE: u64 = 2;
const SEED_REFERENCE: u64 = 3;
const SEED_DYNAMICS: u64 = 4;
const SEED_MOMENTS: u64 = 5;
const SEED_ENERGY: u64 = 6;
const SEED_SAMPLE: u64 = 7;

fn gibbs_local(sys: &System, ls: &[usize]) -> Result<PrecomputedLocal> {
    PrecomputedLocal::new(&FactoredState::new(sys.gibbs.factor(&sys.spectrum)), &sys.lattice, ls)
}

fn local_distances<A: LocalState, B: LocalState>(a: &A, b: &B, ls: &[usize], lattice: &LatticeSpec) -> Result<Vec<f64>> {
    ls.iter().map(|&l| Ok(local_distinguishability(a, b, l, lattice)?.value)).collect()
}

fn thermal_row_state(sys: &System, eq: &EquilibriumState, frame: Option<&Mat<c64>>) -> Result<FactoredState> {
    let x = match frame {
        Some(f) => eq.factor(f.as_ref())?,
        None => eq.factor(sys.spectrum.vectors())?,
    };
    Ok(FactoredState::new(x))
}

pub struct ThermalizationSample {
    pub sample: u64,
    pub d_l: Vec<f64>,
    pub eta: f64,
    pub p_delta: f64,
}

/// `D_l(rho_inf^{UHU^dag}, g_beta(H))` and the micro-canonical split for each
/// sample drawn on `partition`.
pub fn thermalization_samples(
    sys: &System,
    partition: &WindowPartition,
    gibbs: &PrecomputedLocal,
    cfg: &ExperimentConfig,
    n_samples: usize,
    master: u64,
) -> Result<Vec<ThermalizationSample>> {
    let classes = sys.spectrum.classes();
    let shell = if partition.delta() > 0.0 {
        Some(cfg.shell.resolve(partition.delta(), sys.gibbs.std())?)
    } else {
        None
    };
    map_samples(n_samples, sys.dim(), |s| {
        let u = sample_block_haar(partition, SampleSeed::new(master, s));
        let eq = dephase_under_sample(sys.c.amplitudes(), &u, classes);
        let frame = u.rotate_frame(sys.spectrum.vectors());
        let state = thermal_row_state(sys, &eq, Some(&frame))?;
        drop(frame);
        let d_l = local_distances(&state, gibbs, &cfg.l, &sys.lattice)?;
        let (eta, p_delta) = match shell {
            Some(w) => {
                let g = decompose_agme(&eq, partition, sys.state_energy, w).stage("micro-canonical split")?;
                (g.eta, g.p_delta)
            }
            None => (f64::NAN, f64::NAN),
        };
        Ok(ThermalizationSample { sample: s, d_l, eta, p_delta })
    })
}

fn system_summary(rec: &mut Recorder, sys: &System) {
    let tag = sys.label();
    rec.diagnostic(&format!("beta[{tag}]"), sys.gibbs.beta, Unit::InverseEnergy);
    rec.diagnostic(&format!("state_energy[{tag}]"), sys.state_energy, Unit::Energy);
    rec.diagnostic(&format!("gibbs_std[{tag}]"), sys.gibbs.std(), Unit::Energy);
    rec.diagnostic(&format!("windows[{tag}]"), sys.partition.len(), Unit::Count);
    rec.diagnostic(&format!("min_window_dim[{tag}]"), sys.partition.min_dim(), Unit::Count);
    rec.diagnostic(&format!("moved_edges[{tag}]"), sys.partition.moved_edges().len(), Unit::Count);
    rec.diagnostic(&format!("cache_hit[{tag}]"), sys.cache_hit, Unit::Label);
}

fn fit_exponent(rec: &mut Recorder, name: &str, sizes: &[f64], values: &[f64]) {
    let (x, y): (Vec<f64>, Vec<f64>) = sizes
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&n, &v)| (n.ln(), v.ln()))
        .unzip();
    if x.len() >= 2 {
        if let Ok(fit) = linear_fit(&x, &y) {
            rec.metric(name, fit.slope, Unit::Dimensionless);
        }
    }
}

pub fn run(command: Command, cfg: &ExperimentConfig, ctx: &Context) -> Result<Recorder> {
    cfg.validate()?;
    let mut rec = Recorder::new(command.name(), cfg);
    match command {
        Command::Spectrum => spectrum(cfg, ctx, &mut rec)?,
        Command::Sample => sample(cfg, ctx, &mut rec)?,
        Command::Equilibrium => thermalization(cfg, ctx, &mut rec)?,
        Command::Thermality => thermality(cfg, ctx, &mut rec)?,
        Command::Dynamics => dynamics(cfg, ctx, &mut rec)?,
        Command::Moments => moments(cfg, ctx, &mut rec)?,
        Command::Sweep => sweep(cfg, ctx, &mut rec)?,
        Command::CheckAssumptions => check_assumptions(cfg, ctx, &mut rec)?,
    }
    Ok(rec)
}

fn spectrum(cfg: &ExperimentConfig, ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let mut levels = Table::new("spectrum", &[("n_sites", Unit::Count), ("index", Unit::Count), ("energy", Unit::Energy), ("class", Unit::Count)]);
    let mut summary = Table::new(
        "spectrum_summary",
        &[
            ("n_sites", Unit::Count),
            ("dim", Unit::Count),
            ("e_min", Unit::Energy),
            ("e_max", Unit::Energy),
            ("mean", Unit::Energy),
            ("classes", Unit::Count),
            ("min_gap", Unit::Energy),
            ("residual", Unit::Energy),
            ("orthonormality", Unit::Dimensionless),
            ("cache_hit", Unit::Label),
        ],
    );
    for lat in cfg.lattices() {
        let sys = build_system(cfg, &lat, ctx, rec)?;
        let n = sys.n_sites();
        for (k, c) in sys.spectrum.classes().iter().enumerate() {
            for i in c.clone() {
                levels.push(vec![n.into(), i.into(), sys.spectrum.energies()[i].into(), k.into()]);
            }
        }
        let e = sys.spectrum.energies();
        let min_gap = e.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let r = sys.spectrum.residual();
        summary.push(vec![
            n.into(),
            sys.dim().into(),
            sys.levels().min().into(),
            sys.levels().max().into(),
            sys.levels().mean().into(),
            sys.spectrum.classes().len().into(),
            min_gap.into(),
            r.residual.into(),
            r.orthonormality.into(),
            sys.cache_hit.into(),
        ]);
    }
    rec.table(levels);
    rec.table(summary);
    Ok(())
}

/// `max_k ||Lambda_k - U_k Lambda_k U_k^dag||`, equal to `||H - U H U^dag||`.
pub fn conjugation_shift(energies: &[f64], u: &BlockUnitary) -> Result<Vec<f64>> {
    u.blocks()
        .iter()
        .zip(u.ranges())
        .map(|(b, r)| {
            let e = &energies[r.clone()];
            let scaled = Mat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * e[j]);
            let conj = &scaled * b.adjoint();
            let diff = Mat::from_fn(b.nrows(), b.ncols(), |i, j| {
                let d = if i == j { c64::new(e[i], 0.0) } else { c64::new(0.0, 0.0) };
                d - conj[(i, j)]
            });
            Ok(linalg::spectral_norm_hermitian(linalg::hermitian_part(diff.as_ref()).as_ref())?)
        })
        .collect()
}

fn sample(cfg: &ExperimentConfig, ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let mut blocks = Table::new(
        "sample_blocks",
        &[
            ("n_sites", Unit::Count),
            ("sample", Unit::Count),
            ("window", Unit::Count),
            ("dim", Unit::Count),
            ("width", Unit::Energy),
            ("unitarity_defect", Unit::Dimensionless),
            ("norm_shift", Unit::Energy),
        ],
    );
    let mut per_sample = Table::new(
        "samples",
        &[
            ("n_sites", Unit::Count),
            ("sample", Unit::Count),
            ("max_unitarity_defect", Unit::Dimensionless),
            ("norm_shift", Unit::Energy),
            ("max_width", Unit::Energy),
            ("energy_shift", Unit::Energy),
        ],
    );
    let master = sub_seed(cfg.seed, SEED_SAMPLE);
    for lat in cfg.lattices() {
        let sys = build_system(cfg, &lat, ctx, rec)?;
        system_summary(rec, &sys);
        let n = sys.n_sites();
        let t = Instant::now();
        let rows = map_samples(cfg.samples, sys.dim(), |s| {
            let u = sample_block_haar(&sys.partition, SampleSeed::new(master, s));
            let shifts = conjugation_shift(sys.spectrum.energies(), &u)?;
            let defects: Vec<f64> = u.blocks().iter().map(|b| linalg::unitarity_defect(b.as_ref())).collect();
            let energy = thermalab_core::ensemble::conjugated_energy(sys.spectrum.energies(), &u, sys.c.amplitudes());
            Ok((s, shifts, defects, energy - sys.state_energy))
        })?;
        rec.record_time(&format!("sampling[{}]", sys.label()), t.elapsed().as_secs_f64());
        let mut worst = 0.0f64;
        for (s, shifts, defects, de) in rows {
            for (k, w) in sys.partition.windows().iter().enumerate() {
                blocks.push(vec![n.into(), s.into(), k.into(), w.dim().into(), w.width().into(), defects[k].into(), shifts[k].into()]);
            }
            let norm = shifts.iter().copied().fold(0.0, f64::max);
            let defect = defects.iter().copied().fold(0.0, f64::max);
            worst = worst.max(norm - sys.partition.max_width());
            per_sample.push(vec![n.into(), s.into(), defect.into(), norm.into(), sys.partition.max_width().into(), de.into()]);
        }
        rec.metric(&format!("max_norm_shift_excess[{}]", sys.label()), worst, Unit::Energy);
    }
    rec.table(blocks);
    rec.table(per_sample);
    Ok(())
}

fn thermalization(cfg: &ExperimentConfig, ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let mut samples = Table::new(
        "thermalization_samples",
        &[
            ("n_sites", Unit::Count),
            ("sample", Unit::Count),
            ("l", Unit::Count),
            ("d_l", Unit::Dimensionless),
            ("eta", Unit::Nats),
            ("p_delta", Unit::Dimensionless),
        ],
    );
    let mut scaling = Table::new(
        "thermalization_scaling",
        &[
            ("n_sites", Unit::Count),
            ("dim", Unit::Count),
            ("l", Unit::Count),
            ("beta", Unit::InverseEnergy),
            ("sigma", Unit::Energy),
            ("delta", Unit::Energy),
            ("windows", Unit::Count),
            ("min_window_dim", Unit::Count),
            ("median_d_l", Unit::Dimensionless),
            ("mean_d_l", Unit::Dimensionless),
            ("unsmoothed_d_l", Unit::Dimensionless),
            ("median_eta", Unit::Nats),
            ("median_p_delta", Unit::Dimensionless),
        ],
    );
    let master = sub_seed(cfg.seed, SEED_THERMALIZATION);
    let mut medians: HashMap<usize, Vec<(f64, f64)>> = HashMap::new();
    for lat in cfg.lattices() {
        let sys = build_system(cfg, &lat, ctx, rec)?;
        system_summary(rec, &sys);
        let n = sys.n_sites();
        let t = Instant::now();
        let gibbs = gibbs_local(&sys, &cfg.l)?;
        let unsmoothed_eq = dephase_pure(sys.c.amplitudes(), sys.spectrum.classes());
        let unsmoothed = local_distances(&thermal_row_state(&sys, &unsmoothed_eq, None)?, &gibbs, &cfg.l, &lat)?;
        let rows = thermalization_samples(&sys, &sys.partition, &gibbs, cfg, cfg.samples, master)?;
        rec.record_time(&format!("thermalization[{}]", sys.label()), t.elapsed().as_secs_f64());
        for r in &rows {
            for (li, &l) in cfg.l.iter().enumerate() {
                samples.push(vec![n.into(), r.sample.into(), l.into(), r.d_l[li].into(), r.eta.into(), r.p_delta.into()]);
            }
        }
        let etas: Vec<f64> = rows.iter().map(|r| r.eta).collect();
        let ps: Vec<f64> = rows.iter().map(|r| r.p_delta).collect();
        for (li, &l) in cfg.l.iter().enumerate() {
            let d: Vec<f64> = rows.iter().map(|r| r.d_l[li]).collect();
            let med = median(&d);
            medians.entry(l).or_default().push((n as f64, med));
            scaling.push(vec![
                n.into(),
                sys.dim().into(),
                l.into(),
                sys.gibbs.beta.into(),
                sys.gibbs.std().into(),
                sys.delta.unwrap_or(f64::NAN).into(),
                sys.partition.len().into(),
                sys.partition.min_dim().into(),
                med.into(),
                mean_se(&d).mean.into(),
                unsmoothed[li].into(),
                median(&etas).into(),
                median(&ps).into(),
            ]);
            rec.metric(&format!("median_d_{l}[{}]", sys.label()), med, Unit::Dimensionless);
        }
    }
    for (l, pts) in sorted(medians) {
        let (ns, ms): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        fit_exponent(rec, &format!("median_d_{l}_size_exponent"), &ns, &ms);
    }
    rec.table(samples);
    rec.table(scaling);
    Ok(())
}

fn sorted<V>(m: HashMap<usize, V>) -> Vec<(usize, V)> {
    let mut v: Vec<_> = m.into_iter().collect();
    v.sort_by_key(|(k, _)| *k);
    v
}

/// `D_l(g_beta(H), g_beta(U H U^dag))` for each sample on `partition`.
pub fn gibbs_invariance_samples(
    sys: &System,
    partition: &WindowPartition,
    gibbs: &PrecomputedLocal,
    ls: &[usize],
    n_samples: usize,
    master: u64,
) -> Result<Vec<Vec<f64>>> {
    let w: Vec<f64> = sys.gibbs.weights.iter().map(|x| x.sqrt()).collect();
    map_samples(n_samples, sys.dim(), |s| {
        let u = sample_block_haar(partition, SampleSeed::new(master, s));
        let mut frame = u.rotate_frame(sys.spectrum.vectors());
        for j in 0..frame.ncols() {
            for i in 0..frame.nrows() {
                frame[(i, j)] *= w[j];
            }
        }
        local_distances(&FactoredState::new(frame), gibbs, ls, &sys.lattice)
    })
}

fn thermality(cfg: &ExperimentConfig, ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let mut inv = Table::new(
        "gibbs_invariance_samples",
        &[
            ("n_sites", Unit::Count),
            ("ensemble", Unit::Label),
            ("sample", Unit::Count),
            ("l", Unit::Count),
            ("d_l", Unit::Dimensionless),
        ],
    );
    let mut summary = Table::new(
        "thermality_summary",
        &[
            ("n_sites", Unit::Count),
            ("l", Unit::Count),
            ("beta", Unit::InverseEnergy),
            ("e_beta", Unit::Energy),
            ("sigma_sq", Unit::Energy),
            ("zeta", Unit::Dimensionless),
            ("zeta_location", Unit::Energy),
            ("median_d_l", Unit::Dimensionless),
            ("reference_median_d_l", Unit::Dimensionless),
            ("ratio", Unit::Dimensionless),
            ("relative_entropy", Unit::Nats),
        ],
    );
    let mut condition = Table::new(
        "thermality_condition",
        &[
            ("n_sites", Unit::Count),
            ("l", Unit::Count),
            ("xi", Unit::Dimensionless),
            ("xi_source", Unit::Label),
            ("z", Unit::Dimensionless),
            ("relative_entropy_bits", Unit::Bits),
            ("lhs", Unit::Dimensionless),
            ("rhs", Unit::Dimensionless),
            ("satisfied", Unit::Label),
            ("guaranteed_distance", Unit::Dimensionless),
        ],
    );
    let mut correlators = Table::new(
        "correlators",
        &[("n_sites", Unit::Count), ("distance", Unit::Count), ("correlator", Unit::Dimensionless)],
    );
    let master = sub_seed(cfg.seed, SEED_INVARIANCE);
    let reference_master = sub_seed(cfg.seed, SEED_REFERENCE);
    for lat in cfg.lattices() {
        let sys = build_system(cfg, &lat, ctx, rec)?;
        system_summary(rec, &sys);
        let n = sys.n_sites();
        let tag = sys.label();
        let t = Instant::now();
        let gibbs = gibbs_local(&sys, &cfg.l)?;
        let smoothed = gibbs_invariance_samples(&sys, &sys.partition, &gibbs, &cfg.l, cfg.samples, master)?;
        let single = WindowPartition::single_window(sys.levels());
        let reference = gibbs_invariance_samples(&sys, &single, &gibbs, &cfg.l, cfg.reference_samples.max(1), reference_master)?;
        rec.record_time(&format!("gibbs_invariance[{tag}]"), t.elapsed().as_secs_f64());
        for (name, rows) in [("smoothed", &smoothed), ("single_window", &reference)] {
            for (s, d) in rows.iter().enumerate() {
                for (li, &l) in cfg.l.iter().enumerate() {
                    inv.push(vec![n.into(), name.into(), s.into(), l.into(), d[li].into()]);
                }
            }
        }

        let be = berry_esseen_error(sys.levels(), &sys.gibbs.weights).stage("berry-esseen")?;
        rec.metric(&format!("zeta[{tag}]"), be.zeta, Unit::Dimensionless);
        // time-averaged state of the unsmoothed dynamics
        let tau = dephase_pure(sys.c.amplitudes(), sys.spectrum.classes());
        let tau_w = tau.weights();
        let energy = pairwise_sum(&tau_w.iter().zip(sys.spectrum.energies()).map(|(w, e)| w * e).collect::<Vec<_>>());
        let rel = (-tau.entropy()? + sys.gibbs.beta * energy + sys.gibbs.log_z).max(0.0);

        for (li, &l) in cfg.l.iter().enumerate() {
            let d: Vec<f64> = smoothed.iter().map(|r| r[li]).collect();
            let dr: Vec<f64> = reference.iter().map(|r| r[li]).collect();
            let (m, mr) = (median(&d), median(&dr));
            summary.push(vec![
                n.into(),
                l.into(),
                sys.gibbs.beta.into(),
                sys.gibbs.mean_energy.into(),
                sys.gibbs.variance.into(),
                be.zeta.into(),
                be.location.into(),
                m.into(),
                mr.into(),
                (m / mr).into(),
                rel.into(),
            ]);
            rec.metric(&format!("gibbs_invariance_ratio_l{l}[{tag}]"), m / mr, Unit::Dimensionless);
        }

        let fit = if n <= cfg.dense_site_limit && lat.side >= 4 {
            let rho = sys.gibbs.to_computational(&sys.spectrum)?;
            let z = Pauli::Z.matrix();
            let offsets: Vec<usize> = (1..lat.side).collect();
            match fit_correlation_length(&rho, &lat, z.as_ref(), z.as_ref(), &offsets) {
                Ok(f) => {
                    for r in &f.table {
                        correlators.push(vec![n.into(), r.distance.into(), r.correlator.into()]);
                    }
                    rec.metric(&format!("xi_fit[{tag}]"), f.xi, Unit::Dimensionless);
                    rec.metric(&format!("xi_fit_residual[{tag}]"), f.residual, Unit::Dimensionless);
                    Some(f)
                }
                Err(e) => {
                    rec.diagnostic(&format!("xi_fit[{tag}]"), e.to_string(), Unit::Label);
                    None
                }
            }
        } else {
            None
        };
        let (xi, z, src) = match (cfg.condition.xi, &fit) {
            (Some(x), _) => (Some(x), cfg.condition.z, XiSource::Manual),
            (None, Some(f)) => (Some(f.xi), f.z, XiSource::Fitted),
            (None, None) => (None, 0.0, XiSource::Fitted),
        };
        if let Some(xi) = xi {
            for &l in &cfg.l {
                let chk = check_indistinguishability_condition(rel, cfg.condition.epsilon, l, xi, src, z, &lat)?;
                condition.push(vec![
                    n.into(),
                    l.into(),
                    xi.into(),
                    format!("{src:?}").to_lowercase().into(),
                    z.into(),
                    chk.relative_entropy_bits.into(),
                    chk.lhs.into(),
                    chk.rhs.into(),
                    chk.satisfied.into(),
                    chk.guaranteed_distance.unwrap_or(f64::NAN).into(),
                ]);
            }
        }
    }
    rec.table(inv);
    rec.table(summary);
    if !condition.rows.is_empty() {
        rec.table(condition);
    }
    if !correlators.rows.is_empty() {
        rec.table(correlators);
    }
    Ok(())
}

fn dynamics(cfg: &ExperimentConfig, ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let grid = cfg.time_grid.build()?;
    let mut series = Table::new(
        "dynamics_expected",
        &[
            ("n_sites", Unit::Count),
            ("t", Unit::Time),
            ("expected", Unit::Dimensionless),
            ("mc_mean", Unit::Dimensionless),
            ("mc_se", Unit::Dimensionless),
            ("z", Unit::Dimensionless),
            ("mc_variance", Unit::Dimensionless),
            ("tail_frequency", Unit::Dimensionless),
            ("levy_reference", Unit::Dimensionless),
        ],
    );
    let mut relax = Table::new(
        "relaxation_bound",
        &[
            ("n_sites", Unit::Count),
            ("t", Unit::Time),
            ("bound", Unit::Dimensionless),
            ("phi_term", Unit::Dimensionless),
            ("f_term", Unit::Dimensionless),
            ("constant_dos", Unit::Dimensionless),
        ],
    );
    let mut distance = Table::new(
        "distance_bound",
        &[("n_sites", Unit::Count), ("t", Unit::Time), ("distance", Unit::Dimensionless), ("bound", Unit::Dimensionless)],
    );
    let master = sub_seed(cfg.seed, SEED_DYNAMICS);
    for lat in cfg.lattices() {
        let sys = build_system(cfg, &lat, ctx, rec)?;
        system_summary(rec, &sys);
        let n = sys.n_sites();
        let tag = sys.label();
        let probe = HermitianOperator::new(Pauli::from(cfg.observable.pauli).matrix())?;
        let a_comp = embed_observable(&probe, &Region::new(vec![cfg.observable.site])?, &lat)?;
        let a = Observable::new(Basis::Eigen, sys.spectrum.matrix_to_eigen(a_comp.as_ref()));
        let t = Instant::now();
        let exp = expected_dynamics(&sys.c, &a, sys.levels(), &sys.partition, &grid).stage("expected dynamics")?;
        let mc = mc_dynamics_concentration(&sys.c, &a, sys.levels(), &sys.partition, &grid, cfg.samples.max(10), master, 0.1)
            .stage("sampled dynamics")?;
        rec.record_time(&format!("dynamics[{tag}]"), t.elapsed().as_secs_f64());
        let mut worst_z = 0.0f64;
        for (i, p) in mc.points.iter().enumerate() {
            let z = z_score(p.mean, exp.values[i], p.se);
            if z.is_finite() {
                worst_z = worst_z.max(z.abs());
            }
            series.push(vec![
                n.into(),
                p.t.into(),
                exp.values[i].into(),
                p.mean.into(),
                p.se.into(),
                z.into(),
                p.variance.into(),
                p.tail_frequency.into(),
                p.levy_reference.into(),
            ]);
        }
        rec.metric(&format!("dynamics_max_z[{tag}]"), worst_z, Unit::Dimensionless);
        rec.metric(&format!("equilibrium_value[{tag}]"), exp.equilibrium, Unit::Dimensionless);

        let wd = window_dynamics(sys.levels(), &sys.partition, &grid)?;
        let norm = probe.operator_norm()?;
        for p in relaxation_bound(&wd, norm, sys.partition.delta()) {
            relax.push(vec![n.into(), p.t.into(), p.bound.into(), p.phi_term.into(), p.f_term.into(), p.constant_dos.into()]);
        }

        if sys.dim() <= PROPAGATOR_DIM_GUARD && n <= cfg.dense_site_limit {
            let u = sample_block_haar(&sys.partition, SampleSeed::new(master, u64::MAX));
            let hp = conjugate_hamiltonian(&sys.spectrum, &u)?.operator;
            let psi = sys.spectrum.vector_to_computational(&sys.c)?;
            let rho = DensityOperator::pure(&psi);
            let d = dynamics_distance_bound(&rho, &sys.h, &hp, &grid).stage("distance bound")?;
            for i in 0..d.times.len() {
                distance.push(vec![n.into(), d.times[i].into(), d.distance[i].into(), d.bound[i].into()]);
            }
            rec.metric(&format!("distance_bound_max_excess[{tag}]"), d.max_excess, Unit::Dimensionless);
        }
    }
    rec.table(series);
    rec.table(relax);
    if !distance.rows.is_empty() {
        rec.table(distance);
    }
    Ok(())
}

fn moments(cfg: &ExperimentConfig, ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let master = sub_seed(cfg.seed, SEED_MOMENTS);
    let mut wg = Table::new(
        "weingarten",
        &[
            ("degree", Unit::Count),
            ("d", Unit::Count),
            ("cycle_type", Unit::Label),
            ("exact", Unit::Label),
            ("value", Unit::Dimensionless),
        ],
    );
    for degree in [2usize, 3] {
        for &d in cfg.moment_dims.iter().filter(|&&d| d >= degree) {
            let mut seen = Vec::new();
            for p in permutations(degree) {
                let label = PermutationLabel::of(&p)?;
                if seen.contains(&label) {
                    continue;
                }
                let w = weingarten(&label, d)?;
                let ct: Vec<String> = label.cycle_type().iter().map(|c| c.to_string()).collect();
                wg.push(vec![
                    degree.into(),
                    d.into(),
                    ct.join("+").into(),
                    format!("{}/{}", w.numer(), w.denom()).into(),
                    (*w.numer() as f64 / *w.denom() as f64).into(),
                ]);
                seen.push(label);
            }
        }
    }
    rec.table(wg);

    let mut haar = Table::new(
        "haar_moments",
        &[
            ("d", Unit::Count),
            ("samples", Unit::Count),
            ("first_moment_max_z", Unit::Dimensionless),
            ("second_exact_re", Unit::Dimensionless),
            ("second_mc_re", Unit::Dimensionless),
            ("second_se_re", Unit::Dimensionless),
            ("second_exact_im", Unit::Dimensionless),
            ("second_mc_im", Unit::Dimensionless),
            ("second_se_im", Unit::Dimensionless),
            ("second_moment_z", Unit::Dimensionless),
        ],
    );
    let mut purity = Table::new(
        "purity",
        &[
            ("d", Unit::Count),
            ("samples", Unit::Count),
            ("mean", Unit::Dimensionless),
            ("se", Unit::Dimensionless),
            ("haar_formula", Unit::Dimensionless),
            ("single_pairing_formula", Unit::Dimensionless),
            ("z_haar", Unit::Dimensionless),
            ("z_single_pairing", Unit::Dimensionless),
        ],
    );
    let t = Instant::now();
    for &d in &cfg.moment_dims {
        if d >= 2 {
            let r = haar_moment_verify(d, cfg.moment_samples.max(1000), master.wrapping_add(d as u64))?;
            haar.push(vec![
                d.into(),
                r.n_samples.into(),
                r.first_moment_max_z.into(),
                r.second_moment_exact[0].into(),
                r.second_moment_mc[0].into(),
                r.second_moment_se[0].into(),
                r.second_moment_exact[1].into(),
                r.second_moment_mc[1].into(),
                r.second_moment_se[1].into(),
                r.second_moment_z.into(),
            ]);
        }
        let levels = EnergyLevels::new((0..d).map(|i| i as f64).collect(), 1e-9)?;
        let part = WindowPartition::single_window(&levels);
        let psi = StateVector::basis_state(Basis::Eigen, d, 0);
        let st = participation_statistics(&psi, &part, cfg.moment_samples.max(2), master.wrapping_add(1000 + d as u64))?;
        purity.push(vec![
            d.into(),
            st.purities.len().into(),
            st.mean.mean.into(),
            st.mean.se.into(),
            st.haar_formula.into(),
            st.single_pairing_formula.into(),
            z_score(st.mean.mean, st.haar_formula, st.mean.se).into(),
            z_score(st.mean.mean, st.single_pairing_formula, st.mean.se).into(),
        ]);
    }
    rec.record_time("haar_moments", t.elapsed().as_secs_f64());
    if !haar.rows.is_empty() {
        rec.table(haar);
    }
    rec.table(purity);

    let mut eqv = Table::new(
        "equilibrium_variance",
        &[
            ("n_sites", Unit::Count),
            ("delta", Unit::Energy),
            ("min_window_dim", Unit::Count),
            ("mean", Unit::Dimensionless),
            ("variance", Unit::Dimensionless),
            ("scaled", Unit::Dimensionless),
        ],
    );
    for lat in cfg.lattices() {
        let sys = build_system(cfg, &lat, ctx, rec)?;
        let Some(delta) = sys.delta else { continue };
        let probe = HermitianOperator::new(Pauli::from(cfg.observable.pauli).matrix())?;
        let a_comp = embed_observable(&probe, &Region::new(vec![cfg.observable.site])?, &lat)?;
        let a = Observable::new(Basis::Eigen, sys.spectrum.matrix_to_eigen(a_comp.as_ref()));
        let wide = partition_spectrum(sys.levels(), 2.0 * delta, None)?;
        let chk = equilibrium_second_moment_check(&sys.c, &a, sys.levels(), [&sys.partition, &wide], cfg.samples.max(10), master)?;
        for (dl, v) in [(delta, &chk.first), (2.0 * delta, &chk.second)] {
            eqv.push(vec![sys.n_sites().into(), dl.into(), v.d_min.into(), v.mean.into(), v.variance.into(), v.scaled.into()]);
        }
        rec.metric(&format!("equilibrium_variance_constant_ratio[{}]", sys.label()), chk.constant_ratio, Unit::Dimensionless);
    }
    if !eqv.rows.is_empty() {
        rec.table(eqv);
    }
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let mut table = Table::new(
        "sweep",
        &[
            ("n_sites", Unit::Count),
            ("sigma_factor", Unit::Dimensionless),
            ("delta", Unit::Energy),
            ("windows", Unit::Count),
            ("min_window_dim", Unit::Count),
            ("l", Unit::Count),
            ("median_d_l", Unit::Dimensionless),
            ("median_eta", Unit::Nats),
            ("median_p_delta", Unit::Dimensionless),
        ],
    );
    let master = sub_seed(cfg.seed, SEED_THERMALIZATION);
    for lat in cfg.lattices() {
        let sys = build_system(cfg, &lat, ctx, rec)?;
        let gibbs = gibbs_local(&sys, &cfg.l)?;
        for &f in &cfg.sweep_factors {
            let (delta, part) = sys.partition_for(&DeltaPolicy::SigmaRelative { factor: f })?;
            let t = Instant::now();
            let rows = thermalization_samples(&sys, &part, &gibbs, cfg, cfg.samples, master)?;
            rec.record_time(&format!("sweep[{} f={f}]", sys.label()), t.elapsed().as_secs_f64());
            let etas: Vec<f64> = rows.iter().map(|r| r.eta).collect();
            let ps: Vec<f64> = rows.iter().map(|r| r.p_delta).collect();
            for (li, &l) in cfg.l.iter().enumerate() {
                let d: Vec<f64> = rows.iter().map(|r| r.d_l[li]).collect();
                table.push(vec![
                    sys.n_sites().into(),
                    f.into(),
                    delta.unwrap_or(f64::NAN).into(),
                    part.len().into(),
                    part.min_dim().into(),
                    l.into(),
                    median(&d).into(),
                    median(&etas).into(),
                    median(&ps).into(),
                ]);
            }
        }
    }
    rec.table(table);
    Ok(())
}

fn check_assumptions(cfg: &ExperimentConfig, ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let mut tail = Table::new(
        "assumption_tail_decay",
        &[
            ("n_sites", Unit::Count),
            ("energy", Unit::Energy),
            ("k", Unit::Count),
            ("count_at", Unit::Count),
            ("count_shifted", Unit::Count),
            ("ratio", Unit::Dimensionless),
        ],
    );
    let mut density = Table::new(
        "assumption_density",
        &[("n_sites", Unit::Count), ("bin_lo", Unit::Energy), ("count", Unit::Count), ("violation", Unit::Label)],
    );
    let mut energy_tail = Table::new(
        "energy_tail",
        &[
            ("n_sites", Unit::Count),
            ("threshold", Unit::Energy),
            ("tail_weight", Unit::Dimensionless),
            ("eta", Unit::Energy),
            ("bound", Unit::Dimensionless),
            ("exceeds_bound", Unit::Label),
        ],
    );
    let mut conc = Table::new(
        "energy_concentration",
        &[("n_sites", Unit::Count), ("sample", Unit::Count), ("energy", Unit::Energy), ("shift", Unit::Energy)],
    );
    let master = sub_seed(cfg.seed, SEED_ENERGY);
    for lat in cfg.lattices() {
        let sys = build_system(cfg, &lat, ctx, rec)?;
        system_summary(rec, &sys);
        let n = sys.n_sites();
        let tag = sys.label();
        let delta = sys.delta.unwrap_or(sys.partition.max_width().max(f64::MIN_POSITIVE));
        let rep = spectral_assumption_report(sys.levels(), delta, n)?;
        for r in &rep.tail_decay.rows {
            tail.push(vec![n.into(), r.energy.into(), r.k.into(), r.count_at.into(), r.count_shifted.into(), r.ratio.into()]);
        }
        for (i, b) in rep.density_monotonicity.bins.iter().enumerate() {
            let v = rep.density_monotonicity.violations.contains(&i);
            density.push(vec![n.into(), b.lo.into(), b.count.into(), v.into()]);
        }
        rec.diagnostic(&format!("tail_decay_pass[{tag}]"), rep.tail_decay.pass, Unit::Label);
        rec.diagnostic(&format!("tail_decay_worst_ratio[{tag}]"), rep.tail_decay.worst_ratio, Unit::Dimensionless);
        rec.diagnostic(&format!("density_monotonicity_pass[{tag}]"), rep.density_monotonicity.pass, Unit::Label);

        let w = sys.term_norm_per_site;
        let params = TailBoundParams { delta: w / (n as f64).sqrt(), w, n_sites: n };
        let steps = 16;
        let hi = sys.levels().max();
        let thresholds: Vec<f64> = (0..=steps)
            .map(|i| sys.state_energy + (hi - sys.state_energy) * i as f64 / steps as f64)
            .collect();
        let weights = probabilities(sys.c.amplitudes());
        for r in energy_tail_report(&weights, sys.levels(), &thresholds, Some(params))? {
            energy_tail.push(vec![
                n.into(),
                r.threshold.into(),
                r.tail_weight.into(),
                r.eta.unwrap_or(f64::NAN).into(),
                r.bound.unwrap_or(f64::NAN).into(),
                r.exceeds_bound.unwrap_or(false).into(),
            ]);
        }

        let ec = mc_energy_concentration(&sys.c, sys.levels(), &sys.partition, cfg.samples.max(2), master)
            .stage("energy concentration")?;
        for (s, e) in ec.energies.iter().enumerate() {
            conc.push(vec![n.into(), s.into(), (*e).into(), (e - ec.reference).into()]);
        }
        rec.metric(&format!("energy_shift_mean[{tag}]"), ec.mean_shift, Unit::Energy);
        rec.metric(&format!("energy_shift_bound[{tag}]"), ec.bound, Unit::Energy);
    }
    rec.table(tail);
    rec.table(density);
    rec.table(energy_tail);
    rec.table(conc);
    Ok(())
}

/// Run `f` on a dedicated pool of `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t.max(1));
    }
    let pool = b.build().map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
