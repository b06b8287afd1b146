//! Parameter-grid experiments: train on synthetic data, then integrate the
//! bump-function problem to `t = 20` with the learned stencil and report the
//! forward error and the scaled spectrum.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::exact_solution::{
    bump_initial, fourier_coefficients, generate_training_set, FourierData, GridSampler, PdeProblem, TrainingSet,
    DECAY_RATES,
};
use crate::multistep::{AbScheme, DEFAULT_BISECTION_TOL, DEFAULT_ROOT_TOL, MAX_STEPS};
use crate::network::StencilNetwork;
use crate::numfmt::{self, f17};
use crate::stencil::{DiffOperator, Grid, StencilWeights};
use crate::training::{bfgs_minimize, BfgsOptions, OptimizerStatus, RecurrentLoss};

pub const SCHEMA_VERSION: u32 = 1;

/// Evaluation runs over `t in (0, EVAL_HORIZON]`.
pub const EVAL_HORIZON: f64 = 20.0;

/// Truncation of the bump function's Fourier series.
pub const BUMP_ETA_MAX: usize = 300;

/// Absolute tolerance for each bump coefficient.
pub const BUMP_ABSTOL: f64 = 1e-15;

/// Stable, trained runs should not grow their error by more than this factor
/// between `t = 1` and `t = 20`.
pub const GROWTH_LIMIT: f64 = 1e3;

/// Untrained unstable runs should exceed this error by `t = 20`.
pub const BLOWUP_LIMIT: f64 = 1e6;

/// The values each parameter takes in the published grid.
pub mod table3 {
    pub const C: [f64; 1] = [1.0];
    pub const NU: [f64; 3] = [0.0, 1e-4, 1e-2];
    pub const PERIOD: [f64; 1] = [1.0];
    pub const P: [u32; 3] = [2, 4, 8];
    pub const N: [usize; 3] = [51, 101, 201];
    pub const STENCIL: [usize; 5] = [3, 5, 7, 9, 11];
    pub const S: [usize; 2] = [2, 3];
    pub const MULTIPLIER: [f64; 3] = [1.0, 1.01, 1.1];
    pub const Q: [usize; 5] = [1, 3, 4, 5, 9];
    pub const T: [usize; 3] = [1, 10, 100];
    pub const KAPPA_MAX: [usize; 3] = [10, 100, 1000];
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(with = "numfmt::scalar")]
    pub c: f64,
    #[serde(with = "numfmt::scalar")]
    pub nu: f64,
    #[serde(rename = "P", with = "numfmt::scalar")]
    pub period: f64,
    pub p: u32,
    #[serde(rename = "N")]
    pub n_param: usize,
    pub n: usize,
    pub s: usize,
    #[serde(with = "numfmt::scalar")]
    pub h_t_multiplier: f64,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub kappa_max: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Rejects values the computation cannot run with. Values that are
    /// usable but outside the published grid are reported by
    /// [`Self::out_of_grid`] instead.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        PdeProblem::new(self.c, self.nu, self.period)?;
        if !DECAY_RATES.contains(&self.p) {
            return Err(invalid("p", format!("must be one of {DECAY_RATES:?}")));
        }
        Grid::new(self.n_param, self.period, self.n)?;
        if !(1..=MAX_STEPS).contains(&self.s) {
            return Err(invalid("s", format!("must lie in 1..={MAX_STEPS}")));
        }
        if !(self.h_t_multiplier.is_finite() && self.h_t_multiplier > 0.0) {
            return Err(invalid("h_t_multiplier", "must be positive"));
        }
        if self.q == 0 {
            return Err(invalid("Q", "must be at least 1"));
        }
        if self.t == 0 {
            return Err(invalid("T", "must be at least 1"));
        }
        Ok(())
    }

    /// Names of fields whose values are not in the published grid.
    pub fn out_of_grid(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut flag = |name, inside: bool| {
            if !inside {
                out.push(name);
            }
        };
        flag("c", table3::C.contains(&self.c));
        flag("nu", table3::NU.contains(&self.nu));
        flag("P", table3::PERIOD.contains(&self.period));
        flag("p", table3::P.contains(&self.p));
        flag("N", table3::N.contains(&self.n_param));
        flag("n", table3::STENCIL.contains(&self.n));
        flag("s", table3::S.contains(&self.s));
        flag("h_t_multiplier", table3::MULTIPLIER.contains(&self.h_t_multiplier));
        flag("Q", table3::Q.contains(&self.q));
        flag("T", table3::T.contains(&self.t));
        flag("kappa_max", table3::KAPPA_MAX.contains(&self.kappa_max));
        out
    }

    pub fn problem(&self) -> Result<PdeProblem> {
        PdeProblem::new(self.c, self.nu, self.period)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n_param, self.period, self.n)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Hex SHA-256 of the compact JSON form; names the result file.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }

    /// A seed that depends on `base_seed` and every other field.
    pub fn derived_seed(&self, base_seed: u64) -> u64 {
        let mut unseeded = self.clone();
        unseeded.seed = 0;
        let mut hasher = Sha256::new();
        hasher.update(base_seed.to_le_bytes());
        hasher.update(serde_json::to_vec(&unseeded).expect("config serializes"));
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `h_{t,N,nu,s}` for the centered three-point operator. For `nu = 0` and
/// `s = 2` no positive step is stable and the `s = 3` value is used.
pub fn critical_centered_timestep(problem: &PdeProblem, n_param: usize, s: usize) -> Result<f64> {
    let grid = Grid::new(n_param, problem.period, 3)?;
    let op = DiffOperator::new(grid, StencilWeights::centered(3)?, *problem)?;
    match AbScheme::new(s)?.critical_timestep(&op, DEFAULT_BISECTION_TOL)? {
        Some(h) => Ok(h),
        None if s == 2 => AbScheme::new(3)?
            .critical_timestep(&op, DEFAULT_BISECTION_TOL)?
            .ok_or(Error::NoStableTimestep { s: 3 }),
        None => Err(Error::NoStableTimestep { s }),
    }
}

/// `h_t = multiplier * h_{t,N,nu,s}`.
pub fn resolve_timestep(config: &ExperimentConfig) -> Result<f64> {
    config.validate()?;
    Ok(config.h_t_multiplier * critical_centered_timestep(&config.problem()?, config.n_param, config.s)?)
}

/// Fourier coefficients of the bump function on `[0, P)`, `|eta| <= 300`.
/// The unit-period series is computed once per process.
pub fn bump_coefficients(period: f64) -> Result<Arc<FourierData>> {
    static UNIT: OnceLock<Arc<FourierData>> = OnceLock::new();
    let compute = |p: f64| fourier_coefficients(|x| bump_initial(x / p), p, BUMP_ETA_MAX, BUMP_ABSTOL);
    if period == 1.0 {
        if let Some(data) = UNIT.get() {
            return Ok(data.clone());
        }
        let data = Arc::new(compute(1.0)?);
        return Ok(UNIT.get_or_init(|| data).clone());
    }
    Ok(Arc::new(compute(period)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    Failed,
    /// `kappa_max = 0`: the initial weights were evaluated untrained.
    Skipped,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIterations => "max_iterations",
            Self::Failed => "failed",
            Self::Skipped => "skipped",
        }
    }
}

impl From<OptimizerStatus> for RunStatus {
    fn from(s: OptimizerStatus) -> Self {
        match s {
            OptimizerStatus::Converged => Self::Converged,
            OptimizerStatus::MaxIterations => Self::MaxIterations,
            OptimizerStatus::LineSearchFailed => Self::Failed,
        }
    }
}

/// Forward errors and spectrum of one weight set on the bump problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    #[serde(with = "numfmt::scalar")]
    pub h_t: f64,
    /// Level of `errors[0]`; earlier levels are exact kickstart data.
    pub first_level: usize,
    /// `|u(l h_t) - u~(l h_t)|_inf` for `l = s..=floor(20 / h_t)`; `inf`
    /// after the solution overflows.
    #[serde(with = "numfmt::vec")]
    pub errors: Vec<f64>,
    /// `lambda_eta h_t` as `[re, im]`, `eta` ascending.
    #[serde(with = "numfmt::pairs")]
    pub scaled_eigenvalues: Vec<[f64; 2]>,
    pub stable: bool,
}

impl Evaluation {
    pub fn time(&self, index: usize) -> f64 {
        (self.first_level + index) as f64 * self.h_t
    }

    /// Largest error over `(0, t_end]`; kickstart levels count as exact.
    pub fn max_error_until(&self, t_end: f64) -> f64 {
        self.errors
            .iter()
            .enumerate()
            .take_while(|(i, _)| self.time(*i) <= t_end * (1.0 + 1e-12))
            .map(|(_, &e)| e)
            .fold(0.0, f64::max)
    }

    /// Error at the last level not after `t`, or 0 when that is a kickstart level.
    pub fn error_at(&self, t: f64) -> f64 {
        let level = (t / self.h_t * (1.0 + 1e-12)).floor() as usize;
        if level < self.first_level {
            return 0.0;
        }
        self.errors
            .get(level - self.first_level)
            .or(self.errors.last())
            .copied()
            .unwrap_or(0.0)
    }
}

/// Integrates the bump problem with `weights` and AB-`s` at step `h_t`,
/// starting from exact levels `0..s`.
pub fn evaluate_weights(
    problem: &PdeProblem,
    n_param: usize,
    s: usize,
    h_t: f64,
    weights: &StencilWeights,
) -> Result<Evaluation> {
    if !(h_t.is_finite() && h_t > 0.0) {
        return Err(invalid("h_t", "must be positive"));
    }
    let grid = Grid::new(n_param, problem.period, weights.n())?;
    let scheme = AbScheme::new(s)?;
    let op = DiffOperator::new(grid, weights.clone(), *problem)?;
    let spectrum: Vec<Complex64> = op.eigenvalues();
    let stable = scheme.spectrum_is_stable(&spectrum, h_t, DEFAULT_ROOT_TOL)?;
    let scaled_eigenvalues = spectrum.iter().map(|l| [l.re * h_t, l.im * h_t]).collect();

    let data = bump_coefficients(problem.period)?;
    let sampler = GridSampler::new(*problem, (*data).clone(), n_param)?;
    let last_level = (EVAL_HORIZON / h_t * (1.0 + 1e-12)).floor() as usize;
    let net = StencilNetwork::new(grid, weights, problem, scheme, h_t)?;
    let kick: Vec<Vec<f64>> = (0..s).map(|l| sampler.sample(l as f64 * h_t)).collect();
    let mut state = net.kickstart(&kick)?;
    let mut errors = Vec::with_capacity(last_level.saturating_sub(s) + 1);
    for level in s..=last_level {
        let approx = net.step(&mut state)?;
        let exact = sampler.sample(level as f64 * h_t);
        let err = approx
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, |m: f64, e| if e.is_nan() { f64::INFINITY } else { m.max(e) });
        if !err.is_finite() {
            errors.resize(last_level - s + 1, f64::INFINITY);
            break;
        }
        errors.push(err);
    }
    Ok(Evaluation {
        h_t,
        first_level: s,
        errors,
        scaled_eigenvalues,
        stable,
    })
}

/// Verdict/error coherence check. `coherent` is `None` when neither rule applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    #[serde(with = "numfmt::scalar")]
    pub error_at_1: f64,
    #[serde(with = "numfmt::scalar")]
    pub error_at_20: f64,
    #[serde(with = "numfmt::scalar")]
    pub growth_limit: f64,
    #[serde(with = "numfmt::scalar")]
    pub blowup_limit: f64,
    pub coherent: Option<bool>,
}

impl Coherence {
    pub fn assess(evaluation: &Evaluation, status: RunStatus) -> Self {
        let error_at_1 = evaluation.error_at(1.0);
        let error_at_20 = evaluation.error_at(EVAL_HORIZON);
        let coherent = match (evaluation.stable, status) {
            (true, RunStatus::Converged | RunStatus::MaxIterations) => Some(error_at_20 <= GROWTH_LIMIT * error_at_1),
            (false, RunStatus::Skipped) => Some(error_at_20 > BLOWUP_LIMIT),
            _ => None,
        };
        Self {
            error_at_1,
            error_at_20,
            growth_limit: GROWTH_LIMIT,
            blowup_limit: BLOWUP_LIMIT,
            coherent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub out_of_grid: Vec<String>,
    pub weights: StencilWeights,
    pub status: RunStatus,
    pub iterations: usize,
    /// `J` at each accepted iterate, starting from the initial weights.
    #[serde(with = "numfmt::vec")]
    pub loss_history: Vec<f64>,
    /// `|delta_C|` per level at the final weights, summed over cases and horizons.
    #[serde(with = "numfmt::vec")]
    pub conv_delta_norms: Vec<f64>,
    pub evaluation: Evaluation,
    pub coherence: Coherence,
}

impl ExperimentResult {
    pub fn final_loss(&self) -> f64 {
        self.loss_history.last().copied().unwrap_or(f64::NAN)
    }

    pub fn max_error_unit(&self) -> f64 {
        self.evaluation.max_error_until(1.0)
    }

    pub fn max_error_total(&self) -> f64 {
        self.evaluation.max_error_until(EVAL_HORIZON)
    }
}

/// Trains from the centered weights and evaluates the result.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(config, &BfgsOptions::default())
}

/// [`run_experiment`] with optimizer settings other than `kappa_max`.
pub fn run_experiment_with(config: &ExperimentConfig, options: &BfgsOptions) -> Result<ExperimentResult> {
    let h_t = resolve_timestep(config)?;
    if config.kappa_max == 0 {
        return finish(
            config,
            h_t,
            StencilWeights::centered(config.n)?,
            RunStatus::Skipped,
            0,
            Vec::new(),
            Vec::new(),
        );
    }
    let training = generate_training_set(
        &config.problem()?,
        config.n_param,
        h_t,
        config.s,
        config.q,
        config.t,
        config.p,
        config.seed,
    )?;
    run_experiment_on(config, &training, options)
}

/// Trains on a given set (which fixes `h_t`) and evaluates the result.
pub fn run_experiment_on(
    config: &ExperimentConfig,
    training: &TrainingSet,
    options: &BfgsOptions,
) -> Result<ExperimentResult> {
    config.validate()?;
    if training.s != config.s || training.n_param != config.n_param || training.problem != config.problem()? {
        return Err(invalid("training", "set does not match the configuration"));
    }
    let initial = StencilWeights::centered(config.n)?;
    if config.kappa_max == 0 {
        return finish(
            config,
            training.h_t,
            initial,
            RunStatus::Skipped,
            0,
            Vec::new(),
            Vec::new(),
        );
    }
    let objective = RecurrentLoss::with_horizon(training, config.n, config.q)?;
    let options = BfgsOptions {
        kappa_max: config.kappa_max,
        ..*options
    };
    let state = bfgs_minimize(&objective, &initial.to_omega(), &options)?;
    let norms = objective.conv_delta_norms(&state.omega)?;
    finish(
        config,
        training.h_t,
        StencilWeights::from_omega(&state.omega)?,
        state.status.into(),
        state.kappa,
        state.loss_history().collect(),
        norms,
    )
}

fn finish(
    config: &ExperimentConfig,
    h_t: f64,
    weights: StencilWeights,
    status: RunStatus,
    iterations: usize,
    loss_history: Vec<f64>,
    conv_delta_norms: Vec<f64>,
) -> Result<ExperimentResult> {
    let problem = config.problem()?;
    let evaluation = evaluate_weights(&problem, config.n_param, config.s, h_t, &weights)?;
    let coherence = Coherence::assess(&evaluation, status);
    Ok(ExperimentResult {
        config: config.clone(),
        out_of_grid: config.out_of_grid().into_iter().map(String::from).collect(),
        weights,
        status,
        iterations,
        loss_history,
        conv_delta_norms,
        evaluation,
        coherence,
    })
}

/// Cartesian product of parameter values.
/// Field names in JSON match [`ExperimentConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterGrid {
    pub c: Vec<f64>,
    pub nu: Vec<f64>,
    #[serde(rename = "P")]
    pub period: Vec<f64>,
    pub p: Vec<u32>,
    #[serde(rename = "N")]
    pub n_param: Vec<usize>,
    pub n: Vec<usize>,
    pub s: Vec<usize>,
    pub h_t_multiplier: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<usize>,
    #[serde(rename = "T")]
    pub t: Vec<usize>,
    pub kappa_max: Vec<usize>,
}

impl ParameterGrid {
    /// All 36450 published combinations.
    pub fn table3() -> Self {
        Self {
            c: table3::C.to_vec(),
            nu: table3::NU.to_vec(),
            period: table3::PERIOD.to_vec(),
            p: table3::P.to_vec(),
            n_param: table3::N.to_vec(),
            n: table3::STENCIL.to_vec(),
            s: table3::S.to_vec(),
            h_t_multiplier: table3::MULTIPLIER.to_vec(),
            q: table3::Q.to_vec(),
            t: table3::T.to_vec(),
            kappa_max: table3::KAPPA_MAX.to_vec(),
        }
    }

    /// 192 configurations around the headline figures: `N = 101`, `p = 2`,
    /// `kappa_max = 100`, every `nu` and `s`, `n` up to 9, the nominal and
    /// 10% enlarged step, `Q in {1, 9}`, `T in {1, 10}`.
    pub fn curated() -> Self {
        Self {
            p: vec![2],
            n_param: vec![101],
            n: vec![3, 5, 7, 9],
            h_t_multiplier: vec![1.0, 1.1],
            q: vec![1, 9],
            t: vec![1, 10],
            kappa_max: vec![100],
            ..Self::table3()
        }
    }

    pub fn len(&self) -> usize {
        [
            self.c.len(),
            self.nu.len(),
            self.period.len(),
            self.p.len(),
            self.n_param.len(),
            self.n.len(),
            self.s.len(),
            self.h_t_multiplier.len(),
            self.q.len(),
            self.t.len(),
            self.kappa_max.len(),
        ]
        .iter()
        .product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every combination, each with a seed derived from `base_seed` and its
    /// other fields.
    pub fn configs(&self, base_seed: u64) -> Vec<ExperimentConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &c in &self.c {
            for &nu in &self.nu {
                for &period in &self.period {
                    for &p in &self.p {
                        for &n_param in &self.n_param {
                            for &n in &self.n {
                                for &s in &self.s {
                                    for &h_t_multiplier in &self.h_t_multiplier {
                                        for &q in &self.q {
                                            for &t in &self.t {
                                                for &kappa_max in &self.kappa_max {
                                                    let mut config = ExperimentConfig {
                                                        schema_version: SCHEMA_VERSION,
                                                        c,
                                                        nu,
                                                        period,
                                                        p,
                                                        n_param,
                                                        n,
                                                        s,
                                                        h_t_multiplier,
                                                        q,
                                                        t,
                                                        kappa_max,
                                                        seed: 0,
                                                    };
                                                    config.seed = config.derived_seed(base_seed);
                                                    out.push(config);
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// What the store keeps per configuration: a result or the error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRun {
    pub hash: String,
    pub config: ExperimentConfig,
    pub result: Option<ExperimentResult>,
    pub error: Option<String>,
}

/// One JSON file per configuration under `root/results`, plus `root/index.csv`.
#[derive(Debug, Clone)]
pub struct ResultStore {
    root: PathBuf,
}

impl ResultStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("results"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, config: &ExperimentConfig) -> PathBuf {
        self.root
            .join("results")
            .join(format!("{}.json", config.content_hash()))
    }

    pub fn index_path(&self) -> PathBuf {
        self.root.join("index.csv")
    }

    pub fn contains(&self, config: &ExperimentConfig) -> bool {
        self.path_for(config).is_file()
    }

    pub fn load(&self, config: &ExperimentConfig) -> Result<Option<StoredRun>> {
        let path = self.path_for(config);
        if !path.is_file() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_slice(&fs::read(path)?)?))
    }

    /// Every stored run, ordered by hash.
    pub fn runs(&self) -> Result<Vec<StoredRun>> {
        let mut paths: Vec<PathBuf> = fs::read_dir(self.root.join("results"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .into_iter()
            .map(|p| Ok(serde_json::from_slice(&fs::read(p)?)?))
            .collect()
    }

    /// Writes through a temporary file and a rename so readers never see a
    /// partial result.
    pub fn write(&self, run: &StoredRun) -> Result<()> {
        let path = self.path_for(&run.config);
        write_atomic(&path, &serde_json::to_vec_pretty(run)?)
    }

    /// Rewrites `index.csv` from the stored runs.
    pub fn write_index(&self) -> Result<usize> {
        let runs = self.runs()?;
        let mut out = Vec::new();
        writeln!(
            out,
            "hash,c,nu,P,p,N,n,s,h_t_multiplier,Q,T,kappa_max,seed,J_final,status,stable,max_error_0_1,max_error_0_20"
        )?;
        for run in &runs {
            let c = &run.config;
            write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                run.hash,
                f17(c.c),
                f17(c.nu),
                f17(c.period),
                c.p,
                c.n_param,
                c.n,
                c.s,
                f17(c.h_t_multiplier),
                c.q,
                c.t,
                c.kappa_max,
                c.seed
            )?;
            match &run.result {
                Some(r) => writeln!(
                    out,
                    ",{},{},{},{},{}",
                    f17(r.final_loss()),
                    r.status.as_str(),
                    r.evaluation.stable,
                    f17(r.max_error_unit()),
                    f17(r.max_error_total())
                )?,
                None => writeln!(out, ",,error,,,")?,
            }
        }
        write_atomic(&self.index_path(), &out)?;
        Ok(runs.len())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SweepSummary {
    pub ran: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Runs every configuration not already in `store` on at most `jobs` threads.
/// A failing configuration is stored with its error and does not stop the sweep.
pub fn sweep(configs: &[ExperimentConfig], store: &ResultStore, jobs: usize) -> Result<SweepSummary> {
    sweep_with(configs, store, jobs, run_experiment, |_, _| {})
}

/// [`sweep`] with a custom runner and a callback after each stored run.
pub fn sweep_with<R, F>(
    configs: &[ExperimentConfig],
    store: &ResultStore,
    jobs: usize,
    runner: R,
    progress: F,
) -> Result<SweepSummary>
where
    R: Fn(&ExperimentConfig) -> Result<ExperimentResult> + Sync,
    F: Fn(&ExperimentConfig, &StoredRun) + Sync,
{
    if configs.is_empty() {
        return Err(invalid("grid", "no configurations to run"));
    }
    let mut seen = BTreeSet::new();
    let unique: Vec<&ExperimentConfig> = configs.iter().filter(|c| seen.insert(c.content_hash())).collect();
    let pending: Vec<&ExperimentConfig> = unique.iter().copied().filter(|c| !store.contains(c)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| invalid("jobs", e.to_string()))?;
    let outcomes: Vec<Result<bool>> = pool.install(|| {
        pending
            .par_iter()
            .map(|config| {
                let outcome = config.validate().and_then(|_| runner(config));
                let ok = outcome.is_ok();
                let run = match outcome {
                    Ok(result) => StoredRun {
                        hash: config.content_hash(),
                        config: (*config).clone(),
                        result: Some(result),
                        error: None,
                    },
                    Err(e) => StoredRun {
                        hash: config.content_hash(),
                        config: (*config).clone(),
                        result: None,
                        error: Some(e.to_string()),
                    },
                };
                store.write(&run)?;
                progress(config, &run);
                Ok(ok)
            })
            .collect()
    });
    let mut summary = SweepSummary {
        skipped: unique.len() - pending.len(),
        ..SweepSummary::default()
    };
    for outcome in outcomes {
        if outcome? {
            summary.ran += 1;
        } else {
            summary.failed += 1;
        }
    }
    store.write_index()?;
    Ok(summary)
}
