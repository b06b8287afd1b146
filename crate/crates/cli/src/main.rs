//! Command-line front end: stencil weights, stability regions, training,
//! evaluation on the bump problem, parameter sweeps and plot data.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stencilnet::experiments::{
    evaluate_weights, resolve_timestep, run_experiment, sweep_with, ExperimentConfig, ExperimentResult, ParameterGrid,
    ResultStore, StoredRun, SCHEMA_VERSION,
};
use stencilnet::multistep::AbScheme;
use stencilnet::numfmt::f17;
use stencilnet::training::{train, BfgsOptions};
use stencilnet::{Error as CoreError, StencilWeights, TrainingSet};

const STORE_ENV: &str = "STENCILNET_STORE";

#[derive(Parser, Debug)]
#[command(
    name = "stencilnet",
    version,
    about = "Learned finite-difference stencils for periodic advection-diffusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print collocation or centered stencil weights as JSON.
    Weights {
        /// Stencil size (odd, at least 3).
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = WeightKind::Lagrange)]
        kind: WeightKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the AB-s stability boundary (and optionally a scaled spectrum) as CSV `re,im,kind`.
    /// The AB order comes from `--s`.
    Stability {
        /// Boundary points at theta = 2 pi i / samples.
        #[arg(long, default_value_t = 256)]
        samples: usize,
        /// Also print lambda h_t for the configured operator.
        #[arg(long)]
        spectrum: bool,
        /// Weights JSON for the spectrum; centered differences when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train stencil weights; log lines go to --log, final weights to stdout or --out.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Training set JSON to use instead of generating one.
        #[arg(long)]
        training: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate weights on the bump problem over t in (0, 20]; without --weights,
    /// train first as configured.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter grid into a resumable result store.
    Sweep {
        /// Result store directory.
        #[arg(long, env = STORE_ENV)]
        store: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Run the full published grid (36450 configurations) instead of the curated 192.
        #[arg(long, conflicts_with = "grid")]
        full: bool,
        /// Parameter grid JSON (lists per field).
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        /// Print the configurations that would run and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Write `errors.csv` and `eigenvalues.csv` for one stored result.
    ExportPlotData {
        /// Result JSON (a store entry or an `evaluate` output).
        #[arg(long, conflicts_with_all = ["store", "hash"])]
        result: Option<PathBuf>,
        #[arg(long, env = STORE_ENV, requires = "hash")]
        store: Option<PathBuf>,
        #[arg(long)]
        hash: Option<String>,
        /// Boundary points added to `eigenvalues.csv`.
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum WeightKind {
    Lagrange,
    Centered,
}

/// Experiment parameters. Values outside the published grid are accepted
/// with a warning.
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Configuration JSON; replaces the parameter flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration JSON and exit.
    #[arg(long)]
    print_config: bool,
    /// Advection speed c. Grid: {1}.
    #[arg(long = "c", default_value_t = 1.0)]
    c: f64,
    /// Diffusion coefficient nu. Grid: {0, 1e-4, 1e-2}.
    #[arg(long = "nu", default_value_t = 0.0)]
    nu: f64,
    /// Period P. Grid: {1}.
    #[arg(long = "P", default_value_t = 1.0)]
    period: f64,
    /// Decay rate p of the training data's Fourier coefficients. Grid: {2, 4, 8}; 0 also accepted.
    #[arg(long = "p", default_value_t = 2)]
    p: u32,
    /// Node parameter N (N+1 nodes). Grid: {51, 101, 201}.
    #[arg(long = "N", default_value_t = 101)]
    n_param: usize,
    /// Stencil size n (nearest neighbors). Grid: {3, 5, 7, 9, 11}.
    #[arg(long = "n", default_value_t = 9)]
    n: usize,
    /// Adams-Bashforth steps s. Grid: {2, 3}.
    #[arg(long = "s", default_value_t = 2)]
    s: usize,
    /// Time step as a multiple of the critical centered step h_{t,N,nu,s}. Grid: {1, 1.01, 1.1}.
    #[arg(long = "h-t-multiplier", default_value_t = 1.1)]
    h_t_multiplier: f64,
    /// Recurrent steps Q in the loss. Grid: {1, 3, 4, 5, 9}.
    #[arg(long = "Q", default_value_t = 1)]
    q: usize,
    /// Training cases T. Grid: {1, 10, 100}.
    #[arg(long = "T", default_value_t = 1)]
    t: usize,
    /// BFGS iteration limit kappa_max. Grid: {10, 100, 1000}; 0 skips training.
    #[arg(long = "kappa-max", default_value_t = 100)]
    kappa_max: usize,
    /// Seed for the training data.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_json(&text)?
            }
            None => {
                let config = ExperimentConfig {
                    schema_version: SCHEMA_VERSION,
                    c: self.c,
                    nu: self.nu,
                    period: self.period,
                    p: self.p,
                    n_param: self.n_param,
                    n: self.n,
                    s: self.s,
                    h_t_multiplier: self.h_t_multiplier,
                    q: self.q,
                    t: self.t,
                    kappa_max: self.kappa_max,
                    seed: self.seed,
                };
                config.validate()?;
                config
            }
        };
        let outside = config.out_of_grid();
        if !outside.is_empty() {
            eprintln!("warning: outside the published grid: {}", outside.join(", "));
        }
        Ok(config)
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read_weights(path: &Path) -> anyhow::Result<StencilWeights> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn boundary_rows(s: usize, samples: usize) -> anyhow::Result<String> {
    if samples == 0 {
        bail!(CoreError::InvalidParameter {
            name: "samples",
            reason: "must be positive".into()
        });
    }
    let scheme = AbScheme::new(s)?;
    let mut csv = String::new();
    for i in 0..samples {
        let theta = std::f64::consts::TAU * i as f64 / samples as f64;
        // AB-s for s >= 2 has alpha sums that vanish only at isolated angles.
        if let Ok(z) = scheme.stability_boundary(theta) {
            csv += &format!("{},{},boundary\n", f17(z.re), f17(z.im));
        }
    }
    Ok(csv)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Weights { n, kind, out } => {
            let weights = match kind {
                WeightKind::Lagrange => StencilWeights::lagrange(n)?,
                WeightKind::Centered => StencilWeights::centered(n)?,
            };
            emit(&out, &(serde_json::to_string_pretty(&weights)? + "\n"))
        }
        Command::Stability {
            samples,
            spectrum,
            weights,
            config,
            out,
        } => {
            let s = config.s;
            let mut csv = String::from("re,im,kind\n");
            csv += &boundary_rows(s, samples)?;
            if spectrum || weights.is_some() {
                let mut cfg = config.resolve()?;
                let weights = match &weights {
                    Some(path) => read_weights(path)?,
                    None => StencilWeights::centered(cfg.n)?,
                };
                cfg.n = weights.n();
                let h_t = resolve_timestep(&cfg)?;
                let grid = cfg.grid()?;
                let op = stencilnet::DiffOperator::new(grid, weights, cfg.problem()?)?;
                for l in op.eigenvalues() {
                    csv += &format!("{},{},eigenvalue\n", f17(l.re * h_t), f17(l.im * h_t));
                }
            }
            emit(&out, &csv)
        }
        Command::Train {
            config,
            training,
            log,
            out,
        } => {
            let cfg = config.resolve()?;
            if config.print_config {
                return emit(&None, &(cfg.to_json()? + "\n"));
            }
            let set = match &training {
                Some(path) => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    let set: TrainingSet = serde_json::from_str(&text)?;
                    set
                }
                None => stencilnet::exact_solution::generate_training_set(
                    &cfg.problem()?,
                    cfg.n_param,
                    resolve_timestep(&cfg)?,
                    cfg.s,
                    cfg.q,
                    cfg.t,
                    cfg.p,
                    cfg.seed,
                )?,
            };
            if cfg.kappa_max == 0 {
                bail!(CoreError::InvalidParameter {
                    name: "kappa_max",
                    reason: "training needs at least one iteration".into()
                });
            }
            let mut sink: Box<dyn Write> = match &log {
                Some(path) => Box::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?),
                None => Box::new(std::io::stderr()),
            };
            let options = BfgsOptions {
                kappa_max: cfg.kappa_max,
                ..BfgsOptions::default()
            };
            let mut write_error = None;
            let state = train(&StencilWeights::centered(cfg.n)?, &set, &options, |record| {
                let line = serde_json::to_string(record).expect("record serializes");
                if let Err(e) = writeln!(sink, "{line}") {
                    write_error.get_or_insert(e);
                }
            })?;
            if let Some(e) = write_error {
                return Err(e).context("writing the training log");
            }
            let weights = StencilWeights::from_omega(&state.omega)?;
            emit(&out, &(serde_json::to_string_pretty(&weights)? + "\n"))?;
            eprintln!(
                "{}",
                serde_json::json!({
                    "status": state.status.as_str(),
                    "iterations": state.kappa,
                    "loss": state.loss,
                    "grad_norm": state.grad_norm(),
                    "skipped_updates": state.skipped_updates,
                })
            );
            Ok(())
        }
        Command::Evaluate { config, weights, out } => {
            let cfg = config.resolve()?;
            if config.print_config {
                return emit(&None, &(cfg.to_json()? + "\n"));
            }
            let text = match &weights {
                Some(path) => {
                    let w = read_weights(path)?;
                    let h_t = resolve_timestep(&cfg)?;
                    let ev = evaluate_weights(&cfg.problem()?, cfg.n_param, cfg.s, h_t, &w)?;
                    serde_json::to_string_pretty(&ev)?
                }
                None => serde_json::to_string_pretty(&run_experiment(&cfg)?)?,
            };
            emit(&out, &(text + "\n"))
        }
        Command::Sweep {
            store,
            jobs,
            full,
            grid,
            base_seed,
            dry_run,
        } => {
            let grid = match &grid {
                Some(path) => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text)?
                }
                None if full => ParameterGrid::table3(),
                None => ParameterGrid::curated(),
            };
            let configs = grid.configs(base_seed);
            if dry_run {
                let mut text = String::new();
                for c in &configs {
                    text += &serde_json::to_string(c)?;
                    text.push('\n');
                }
                return emit(&None, &text);
            }
            let store = ResultStore::open(&store)?;
            let total = configs.len();
            let done = std::sync::atomic::AtomicUsize::new(0);
            let summary = sweep_with(&configs, &store, jobs, run_experiment, |_, run: &StoredRun| {
                let k = done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
                let state = match (&run.result, &run.error) {
                    (Some(r), _) => r.status.as_str().to_string(),
                    (None, Some(e)) => format!("error: {e}"),
                    _ => String::new(),
                };
                eprintln!("[{k}/{total}] {} {state}", &run.hash[..12]);
            })?;
            emit(&None, &(serde_json::to_string(&summary)? + "\n"))
        }
        Command::ExportPlotData {
            result,
            store,
            hash,
            samples,
            out,
        } => {
            let result = load_result(result.as_deref(), store.as_deref(), hash.as_deref())?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let ev = &result.evaluation;
            let mut errors = String::from("t,error\n");
            for (i, e) in ev.errors.iter().enumerate() {
                errors += &format!("{},{}\n", f17(ev.time(i)), f17(*e));
            }
            fs::write(out.join("errors.csv"), errors)?;
            let mut eig = String::from("re,im,kind\n");
            for [re, im] in &ev.scaled_eigenvalues {
                eig += &format!("{},{},eigenvalue\n", f17(*re), f17(*im));
            }
            eig += &boundary_rows(result.config.s, samples)?;
            fs::write(out.join("eigenvalues.csv"), eig)?;
            Ok(())
        }
    }
}

fn load_result(path: Option<&Path>, store: Option<&Path>, hash: Option<&str>) -> anyhow::Result<ExperimentResult> {
    let file = match (path, store, hash) {
        (Some(p), _, _) => p.to_path_buf(),
        (None, Some(root), Some(h)) => root.join("results").join(format!("{h}.json")),
        _ => bail!(CoreError::InvalidParameter {
            name: "result",
            reason: "give --result, or --store with --hash".into()
        }),
    };
    let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    // A store entry wraps the result; an `evaluate` output is the result itself.
    if value.get("hash").is_some() {
        let run: StoredRun = serde_json::from_value(value)?;
        match run.result {
            Some(r) => Ok(r),
            None => bail!("stored run failed: {}", run.error.unwrap_or_default()),
        }
    } else {
        Ok(serde_json::from_value(value)?)
    }
}

/// Usage errors (bad flags, invalid parameters) exit with 2, other failures with 1.
fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            eprintln!("{}", error_line("usage", &e.kind().to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let usage = err.chain().any(|cause| {
                matches!(
                    cause.downcast_ref::<CoreError>(),
                    Some(CoreError::InvalidParameter { .. } | CoreError::DimensionMismatch { .. })
                )
            });
            let message = format!("{err:#}");
            if usage {
                eprintln!("{}", error_line("usage", &message));
                ExitCode::from(2)
            } else {
                eprintln!("{}", error_line("runtime", &message));
                ExitCode::from(1)
            }
        }
    }
}
