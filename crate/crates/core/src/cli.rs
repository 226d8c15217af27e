//! The `dpcp` command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 infeasible
//! privacy parameters.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conformal::{
    calibrate_differential, calibrate_dpcp, calibrate_oracle, calibrate_pscp, calibrate_split,
    minimal_feasible_epsilon, CalibratedPredictor, ConformalConfig, EpsilonSplit, Feasibility,
    GridChoice, LevelCorrection, Method, ScoreFunction,
};
use crate::datagen::{gen_synthetic, load_csv, SplitSpec, SyntheticSpec, TabularDataset};
use crate::dp_quantile::BinGrid;
use crate::erm::{clip_l2, ErmSpec, ErmTrainer, LocationTrainer, Loss, Trainer};
use crate::error::{Error, Result};
use crate::harness::{clip_rows, robust_response_bound, run_plan, ExperimentPlan};
use crate::mechanisms::PrivacyBudget;
use crate::plan::{apply_override, load_plan, render_plan, split_assignment};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dpcp", version, about = "Differentially private conformal prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a coverage/length sweep and write a results CSV.
    Experiment(ExperimentArgs),
    /// Calibrate one method and print the interval for one feature row.
    Predict(PredictArgs),
    /// Report whether the private quantile step is feasible.
    CheckFeasibility(FeasibilityArgs),
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Built-in protocol to start from (fig1, fig2, fig3).
    #[arg(long)]
    preset: Option<String>,
    /// key=value plan file applied on top of the preset.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Results CSV path; `<stem>.summary.csv` and `<stem>.plan.txt` are written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Extra key=value overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Location,
    Erm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Alpha0,
    LogBins,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Headed CSV with the training data; omit to draw synthetic data.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, requires = "csv")]
    response: Option<String>,
    /// Comma-separated feature columns.
    #[arg(long, requires = "csv", value_delimiter = ',')]
    features: Vec<String>,
    /// Synthetic sample size when no CSV is given.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value = "dpcp")]
    method: String,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    /// Fixed training epsilon; default is an even split.
    #[arg(long)]
    epsilon1: Option<f64>,
    /// Feature row, comma separated, in raw units.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x: Vec<f64>,
    /// Response of the test point; required by the oracle.
    #[arg(long, allow_hyphen_values = true)]
    y: Option<f64>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long, default_value_t = 0.01)]
    ridge: f64,
    #[arg(long, default_value_t = 3.0)]
    feature_bound: f64,
    /// Huber parameter; absolute loss when omitted.
    #[arg(long)]
    huber_kappa: Option<f64>,
    /// Noise scale of the location model.
    #[arg(long, default_value_t = 5.0)]
    sigma_eps: f64,
    /// Raw score bound; defaults to 3 sigma_eps for synthetic data and a
    /// robust spread of the responses for CSV data.
    #[arg(long)]
    score_bound: Option<f64>,
    #[arg(long, default_value_t = crate::dp_quantile::DEFAULT_BINS)]
    bins: usize,
    #[arg(long, value_enum, default_value = "log-bins")]
    pscp_rule: RuleArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct FeasibilityArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    /// Fixed training epsilon; default is an even split.
    #[arg(long)]
    epsilon1: Option<f64>,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Csv(_) => EXIT_IO,
        Error::InfeasibleLevel { .. } => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Experiment(a) => cmd_experiment(&a, &mut out),
        Command::Predict(a) => cmd_predict(&a, &mut out),
        Command::CheckFeasibility(a) => cmd_check_feasibility(&a, &mut out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("dpcp: {e}");
            exit_code(&e)
        }
    }
}

fn stdout_err(e: io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn split_of(epsilon1: Option<f64>) -> EpsilonSplit {
    epsilon1.map_or(EpsilonSplit::default(), EpsilonSplit::FixedTraining)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map_or("results".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}{suffix}"))
}

fn build_plan(a: &ExperimentArgs) -> Result<ExperimentPlan> {
    let base = match &a.preset {
        Some(p) => ExperimentPlan::preset(p)?,
        None => ExperimentPlan::fig1(),
    };
    let mut plan = match &a.plan {
        Some(path) => load_plan(path, base).map_err(|e| match e {
            // A missing or unreadable plan is a usage problem.
            Error::Io { path, source } => {
                Error::Plan(format!("cannot read plan file {}: {source}", path.display()))
            }
            other => other,
        })?,
        None => base,
    };
    for o in &a.overrides {
        let (k, v) = split_assignment(o)?;
        apply_override(&mut plan, k, v)?;
    }
    if let Some(seed) = a.seed {
        plan.seed = seed;
    }
    plan.validate()?;
    Ok(plan)
}

fn cmd_experiment(a: &ExperimentArgs, out: &mut dyn Write) -> Result<()> {
    let plan = build_plan(a)?;
    let partial = sibling(&a.out, ".csv.partial");
    let file = fs::File::create(&partial).map_err(|e| Error::io(&partial, e))?;
    let (_, summary) = run_plan(&plan, io::BufWriter::new(file), a.jobs).map_err(|e| match e {
        Error::Csv(c) => Error::io(&partial, io::Error::other(c.to_string())),
        other => other,
    })?;
    fs::rename(&partial, &a.out).map_err(|e| Error::io(&a.out, e))?;

    let summary_path = sibling(&a.out, ".summary.csv");
    let f = fs::File::create(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    summary.write_csv(f).map_err(|e| match e {
        Error::Csv(c) => Error::io(&summary_path, io::Error::other(c.to_string())),
        other => other,
    })?;
    let plan_path = sibling(&a.out, ".plan.txt");
    fs::write(&plan_path, render_plan(&plan)).map_err(|e| Error::io(&plan_path, e))?;

    writeln!(out, "results={}", a.out.display()).map_err(stdout_err)?;
    writeln!(out, "summary={}", summary_path.display()).map_err(stdout_err)?;
    for c in &summary.cells {
        writeln!(
            out,
            "method={} sweep_value={} trials={} infeasible={} coverage={:.4} length={:.4}",
            c.method, c.sweep_value, c.trials, c.infeasible, c.coverage_mean, c.length_mean
        )
        .map_err(stdout_err)?;
    }
    Ok(())
}

struct PredictData {
    data: TabularDataset,
    x: Vec<f64>,
    trainer: Box<dyn Trainer>,
    score_fn: ScoreFunction,
}

fn predict_data(a: &PredictArgs) -> Result<PredictData> {
    let model = a.model.unwrap_or(if a.csv.is_some() { ModelArg::Erm } else { ModelArg::Location });
    let erm = || {
        let loss = a.huber_kappa.map_or(Loss::Absolute, |kappa| Loss::Huber { kappa });
        ErmSpec::new(loss, a.ridge, a.feature_bound, true)
    };
    let (mut data, mut x) = match &a.csv {
        Some(path) => {
            let response = a
                .response
                .as_deref()
                .ok_or_else(|| Error::Plan("--csv needs --response".into()))?;
            if a.features.is_empty() {
                return Err(Error::Plan("--csv needs --features".into()));
            }
            let split = load_csv(path, response, &a.features, SplitSpec {
                test_fraction: 0.0,
                seed: a.seed,
            })?;
            (split.train, a.x.clone())
        }
        None => {
            let spec = SyntheticSpec::default();
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            (gen_synthetic(&spec, a.n, &mut rng)?, a.x.clone())
        }
    };
    if x.len() != data.n_features() {
        return Err(Error::Plan(format!(
            "--x has {} values but the data has {} features",
            x.len(),
            data.n_features()
        )));
    }
    let trainer: Box<dyn Trainer> = match model {
        ModelArg::Location => Box::new(LocationTrainer::new(a.sigma_eps)),
        ModelArg::Erm => {
            let spec = erm()?;
            let stats = data.fit_standardization();
            data.standardize(&stats);
            data = clip_rows(&data, spec.feature_bound)?;
            let z: Vec<f64> = x
                .iter()
                .zip(stats.means.iter().zip(&stats.stds))
                .map(|(v, (m, s))| (v - m) / s)
                .collect();
            x = clip_l2(&z, spec.feature_bound);
            Box::new(ErmTrainer { spec })
        }
    };
    let bound = match (a.score_bound, &a.csv) {
        (Some(b), _) => b,
        (None, Some(_)) => robust_response_bound(data.responses()),
        (None, None) => SyntheticSpec::default().truncation(),
    };
    Ok(PredictData {
        data,
        x,
        trainer,
        score_fn: ScoreFunction::absolute_residual(bound)?,
    })
}

fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let method: Method = a.method.parse().map_err(|_| {
        Error::Plan(format!(
            "unknown method `{}` (expected one of oracle, split, differential, dpcp, pscp)",
            a.method
        ))
    })?;
    let budget = PrivacyBudget::new(a.epsilon, a.delta)?;
    let cfg = ConformalConfig::with_split(a.alpha, budget, split_of(a.epsilon1))?;
    let p = predict_data(a)?;
    let grid = GridChoice::Fixed(BinGrid::uniform(a.bins)?);
    let rule = match a.pscp_rule {
        RuleArg::Alpha0 => LevelCorrection::Alpha0,
        RuleArg::LogBins => LevelCorrection::log_bins(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let trainer = p.trainer.as_ref();
    let n = p.data.len();
    let calibrated: Result<CalibratedPredictor> = match method {
        Method::Oracle => {
            let y = a.y.ok_or_else(|| Error::Plan("the oracle needs --y".into()))?;
            calibrate_oracle(&p.data, &p.x, y, cfg.alpha, trainer, &p.score_fn)
        }
        Method::Split => {
            let (train, cal) = p.data.split_at(n / 2);
            calibrate_split(&train, &cal, cfg.alpha, trainer, &p.score_fn)
        }
        Method::Differential => calibrate_differential(&p.data, &cfg, trainer, &p.score_fn, &mut rng),
        Method::Dpcp => calibrate_dpcp(&p.data, &cfg, trainer, &p.score_fn, &grid, &mut rng),
        Method::Pscp => {
            calibrate_pscp(&p.data, &cfg, trainer, &p.score_fn, &grid, &rule, &mut rng)
        }
    };
    let calibrated = match calibrated {
        Ok(c) => c,
        Err(e) => {
            if let Some(hint) = infeasible_hint(method, &cfg, n, &e) {
                eprintln!("hint: {hint}");
            }
            return Err(e);
        }
    };
    let interval = calibrated.interval(&p.x)?;
    let r = &calibrated.record;
    writeln!(
        out,
        "method={} n={} lower={} upper={} center={} radius={} threshold={} level={} \
         epsilon={} delta={} end_to_end_private={}",
        method,
        n,
        interval.lower(),
        interval.upper(),
        interval.center,
        interval.radius,
        r.threshold,
        r.level_used,
        r.epsilon_spent.epsilon(),
        r.epsilon_spent.delta(),
        r.end_to_end_private
    )
    .map_err(stdout_err)?;
    Ok(())
}

/// Smallest total n and total epsilon that make `method` feasible, for an
/// infeasible-level error.
fn infeasible_hint(method: Method, cfg: &ConformalConfig, n: usize, e: &Error) -> Option<String> {
    let Error::InfeasibleLevel {
        min_n, min_epsilon, ..
    } = e
    else {
        return None;
    };
    let (total_n, total_eps) = match method {
        Method::Pscp => {
            // Calibration uses the second half; the error is in its terms.
            let eps = match cfg.split {
                EpsilonSplit::Fraction(f) => min_epsilon / (1.0 - f),
                EpsilonSplit::FixedTraining(e1) => e1 + min_epsilon,
            };
            (min_n.saturating_mul(2).saturating_sub(1), Some(eps).filter(|v| v.is_finite()))
        }
        _ => (
            Feasibility::of(cfg, n).min_n(),
            minimal_feasible_epsilon(cfg.alpha, cfg.budget.delta(), cfg.split, n),
        ),
    };
    Some(format!(
        "min_n={total_n} at epsilon={} min_epsilon={} at n={n}",
        cfg.budget.epsilon(),
        total_eps.map_or("none".to_string(), |v| v.to_string())
    ))
}

fn cmd_check_feasibility(a: &FeasibilityArgs, out: &mut dyn Write) -> Result<()> {
    if a.n == 0 {
        return Err(Error::Plan("--n must be positive".into()));
    }
    let budget = PrivacyBudget::new(a.epsilon, a.delta)?;
    let cfg = ConformalConfig::with_split(a.alpha, budget, split_of(a.epsilon1))?;
    let f = Feasibility::of(&cfg, a.n);
    write!(
        out,
        "alpha1={} epsilon2={} threshold={} margin={} result={}",
        f.alpha1,
        f.epsilon2,
        f.threshold,
        f.margin,
        if f.is_feasible() { "pass" } else { "fail" }
    )
    .map_err(stdout_err)?;
    if !f.is_feasible() {
        let min_eps = minimal_feasible_epsilon(cfg.alpha, cfg.budget.delta(), cfg.split, a.n)
            .map_or("none".to_string(), |v| v.to_string());
        write!(out, " min_n={} min_epsilon={min_eps}", f.min_n()).map_err(stdout_err)?;
    }
    writeln!(out).map_err(stdout_err)?;
    Ok(())
}
