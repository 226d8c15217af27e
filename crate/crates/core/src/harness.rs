//! Repeated-trial experiments: sweeps over n, epsilon or alpha, per-method
//! coverage and length, and a results CSV.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{seq::index::sample, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::conformal::{
    calibrate_differential, calibrate_dpcp, calibrate_oracle, calibrate_pscp, calibrate_split,
    CalibratedPredictor, ConformalConfig, EpsilonSplit, GridChoice, LevelCorrection, Method,
    PredictionInterval, ScoreFunction,
};
use crate::datagen::{gen_synthetic, load_csv, SplitSpec, SyntheticSpec, TabularDataset};
use crate::dp_quantile::BinGrid;
use crate::erm::{clip_l2, ErmSpec, ErmTrainer, LocationTrainer, Trainer};
use crate::error::{Error, Result};
use crate::mechanisms::PrivacyBudget;

/// Results CSV header, in column order.
pub const RESULT_COLUMNS: [&str; 16] = [
    "method",
    "sweep_name",
    "sweep_value",
    "repetition",
    "n",
    "epsilon",
    "epsilon1",
    "epsilon2",
    "alpha",
    "delta",
    "coverage",
    "mean_length",
    "threshold",
    "infeasible_flag",
    "data_hash",
    "seed",
];

/// Marker line appended when writing stops early.
pub const PARTIAL_MARKER: &str = "# partial results";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    SampleSize,
    PrivacyBudget,
    Miscoverage,
}

impl SweepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepKind::SampleSize => "sample-size",
            SweepKind::PrivacyBudget => "privacy-budget",
            SweepKind::Miscoverage => "miscoverage",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sample-size" | "n" => Ok(SweepKind::SampleSize),
            "privacy-budget" | "epsilon" => Ok(SweepKind::PrivacyBudget),
            "miscoverage" | "alpha" => Ok(SweepKind::Miscoverage),
            other => Err(Error::Plan(format!("unknown sweep `{other}`"))),
        }
    }
}

/// What an infeasible private cell reports instead of an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    WholeLine,
    /// Threshold at the largest grid edge, i.e. the score bound.
    MaxEdge,
}

impl Fallback {
    pub fn as_str(&self) -> &'static str {
        match self {
            Fallback::WholeLine => "whole-line",
            Fallback::MaxEdge => "max-edge",
        }
    }
}

impl FromStr for Fallback {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "whole-line" => Ok(Fallback::WholeLine),
            "max-edge" => Ok(Fallback::MaxEdge),
            other => Err(Error::Plan(format!("unknown fallback `{other}`"))),
        }
    }
}

/// Parameters held fixed while one of them is swept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedParams {
    pub n: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub delta: f64,
    pub split: EpsilonSplit,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Fresh training and test draws for every repetition.
    Synthetic(SyntheticSpec),
    /// One seeded train/test split of a CSV file; each repetition subsamples
    /// `n` training rows and evaluates on the whole test split.
    Csv {
        path: PathBuf,
        response: String,
        features: Vec<String>,
        test_fraction: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelChoice {
    Location { sigma_eps: f64 },
    Erm(ErmSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub sweep: SweepKind,
    pub grid: Vec<f64>,
    pub fixed: FixedParams,
    pub repetitions: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub data: DataSource,
    pub model: ModelChoice,
    /// Test pairs per repetition for synthetic data.
    pub test_size: usize,
    /// Raw score bound used to normalize scores; `None` picks a default
    /// from the data source.
    pub score_bound: Option<f64>,
    pub bins: usize,
    pub pscp_rule: LevelCorrection,
    pub fallback: Fallback,
    /// The oracle refits once per test point, so only this many test pairs
    /// are evaluated for it.
    pub oracle_test_points: usize,
}

impl ExperimentPlan {
    /// Sample-size sweep at alpha = 0.1, eps = 0.1.
    pub fn fig1() -> Self {
        Self {
            sweep: SweepKind::SampleSize,
            grid: vec![100.0, 200.0, 500.0, 1000.0, 2000.0, 5000.0],
            fixed: FixedParams {
                n: 2000,
                epsilon: 0.1,
                alpha: 0.1,
                delta: 1e-5,
                split: EpsilonSplit::Fraction(0.5),
            },
            repetitions: 100,
            methods: Method::ALL.to_vec(),
            seed: 0,
            data: DataSource::Synthetic(SyntheticSpec::default()),
            model: ModelChoice::Location { sigma_eps: 5.0 },
            test_size: 1000,
            score_bound: None,
            bins: crate::dp_quantile::DEFAULT_BINS,
            pscp_rule: LevelCorrection::log_bins(),
            fallback: Fallback::WholeLine,
            oracle_test_points: 200,
        }
    }

    /// Epsilon sweep at n = 2000, alpha = 0.1, with training epsilon fixed at 0.05.
    pub fn fig2() -> Self {
        let mut p = Self::fig1();
        p.sweep = SweepKind::PrivacyBudget;
        p.grid = vec![0.1, 0.2, 0.3, 0.5, 1.0];
        p.fixed.split = EpsilonSplit::FixedTraining(0.05);
        p
    }

    /// Alpha sweep at n = 2000, eps = 0.1.
    pub fn fig3() -> Self {
        let mut p = Self::fig1();
        p.sweep = SweepKind::Miscoverage;
        p.grid = vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3];
        p
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "fig1" => Ok(Self::fig1()),
            "fig2" => Ok(Self::fig2()),
            "fig3" => Ok(Self::fig3()),
            other => Err(Error::Plan(format!(
                "unknown preset `{other}` (expected fig1, fig2 or fig3)"
            ))),
        }
    }

    /// Parameters of one grid cell.
    pub fn cell(&self, value: f64) -> Result<Cell> {
        let mut n = self.fixed.n;
        let mut epsilon = self.fixed.epsilon;
        let mut alpha = self.fixed.alpha;
        match self.sweep {
            SweepKind::SampleSize => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::Plan(format!("sample size {value} is not a positive integer")));
                }
                n = value as usize;
            }
            SweepKind::PrivacyBudget => epsilon = value,
            SweepKind::Miscoverage => alpha = value,
        }
        let budget = PrivacyBudget::new(epsilon, self.fixed.delta)
            .map_err(|e| Error::Plan(format!("cell {value}: {e}")))?;
        let config = ConformalConfig::with_split(alpha, budget, self.fixed.split)
            .map_err(|e| Error::Plan(format!("cell {value}: {e}")))?;
        Ok(Cell {
            sweep_value: value,
            n,
            config,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Plan("grid must not be empty".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Plan("repetitions must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Plan("at least one method is required".into()));
        }
        if self.test_size == 0 || self.oracle_test_points == 0 {
            return Err(Error::Plan("test_size and oracle_test_points must be positive".into()));
        }
        if self.bins == 0 {
            return Err(Error::Plan("bins must be positive".into()));
        }
        if let Some(b) = self.score_bound {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::Plan(format!("score_bound must be positive, got {b}")));
            }
        }
        if let (DataSource::Csv { features, .. }, ModelChoice::Location { .. }) =
            (&self.data, &self.model)
        {
            if features.len() != 1 {
                return Err(Error::Plan("the location model needs exactly one feature".into()));
            }
        }
        for &v in &self.grid {
            self.cell(v)?;
        }
        Ok(())
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub sweep_value: f64,
    pub n: usize,
    pub config: ConformalConfig,
}

/// Outcome of one (method, cell, repetition).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub method: Method,
    pub sweep_name: SweepKind,
    pub sweep_value: f64,
    pub repetition: usize,
    pub n: usize,
    pub alpha: f64,
    /// Budget allotted to the method; zero for non-private methods.
    pub budget: PrivacyBudget,
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub coverage: f64,
    /// Infinite for whole-line intervals.
    pub mean_length: f64,
    pub threshold: f64,
    pub infeasible: bool,
    pub data_hash: String,
    /// Seed of the method's rng stream for this trial.
    pub seed: u64,
}

impl TrialResult {
    pub fn csv_record(&self) -> [String; 16] {
        [
            self.method.to_string(),
            self.sweep_name.to_string(),
            self.sweep_value.to_string(),
            self.repetition.to_string(),
            self.n.to_string(),
            self.budget.epsilon().to_string(),
            self.epsilon1.to_string(),
            self.epsilon2.to_string(),
            self.alpha.to_string(),
            self.budget.delta().to_string(),
            self.coverage.to_string(),
            self.mean_length.to_string(),
            self.threshold.to_string(),
            u8::from(self.infeasible).to_string(),
            self.data_hash.clone(),
            self.seed.to_string(),
        ]
    }
}

/// Mean and sample standard deviation per (method, sweep value).
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub method: Method,
    pub sweep_value: f64,
    pub trials: usize,
    pub infeasible: usize,
    pub coverage_mean: f64,
    pub coverage_sd: f64,
    pub length_mean: f64,
    pub length_sd: f64,
}

pub const SUMMARY_COLUMNS: [&str; 8] = [
    "method",
    "sweep_value",
    "trials",
    "infeasible",
    "coverage_mean",
    "coverage_sd",
    "length_mean",
    "length_sd",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
}

impl Summary {
    /// Groups rows by (method, sweep value) in first-seen order.
    pub fn from_rows(rows: &[TrialResult]) -> Self {
        let mut keys: Vec<(Method, u64)> = Vec::new();
        for r in rows {
            let key = (r.method, r.sweep_value.to_bits());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let cells = keys
            .into_iter()
            .map(|(method, bits)| {
                let group: Vec<&TrialResult> = rows
                    .iter()
                    .filter(|r| r.method == method && r.sweep_value.to_bits() == bits)
                    .collect();
                let cov: Vec<f64> = group.iter().map(|r| r.coverage).collect();
                let len: Vec<f64> = group.iter().map(|r| r.mean_length).collect();
                let (coverage_mean, coverage_sd) = mean_sd(&cov);
                let (length_mean, length_sd) = mean_sd(&len);
                CellSummary {
                    method,
                    sweep_value: f64::from_bits(bits),
                    trials: group.len(),
                    infeasible: group.iter().filter(|r| r.infeasible).count(),
                    coverage_mean,
                    coverage_sd,
                    length_mean,
                    length_sd,
                }
            })
            .collect();
        Summary { cells }
    }

    pub fn get(&self, method: Method, sweep_value: f64) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.sweep_value == sweep_value)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SUMMARY_COLUMNS)?;
        for c in &self.cells {
            w.write_record([
                c.method.to_string(),
                c.sweep_value.to_string(),
                c.trials.to_string(),
                c.infeasible.to_string(),
                c.coverage_mean.to_string(),
                c.coverage_sd.to_string(),
                c.length_mean.to_string(),
                c.length_sd.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Io {
            path: PathBuf::from("<summary>"),
            source: e,
        })?;
        Ok(())
    }
}

/// Mean and sample standard deviation (zero for a single value). Any
/// infinite value makes both infinite.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().any(|v| v.is_infinite()) {
        return (f64::INFINITY, f64::INFINITY);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Fraction of `(interval, y)` pairs with `y` inside the interval.
pub fn coverage_of(pairs: &[(PredictionInterval, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("coverage needs at least one test pair"));
    }
    let hit = pairs.iter().filter(|(i, y)| i.contains(*y)).count();
    Ok(hit as f64 / pairs.len() as f64)
}

/// Lebesgue measure of the symmetric difference of two intervals; `+inf`
/// when exactly one is the whole line, zero when both are.
pub fn symmetric_difference_length(a: &PredictionInterval, b: &PredictionInterval) -> f64 {
    match (a.is_whole_line(), b.is_whole_line()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => f64::INFINITY,
        (false, false) => {
            let overlap = (a.upper().min(b.upper()) - a.lower().max(b.lower())).max(0.0);
            a.length() + b.length() - 2.0 * overlap
        }
    }
}

/// Coverage and mean length of a predictor on `test`.
pub fn evaluate(predictor: &CalibratedPredictor, test: &TabularDataset) -> Result<(f64, f64)> {
    let pairs = test
        .iter()
        .map(|(x, y)| Ok((predictor.interval(x)?, y)))
        .collect::<Result<Vec<_>>>()?;
    let mean_length = pairs.iter().map(|(i, _)| i.length()).sum::<f64>() / pairs.len() as f64;
    Ok((coverage_of(&pairs)?, mean_length))
}

/// Stable 64-bit stream seed from labelled parts.
pub fn stream_seed(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn data_seed(seed: u64, value: f64, rep: usize) -> u64 {
    stream_seed(&[&seed.to_string(), "data", &value.to_bits().to_string(), &rep.to_string()])
}

fn method_seed(seed: u64, method: Method, value: f64, rep: usize) -> u64 {
    stream_seed(&[
        &seed.to_string(),
        method.as_str(),
        &value.to_bits().to_string(),
        &rep.to_string(),
    ])
}

/// Data shared by all repetitions: for CSV sources, the preprocessed splits.
struct Prepared {
    trainer: Box<dyn Trainer>,
    score_fn: ScoreFunction,
    grid: GridChoice,
    pool: Option<(TabularDataset, TabularDataset)>,
}

/// Copy of `data` with every row l2-clipped to `bound`.
pub fn clip_rows(data: &TabularDataset, bound: f64) -> Result<TabularDataset> {
    let features = data.iter().flat_map(|(x, _)| clip_l2(x, bound)).collect();
    let mut out = TabularDataset::new(
        features,
        data.n_features(),
        data.responses().to_vec(),
        data.column_names().to_vec(),
    )?;
    if let Some(s) = data.standardization() {
        // Keep the recorded statistics; values are already standardized.
        out = out.with_standardization(s.clone());
    }
    Ok(out)
}

/// `6 * 1.4826 * MAD` of the responses around their median.
pub fn robust_response_bound(ys: &[f64]) -> f64 {
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        if v.len().is_multiple_of(2) {
            0.5 * (v[m - 1] + v[m])
        } else {
            v[m]
        }
    };
    let mut v = ys.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = ys.iter().map(|y| (y - med).abs()).collect();
    let mad = median(&mut dev);
    if mad > 0.0 {
        6.0 * 1.4826 * mad
    } else {
        1.0
    }
}

fn prepare(plan: &ExperimentPlan) -> Result<Prepared> {
    let grid = GridChoice::Fixed(BinGrid::uniform(plan.bins)?);
    let trainer: Box<dyn Trainer> = match plan.model {
        ModelChoice::Location { sigma_eps } => Box::new(LocationTrainer::new(sigma_eps)),
        ModelChoice::Erm(spec) => Box::new(ErmTrainer { spec }),
    };
    match &plan.data {
        DataSource::Synthetic(spec) => {
            let bound = plan.score_bound.unwrap_or(spec.truncation());
            Ok(Prepared {
                trainer,
                score_fn: ScoreFunction::absolute_residual(bound)?,
                grid,
                pool: None,
            })
        }
        DataSource::Csv {
            path,
            response,
            features,
            test_fraction,
        } => {
            let split = load_csv(
                path,
                response,
                features,
                SplitSpec {
                    test_fraction: *test_fraction,
                    seed: plan.seed,
                },
            )?;
            if split.train.is_empty() || split.test.is_empty() {
                return Err(Error::Plan(format!(
                    "{} leaves an empty train or test split",
                    path.display()
                )));
            }
            let (mut train, mut test) = (split.train, split.test);
            if let ModelChoice::Erm(spec) = plan.model {
                let stats = train.fit_standardization();
                train.standardize(&stats);
                test.standardize(&stats);
                train = clip_rows(&train, spec.feature_bound)?;
                test = clip_rows(&test, spec.feature_bound)?;
            }
            let bound = plan
                .score_bound
                .unwrap_or_else(|| robust_response_bound(train.responses()));
            Ok(Prepared {
                trainer,
                score_fn: ScoreFunction::absolute_residual(bound)?,
                grid,
                pool: Some((train, test)),
            })
        }
    }
}

fn trial_data(
    plan: &ExperimentPlan,
    prepared: &Prepared,
    cell: &Cell,
    rep: usize,
) -> Result<(TabularDataset, TabularDataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed(plan.seed, cell.sweep_value, rep));
    match (&plan.data, &prepared.pool) {
        (DataSource::Synthetic(spec), _) => {
            let train = gen_synthetic(spec, cell.n, &mut rng)?;
            let test = gen_synthetic(spec, plan.test_size, &mut rng)?;
            Ok((train, test))
        }
        (DataSource::Csv { .. }, Some((train, test))) => {
            let n = cell.n.min(train.len());
            let idx = sample(&mut rng, train.len(), n).into_vec();
            Ok((train.select(&idx), test.clone()))
        }
        (DataSource::Csv { .. }, None) => unreachable!("csv pool is loaded in prepare"),
    }
}

fn fallback_result(
    plan: &ExperimentPlan,
    prepared: &Prepared,
    cfg: &ConformalConfig,
    train: &TabularDataset,
    test: &TabularDataset,
    rng: &mut dyn RngCore,
) -> Result<(f64, f64, f64)> {
    match plan.fallback {
        Fallback::WholeLine => Ok((1.0, f64::INFINITY, f64::INFINITY)),
        Fallback::MaxEdge => {
            let model = prepared.trainer.fit_private(train, cfg.training_budget(), rng)?;
            let threshold = prepared.score_fn.normalizer.bound();
            let pairs = test
                .iter()
                .map(|(x, y)| {
                    Ok((crate::conformal::invert_threshold(&prepared.score_fn, &model, x, threshold)?, y))
                })
                .collect::<Result<Vec<_>>>()?;
            let len = pairs.iter().map(|(i, _)| i.length()).sum::<f64>() / pairs.len() as f64;
            Ok((coverage_of(&pairs)?, len, threshold))
        }
    }
}

fn run_trial(
    plan: &ExperimentPlan,
    prepared: &Prepared,
    cell: &Cell,
    method: Method,
    rep: usize,
    train: &TabularDataset,
    test: &TabularDataset,
    data_hash: &str,
) -> Result<TrialResult> {
    let seed = method_seed(plan.seed, method, cell.sweep_value, rep);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = &cell.config;
    let trainer = prepared.trainer.as_ref();
    let s = &prepared.score_fn;
    let mut infeasible = false;
    let (coverage, mean_length, threshold) = match method {
        Method::Oracle => {
            let k = plan.oracle_test_points.min(test.len());
            let mut pairs = Vec::with_capacity(k);
            let mut thresholds = 0.0;
            for (x, y) in test.iter().take(k) {
                let p = calibrate_oracle(train, x, y, cfg.alpha, trainer, s)?;
                thresholds += p.record.threshold;
                pairs.push((p.interval(x)?, y));
            }
            let len = pairs.iter().map(|(i, _)| i.length()).sum::<f64>() / k as f64;
            (coverage_of(&pairs)?, len, thresholds / k as f64)
        }
        Method::Split => {
            let (a, b) = train.split_at(train.len() / 2);
            if a.is_empty() || b.is_empty() {
                return Err(Error::Plan(format!("split conformal needs n >= 2, got {}", train.len())));
            }
            let p = calibrate_split(&a, &b, cfg.alpha, trainer, s)?;
            let (c, l) = evaluate(&p, test)?;
            (c, l, p.record.threshold)
        }
        Method::Differential => {
            let p = calibrate_differential(train, cfg, trainer, s, &mut rng)?;
            let (c, l) = evaluate(&p, test)?;
            (c, l, p.record.threshold)
        }
        Method::Dpcp => match calibrate_dpcp(train, cfg, trainer, s, &prepared.grid, &mut rng) {
            Ok(p) => {
                let (c, l) = evaluate(&p, test)?;
                (c, l, p.record.threshold)
            }
            Err(Error::InfeasibleLevel { .. }) => {
                infeasible = true;
                fallback_result(plan, prepared, cfg, train, test, &mut rng)?
            }
            Err(e) => return Err(e),
        },
        Method::Pscp => match calibrate_pscp(
            train,
            cfg,
            trainer,
            s,
            &prepared.grid,
            &plan.pscp_rule,
            &mut rng,
        ) {
            Ok(p) => {
                let (c, l) = evaluate(&p, test)?;
                (c, l, p.record.threshold)
            }
            Err(Error::InfeasibleLevel { .. }) => {
                infeasible = true;
                let (half, _) = train.split_at(train.len() / 2);
                fallback_result(plan, prepared, cfg, &half, test, &mut rng)?
            }
            Err(e) => return Err(e),
        },
    };
    let (budget, epsilon1, epsilon2) = match method {
        Method::Oracle | Method::Split => (PrivacyBudget::zero(), 0.0, 0.0),
        Method::Differential => (cfg.budget, cfg.budget.epsilon(), 0.0),
        Method::Dpcp | Method::Pscp => (cfg.budget, cfg.epsilon1(), cfg.epsilon2()),
    };
    Ok(TrialResult {
        method,
        sweep_name: plan.sweep,
        sweep_value: cell.sweep_value,
        repetition: rep,
        n: train.len(),
        alpha: cfg.alpha,
        budget,
        epsilon1,
        epsilon2,
        coverage,
        mean_length,
        threshold,
        infeasible,
        data_hash: data_hash.to_string(),
        seed,
    })
}

/// All trials of one cell, ordered by repetition then by `plan.methods`.
fn run_cell(plan: &ExperimentPlan, prepared: &Prepared, cell: &Cell) -> Result<Vec<TrialResult>> {
    let per_rep: Vec<Result<Vec<TrialResult>>> = (0..plan.repetitions)
        .into_par_iter()
        .map(|rep| {
            let (train, test) = trial_data(plan, prepared, cell, rep)?;
            let hash = train.data_hash();
            plan.methods
                .iter()
                .map(|&m| run_trial(plan, prepared, cell, m, rep, &train, &test, &hash))
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_rep {
        rows.extend(r?);
    }
    Ok(rows)
}

fn csv_lines(records: &[[String; 16]]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::io("<results buffer>", e.into_error()))
}

/// Runs every cell of `plan`, streaming rows to `sink` in a fixed order.
/// `jobs = 0` uses all cores. Output is independent of `jobs`. If a write
/// fails, a partial-results marker is attempted before returning the error.
pub fn run_plan<W: Write>(plan: &ExperimentPlan, sink: W, jobs: usize) -> Result<(Vec<TrialResult>, Summary)> {
    plan.validate()?;
    let prepared = prepare(plan)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Plan(format!("cannot start worker pool: {e}")))?;
    let mut sink = sink;
    let sink_err = |e: std::io::Error| Error::io("<results sink>", e);
    sink.write_all(&csv_lines(&[RESULT_COLUMNS.map(String::from)])?)
        .map_err(sink_err)?;
    let mut all = Vec::new();
    for &value in &plan.grid {
        let cell = plan.cell(value)?;
        let rows = pool.install(|| run_cell(plan, &prepared, &cell))?;
        let records: Vec<[String; 16]> = rows.iter().map(TrialResult::csv_record).collect();
        if let Err(e) = sink.write_all(&csv_lines(&records)?).and_then(|_| sink.flush()) {
            let _ = writeln!(sink, "{PARTIAL_MARKER}");
            return Err(sink_err(e));
        }
        all.extend(rows);
    }
    let summary = Summary::from_rows(&all);
    Ok((all, summary))
}
