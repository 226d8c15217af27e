//! Plain-text `key = value` experiment plans.
//!
//! Blank lines and `#` comments are ignored. Keys are applied in order on
//! top of a base plan, so `preset = fig2` followed by `repetitions = 10`
//! does what it says. Unknown keys are errors.

use std::path::{Path, PathBuf};

use crate::conformal::{EpsilonSplit, LevelCorrection, Method};
use crate::datagen::SyntheticSpec;
use crate::erm::{ErmSpec, Loss};
use crate::error::{Error, Result};
use crate::harness::{DataSource, ExperimentPlan, ModelChoice};

/// Every accepted key.
pub const PLAN_KEYS: &[&str] = &[
    "preset",
    "sweep",
    "grid",
    "n",
    "epsilon",
    "alpha",
    "delta",
    "epsilon1",
    "epsilon_fraction",
    "repetitions",
    "methods",
    "seed",
    "test_size",
    "score_bound",
    "bins",
    "pscp_rule",
    "fallback",
    "oracle_test_points",
    "data",
    "csv_path",
    "response",
    "features",
    "test_fraction",
    "synthetic_b",
    "sigma_x",
    "sigma_eps",
    "model",
    "location_sigma",
    "loss",
    "huber_kappa",
    "ridge",
    "feature_bound",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Plan(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn default_erm() -> ErmSpec {
    ErmSpec::new(Loss::Absolute, 0.01, 3.0, true).expect("valid defaults")
}

fn erm_mut<'a>(plan: &'a mut ExperimentPlan, key: &str) -> Result<&'a mut ErmSpec> {
    match &mut plan.model {
        ModelChoice::Erm(spec) => Ok(spec),
        ModelChoice::Location { .. } => {
            Err(Error::Plan(format!("`{key}` needs `model = erm`")))
        }
    }
}

fn synthetic_mut<'a>(plan: &'a mut ExperimentPlan, key: &str) -> Result<&'a mut SyntheticSpec> {
    match &mut plan.data {
        DataSource::Synthetic(spec) => Ok(spec),
        DataSource::Csv { .. } => Err(Error::Plan(format!("`{key}` needs `data = synthetic`"))),
    }
}

fn csv_mut(plan: &mut ExperimentPlan) -> (&mut PathBuf, &mut String, &mut Vec<String>, &mut f64) {
    if let DataSource::Synthetic(_) = plan.data {
        plan.data = DataSource::Csv {
            path: PathBuf::new(),
            response: String::new(),
            features: Vec::new(),
            test_fraction: 0.5,
        };
    }
    match &mut plan.data {
        DataSource::Csv {
            path,
            response,
            features,
            test_fraction,
        } => (path, response, features, test_fraction),
        DataSource::Synthetic(_) => unreachable!(),
    }
}

/// Applies one `key = value` pair.
pub fn apply_override(plan: &mut ExperimentPlan, key: &str, value: &str) -> Result<()> {
    let key = key.trim();
    let value = value.trim();
    match key {
        "preset" => *plan = ExperimentPlan::preset(value)?,
        "sweep" => plan.sweep = value.parse()?,
        "grid" => plan.grid = list(value).map(|v| num(key, v)).collect::<Result<_>>()?,
        "n" => plan.fixed.n = num(key, value)?,
        "epsilon" => plan.fixed.epsilon = num(key, value)?,
        "alpha" => plan.fixed.alpha = num(key, value)?,
        "delta" => plan.fixed.delta = num(key, value)?,
        "epsilon1" => plan.fixed.split = EpsilonSplit::FixedTraining(num(key, value)?),
        "epsilon_fraction" => plan.fixed.split = EpsilonSplit::Fraction(num(key, value)?),
        "repetitions" => plan.repetitions = num(key, value)?,
        "methods" => {
            plan.methods = if value == "all" {
                Method::ALL.to_vec()
            } else {
                list(value).map(str::parse).collect::<Result<_>>()?
            }
        }
        "seed" => plan.seed = num(key, value)?,
        "test_size" => plan.test_size = num(key, value)?,
        "score_bound" => {
            plan.score_bound = if value == "auto" {
                None
            } else {
                Some(num(key, value)?)
            }
        }
        "bins" => plan.bins = num(key, value)?,
        "pscp_rule" => {
            plan.pscp_rule = match value {
                "alpha0" => LevelCorrection::Alpha0,
                "log-bins" => LevelCorrection::log_bins(),
                other => return Err(Error::Plan(format!("unknown pscp_rule `{other}`"))),
            }
        }
        "fallback" => plan.fallback = value.parse()?,
        "oracle_test_points" => plan.oracle_test_points = num(key, value)?,
        "data" => match value {
            "synthetic" => plan.data = DataSource::Synthetic(SyntheticSpec::default()),
            "csv" => {
                csv_mut(plan);
            }
            other => return Err(Error::Plan(format!("unknown data source `{other}`"))),
        },
        "csv_path" => *csv_mut(plan).0 = PathBuf::from(value),
        "response" => *csv_mut(plan).1 = value.to_string(),
        "features" => *csv_mut(plan).2 = list(value).map(String::from).collect(),
        "test_fraction" => *csv_mut(plan).3 = num(key, value)?,
        "synthetic_b" => synthetic_mut(plan, key)?.b = num(key, value)?,
        "sigma_x" => synthetic_mut(plan, key)?.sigma_x = num(key, value)?,
        "sigma_eps" => synthetic_mut(plan, key)?.sigma_eps = num(key, value)?,
        "model" => {
            plan.model = match value {
                "location" => ModelChoice::Location { sigma_eps: 5.0 },
                "erm" => ModelChoice::Erm(default_erm()),
                other => return Err(Error::Plan(format!("unknown model `{other}`"))),
            }
        }
        "location_sigma" => match &mut plan.model {
            ModelChoice::Location { sigma_eps } => *sigma_eps = num(key, value)?,
            ModelChoice::Erm(_) => {
                return Err(Error::Plan("`location_sigma` needs `model = location`".into()))
            }
        },
        "loss" => {
            let spec = erm_mut(plan, key)?;
            spec.loss = match value {
                "absolute" => Loss::Absolute,
                "huber" => Loss::Huber { kappa: 1.0 },
                other => return Err(Error::Plan(format!("unknown loss `{other}`"))),
            }
        }
        "huber_kappa" => {
            let kappa = num(key, value)?;
            let spec = erm_mut(plan, key)?;
            spec.loss = Loss::Huber { kappa };
        }
        "ridge" => erm_mut(plan, key)?.ridge = num(key, value)?,
        "feature_bound" => erm_mut(plan, key)?.feature_bound = num(key, value)?,
        other => {
            return Err(Error::Plan(format!(
                "unknown plan key `{other}`; accepted keys: {}",
                PLAN_KEYS.join(", ")
            )))
        }
    }
    Ok(())
}

/// Splits `key=value`.
pub fn split_assignment(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Error::Plan(format!("expected key=value, got `{s}`")))
}

/// Applies every line of `text` to `base`.
pub fn parse_plan(text: &str, base: ExperimentPlan) -> Result<ExperimentPlan> {
    let mut plan = base;
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = split_assignment(line).map_err(|e| Error::Plan(format!("line {}: {e}", i + 1)))?;
        apply_override(&mut plan, k, v).map_err(|e| Error::Plan(format!("line {}: {e}", i + 1)))?;
    }
    plan.validate()?;
    Ok(plan)
}

pub fn load_plan(path: &Path, base: ExperimentPlan) -> Result<ExperimentPlan> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_plan(&text, base)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Plan text that parses back to `plan`.
pub fn render_plan(plan: &ExperimentPlan) -> String {
    let mut lines = vec![
        format!("sweep = {}", plan.sweep),
        format!("grid = {}", join(&plan.grid)),
        format!("n = {}", plan.fixed.n),
        format!("epsilon = {}", plan.fixed.epsilon),
        format!("alpha = {}", plan.fixed.alpha),
        format!("delta = {}", plan.fixed.delta),
        match plan.fixed.split {
            EpsilonSplit::Fraction(f) => format!("epsilon_fraction = {f}"),
            EpsilonSplit::FixedTraining(e) => format!("epsilon1 = {e}"),
        },
        format!("repetitions = {}", plan.repetitions),
        format!("methods = {}", join(&plan.methods)),
        format!("seed = {}", plan.seed),
        format!("test_size = {}", plan.test_size),
        format!(
            "score_bound = {}",
            plan.score_bound.map_or("auto".to_string(), |b| b.to_string())
        ),
        format!("bins = {}", plan.bins),
        format!("fallback = {}", plan.fallback.as_str()),
        format!("oracle_test_points = {}", plan.oracle_test_points),
    ];
    match &plan.pscp_rule {
        LevelCorrection::LogBins { gamma_grid } if *gamma_grid == log_bins_grid() => {
            lines.push("pscp_rule = log-bins".into())
        }
        LevelCorrection::LogBins { .. } => {
            lines.push("# pscp_rule = log-bins with a custom gamma grid".into())
        }
        LevelCorrection::Alpha0 => lines.push("pscp_rule = alpha0".into()),
    }
    match &plan.data {
        DataSource::Synthetic(s) => {
            lines.push("data = synthetic".into());
            lines.push(format!("synthetic_b = {}", s.b));
            lines.push(format!("sigma_x = {}", s.sigma_x));
            lines.push(format!("sigma_eps = {}", s.sigma_eps));
        }
        DataSource::Csv {
            path,
            response,
            features,
            test_fraction,
        } => {
            lines.push("data = csv".into());
            lines.push(format!("csv_path = {}", path.display()));
            lines.push(format!("response = {response}"));
            lines.push(format!("features = {}", features.join(",")));
            lines.push(format!("test_fraction = {test_fraction}"));
        }
    }
    match plan.model {
        ModelChoice::Location { sigma_eps } => {
            lines.push("model = location".into());
            lines.push(format!("location_sigma = {sigma_eps}"));
        }
        ModelChoice::Erm(spec) => {
            lines.push("model = erm".into());
            match spec.loss {
                Loss::Absolute => lines.push("loss = absolute".into()),
                Loss::Huber { kappa } => lines.push(format!("huber_kappa = {kappa}")),
            }
            lines.push(format!("ridge = {}", spec.ridge));
            lines.push(format!("feature_bound = {}", spec.feature_bound));
        }
    }
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

fn log_bins_grid() -> Vec<f64> {
    match LevelCorrection::log_bins() {
        LevelCorrection::LogBins { gamma_grid } => gamma_grid,
        LevelCorrection::Alpha0 => unreachable!(),
    }
}
