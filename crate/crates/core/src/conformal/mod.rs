//! Conformal prediction sets: oracle and split conformal, differential CP,
//! the fully private DPCP pipeline, and the private split baseline.

mod methods;
mod score;

pub use methods::{
    calibrate_differential, calibrate_dpcp, calibrate_oracle, calibrate_pscp, calibrate_split,
    differential_cp, dpcp, oracle_interval, pscp_baseline, split_cp, CalibratedPredictor,
    GridChoice,
};
pub use score::{
    invert_threshold, InverseFn, Normalizer, PredictionInterval, ScoreFn, ScoreFunction,
    ScoreKind,
};

use std::fmt;
use std::str::FromStr;

use crate::dp_quantile::corrected_level;
use crate::error::{Error, Result};
use crate::mechanisms::{compose, PrivacyBudget};

/// The prediction-set constructors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Oracle,
    Split,
    Differential,
    Dpcp,
    Pscp,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Oracle,
        Method::Split,
        Method::Differential,
        Method::Dpcp,
        Method::Pscp,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Split => "split",
            Method::Differential => "differential",
            Method::Dpcp => "dpcp",
            Method::Pscp => "pscp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Plan(format!("unknown method `{s}`")))
    }
}

/// How the total epsilon is divided between training and quantile release.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSplit {
    /// `eps1 = fraction * eps`.
    Fraction(f64),
    /// `eps1` fixed, `eps2 = eps - eps1`.
    FixedTraining(f64),
}

impl Default for EpsilonSplit {
    fn default() -> Self {
        EpsilonSplit::Fraction(0.5)
    }
}

/// Target level and privacy budget shared by all constructors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalConfig {
    pub alpha: f64,
    pub budget: PrivacyBudget,
    pub split: EpsilonSplit,
}

impl ConformalConfig {
    pub fn new(alpha: f64, budget: PrivacyBudget) -> Result<Self> {
        Self::with_split(alpha, budget, EpsilonSplit::default())
    }

    pub fn with_split(alpha: f64, budget: PrivacyBudget, split: EpsilonSplit) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if alpha <= budget.delta() {
            return Err(Error::InvalidLevel {
                alpha,
                delta: budget.delta(),
            });
        }
        match split {
            EpsilonSplit::Fraction(f) if !(f > 0.0 && f < 1.0) => {
                return Err(Error::invalid(format!(
                    "training share of epsilon must lie in (0, 1), got {f}"
                )))
            }
            EpsilonSplit::FixedTraining(e1) if !(e1 > 0.0 && e1 < budget.epsilon()) => {
                return Err(Error::invalid(format!(
                    "training epsilon {e1} must lie in (0, {})",
                    budget.epsilon()
                )))
            }
            _ => {}
        }
        Ok(Self {
            alpha,
            budget,
            split,
        })
    }

    /// Training epsilon.
    pub fn epsilon1(&self) -> f64 {
        match self.split {
            EpsilonSplit::Fraction(f) => f * self.budget.epsilon(),
            EpsilonSplit::FixedTraining(e1) => e1,
        }
    }

    /// Quantile-release epsilon.
    pub fn epsilon2(&self) -> f64 {
        self.budget.epsilon() - self.epsilon1()
    }

    /// Adjusted miscoverage `exp(-eps1) * (alpha - delta)`.
    pub fn alpha1(&self) -> f64 {
        (-self.epsilon1()).exp() * (self.alpha - self.budget.delta())
    }

    pub fn training_budget(&self) -> PrivacyBudget {
        PrivacyBudget::new(self.epsilon1(), self.budget.delta()).expect("validated split")
    }

    pub fn quantile_budget(&self) -> PrivacyBudget {
        PrivacyBudget::pure(self.epsilon2()).expect("validated split")
    }
}

/// `exp(-epsilon) * (alpha - delta)`; `epsilon = delta = 0` returns `alpha`.
pub fn differential_level(alpha: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if alpha <= delta {
        return Err(Error::InvalidLevel { alpha, delta });
    }
    Ok((-epsilon).exp() * (alpha - delta))
}

/// Feasibility of the private quantile step at `n` calibration scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub alpha1: f64,
    pub epsilon2: f64,
    /// `2 / (n * eps2)`.
    pub threshold: f64,
    /// `alpha1 - threshold`; positive iff feasible.
    pub margin: f64,
}

impl Feasibility {
    pub fn of(cfg: &ConformalConfig, n: usize) -> Self {
        let alpha1 = cfg.alpha1();
        let epsilon2 = cfg.epsilon2();
        let threshold = 2.0 / (n as f64 * epsilon2);
        Self {
            alpha1,
            epsilon2,
            threshold,
            margin: alpha1 - threshold,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.margin > 0.0
    }

    /// Smallest `n` that is feasible at these levels.
    pub fn min_n(&self) -> usize {
        if self.alpha1 > 0.0 {
            (2.0 / (self.alpha1 * self.epsilon2)).floor() as usize + 1
        } else {
            usize::MAX
        }
    }
}

/// Infimum of total epsilons feasible at `n`, or `None` when none is.
///
/// With a fixed training share `f`, feasibility reads
/// `n (1 - f) eps exp(-f eps) (alpha - delta) > 2`, whose left side peaks at
/// `eps = 1 / f`; the infimum is found by bisection below the peak.
pub fn minimal_feasible_epsilon(
    alpha: f64,
    delta: f64,
    split: EpsilonSplit,
    n: usize,
) -> Option<f64> {
    let gap = alpha - delta;
    if n == 0 || !(gap > 0.0) {
        return None;
    }
    let nf = n as f64;
    match split {
        EpsilonSplit::FixedTraining(e1) => Some(e1 + 2.0 / (nf * (-e1).exp() * gap)),
        EpsilonSplit::Fraction(f) => {
            let g = |eps: f64| nf * (1.0 - f) * eps * (-f * eps).exp() * gap - 2.0;
            let (mut lo, mut hi) = (0.0, 1.0 / f);
            if g(hi) <= 0.0 {
                return None;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Some(hi)
        }
    }
}

/// Level passed to the exponential mechanism by the private split baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelCorrection {
    /// `alpha - 2 / (n * eps)`, the correction used by DPCP.
    Alpha0,
    /// Rank-deviation correction of the private split conformal method:
    /// the quantile level
    /// `ceil((n+1)(1-alpha)) / (n (1 - gamma alpha)) + 2 ln(M / (gamma alpha)) / (n eps)`,
    /// minimized over `gamma_grid`. The returned miscoverage is one minus it.
    LogBins { gamma_grid: Vec<f64> },
}

impl LevelCorrection {
    pub fn log_bins() -> Self {
        LevelCorrection::LogBins {
            gamma_grid: (1..100).map(|k| k as f64 / 100.0).collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LevelCorrection::Alpha0 => "alpha0",
            LevelCorrection::LogBins { .. } => "log-bins",
        }
    }

    /// The corrected miscoverage fed to the penalties, or an infeasible-level
    /// error when it is not in `(0, 1)`.
    pub fn corrected(&self, alpha: f64, n: usize, epsilon: f64, bins: usize) -> Result<f64> {
        match self {
            LevelCorrection::Alpha0 => corrected_level(alpha, n, epsilon),
            LevelCorrection::LogBins { gamma_grid } => {
                if n == 0 {
                    return Err(Error::invalid("level correction needs n >= 1"));
                }
                let corrected = 1.0 - log_bins_level(alpha, n, epsilon, bins, gamma_grid);
                if corrected > 0.0 && corrected < 1.0 {
                    Ok(corrected)
                } else {
                    Err(log_bins_infeasible(alpha, n, epsilon, bins, gamma_grid, corrected))
                }
            }
        }
    }
}

fn log_bins_level(alpha: f64, n: usize, epsilon: f64, bins: usize, gamma_grid: &[f64]) -> f64 {
    let nf = n as f64;
    let rank = ((nf + 1.0) * (1.0 - alpha)).ceil();
    gamma_grid
        .iter()
        .filter(|&&g| g > 0.0 && g < 1.0)
        .map(|&g| {
            rank / (nf * (1.0 - g * alpha)) + 2.0 * (bins as f64 / (g * alpha)).ln() / (nf * epsilon)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Infeasibility of the log-bins rule, reported as a corrected level that
/// must exceed 0, with the smallest `n` (at this epsilon) and epsilon (at
/// this `n`) found by search.
fn log_bins_infeasible(
    alpha: f64,
    n: usize,
    epsilon: f64,
    bins: usize,
    gamma_grid: &[f64],
    corrected: f64,
) -> Error {
    let ok_n = |m: usize| log_bins_level(alpha, m, epsilon, bins, gamma_grid) < 1.0;
    let ok_eps = |e: f64| log_bins_level(alpha, n, e, bins, gamma_grid) < 1.0;
    let mut hi = n.max(1);
    while !ok_n(hi) && hi < usize::MAX / 4 {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok_n(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let min_epsilon = if ok_eps(f64::MAX) {
        let (mut lo, mut hi) = (epsilon, epsilon.max(1e-12));
        while !ok_eps(hi) {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ok_eps(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    } else {
        f64::INFINITY
    };
    Error::InfeasibleLevel {
        level: corrected,
        n,
        epsilon,
        threshold: 0.0,
        min_n: hi,
        min_epsilon,
    }
}

/// Audit record of one calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRecord {
    /// Threshold in raw score units; infinite for the whole-line fallback.
    pub threshold: f64,
    /// Miscoverage level handed to the quantile step.
    pub level_used: f64,
    /// Total budget of the released set (training plus calibration).
    pub epsilon_spent: PrivacyBudget,
    /// Budget spent by the calibration step alone.
    pub calibration_spent: PrivacyBudget,
    pub method: Method,
    /// False when some released quantity is computed without privacy.
    pub end_to_end_private: bool,
}

impl CalibrationRecord {
    pub(crate) fn non_private_calibration(
        method: Method,
        threshold: f64,
        level_used: f64,
        training: PrivacyBudget,
    ) -> Self {
        Self {
            threshold,
            level_used,
            epsilon_spent: training,
            calibration_spent: PrivacyBudget::zero(),
            method,
            end_to_end_private: false,
        }
    }

    pub(crate) fn private(
        method: Method,
        threshold: f64,
        level_used: f64,
        training: PrivacyBudget,
        calibration: PrivacyBudget,
    ) -> Result<Self> {
        Ok(Self {
            threshold,
            level_used,
            epsilon_spent: compose(training, calibration)?,
            calibration_spent: calibration,
            method,
            end_to_end_private: true,
        })
    }
}

/// Index `k = ceil((1 - alpha)(n + 1))` of the conformal order statistic.
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    // Guard against products such as 0.7 * 10 landing a hair above an integer.
    ((1.0 - alpha) * (n as f64 + 1.0) - 1e-9).ceil().max(1.0) as usize
}

/// The `ceil((1 - alpha)(n + 1))`-th smallest score, or `+inf` when that
/// index exceeds `n`.
pub fn empirical_conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("conformal quantile needs at least one score"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let k = conformal_rank(scores.len(), alpha);
    if k > scores.len() {
        return Ok(f64::INFINITY);
    }
    Ok(order_statistic(scores, k))
}

/// The `k`-th smallest value (1-based).
pub(crate) fn order_statistic(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}
