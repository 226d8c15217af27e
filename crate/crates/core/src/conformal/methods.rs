use rand::RngCore;

use super::score::{invert_threshold, PredictionInterval, ScoreFunction};
use super::{
    conformal_rank, differential_level, empirical_conformal_quantile, order_statistic,
    CalibrationRecord, ConformalConfig, Feasibility, LevelCorrection, Method,
};
use crate::datagen::TabularDataset;
use crate::dp_quantile::{self, dpq_release, dpq_release_at, BinGrid, DpqRequest, ScoreVector};
use crate::erm::{TrainedModel, Trainer};
use crate::error::{Error, Result};
use crate::mechanisms::PrivacyBudget;

/// Candidate thresholds for the private quantile.
#[derive(Debug, Clone, PartialEq)]
pub enum GridChoice {
    Fixed(BinGrid),
    /// Experimental data-dependent grid; see [`BinGrid::rank_based`].
    RankBased,
}

impl GridChoice {
    fn resolve(&self, scores: &ScoreVector) -> BinGrid {
        match self {
            GridChoice::Fixed(g) => g.clone(),
            GridChoice::RankBased => BinGrid::rank_based(scores),
        }
    }

    fn bins(&self, n: usize) -> usize {
        match self {
            GridChoice::Fixed(g) => g.bins(),
            GridChoice::RankBased => n + 1,
        }
    }
}

impl Default for GridChoice {
    fn default() -> Self {
        GridChoice::Fixed(BinGrid::default())
    }
}

/// A fitted model with a calibrated threshold.
#[derive(Debug, Clone)]
pub struct CalibratedPredictor {
    pub model: TrainedModel,
    pub score_fn: ScoreFunction,
    pub record: CalibrationRecord,
}

impl CalibratedPredictor {
    pub fn interval(&self, x: &[f64]) -> Result<PredictionInterval> {
        invert_threshold(&self.score_fn, &self.model, x, self.record.threshold)
    }
}

fn raw_scores(score_fn: &ScoreFunction, model: &TrainedModel, data: &TabularDataset) -> Vec<f64> {
    data.iter().map(|(x, y)| score_fn.raw(model, x, y)).collect()
}

fn normalized_scores(
    score_fn: &ScoreFunction,
    model: &TrainedModel,
    data: &TabularDataset,
) -> Result<ScoreVector> {
    ScoreVector::new(
        data.iter()
            .map(|(x, y)| score_fn.normalized(model, x, y))
            .collect(),
    )
}

/// Split conformal: non-private fit on `train`, conformal quantile of the
/// scores on `cal` at level `alpha`.
pub fn calibrate_split(
    train: &TabularDataset,
    cal: &TabularDataset,
    alpha: f64,
    trainer: &dyn Trainer,
    score_fn: &ScoreFunction,
) -> Result<CalibratedPredictor> {
    let model = trainer.fit(train)?;
    let threshold = empirical_conformal_quantile(&raw_scores(score_fn, &model, cal), alpha)?;
    Ok(CalibratedPredictor {
        model,
        score_fn: score_fn.clone(),
        record: CalibrationRecord::non_private_calibration(
            Method::Split,
            threshold,
            alpha,
            PrivacyBudget::zero(),
        ),
    })
}

pub fn split_cp(
    train: &TabularDataset,
    cal: &TabularDataset,
    x_new: &[f64],
    alpha: f64,
    trainer: &dyn Trainer,
    score_fn: &ScoreFunction,
) -> Result<PredictionInterval> {
    calibrate_split(train, cal, alpha, trainer, score_fn)?.interval(x_new)
}

/// Differential CP: private fit on all of `data` with the full budget, then
/// the non-private conformal quantile of the same scores at level
/// `exp(-eps) (alpha - delta)`. The released threshold is not private.
pub fn calibrate_differential(
    data: &TabularDataset,
    cfg: &ConformalConfig,
    trainer: &dyn Trainer,
    score_fn: &ScoreFunction,
    rng: &mut dyn RngCore,
) -> Result<CalibratedPredictor> {
    let level = differential_level(cfg.alpha, cfg.budget.epsilon(), cfg.budget.delta())?;
    let model = trainer.fit_private(data, cfg.budget, rng)?;
    let threshold = empirical_conformal_quantile(&raw_scores(score_fn, &model, data), level)?;
    Ok(CalibratedPredictor {
        model,
        score_fn: score_fn.clone(),
        record: CalibrationRecord::non_private_calibration(
            Method::Differential,
            threshold,
            level,
            cfg.budget,
        ),
    })
}

pub fn differential_cp(
    data: &TabularDataset,
    x_new: &[f64],
    cfg: &ConformalConfig,
    trainer: &dyn Trainer,
    score_fn: &ScoreFunction,
    rng: &mut dyn RngCore,
) -> Result<PredictionInterval> {
    calibrate_differential(data, cfg, trainer, score_fn, rng)?.interval(x_new)
}

/// DPCP: `(eps1, delta)` private fit on all of `data`, normalized scores on
/// the same rows, and a private threshold at level `alpha1` with budget
/// `eps2`. Feasibility is checked before any budget is spent.
pub fn calibrate_dpcp(
    data: &TabularDataset,
    cfg: &ConformalConfig,
    trainer: &dyn Trainer,
    score_fn: &ScoreFunction,
    grid: &GridChoice,
    rng: &mut dyn RngCore,
) -> Result<CalibratedPredictor> {
    let n = data.len();
    let feas = Feasibility::of(cfg, n);
    if n == 0 || !feas.is_feasible() || feas.alpha1 >= 1.0 {
        return Err(dp_quantile::infeasible(feas.alpha1, n, feas.epsilon2));
    }
    let model = trainer.fit_private(data, cfg.training_budget(), rng)?;
    let scores = normalized_scores(score_fn, &model, data)?;
    let request = DpqRequest::new(feas.alpha1, cfg.epsilon2(), grid.resolve(&scores))?;
    let q = dpq_release(&scores, &request, rng)?;
    let record = CalibrationRecord::private(
        Method::Dpcp,
        score_fn.normalizer.denormalize(q),
        feas.alpha1,
        cfg.training_budget(),
        cfg.quantile_budget(),
    )?;
    Ok(CalibratedPredictor {
        model,
        score_fn: score_fn.clone(),
        record,
    })
}

pub fn dpcp(
    data: &TabularDataset,
    x_new: &[f64],
    cfg: &ConformalConfig,
    trainer: &dyn Trainer,
    score_fn: &ScoreFunction,
    grid: &GridChoice,
    rng: &mut dyn RngCore,
) -> Result<(PredictionInterval, CalibrationRecord)> {
    let p = calibrate_dpcp(data, cfg, trainer, score_fn, grid, rng)?;
    Ok((p.interval(x_new)?, p.record))
}

/// Private split conformal baseline: the first half of `data` trains with
/// `(eps1, delta)`, the second half calibrates with `eps2` at the level
/// produced by `level_rule`.
pub fn calibrate_pscp(
    data: &TabularDataset,
    cfg: &ConformalConfig,
    trainer: &dyn Trainer,
    score_fn: &ScoreFunction,
    grid: &GridChoice,
    level_rule: &LevelCorrection,
    rng: &mut dyn RngCore,
) -> Result<CalibratedPredictor> {
    if data.len() < 2 {
        return Err(Error::invalid("private split conformal needs at least two rows"));
    }
    let (train, cal) = data.split_at(data.len() / 2);
    let alpha0 = level_rule.corrected(cfg.alpha, cal.len(), cfg.epsilon2(), grid.bins(cal.len()))?;
    let model = trainer.fit_private(&train, cfg.training_budget(), rng)?;
    let scores = normalized_scores(score_fn, &model, &cal)?;
    let q = dpq_release_at(&scores, alpha0, cfg.epsilon2(), &grid.resolve(&scores), rng)?;
    let record = CalibrationRecord::private(
        Method::Pscp,
        score_fn.normalizer.denormalize(q),
        alpha0,
        cfg.training_budget(),
        cfg.quantile_budget(),
    )?;
    Ok(CalibratedPredictor {
        model,
        score_fn: score_fn.clone(),
        record,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn pscp_baseline(
    data: &TabularDataset,
    x_new: &[f64],
    cfg: &ConformalConfig,
    trainer: &dyn Trainer,
    score_fn: &ScoreFunction,
    grid: &GridChoice,
    level_rule: &LevelCorrection,
    rng: &mut dyn RngCore,
) -> Result<(PredictionInterval, CalibrationRecord)> {
    let p = calibrate_pscp(data, cfg, trainer, score_fn, grid, level_rule, rng)?;
    Ok((p.interval(x_new)?, p.record))
}

/// Oracle conformal predictor: a non-private fit on `data` plus the test
/// point, thresholded at the `ceil((1 - alpha)(n + 1))`-th smallest of the
/// `n + 1` scores. Infeasible in practice since it needs `y_new`.
pub fn calibrate_oracle(
    data: &TabularDataset,
    x_new: &[f64],
    y_new: f64,
    alpha: f64,
    trainer: &dyn Trainer,
    score_fn: &ScoreFunction,
) -> Result<CalibratedPredictor> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let augmented = data.with_row(x_new, y_new);
    let model = trainer.fit(&augmented)?;
    let scores = raw_scores(score_fn, &model, &augmented);
    let k = conformal_rank(data.len(), alpha).min(scores.len());
    let threshold = order_statistic(&scores, k);
    Ok(CalibratedPredictor {
        model,
        score_fn: score_fn.clone(),
        record: CalibrationRecord::non_private_calibration(
            Method::Oracle,
            threshold,
            alpha,
            PrivacyBudget::zero(),
        ),
    })
}

pub fn oracle_interval(
    data: &TabularDataset,
    x_new: &[f64],
    y_new: f64,
    alpha: f64,
    trainer: &dyn Trainer,
    score_fn: &ScoreFunction,
) -> Result<PredictionInterval> {
    calibrate_oracle(data, x_new, y_new, alpha, trainer, score_fn)?.interval(x_new)
}
