use std::fmt;
use std::sync::Arc;

use crate::erm::TrainedModel;
use crate::error::{Error, Result};

/// Symmetric interval `[center - radius, center + radius]`. An infinite
/// radius stands for the whole real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub center: f64,
    pub radius: f64,
}

impl PredictionInterval {
    pub fn new(center: f64, radius: f64) -> Result<Self> {
        if radius.is_nan() || radius < 0.0 {
            return Err(Error::invalid(format!("interval radius must be >= 0, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn whole_line(center: f64) -> Self {
        Self {
            center,
            radius: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.center - self.radius
    }

    pub fn upper(&self) -> f64 {
        self.center + self.radius
    }

    pub fn is_whole_line(&self) -> bool {
        self.radius.is_infinite()
    }

    pub fn length(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn contains(&self, y: f64) -> bool {
        self.is_whole_line() || (self.lower() <= y && y <= self.upper())
    }
}

/// Monotone map from raw scores onto `[0, 1]`: clip to `[0, bound]`, divide by `bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    bound: f64,
}

impl Normalizer {
    pub fn new(bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::invalid(format!("score bound must be positive, got {bound}")));
        }
        Ok(Self { bound })
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        raw.clamp(0.0, self.bound) / self.bound
    }

    pub fn denormalize(&self, unit: f64) -> f64 {
        unit * self.bound
    }
}

pub type ScoreFn = dyn Fn(&TrainedModel, &[f64], f64) -> f64 + Send + Sync;
pub type InverseFn = dyn Fn(&TrainedModel, &[f64], f64) -> PredictionInterval + Send + Sync;

/// Which nonconformity score to use.
#[derive(Clone)]
pub enum ScoreKind {
    /// `|y - prediction(x)|`.
    AbsoluteResidual,
    /// `1 - p(y | x)` for a caller-supplied class-probability map.
    OneMinusProbability(Arc<ScoreFn>),
    /// Arbitrary score, with an optional closed-form inverse.
    Custom {
        score: Arc<ScoreFn>,
        inverse: Option<Arc<InverseFn>>,
    },
}

impl fmt::Debug for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreKind::AbsoluteResidual => f.write_str("AbsoluteResidual"),
            ScoreKind::OneMinusProbability(_) => f.write_str("OneMinusProbability"),
            ScoreKind::Custom { inverse, .. } => f
                .debug_struct("Custom")
                .field("invertible", &inverse.is_some())
                .finish(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoreFunction {
    pub kind: ScoreKind,
    pub normalizer: Normalizer,
}

impl ScoreFunction {
    pub fn absolute_residual(bound: f64) -> Result<Self> {
        Ok(Self {
            kind: ScoreKind::AbsoluteResidual,
            normalizer: Normalizer::new(bound)?,
        })
    }

    /// Probability-based score; its raw range is already `[0, 1]`.
    pub fn one_minus_probability(probability: Arc<ScoreFn>) -> Self {
        Self {
            kind: ScoreKind::OneMinusProbability(probability),
            normalizer: Normalizer { bound: 1.0 },
        }
    }

    pub fn raw(&self, model: &TrainedModel, x: &[f64], y: f64) -> f64 {
        match &self.kind {
            ScoreKind::AbsoluteResidual => (y - model.predict(x)).abs(),
            ScoreKind::OneMinusProbability(p) => 1.0 - p(model, x, y),
            ScoreKind::Custom { score, .. } => score(model, x, y),
        }
    }

    pub fn normalized(&self, model: &TrainedModel, x: &[f64], y: f64) -> f64 {
        self.normalizer.normalize(self.raw(model, x, y))
    }
}

/// `{ y : score(x, y) <= threshold }` as an interval. An infinite threshold
/// gives the whole line.
pub fn invert_threshold(
    score_fn: &ScoreFunction,
    model: &TrainedModel,
    x: &[f64],
    threshold: f64,
) -> Result<PredictionInterval> {
    let center = model.predict(x);
    if threshold == f64::INFINITY {
        return Ok(PredictionInterval::whole_line(center));
    }
    match &score_fn.kind {
        ScoreKind::AbsoluteResidual => PredictionInterval::new(center, threshold),
        ScoreKind::Custom {
            inverse: Some(inv), ..
        } => Ok(inv(model, x, threshold)),
        other => Err(Error::Unsupported(format!(
            "score {other:?} has no closed-form inverse"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::PrivacyBudget;

    fn model(center: f64) -> TrainedModel {
        TrainedModel {
            weights: vec![],
            intercept: center,
            noise: None,
            budget_spent: PrivacyBudget::zero(),
            report: None,
        }
    }

    #[test]
    fn inversion_cases() {
        let s = ScoreFunction::absolute_residual(10.0).unwrap();
        let m = model(3.0);
        let i = invert_threshold(&s, &m, &[], 0.5).unwrap();
        assert_eq!((i.lower(), i.upper()), (2.5, 3.5));
        let p = invert_threshold(&s, &m, &[], 0.0).unwrap();
        assert_eq!((p.lower(), p.upper()), (3.0, 3.0));
        assert!(p.contains(3.0) && !p.contains(3.0001));
        let w = invert_threshold(&s, &m, &[], f64::INFINITY).unwrap();
        assert!(w.is_whole_line() && w.contains(-1e300));
    }

    #[test]
    fn non_invertible_score_is_unsupported() {
        let s = ScoreFunction::one_minus_probability(Arc::new(|_, _, _| 0.5));
        assert_eq!(s.raw(&model(0.0), &[], 1.0), 0.5);
        assert!(matches!(
            invert_threshold(&s, &model(0.0), &[], 0.3),
            Err(Error::Unsupported(_))
        ));
        let custom = ScoreFunction {
            kind: ScoreKind::Custom {
                score: Arc::new(|m, x, y| (y - m.predict(x)).abs() / 2.0),
                inverse: Some(Arc::new(|m, x, t| PredictionInterval {
                    center: m.predict(x),
                    radius: 2.0 * t,
                })),
            },
            normalizer: Normalizer::new(1.0).unwrap(),
        };
        let i = invert_threshold(&custom, &model(1.0), &[], 0.25).unwrap();
        assert_eq!(i.radius, 0.5);
    }

    #[test]
    fn normalizer_is_monotone_onto_unit() {
        let n = Normalizer::new(4.0).unwrap();
        assert_eq!(n.normalize(-1.0), 0.0);
        assert_eq!(n.normalize(2.0), 0.5);
        assert_eq!(n.normalize(9.0), 1.0);
        assert_eq!(n.denormalize(0.25), 1.0);
        assert!(Normalizer::new(0.0).is_err());
    }
}
