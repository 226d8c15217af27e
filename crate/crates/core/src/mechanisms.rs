//! Differential-privacy primitives: Laplace and Gaussian noise, the
//! exponential mechanism, and basic budget composition.
//!
//! Every sampler takes the random source explicitly. There is no global RNG,
//! so a seeded `ChaCha8Rng` (or any other `Rng`) makes a run reproducible.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// An `(epsilon, delta)` privacy budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    /// Builds a budget with `epsilon > 0` and `0 <= delta < 1`.
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Self::check_delta(delta)?;
        Ok(Self { epsilon, delta })
    }

    /// Pure `epsilon`-DP budget.
    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    /// The zero budget spent by non-private steps. It is the identity of
    /// [`compose`] and is not accepted by [`PrivacyBudget::new`].
    pub const fn zero() -> Self {
        Self {
            epsilon: 0.0,
            delta: 0.0,
        }
    }

    fn check_delta(delta: f64) -> Result<()> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::invalid(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_zero(&self) -> bool {
        self.epsilon == 0.0 && self.delta == 0.0
    }
}

/// Basic sequential composition: `(e1 + e2, d1 + d2)`.
pub fn compose(a: PrivacyBudget, b: PrivacyBudget) -> Result<PrivacyBudget> {
    let delta = a.delta + b.delta;
    if delta >= 1.0 {
        return Err(Error::BudgetOverflow { delta });
    }
    Ok(PrivacyBudget {
        epsilon: a.epsilon + b.epsilon,
        delta,
    })
}

/// Draws from the zero-centred Laplace distribution with the given scale.
///
/// Uses the inverse CDF of a single uniform draw on the open interval
/// `(-1/2, 1/2)`.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!("laplace scale must be positive, got {scale}")));
    }
    Ok(scale * standard_laplace(rng))
}

fn standard_laplace<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // `random::<f64>()` is in [0, 1); reject the single endpoint so ln(0) never occurs.
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u - 0.5;
        }
    };
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Noise calibration for the Gaussian mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCalibration {
    pub sensitivity: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Per-coordinate standard deviation.
    pub sigma: f64,
}

impl GaussianCalibration {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(rng);
        self.sigma * z
    }
}

/// `sigma^2 = 2 ln(1.25 / delta) * sensitivity^2 / epsilon^2`.
pub fn gaussian_calibrate(sensitivity: f64, budget: PrivacyBudget) -> Result<GaussianCalibration> {
    if !(sensitivity.is_finite() && sensitivity >= 0.0) {
        return Err(Error::invalid(format!(
            "sensitivity must be nonnegative, got {sensitivity}"
        )));
    }
    if budget.delta == 0.0 {
        return Err(Error::Unsupported(
            "the Gaussian mechanism requires delta > 0".into(),
        ));
    }
    let sigma = (2.0 * (1.25 / budget.delta).ln()).sqrt() * sensitivity / budget.epsilon;
    Ok(GaussianCalibration {
        sensitivity,
        epsilon: budget.epsilon,
        delta: budget.delta,
        sigma,
    })
}

/// Penalties for the exponential mechanism. Candidate `j` is selected with
/// probability proportional to `exp(-epsilon * w_j / (2 * sensitivity))`,
/// so smaller penalties are preferred.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpMechWeights {
    utilities: Vec<f64>,
    sensitivity: f64,
    epsilon: f64,
}

impl ExpMechWeights {
    pub fn new(utilities: Vec<f64>, sensitivity: f64, epsilon: f64) -> Result<Self> {
        if utilities.is_empty() {
            return Err(Error::invalid("exponential mechanism needs at least one candidate"));
        }
        if let Some(u) = utilities.iter().find(|u| !u.is_finite()) {
            return Err(Error::invalid(format!("non-finite utility {u}")));
        }
        if !(sensitivity.is_finite() && sensitivity > 0.0) {
            return Err(Error::invalid(format!("sensitivity must be positive, got {sensitivity}")));
        }
        if !(epsilon > 0.0) || epsilon.is_nan() {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            utilities,
            sensitivity,
            epsilon,
        })
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Unnormalized weights after shifting utilities by their minimum, so the
    /// best candidate has weight exactly 1.
    fn shifted_weights(&self) -> Vec<f64> {
        let min = self.utilities.iter().copied().fold(f64::INFINITY, f64::min);
        let scale = self.epsilon / (2.0 * self.sensitivity);
        self.utilities
            .iter()
            .map(|&u| (-(scale * (u - min))).exp())
            .collect()
    }

    /// Exact selection probabilities.
    pub fn probabilities(&self) -> Vec<f64> {
        let w = self.shifted_weights();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

/// Samples an index from the exponential mechanism.
pub fn exp_mech_sample<R: Rng + ?Sized>(weights: &ExpMechWeights, rng: &mut R) -> usize {
    let w = weights.shifted_weights();
    let total: f64 = w.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (j, &wj) in w.iter().enumerate() {
        if target < wj {
            return j;
        }
        target -= wj;
    }
    // Rounding can leave `target` a hair above the last cumulative weight.
    w.iter().rposition(|&x| x > 0.0).unwrap_or(w.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.0, 0.0).is_err());
        assert!(PrivacyBudget::new(-1.0, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(1.0, -0.1).is_err());
        assert!(PrivacyBudget::new(f64::NAN, 0.0).is_err());
        assert!(PrivacyBudget::new(0.1, 0.999).is_ok());
    }

    #[test]
    fn compose_table_allocation() {
        let train = PrivacyBudget::new(0.05, 1e-5).unwrap();
        let quant = PrivacyBudget::pure(0.05).unwrap();
        let total = compose(train, quant).unwrap();
        assert!((total.epsilon() - 0.10).abs() < 1e-15);
        assert_eq!(total.delta(), 1e-5);
    }

    #[test]
    fn compose_identity_and_overflow() {
        let b = PrivacyBudget::pure(0.3).unwrap();
        assert_eq!(compose(b, PrivacyBudget::zero()).unwrap(), b);
        let a = PrivacyBudget::new(0.5, 0.4).unwrap();
        let c = PrivacyBudget::new(0.5, 0.7).unwrap();
        assert!(matches!(compose(a, c), Err(Error::BudgetOverflow { .. })));
    }

    #[test]
    fn laplace_rejects_bad_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(laplace_sample(0.0, &mut rng).is_err());
        assert!(laplace_sample(-1.0, &mut rng).is_err());
        assert!(laplace_sample(f64::INFINITY, &mut rng).is_err());
    }

    #[test]
    fn laplace_scale_from_location_setup() {
        // 6 * sigma_eps / (n * eps) with sigma_eps = 5, n = 2000, eps = 0.1.
        let scale = 6.0 * 5.0 / (2000.0 * 0.1);
        assert!((scale - 0.15f64).abs() < 1e-15);
    }

    #[test]
    fn laplace_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mean = (0..n).map(|_| laplace_sample(1.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        // E|Lap(0, b)| = b; numerically integrated to 2.0 for b = 2.
        let abs_mean =
            (0..n).map(|_| laplace_sample(2.0, &mut rng).unwrap().abs()).sum::<f64>() / n as f64;
        assert!((abs_mean - 2.0).abs() < 0.02, "abs mean {abs_mean}");
    }

    #[test]
    fn laplace_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|_| laplace_sample(0.7, &mut rng).unwrap().to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn gaussian_reference_value() {
        let b = PrivacyBudget::new(0.05, 1e-5).unwrap();
        let cal = gaussian_calibrate(0.01, b).unwrap();
        // 0.2 * sqrt(2 ln(1.25e5)), evaluated independently.
        assert!((cal.sigma - 0.968_961_052_521_077_9).abs() < 1e-12, "{}", cal.sigma);
    }

    #[test]
    fn gaussian_zero_sensitivity_and_linearity() {
        let b = PrivacyBudget::new(0.3, 1e-6).unwrap();
        assert_eq!(gaussian_calibrate(0.0, b).unwrap().sigma, 0.0);
        let s1 = gaussian_calibrate(0.4, b).unwrap().sigma;
        let s2 = gaussian_calibrate(0.8, b).unwrap().sigma;
        assert!((s2 - 2.0 * s1).abs() < 1e-15);
    }

    #[test]
    fn gaussian_requires_delta() {
        let b = PrivacyBudget::pure(1.0).unwrap();
        assert!(matches!(gaussian_calibrate(1.0, b), Err(Error::Unsupported(_))));
    }

    #[test]
    fn exp_mech_uniform_and_single() {
        let w = ExpMechWeights::new(vec![3.0; 5], 1.0, 0.5).unwrap();
        for p in w.probabilities() {
            assert!((p - 0.2).abs() < 1e-15);
        }
        let single = ExpMechWeights::new(vec![42.0], 1.0, 1.0).unwrap();
        assert_eq!(single.probabilities(), vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|_| exp_mech_sample(&single, &mut rng) == 0));
    }

    #[test]
    fn exp_mech_two_point_closed_form() {
        for &(eps, delta) in &[(0.1, 1.0), (2.0, 7.5), (1.0, 0.25)] {
            let gap = 2.0 * delta / eps * std::f64::consts::LN_2;
            let w = ExpMechWeights::new(vec![0.0, gap], delta, eps).unwrap();
            let p = w.probabilities();
            assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
            assert!((p[1] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exp_mech_rejects_empty_and_nonfinite() {
        assert!(ExpMechWeights::new(vec![], 1.0, 1.0).is_err());
        assert!(ExpMechWeights::new(vec![1.0, f64::NAN], 1.0, 1.0).is_err());
        assert!(ExpMechWeights::new(vec![1.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn exp_mech_handles_huge_penalties() {
        // Without the min shift every weight would underflow to zero.
        let w = ExpMechWeights::new(vec![1e6, 1e6 + 1.0, 2e6], 1.0, 1e3).unwrap();
        let p = w.probabilities();
        assert!(p.iter().all(|x| x.is_finite()));
        assert_eq!(p[0], 1.0);
    }
}
