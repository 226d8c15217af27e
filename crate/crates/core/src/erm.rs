//! Regularized ERM trainers with output perturbation.
//!
//! The objective is
//!
//! ```text
//! J(theta) = (1/n) sum_i loss(y_i - <theta, z_i>) + (ridge / 2) ||theta||^2
//! ```
//!
//! with `z_i` the l2-clipped features, plus a trailing 1 when an intercept is
//! fitted. Both losses are Lipschitz in the prediction, so the minimizer moves
//! by at most `2 * lipschitz / (ridge * n)` when a single row is added, and
//! Gaussian output perturbation calibrated to that bound is `(eps, delta)`-DP.

use rand::RngCore;

use crate::datagen::TabularDataset;
use crate::error::{Error, Result};
use crate::mechanisms::{gaussian_calibrate, laplace_sample, GaussianCalibration, PrivacyBudget};

/// Per-sample loss on the residual `y - prediction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    Absolute,
    /// Quadratic within `kappa` of zero, linear outside.
    Huber { kappa: f64 },
}

impl Loss {
    /// Lipschitz constant in the prediction.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Loss::Absolute => 1.0,
            Loss::Huber { kappa } => kappa,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Loss::Absolute => r.abs(),
            Loss::Huber { kappa } => {
                if r.abs() <= kappa {
                    0.5 * r * r
                } else {
                    kappa * r.abs() - 0.5 * kappa * kappa
                }
            }
        }
    }

    /// A (sub)derivative in the residual; zero at the kink of the absolute loss.
    fn derivative(&self, r: f64) -> f64 {
        match *self {
            Loss::Absolute => {
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Loss::Huber { kappa } => r.clamp(-kappa, kappa),
        }
    }
}

/// A strongly convex ERM problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErmSpec {
    pub loss: Loss,
    /// Strong-convexity modulus of the ridge penalty.
    pub ridge: f64,
    /// Rows are l2-clipped to this norm before fitting.
    pub feature_bound: f64,
    pub fit_intercept: bool,
}

impl ErmSpec {
    pub fn new(loss: Loss, ridge: f64, feature_bound: f64, fit_intercept: bool) -> Result<Self> {
        if !(ridge.is_finite() && ridge > 0.0) {
            return Err(Error::invalid(format!("ridge must be positive, got {ridge}")));
        }
        if !(feature_bound.is_finite() && feature_bound > 0.0) {
            return Err(Error::invalid(format!(
                "feature bound must be positive, got {feature_bound}"
            )));
        }
        if let Loss::Huber { kappa } = loss {
            if !(kappa.is_finite() && kappa > 0.0) {
                return Err(Error::invalid(format!("huber kappa must be positive, got {kappa}")));
            }
        }
        Ok(Self {
            loss,
            ridge,
            feature_bound,
            fit_intercept,
        })
    }

    /// Lipschitz constant of `theta -> loss(y - <theta, z>)`: the loss
    /// constant times the bound on `||z||`, which includes the intercept
    /// coordinate when one is fitted.
    pub fn lipschitz(&self) -> f64 {
        let z_norm = if self.fit_intercept {
            (self.feature_bound.powi(2) + 1.0).sqrt()
        } else {
            self.feature_bound
        };
        self.loss.lipschitz() * z_norm
    }
}

/// l2 sensitivity of the ERM minimizer: `2 * lipschitz / (ridge * n)`.
pub fn sensitivity_bound(spec: &ErmSpec, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("sensitivity bound needs n >= 1"));
    }
    Ok(2.0 * spec.lipschitz() / (spec.ridge * n as f64))
}

/// Noise added to a released model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    Gaussian(GaussianCalibration),
    Laplace { scale: f64 },
}

/// Solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub sweeps: usize,
    /// Primal minus dual objective at exit (zero for the 1-D solver).
    pub duality_gap: f64,
    /// Upper bound on `||theta - theta_opt||_2`.
    pub param_error_bound: f64,
    pub converged: bool,
}

/// An affine predictor `x -> <weights, x> + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub noise: Option<Noise>,
    pub budget_spent: PrivacyBudget,
    pub report: Option<FitReport>,
}

impl TrainedModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.intercept
    }

    /// Fitted parameters `(weights, intercept)` as one vector.
    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.weights.clone();
        t.push(self.intercept);
        t
    }
}

/// Solver limits for [`fit_erm_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub gap_tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tolerance: 1e-12,
            max_sweeps: 100_000,
        }
    }
}

/// Scales `x` down so that `||x||_2 <= bound`.
pub fn clip_l2(x: &[f64], bound: f64) -> Vec<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > bound {
        x.iter().map(|v| v * bound / norm).collect()
    } else {
        x.to_vec()
    }
}

struct Problem {
    z: Vec<Vec<f64>>,
    y: Vec<f64>,
    loss: Loss,
    ridge: f64,
    dim: usize,
}

impl Problem {
    fn new(spec: &ErmSpec, data: &TabularDataset) -> Self {
        let z = data
            .iter()
            .map(|(x, _)| {
                let mut z = clip_l2(x, spec.feature_bound);
                if spec.fit_intercept {
                    z.push(1.0);
                }
                z
            })
            .collect();
        let dim = data.n_features() + usize::from(spec.fit_intercept);
        Self {
            z,
            y: data.responses().to_vec(),
            loss: spec.loss,
            ridge: spec.ridge,
            dim,
        }
    }

    fn primal(&self, theta: &[f64]) -> f64 {
        let n = self.y.len() as f64;
        let fit: f64 = self
            .z
            .iter()
            .zip(&self.y)
            .map(|(z, y)| self.loss.value(y - dot(z, theta)))
            .sum();
        fit / n + 0.5 * self.ridge * dot(theta, theta)
    }

    fn dual(&self, a: &[f64], theta: &[f64]) -> f64 {
        let n = self.y.len() as f64;
        let lin: f64 = a
            .iter()
            .zip(&self.y)
            .map(|(a, y)| match self.loss {
                Loss::Absolute => a * y,
                Loss::Huber { .. } => a * y - 0.5 * a * a,
            })
            .sum();
        lin / n - 0.5 * self.ridge * dot(theta, theta)
    }

    /// Cyclic dual coordinate ascent. Stops on the duality gap, which bounds
    /// the distance to the optimum through strong convexity.
    fn solve_dual(&self, opts: SolverOptions) -> (Vec<f64>, FitReport) {
        let n = self.y.len();
        let ln = self.ridge * n as f64;
        let bound = match self.loss {
            Loss::Absolute => 1.0,
            Loss::Huber { kappa } => kappa,
        };
        let q: Vec<f64> = self.z.iter().map(|z| dot(z, z)).collect();
        let mut a = vec![0.0; n];
        let mut theta = vec![0.0; self.dim];
        let mut gap = f64::INFINITY;
        let mut sweeps = 0;
        let mut stalled = false;
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            let mut max_step: f64 = 0.0;
            for i in 0..n {
                if q[i] == 0.0 {
                    continue;
                }
                let r = self.y[i] - dot(&self.z[i], &theta);
                let proposal = match self.loss {
                    Loss::Absolute => a[i] + ln * r / q[i],
                    Loss::Huber { .. } => (r + a[i] * q[i] / ln) / (1.0 + q[i] / ln),
                };
                let next = proposal.clamp(-bound, bound);
                let step = next - a[i];
                if step != 0.0 {
                    let c = step / ln;
                    for (t, z) in theta.iter_mut().zip(&self.z[i]) {
                        *t += c * z;
                    }
                    a[i] = next;
                    max_step = max_step.max(step.abs());
                }
            }
            gap = (self.primal(&theta) - self.dual(&a, &theta)).max(0.0);
            if gap <= opts.gap_tolerance {
                break;
            }
            if max_step == 0.0 {
                stalled = true;
                break;
            }
        }
        let converged = gap <= opts.gap_tolerance || stalled;
        let report = FitReport {
            sweeps,
            duality_gap: gap,
            param_error_bound: (2.0 * gap / self.ridge).sqrt(),
            converged,
        };
        (theta, report)
    }

    /// Exact solver for a single parameter: bisection on the monotone
    /// (sub)gradient, down to adjacent floating-point values.
    fn solve_scalar(&self) -> (Vec<f64>, FitReport) {
        let n = self.y.len() as f64;
        let c: Vec<f64> = self.z.iter().map(|z| z[0]).collect();
        let grad = |t: f64| {
            let s: f64 = c
                .iter()
                .zip(&self.y)
                .map(|(ci, yi)| ci * self.loss.derivative(yi - ci * t))
                .sum();
            -s / n + self.ridge * t
        };
        let cmax = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let radius = self.loss.lipschitz() * cmax / self.ridge + 1.0;
        let (mut lo, mut hi) = (-radius, radius);
        let mut steps = 0;
        while steps < 2_000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if grad(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            steps += 1;
        }
        // Pick the endpoint with the smaller objective.
        let t = if self.primal(&[lo]) <= self.primal(&[hi]) { lo } else { hi };
        let report = FitReport {
            sweeps: steps,
            duality_gap: 0.0,
            param_error_bound: hi - lo,
            converged: true,
        };
        (vec![t], report)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Value of the ERM objective at `theta` (weights then intercept).
pub fn objective(spec: &ErmSpec, data: &TabularDataset, theta: &[f64]) -> f64 {
    Problem::new(spec, data).primal(theta)
}

fn unpack(spec: &ErmSpec, mut theta: Vec<f64>) -> (Vec<f64>, f64) {
    let intercept = if spec.fit_intercept {
        theta.pop().expect("intercept coordinate")
    } else {
        0.0
    };
    (theta, intercept)
}

/// Non-private ERM fit with default solver options.
pub fn fit_erm(spec: &ErmSpec, data: &TabularDataset) -> Result<TrainedModel> {
    fit_erm_with(spec, data, SolverOptions::default())
}

pub fn fit_erm_with(
    spec: &ErmSpec,
    data: &TabularDataset,
    opts: SolverOptions,
) -> Result<TrainedModel> {
    if data.is_empty() {
        return Err(Error::invalid("cannot fit a model on an empty dataset"));
    }
    let problem = Problem::new(spec, data);
    if problem.dim == 0 {
        return Err(Error::invalid("model has no parameters: no features and no intercept"));
    }
    let (theta, report) = if problem.dim == 1 {
        problem.solve_scalar()
    } else {
        problem.solve_dual(opts)
    };
    if !report.converged {
        eprintln!(
            "warning: ERM solver stopped after {} sweeps with duality gap {:.3e}",
            report.sweeps, report.duality_gap
        );
    }
    let (weights, intercept) = unpack(spec, theta);
    Ok(TrainedModel {
        weights,
        intercept,
        noise: None,
        budget_spent: PrivacyBudget::zero(),
        report: Some(report),
    })
}

/// Output-perturbed ERM: the exact minimizer plus i.i.d. Gaussian noise on
/// every coordinate, calibrated to [`sensitivity_bound`].
pub fn fit_private_erm(
    spec: &ErmSpec,
    data: &TabularDataset,
    budget: PrivacyBudget,
    rng: &mut dyn RngCore,
) -> Result<TrainedModel> {
    let tau = sensitivity_bound(spec, data.len().max(1))?;
    let calibration = gaussian_calibrate(tau, budget)?;
    let mut model = fit_erm(spec, data)?;
    for w in model.weights.iter_mut() {
        *w += calibration.sample(rng);
    }
    if spec.fit_intercept {
        model.intercept += calibration.sample(rng);
    }
    model.noise = Some(Noise::Gaussian(calibration));
    model.budget_spent = budget;
    Ok(model)
}

/// Mean of `y - x` over the first feature, each term clipped to
/// `center +- 3 sigma_eps`.
pub fn location_mean(data: &TabularDataset, sigma_eps: f64, center: f64) -> f64 {
    let half = 3.0 * sigma_eps;
    let n = data.len() as f64;
    data.iter()
        .map(|(x, y)| (y - x[0]).clamp(center - half, center + half))
        .sum::<f64>()
        / n
}

/// Laplace-perturbed location model `y = x + b`, with
/// `b = mean(y - x) + Lap(6 sigma_eps / (n eps))`.
pub fn fit_location_laplace(
    data: &TabularDataset,
    sigma_eps: f64,
    epsilon: f64,
    rng: &mut dyn RngCore,
) -> Result<TrainedModel> {
    fit_location_laplace_centered(data, sigma_eps, 0.0, epsilon, rng)
}

/// As [`fit_location_laplace`], clipping `y - x` around `center` instead of 0.
pub fn fit_location_laplace_centered(
    data: &TabularDataset,
    sigma_eps: f64,
    center: f64,
    epsilon: f64,
    rng: &mut dyn RngCore,
) -> Result<TrainedModel> {
    check_location(data, sigma_eps)?;
    let budget = PrivacyBudget::pure(epsilon)?;
    let scale = 6.0 * sigma_eps / (data.len() as f64 * epsilon);
    let b = location_mean(data, sigma_eps, center) + laplace_sample(scale, rng)?;
    Ok(TrainedModel {
        weights: vec![1.0],
        intercept: b,
        noise: Some(Noise::Laplace { scale }),
        budget_spent: budget,
        report: None,
    })
}

fn check_location(data: &TabularDataset, sigma_eps: f64) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("location model needs at least one row"));
    }
    if data.n_features() != 1 {
        return Err(Error::invalid("location model expects exactly one feature"));
    }
    if !(sigma_eps.is_finite() && sigma_eps > 0.0) {
        return Err(Error::invalid(format!("sigma_eps must be positive, got {sigma_eps}")));
    }
    Ok(())
}

/// A model-fitting procedure usable by every conformal constructor.
pub trait Trainer: Send + Sync {
    /// Non-private fit.
    fn fit(&self, data: &TabularDataset) -> Result<TrainedModel>;

    /// Private fit consuming (at most) `budget`.
    fn fit_private(
        &self,
        data: &TabularDataset,
        budget: PrivacyBudget,
        rng: &mut dyn RngCore,
    ) -> Result<TrainedModel>;
}

/// `y = x + b` with `b` the clipped mean of `y - x`; Laplace noise when private.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationTrainer {
    pub sigma_eps: f64,
    pub center: f64,
}

impl LocationTrainer {
    pub fn new(sigma_eps: f64) -> Self {
        Self {
            sigma_eps,
            center: 0.0,
        }
    }
}

impl Trainer for LocationTrainer {
    fn fit(&self, data: &TabularDataset) -> Result<TrainedModel> {
        check_location(data, self.sigma_eps)?;
        Ok(TrainedModel {
            weights: vec![1.0],
            intercept: location_mean(data, self.sigma_eps, self.center),
            noise: None,
            budget_spent: PrivacyBudget::zero(),
            report: None,
        })
    }

    fn fit_private(
        &self,
        data: &TabularDataset,
        budget: PrivacyBudget,
        rng: &mut dyn RngCore,
    ) -> Result<TrainedModel> {
        fit_location_laplace_centered(data, self.sigma_eps, self.center, budget.epsilon(), rng)
    }
}

/// Output-perturbed ERM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErmTrainer {
    pub spec: ErmSpec,
}

impl Trainer for ErmTrainer {
    fn fit(&self, data: &TabularDataset) -> Result<TrainedModel> {
        fit_erm(&self.spec, data)
    }

    fn fit_private(
        &self,
        data: &TabularDataset,
        budget: PrivacyBudget,
        rng: &mut dyn RngCore,
    ) -> Result<TrainedModel> {
        fit_private_erm(&self.spec, data, budget, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(rows: &[(Vec<f64>, f64)]) -> TabularDataset {
        let d = rows[0].0.len();
        let features = rows.iter().flat_map(|(x, _)| x.clone()).collect();
        let ys = rows.iter().map(|(_, y)| *y).collect();
        let mut names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        names.push("y".into());
        TabularDataset::new(features, d, ys, names).unwrap()
    }

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<(Vec<f64>, f64)> {
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y = x.iter().sum::<f64>() + rng.random_range(-2.0..2.0);
                (x, y)
            })
            .collect()
    }

    #[test]
    fn sensitivity_formula() {
        // loss Lipschitz 1 with feature bound 1 and no intercept -> rho L = 1.
        let spec = ErmSpec::new(Loss::Absolute, 0.5, 1.0, false).unwrap();
        assert!((sensitivity_bound(&spec, 100).unwrap() - 0.04).abs() < 1e-15);
        let t1 = sensitivity_bound(&spec, 100).unwrap();
        let t2 = sensitivity_bound(&spec, 200).unwrap();
        assert!((t1 - 2.0 * t2).abs() < 1e-15);
        assert!(sensitivity_bound(&spec, 0).is_err());
    }

    #[test]
    fn intercept_only_matches_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r: Vec<f64> = (0..101).map(|_| rng.random_range(-5.0..5.0)).collect();
        let data = TabularDataset::new(vec![], 0, r.clone(), vec!["r".into()]).unwrap();
        let spec = ErmSpec::new(Loss::Absolute, 1e-8, 1.0, true).unwrap();
        let m = fit_erm(&spec, &data).unwrap();
        let mut sorted = r.clone();
        sorted.sort_by(f64::total_cmp);
        assert!((m.intercept - sorted[50]).abs() < 1e-4, "{} vs {}", m.intercept, sorted[50]);
    }

    #[test]
    fn huge_ridge_shrinks_to_zero() {
        let data = dataset(&[(vec![0.3, -0.2], 4.0)]);
        let spec = ErmSpec::new(Loss::Absolute, 1e6, 1.0, true).unwrap();
        let m = fit_erm(&spec, &data).unwrap();
        assert!(m.theta().iter().all(|t| t.abs() < 1e-5), "{:?}", m.theta());
    }

    #[test]
    fn duplication_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = random_rows(&mut rng, 40, 3);
        let doubled: Vec<_> = rows.iter().chain(&rows).cloned().collect();
        for loss in [Loss::Absolute, Loss::Huber { kappa: 0.5 }] {
            let spec = ErmSpec::new(loss, 0.3, 1.0, true).unwrap();
            let a = fit_erm(&spec, &dataset(&rows)).unwrap();
            let b = fit_erm(&spec, &dataset(&doubled)).unwrap();
            let tol = a.report.unwrap().param_error_bound + b.report.unwrap().param_error_bound;
            for (x, y) in a.theta().iter().zip(b.theta()) {
                assert!((x - y).abs() <= tol + 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn dual_solver_certifies_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = random_rows(&mut rng, 60, 2);
        let data = dataset(&rows);
        for loss in [Loss::Absolute, Loss::Huber { kappa: 1.0 }] {
            let spec = ErmSpec::new(loss, 0.2, 1.0, true).unwrap();
            let m = fit_erm(&spec, &data).unwrap();
            let rep = m.report.unwrap();
            assert!(rep.converged);
            assert!(rep.duality_gap <= 1e-12);
            // Strong convexity: J(theta) >= J(hat) + ridge/2 ||theta - hat||^2 - gap.
            let hat = m.theta();
            let j_hat = objective(&spec, &data, &hat);
            for _ in 0..200 {
                let th: Vec<f64> = hat.iter().map(|h| h + rng.random_range(-1.0..1.0)).collect();
                let dist2: f64 = th.iter().zip(&hat).map(|(a, b)| (a - b).powi(2)).sum();
                let lhs = objective(&spec, &data, &th);
                assert!(lhs >= j_hat + 0.5 * spec.ridge * dist2 - 2.0 * rep.duality_gap - 1e-12);
            }
        }
    }

    #[test]
    fn scalar_solver_matches_dual_solver() {
        // One feature without intercept: exact bisection vs dual ascent on
        // an equivalent problem with a zero second feature.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows = random_rows(&mut rng, 50, 1);
        let padded: Vec<_> = rows.iter().map(|(x, y)| (vec![x[0], 0.0], *y)).collect();
        let spec = ErmSpec::new(Loss::Huber { kappa: 0.7 }, 0.4, 1.0, false).unwrap();
        let a = fit_erm(&spec, &dataset(&rows)).unwrap();
        let b = fit_erm(&spec, &dataset(&padded)).unwrap();
        assert!((a.weights[0] - b.weights[0]).abs() < 1e-5);
        assert!(b.weights[1].abs() < 1e-12);
    }

    #[test]
    fn private_fit_is_seeded_and_calibrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows = random_rows(&mut rng, 100, 2);
        let data = dataset(&rows);
        let spec = ErmSpec::new(Loss::Absolute, 0.5, 1.0, true).unwrap();
        let budget = PrivacyBudget::new(1.0, 1e-5).unwrap();
        let a = fit_private_erm(&spec, &data, budget, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = fit_private_erm(&spec, &data, budget, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        let Some(Noise::Gaussian(cal)) = a.noise else { panic!("missing noise record") };
        let tau = 2.0 * 2f64.sqrt() / (0.5 * 100.0);
        let sigma = (2.0 * (1.25f64 / 1e-5).ln()).sqrt() * tau / 1.0;
        assert!((cal.sigma - sigma).abs() < 1e-12);
        assert_eq!(a.budget_spent, budget);

        let loose = PrivacyBudget::new(1e6, 1e-5).unwrap();
        let c = fit_private_erm(&spec, &data, loose, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let exact = fit_erm(&spec, &data).unwrap();
        for (x, y) in c.theta().iter().zip(exact.theta()) {
            assert!((x - y).abs() < 1e-3);
        }
        let pure = PrivacyBudget::pure(1.0).unwrap();
        assert!(matches!(
            fit_private_erm(&spec, &data, pure, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn location_noise_free() {
        let rows: Vec<_> = (0..50).map(|i| (vec![i as f64], i as f64 + 5.0)).collect();
        let data = dataset(&rows);
        let m = fit_location_laplace(&data, 5.0, 1e6, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((m.intercept - 5.0).abs() < 1e-3);
        assert_eq!(m.predict(&[2.0]), 2.0 + m.intercept);
        assert_eq!(m.budget_spent, PrivacyBudget::pure(1e6).unwrap());
    }

    #[test]
    fn location_scale() {
        let rows: Vec<_> = (0..2000).map(|i| (vec![i as f64], i as f64)).collect();
        let data = dataset(&rows);
        let m = fit_location_laplace(&data, 5.0, 0.1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let Some(Noise::Laplace { scale }) = m.noise else { panic!() };
        assert!((scale - 0.15).abs() < 1e-15);
    }

    #[test]
    fn clip_l2_bounds_norm() {
        assert_eq!(clip_l2(&[3.0, 4.0], 1.0), vec![0.6, 0.8]);
        assert_eq!(clip_l2(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
    }
}
