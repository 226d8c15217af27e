//! Differentially private conformal prediction.
//!
//! The crate builds prediction intervals whose coverage holds in finite
//! samples while the whole pipeline, training and calibration together,
//! satisfies `(epsilon, delta)` differential privacy.
//!
//! - [`mechanisms`]: budgets, Laplace, Gaussian and exponential mechanisms.
//! - [`dp_quantile`]: the private quantile over a fixed grid.
//! - [`conformal`]: split, oracle, differential, private full-data and
//!   private split calibration.
//! - [`erm`]: output-perturbed ERM and the location model.
//! - [`datagen`]: synthetic data and CSV loading.
//! - [`harness`] and [`plan`]: repeated-trial experiments and their CSV output.
//! - [`cli`]: the `dpcp` command.
//!
//! ```
//! use dpcp::conformal::{dpcp, ConformalConfig, GridChoice, ScoreFunction};
//! use dpcp::datagen::{gen_synthetic, SyntheticSpec};
//! use dpcp::erm::LocationTrainer;
//! use dpcp::mechanisms::PrivacyBudget;
//! use rand::SeedableRng;
//!
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
//! let data = gen_synthetic(&SyntheticSpec::default(), 2000, &mut rng)?;
//! let cfg = ConformalConfig::new(0.1, PrivacyBudget::new(1.0, 1e-5)?)?;
//! let (interval, record) = dpcp(
//!     &data,
//!     &[0.0],
//!     &cfg,
//!     &LocationTrainer::new(5.0),
//!     &ScoreFunction::absolute_residual(15.0)?,
//!     &GridChoice::default(),
//!     &mut rng,
//! )?;
//! assert!(interval.contains(5.0));
//! assert!(record.end_to_end_private);
//! # Ok::<(), dpcp::Error>(())
//! ```

pub mod cli;
pub mod conformal;
pub mod datagen;
pub mod dp_quantile;
pub mod erm;
pub mod error;
pub mod harness;
pub mod mechanisms;
pub mod plan;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/mechanisms.md")]
    mod mechanisms {}
    #[doc = include_str!("../../../book/src/private-quantile.md")]
    mod private_quantile {}
    #[doc = include_str!("../../../book/src/conformal.md")]
    mod conformal {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
