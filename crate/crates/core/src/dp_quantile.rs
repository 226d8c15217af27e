//! Private quantile release over a fixed grid of candidate thresholds.
//!
//! Scores are assumed normalized to `[0, 1]`. Each candidate edge `e_j`
//! (for `j = 1..=M`) gets the penalty
//!
//! ```text
//! w_j = max( #{R_i < e_j} / (1 - a0), #{R_i > e_j} / a0 )
//! ```
//!
//! where `a0 = beta - 2 / (N * epsilon)` is the corrected input level. One
//! changed score moves either count by at most one, so the penalty has
//! sensitivity `max(1 / (1 - a0), 1 / a0)` and the exponential mechanism over
//! the penalties is `epsilon`-DP for any fixed `a0`.
//!
//! Scores that sit exactly on an edge are counted on neither side.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mechanisms::{exp_mech_sample, ExpMechWeights};

/// Default number of bins for [`BinGrid::default`].
pub const DEFAULT_BINS: usize = 1000;

/// Strictly increasing edges `0 = e_0 < e_1 < ... < e_M = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinGrid {
    edges: Vec<f64>,
    data_dependent: bool,
}

impl BinGrid {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::invalid("a bin grid needs at least two edges"));
        }
        if edges[0] != 0.0 || *edges.last().unwrap() != 1.0 {
            return Err(Error::invalid("bin grid must start at 0 and end at 1"));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("bin grid edges must be strictly increasing"));
        }
        Ok(Self {
            edges,
            data_dependent: false,
        })
    }

    /// `bins + 1` equally spaced edges on `[0, 1]`.
    pub fn uniform(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("a uniform grid needs at least one bin"));
        }
        let mut edges: Vec<f64> = (0..=bins).map(|j| j as f64 / bins as f64).collect();
        edges[bins] = 1.0;
        Self::new(edges)
    }

    /// Experimental: edges at midpoints between consecutive distinct order
    /// statistics of `scores`, plus the endpoints 0 and 1.
    ///
    /// The edges depend on the data, so the fixed-grid privacy guarantee does
    /// not cover releases made over this grid. It is flagged through
    /// [`BinGrid::is_data_dependent`].
    pub fn rank_based(scores: &ScoreVector) -> Self {
        let mut sorted = scores.sorted();
        sorted.dedup();
        let mut edges = vec![0.0];
        edges.extend(
            sorted
                .windows(2)
                .map(|w| (0.5 * (w[0] + w[1])).clamp(0.0, 1.0)),
        );
        edges.push(1.0);
        edges.dedup();
        if edges.len() < 2 {
            edges = vec![0.0, 1.0];
        }
        Self {
            edges,
            data_dependent: true,
        }
    }

    /// All edges `e_0..=e_M`.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Candidate thresholds `e_1..=e_M`.
    pub fn candidates(&self) -> &[f64] {
        &self.edges[1..]
    }

    /// Number of bins `M`.
    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_data_dependent(&self) -> bool {
        self.data_dependent
    }
}

impl Default for BinGrid {
    fn default() -> Self {
        Self::uniform(DEFAULT_BINS).expect("nonzero bin count")
    }
}

/// Normalized nonconformity scores, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some((i, s)) = scores
            .iter()
            .enumerate()
            .find(|(_, s)| !(0.0..=1.0).contains(*s))
        {
            return Err(Error::invalid(format!(
                "score {s} at index {i} lies outside [0, 1]; normalize before release"
            )));
        }
        Ok(Self { scores })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn sorted(&self) -> Vec<f64> {
        let mut s = self.scores.clone();
        s.sort_by(f64::total_cmp);
        s
    }
}

/// Parameters for one private quantile release.
#[derive(Debug, Clone, PartialEq)]
pub struct DpqRequest {
    /// Input miscoverage level `beta`.
    pub level: f64,
    pub epsilon: f64,
    pub grid: BinGrid,
}

impl DpqRequest {
    pub fn new(level: f64, epsilon: f64, grid: BinGrid) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::invalid(format!("level must lie in (0, 1), got {level}")));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            level,
            epsilon,
            grid,
        })
    }
}

/// Corrected level `a0 = beta - 2 / (n * epsilon)`; requires the strict
/// inequality `beta > 2 / (n * epsilon)`.
pub fn corrected_level(beta: f64, n: usize, epsilon: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!("level must lie in (0, 1), got {beta}")));
    }
    if n == 0 {
        return Err(Error::invalid("the private quantile needs at least one score"));
    }
    if !(epsilon > 0.0) || epsilon.is_nan() {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let threshold = 2.0 / (n as f64 * epsilon);
    if beta <= threshold {
        return Err(infeasible(beta, n, epsilon));
    }
    Ok(beta - threshold)
}

pub(crate) fn infeasible(level: f64, n: usize, epsilon: f64) -> Error {
    let threshold = 2.0 / (n as f64 * epsilon);
    // Smallest n with level > 2 / (n * epsilon); the epsilon bound is strict.
    let min_n = if level > 0.0 {
        (2.0 / (level * epsilon)).floor() as usize + 1
    } else {
        usize::MAX
    };
    let min_epsilon = if level > 0.0 {
        2.0 / (n as f64 * level)
    } else {
        f64::INFINITY
    };
    Error::InfeasibleLevel {
        level,
        n,
        epsilon,
        threshold,
        min_n,
        min_epsilon,
    }
}

/// Counts `(#{R_i < e_j}, #{R_i > e_j})` for every candidate edge.
pub fn edge_counts(scores: &ScoreVector, grid: &BinGrid) -> Vec<(usize, usize)> {
    let sorted = scores.sorted();
    let n = sorted.len();
    grid.candidates()
        .iter()
        .map(|&e| {
            let below = sorted.partition_point(|&s| s < e);
            let at_or_below = sorted.partition_point(|&s| s <= e);
            (below, n - at_or_below)
        })
        .collect()
}

/// Sensitivity of the penalties at corrected level `alpha0`.
pub fn penalty_sensitivity(alpha0: f64) -> f64 {
    (1.0 / (1.0 - alpha0)).max(1.0 / alpha0)
}

/// Penalties and sensitivity for the exponential mechanism at a corrected
/// level `alpha0` in `(0, 1)`.
pub fn dpq_utilities(
    scores: &ScoreVector,
    alpha0: f64,
    epsilon: f64,
    grid: &BinGrid,
) -> Result<ExpMechWeights> {
    if !(alpha0 > 0.0 && alpha0 < 1.0) {
        return Err(Error::invalid(format!(
            "corrected level must lie in (0, 1), got {alpha0}"
        )));
    }
    let utilities = edge_counts(scores, grid)
        .into_iter()
        .map(|(below, above)| (below as f64 / (1.0 - alpha0)).max(above as f64 / alpha0))
        .collect();
    ExpMechWeights::new(utilities, penalty_sensitivity(alpha0), epsilon)
}

/// Releases a threshold at a caller-supplied corrected level.
pub fn dpq_release_at<R: Rng + ?Sized>(
    scores: &ScoreVector,
    alpha0: f64,
    epsilon: f64,
    grid: &BinGrid,
    rng: &mut R,
) -> Result<f64> {
    let weights = dpq_utilities(scores, alpha0, epsilon, grid)?;
    Ok(grid.candidates()[exp_mech_sample(&weights, rng)])
}

/// Releases a private threshold: corrects the level, then samples one
/// candidate edge with the exponential mechanism.
pub fn dpq_release<R: Rng + ?Sized>(
    scores: &ScoreVector,
    request: &DpqRequest,
    rng: &mut R,
) -> Result<f64> {
    let alpha0 = corrected_level(request.level, scores.len(), request.epsilon)?;
    dpq_release_at(scores, alpha0, request.epsilon, &request.grid, rng)
}

/// Exact output distribution of [`dpq_release`] over the candidate edges.
pub fn dpq_distribution(scores: &ScoreVector, request: &DpqRequest) -> Result<Vec<f64>> {
    let alpha0 = corrected_level(request.level, scores.len(), request.epsilon)?;
    Ok(dpq_utilities(scores, alpha0, request.epsilon, &request.grid)?.probabilities())
}
