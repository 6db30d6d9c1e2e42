//! Frequentist statistics for between-group comparisons.
//!
//! Welch's t-test with Hedges' g, one-sample t, Pearson's chi-squared on 2x2
//! tables (with optional Yates correction), Pearson's r with a Fisher-z
//! confidence interval and Spearman's rho. Distribution tails are computed
//! in-crate from the incomplete beta and gamma functions in [`special`].

pub mod contingency;
pub mod correlation;
pub mod dist;
pub mod special;
pub mod ttest;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contingency::{chi_square_2x2, ContingencyTable};
pub use correlation::{pearson_r_ci, spearman_rho, PearsonResult, SpearmanResult};
pub use dist::Tail;
pub use ttest::{hedges_g, one_sample_t, one_sample_t_with, welch_t, welch_t_with};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("degenerate variance: {0}")]
    DegenerateVariance(&'static str),
    #[error("degenerate margin: row or column total is zero")]
    DegenerateMargin,
    #[error("ranks are degenerate: a variable is constant")]
    TiesDegenerate,
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid group summary: {0}")]
    InvalidSummary(&'static str),
    #[error("argument out of domain: {0}")]
    Domain(&'static str),
    #[error("failed to converge: {0}")]
    NoConvergence(&'static str),
}

/// Sample size, mean and sample standard deviation (n - 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl GroupSummary {
    pub fn new(n: usize, mean: f64, sd: f64) -> Result<Self, StatsError> {
        if n == 0 {
            return Err(StatsError::InvalidSummary("n must be positive"));
        }
        if !mean.is_finite() {
            return Err(StatsError::InvalidSummary("mean must be finite"));
        }
        if !(sd >= 0.0) || !sd.is_finite() {
            return Err(StatsError::InvalidSummary("sd must be finite and nonnegative"));
        }
        Ok(Self { n, mean, sd })
    }

    /// Summarize raw observations.
    pub fn from_sample(xs: &[f64]) -> Result<Self, StatsError> {
        if xs.is_empty() {
            return Err(StatsError::TooFewObservations { needed: 1, got: 0 });
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(StatsError::InvalidSummary("observations must be finite"));
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        Self::new(n, mean, sd)
    }

    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }
}

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect_size: Option<f64>,
}
