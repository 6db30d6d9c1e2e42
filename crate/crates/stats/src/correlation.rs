//! Pearson and Spearman correlation.

use serde::{Deserialize, Serialize};

use crate::dist::{normal_quantile, t_p_value, Tail};
use crate::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PearsonResult {
    pub n: usize,
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub n: usize,
    pub rho: f64,
    pub p_value: f64,
}

fn check_pair(x: &[f64], y: &[f64], min_n: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < min_n {
        return Err(StatsError::TooFewObservations { needed: min_n, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::Domain("observations must be finite"));
    }
    Ok(())
}

/// Product-moment correlation from centered sums. `None` when either
/// variable has zero variance.
fn product_moment(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// p-value of a correlation coefficient through `t = r sqrt((n-2)/(1-r^2))`.
fn correlation_p(r: f64, n: usize) -> Result<f64, StatsError> {
    if r.abs() >= 1.0 {
        return Ok(0.0);
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    t_p_value(t, df, Tail::TwoSided)
}

/// Pearson's r with a Fisher-z confidence interval at `level` (e.g. 0.95)
/// and a two-sided p-value. Perfect correlations give a degenerate interval.
pub fn pearson_r_ci(x: &[f64], y: &[f64], level: f64) -> Result<PearsonResult, StatsError> {
    check_pair(x, y, 4)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::Domain("confidence level must lie in (0, 1)"));
    }
    let n = x.len();
    let r = product_moment(x, y).ok_or(StatsError::DegenerateVariance("a variable is constant"))?;
    let (ci_low, ci_high) = if r.abs() >= 1.0 {
        (r, r)
    } else {
        let z = r.atanh();
        let half = normal_quantile(0.5 + level / 2.0)? / ((n - 3) as f64).sqrt();
        ((z - half).tanh(), (z + half).tanh())
    };
    Ok(PearsonResult {
        n,
        r,
        ci_low,
        ci_high,
        level,
        p_value: correlation_p(r, n)?,
    })
}

/// Mid-ranks (1-based); tied values share the mean of their positions.
pub fn mid_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson's r over mid-ranks, p-value via the t approximation.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<SpearmanResult, StatsError> {
    check_pair(x, y, 4)?;
    let rx = mid_ranks(x);
    let ry = mid_ranks(y);
    let rho = product_moment(&rx, &ry).ok_or(StatsError::TiesDegenerate)?;
    Ok(SpearmanResult {
        n: x.len(),
        rho,
        p_value: correlation_p(rho, x.len())?,
    })
}
