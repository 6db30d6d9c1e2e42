//! Welch and one-sample t-tests, Hedges' g.

use crate::dist::{t_p_value, Tail};
use crate::{GroupSummary, StatsError, TestResult};

/// Welch's unequal-variances t-test, two-sided. The effect size slot carries
/// Hedges' g when it is defined.
pub fn welch_t(a: &GroupSummary, b: &GroupSummary) -> Result<TestResult, StatsError> {
    welch_t_with(a, b, Tail::TwoSided)
}

pub fn welch_t_with(a: &GroupSummary, b: &GroupSummary, tail: Tail) -> Result<TestResult, StatsError> {
    for g in [a, b] {
        if g.n < 2 {
            return Err(StatsError::TooFewObservations { needed: 2, got: g.n });
        }
    }
    if a.sd == 0.0 && b.sd == 0.0 {
        return Err(StatsError::DegenerateVariance("both groups have zero variance"));
    }
    let va = a.variance() / a.n as f64;
    let vb = b.variance() / b.n as f64;
    let se = (va + vb).sqrt();
    let t = (a.mean - b.mean) / se;
    let df = (va + vb).powi(2)
        / (va * va / (a.n - 1) as f64 + vb * vb / (b.n - 1) as f64);
    let p_value = t_p_value(t, df, tail)?;
    Ok(TestResult {
        statistic: t,
        df,
        p_value,
        effect_size: hedges_g(a, b).ok(),
    })
}

/// Hedges' g: pooled-sd Cohen's d scaled by `J = 1 - 3 / (4 (n_a + n_b - 2) - 1)`.
pub fn hedges_g(a: &GroupSummary, b: &GroupSummary) -> Result<f64, StatsError> {
    let n = a.n + b.n;
    if n < 4 || a.n < 1 || b.n < 1 {
        return Err(StatsError::TooFewObservations { needed: 4, got: n });
    }
    let df = (n - 2) as f64;
    let pooled = (((a.n - 1) as f64 * a.variance() + (b.n - 1) as f64 * b.variance()) / df).sqrt();
    if pooled == 0.0 {
        return Err(StatsError::DegenerateVariance("pooled standard deviation is zero"));
    }
    let d = (a.mean - b.mean) / pooled;
    let j = 1.0 - 3.0 / (4.0 * df - 1.0);
    Ok(d * j)
}

/// One-sample t-test of the group mean against `reference`, two-sided.
pub fn one_sample_t(g: &GroupSummary, reference: f64) -> Result<TestResult, StatsError> {
    one_sample_t_with(g, reference, Tail::TwoSided)
}

pub fn one_sample_t_with(g: &GroupSummary, reference: f64, tail: Tail) -> Result<TestResult, StatsError> {
    if g.n < 2 {
        return Err(StatsError::TooFewObservations { needed: 2, got: g.n });
    }
    if g.sd == 0.0 {
        return Err(StatsError::DegenerateVariance("sample standard deviation is zero"));
    }
    let t = (g.mean - reference) / (g.sd / (g.n as f64).sqrt());
    let df = (g.n - 1) as f64;
    Ok(TestResult {
        statistic: t,
        df,
        p_value: t_p_value(t, df, tail)?,
        effect_size: Some((g.mean - reference) / g.sd),
    })
}
