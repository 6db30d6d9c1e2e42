//! Embedding-space creativity measures per participant: fluency,
//! originality against the cohort and internal diversity.
//!
//! Distances are `1 - cos`, so every score lies in [0, 2]. Centroids are
//! the plain mean of the unit-normalized idea embeddings and are not
//! renormalized; cosine distance ignores their length anyway.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use coachlab_stats::{spearman_rho, SpearmanResult, StatsError};

use crate::persona::Condition;

const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("zero-length vector")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("insufficient cohort: {0}")]
    InsufficientCohort(String),
    #[error("need at least {needed} ideas, got {got}")]
    TooFewIdeas { needed: usize, got: usize },
    #[error("unknown participant {0}")]
    UnknownParticipant(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, MetricError> {
    if u.len() != v.len() {
        return Err(MetricError::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu < ZERO_NORM || nv < ZERO_NORM {
        return Err(MetricError::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok(1.0 - (dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantPortfolio {
    pub participant_id: String,
    pub condition: Condition,
    /// Unit-normalized.
    pub idea_embeddings: Vec<Vec<f64>>,
    pub centroid: Vec<f64>,
}

impl ParticipantPortfolio {
    pub fn fluency(&self) -> usize {
        self.idea_embeddings.len()
    }
}

pub fn build_portfolio(
    embeddings: &[Vec<f64>],
    participant_id: &str,
    condition: Condition,
) -> Result<ParticipantPortfolio, MetricError> {
    let first = embeddings.first().ok_or(MetricError::TooFewIdeas { needed: 1, got: 0 })?;
    let dim = first.len();
    let mut normalized = Vec::with_capacity(embeddings.len());
    for e in embeddings {
        if e.len() != dim {
            return Err(MetricError::DimensionMismatch { expected: dim, got: e.len() });
        }
        let n = norm(e);
        if n < ZERO_NORM {
            return Err(MetricError::ZeroVector);
        }
        normalized.push(e.iter().map(|x| x / n).collect::<Vec<_>>());
    }
    let k = normalized.len() as f64;
    let centroid = (0..dim).map(|d| normalized.iter().map(|v| v[d]).sum::<f64>() / k).collect();
    Ok(ParticipantPortfolio {
        participant_id: participant_id.to_string(),
        condition,
        idea_embeddings: normalized,
        centroid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginalityScores {
    pub same_condition: f64,
    pub all_participants: f64,
    pub cross_condition_nn: f64,
}

pub fn originality(portfolios: &[ParticipantPortfolio], target: &str) -> Result<OriginalityScores, MetricError> {
    let me = portfolios
        .iter()
        .position(|p| p.participant_id == target)
        .ok_or_else(|| MetricError::UnknownParticipant(target.to_string()))?;
    let t = &portfolios[me];
    let (mut same_sum, mut same_n, mut all_sum, mut all_n) = (0.0, 0usize, 0.0, 0usize);
    let mut nn = f64::INFINITY;
    for (i, p) in portfolios.iter().enumerate() {
        if i == me {
            continue;
        }
        let d = cosine_distance(&t.centroid, &p.centroid)?;
        all_sum += d;
        all_n += 1;
        if p.condition == t.condition {
            same_sum += d;
            same_n += 1;
        } else {
            nn = nn.min(d);
        }
    }
    if same_n == 0 {
        return Err(MetricError::InsufficientCohort(format!("no same-condition peers for {target}")));
    }
    if !nn.is_finite() {
        return Err(MetricError::InsufficientCohort(format!("no cross-condition portfolios for {target}")));
    }
    Ok(OriginalityScores {
        same_condition: same_sum / same_n as f64,
        all_participants: all_sum / all_n as f64,
        cross_condition_nn: nn,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityScore {
    pub mean_pairwise: f64,
    pub idea_count: usize,
}

/// Mean cosine distance over all unordered idea pairs.
pub fn internal_diversity(p: &ParticipantPortfolio) -> Result<DiversityScore, MetricError> {
    let e = &p.idea_embeddings;
    if e.len() < 2 {
        return Err(MetricError::TooFewIdeas { needed: 2, got: e.len() });
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            sum += cosine_distance(&e[i], &e[j])?;
            pairs += 1;
        }
    }
    Ok(DiversityScore { mean_pairwise: sum / pairs as f64, idea_count: e.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeTradeoff {
    pub fluency_vs_originality: SpearmanResult,
    /// Over participants with at least two ideas; `None` if fewer than four.
    pub fluency_vs_diversity: Option<SpearmanResult>,
}

/// Spearman correlations of fluency with all-participant originality and
/// with internal diversity.
pub fn volume_tradeoff(portfolios: &[ParticipantPortfolio]) -> Result<VolumeTradeoff, MetricError> {
    if portfolios.len() < 4 {
        return Err(MetricError::InsufficientCohort(format!("{} portfolios, need 4", portfolios.len())));
    }
    let mut fluency = Vec::new();
    let mut orig = Vec::new();
    for p in portfolios {
        fluency.push(p.fluency() as f64);
        orig.push(originality(portfolios, &p.participant_id)?.all_participants);
    }
    let fluency_vs_originality = spearman_rho(&fluency, &orig)?;

    let (mut fl, mut div) = (Vec::new(), Vec::new());
    for p in portfolios.iter().filter(|p| p.fluency() >= 2) {
        fl.push(p.fluency() as f64);
        div.push(internal_diversity(p)?.mean_pairwise);
    }
    let fluency_vs_diversity = if fl.len() >= 4 { Some(spearman_rho(&fl, &div)?) } else { None };
    Ok(VolumeTradeoff { fluency_vs_originality, fluency_vs_diversity })
}
