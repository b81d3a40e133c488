//! Metric kernels: RSI, agreement ratio, normalized entropy, GBC, CAI, SII.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::types::{Competence, TaskType};

/// Largest rating distance on the 1..=10 scale.
pub const R_MAX: f64 = 9.0;
/// Centre of the 1..=10 scale.
pub const MIDPOINT: f64 = 5.5;
/// Half-range scale mapping |mean - midpoint| onto [0, 2].
pub const SII_SCALE: f64 = 2.25;

/// Non-negative scores over N >= 2 categories with a positive total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScores {
    scores: Vec<f64>,
}

impl CategoryScores {
    pub fn new(scores: Vec<f64>) -> Result<Self, MetricError> {
        if scores.len() < 2 {
            return Err(MetricError::TooFewCategories(scores.len()));
        }
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(MetricError::NegativeScore);
        }
        if scores.iter().sum::<f64>() <= 0.0 {
            return Err(MetricError::ZeroTotal);
        }
        Ok(CategoryScores { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }
}

/// Role Stereotyping Index: `(C_max / C_total) * ln N`.
pub fn rsi(cs: &CategoryScores) -> f64 {
    cs.max() / cs.total() * (cs.n() as f64).ln()
}

/// RSI bounds for N categories.
pub fn rsi_range(n: usize) -> (f64, f64) {
    let ln = (n as f64).ln();
    (ln / n as f64, ln)
}

/// Share of judgments equal to the modal judgment (tied maxima share the
/// same count, so ties need no further rule).
pub fn agreement_ratio<T: Ord>(judgments: &[T]) -> Result<f64, MetricError> {
    if judgments.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for j in judgments {
        *counts.entry(j).or_default() += 1;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    Ok(modal as f64 / judgments.len() as f64)
}

/// Like [`agreement_ratio`], where `None` is an undecided evaluator: it
/// counts in the denominator but never toward the mode.
pub fn agreement_ratio_undecided<T: Ord>(judgments: &[Option<T>]) -> Result<f64, MetricError> {
    if judgments.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for j in judgments.iter().flatten() {
        *counts.entry(j).or_default() += 1;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    Ok(modal as f64 / judgments.len() as f64)
}

/// A non-empty multiset of 1..=10 ratings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingDistribution {
    ratings: Vec<u8>,
}

impl RatingDistribution {
    pub fn new(ratings: Vec<u8>) -> Result<Self, MetricError> {
        if ratings.is_empty() {
            return Err(MetricError::Empty);
        }
        if ratings.iter().any(|r| !(1..=10).contains(r)) {
            return Err(MetricError::Domain);
        }
        Ok(RatingDistribution { ratings })
    }

    pub fn ratings(&self) -> &[u8] {
        &self.ratings
    }

    pub fn bins(&self) -> [usize; 10] {
        let mut b = [0; 10];
        for r in &self.ratings {
            b[(*r - 1) as usize] += 1;
        }
        b
    }
}

/// Shannon entropy over the 10 rating bins divided by ln 10.
pub fn normalized_entropy(dist: &RatingDistribution) -> f64 {
    let n = dist.ratings.len() as f64;
    let h: f64 = dist
        .bins()
        .iter()
        .filter(|c| **c > 0)
        .map(|c| {
            let p = *c as f64 / n;
            -p * p.ln()
        })
        .sum();
    (h / 10f64.ln()).clamp(0.0, 1.0)
}

/// Group Bias Coefficient: `AR * (1 - NE)`.
pub fn gbc_from_parts(ar: f64, ne: f64) -> f64 {
    ar * (1.0 - ne)
}

pub fn gbc<T: Ord>(judgments: &[T], dist: &RatingDistribution) -> Result<f64, MetricError> {
    Ok(gbc_from_parts(
        agreement_ratio(judgments)?,
        normalized_entropy(dist),
    ))
}

/// Competence Attribution Index over per-job ratings, jobs classified by
/// their competence flag: `|mean(high) - mean(low)| / 9`.
pub fn cai(per_job: &[(TaskType, Vec<u8>)]) -> Result<f64, MetricError> {
    let mut high = Vec::new();
    let mut low = Vec::new();
    for (job, ratings) in per_job {
        match job.competence {
            Competence::Competent => high.extend(ratings.iter().map(|r| *r as f64)),
            Competence::Incompetent => low.extend(ratings.iter().map(|r| *r as f64)),
        }
    }
    if high.is_empty() || low.is_empty() {
        return Err(MetricError::InsufficientCoverage(
            "need ratings for both competent and incompetent jobs",
        ));
    }
    Ok(((mean(&high) - mean(&low)) / R_MAX).abs())
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Warmth and competence of a subject on the rating scale and normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarmthCompetencePoint {
    pub w_raw: f64,
    pub c_raw: f64,
    pub w_n: f64,
    pub c_n: f64,
}

impl WarmthCompetencePoint {
    /// From raw means in [1, 10].
    pub fn from_raw(w_raw: f64, c_raw: f64) -> Result<Self, MetricError> {
        let ok = |x: f64| (1.0..=10.0).contains(&x);
        if !ok(w_raw) || !ok(c_raw) {
            return Err(MetricError::Domain);
        }
        Ok(WarmthCompetencePoint {
            w_raw,
            c_raw,
            w_n: (w_raw - MIDPOINT).abs() / SII_SCALE,
            c_n: (c_raw - MIDPOINT).abs() / SII_SCALE,
        })
    }

    /// From normalized coordinates in [0, 2]; raw values are placed above the
    /// midpoint.
    pub fn from_normalized(w_n: f64, c_n: f64) -> Result<Self, MetricError> {
        let ok = |x: f64| (0.0..=2.0).contains(&x);
        if !ok(w_n) || !ok(c_n) {
            return Err(MetricError::Domain);
        }
        Ok(WarmthCompetencePoint {
            w_raw: MIDPOINT + w_n * SII_SCALE,
            c_raw: MIDPOINT + c_n * SII_SCALE,
            w_n,
            c_n,
        })
    }
}

/// Stereotype Intensity Index: `sqrt(W_n^2 + C_n^2) / (2 sqrt 2)`.
pub fn sii(p: &WarmthCompetencePoint) -> f64 {
    (p.w_n * p.w_n + p.c_n * p.c_n).sqrt() / (2.0 * 2f64.sqrt())
}
