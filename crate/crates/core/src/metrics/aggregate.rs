//! Cross-run aggregation and two-sample tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use super::kernels::{mean, rsi_range};
use super::report::MetricReport;
use crate::error::MetricError;

pub const HISTOGRAM_BINS: usize = 10;
/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Ten equal-width bins over `[lo, hi]`; values outside are clamped to
    /// the end bins.
    pub fn new(values: &[f64], lo: f64, hi: f64) -> Self {
        let mut counts = vec![0; HISTOGRAM_BINS];
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        for v in values {
            let i = if width > 0.0 {
                ((v - lo) / width).floor()
            } else {
                0.0
            };
            counts[(i.max(0.0) as usize).min(HISTOGRAM_BINS - 1)] += 1;
        }
        Histogram { lo, hi, counts }
    }

    /// `(bin_start, bin_end, count)` rows.
    pub fn bins(&self) -> Vec<(f64, f64, usize)> {
        let width = (self.hi - self.lo) / HISTOGRAM_BINS as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                (
                    self.lo + i as f64 * width,
                    self.lo + (i + 1) as f64 * width,
                    *c,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub histogram: Histogram,
}

/// Mean, sample SD, normal-approximation 95% CI and histogram.
pub fn summarize(values: &[f64], range: (f64, f64)) -> Result<Summary, MetricError> {
    if values.len() < 2 {
        return Err(MetricError::TooFewReports(values.len()));
    }
    let n = values.len() as f64;
    let m = mean(values);
    let sd = sample_sd(values);
    let half = Z_95 * sd / n.sqrt();
    Ok(Summary {
        n: values.len(),
        mean: m,
        sd,
        ci_low: m - half,
        ci_high: m + half,
        histogram: Histogram::new(values, range.0, range.1),
    })
}

pub fn sample_sd(values: &[f64]) -> f64 {
    if values.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() as f64 - 1.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_runs: usize,
    pub run_ids: Vec<String>,
    pub rsi: Summary,
    /// Absent when fewer than two runs produced the metric.
    pub gbc: Option<Summary>,
    pub cai: Option<Summary>,
    pub sii: Summary,
}

/// Aggregates at least two per-run reports.
pub fn meta_aggregate(reports: &[MetricReport]) -> Result<AggregateReport, MetricError> {
    if reports.len() < 2 {
        return Err(MetricError::TooFewReports(reports.len()));
    }
    let max_n = reports.iter().map(|r| r.n_categories).max().unwrap_or(2);
    let min_n = reports.iter().map(|r| r.n_categories).min().unwrap_or(2);
    let rsi_bounds = if max_n == min_n {
        rsi_range(max_n)
    } else {
        (0.0, (max_n as f64).ln())
    };
    let collect = |f: fn(&MetricReport) -> Option<f64>| -> Vec<f64> {
        reports.iter().filter_map(f).collect()
    };
    let rsi: Vec<f64> = collect(|r| Some(r.rsi));
    let sii: Vec<f64> = collect(|r| Some(r.sii));
    Ok(AggregateReport {
        n_runs: reports.len(),
        run_ids: reports.iter().map(|r| r.run_id.clone()).collect(),
        rsi: summarize(&rsi, rsi_bounds)?,
        gbc: summarize(&collect(|r| r.gbc), (0.0, 1.0)).ok(),
        cai: summarize(&collect(|r| r.cai), (0.0, 1.0)).ok(),
        sii: summarize(&sii, (0.0, 1.0))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for `mean(a) > mean(b)`.
    pub p: f64,
}

pub fn welch_one_sided(a: &[f64], b: &[f64]) -> Result<WelchTest, MetricError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(MetricError::TooFewReports(a.len().min(b.len())));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_sd(a).powi(2) / na, sample_sd(b).powi(2) / nb);
    let se = (va + vb).sqrt();
    let diff = mean(a) - mean(b);
    if se == 0.0 {
        let p = if diff > 0.0 { 0.0 } else { 1.0 };
        return Ok(WelchTest {
            t: f64::INFINITY * diff.signum(),
            df: na + nb - 2.0,
            p,
        });
    }
    let t = diff / se;
    let df = (va + vb).powi(2) / (va.powi(2) / (na - 1.0) + vb.powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|_| MetricError::Domain)?;
    Ok(WelchTest {
        t,
        df,
        p: 1.0 - dist.cdf(t),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: f64,
    pub p: f64,
}

/// Goodness of fit of `counts` against equal expected frequencies.
pub fn chi_square_uniform(counts: &[u64]) -> Result<ChiSquareTest, MetricError> {
    if counts.len() < 2 {
        return Err(MetricError::TooFewCategories(counts.len()));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(MetricError::ZeroTotal);
    }
    let expected = total as f64 / counts.len() as f64;
    let statistic: f64 = counts
        .iter()
        .map(|c| (*c as f64 - expected).powi(2) / expected)
        .sum();
    let df = (counts.len() - 1) as f64;
    let dist = ChiSquared::new(df).map_err(|_| MetricError::Domain)?;
    Ok(ChiSquareTest {
        statistic,
        df,
        p: 1.0 - dist.cdf(statistic),
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
    let sy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum::<f64>().sqrt();
    (sx > 0.0 && sy > 0.0).then(|| cov / (sx * sy))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = r;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_identical_values_has_zero_width() {
        let s = summarize(&[0.4, 0.4, 0.4], (0.0, 1.0)).unwrap();
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.ci_high - s.ci_low, 0.0);
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), 3);
    }

    #[test]
    fn mean_of_two() {
        let s = summarize(&[0.3, 0.5], (0.0, 1.0)).unwrap();
        assert!((s.mean - 0.4).abs() < 1e-12);
        assert!(summarize(&[0.3], (0.0, 1.0)).is_err());
    }

    #[test]
    fn histogram_edges() {
        let h = Histogram::new(&[0.0, 1.0, 0.55], 0.0, 1.0);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[9], 1);
        assert_eq!(h.counts[5], 1);
        assert_eq!(h.bins().len(), 10);
    }

    #[test]
    fn welch_detects_shift() {
        let a: Vec<f64> = (0..30).map(|i| 1.0 + (i % 5) as f64 * 0.01).collect();
        let b: Vec<f64> = (0..30).map(|i| 0.5 + (i % 7) as f64 * 0.01).collect();
        assert!(welch_one_sided(&a, &b).unwrap().p < 1e-6);
        assert!(welch_one_sided(&b, &a).unwrap().p > 0.99);
    }

    #[test]
    fn chi_square_uniform_counts() {
        let t = chi_square_uniform(&[25, 25, 25, 25]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!((t.p - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spearman_monotone() {
        let up = spearman(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.9]).unwrap();
        let down = spearman(&[1.0, 2.0, 3.0], &[0.9, 0.5, 0.1]).unwrap();
        assert!((up - 1.0).abs() < 1e-12 && (down + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0], &[3.0, 3.0]), None);
    }
}
