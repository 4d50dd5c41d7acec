//! Batch statistics and plot-ready derived data.

use serde::Serialize;
use thiserror::Error;

use crate::engine::KernelResult;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("{0} needs at least {1} values")]
    TooFew(&'static str, usize),
    #[error("{what} must be positive and finite, got {value}")]
    NotPositive { what: &'static str, value: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("input is constant, correlation is undefined")]
    Constant,
}

/// `n / sum(1 / v)`.
pub fn harmonic_mean(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::TooFew("harmonic mean", 1));
    }
    let mut inv = 0.0;
    for &v in values {
        if !(v > 0.0 && v.is_finite()) {
            return Err(MetricsError::NotPositive {
                what: "harmonic mean input",
                value: v,
            });
        }
        inv += 1.0 / v;
    }
    Ok(values.len() as f64 / inv)
}

/// Pearson correlation `cov(x, y) / (std(x) * std(y))`, computed with
/// population (1/n) normalisation throughout. The normalisation cancels, so
/// sample statistics would give the same value.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MetricsError::TooFew("correlation", 2));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::Constant);
    }
    let cov = sxy / n;
    let r = cov / ((sxx / n).sqrt() * (syy / n).sqrt());
    Ok(r.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Normalized {
    pub name: String,
    /// Percent of the stride-1 baseline; above 100 means caches served reuse.
    pub percent: f64,
}

fn check_baseline(baseline_bw: f64) -> Result<(), MetricsError> {
    if baseline_bw > 0.0 && baseline_bw.is_finite() {
        Ok(())
    } else {
        Err(MetricsError::NotPositive {
            what: "baseline bandwidth",
            value: baseline_bw,
        })
    }
}

pub fn normalize_to_baseline(
    results: &[KernelResult],
    baseline_bw: f64,
) -> Result<Vec<Normalized>, MetricsError> {
    check_baseline(baseline_bw)?;
    Ok(results
        .iter()
        .map(|r| Normalized {
            name: r.name.clone(),
            percent: 100.0 * r.bandwidth_mb_s / baseline_bw,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BwPoint {
    pub name: String,
    /// Baseline (stride-1) bandwidth, MB/s.
    pub x: f64,
    /// Pattern bandwidth, MB/s.
    pub y: f64,
}

/// Bandwidth-bandwidth scatter data: every pattern plotted against the
/// stride-1 bandwidth of the same platform.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BwBw {
    pub points: Vec<BwPoint>,
    /// Slopes of the constant-fraction guide lines `y = f * x`.
    pub guide_fractions: Vec<f64>,
}

pub const STRIDE1_POINT: &str = "stride-1";
pub const GUIDE_FRACTIONS: [f64; 5] = [1.0, 0.5, 0.25, 0.125, 0.0625];

pub fn bwbw_points(results: &[KernelResult], baseline_bw: f64) -> Result<BwBw, MetricsError> {
    check_baseline(baseline_bw)?;
    let mut points = Vec::with_capacity(results.len() + 1);
    points.push(BwPoint {
        name: STRIDE1_POINT.to_string(),
        x: baseline_bw,
        y: baseline_bw,
    });
    points.extend(results.iter().map(|r| BwPoint {
        name: r.name.clone(),
        x: baseline_bw,
        y: r.bandwidth_mb_s,
    }));
    Ok(BwBw {
        points,
        guide_fractions: GUIDE_FRACTIONS.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub results: Vec<KernelResult>,
    pub min_bw: f64,
    pub max_bw: f64,
    pub harmonic_mean_bw: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_bw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized: Option<Vec<Normalized>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bwbw: Option<BwBw>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlation_r: Option<f64>,
}

pub fn summarize(
    results: Vec<KernelResult>,
    baseline_bw: Option<f64>,
    reference: Option<&[f64]>,
) -> Result<SuiteReport, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::TooFew("summary", 1));
    }
    let bws: Vec<f64> = results.iter().map(|r| r.bandwidth_mb_s).collect();
    let min_bw = bws.iter().copied().fold(f64::INFINITY, f64::min);
    let max_bw = bws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // rounding can push the mean of equal values a hair outside [min, max]
    let harmonic_mean_bw = harmonic_mean(&bws)?.clamp(min_bw, max_bw);

    let (normalized, bwbw) = match baseline_bw {
        Some(b) => (
            Some(normalize_to_baseline(&results, b)?),
            Some(bwbw_points(&results, b)?),
        ),
        None => (None, None),
    };
    let correlation_r = reference.map(|r| pearson_r(&bws, r)).transpose()?;

    Ok(SuiteReport {
        results,
        min_bw,
        max_bw,
        harmonic_mean_bw,
        baseline_bw,
        normalized,
        bwbw,
        correlation_r,
    })
}
