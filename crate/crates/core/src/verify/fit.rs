//! Log-log rate fits and monitor bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fits with `r²` below this are flagged.
pub const R2_FLAG: f64 = 0.9;
/// Values below this (relative to the normalizer) count as vanishing.
pub const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    pub epsilon: f64,
    pub value: f64,
    pub normalizer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub name: String,
    pub samples: Vec<RateSample>,
    /// `None` when every value vanishes.
    pub slope: Option<f64>,
    pub r2: Option<f64>,
    pub flagged: bool,
    pub degenerate: bool,
}

impl RateStudy {
    /// Least-squares slope of `log(value/normalizer)` against `log ε`.
    pub fn fit(name: &str, samples: Vec<RateSample>) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::InvalidArgument(format!("{name}: a rate fit needs at least 3 samples, got {}", samples.len())));
        }
        if samples.windows(2).any(|w| w[1].epsilon >= w[0].epsilon) {
            return Err(Error::InvalidArgument(format!("{name}: ε must be strictly decreasing")));
        }
        if samples.iter().any(|s| !(s.normalizer > 0.0) || !s.value.is_finite() || s.value < 0.0) {
            return Err(Error::InvalidArgument(format!("{name}: values must be finite and nonnegative, normalizers positive")));
        }
        let degenerate = samples.iter().all(|s| s.value <= DEGENERATE_TOL * s.normalizer);
        if degenerate {
            return Ok(RateStudy { name: name.into(), samples, slope: None, r2: None, flagged: false, degenerate });
        }
        if samples.iter().any(|s| s.value <= 0.0) {
            return Err(Error::InvalidArgument(format!("{name}: some but not all values vanish")));
        }
        let x: Vec<f64> = samples.iter().map(|s| s.epsilon.ln()).collect();
        let y: Vec<f64> = samples.iter().map(|s| (s.value / s.normalizer).ln()).collect();
        let (slope, r2) = least_squares(&x, &y);
        Ok(RateStudy { name: name.into(), samples, slope: Some(slope), r2: Some(r2), flagged: r2 < R2_FLAG, degenerate })
    }

    /// Whether the slope reaches `min_slope` with `r² ≥ min_r2`.
    pub fn passes(&self, min_slope: f64, min_r2: f64) -> bool {
        matches!((self.slope, self.r2), (Some(s), Some(r)) if s >= min_slope && r >= min_r2)
    }
}

/// Slope and coefficient of determination of the least-squares line.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, r2)
}

/// Growth trend: slope of `log value` against `log(1/ε)`.
pub fn trend_slope(eps: &[f64], values: &[f64]) -> Result<f64> {
    if eps.len() < 2 || eps.len() != values.len() {
        return Err(Error::InvalidArgument("a trend needs at least two (ε, value) pairs".into()));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument("trend values must be finite and positive".into()));
    }
    let x: Vec<f64> = eps.iter().map(|e| -e.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    Ok(least_squares(&x, &y).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorEntry {
    pub epsilon: f64,
    /// What was varied inside one ε, e.g. `r=0.125` or `p=2,rho=1`.
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub name: String,
    pub entries: Vec<MonitorEntry>,
    pub sup: f64,
    /// Trend slope of the per-ε sups.
    pub trend: Option<f64>,
    pub trend_cap: Option<f64>,
    pub value_cap: Option<f64>,
    pub pass: bool,
}

impl MonitorReport {
    /// Sup over all entries, the trend of per-ε sups and the caps.
    pub fn evaluate(name: &str, entries: Vec<MonitorEntry>, trend_cap: Option<f64>, value_cap: Option<f64>) -> Result<Self> {
        if entries.iter().any(|e| !e.value.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name}: non-finite monitor value")));
        }
        let sup = entries.iter().map(|e| e.value).fold(f64::NEG_INFINITY, f64::max);
        let mut eps: Vec<f64> = entries.iter().map(|e| e.epsilon).collect();
        eps.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eps.dedup();
        let sups: Vec<f64> = eps
            .iter()
            .map(|&x| entries.iter().filter(|e| e.epsilon == x).map(|e| e.value).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let trend = if eps.len() >= 2 { trend_slope(&eps, &sups).ok() } else { None };
        let trend_ok = match trend_cap {
            Some(c) => trend.is_some_and(|t| t <= c),
            None => true,
        };
        let value_ok = value_cap.is_none_or(|c| sup <= c);
        Ok(MonitorReport {
            name: name.into(),
            entries,
            sup,
            trend,
            trend_cap,
            value_cap,
            pass: sup.is_finite() && trend_ok && value_ok,
        })
    }
}
