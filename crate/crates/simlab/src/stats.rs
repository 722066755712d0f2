//! Binomial intervals and error-exponent regression.

use fptrace_core::{Error, Result};
use log::warn;
use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `count` successes in `trials`.
pub fn wilson(count: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = count as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if count == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if count == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// 95% upper bound on a rate with no observed events.
pub fn rule_of_three(trials: u64) -> f64 {
    (3.0 / trials as f64).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    /// Bits per symbol.
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
    /// Blocklengths whose rate was zero and left out.
    pub dropped: Vec<f64>,
}

/// Least-squares fit of `−log2 rate ≈ E·N + c` over `(N, rate)` pairs.
pub fn exponent_fit(series: &[(f64, f64)]) -> Result<ExponentFit> {
    let mut dropped = Vec::new();
    let mut pts = Vec::new();
    for &(n, rate) in series {
        if rate > 0.0 {
            pts.push((n, -rate.log2()));
        } else {
            dropped.push(n);
        }
    }
    if !dropped.is_empty() {
        warn!("exponent fit: dropped zero-rate points at N = {dropped:?}");
    }
    if pts.len() < 3 {
        return Err(Error::Config(format!("exponent fit needs 3 positive rates, got {}", pts.len())));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("exponent fit needs at least two distinct blocklengths".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (sse / (k - 2.0) / sxx).sqrt();
    Ok(ExponentFit { slope, stderr, intercept, points: pts.len(), dropped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_brackets_the_estimate() {
        let (lo, hi) = wilson(30, 100, Z95);
        assert!(lo < 0.3 && 0.3 < hi);
        assert!((lo - 0.2189).abs() < 1e-3 && (hi - 0.3958).abs() < 1e-3);
        assert_eq!(wilson(0, 10, Z95).0, 0.0);
        assert_eq!(wilson(10, 10, Z95).1, 1.0);
    }

    #[test]
    fn noiseless_series() {
        let series: Vec<(f64, f64)> = [50.0f64, 100.0, 200.0].iter().map(|&n| (n, (-0.05 * n).exp2())).collect();
        let fit = exponent_fit(&series).unwrap();
        assert!((fit.slope - 0.05).abs() < 1e-9 && fit.stderr < 1e-9);
        let flat = exponent_fit(&[(10.0, 0.2), (20.0, 0.2), (30.0, 0.2)]).unwrap();
        assert!(flat.slope.abs() < 1e-12);
    }

    #[test]
    fn zero_rates_are_dropped() {
        let fit = exponent_fit(&[(10.0, 0.5), (20.0, 0.25), (30.0, 0.125), (40.0, 0.0)]).unwrap();
        assert_eq!(fit.dropped, vec![40.0]);
        assert!(exponent_fit(&[(10.0, 0.5), (20.0, 0.0), (30.0, 0.0)]).is_err());
    }
}
