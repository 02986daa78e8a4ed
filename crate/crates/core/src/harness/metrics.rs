use serde::{Deserialize, Serialize};

use crate::allocator::log_utility;
use crate::error::{Error, Result};

/// Nearest-rank percentile of an ascending slice: the value at 1-based rank
/// `ceil(p / 100 * n)`, with rank at least 1.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let n = sorted.len();
    // p * n first: exact for integer inputs, so multiples of 100 never round up
    let rank = (p * n as f64 / 100.0).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Throughput statistics of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    pub sum_rate: f64,
    pub log_utility: f64,
}

pub fn compute_metrics(rates: &[f64], weights: &[f64]) -> Result<MetricsReport> {
    if rates.is_empty() || rates.len() != weights.len() {
        return Err(Error::Dimension(format!("{} rates for {} weights", rates.len(), weights.len())));
    }
    if let Some(r) = rates.iter().find(|r| !(**r >= 0.0)) {
        return Err(Error::Config(format!("negative or undefined rate {r}")));
    }
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(MetricsReport {
        p5: nearest_rank(&sorted, 5.0),
        p50: nearest_rank(&sorted, 50.0),
        p95: nearest_rank(&sorted, 95.0),
        sum_rate: rates.iter().sum(),
        log_utility: log_utility(rates, weights),
    })
}

/// Field-wise mean over drops.
pub fn mean_metrics(reports: &[MetricsReport]) -> Option<MetricsReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(MetricsReport {
        p5: avg(|m| m.p5),
        p50: avg(|m| m.p50),
        p95: avg(|m| m.p95),
        sum_rate: avg(|m| m.sum_rate),
        log_utility: avg(|m| m.log_utility),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_to_hundred() {
        let rates: Vec<f64> = (1..=100).map(f64::from).collect();
        let m = compute_metrics(&rates, &[1.0; 100]).unwrap();
        assert_eq!((m.p5, m.p50, m.p95), (5.0, 50.0, 95.0));
        assert_eq!(m.sum_rate, 5050.0);
    }

    #[test]
    fn constant_rates() {
        let m = compute_metrics(&[3.0; 7], &[1.0; 7]).unwrap();
        assert_eq!((m.p5, m.p50, m.p95), (3.0, 3.0, 3.0));
        assert_eq!(m.sum_rate, 21.0);
        assert!((m.log_utility - 7.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_is_reported_not_fatal() {
        let m = compute_metrics(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(m.log_utility, f64::NEG_INFINITY);
        assert_eq!(m.p5, 0.0);
        assert!(compute_metrics(&[-1.0], &[1.0]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
    }

    #[test]
    fn small_samples() {
        assert_eq!(nearest_rank(&[4.0], 5.0), 4.0);
        assert_eq!(nearest_rank(&[1.0, 2.0, 3.0], 50.0), 2.0);
        assert_eq!(nearest_rank(&[1.0, 2.0, 3.0], 95.0), 3.0);
    }

    #[test]
    fn mean_over_drops() {
        let a = compute_metrics(&[1.0, 3.0], &[1.0, 1.0]).unwrap();
        let b = compute_metrics(&[3.0, 5.0], &[1.0, 1.0]).unwrap();
        let m = mean_metrics(&[a, b]).unwrap();
        assert_eq!(m.sum_rate, 6.0);
        assert_eq!(m.p5, 2.0);
        assert!(mean_metrics(&[]).is_none());
    }
}
