//! Across-seed statistics and load-balance metrics.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
}

/// Fraction of the run, counted from the end, used for steady-state figures.
pub const STEADY_STATE_FRACTION: f64 = 0.2;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample standard deviation; NaN below two samples.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Half-width of the two-sided 95% Student-t interval for the mean.
/// NaN below two samples.
pub fn ci95_half_width(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    t * sample_std(xs) / (n as f64).sqrt()
}

/// Number of trailing stages forming the steady-state window.
pub fn steady_state_window(num_stages: usize) -> usize {
    if num_stages == 0 {
        return 0;
    }
    ((num_stages as f64 * STEADY_STATE_FRACTION).ceil() as usize).clamp(1, num_stages)
}

/// Jain index and population standard deviation of per-node counts.
/// An all-zero vector counts as perfectly even.
pub fn fairness_metrics(counts: &[u64]) -> Result<(f64, f64), StatsError> {
    if counts.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = counts.len() as f64;
    let sum: f64 = counts.iter().map(|&c| c as f64).sum();
    let sum_sq: f64 = counts.iter().map(|&c| (c as f64).powi(2)).sum();
    let jain = if sum_sq == 0.0 { 1.0 } else { sum * sum / (n * sum_sq) };
    let m = sum / n;
    let var = counts.iter().map(|&c| (c as f64 - m).powi(2)).sum::<f64>() / n;
    Ok((jain, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_quantile_matches_tables() {
        // t_{0.975} with 9 and 1 degrees of freedom
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let expect = 2.262_157_2 * sample_std(&xs) / 10f64.sqrt();
        assert!((ci95_half_width(&xs) - expect).abs() < 1e-6);
        let expect = 12.706_204_7 * sample_std(&[0.0, 1.0]) / 2f64.sqrt();
        assert!((ci95_half_width(&[0.0, 1.0]) - expect).abs() < 1e-5);
    }

    #[test]
    fn window_is_last_fifth() {
        assert_eq!(steady_state_window(5000), 1000);
        assert_eq!(steady_state_window(3), 1);
        assert_eq!(steady_state_window(0), 0);
    }

    #[test]
    fn degenerate_samples_give_nan() {
        assert!(ci95_half_width(&[1.0]).is_nan());
        assert!(mean(&[]).is_nan());
    }
}
