//! Small statistics helpers: log-log slope fits and percentiles.

use crate::error::{CoreError, Result};

/// Ordinary least-squares line fit. Returns (slope, intercept, slope stderr).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(CoreError::invalid("linear_fit needs >= 2 paired samples"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|&v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(CoreError::invalid("linear_fit: degenerate abscissae"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let stderr = (ss_res / dof / sxx).sqrt();
    Ok((slope, intercept, stderr))
}

/// Slope of `ln y` against `ln x`; all inputs must be positive.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.iter().chain(y).any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(CoreError::invalid("log_log_slope needs positive finite samples"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (slope, _, se) = linear_fit(&lx, &ly)?;
    Ok((slope, se))
}

/// Interpolated percentile (q in [0, 1]) of an unsorted sample.
pub fn percentile(samples: &[f64], q: f64) -> f64 {
    assert!(!samples.is_empty());
    let mut v: Vec<f64> = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        let w = pos - lo as f64;
        v[lo] * (1.0 - w) + v[hi] * w
    }
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Sample standard deviation (n-1 in the denominator).
pub fn sample_std(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(samples);
    (samples.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        let (s, b, se) = linear_fit(&x, &y).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
        assert!(b.abs() < 1e-12);
        assert!(se < 1e-12);
    }

    #[test]
    fn power_law_slope() {
        let x = [0.1, 0.2, 0.4, 0.8];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
        let (s, _) = log_log_slope(&x, &y).unwrap();
        assert!((s - 1.7).abs() < 1e-10);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert!((percentile(&v, 0.5) - 2.5).abs() < 1e-12);
    }
}
