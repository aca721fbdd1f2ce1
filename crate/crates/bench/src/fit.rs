//! Log-log slope estimates for cumulative curves.

use serde::Serialize;

use crate::BenchError;

pub const MIN_POINTS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub points: usize,
}

/// Least-squares fit of `log(max(y, 1))` on `log t`.
pub fn slope_fit(ts: &[f64], ys: &[f64]) -> Result<SlopeFit, BenchError> {
    assert_eq!(ts.len(), ys.len(), "abscissa and ordinate lengths differ");
    let n = ts.len();
    if n < MIN_POINTS {
        return Err(BenchError::ShortSeries(n));
    }
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ls: Vec<f64> = ys.iter().map(|y| y.max(1.0).ln()).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ls.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ls)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let stderr = (sse / (nf - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        points: n,
    })
}

/// Fit over the tail `[len * (1 - tail), len]` of a curve indexed by
/// episode, sampled at `points` log-spaced episodes.
pub fn tail_fit(curve: &[f64], tail: f64, points: usize) -> Result<SlopeFit, BenchError> {
    let idx = tail_indices(curve.len(), tail, points);
    let ts: Vec<f64> = idx.iter().map(|&t| t as f64).collect();
    let ys: Vec<f64> = idx.iter().map(|&t| curve[t - 1]).collect();
    slope_fit(&ts, &ys)
}

/// Distinct 1-based episodes, log-spaced over the tail window.
pub fn tail_indices(len: usize, tail: f64, points: usize) -> Vec<usize> {
    if len == 0 || points == 0 {
        return Vec::new();
    }
    let start = ((len as f64 * (1.0 - tail)).floor() as usize).clamp(1, len);
    let (a, b) = ((start as f64).ln(), (len as f64).ln());
    let mut out: Vec<usize> = (0..points)
        .map(|k| {
            let f = if points == 1 {
                1.0
            } else {
                k as f64 / (points - 1) as f64
            };
            ((a + f * (b - a)).exp().round() as usize).clamp(start, len)
        })
        .collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power(p: f64) -> SlopeFit {
        let ts: Vec<f64> = (1..=64).map(|k| (k * 100) as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|t| t.powf(p)).collect();
        slope_fit(&ts, &ys).unwrap()
    }

    #[test]
    fn exact_power_laws() {
        for p in [1.0, 0.5, 0.75] {
            let f = power(p);
            assert!((f.slope - p).abs() < 0.01, "{p}: {f:?}");
            assert!(f.stderr < 1e-9);
        }
    }

    #[test]
    fn short_series_is_an_error() {
        let ts: Vec<f64> = (1..=31).map(f64::from).collect();
        assert!(matches!(
            slope_fit(&ts, &ts),
            Err(BenchError::ShortSeries(31))
        ));
    }

    #[test]
    fn clamps_small_values() {
        let ts: Vec<f64> = (1..=40).map(f64::from).collect();
        let ys = vec![-5.0; 40];
        let f = slope_fit(&ts, &ys).unwrap();
        assert_eq!(f.slope, 0.0);
    }

    #[test]
    fn tail_indices_are_sorted_and_in_range() {
        let idx = tail_indices(1000, 0.5, 40);
        assert_eq!(idx.first(), Some(&500));
        assert_eq!(idx.last(), Some(&1000));
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }
}
