use serde::{Deserialize, Serialize};

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl MeanStderr {
    pub fn from_samples(xs: &[f64]) -> Self {
        let m = xs.len();
        if m == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, samples: 0 };
        }
        let mean = xs.iter().sum::<f64>() / m as f64;
        let stderr = if m > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            (var / m as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, samples: m }
    }

    /// Unbiased sample variance.
    pub fn variance(xs: &[f64]) -> f64 {
        let m = xs.len();
        if m < 2 {
            return 0.0;
        }
        let mean = xs.iter().sum::<f64>() / m as f64;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64
    }
}

/// Entrywise mean/stderr over a set of equally-shaped vectors.
pub fn columnwise(samples: &[Vec<f64>]) -> Vec<MeanStderr> {
    let Some(first) = samples.first() else { return Vec::new() };
    (0..first.len())
        .map(|i| {
            let col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            MeanStderr::from_samples(&col)
        })
        .collect()
}

/// Numerically stable `ln Σ exp(v)`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Composite Simpson rule on a uniform grid with an even number of intervals;
/// falls back to the trapezoid rule otherwise.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let m = values.len();
    if m < 2 {
        return 0.0;
    }
    let intervals = m - 1;
    if !intervals.is_multiple_of(2) {
        return h * (values[..m].windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>());
    }
    let mut acc = values[0] + values[m - 1];
    for (i, v) in values.iter().enumerate().take(m - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let h = 0.1;
        let v: Vec<f64> = (0..=10).map(|i| (i as f64 * h).powi(3)).collect();
        assert!((simpson(&v, h) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn lse_matches_direct_sum() {
        let v = [0.1, -2.0, 3.5];
        let direct: f64 = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - direct).abs() < 1e-14);
    }

    #[test]
    fn mean_stderr_basic() {
        let s = MeanStderr::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.stderr - (1.666_666_666_666_666_7f64 / 4.0).sqrt()).abs() < 1e-12);
    }
}
