//! Small numerical helpers shared by the estimators: compensated summation,
//! log-domain accumulation and ordinary least squares.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// `log(sum(exp(x)))` over the slice; `-inf` for an empty slice or all `-inf` entries.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s = compensated_sum(xs.iter().map(|&x| (x - max).exp()));
    max + s.ln()
}

/// Sample mean and standard error of `exp(x_t)` for log-domain samples, returned in the
/// log domain as `(log_mean, log_stderr)`. Entries equal to `-inf` are zero samples.
pub fn log_mean_and_stderr(log_samples: &[f64], trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (f64::NAN, f64::NAN);
    }
    let max = log_samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, f64::NEG_INFINITY);
    }
    let t = trials as f64;
    let scaled: Vec<f64> = log_samples.iter().map(|&x| (x - max).exp()).collect();
    let mean = compensated_sum(scaled.iter().copied()) / t;
    // zero samples not present in `log_samples` still contribute (0 - mean)^2
    let missing = trials.saturating_sub(log_samples.len()) as f64;
    let ss = compensated_sum(scaled.iter().map(|&w| (w - mean) * (w - mean))) + missing * mean * mean;
    let var = if trials > 1 { ss / (t - 1.0) } else { 0.0 };
    let se = (var / t).sqrt();
    (max + mean.ln(), max + se.ln())
}

/// Result of a simple linear regression `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the residual variance (0 with two points).
    pub slope_stderr: f64,
    /// Number of points used.
    pub n: usize,
}

impl LinearFit {
    /// Two-sided confidence interval for the slope using Student-t quantiles.
    pub fn slope_ci(&self, level: f64) -> (f64, f64) {
        if self.n <= 2 || self.slope_stderr == 0.0 {
            return (self.slope, self.slope);
        }
        let dof = (self.n - 2) as f64;
        let t = StudentsT::new(0.0, 1.0, dof)
            .map(|d| d.inverse_cdf(0.5 + level / 2.0))
            .unwrap_or(f64::INFINITY);
        (self.slope - t * self.slope_stderr, self.slope + t * self.slope_stderr)
    }
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = compensated_sum(xs.iter().copied()) / nf;
    let my = compensated_sum(ys.iter().copied()) / nf;
    let sxx = compensated_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    if sxx == 0.0 {
        return None;
    }
    let sxy = compensated_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss = compensated_sum(
            xs.iter()
                .zip(ys)
                .map(|(x, y)| (y - intercept - slope * x).powi(2)),
        );
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LinearFit {
        slope,
        intercept,
        slope_stderr,
        n,
    })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut xs = vec![1e16, 1.0, -1e16];
        xs.extend(std::iter::repeat_n(1.0, 10));
        assert_eq!(compensated_sum(xs), 11.0);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn log_mean_counts_missing_zeros() {
        // samples {1, 0, 0, 0}: mean 0.25, sd = 0.5, se = 0.25
        let (lm, lse) = log_mean_and_stderr(&[0.0], 4);
        assert!((lm.exp() - 0.25).abs() < 1e-15);
        assert!((lse.exp() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn linear_fit_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!((fit.intercept - 1.0).abs() < 1e-14);
        assert!(fit.slope_stderr < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
