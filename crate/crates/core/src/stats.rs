//! Summary statistics for Monte-Carlo estimates.

/// 97.5% standard-normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample standard deviation (0 when `n < 2`).
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { n, mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { n, mean, sd }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sd / (self.n as f64).sqrt()
        }
    }

    /// Normal-approximation 95% interval for the mean.
    pub fn ci95(&self) -> (f64, f64) {
        let half = Z_975 * self.std_error();
        (self.mean - half, self.mean + half)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_small_sample() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_close!(s.sd, (5.0f64 / 3.0).sqrt(), 1e-15);
        assert_close!(s.std_error(), s.sd / 2.0, 1e-15);
        let (lo, hi) = s.ci95();
        assert_close!(hi - s.mean, s.mean - lo, 1e-15);
        assert_eq!(Summary::of(&[5.0]).sd, 0.0);
        assert!(Summary::of(&[]).mean.is_nan());
    }
}
