//! Binomial estimates and the few test statistics the estimators need.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// two-sided 95% normal quantile
pub const Z95: f64 = 1.959_963_984_540_054;

/// Monte Carlo probability estimate with a Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub p_hat: f64,
    pub n: u64,
    pub successes: u64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

impl Estimate {
    pub fn from_counts(successes: u64, n: u64, seed: u64) -> Self {
        assert!(n > 0 && successes <= n, "invalid counts {successes}/{n}");
        let (ci_low, ci_high) = wilson(successes, n, Z95);
        let p_hat = successes as f64 / n as f64;
        Estimate {
            p_hat,
            n,
            successes,
            // guard the invariant against last-ulp rounding
            ci_low: ci_low.min(p_hat),
            ci_high: ci_high.max(p_hat),
            seed,
        }
    }

    /// Plug-in binomial standard error.
    pub fn sigma(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.n as f64).sqrt()
    }

    pub fn ci_width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Upper tail probability of a χ² statistic.
pub fn chi_square_sf(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(stat)
}

/// Kolmogorov–Smirnov statistic of a sample against a continuous CDF.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the one-sample KS statistic `d` at sample size `n`.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let t = (sn + 0.12 + 0.11 / sn) * d;
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powi(k as i32 - 1) * (-2.0 * k * k * t * t).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Pearson correlation of two 0/1 sequences; `None` if either is constant.
pub fn pearson(x: &[bool], y: &[bool]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = (a as u8 as f64, b as u8 as f64);
        sx += a;
        sy += b;
        sxy += a * b;
    }
    let cov = sxy / n - (sx / n) * (sy / n);
    let vx = sx / n * (1.0 - sx / n);
    let vy = sy / n * (1.0 - sy / n);
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}
