//! Size distributions for grain and sphere marks.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SizeDist {
    Constant { value: f64 },
    Uniform { min: f64, max: f64 },
    /// Log-normal with the given mean and standard deviation of the size
    /// itself, truncated to `[min, max]` by rejection.
    Lognormal { mean: f64, stddev: f64, min: f64, max: f64 },
}

impl SizeDist {
    pub fn constant(value: f64) -> Self {
        SizeDist::Constant { value }
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        let ok = match *self {
            SizeDist::Constant { value } => value.is_finite() && value > 0.0,
            SizeDist::Uniform { min, max } => min > 0.0 && max.is_finite() && max >= min,
            SizeDist::Lognormal { mean, stddev, min, max } => {
                mean > 0.0 && stddev >= 0.0 && min > 0.0 && max.is_finite() && max >= min && mean.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(name, format!("size distribution must have bounded positive support, got {self:?}")))
        }
    }

    /// Largest value the distribution can produce.
    pub fn sup(&self) -> f64 {
        match *self {
            SizeDist::Constant { value } => value,
            SizeDist::Uniform { max, .. } | SizeDist::Lognormal { max, .. } => max,
        }
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1)
    }

    /// `E[X^k]`. Exact for constant and uniform; for the truncated
    /// log-normal it is computed by numerical quadrature.
    pub fn raw_moment(&self, k: i32) -> f64 {
        match *self {
            SizeDist::Constant { value } => value.powi(k),
            SizeDist::Uniform { min, max } => {
                if max == min {
                    return min.powi(k);
                }
                let k1 = (k + 1) as f64;
                (max.powf(k1) - min.powf(k1)) / (k1 * (max - min))
            }
            SizeDist::Lognormal { min, max, .. } => {
                let (mu, s) = self.log_params();
                if s == 0.0 || max == min {
                    return mu.exp().clamp(min, max).powi(k);
                }
                let n = 4000;
                let (a, b) = (min.ln(), max.ln());
                let h = (b - a) / n as f64;
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..=n {
                    let t = a + h * i as f64;
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    let dens = (-(t - mu).powi(2) / (2.0 * s * s)).exp();
                    num += w * dens * (k as f64 * t).exp();
                    den += w * dens;
                }
                num / den
            }
        }
    }

    fn log_params(&self) -> (f64, f64) {
        match *self {
            SizeDist::Lognormal { mean, stddev, .. } => {
                let s2 = (1.0 + (stddev / mean).powi(2)).ln();
                (mean.ln() - 0.5 * s2, s2.sqrt())
            }
            _ => unreachable!(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SizeDist::Constant { value } => value,
            SizeDist::Uniform { min, max } => {
                if max > min {
                    rng.random_range(min..=max)
                } else {
                    min
                }
            }
            SizeDist::Lognormal { min, max, .. } => {
                let (mu, s) = self.log_params();
                if s == 0.0 {
                    return mu.exp().clamp(min, max);
                }
                let d = LogNormal::new(mu, s).expect("validated lognormal");
                for _ in 0..1000 {
                    let v = d.sample(rng);
                    if (min..=max).contains(&v) {
                        return v;
                    }
                }
                mu.exp().clamp(min, max)
            }
        }
    }
}
