//! Direct draws from a two-component Gaussian mixture by numerically
//! inverting its CDF.

use statrs::distribution::{ContinuousCDF, Normal};

pub struct Mixture {
    pub p: f64,
    a: Normal,
    b: Normal,
}

impl Mixture {
    pub fn new(m1: f64, s1: f64, m2: f64, s2: f64, p: f64) -> Self {
        Self { p, a: Normal::new(m1, s1).unwrap(), b: Normal::new(m2, s2).unwrap() }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.p * self.a.cdf(x) + (1.0 - self.p) * self.b.cdf(x)
    }

    /// Bisection on the monotone CDF.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let (mut lo, mut hi) = (-50.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample(&self, uniforms: impl Iterator<Item = f64>) -> Vec<f64> {
        uniforms.map(|u| self.inverse_cdf(u)).collect()
    }
}
