//! Truncated normal samplers.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Smallest admissible probability mass of the truncation region.
pub const MIN_TRUNCATION_MASS: f64 = 1e-12;
/// Smallest admissible acceptance rate of the bivariate rejection sampler.
pub const MIN_ACCEPTANCE: f64 = 1e-3;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Inverse-CDF sampler for `N(mean, sd²)` conditioned on `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct TruncatedNormal {
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    // Works in the lower tail when the interval lies right of the mean, so
    // the CDF values keep their precision.
    flipped: bool,
    p_lo: f64,
    p_hi: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !(sd > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "truncated normal N({mean}, {sd}²) on [{lo}, {hi}]"
            )));
        }
        let a = (lo - mean) / sd;
        let b = (hi - mean) / sd;
        let flipped = a > 0.0;
        let (a, b) = if flipped { (-b, -a) } else { (a, b) };
        let phi = std_normal();
        let p_lo = phi.cdf(a);
        let p_hi = phi.cdf(b);
        if !(p_hi - p_lo >= MIN_TRUNCATION_MASS) {
            return Err(Error::DegenerateTruncation(format!(
                "mass {:.3e} of N({mean}, {sd}²) on [{lo}, {hi}]",
                p_hi - p_lo
            )));
        }
        Ok(TruncatedNormal {
            mean,
            sd,
            lo,
            hi,
            flipped,
            p_lo,
            p_hi,
        })
    }

    pub fn mass(&self) -> f64 {
        self.p_hi - self.p_lo
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let p = self.p_lo + u * (self.p_hi - self.p_lo);
        let t = std_normal().inverse_cdf(p);
        let t = if self.flipped { -t } else { t };
        (self.mean + self.sd * t).clamp(self.lo, self.hi)
    }
}

/// `n` i.i.d. draws of `N(mean, sd²)` conditioned on `[lo, hi]`.
pub fn sample_truncnorm<R: Rng + ?Sized>(
    n: usize,
    mean: f64,
    sd: f64,
    bounds: (f64, f64),
    rng: &mut R,
) -> Result<Vec<f64>> {
    let dist = TruncatedNormal::new(mean, sd, bounds.0, bounds.1)?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// Draws from a standard bivariate normal with correlation `rho` restricted
/// to the box `[lo, hi]²`, by rejection. Returns the draws and the observed
/// acceptance rate.
pub fn sample_truncnorm_bivariate<R: Rng + ?Sized>(
    n: usize,
    rho: f64,
    bounds: (f64, f64),
    rng: &mut R,
) -> Result<(DMatrix<f64>, f64)> {
    let (lo, hi) = bounds;
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "latent correlation {rho} must lie in (-1, 1)"
        )));
    }
    if !(lo < hi) {
        return Err(Error::InvalidSpec(format!("bounds [{lo}, {hi}]")));
    }
    let c = (1.0 - rho * rho).sqrt();
    let mut out = DMatrix::zeros(n, 2);
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    while accepted < n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let x1 = z1;
        let x2 = rho * z1 + c * z2;
        proposed += 1;
        if (lo..=hi).contains(&x1) && (lo..=hi).contains(&x2) {
            out[(accepted, 0)] = x1;
            out[(accepted, 1)] = x2;
            accepted += 1;
        } else if proposed >= 10_000 && (accepted as f64) < MIN_ACCEPTANCE * proposed as f64 {
            return Err(Error::DegenerateTruncation(format!(
                "acceptance rate {:.2e} on [{lo}, {hi}]²",
                accepted as f64 / proposed as f64
            )));
        }
    }
    let rate = if proposed == 0 {
        1.0
    } else {
        accepted as f64 / proposed as f64
    };
    Ok((out, rate))
}
