//! Zero-inflated lognormal (ZILN) mixture.
//!
//! An outcome is zero with probability `1 - pi` and otherwise drawn from
//! `LogNormal(mu, sigma^2)`. The zero branch is an exact point mass, so
//! [`ZilnParams::log_density`] mixes a log *mass* at `y = 0` with a log
//! *density* at `y > 0`; the two are only comparable across equal y-types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{standard_normal, RandomSource};

/// ln(sqrt(2*pi))
pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Magnitude of `mu + sigma^2/2` past which `exp` is not trusted in double
/// precision.
const EXP_LIMIT: f64 = 700.0;

/// Parameters of one zero-inflated lognormal branch: conversion probability
/// `pi`, log-scale location `mu`, and log-scale spread `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZilnParams {
    pub pi: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl ZilnParams {
    /// Validated constructor: `0 <= pi <= 1`, `mu` finite, `sigma > 0` finite.
    pub fn new(pi: f64, mu: f64, sigma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi) {
            return Err(Error::InvalidParameter {
                name: "pi",
                value: pi,
                reason: "must lie in [0, 1]",
            });
        }
        if !mu.is_finite() {
            return Err(Error::InvalidParameter {
                name: "mu",
                value: mu,
                reason: "must be finite",
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                value: sigma,
                reason: "must be positive and finite",
            });
        }
        Ok(Self { pi, mu, sigma })
    }

    /// Expected outcome `pi * exp(mu + sigma^2/2)`.
    ///
    /// Fails with [`Error::Overflow`] when the exponent leaves the range where
    /// double-precision `exp` is reliable.
    pub fn expected_value(&self) -> Result<f64> {
        let exponent = self.mu + 0.5 * self.sigma * self.sigma;
        if exponent.abs() > EXP_LIMIT {
            return Err(Error::Overflow {
                mu: self.mu,
                sigma: self.sigma,
                exponent,
            });
        }
        Ok(self.pi * exponent.exp())
    }

    /// Log mass at `y = 0`, log density at `y > 0`.
    ///
    /// A contradicting branch (`pi = 0` with `y > 0`, or `pi = 1` with
    /// `y = 0`) yields `-inf`, never a crash. `y < 0` is a domain error.
    pub fn log_density(&self, y: f64) -> Result<f64> {
        if y < 0.0 {
            return Err(Error::Domain(format!(
                "log_density requires y >= 0, got {y}"
            )));
        }
        if y == 0.0 {
            return Ok((1.0 - self.pi).ln());
        }
        let log_y = y.ln();
        let z = (log_y - self.mu) / self.sigma;
        Ok(self.pi.ln() - log_y - self.sigma.ln() - LN_SQRT_2PI - 0.5 * z * z)
    }

    /// Draw `n` outcomes: zero with probability `1 - pi`, else
    /// `exp(Normal(mu, sigma^2))`.
    pub fn sample(&self, rng: &mut RandomSource, n: usize) -> Vec<f64> {
        use rand::Rng;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let converted = rng.random::<f64>() < self.pi;
            if converted {
                out.push((self.mu + self.sigma * standard_normal(rng)).exp());
            } else {
                out.push(0.0);
            }
        }
        out
    }
}
