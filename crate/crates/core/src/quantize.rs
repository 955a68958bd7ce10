//! Uniform quantizer `q(x) = ⌊x/σ + ½⌋ σ`, applied componentwise.
//!
//! Ties round up, including for negative inputs (`−2.5` with `σ = 5` maps to
//! `0`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum QuantizeError {
    #[error("quantization step must be positive and finite, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub sigma: f64,
    pub enabled: bool,
}

impl QuantizerConfig {
    pub fn off() -> Self {
        Self {
            sigma: 0.0,
            enabled: false,
        }
    }

    /// `σ = 0` disables quantization.
    pub fn with_sigma(sigma: f64) -> Result<Self, QuantizeError> {
        if sigma == 0.0 {
            return Ok(Self::off());
        }
        check_step(sigma)?;
        Ok(Self { sigma, enabled: true })
    }

    /// Effective σ: zero when disabled.
    pub fn level(&self) -> f64 {
        if self.enabled {
            self.sigma
        } else {
            0.0
        }
    }

    /// Transmitted copy of `x`; the identity when disabled.
    pub fn transmit(&self, x: &[f64]) -> Vec<f64> {
        if self.enabled {
            x.iter().map(|v| quantize_unchecked(*v, self.sigma)).collect()
        } else {
            x.to_vec()
        }
    }
}

fn check_step(sigma: f64) -> Result<(), QuantizeError> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(QuantizeError::BadStep(sigma))
    }
}

#[inline]
fn quantize_unchecked(x: f64, sigma: f64) -> f64 {
    (x / sigma + 0.5).floor() * sigma
}

pub fn quantize_scalar(x: f64, sigma: f64) -> Result<f64, QuantizeError> {
    check_step(sigma)?;
    Ok(quantize_unchecked(x, sigma))
}

pub fn quantize_vector(x: &[f64], sigma: f64) -> Result<Vec<f64>, QuantizeError> {
    check_step(sigma)?;
    Ok(x.iter().map(|v| quantize_unchecked(*v, sigma)).collect())
}

/// `q(x) − x`; each component lies in `[−σ/2, σ/2)`.
pub fn quantization_error(x: &[f64], sigma: f64) -> Result<Vec<f64>, QuantizeError> {
    check_step(sigma)?;
    Ok(x.iter().map(|v| quantize_unchecked(*v, sigma) - v).collect())
}
