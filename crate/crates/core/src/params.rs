//! Model parameters and validation.

use crate::error::{Error, Result};
use serde::Serialize;

/// Splitting-decay base `c`, base proliferation rate `r`, and optional
/// truncation depth `h` (set for the senescence variant).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Parameters {
    /// An external vertex at depth n splits at rate `r * c^-n`.
    pub c: f64,
    /// Base proliferation rate (events per unit time).
    pub r: f64,
    /// Depth beyond which vertices never split: depth h+1 is inert.
    pub h: Option<u32>,
}

impl Parameters {
    pub fn new(c: f64) -> Self {
        Parameters { c, r: 1.0, h: None }
    }

    pub fn with_rate(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn with_truncation(mut self, h: u32) -> Self {
        self.h = Some(h);
        self
    }
}

/// Which guarantees the caller needs from the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationContext {
    /// Simulation only requires c > 0.
    Simulate,
    /// Closed-form evaluation requires c > 1, and rejects c so close to 1
    /// that double-precision cancellation makes the series meaningless.
    Analytic,
}

/// Smallest c accepted by analytic operations.
pub const ANALYTIC_C_MIN: f64 = 1.05;

pub fn validate(params: &Parameters, context: ValidationContext) -> Result<Parameters> {
    if !params.c.is_finite() || params.c <= 0.0 {
        return Err(Error::Validation(format!(
            "c must be positive and finite, got {}",
            params.c
        )));
    }
    if context == ValidationContext::Analytic {
        if params.c <= 1.0 {
            return Err(Error::Validation(format!(
                "analytic evaluation requires c>1, got {}",
                params.c
            )));
        }
        if params.c < ANALYTIC_C_MIN {
            return Err(Error::Validation(format!(
                "c={} is below the supported analytic range [{}, inf): \
                 series cancellation exceeds the available precision",
                params.c, ANALYTIC_C_MIN
            )));
        }
    }
    if !params.r.is_finite() || params.r <= 0.0 {
        return Err(Error::Validation(format!(
            "r must be positive and finite, got {}",
            params.r
        )));
    }
    Ok(*params)
}

/// Validate a bare c for analytic use (most analytic entry points take c
/// directly rather than a full parameter set).
pub fn validate_analytic_c(c: f64) -> Result<f64> {
    validate(&Parameters::new(c), ValidationContext::Analytic).map(|p| p.c)
}
