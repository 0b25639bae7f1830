//! Residual-variance estimators built from out-of-bag residuals.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::OobResiduals;

/// Default weight of the corrected estimator in the weighted combination.
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMethod {
    Simple,
    MCorrected,
    Weighted,
    CenteredSample,
}

impl fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarianceMethod::Simple => "simple",
            VarianceMethod::MCorrected => "m-corrected",
            VarianceMethod::Weighted => "weighted",
            VarianceMethod::CenteredSample => "centered-sample",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub value: f64,
    pub method: VarianceMethod,
    pub n_used: usize,
    /// Finite-M correction `C_{n,M}` (corrected and weighted estimates only).
    pub correction: Option<f64>,
}

impl VarianceEstimate {
    pub fn sd(&self) -> f64 {
        self.value.sqrt()
    }
}

/// Mean of squared valid OOB residuals (no centering, divisor `n_valid`).
pub fn sigma2_simple(residuals: &OobResiduals) -> Result<VarianceEstimate> {
    let valid = residuals.valid_residuals();
    if valid.is_empty() {
        return Err(Error::NoOobCoverage);
    }
    let value = valid.iter().map(|r| r * r).sum::<f64>() / valid.len() as f64;
    Ok(VarianceEstimate {
        value,
        method: VarianceMethod::Simple,
        n_used: valid.len(),
        correction: None,
    })
}

/// `C_{n,M} = (8/M) (max_i |m_oob(X_i)|² + σ̂² (1 + 4 ln n))`.
pub fn finite_m_correction(sigma2: f64, max_abs_prediction: f64, num_trees: usize, n: usize) -> f64 {
    8.0 / num_trees as f64 * (max_abs_prediction * max_abs_prediction + sigma2 * (1.0 + 4.0 * (n as f64).ln()))
}

/// `|σ̂² − C_{n,M}|` from its ingredients; returns `(value, C_{n,M})`.
pub fn corrected_value(sigma2: f64, max_abs_prediction: f64, num_trees: usize, n: usize) -> (f64, f64) {
    let c = finite_m_correction(sigma2, max_abs_prediction, num_trees, n);
    ((sigma2 - c).abs(), c)
}

/// Finite-M corrected estimator. `n` in the correction is the full training
/// size, not the number of valid residuals.
pub fn sigma2_corrected(residuals: &OobResiduals, num_trees: usize) -> Result<VarianceEstimate> {
    if num_trees == 0 {
        return Err(Error::InvalidArgument("num_trees must be at least 1".into()));
    }
    let simple = sigma2_simple(residuals)?;
    let max_abs = residuals
        .predictions
        .iter()
        .flatten()
        .fold(0.0_f64, |m, p| m.max(p.abs()));
    let (value, c) = corrected_value(simple.value, max_abs, num_trees, residuals.n_samples());
    Ok(VarianceEstimate {
        value,
        method: VarianceMethod::MCorrected,
        n_used: simple.n_used,
        correction: Some(c),
    })
}

/// `λ₁ σ̂²_corrected + (1 − λ₁) σ̂²_simple`.
pub fn sigma2_weighted(
    simple: &VarianceEstimate,
    corrected: &VarianceEstimate,
    lambda1: f64,
) -> Result<VarianceEstimate> {
    if !(lambda1 > 0.0 && lambda1 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda1 must lie in (0, 1), got {lambda1}"
        )));
    }
    Ok(VarianceEstimate {
        value: lambda1 * corrected.value + (1.0 - lambda1) * simple.value,
        method: VarianceMethod::Weighted,
        n_used: simple.n_used.min(corrected.n_used),
        correction: corrected.correction,
    })
}

/// Centered sample variance of the valid residuals, divisor `n_valid − 1`.
pub fn sigma2_centered_sample(residuals: &OobResiduals) -> Result<VarianceEstimate> {
    let valid = residuals.valid_residuals();
    if valid.len() < 2 {
        return Err(Error::TooFewResiduals {
            needed: 2,
            have: valid.len(),
        });
    }
    let n = valid.len() as f64;
    let mean = valid.iter().sum::<f64>() / n;
    let value = valid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(VarianceEstimate {
        value,
        method: VarianceMethod::CenteredSample,
        n_used: valid.len(),
        correction: None,
    })
}

/// The three estimators used by the parametric intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimates {
    pub simple: VarianceEstimate,
    pub corrected: VarianceEstimate,
    pub weighted: VarianceEstimate,
}

impl VarianceEstimates {
    pub fn compute(residuals: &OobResiduals, lambda1: f64) -> Result<Self> {
        let simple = sigma2_simple(residuals)?;
        let corrected = sigma2_corrected(residuals, residuals.num_trees)?;
        let weighted = sigma2_weighted(&simple, &corrected, lambda1)?;
        Ok(VarianceEstimates {
            simple,
            corrected,
            weighted,
        })
    }
}
