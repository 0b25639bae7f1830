//! Prediction intervals: parametric OOB intervals, the empirical-quantile
//! interval, quantile regression forests and the linear-model baseline.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dist::{normal_quantile, t_quantile};
use crate::error::{Error, Result};
use crate::forest::{Forest, OobResiduals};
use crate::variance::{VarianceEstimate, VarianceEstimates, VarianceMethod};

/// Cumulative weights within this distance below a level count as reaching it.
const CUMULATIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum IntervalKind {
    Prf,
    PrfMCor,
    PrfW,
    PrfCentered,
    NpEq,
    Qrf,
    Ols,
    Oracle,
}

impl IntervalKind {
    /// The five forest-based intervals.
    pub const FOREST: [IntervalKind; 5] = [
        IntervalKind::Prf,
        IntervalKind::PrfMCor,
        IntervalKind::PrfW,
        IntervalKind::NpEq,
        IntervalKind::Qrf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntervalKind::Prf => "prf",
            IntervalKind::PrfMCor => "prf-mcor",
            IntervalKind::PrfW => "prf-w",
            IntervalKind::PrfCentered => "prf-centered",
            IntervalKind::NpEq => "np-eq",
            IntervalKind::Qrf => "qrf",
            IntervalKind::Ols => "ols",
            IntervalKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for IntervalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IntervalKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "prf" => Ok(IntervalKind::Prf),
            "prf-mcor" => Ok(IntervalKind::PrfMCor),
            "prf-w" => Ok(IntervalKind::PrfW),
            "prf-centered" => Ok(IntervalKind::PrfCentered),
            "np-eq" => Ok(IntervalKind::NpEq),
            "qrf" => Ok(IntervalKind::Qrf),
            "ols" => Ok(IntervalKind::Ols),
            "oracle" => Ok(IntervalKind::Oracle),
            other => Err(Error::InvalidArgument(format!(
                "unknown interval method {other:?} (expected prf, prf-mcor, prf-w, np-eq, qrf, ols)"
            ))),
        }
    }
}

impl TryFrom<String> for IntervalKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<IntervalKind> for String {
    fn from(k: IntervalKind) -> String {
        k.as_str().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub method: IntervalKind,
    pub point: f64,
    /// Standard deviation used by the symmetric constructions.
    pub sigma: Option<f64>,
}

impl PredictionInterval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// `point ± z_{1-α/2} · √σ̂²`.
pub fn parametric_interval(point: f64, sigma2: &VarianceEstimate, alpha: f64) -> Result<PredictionInterval> {
    check_alpha(alpha)?;
    if sigma2.value.is_nan() || sigma2.value < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "variance must be non-negative, got {}",
            sigma2.value
        )));
    }
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    let sd = sigma2.sd();
    let method = match sigma2.method {
        VarianceMethod::Simple => IntervalKind::Prf,
        VarianceMethod::MCorrected => IntervalKind::PrfMCor,
        VarianceMethod::Weighted => IntervalKind::PrfW,
        VarianceMethod::CenteredSample => IntervalKind::PrfCentered,
    };
    Ok(PredictionInterval {
        lower: point - z * sd,
        upper: point + z * sd,
        alpha,
        method,
        point,
        sigma: Some(sd),
    })
}

/// 1-based rank `⌈level · n⌉`, clamped to `[1, n]`. Products within 1e-9 of
/// an integer are treated as that integer so `0.2 · 5` lands on 1.
fn ceil_rank(level: f64, n: usize) -> usize {
    let t = level * n as f64;
    let r = t.round();
    let k = if (t - r).abs() < 1e-9 { r } else { t.ceil() };
    (k as usize).clamp(1, n)
}

/// The `⌈α·n⌉`-th smallest value (1-indexed).
pub fn empirical_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::TooFewResiduals { needed: 1, have: 0 });
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1], got {alpha}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[ceil_rank(alpha, sorted.len()) - 1])
}

/// `[point + D̂_{α/2}, point + D̂_{1−α/2}]` from the OOB residual order statistics.
pub fn nonparametric_interval(point: f64, residuals: &OobResiduals, alpha: f64) -> Result<PredictionInterval> {
    check_alpha(alpha)?;
    let mut valid = residuals.valid_residuals();
    if valid.is_empty() {
        return Err(Error::TooFewResiduals { needed: 1, have: 0 });
    }
    let recommended = (2.0 / alpha).ceil() as usize;
    if valid.len() < recommended {
        log::warn!(
            "only {} residuals for alpha = {alpha}; the lower endpoint is the sample minimum",
            valid.len()
        );
    }
    valid.sort_by(f64::total_cmp);
    let n = valid.len();
    let lo = valid[ceil_rank(alpha / 2.0, n) - 1];
    let hi = valid[ceil_rank(1.0 - alpha / 2.0, n) - 1];
    Ok(PredictionInterval {
        lower: point + lo,
        upper: point + hi,
        alpha,
        method: IntervalKind::NpEq,
        point,
        sigma: None,
    })
}

/// Forest-weighted conditional distribution function, stored as a step
/// function over the distinct training responses with positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalCdf {
    pub support: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl ConditionalCdf {
    /// Builds the step function from (value, weight) pairs.
    pub fn from_weighted(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                got: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "weights must be finite and non-negative, got {w}"
            )));
        }
        let mut pairs: Vec<(f64, f64)> = values
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&v, &w)| (v, w))
            .collect();
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("no positive weights".into()));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support = Vec::with_capacity(pairs.len());
        let mut cumulative: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut acc = 0.0;
        for (v, w) in pairs {
            acc += w;
            if support.last() == Some(&v) {
                *cumulative.last_mut().expect("non-empty") = acc;
            } else {
                support.push(v);
                cumulative.push(acc);
            }
        }
        Ok(ConditionalCdf { support, cumulative })
    }

    /// `F̂(y)`, right-continuous.
    pub fn eval(&self, y: f64) -> f64 {
        let k = self.support.partition_point(|&s| s <= y);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }
}

pub fn qrf_cdf(forest: &Forest, data: &Dataset, x: &[f64]) -> Result<ConditionalCdf> {
    let weights = forest.leaf_weights(x)?;
    ConditionalCdf::from_weighted(data.y(), &weights)
}

/// `inf{y : F̂(y) ≥ α}`.
pub fn qrf_quantile(cdf: &ConditionalCdf, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1], got {alpha}")));
    }
    let k = cdf.cumulative.partition_point(|&c| c < alpha - CUMULATIVE_TOL);
    Ok(cdf.support[k.min(cdf.support.len() - 1)])
}

pub fn qrf_interval(forest: &Forest, data: &Dataset, x: &[f64], alpha: f64) -> Result<PredictionInterval> {
    check_alpha(alpha)?;
    let cdf = qrf_cdf(forest, data, x)?;
    Ok(PredictionInterval {
        lower: qrf_quantile(&cdf, alpha / 2.0)?,
        upper: qrf_quantile(&cdf, 1.0 - alpha / 2.0)?,
        alpha,
        method: IntervalKind::Qrf,
        point: forest.predict(x)?,
        sigma: None,
    })
}

/// Least-squares fit with intercept, kept for repeated interval queries.
#[derive(Debug, Clone)]
pub struct OlsFit {
    coef: DVector<f64>,
    /// Upper-triangular factor of the design's QR decomposition.
    r: DMatrix<f64>,
    pub sigma2: f64,
    pub df: usize,
}

impl OlsFit {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let (n, p) = (data.n_samples(), data.n_features());
        let cols = p + 1;
        if n <= cols {
            return Err(Error::InvalidArgument(format!(
                "need more observations ({n}) than design columns ({cols})"
            )));
        }
        let design = DMatrix::from_fn(n, cols, |i, j| if j == 0 { 1.0 } else { data.value(i, j - 1) });
        let y = DVector::from_column_slice(data.y());

        let sv = design.clone().singular_values();
        let smax = sv.max();
        let tol = smax * n.max(cols) as f64 * f64::EPSILON;
        let rank = sv.iter().filter(|&&s| s > tol).count();
        if rank < cols {
            return Err(Error::Singular { rank, cols });
        }

        let qr = design.clone().qr();
        let r = qr.r();
        let qty = qr.q().transpose() * &y;
        let coef = r.solve_upper_triangular(&qty).ok_or(Error::Singular { rank, cols })?;
        let rss = (&y - &design * &coef).norm_squared();
        let df = n - rank;
        Ok(OlsFit {
            coef,
            r,
            sigma2: rss / df as f64,
            df,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        self.coef.as_slice()
    }

    fn augmented(&self, x0: &[f64]) -> Result<DVector<f64>> {
        if x0.len() + 1 != self.coef.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coef.len() - 1,
                got: x0.len(),
            });
        }
        Ok(DVector::from_iterator(
            x0.len() + 1,
            std::iter::once(1.0).chain(x0.iter().copied()),
        ))
    }

    pub fn predict(&self, x0: &[f64]) -> Result<f64> {
        Ok(self.augmented(x0)?.dot(&self.coef))
    }

    /// `x̃₀'(X̃'X̃)⁻¹x̃₀`.
    pub fn leverage(&self, x0: &[f64]) -> Result<f64> {
        let x = self.augmented(x0)?;
        let v = self
            .r
            .transpose()
            .solve_lower_triangular(&x)
            .ok_or(Error::Singular { rank: 0, cols: x.len() })?;
        Ok(v.norm_squared())
    }

    /// `x̃₀'β̂ ± t_{n−rk,1−α/2} · √(σ̂² (1 + leverage))`.
    pub fn interval(&self, x0: &[f64], alpha: f64) -> Result<PredictionInterval> {
        check_alpha(alpha)?;
        let point = self.predict(x0)?;
        let t = t_quantile(1.0 - alpha / 2.0, self.df as f64)?;
        let half = t * (self.sigma2 * (1.0 + self.leverage(x0)?)).sqrt();
        Ok(PredictionInterval {
            lower: point - half,
            upper: point + half,
            alpha,
            method: IntervalKind::Ols,
            point,
            sigma: Some(self.sigma2.sqrt()),
        })
    }
}

pub fn ols_interval(data: &Dataset, x0: &[f64], alpha: f64) -> Result<PredictionInterval> {
    OlsFit::fit(data)?.interval(x0, alpha)
}

/// A trained forest together with its OOB residuals and the three variance
/// estimates, so interval queries at many points reuse them.
#[derive(Debug, Clone)]
pub struct ForestIntervals {
    forest: Forest,
    residuals: OobResiduals,
    estimates: VarianceEstimates,
}

impl ForestIntervals {
    /// `data` must be the training set of `forest`.
    pub fn new(forest: Forest, data: &Dataset, lambda1: f64) -> Result<Self> {
        let residuals = forest.oob_residuals(data)?;
        let estimates = VarianceEstimates::compute(&residuals, lambda1)?;
        Ok(ForestIntervals {
            forest,
            residuals,
            estimates,
        })
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn residuals(&self) -> &OobResiduals {
        &self.residuals
    }

    pub fn estimates(&self) -> &VarianceEstimates {
        &self.estimates
    }

    /// Interval of the given kind at `x`; `data` is the training set.
    pub fn interval(&self, kind: IntervalKind, data: &Dataset, x: &[f64], alpha: f64) -> Result<PredictionInterval> {
        let point = || self.forest.predict(x);
        match kind {
            IntervalKind::Prf => parametric_interval(point()?, &self.estimates.simple, alpha),
            IntervalKind::PrfMCor => parametric_interval(point()?, &self.estimates.corrected, alpha),
            IntervalKind::PrfW => parametric_interval(point()?, &self.estimates.weighted, alpha),
            IntervalKind::PrfCentered => {
                let centered = crate::variance::sigma2_centered_sample(&self.residuals)?;
                parametric_interval(point()?, &centered, alpha)
            }
            IntervalKind::NpEq => nonparametric_interval(point()?, &self.residuals, alpha),
            IntervalKind::Qrf => qrf_interval(&self.forest, data, x, alpha),
            IntervalKind::Ols => ols_interval(data, x, alpha),
            IntervalKind::Oracle => Err(Error::InvalidArgument("oracle intervals need the true model".into())),
        }
    }
}
