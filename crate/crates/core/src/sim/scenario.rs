//! Simulation scenarios: configuration, truth and data generation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dist::{
    covariance_matrix, estimate_signal_variance, regression_value, residual_params_from_sigma2, CovarianceKind,
    GaussianCopula, RegressionFn, ResidualFamily, ResidualSpec,
};
use crate::error::{Error, Result};
use crate::forest::ForestConfig;
use crate::intervals::IntervalKind;
use crate::rng::{derive_seed, mix64, stream};
use crate::variance::DEFAULT_LAMBDA;

pub const GRID_SN: [f64; 3] = [0.5, 1.0, 3.0];
pub const GRID_N: [usize; 3] = [100, 500, 1000];
pub const GRID_P: usize = 10;
pub const GRID_ALPHA: f64 = 0.05;
/// Draws used to estimate Var(m(X)) for a scenario.
pub const SIGNAL_DRAWS: usize = 100_000;

const SIGNAL_SEED: u64 = 0x5167_4E41_4C00_0001;
const X0_STREAM: u64 = 0x7830;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoverageType {
    /// Marginal over training set, query point and noise.
    I,
    /// Conditional on the training set.
    II,
    /// Conditional on the query point.
    III,
    /// Conditional on both.
    IV,
}

impl CoverageType {
    /// Whether the training set is held fixed across an inner loop.
    pub fn is_nested(self) -> bool {
        matches!(self, CoverageType::II | CoverageType::IV)
    }

    pub fn fixes_x0(self) -> bool {
        matches!(self, CoverageType::III | CoverageType::IV)
    }
}

impl fmt::Display for CoverageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoverageType::I => "I",
            CoverageType::II => "II",
            CoverageType::III => "III",
            CoverageType::IV => "IV",
        })
    }
}

impl FromStr for CoverageType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" | "TYPE-I" => Ok(CoverageType::I),
            "II" | "2" | "TYPE-II" => Ok(CoverageType::II),
            "III" | "3" | "TYPE-III" => Ok(CoverageType::III),
            "IV" | "4" | "TYPE-IV" => Ok(CoverageType::IV),
            other => Err(Error::InvalidArgument(format!(
                "unknown coverage type {other:?} (expected I, II, III, IV)"
            ))),
        }
    }
}

/// Interval constructions the harness can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Interval(IntervalKind),
    /// `m(x₀) ± z_{1−α/2} σ` with the true σ; exact for normal residuals.
    OracleNormal,
    /// True residual quantiles around `m(x₀)`; exact for every family.
    OracleQuantile,
    /// `(−∞, ∞)`.
    Unbounded,
}

impl Method {
    pub fn needs_forest(self) -> bool {
        matches!(self, Method::Interval(k) if k != IntervalKind::Ols)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Interval(k) => write!(f, "{k}"),
            Method::OracleNormal => f.write_str("oracle-normal"),
            Method::OracleQuantile => f.write_str("oracle-quantile"),
            Method::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oracle-normal" => Ok(Method::OracleNormal),
            "oracle-quantile" => Ok(Method::OracleQuantile),
            "unbounded" => Ok(Method::Unbounded),
            "oracle" => Err(Error::InvalidArgument("use oracle-normal or oracle-quantile".into())),
            other => other.parse().map(Method::Interval),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// Default method list: the five forest intervals and the linear baseline.
pub fn default_methods() -> Vec<Method> {
    IntervalKind::FOREST
        .iter()
        .copied()
        .chain([IntervalKind::Ols])
        .map(Method::Interval)
        .collect()
}

/// One cell of the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: String,
    pub regression: RegressionFn,
    pub covariance: CovarianceKind,
    pub residual: ResidualFamily,
    pub sn: f64,
    pub n: usize,
    pub p: usize,
    pub alpha: f64,
    /// Forest hyperparameters; the seed is replaced per replicate.
    pub forest: ForestConfig,
    pub lambda1: f64,
    pub coverage: CoverageType,
    /// Replicates for the marginal types (I, III).
    pub mc: usize,
    /// Outer and inner replicates for the nested types (II, IV).
    pub outer: usize,
    pub inner: usize,
    /// Scenario seed; `None` derives one from the grid seed and the position.
    pub seed: Option<u64>,
    pub methods: Vec<Method>,
    /// Query point for types III and IV; `None` draws one from the copula.
    pub x0: Option<Vec<f64>>,
    pub keep_records: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            id: "scenario".into(),
            regression: RegressionFn::Linear,
            covariance: CovarianceKind::Identity,
            residual: ResidualFamily::Normal,
            sn: 1.0,
            n: 500,
            p: GRID_P,
            alpha: GRID_ALPHA,
            forest: ForestConfig::default(),
            lambda1: DEFAULT_LAMBDA,
            coverage: CoverageType::I,
            mc: 1000,
            outer: 50,
            inner: 200,
            seed: None,
            methods: default_methods(),
            x0: None,
            keep_records: false,
        }
    }
}

impl ScenarioConfig {
    /// True when any field lies outside the published simulation grid.
    pub fn is_custom(&self) -> bool {
        !GRID_SN.contains(&self.sn)
            || !GRID_N.contains(&self.n)
            || self.p != GRID_P
            || self.alpha != GRID_ALPHA
            || !self.regression.is_grid()
    }

    /// `(outer, inner)` replicate counts for the coverage type.
    pub fn replicates(&self) -> (usize, usize) {
        if self.coverage.is_nested() {
            (self.outer, self.inner)
        } else {
            (self.mc, 1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("scenario {}: {msg}", self.id)));
        if !(self.sn > 0.0 && self.sn.is_finite()) {
            return bad(format!("sn must be positive, got {}", self.sn));
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.p < self.regression.min_dim().max(1) {
            return bad(format!("p = {} too small for {}", self.p, self.regression));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.lambda1 > 0.0 && self.lambda1 < 1.0) {
            return bad(format!("lambda1 must lie in (0, 1), got {}", self.lambda1));
        }
        let (outer, inner) = self.replicates();
        if outer == 0 || inner == 0 {
            return bad("replicate counts must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("no interval methods".into());
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.p {
                return bad(format!("x0 has {} coordinates, expected {}", x0.len(), self.p));
            }
        }
        if self.methods.iter().any(|m| m.needs_forest()) {
            self.forest.resolve(self.n, self.p)?;
        }
        Ok(())
    }
}

/// Seed used for the Var(m(X)) estimate; shared by scenarios with the same
/// regression function, covariance and dimension.
pub fn signal_seed(regression: RegressionFn, covariance: CovarianceKind, p: usize) -> u64 {
    let key = format!("{regression}/{covariance}/{p}");
    key.bytes().fold(SIGNAL_SEED, |h, b| mix64(h ^ u64::from(b)))
}

/// A validated scenario with its true noise level and samplers.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub copula: GaussianCopula,
    pub signal_variance: f64,
    pub sigma2_true: f64,
    pub residual: ResidualSpec,
    pub x0: Vec<f64>,
}

impl PreparedScenario {
    pub fn new(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let copula = GaussianCopula::new(&covariance_matrix(config.covariance, config.p))?;
        let signal_variance = estimate_signal_variance(
            config.regression,
            &copula,
            SIGNAL_DRAWS,
            signal_seed(config.regression, config.covariance, config.p),
        )?;
        if signal_variance.is_nan() || signal_variance <= 0.0 {
            return Err(Error::DegenerateSignal);
        }
        let sigma2_true = signal_variance / config.sn;
        let residual = residual_params_from_sigma2(config.residual, sigma2_true)?;
        let x0 = match &config.x0 {
            Some(x) => x.clone(),
            None => copula.sample(&mut stream(derive_seed(seed, X0_STREAM), 0)),
        };
        Ok(PreparedScenario {
            config: config.clone(),
            seed,
            copula,
            signal_variance,
            sigma2_true,
            residual,
            x0,
        })
    }

    pub fn signal(&self, x: &[f64]) -> Result<f64> {
        regression_value(self.config.regression, x)
    }

    /// Draws a training set `Y_i = m(X_i) + ε_i` of size `n`.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dataset> {
        let (n, p) = (self.config.n, self.config.p);
        let mut x = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row = self.copula.sample(rng);
            y.push(self.signal(&row)? + self.residual.sample(rng));
            x.extend_from_slice(&row);
        }
        Dataset::from_flat(x, p, y)
    }
}

/// Draws a training set for `scenario`; returns it with the true residual variance.
pub fn generate_dataset<R: Rng + ?Sized>(scenario: &ScenarioConfig, rng: &mut R) -> Result<(Dataset, f64)> {
    let prepared = PreparedScenario::new(scenario, scenario.seed.unwrap_or(0))?;
    Ok((prepared.generate(rng)?, prepared.sigma2_true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            n: 50,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn constant_signal_is_degenerate() {
        let c = ScenarioConfig {
            regression: RegressionFn::Constant(2.0),
            ..small()
        };
        assert_eq!(
            generate_dataset(&c, &mut stream(0, 0)).unwrap_err(),
            Error::DegenerateSignal
        );
    }

    #[test]
    fn generation_is_reproducible() {
        let (a, s2) = generate_dataset(&small(), &mut stream(4, 1)).unwrap();
        let (b, _) = generate_dataset(&small(), &mut stream(4, 1)).unwrap();
        assert_eq!(a, b);
        assert!((s2 / 8.25 - 1.0).abs() < 0.02, "{s2}");
        assert!(a.rows().flatten().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn custom_flag_and_validation() {
        assert!(!ScenarioConfig::default().is_custom());
        assert!(ScenarioConfig {
            sn: 2.0,
            ..ScenarioConfig::default()
        }
        .is_custom());
        assert!(small().is_custom());
        assert!(ScenarioConfig { alpha: 0.0, ..small() }.validate().is_err());
        assert!(ScenarioConfig {
            x0: Some(vec![0.5; 3]),
            ..small()
        }
        .validate()
        .is_err());
        assert!(ScenarioConfig {
            methods: vec![],
            ..small()
        }
        .validate()
        .is_err());
        assert!(ScenarioConfig {
            p: 4,
            regression: RegressionFn::NonContinuous,
            ..small()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in default_methods()
            .into_iter()
            .chain([Method::OracleNormal, Method::OracleQuantile, Method::Unbounded])
        {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
        assert_eq!("iv".parse::<CoverageType>().unwrap(), CoverageType::IV);
    }

    #[test]
    fn fixed_x0_is_seed_determined() {
        let a = PreparedScenario::new(&small(), 9).unwrap();
        let b = PreparedScenario::new(&small(), 9).unwrap();
        let c = PreparedScenario::new(&small(), 10).unwrap();
        assert_eq!(a.x0, b.x0);
        assert_ne!(a.x0, c.x0);
        assert_eq!(a.sigma2_true, c.sigma2_true);
    }
}
