//! Monte-Carlo estimation of coverage rates and interval lengths.

use std::cell::OnceCell;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{CoverageType, Method, PreparedScenario, ScenarioConfig};
use crate::data::Dataset;
use crate::dist::normal_quantile;
use crate::error::{Error, Result};
use crate::forest::build_forest;
use crate::intervals::{ForestIntervals, IntervalKind, OlsFit, PredictionInterval};
use crate::rng::{derive_seed, stream, StreamRng};

const INNER_STREAM: u64 = 0x1A4E;
const RETRY_STREAM: u64 = 0x2E7;
/// A run aborts once more than this fraction of replicates fail.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// The realized query: features and response. Only oracle or diagnostic
/// methods may look at `response`.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub x0: &'a [f64],
    pub response: f64,
    pub alpha: f64,
}

/// A training set with lazily fitted models.
pub struct Fit<'a> {
    scenario: &'a PreparedScenario,
    data: Dataset,
    forest_seed: u64,
    forest: OnceCell<ForestIntervals>,
    ols: OnceCell<OlsFit>,
}

impl<'a> Fit<'a> {
    pub fn new(scenario: &'a PreparedScenario, data: Dataset, forest_seed: u64) -> Self {
        Fit {
            scenario,
            data,
            forest_seed,
            forest: OnceCell::new(),
            ols: OnceCell::new(),
        }
    }

    pub fn scenario(&self) -> &PreparedScenario {
        self.scenario
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn forest(&self) -> Result<&ForestIntervals> {
        if let Some(f) = self.forest.get() {
            return Ok(f);
        }
        let config = self.scenario.config.forest.clone().with_seed(self.forest_seed);
        let forest = build_forest(&self.data, &config)?;
        let fitted = ForestIntervals::new(forest, &self.data, self.scenario.config.lambda1)?;
        Ok(self.forest.get_or_init(|| fitted))
    }

    pub fn ols(&self) -> Result<&OlsFit> {
        if let Some(f) = self.ols.get() {
            return Ok(f);
        }
        let fitted = OlsFit::fit(&self.data)?;
        Ok(self.ols.get_or_init(|| fitted))
    }
}

/// An interval construction evaluated by the coverage drivers.
pub trait CoverageMethod: Sync {
    fn label(&self) -> String;
    fn interval(&self, fit: &Fit<'_>, query: &Query<'_>) -> Result<PredictionInterval>;
}

impl CoverageMethod for Method {
    fn label(&self) -> String {
        self.to_string()
    }

    fn interval(&self, fit: &Fit<'_>, query: &Query<'_>) -> Result<PredictionInterval> {
        let alpha = query.alpha;
        let oracle = |lower, upper, point, sigma| PredictionInterval {
            lower,
            upper,
            alpha,
            method: IntervalKind::Oracle,
            point,
            sigma,
        };
        match self {
            Method::Interval(IntervalKind::Ols) => fit.ols()?.interval(query.x0, alpha),
            Method::Interval(kind) => fit.forest()?.interval(*kind, fit.data(), query.x0, alpha),
            Method::OracleNormal => {
                let m = fit.scenario().signal(query.x0)?;
                let sd = fit.scenario().sigma2_true.sqrt();
                let half = normal_quantile(1.0 - alpha / 2.0)? * sd;
                Ok(oracle(m - half, m + half, m, Some(sd)))
            }
            Method::OracleQuantile => {
                let m = fit.scenario().signal(query.x0)?;
                let spec = &fit.scenario().residual;
                Ok(oracle(
                    m + spec.quantile(alpha / 2.0)?,
                    m + spec.quantile(1.0 - alpha / 2.0)?,
                    m,
                    None,
                ))
            }
            Method::Unbounded => Ok(oracle(f64::NEG_INFINITY, f64::INFINITY, query.response, None)),
        }
    }
}

/// One evaluated interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub outer: usize,
    pub inner: usize,
    pub lower: f64,
    pub upper: f64,
    pub point: f64,
    pub sigma: Option<f64>,
    pub response: f64,
    pub covered: bool,
}

/// Coverage of one method within one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCoverage {
    pub method: String,
    pub covered: usize,
    pub total: usize,
    /// `covered / total`.
    pub coverage: f64,
    pub mean_length: f64,
    /// Coverage within each outer replicate (a single 0/1 draw for types I, III).
    pub per_outer: Vec<f64>,
    pub records: Option<Vec<ReplicateRecord>>,
}

impl MethodCoverage {
    /// Standard deviation of the per-outer coverages (nested types only).
    pub fn per_outer_sd(&self) -> Option<f64> {
        let k = self.per_outer.len();
        if k < 2 {
            return None;
        }
        let mean = self.per_outer.iter().sum::<f64>() / k as f64;
        let ss: f64 = self.per_outer.iter().map(|c| (c - mean).powi(2)).sum();
        Some((ss / (k - 1) as f64).sqrt())
    }

    /// Empirical quantile (type 7, linear interpolation) of the per-outer coverages.
    pub fn per_outer_quantile(&self, q: f64) -> Option<f64> {
        if self.per_outer.is_empty() || !(0.0..=1.0).contains(&q) {
            return None;
        }
        let mut v = self.per_outer.clone();
        v.sort_by(f64::total_cmp);
        let h = q * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub scenario_id: String,
    pub coverage_type: CoverageType,
    pub seed: u64,
    pub sigma2_true: f64,
    /// Query point held fixed for types III and IV.
    pub x0: Option<Vec<f64>>,
    pub mc_outer: usize,
    pub mc_inner: usize,
    pub failures: usize,
    pub custom: bool,
    pub methods: Vec<MethodCoverage>,
}

struct OuterOutcome {
    /// Per method: (covered flags, lengths, records) over the inner loop.
    per_method: Vec<Vec<ReplicateRecord>>,
}

fn run_outer(
    scenario: &PreparedScenario,
    methods: &[&dyn CoverageMethod],
    outer: usize,
    inner: usize,
    rng: &mut StreamRng,
    inner_seed: u64,
) -> Result<OuterOutcome> {
    let config = &scenario.config;
    let fixed_x0 = config.coverage.fixes_x0();
    let nested = config.coverage.is_nested();

    let data = scenario.generate(rng)?;
    let forest_seed: u64 = rng.random();
    let fit = Fit::new(scenario, data, forest_seed);
    let mut per_method = vec![Vec::with_capacity(inner); methods.len()];
    for j in 0..inner {
        let mut inner_rng;
        let draw_rng: &mut StreamRng = if nested {
            inner_rng = stream(inner_seed, j as u64);
            &mut inner_rng
        } else {
            &mut *rng
        };
        let drawn;
        let x0: &[f64] = if fixed_x0 {
            &scenario.x0
        } else {
            drawn = scenario.copula.sample(draw_rng);
            &drawn
        };
        let response = scenario.signal(x0)? + scenario.residual.sample(draw_rng);
        let query = Query {
            x0,
            response,
            alpha: config.alpha,
        };
        for (k, method) in methods.iter().enumerate() {
            let iv = method.interval(&fit, &query)?;
            per_method[k].push(ReplicateRecord {
                outer,
                inner: j,
                lower: iv.lower,
                upper: iv.upper,
                point: iv.point,
                sigma: iv.sigma,
                response,
                covered: iv.contains(response),
            });
        }
    }
    Ok(OuterOutcome { per_method })
}

/// Runs every replicate of a prepared scenario against `methods`.
///
/// Outer replicate `o` draws its training set (and, for types I and III, the
/// query and the noise) from stream `o` of the scenario seed; nested inner
/// draws come from their own per-outer streams. Replicates whose forest has no
/// out-of-bag coverage are retried once on a fresh stream; remaining failures
/// are counted and abort the run above [`MAX_FAILURE_RATE`].
pub fn run_prepared(scenario: &PreparedScenario, methods: &[&dyn CoverageMethod]) -> Result<CoverageReport> {
    let config = &scenario.config;
    let (outer, inner) = config.replicates();
    let seed = scenario.seed;
    let outcomes: Vec<Result<OuterOutcome>> = (0..outer)
        .into_par_iter()
        .map(|o| {
            let attempt = |stream_seed: u64| {
                let mut rng = stream(stream_seed, o as u64);
                let inner_seed = derive_seed(stream_seed, INNER_STREAM ^ ((o as u64) << 16));
                run_outer(scenario, methods, o, inner, &mut rng, inner_seed)
            };
            match attempt(seed) {
                Err(Error::NoOobCoverage) => attempt(derive_seed(seed, RETRY_STREAM)),
                other => other,
            }
        })
        .collect();

    let failures = outcomes.iter().filter(|r| r.is_err()).count();
    if failures as f64 > MAX_FAILURE_RATE * outer as f64 {
        if let Some(Err(e)) = outcomes.iter().find(|r| r.is_err()) {
            log::error!(
                "scenario {}: {failures} of {outer} replicates failed; first error: {e}",
                config.id
            );
        }
        return Err(Error::TooManyFailures {
            failures,
            attempted: outer,
        });
    }
    let ok: Vec<OuterOutcome> = outcomes.into_iter().filter_map(|r| r.ok()).collect();

    let methods = methods
        .iter()
        .enumerate()
        .map(|(k, method)| {
            let mut covered = 0;
            let mut total = 0;
            let mut length_sum = 0.0;
            let mut per_outer = Vec::with_capacity(ok.len());
            let mut records = Vec::new();
            for outcome in &ok {
                let recs = &outcome.per_method[k];
                let c = recs.iter().filter(|r| r.covered).count();
                covered += c;
                total += recs.len();
                length_sum += recs.iter().map(|r| r.upper - r.lower).sum::<f64>();
                per_outer.push(c as f64 / recs.len() as f64);
                if config.keep_records {
                    records.extend_from_slice(recs);
                }
            }
            MethodCoverage {
                method: method.label(),
                covered,
                total,
                coverage: covered as f64 / total as f64,
                mean_length: length_sum / total as f64,
                per_outer,
                records: config.keep_records.then_some(records),
            }
        })
        .collect();

    Ok(CoverageReport {
        scenario_id: config.id.clone(),
        coverage_type: config.coverage,
        seed,
        sigma2_true: scenario.sigma2_true,
        x0: config.coverage.fixes_x0().then(|| scenario.x0.clone()),
        mc_outer: outer,
        mc_inner: inner,
        failures,
        custom: config.is_custom(),
        methods,
    })
}

fn with_type(scenario: &ScenarioConfig, coverage: CoverageType, x0: Option<&[f64]>) -> ScenarioConfig {
    let mut c = scenario.clone();
    c.coverage = coverage;
    if let Some(x0) = x0 {
        c.x0 = Some(x0.to_vec());
    }
    c
}

/// Runs `scenario` as configured, using its own seed (0 when unset).
pub fn run_scenario(scenario: &ScenarioConfig) -> Result<CoverageReport> {
    run_scenario_seeded(scenario, scenario.seed.unwrap_or(0))
}

pub fn run_scenario_seeded(scenario: &ScenarioConfig, seed: u64) -> Result<CoverageReport> {
    let prepared = PreparedScenario::new(scenario, seed)?;
    let methods: Vec<&dyn CoverageMethod> = scenario.methods.iter().map(|m| m as &dyn CoverageMethod).collect();
    run_prepared(&prepared, &methods)
}

/// Fresh training set, query point and noise in every replicate.
pub fn coverage_type1(scenario: &ScenarioConfig) -> Result<CoverageReport> {
    run_scenario(&with_type(scenario, CoverageType::I, None))
}

/// Training set fixed per outer replicate; query and noise redrawn inside.
pub fn coverage_type2(scenario: &ScenarioConfig) -> Result<CoverageReport> {
    run_scenario(&with_type(scenario, CoverageType::II, None))
}

/// Query point fixed at `x0`; training set and noise redrawn.
pub fn coverage_type3(scenario: &ScenarioConfig, x0: &[f64]) -> Result<CoverageReport> {
    run_scenario(&with_type(scenario, CoverageType::III, Some(x0)))
}

/// Training set fixed per outer replicate and query fixed at `x0`; only the
/// noise is redrawn inside.
pub fn coverage_type4(scenario: &ScenarioConfig, x0: &[f64]) -> Result<CoverageReport> {
    run_scenario(&with_type(scenario, CoverageType::IV, Some(x0)))
}

/// Result of a grid run: reports in input order plus per-scenario failures.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub reports: Vec<CoverageReport>,
    pub failures: Vec<(String, Error)>,
}

/// Seed of scenario `index` in a grid keyed by `master_seed`, unless the
/// scenario carries its own.
pub fn scenario_seed(scenario: &ScenarioConfig, master_seed: u64, index: usize) -> u64 {
    scenario.seed.unwrap_or_else(|| derive_seed(master_seed, index as u64))
}

pub fn run_grid(scenarios: &[ScenarioConfig], master_seed: u64) -> GridOutcome {
    let results: Vec<Result<CoverageReport>> = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, s)| run_scenario_seeded(s, scenario_seed(s, master_seed, i)))
        .collect();
    let mut outcome = GridOutcome {
        reports: Vec::new(),
        failures: Vec::new(),
    };
    for (s, r) in scenarios.iter().zip(results) {
        match r {
            Ok(report) => outcome.reports.push(report),
            Err(e) => outcome.failures.push((s.id.clone(), e)),
        }
    }
    outcome
}
