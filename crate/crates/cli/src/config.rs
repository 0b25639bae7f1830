//! TOML run documents.
//!
//! ```toml
//! seed = 7
//! threads = 4
//! output = "results.csv"
//!
//! [[scenario]]
//! id = "m1-s5"
//! regression = "m1"
//! covariance = "sigma5"
//! residual = "normal"
//! sn = 1
//! coverage = "I"
//! mc = 300
//! methods = ["prf", "np-eq", "qrf"]
//!
//! [scenario.forest]
//! trees = 300
//! ```
//!
//! Omitted scenario fields take the library defaults. Enum values are matched
//! case-insensitively and unknown keys are rejected.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use oob_bands::sim::{CoverageType, Method, ScenarioConfig};
use oob_bands::ForestConfig;
use serde::Deserialize;

use crate::app::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunDocument {
    seed: Option<u64>,
    threads: Option<usize>,
    output: Option<PathBuf>,
    replicates: Option<PathBuf>,
    #[serde(default, rename = "scenario")]
    scenarios: Vec<ScenarioDocument>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDocument {
    id: Option<String>,
    regression: Option<String>,
    covariance: Option<String>,
    residual: Option<String>,
    sn: Option<f64>,
    n: Option<usize>,
    p: Option<usize>,
    alpha: Option<f64>,
    lambda1: Option<f64>,
    coverage: Option<String>,
    mc: Option<usize>,
    outer: Option<usize>,
    inner: Option<usize>,
    seed: Option<u64>,
    methods: Option<Vec<String>>,
    x0: Option<Vec<f64>>,
    keep_records: Option<bool>,
    forest: Option<ForestDocument>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestDocument {
    trees: Option<usize>,
    mtry: Option<usize>,
    min_node_size: Option<usize>,
    resample: Option<String>,
    resample_count: Option<usize>,
    max_leaves: Option<usize>,
}

/// A parsed and validated run document.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    pub replicates: Option<PathBuf>,
    pub scenarios: Vec<ScenarioConfig>,
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    parse_config_str(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_enum<T: FromStr>(value: Option<String>, key: &str, id: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| CliError::Config(format!("scenario {id}: key `{key}`: {e}")))
        })
        .transpose()
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let doc: RunDocument = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if doc.threads == Some(0) {
        return Err(CliError::Config("key `threads`: must be at least 1".into()));
    }
    let mut seen = HashSet::new();
    let mut scenarios = Vec::with_capacity(doc.scenarios.len());
    for (i, s) in doc.scenarios.into_iter().enumerate() {
        let id = s.id.unwrap_or_else(|| format!("scenario-{}", i + 1));
        if !seen.insert(id.clone()) {
            return Err(CliError::Config(format!("duplicate scenario id `{id}`")));
        }
        let mut c = ScenarioConfig {
            id: id.clone(),
            ..ScenarioConfig::default()
        };
        if let Some(v) = parse_enum(s.regression, "regression", &id)? {
            c.regression = v;
        }
        if let Some(v) = parse_enum(s.covariance, "covariance", &id)? {
            c.covariance = v;
        }
        if let Some(v) = parse_enum(s.residual, "residual", &id)? {
            c.residual = v;
        }
        if let Some(v) = parse_enum::<CoverageType>(s.coverage, "coverage", &id)? {
            c.coverage = v;
        }
        if let Some(methods) = s.methods {
            c.methods = methods
                .into_iter()
                .map(|m| parse_enum::<Method>(Some(m), "methods", &id).map(Option::unwrap))
                .collect::<Result<_, _>>()?;
        }
        c.sn = s.sn.unwrap_or(c.sn);
        c.n = s.n.unwrap_or(c.n);
        c.p = s.p.unwrap_or(c.p);
        c.alpha = s.alpha.unwrap_or(c.alpha);
        c.lambda1 = s.lambda1.unwrap_or(c.lambda1);
        c.mc = s.mc.unwrap_or(c.mc);
        c.outer = s.outer.unwrap_or(c.outer);
        c.inner = s.inner.unwrap_or(c.inner);
        c.seed = s.seed;
        c.x0 = s.x0;
        c.keep_records = s.keep_records.unwrap_or(false);
        if let Some(f) = s.forest {
            c.forest = forest_config(f, &id)?;
        }
        c.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if c.is_custom() {
            log::info!("scenario {id} lies outside the standard grid and is flagged custom");
        }
        scenarios.push(c);
    }
    Ok(RunConfig {
        seed: doc.seed,
        threads: doc.threads,
        output: doc.output,
        replicates: doc.replicates,
        scenarios,
    })
}

fn forest_config(f: ForestDocument, id: &str) -> Result<ForestConfig, CliError> {
    let mut c = ForestConfig::default();
    c.num_trees = f.trees.unwrap_or(c.num_trees);
    c.mtry = f.mtry;
    c.min_node_size = f.min_node_size.unwrap_or(c.min_node_size);
    if let Some(mode) = parse_enum(f.resample, "forest.resample", id)? {
        c.resample = mode;
    }
    c.resample_count = f.resample_count;
    c.max_leaves = f.max_leaves;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use oob_bands::dist::{CovarianceKind, RegressionFn, ResidualFamily};
    use oob_bands::ResampleMode;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = parse_config_str("[[scenario]]\n").unwrap();
        assert_eq!(cfg.scenarios.len(), 1);
        let s = &cfg.scenarios[0];
        let expected = ScenarioConfig {
            id: "scenario-1".into(),
            ..ScenarioConfig::default()
        };
        assert_eq!(s, &expected);
        assert!(!s.is_custom());
        assert_eq!(cfg.seed, None);
    }

    #[test]
    fn enums_are_case_insensitive() {
        let cfg = parse_config_str(
            r#"
            seed = 3
            [[scenario]]
            regression = "M3"
            covariance = "Sigma4"
            residual = "LogNormal"
            coverage = "iv"
            methods = ["PRF", "Np-Eq", "oracle-normal"]
            [scenario.forest]
            trees = 50
            resample = "SubSample"
            resample_count = 300
            "#,
        )
        .unwrap();
        let s = &cfg.scenarios[0];
        assert_eq!(s.regression, RegressionFn::Trigonometric);
        assert_eq!(s.covariance, CovarianceKind::Toeplitz);
        assert_eq!(s.residual, ResidualFamily::LogNormal);
        assert_eq!(s.coverage, CoverageType::IV);
        assert_eq!(s.methods.len(), 3);
        assert_eq!(s.forest.num_trees, 50);
        assert_eq!(s.forest.resample, ResampleMode::Subsample);
        assert_eq!(cfg.seed, Some(3));
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config_str("[[scenario]]\n[scenario.forest]\nmtyr = 3\n").unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("mtyr"), "{err}");
        let err = parse_config_str("[[scenario]]\nsnr = 1\n").unwrap_err();
        assert!(err.to_string().contains("snr"), "{err}");
        let err = parse_config_str("seeds = 1\n").unwrap_err();
        assert!(err.to_string().contains("seeds"), "{err}");
    }

    #[test]
    fn off_grid_values_are_flagged_custom() {
        let cfg = parse_config_str("[[scenario]]\nsn = 2\n").unwrap();
        assert!(cfg.scenarios[0].is_custom());
        assert_eq!(cfg.scenarios[0].sn, 2.0);
    }

    #[test]
    fn invalid_values_are_rejected() {
        for doc in [
            "[[scenario]]\nalpha = 1.5\n",
            "[[scenario]]\nresidual = \"cauchy\"\n",
            "[[scenario]]\nsn = -1\n",
            "[[scenario]]\nid = \"a\"\n[[scenario]]\nid = \"a\"\n",
            "threads = 0\n",
            "[[scenario]]\nn = \"many\"\n",
        ] {
            assert!(matches!(parse_config_str(doc), Err(CliError::Config(_))), "{doc}");
        }
    }
}
