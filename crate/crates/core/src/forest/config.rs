use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleMode {
    /// `a_n` draws with replacement.
    Bootstrap,
    /// `a_n` distinct rows without replacement.
    Subsample,
}

impl fmt::Display for ResampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResampleMode::Bootstrap => "bootstrap",
            ResampleMode::Subsample => "subsample",
        })
    }
}

impl FromStr for ResampleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bootstrap" => Ok(ResampleMode::Bootstrap),
            "subsample" => Ok(ResampleMode::Subsample),
            other => Err(Error::InvalidArgument(format!(
                "unknown resample mode {other:?} (expected bootstrap or subsample)"
            ))),
        }
    }
}

/// Forest hyperparameters.
///
/// `None` for `mtry` and `resample_count` means "use the default for the
/// training data": `max(1, ⌊p/3⌋)` candidate features and `a_n = n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub num_trees: usize,
    pub mtry: Option<usize>,
    pub resample_count: Option<usize>,
    pub resample: ResampleMode,
    pub min_node_size: usize,
    /// Leaf budget per tree; `None` grows trees until the node-size rule stops them.
    pub max_leaves: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            num_trees: 500,
            mtry: None,
            resample_count: None,
            resample: ResampleMode::Bootstrap,
            min_node_size: 5,
            max_leaves: None,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn with_trees(mut self, num_trees: usize) -> Self {
        self.num_trees = num_trees;
        self
    }

    pub fn with_mtry(mut self, mtry: usize) -> Self {
        self.mtry = Some(mtry);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_min_node_size(mut self, min_node_size: usize) -> Self {
        self.min_node_size = min_node_size;
        self
    }

    pub fn with_resample(mut self, mode: ResampleMode, count: Option<usize>) -> Self {
        self.resample = mode;
        self.resample_count = count;
        self
    }

    pub fn with_max_leaves(mut self, max_leaves: Option<usize>) -> Self {
        self.max_leaves = max_leaves;
        self
    }

    /// Fills defaults for an `n × p` training set and validates the result.
    pub fn resolve(&self, n: usize, p: usize) -> Result<ForestConfig> {
        let mut c = self.clone();
        let mtry = *c.mtry.get_or_insert((p / 3).max(1));
        let a_n = *c.resample_count.get_or_insert(n);
        if c.num_trees == 0 {
            return Err(Error::InvalidConfig("num_trees must be at least 1".into()));
        }
        if mtry == 0 || mtry > p {
            return Err(Error::InvalidConfig(format!("mtry = {mtry} must lie in [1, {p}]")));
        }
        if a_n == 0 || a_n > n {
            return Err(Error::InvalidConfig(format!(
                "resample_count = {a_n} must lie in [1, {n}]"
            )));
        }
        if c.min_node_size == 0 {
            return Err(Error::InvalidConfig("min_node_size must be at least 1".into()));
        }
        if c.max_leaves == Some(0) {
            return Err(Error::InvalidConfig("max_leaves must be at least 1".into()));
        }
        Ok(c)
    }

    pub(crate) fn mtry_or_default(&self, p: usize) -> usize {
        self.mtry.unwrap_or((p / 3).max(1))
    }
}

/// Per-observation in-bag multiplicity of one tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BagMask(pub Vec<u32>);

impl BagMask {
    /// Draws a resample of `a_n` out of `n` rows.
    pub fn draw<R: Rng + ?Sized>(n: usize, a_n: usize, mode: ResampleMode, rng: &mut R) -> BagMask {
        let mut counts = vec![0u32; n];
        match mode {
            ResampleMode::Bootstrap => {
                for _ in 0..a_n {
                    counts[rng.random_range(0..n)] += 1;
                }
            }
            ResampleMode::Subsample => {
                for i in index::sample(rng, n, a_n) {
                    counts[i] = 1;
                }
            }
        }
        BagMask(counts)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn multiplicity(&self, i: usize) -> u32 {
        self.0[i]
    }

    pub fn is_out_of_bag(&self, i: usize) -> bool {
        self.0[i] == 0
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    /// In-bag row indices, repeated by multiplicity, in ascending order.
    pub fn expanded_rows(&self) -> Vec<u32> {
        let mut rows = Vec::with_capacity(self.total());
        for (i, &c) in self.0.iter().enumerate() {
            rows.extend(std::iter::repeat_n(i as u32, c as usize));
        }
        rows
    }
}

/// Probability that a given observation is left out of one tree's resample.
pub fn oob_exclusion_probability(n: usize, a_n: usize, mode: ResampleMode) -> Result<f64> {
    if n == 0 || a_n == 0 || a_n > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= a_n <= n, got n = {n}, a_n = {a_n}"
        )));
    }
    Ok(match mode {
        ResampleMode::Subsample => 1.0 - a_n as f64 / n as f64,
        ResampleMode::Bootstrap => (1.0 - 1.0 / n as f64).powi(n as i32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn resolve_fills_defaults() {
        let c = ForestConfig::default().resolve(50, 10).unwrap();
        assert_eq!(c.mtry, Some(3));
        assert_eq!(c.resample_count, Some(50));
        assert_eq!(ForestConfig::default().resolve(50, 2).unwrap().mtry, Some(1));
    }

    #[test]
    fn resolve_rejects_out_of_range() {
        assert!(ForestConfig::default().with_mtry(11).resolve(50, 10).is_err());
        assert!(ForestConfig::default().with_mtry(0).resolve(50, 10).is_err());
        assert!(ForestConfig::default().with_trees(0).resolve(50, 10).is_err());
        assert!(ForestConfig::default()
            .with_resample(ResampleMode::Subsample, Some(51))
            .resolve(50, 10)
            .is_err());
        assert!(ForestConfig::default().with_min_node_size(0).resolve(50, 10).is_err());
    }

    #[test]
    fn bag_totals() {
        let mut rng = stream(1, 0);
        let boot = BagMask::draw(30, 30, ResampleMode::Bootstrap, &mut rng);
        assert_eq!(boot.total(), 30);
        let sub = BagMask::draw(30, 19, ResampleMode::Subsample, &mut rng);
        assert_eq!(sub.total(), 19);
        assert!(sub.0.iter().all(|&c| c <= 1));
        assert_eq!(sub.expanded_rows().len(), 19);
    }

    #[test]
    fn exclusion_probabilities() {
        assert_eq!(oob_exclusion_probability(2, 2, ResampleMode::Bootstrap).unwrap(), 0.25);
        assert_eq!(oob_exclusion_probability(10, 10, ResampleMode::Subsample).unwrap(), 0.0);
        let p = oob_exclusion_probability(1000, 1000, ResampleMode::Bootstrap).unwrap();
        assert!((p - 0.367_695_424_770_963_7).abs() < 1e-12);
        assert!(oob_exclusion_probability(10, 11, ResampleMode::Subsample).is_err());
        assert!(oob_exclusion_probability(0, 0, ResampleMode::Bootstrap).is_err());
    }
}
