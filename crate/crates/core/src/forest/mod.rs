//! Bagged regression forests with out-of-bag bookkeeping.

mod config;
mod tree;

pub use config::{oob_exclusion_probability, BagMask, ForestConfig, ResampleMode};
pub use tree::{build_tree, predict_tree, Node, Tree};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream;

/// Version written to and required from serialized models.
pub const FORMAT_VERSION: u32 = 1;

/// A trained forest. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    config: ForestConfig,
    trees: Vec<Tree>,
    bag_masks: Vec<BagMask>,
    n_samples: usize,
    n_features: usize,
}

/// Trains `config.num_trees` trees. Tree `t` draws its resample and its
/// feature subsets from stream `t` of the generator keyed by `config.seed`,
/// so the result does not depend on how the work is scheduled.
pub fn build_forest(data: &Dataset, config: &ForestConfig) -> Result<Forest> {
    let (n, p) = (data.n_samples(), data.n_features());
    if n < 2 {
        return Err(Error::InvalidConfig(format!("need at least two observations, got {n}")));
    }
    let config = config.resolve(n, p)?;
    let a_n = config.resample_count.expect("resolved");
    let built: Vec<(Tree, BagMask)> = (0..config.num_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(config.seed, t as u64);
            let bag = BagMask::draw(n, a_n, config.resample, &mut rng);
            let tree = build_tree(data, &config, &bag, &mut rng)?;
            Ok((tree, bag))
        })
        .collect::<Result<_>>()?;
    let (trees, bag_masks) = built.into_iter().unzip();
    Ok(Forest {
        config,
        trees,
        bag_masks,
        n_samples: n,
        n_features: p,
    })
}

/// Out-of-bag predictions and residuals for the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct OobResiduals {
    /// Mean prediction of the trees that left row `i` out; `None` when `Z_i = 0`.
    pub predictions: Vec<Option<f64>>,
    /// `y_i - predictions[i]`.
    pub residuals: Vec<Option<f64>>,
    /// `Z_i(M)`: number of trees that left row `i` out.
    pub oob_counts: Vec<u32>,
    pub n_valid: usize,
    pub num_trees: usize,
}

impl OobResiduals {
    /// Builds the record from per-row predictions; exposed for callers that
    /// already hold OOB predictions.
    pub fn from_predictions(
        y: &[f64],
        predictions: Vec<Option<f64>>,
        oob_counts: Vec<u32>,
        num_trees: usize,
    ) -> Result<Self> {
        let residuals: Vec<Option<f64>> = y.iter().zip(&predictions).map(|(yi, pi)| pi.map(|p| yi - p)).collect();
        let n_valid = residuals.iter().filter(|r| r.is_some()).count();
        if n_valid == 0 {
            return Err(Error::NoOobCoverage);
        }
        Ok(OobResiduals {
            predictions,
            residuals,
            oob_counts,
            n_valid,
            num_trees,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.residuals.len()
    }

    /// Rows with no out-of-bag tree; they are left out of every OOB statistic.
    pub fn n_excluded(&self) -> usize {
        self.n_samples() - self.n_valid
    }

    pub fn valid_residuals(&self) -> Vec<f64> {
        self.residuals.iter().flatten().copied().collect()
    }

    pub fn valid_predictions(&self) -> Vec<f64> {
        self.predictions.iter().flatten().copied().collect()
    }
}

impl Forest {
    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn bag_masks(&self) -> &[BagMask] {
        &self.bag_masks
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.n_features {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            })
        }
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.n_samples() != self.n_samples {
            return Err(Error::DimensionMismatch {
                expected: self.n_samples,
                got: data.n_samples(),
            });
        }
        if data.n_features() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: data.n_features(),
            });
        }
        Ok(())
    }

    /// Mean of the tree predictions, summed in tree order.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let sum: f64 = self.trees.iter().map(|t| t.predict_unchecked(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    /// OOB prediction for training row `i` and its tree count `Z_i`.
    pub fn predict_oob(&self, data: &Dataset, i: usize) -> Result<(Option<f64>, u32)> {
        self.check_data(data)?;
        if i >= self.n_samples {
            return Err(Error::InvalidArgument(format!(
                "row {i} out of range for {} observations",
                self.n_samples
            )));
        }
        Ok(self.oob_row(data.row(i), i))
    }

    fn oob_row(&self, x: &[f64], i: usize) -> (Option<f64>, u32) {
        let mut sum = 0.0;
        let mut count = 0u32;
        for (tree, bag) in self.trees.iter().zip(&self.bag_masks) {
            if bag.is_out_of_bag(i) {
                sum += tree.predict_unchecked(x);
                count += 1;
            }
        }
        ((count > 0).then(|| sum / count as f64), count)
    }

    /// OOB residuals for every training row. Fails only if no row has an
    /// out-of-bag tree.
    pub fn oob_residuals(&self, data: &Dataset) -> Result<OobResiduals> {
        self.check_data(data)?;
        let (predictions, counts): (Vec<Option<f64>>, Vec<u32>) = (0..self.n_samples)
            .into_par_iter()
            .map(|i| self.oob_row(data.row(i), i))
            .unzip();
        let res = OobResiduals::from_predictions(data.y(), predictions, counts, self.num_trees())?;
        if res.n_excluded() > 0 {
            log::debug!("{} rows have no out-of-bag tree and are excluded", res.n_excluded());
        }
        Ok(res)
    }

    /// Forest weights of the training rows at `x`: each tree spreads mass
    /// `1/M` uniformly over the distinct in-bag rows of the leaf containing `x`.
    pub fn leaf_weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut w = vec![0.0; self.n_samples];
        let m = self.trees.len() as f64;
        for tree in &self.trees {
            let samples = tree.leaf_samples(tree.leaf_index(x));
            let share = 1.0 / (samples.len() as f64 * m);
            for &k in samples {
                w[k as usize] += share;
            }
        }
        Ok(w)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ForestDocument {
            format_version: FORMAT_VERSION,
            n_samples: self.n_samples,
            n_features: self.n_features,
            config: self.config.clone(),
            trees: self.trees.clone(),
            bag_masks: self.bag_masks.clone(),
        };
        serde_json::to_string(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Forest> {
        let doc: ForestDocument = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                doc.format_version
            )));
        }
        if doc.trees.is_empty() || doc.trees.len() != doc.bag_masks.len() {
            return Err(Error::Format(
                "trees and bag_masks must be non-empty and aligned".into(),
            ));
        }
        for (tree, bag) in doc.trees.iter().zip(&doc.bag_masks) {
            if bag.len() != doc.n_samples {
                return Err(Error::Format("bag mask length differs from n_samples".into()));
            }
            tree.validate(doc.n_samples, doc.n_features)?;
        }
        Ok(Forest {
            config: doc.config,
            trees: doc.trees,
            bag_masks: doc.bag_masks,
            n_samples: doc.n_samples,
            n_features: doc.n_features,
        })
    }
}

/// On-disk model layout.
///
/// ```json
/// { "format_version": 1, "n_samples": n, "n_features": p, "config": {...},
///   "trees": [{"nodes": [
///       {"kind": "split", "feature": j, "threshold": t, "left": a, "right": b},
///       {"kind": "leaf", "value": v, "samples": [k, ...], "count": c}, ...]}],
///   "bag_masks": [[m_0, ..., m_{n-1}], ...] }
/// ```
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestDocument {
    format_version: u32,
    n_samples: usize,
    n_features: usize,
    config: ForestConfig,
    trees: Vec<Tree>,
    bag_masks: Vec<BagMask>,
}

pub fn predict_forest(forest: &Forest, x: &[f64]) -> Result<f64> {
    forest.predict(x)
}

pub fn predict_oob(forest: &Forest, data: &Dataset, i: usize) -> Result<(Option<f64>, u32)> {
    forest.predict_oob(data, i)
}

pub fn oob_residuals(forest: &Forest, data: &Dataset) -> Result<OobResiduals> {
    forest.oob_residuals(data)
}

pub fn leaf_weights(forest: &Forest, x: &[f64]) -> Result<Vec<f64>> {
    forest.leaf_weights(x)
}
