//! CART regression trees grown by variance reduction.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{BagMask, ForestConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// `value` is the mean in-bag response (repeated draws counted by
    /// multiplicity); `samples` lists the distinct in-bag rows routed here
    /// and `count` the number of draws.
    Leaf { value: f64, samples: Vec<u32>, count: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Index of the leaf whose cell contains `x`. No dimension check.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return at,
            }
        }
    }

    /// Leaf mean for `x`. No dimension check; see [`predict_tree`].
    pub fn predict_unchecked(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn leaf_samples(&self, leaf: usize) -> &[u32] {
        match &self.nodes[leaf] {
            Node::Leaf { samples, .. } => samples,
            Node::Split { .. } => &[],
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Structural checks used when loading a model.
    pub(crate) fn validate(&self, n: usize, p: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Format("tree without nodes".into()));
        }
        for node in &self.nodes {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= p
                        || !threshold.is_finite()
                        || *left >= self.nodes.len()
                        || *right >= self.nodes.len()
                    {
                        return Err(Error::Format("split node out of range".into()));
                    }
                }
                Node::Leaf { samples, value, .. } => {
                    if samples.is_empty() || samples.iter().any(|&s| s as usize >= n) || !value.is_finite() {
                        return Err(Error::Format("leaf node out of range".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn predict_tree(tree: &Tree, x: &[f64], n_features: usize) -> Result<f64> {
    if x.len() != n_features {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            got: x.len(),
        });
    }
    Ok(tree.predict_unchecked(x))
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    reduction: f64,
}

struct Pending {
    node: usize,
    rows: Vec<u32>,
    split: Split,
    order: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // Max-heap on reduction; earlier-created nodes first on ties.
    fn cmp(&self, other: &Self) -> Ordering {
        self.split
            .reduction
            .total_cmp(&other.split.reduction)
            .then_with(|| other.order.cmp(&self.order))
    }
}

struct Builder<'a, R: Rng + ?Sized> {
    data: &'a Dataset,
    mtry: usize,
    min_node_size: usize,
    rng: &'a mut R,
    scratch: Vec<(f64, f64)>,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn leaf(&self, rows: &[u32]) -> Node {
        let y = self.data.y();
        let sum: f64 = rows.iter().map(|&r| y[r as usize]).sum();
        let mut samples = rows.to_vec();
        samples.dedup();
        Node::Leaf {
            value: sum / rows.len() as f64,
            samples,
            count: rows.len() as u32,
        }
    }

    fn best_split(&mut self, rows: &[u32]) -> Option<Split> {
        let y = self.data.y();
        if rows.len() < 2 * self.min_node_size {
            return None;
        }
        let first = y[rows[0] as usize];
        if rows.iter().all(|&r| y[r as usize] == first) {
            return None;
        }
        let p = self.data.n_features();
        let mut features = index::sample(self.rng, p, self.mtry).into_vec();
        features.sort_unstable();

        let total = rows.len() as f64;
        let sum: f64 = rows.iter().map(|&r| y[r as usize]).sum();
        let mut best: Option<Split> = None;
        for &feature in &features {
            self.scratch.clear();
            self.scratch.extend(
                rows.iter()
                    .map(|&r| (self.data.value(r as usize, feature), y[r as usize])),
            );
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for k in 0..self.scratch.len() - 1 {
                left_sum += self.scratch[k].1;
                let (lo, hi) = (self.scratch[k].0, self.scratch[k + 1].0);
                if lo == hi {
                    continue;
                }
                let n_left = (k + 1) as f64;
                let n_right = total - n_left;
                let diff = left_sum / n_left - (sum - left_sum) / n_right;
                let reduction = n_left * n_right / total * diff * diff;
                if reduction > 0.0 && best.is_none_or(|b| reduction > b.reduction) {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(Split {
                        feature,
                        threshold,
                        reduction,
                    });
                }
            }
        }
        best
    }
}

/// Grows one tree on the in-bag rows of `bag`.
///
/// Every node draws `mtry` candidate features from `rng`; the split maximizing
/// the weighted variance reduction over all midpoint thresholds wins, ties going
/// to the smaller feature index and then the smaller threshold. With a leaf
/// budget the node with the largest available reduction is expanded first.
pub fn build_tree<R: Rng + ?Sized>(data: &Dataset, config: &ForestConfig, bag: &BagMask, rng: &mut R) -> Result<Tree> {
    if bag.len() != data.n_samples() {
        return Err(Error::DimensionMismatch {
            expected: data.n_samples(),
            got: bag.len(),
        });
    }
    let rows = bag.expanded_rows();
    if rows.is_empty() {
        return Err(Error::EmptyBag);
    }
    let p = data.n_features();
    let mtry = config.mtry_or_default(p);
    if mtry == 0 || mtry > p {
        return Err(Error::InvalidConfig(format!("mtry = {mtry} must lie in [1, {p}]")));
    }
    let mut builder = Builder {
        data,
        mtry,
        min_node_size: config.min_node_size.max(1),
        rng,
        scratch: Vec::with_capacity(rows.len()),
    };
    let max_leaves = config.max_leaves.unwrap_or(usize::MAX);

    let mut nodes = vec![builder.leaf(&rows)];
    let mut heap = BinaryHeap::new();
    let mut order = 0;
    if let Some(split) = builder.best_split(&rows) {
        heap.push(Pending {
            node: 0,
            rows,
            split,
            order,
        });
    }
    let mut leaves = 1;
    while leaves < max_leaves {
        let Some(Pending { node, rows, split, .. }) = heap.pop() else {
            break;
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&r| data.value(r as usize, split.feature) <= split.threshold);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(builder.leaf(&left_rows));
        nodes.push(builder.leaf(&right_rows));
        nodes[node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        leaves += 1;
        for (child, child_rows) in [(left, left_rows), (right, right_rows)] {
            if let Some(split) = builder.best_split(&child_rows) {
                order += 1;
                heap.push(Pending {
                    node: child,
                    rows: child_rows,
                    split,
                    order,
                });
            }
        }
    }
    Ok(Tree { nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::config::ResampleMode;
    use crate::rng::stream;

    fn all_in(n: usize) -> BagMask {
        BagMask(vec![1; n])
    }

    fn cfg() -> ForestConfig {
        ForestConfig::default().with_min_node_size(1).with_mtry(1)
    }

    #[test]
    fn two_points_split_at_midpoint() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
        let t = build_tree(&d, &cfg(), &all_in(2), &mut stream(0, 0)).unwrap();
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (0, 0.5)),
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(predict_tree(&t, &[0.4], 1).unwrap(), 0.0);
        assert_eq!(predict_tree(&t, &[0.6], 1).unwrap(), 1.0);
        // Ties route left.
        assert_eq!(predict_tree(&t, &[0.5], 1).unwrap(), 0.0);
        assert!(predict_tree(&t, &[0.5, 1.0], 1).is_err());
    }

    #[test]
    fn constant_response_gives_single_leaf() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], vec![7.0; 3]).unwrap();
        let t = build_tree(&d, &cfg(), &all_in(3), &mut stream(0, 0)).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(predict_tree(&t, &[10.0], 1).unwrap(), 7.0);
    }

    #[test]
    fn single_in_bag_row_gives_single_leaf() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![3.0, 9.0]).unwrap();
        let t = build_tree(&d, &cfg(), &BagMask(vec![1, 0]), &mut stream(0, 0)).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_unchecked(&[1.0]), 3.0);
    }

    #[test]
    fn empty_bag_is_an_error() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![3.0, 9.0]).unwrap();
        let err = build_tree(&d, &cfg(), &BagMask(vec![0, 0]), &mut stream(0, 0)).unwrap_err();
        assert_eq!(err, Error::EmptyBag);
        assert_eq!(err.to_string(), "empty bag");
    }

    #[test]
    fn bootstrap_leaf_means_weight_multiplicity() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![1.0, 4.0]).unwrap();
        let c = cfg().with_min_node_size(5);
        let t = build_tree(&d, &c, &BagMask(vec![2, 1]), &mut stream(0, 0)).unwrap();
        assert_eq!(
            t.nodes,
            vec![Node::Leaf {
                value: 2.0,
                samples: vec![0, 1],
                count: 3
            }]
        );
    }

    #[test]
    fn tie_prefers_smaller_feature_then_threshold() {
        // Both features induce the same partition.
        let rows = [vec![0.0, 0.0], vec![1.0, 5.0], vec![2.0, 6.0]];
        let d = Dataset::from_rows(&rows, vec![0.0, 10.0, 10.0]).unwrap();
        let c = cfg().with_mtry(2);
        let t = build_tree(&d, &c, &all_in(3), &mut stream(0, 0)).unwrap();
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (0, 0.5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn leaf_budget_is_respected_and_best_first() {
        let n = 64;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        // A large step at 32 and small wiggles elsewhere.
        let y: Vec<f64> = (0..n)
            .map(|i| if i < 32 { 0.0 } else { 100.0 } + (i % 4) as f64)
            .collect();
        let d = Dataset::from_rows(&rows, y).unwrap();
        let c = cfg().with_max_leaves(Some(2));
        let t = build_tree(&d, &c, &all_in(n), &mut stream(0, 0)).unwrap();
        assert_eq!(t.n_leaves(), 2);
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 31.5),
            other => panic!("{other:?}"),
        }
        for budget in [1, 3, 7, 20] {
            let t = build_tree(&d, &cfg().with_max_leaves(Some(budget)), &all_in(n), &mut stream(0, 0)).unwrap();
            assert!(t.n_leaves() <= budget);
        }
    }

    #[test]
    fn node_size_rule_and_leaf_invariants() {
        let mut rng = stream(4, 0);
        let n = 200;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random(), rng.random()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * 3.0 + rng.random::<f64>()).collect();
        let d = Dataset::from_rows(&rows, y.clone()).unwrap();
        let c = ForestConfig::default().with_mtry(2).with_min_node_size(5);
        let bag = BagMask::draw(n, n, ResampleMode::Bootstrap, &mut rng);
        let t = build_tree(&d, &c, &bag, &mut rng).unwrap();
        let mut seen = vec![0u32; n];
        for node in &t.nodes {
            if let Node::Leaf { value, samples, count } = node {
                let draws: u32 = samples.iter().map(|&s| bag.multiplicity(s as usize)).sum();
                assert_eq!(draws, *count);
                let weighted: f64 = samples
                    .iter()
                    .map(|&s| y[s as usize] * bag.multiplicity(s as usize) as f64)
                    .sum::<f64>()
                    / *count as f64;
                assert!((weighted - value).abs() < 1e-12);
                for &s in samples {
                    seen[s as usize] += 1;
                    assert_eq!(
                        t.leaf_index(d.row(s as usize)),
                        t.nodes.iter().position(|m| m == node).unwrap()
                    );
                }
            }
        }
        for (i, &hits) in seen.iter().enumerate() {
            assert_eq!(hits, u32::from(bag.multiplicity(i) > 0), "row {i}");
        }
    }
}
