//! Forest queries checked against brute-force recomputation from the stored
//! trees and bag masks.

use oob_bands::forest::{Node, Tree};
use oob_bands::{build_forest, Dataset, ForestConfig, ResampleMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_data(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random::<f64>()).collect()).collect();
    let y = rows.iter().map(|r| r[0] * 3.0 - r[1] + rng.random::<f64>()).collect();
    Dataset::from_rows(&rows, y).unwrap()
}

fn walk(tree: &Tree, x: &[f64]) -> usize {
    let mut at = 0;
    while let Node::Split {
        feature,
        threshold,
        left,
        right,
    } = &tree.nodes[at]
    {
        at = if x[*feature] <= *threshold { *left } else { *right };
    }
    at
}

fn leaf_value(tree: &Tree, leaf: usize) -> f64 {
    match &tree.nodes[leaf] {
        Node::Leaf { value, .. } => *value,
        _ => unreachable!(),
    }
}

#[test]
fn predictions_weights_and_oob_match_brute_force() {
    for (seed, mode) in [(1, ResampleMode::Bootstrap), (2, ResampleMode::Subsample)] {
        let data = random_data(20, 3, seed);
        let count = (mode == ResampleMode::Subsample).then_some(13);
        let config = ForestConfig::default()
            .with_trees(10)
            .with_seed(seed)
            .with_min_node_size(1)
            .with_resample(mode, count);
        let forest = build_forest(&data, &config).unwrap();
        let m = forest.trees().len();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let probes: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        for x in probes.iter().map(Vec::as_slice).chain(data.rows()) {
            let mut sum = 0.0;
            for tree in forest.trees() {
                sum += leaf_value(tree, walk(tree, x));
            }
            assert_eq!(forest.predict(x).unwrap().to_bits(), (sum / m as f64).to_bits());

            // Leaf membership recomputed by routing every in-bag row.
            let mut w = vec![0.0; data.n_samples()];
            for (tree, bag) in forest.trees().iter().zip(forest.bag_masks()) {
                let leaf = walk(tree, x);
                let members: Vec<usize> = (0..data.n_samples())
                    .filter(|&k| bag.multiplicity(k) > 0 && walk(tree, data.row(k)) == leaf)
                    .collect();
                for k in &members {
                    w[*k] += 1.0 / (m as f64 * members.len() as f64);
                }
            }
            let got = forest.leaf_weights(x).unwrap();
            for (a, b) in got.iter().zip(&w) {
                assert!((a - b).abs() <= 1e-12);
            }
        }

        for i in 0..data.n_samples() {
            let mut sum = 0.0;
            let mut z = 0u32;
            for (tree, bag) in forest.trees().iter().zip(forest.bag_masks()) {
                if bag.multiplicity(i) == 0 {
                    sum += leaf_value(tree, walk(tree, data.row(i)));
                    z += 1;
                }
            }
            let (pred, count) = forest.predict_oob(&data, i).unwrap();
            assert_eq!(count, z);
            assert_eq!(pred.map(f64::to_bits), (z > 0).then(|| (sum / z as f64).to_bits()));
        }
    }
}

#[test]
fn leaf_values_are_multiplicity_weighted_means() {
    let data = random_data(40, 4, 5);
    let config = ForestConfig::default()
        .with_trees(15)
        .with_seed(8)
        .with_min_node_size(2);
    let forest = build_forest(&data, &config).unwrap();
    for (tree, bag) in forest.trees().iter().zip(forest.bag_masks()) {
        for (idx, node) in tree.nodes.iter().enumerate() {
            if let Node::Leaf { value, samples, count } = node {
                let mut num = 0.0;
                let mut den = 0u32;
                for &k in samples {
                    let k = k as usize;
                    assert_eq!(walk(tree, data.row(k)), idx);
                    num += bag.multiplicity(k) as f64 * data.y()[k];
                    den += bag.multiplicity(k);
                }
                assert_eq!(den, *count);
                assert!((num / den as f64 - value).abs() <= 1e-12 * value.abs().max(1.0));
            }
        }
    }
}

#[test]
fn splits_are_exhaustively_optimal_at_the_root() {
    // With every feature eligible and every row in bag exactly once, the
    // root split must maximize the reduction over all candidate cuts.
    let data = random_data(30, 3, 17);
    let config = ForestConfig::default()
        .with_trees(1)
        .with_mtry(3)
        .with_min_node_size(1)
        .with_resample(ResampleMode::Subsample, Some(30));
    let forest = build_forest(&data, &config).unwrap();
    let Node::Split { feature, threshold, .. } = forest.trees()[0].nodes[0] else {
        panic!("root should split");
    };
    let reduction = |j: usize, t: f64| {
        let (mut l, mut r) = (Vec::new(), Vec::new());
        for i in 0..30 {
            if data.value(i, j) <= t {
                l.push(data.y()[i])
            } else {
                r.push(data.y()[i])
            }
        }
        if l.is_empty() || r.is_empty() {
            return f64::NEG_INFINITY;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (nl, nr) = (l.len() as f64, r.len() as f64);
        nl * nr / 30.0 * (mean(&l) - mean(&r)).powi(2)
    };
    let chosen = reduction(feature, threshold);
    for j in 0..3 {
        let mut xs: Vec<f64> = (0..30).map(|i| data.value(i, j)).collect();
        xs.sort_by(f64::total_cmp);
        for w in xs.windows(2) {
            let cand = reduction(j, 0.5 * (w[0] + w[1]));
            assert!(cand <= chosen * (1.0 + 1e-9), "feature {j} beats the chosen split");
        }
    }
}
