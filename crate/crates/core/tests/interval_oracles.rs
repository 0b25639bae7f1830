use nalgebra::{DMatrix, DVector};
use oob_bands::intervals::{nonparametric_interval, qrf_cdf, qrf_quantile, ConditionalCdf, OlsFit};
use oob_bands::{build_forest, Dataset, ForestConfig, ForestIntervals, IntervalKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_linear(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random::<f64>()).collect()).collect();
    let y = rows
        .iter()
        .map(|r| 1.0 + r.iter().enumerate().map(|(j, v)| (j as f64 + 1.0) * v).sum::<f64>() + rng.random::<f64>() - 0.5)
        .collect();
    Dataset::from_rows(&rows, y).unwrap()
}

#[test]
fn ols_matches_normal_equations() {
    let data = noisy_linear(60, 4, 11);
    let (n, p) = (60, 4);
    let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { data.value(i, j - 1) });
    let y = DVector::from_column_slice(data.y());
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let beta = &xtx_inv * x.transpose() * &y;
    let rss = (&y - &x * &beta).norm_squared();
    let s2 = rss / (n - p - 1) as f64;

    let fit = OlsFit::fit(&data).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-8 * b.abs().max(1e-300);
    for (a, b) in fit.coefficients().iter().zip(beta.iter()) {
        assert!(rel(*a, *b), "{a} vs {b}");
    }
    assert!(rel(fit.sigma2, s2));
    let x0 = [0.2, 0.9, 0.4, 0.1];
    let xt = DVector::from_vec(vec![1.0, 0.2, 0.9, 0.4, 0.1]);
    let lev = (xt.transpose() * &xtx_inv * &xt)[0];
    assert!(rel(fit.leverage(&x0).unwrap(), lev));
    // t quantile for df = 55 at 0.975, computed independently.
    let t = 2.004_044_783_289_146;
    let iv = fit.interval(&x0, 0.05).unwrap();
    let centre = xt.dot(&beta);
    let half = t * (s2 * (1.0 + lev)).sqrt();
    assert!(rel(iv.lower, centre - half));
    assert!(rel(iv.upper, centre + half));
}

#[test]
fn np_endpoints_are_residual_order_statistics() {
    let data = noisy_linear(97, 3, 4);
    let forest = build_forest(&data, &ForestConfig::default().with_trees(60).with_seed(2)).unwrap();
    let res = forest.oob_residuals(&data).unwrap();
    let mut sorted = res.valid_residuals();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    for alpha in [0.05, 0.1, 0.2, 0.5] {
        let point = forest.predict(&[0.3, 0.3, 0.3]).unwrap();
        let iv = nonparametric_interval(point, &res, alpha).unwrap();
        let lo = ((alpha / 2.0) * n as f64).ceil() as usize;
        let hi = ((1.0 - alpha / 2.0) * n as f64).ceil() as usize;
        assert_eq!(iv.lower, point + sorted[lo - 1]);
        assert_eq!(iv.upper, point + sorted[hi - 1]);
    }
}

#[test]
fn qrf_quantile_matches_grid_search() {
    let data = noisy_linear(80, 2, 21);
    let forest = build_forest(&data, &ForestConfig::default().with_trees(40).with_seed(6)).unwrap();
    let x = [0.4, 0.7];
    let w = forest.leaf_weights(&x).unwrap();
    let cdf = qrf_cdf(&forest, &data, &x).unwrap();
    let fhat = |t: f64| -> f64 { data.y().iter().zip(&w).filter(|(y, _)| **y <= t).map(|(_, w)| w).sum() };
    let mut candidates: Vec<f64> = data.y().to_vec();
    candidates.sort_by(f64::total_cmp);
    for k in 1..100 {
        let a = k as f64 / 100.0;
        let brute = candidates.iter().copied().find(|&t| fhat(t) >= a - 1e-12).unwrap();
        assert_eq!(qrf_quantile(&cdf, a).unwrap(), brute, "alpha {a}");
    }
}

#[test]
fn conditional_cdf_rejects_bad_weights() {
    assert!(ConditionalCdf::from_weighted(&[1.0, 2.0], &[0.5]).is_err());
    assert!(ConditionalCdf::from_weighted(&[1.0, 2.0], &[0.5, -0.1]).is_err());
}

#[test]
fn forest_intervals_are_nested_in_alpha() {
    let data = noisy_linear(120, 3, 9);
    let forest = build_forest(&data, &ForestConfig::default().with_trees(80).with_seed(3)).unwrap();
    let fi = ForestIntervals::new(forest, &data, 0.5).unwrap();
    let x = [0.5, 0.5, 0.5];
    for kind in IntervalKind::FOREST {
        let wide = fi.interval(kind, &data, &x, 0.05).unwrap();
        let narrow = fi.interval(kind, &data, &x, 0.3).unwrap();
        assert!(wide.lower <= narrow.lower && narrow.upper <= wide.upper, "{kind:?}");
        assert!(wide.lower <= wide.upper);
    }
}
