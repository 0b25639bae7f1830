//! Law-of-large-numbers and Monte-Carlo sanity checks with binomial-scale
//! tolerances.

use oob_bands::dist::{residual_params_from_sigma2, ResidualFamily};
use oob_bands::forest::oob_exclusion_probability;
use oob_bands::sim::{coverage_type2, coverage_type4, PreparedScenario};
use oob_bands::{build_forest, CoverageType, Dataset, ForestConfig, Method, ResampleMode, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mean_exclusion(n: usize, mode: ResampleMode, a_n: usize, trees: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let y = rows.iter().map(|r| r[0] + rng.random::<f64>()).collect();
    let data = Dataset::from_rows(&rows, y).unwrap();
    let config = ForestConfig::default()
        .with_trees(trees)
        .with_seed(5)
        .with_resample(mode, Some(a_n))
        .with_max_leaves(Some(2));
    let forest = build_forest(&data, &config).unwrap();
    let res = forest.oob_residuals(&data).unwrap();
    res.oob_counts.iter().map(|&z| z as f64 / trees as f64).sum::<f64>() / n as f64
}

#[test]
fn oob_exclusion_rate_converges() {
    let boot = mean_exclusion(200, ResampleMode::Bootstrap, 200, 2000);
    let target = oob_exclusion_probability(200, 200, ResampleMode::Bootstrap).unwrap();
    assert!((boot - target).abs() < 0.02, "{boot} vs {target}");
    let sub = mean_exclusion(200, ResampleMode::Subsample, 126, 2000);
    assert!((sub - 0.37).abs() < 0.02, "{sub}");
}

fn oracle_scenario(coverage: CoverageType, method: Method) -> ScenarioConfig {
    ScenarioConfig {
        n: 20,
        residual: ResidualFamily::Exponential,
        coverage,
        seed: Some(2024),
        methods: vec![method],
        ..ScenarioConfig::default()
    }
}

#[test]
fn nested_oracle_coverage_type2() {
    let mut s = oracle_scenario(CoverageType::II, Method::OracleQuantile);
    s.outer = 50;
    s.inner = 400;
    let r = coverage_type2(&s).unwrap();
    let mean = r.methods[0].per_outer.iter().sum::<f64>() / 50.0;
    assert!((mean - 0.95).abs() <= 0.01, "{mean}");
}

#[test]
fn nested_oracle_coverage_type4_per_outer() {
    let mut s = oracle_scenario(CoverageType::IV, Method::OracleQuantile);
    s.outer = 4;
    s.inner = 10_000;
    let x0 = PreparedScenario::new(&s, 2024).unwrap().x0;
    let r = coverage_type4(&s, &x0).unwrap();
    for c in &r.methods[0].per_outer {
        assert!((c - 0.95).abs() <= 0.01, "{c}");
    }
}

#[test]
fn residual_quantiles_match_sampling_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for family in ResidualFamily::ALL {
        let spec = residual_params_from_sigma2(family, 4.0).unwrap();
        let q = spec.quantile(0.9).unwrap();
        let draws = 200_000;
        let below = (0..draws).filter(|_| spec.sample(&mut rng) <= q).count() as f64 / draws as f64;
        assert!((below - 0.9).abs() < 0.004, "{family:?}: {below}");
    }
}
