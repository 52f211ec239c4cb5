use cwsoc_core::diagnostics::{mean, variance};
use cwsoc_core::rng::stream;
use cwsoc_core::soc::*;
use cwsoc_core::{MeasureSpec, SymMat};

/// Exact law of S_n for ±1 spins under weights exp(S²/2n): (s, probability).
fn rademacher_enumeration(n: usize) -> Vec<(i64, f64)> {
    let mut out = Vec::new();
    let mut z = 0.0;
    for k in 0..=n {
        let s = 2 * k as i64 - n as i64;
        let binom: f64 = (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
        let w = binom * ((s * s) as f64 / (2 * n) as f64).exp();
        z += w;
        out.push((s, w));
    }
    out.into_iter().map(|(s, w)| (s, w / z)).collect()
}

#[test]
fn four_site_chain_matches_enumeration() {
    // Compare state frequencies over all 16 configurations.
    let n = 4;
    let spec = MeasureSpec::rademacher(1).unwrap();
    let mut rng = stream(21, 0);
    let config = Configuration::sample_in_domain(&spec, n, &mut rng).unwrap();
    let mut chain = MetropolisChain::new(&spec, config).unwrap();
    let mut counts = [0u64; 16];
    let steps = 1_000_000;
    for _ in 0..steps {
        chain.step(&mut rng);
        let c = chain.config();
        let mut idx = 0;
        for i in 0..n {
            if c.point(i)[0] > 0.0 {
                idx |= 1 << i;
            }
        }
        counts[idx] += 1;
    }
    let weights: Vec<f64> = (0..16u32)
        .map(|m| {
            let s = 2.0 * m.count_ones() as f64 - 4.0;
            (s * s / 8.0).exp()
        })
        .collect();
    let z: f64 = weights.iter().sum();
    let tv: f64 = 0.5
        * counts
            .iter()
            .zip(&weights)
            .map(|(c, w)| (*c as f64 / steps as f64 - w / z).abs())
            .sum::<f64>();
    assert!(tv < 0.01, "tv = {tv}");
}

#[test]
fn oracle_reproduces_enumeration() {
    let spec = MeasureSpec::rademacher(1).unwrap();
    let exact = rademacher_enumeration(4);
    let es2: f64 = exact.iter().map(|(s, p)| (s * s) as f64 * p).sum();
    let is = importance_oracle(&spec, 4, 100_000, &mut stream(22, 0));
    let e = is.expectation(|s, _| s[0] * s[0]);
    assert!((e.mean - es2).abs() < 3.0 * e.std_error, "{} ± {} vs {es2}", e.mean, e.std_error);
    let one = is.expectation(|_, _| 1.0);
    assert!((one.mean - 1.0).abs() < 1e-12);
    assert!(!is.low_ess_warning());
}

#[test]
fn oracle_normalization_for_ten_sites() {
    // Z_n = E exp(S²/2n) under independent ±1 spins.
    let n = 10;
    let z: f64 = (0..=n)
        .map(|k| {
            let s = 2.0 * k as f64 - n as f64;
            let binom: f64 = (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
            binom / 1024.0 * (s * s / 20.0).exp()
        })
        .sum();
    let spec = MeasureSpec::rademacher(1).unwrap();
    let is = importance_oracle(&spec, n, 200_000, &mut stream(23, 0));
    let est = is.normalization();
    assert!((est.mean / z - 1.0).abs() < 0.02, "{} vs {z}", est.mean);
}

#[test]
fn gaussian_mean_is_near_zero() {
    let spec = MeasureSpec::standard_gaussian(2).unwrap();
    let n = 500;
    let settings = ChainSettings::defaults_for(n, 10_000);
    let run = run_chain(&spec, n, &settings, &mut stream(24, 0)).unwrap();
    assert_eq!(run.samples.len(), 10_000);
    for k in 0..2 {
        let m = mean(&run.samples.iter().map(|s| s.sum[k] / n as f64).collect::<Vec<_>>());
        assert!(m.abs() < 0.1, "{m}");
    }
    assert!(run.stats.max_rhat() < 1.1);
    for s in &run.samples {
        assert!(s.energy >= 0.0 && s.energy <= n as f64 / 2.0);
    }
}

#[test]
fn chains_are_reproducible() {
    let spec = MeasureSpec::axes(2).unwrap();
    let settings = ChainSettings {
        burn_in: 500,
        steps: 5_000,
        thin: 50,
    };
    let a = run_chains(&spec, 20, &settings, 99, 3).unwrap();
    let b = run_chains(&spec, 20, &settings, 99, 3).unwrap();
    assert_eq!(a.pooled(), b.pooled());
    assert_ne!(a.chains[0].samples, a.chains[1].samples);
}

#[test]
fn smoothing_noise_has_variance_inverse_root_n() {
    let raw = vec![vec![0.3]; 100_000];
    let smoothed = hs_statistic(&raw, 16, &mut stream(25, 0));
    let diff: Vec<f64> = smoothed.iter().zip(&raw).map(|(a, b)| a[0] - b[0]).collect();
    let v = variance(&diff);
    // Var of the sample variance of N(0, σ²) is 2σ⁴/(m−1).
    let se = (2.0 * 0.25f64.powi(2) / 99_999.0).sqrt();
    assert!((v - 0.25).abs() < 3.0 * se, "{v}");
}

#[test]
fn rademacher_second_moment_is_constant() {
    let spec = MeasureSpec::rademacher(1).unwrap();
    let settings = ChainSettings::defaults_for(100, 200);
    let run = run_chain(&spec, 100, &settings, &mut stream(26, 0)).unwrap();
    let sigma = SymMat::identity(1);
    let f = fluctuation_statistics(run.samples.iter(), 100, &sigma);
    for row in &f.rows {
        assert_eq!(row.second_deviation, 0.0);
        assert!((row.raw[0] - row.whitened[0]).abs() < 1e-12);
    }
}
