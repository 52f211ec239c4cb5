//! Goodness of fit: Kolmogorov-Smirnov against a distribution function and
//! the energy distance with a permutation test.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// `sup_z |F_emp(z) − F(z)|`, evaluated at the sample points from both sides.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        // Ties jump together.
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let f = cdf(v[i]);
        d = d.max((f - i as f64 / n).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    d
}

/// `√N`-scaled 1% critical value of the Kolmogorov distribution.
pub const KS_CRITICAL_1PCT: f64 = 1.628;

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Energy distance `2E‖X−Y‖ − E‖X−X′‖ − E‖Y−Y′‖` in V-statistic form
/// (all pairs, diagonal included). It is nonnegative and exactly zero for
/// identical sample sets.
pub fn energy_distance(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    if xs.is_empty() || ys.is_empty() {
        return f64::NAN;
    }
    let mean_pair = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        a.iter().map(|p| b.iter().map(|q| euclid(p, q)).sum::<f64>()).sum::<f64>()
            / (a.len() * b.len()) as f64
    };
    let e = 2.0 * mean_pair(xs, ys) - mean_pair(xs, xs) - mean_pair(ys, ys);
    e.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationSettings {
    pub permutations: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for PermutationSettings {
    fn default() -> Self {
        PermutationSettings {
            permutations: 199,
            alpha: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationTest {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
    pub alpha: f64,
    pub reject: bool,
}

/// Pairwise distances of the pooled sample, upper triangle row by row.
struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn new(points: &[&[f64]]) -> Self {
        let n = points.len();
        let mut d = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
        for i in 0..n {
            for j in i + 1..n {
                d.push(euclid(points[i], points[j]));
            }
        }
        Condensed { n, d }
    }

    /// Within-group distance sums for a labelling (`true` = first group).
    fn within_sums(&self, first: &[bool]) -> (f64, f64) {
        let (mut a, mut b) = (0.0, 0.0);
        let mut k = 0;
        for i in 0..self.n {
            let row = &self.d[k..k + self.n - i - 1];
            k += row.len();
            let li = first[i];
            for (dist, &lj) in row.iter().zip(&first[i + 1..]) {
                if li == lj {
                    if li {
                        a += dist;
                    } else {
                        b += dist;
                    }
                }
            }
        }
        (a, b)
    }
}

/// Energy-distance two-sample test; the p-value counts permutations whose
/// statistic is at least the observed one, `(1 + #) / (1 + permutations)`.
pub fn energy_permutation_test(
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    settings: &PermutationSettings,
) -> Result<PermutationTest> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidArgument("energy test needs two nonempty samples".into()));
    }
    let pooled: Vec<&[f64]> = xs.iter().chain(ys).map(|v| v.as_slice()).collect();
    let dim = pooled[0].len();
    if let Some(bad) = pooled.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let dist = Condensed::new(&pooled);
    let total: f64 = dist.d.iter().sum();
    let (m, k) = (xs.len() as f64, ys.len() as f64);
    let stat = |first: &[bool]| {
        let (a, b) = dist.within_sums(first);
        let cross = total - a - b;
        2.0 * cross / (m * k) - 2.0 * a / (m * m) - 2.0 * b / (k * k)
    };
    let labels: Vec<bool> = (0..pooled.len()).map(|i| i < xs.len()).collect();
    let observed = stat(&labels);
    let exceed = (0..settings.permutations)
        .into_par_iter()
        .map(|p| {
            let mut l = labels.clone();
            l.shuffle(&mut stream(settings.seed, p as u64));
            stat(&l) >= observed - 1e-12 * observed.abs()
        })
        .filter(|&b| b)
        .count();
    let p_value = (1 + exceed) as f64 / (1 + settings.permutations) as f64;
    Ok(PermutationTest {
        statistic: observed.max(0.0),
        p_value,
        permutations: settings.permutations,
        alpha: settings.alpha,
        reject: p_value < settings.alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal_cdf(x: f64) -> f64 {
        // Abramowitz-Stegun 7.1.26 is too coarse here; integrate instead.
        0.5 + crate::quadrature::simpson(|t| (-0.5 * t * t).exp(), 0.0, x, 401) / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn ks_examples() {
        let zeros = vec![0.0; 100];
        let d = ks_distance(&zeros, normal_cdf);
        assert!((d - 0.5).abs() < 1e-12);

        let mut rng = stream(4, 0);
        let xs: Vec<f64> = (0..2000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(ks_distance(&xs, normal_cdf) < KS_CRITICAL_1PCT / (2000f64).sqrt());
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.5).collect();
        assert!(ks_distance(&shifted, normal_cdf) > 0.1);
    }

    #[test]
    fn energy_of_identical_sets_is_zero() {
        let mut rng = stream(5, 0);
        let xs: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random(), rng.random()]).collect();
        assert!(energy_distance(&xs, &xs).abs() < 1e-12);
        let ys: Vec<Vec<f64>> = xs.iter().map(|v| vec![v[0] + 1.0, v[1]]).collect();
        assert!(energy_distance(&xs, &ys) > 0.5);
    }

    #[test]
    fn permutation_test_matches_direct_statistic() {
        let mut rng = stream(6, 0);
        let xs: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.sample(StandardNormal)]).collect();
        let ys: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.sample(StandardNormal)]).collect();
        let t = energy_permutation_test(&xs, &ys, &PermutationSettings::default()).unwrap();
        assert!((t.statistic - energy_distance(&xs, &ys)).abs() < 1e-10);
        assert!(!t.reject);
        assert!(t.p_value > 0.0 && t.p_value <= 1.0);

        let zs: Vec<Vec<f64>> = ys.iter().map(|v| vec![v[0] * 3.0]).collect();
        let t = energy_permutation_test(&xs, &zs, &PermutationSettings::default()).unwrap();
        assert!(t.reject);
        assert_eq!(t.p_value, 1.0 / 200.0);
    }
}
