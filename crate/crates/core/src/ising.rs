//! Generalized Ising Curie-Weiss model at a fixed temperature field `T`,
//! with weight `exp(⟨T⁻¹S_n, S_n⟩ / 2n)` relative to `ρ^{⊗n}`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{interquartile_range, mean};
use crate::error::{Error, Result};
use crate::gof::{energy_permutation_test, ks_distance, PermutationSettings, PermutationTest};
use crate::limit::{LimitLaw, LimitMode};
use crate::linalg::SymMat;
use crate::measure::MeasureSpec;
use crate::rng::{derive_seed, stream};
use crate::soc::{combine_runs, drive_chain, ChainRun, ChainSettings, Configuration, MetropolisChain, MultiChainRun, Sample, Target};

#[derive(Debug, Clone)]
pub struct FixedTModel {
    spec: MeasureSpec,
    temperature: SymMat,
    inverse: SymMat,
    n: usize,
}

impl FixedTModel {
    pub fn new(spec: MeasureSpec, temperature: SymMat, n: usize) -> Result<Self> {
        if temperature.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                got: temperature.dim(),
            });
        }
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        let inverse = temperature.inv_spd()?;
        Ok(FixedTModel {
            spec,
            temperature,
            inverse,
            n,
        })
    }

    /// The critical model `T = Σ`.
    pub fn critical(spec: MeasureSpec, n: usize) -> Result<Self> {
        let sigma = spec.covariance()?;
        Self::new(spec, sigma, n)
    }

    pub fn spec(&self) -> &MeasureSpec {
        &self.spec
    }

    pub fn temperature(&self) -> &SymMat {
        &self.temperature
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `H_T = ⟨T⁻¹S, S⟩ / 2n`.
    pub fn hamiltonian(&self, sum: &[f64]) -> f64 {
        self.inverse.quad_form(sum) / (2.0 * self.n as f64)
    }

    fn chain(&self, config: Configuration) -> Result<MetropolisChain<'_>> {
        MetropolisChain::with_target(
            &self.spec,
            config,
            Target::FixedTemperature {
                inverse: self.inverse.clone(),
            },
        )
    }
}

/// Single-site Metropolis chain with `ρ`-proposals for the fixed-`T` model,
/// started from `ρ^{⊗n}`.
pub fn run_chain_fixed_t<R: Rng + ?Sized>(model: &FixedTModel, settings: &ChainSettings, rng: &mut R) -> Result<ChainRun> {
    let d = model.spec.dim();
    let mut points = vec![vec![0.0; d]; model.n];
    for p in points.iter_mut() {
        model.spec.sample_into(rng, p);
    }
    let chain = model.chain(Configuration::from_points(&points)?)?;
    Ok(drive_chain(chain, settings, rng))
}

/// Independent fixed-`T` chains on streams `(seed, c)`.
pub fn run_chains_fixed_t(model: &FixedTModel, settings: &ChainSettings, seed: u64, chains: usize) -> Result<MultiChainRun> {
    let runs = (0..chains)
        .into_par_iter()
        .map(|c| run_chain_fixed_t(model, settings, &mut stream(seed, c as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_runs(runs))
}

/// One deterministic step with a given site and proposal, for tests.
pub fn fixed_t_step(model: &FixedTModel, points: &[Vec<f64>], site: usize, proposal: &[f64], uniform: f64) -> Result<(bool, Vec<Vec<f64>>)> {
    let mut chain = model.chain(Configuration::from_points(points)?)?;
    let accepted = chain.step_with(site, proposal, || uniform);
    Ok((accepted, chain.config().points()))
}

/// `T(T − Σ)⁻¹Σ`, computed as `(Σ⁻¹ − T⁻¹)⁻¹`; `None` unless `T − Σ` is PD.
pub fn gaussian_covariance(temperature: &SymMat, sigma: &SymMat) -> Result<Option<SymMat>> {
    if !temperature.sub(sigma).is_pd() {
        return Ok(None);
    }
    let precision = sigma.inv_spd()?.sub(&temperature.inv_spd()?);
    Ok(precision.inv_spd().ok())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianReport {
    /// False when `T − Σ` is not positive definite (critical or beyond).
    pub applicable: bool,
    pub target: Option<SymMat>,
    pub sample_covariance: SymMat,
    /// `max_ij |C_ij − target_ij| / max_ij |target_ij|`.
    pub max_relative_deviation: f64,
    /// Relative deviation of each diagonal entry.
    pub diagonal_relative_deviation: Vec<f64>,
    pub normality: Option<PermutationTest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianCheckSettings {
    /// Samples used in the normality test (subsampled evenly if larger).
    pub max_test_samples: usize,
    pub permutations: PermutationSettings,
}

impl Default for GaussianCheckSettings {
    fn default() -> Self {
        GaussianCheckSettings {
            max_test_samples: 1000,
            permutations: PermutationSettings::default(),
        }
    }
}

/// Compares the covariance of `S_n/√n` with `T(T − Σ)⁻¹Σ` and runs an
/// energy test against exact Gaussian draws.
pub fn gaussian_check<'s>(
    samples: impl IntoIterator<Item = &'s Sample>,
    n: usize,
    temperature: &SymMat,
    sigma: &SymMat,
    settings: &GaussianCheckSettings,
) -> Result<GaussianReport> {
    let d = sigma.dim();
    let scale = 1.0 / (n as f64).sqrt();
    let xs: Vec<Vec<f64>> = samples
        .into_iter()
        .map(|s| s.sum.iter().map(|v| v * scale).collect())
        .collect();
    let cov = sample_covariance(&xs, d);
    let target = gaussian_covariance(temperature, sigma)?;
    let Some(t) = target.clone() else {
        return Ok(GaussianReport {
            applicable: false,
            target: None,
            sample_covariance: cov,
            max_relative_deviation: f64::NAN,
            diagonal_relative_deviation: vec![],
            normality: None,
        });
    };
    let max_relative_deviation = cov.sub(&t).max_abs() / t.max_abs();
    let diagonal_relative_deviation = (0..d)
        .map(|i| (cov.get(i, i) - t.get(i, i)).abs() / t.get(i, i))
        .collect();
    let normality = if xs.len() >= 2 {
        let stride = xs.len().div_ceil(settings.max_test_samples.max(1));
        let picked: Vec<Vec<f64>> = xs.iter().step_by(stride).cloned().collect();
        let root = t.sqrt_spd()?;
        let mut rng = stream(derive_seed(settings.permutations.seed, 0x6A55), 0);
        let reference: Vec<Vec<f64>> = (0..picked.len())
            .map(|_| {
                let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                root.mul_vec(&g)
            })
            .collect();
        Some(energy_permutation_test(&picked, &reference, &settings.permutations)?)
    } else {
        None
    };
    Ok(GaussianReport {
        applicable: true,
        target,
        sample_covariance: cov,
        max_relative_deviation,
        diagonal_relative_deviation,
        normality,
    })
}

/// Unbiased covariance of row vectors.
pub fn sample_covariance(xs: &[Vec<f64>], d: usize) -> SymMat {
    let mut c = SymMat::zeros(d);
    if xs.len() < 2 {
        return c;
    }
    let m: Vec<f64> = (0..d).map(|k| mean(&xs.iter().map(|x| x[k]).collect::<Vec<_>>())).collect();
    let mut centered = vec![0.0; d];
    for x in xs {
        for k in 0..d {
            centered[k] = x[k] - m[k];
        }
        c.add_outer(&centered, 1.0);
    }
    c.scaled(1.0 / (xs.len() - 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingSettings {
    pub chains: usize,
    /// Burn-in per chain, in sweeps of `n` single-site steps.
    pub burn_in_sweeps: u64,
    /// Retained samples per chain.
    pub retained: u64,
    /// Sweeps between retained samples.
    pub thin_sweeps: u64,
    /// Temperature as a multiple of `Σ`; 1 is critical.
    pub temperature_factor: f64,
    /// Largest allowed max/min ratio of the `n^{3/4}` IQRs.
    pub max_critical_ratio: f64,
    /// Smallest required last/first ratio of the `√n` IQRs.
    pub min_sqrt_growth: f64,
    pub seed: u64,
}

impl Default for ScalingSettings {
    fn default() -> Self {
        ScalingSettings {
            chains: 8,
            burn_in_sweeps: 200,
            retained: 100,
            thin_sweeps: 20,
            temperature_factor: 1.0,
            max_critical_ratio: 3.0,
            min_sqrt_growth: 2.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub n_list: Vec<usize>,
    pub iqr_critical: Vec<f64>,
    pub iqr_sqrt: Vec<f64>,
    /// Largest over smallest `‖S_n‖/n^{3/4}` IQR.
    pub critical_ratio: f64,
    /// Last over first `‖S_n‖/√n` IQR.
    pub sqrt_growth: f64,
    pub max_critical_ratio: f64,
    pub min_sqrt_growth: f64,
    pub critical_bounded: bool,
    pub sqrt_grows: bool,
    /// KS distance of `S_n/n^{3/4}` at the largest `n` to the quartic law
    /// (d = 1 only). Exploratory: not part of the verdict.
    pub exploratory_ks: Option<f64>,
    pub acceptance_rates: Vec<f64>,
}

/// Fixed-`T` runs across `n_list` comparing the spread of `‖S_n‖/n^{3/4}`
/// and `‖S_n‖/√n`.
pub fn critical_scaling_check(spec: &MeasureSpec, n_list: &[usize], settings: &ScalingSettings) -> Result<ScalingReport> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n_list must be nonempty and increasing".into()));
    }
    let temperature = spec.covariance()?.scaled(settings.temperature_factor);
    let mut iqr_critical = Vec::new();
    let mut iqr_sqrt = Vec::new();
    let mut acceptance_rates = Vec::new();
    let mut exploratory_ks = None;
    for (idx, &n) in n_list.iter().enumerate() {
        let model = FixedTModel::new(spec.clone(), temperature.clone(), n)?;
        let nn = n as u64;
        let chain = ChainSettings {
            burn_in: settings.burn_in_sweeps * nn,
            steps: settings.retained * settings.thin_sweeps * nn,
            thin: settings.thin_sweeps * nn,
        };
        let run = run_chains_fixed_t(&model, &chain, derive_seed(settings.seed, n as u64), settings.chains)?;
        acceptance_rates.push(run.stats.acceptance_rate);
        let norms: Vec<f64> = run
            .samples()
            .map(|s| s.sum.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let nf = n as f64;
        iqr_critical.push(interquartile_range(&norms) / nf.powf(0.75));
        iqr_sqrt.push(interquartile_range(&norms) / nf.sqrt());
        if idx + 1 == n_list.len() && spec.dim() == 1 {
            let law = LimitLaw::from_spec(spec, LimitMode::Raw)?;
            let xs: Vec<f64> = run.samples().map(|s| s.sum[0] / nf.powf(0.75)).collect();
            exploratory_ks = Some(ks_distance(&xs, |z| law.cdf_1d(z).unwrap_or(f64::NAN)));
        }
    }
    let ratio = |v: &[f64]| {
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    };
    let critical_ratio = ratio(&iqr_critical);
    let sqrt_growth = if n_list.len() == 1 {
        1.0
    } else {
        iqr_sqrt[iqr_sqrt.len() - 1] / iqr_sqrt[0]
    };
    Ok(ScalingReport {
        n_list: n_list.to_vec(),
        critical_bounded: critical_ratio < settings.max_critical_ratio,
        sqrt_grows: sqrt_growth > settings.min_sqrt_growth,
        iqr_critical,
        iqr_sqrt,
        critical_ratio,
        sqrt_growth,
        max_critical_ratio: settings.max_critical_ratio,
        min_sqrt_growth: settings.min_sqrt_growth,
        exploratory_ks,
        acceptance_rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_covariances() {
        let sigma = SymMat::identity(2);
        let t = gaussian_covariance(&SymMat::scalar(2, 2.0), &sigma).unwrap().unwrap();
        assert!(t.sub(&SymMat::scalar(2, 2.0)).max_abs() < 1e-14);
        assert_eq!(gaussian_covariance(&sigma, &sigma).unwrap(), None);
        let t = gaussian_covariance(&SymMat::scalar(1, 4.0), &SymMat::identity(1)).unwrap().unwrap();
        assert!((t.get(0, 0) - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn critical_temperature_is_not_applicable() {
        let s = Sample {
            step: 1,
            sum: vec![1.0],
            second: SymMat::identity(1),
            energy: 0.0,
        };
        let r = gaussian_check([&s, &s], 4, &SymMat::identity(1), &SymMat::identity(1), &Default::default()).unwrap();
        assert!(!r.applicable);
    }

    #[test]
    fn proposal_equal_to_current_is_accepted() {
        let model = FixedTModel::new(MeasureSpec::rademacher(1).unwrap(), SymMat::scalar(1, 2.0), 3).unwrap();
        let pts = vec![vec![1.0], vec![-1.0], vec![1.0]];
        let (acc, after) = fixed_t_step(&model, &pts, 1, &[-1.0], 0.999_999).unwrap();
        assert!(acc);
        assert_eq!(after, pts);
    }

    #[test]
    fn single_site_law_matches_enumeration() {
        // n = 1: the law is ∝ w(x) exp(x²/(2T)).
        let spec = MeasureSpec::discrete(vec![
            (vec![1.0], 0.3),
            (vec![-1.0], 0.3),
            (vec![2.0], 0.2),
            (vec![-2.0], 0.2),
        ])
        .unwrap();
        let model = FixedTModel::new(spec, SymMat::scalar(1, 2.0), 1).unwrap();
        let settings = ChainSettings {
            burn_in: 100,
            steps: 400_000,
            thin: 1,
        };
        let run = run_chain_fixed_t(&model, &settings, &mut stream(8, 0)).unwrap();
        let w1 = 0.6 * (0.25f64).exp();
        let w2 = 0.4 * (1.0f64).exp();
        let p2 = w2 / (w1 + w2);
        let freq = run.samples.iter().filter(|s| s.sum[0].abs() == 2.0).count() as f64 / run.samples.len() as f64;
        assert!((freq - p2).abs() < 0.01, "{freq} vs {p2}");
    }

    #[test]
    fn single_n_list_gives_unit_ratios() {
        let settings = ScalingSettings {
            chains: 2,
            retained: 20,
            burn_in_sweeps: 10,
            thin_sweeps: 2,
            ..Default::default()
        };
        let r = critical_scaling_check(&MeasureSpec::rademacher(1).unwrap(), &[50], &settings).unwrap();
        assert_eq!(r.critical_ratio, 1.0);
        assert_eq!(r.sqrt_growth, 1.0);
        assert!(r.exploratory_ks.is_some());
    }
}
