//! The Curie-Weiss SOC measure: configurations, the single-site Metropolis
//! sampler, the importance-sampling oracle, and the derived statistics.
//!
//! Relative to `ρ^{⊗n}` the target has weight `exp(H)` on `D_n^+`, where
//! `H = ½⟨T_n⁻¹ S_n, S_n⟩`. Proposals redraw one site from ρ, so the
//! Hastings ratio is exactly `exp(H' - H)` and ρ's density is never needed.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{effective_sample_size, split_rhat, ChainStats, ObservableDiagnostics};
use crate::error::{Error, Result};
use crate::linalg::{rank_one_inv_update_into, SymMat};
use crate::measure::MeasureSpec;
use crate::rng::stream;

/// Accepted updates between from-scratch recomputations of `T_n⁻¹`.
pub const INVERSE_REFRESH_INTERVAL: usize = 1024;
/// Sweeps between full re-summations of `S_n` and `T_n` from the points.
const RESUM_SWEEPS: usize = 64;
/// Redraws allowed when looking for an initial configuration in `D_n^+`.
pub const MAX_INITIAL_REDRAWS: usize = 1_000_000;

/// `H = ½⟨T⁻¹S, S⟩`, or `None` outside `D_n^+`.
pub fn hamiltonian(points: &[Vec<f64>]) -> Option<f64> {
    let d = points.first()?.len();
    let mut sum = vec![0.0; d];
    let mut second = SymMat::zeros(d);
    for p in points {
        for (s, v) in sum.iter_mut().zip(p) {
            *s += v;
        }
        second.add_outer(p, 1.0);
    }
    let inv = second.inv_spd().ok()?;
    Some(0.5 * inv.quad_form(&sum))
}

/// Points `x_1, …, x_n` with cached `S_n`, `T_n`, `T_n⁻¹` and `H`.
#[derive(Debug, Clone)]
pub struct Configuration {
    n: usize,
    dim: usize,
    points: Vec<f64>,
    sum: Vec<f64>,
    second: SymMat,
    second_inv: SymMat,
    energy: f64,
    in_domain: bool,
}

impl Configuration {
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points
            .first()
            .map(|p| p.len())
            .ok_or_else(|| Error::InvalidArgument("configuration needs at least one point".into()))?;
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            flat.extend_from_slice(p);
        }
        Ok(Self::from_flat(dim, flat))
    }

    fn from_flat(dim: usize, points: Vec<f64>) -> Self {
        let n = points.len() / dim;
        let mut c = Configuration {
            n,
            dim,
            points,
            sum: vec![0.0; dim],
            second: SymMat::zeros(dim),
            second_inv: SymMat::zeros(dim),
            energy: 0.0,
            in_domain: false,
        };
        c.refresh();
        c
    }

    /// Draws `ρ^{⊗n}` until `T_n` is invertible.
    pub fn sample_in_domain<R: Rng + ?Sized>(spec: &MeasureSpec, n: usize, rng: &mut R) -> Result<Self> {
        let d = spec.dim();
        if n < d {
            return Err(Error::InvalidArgument(format!(
                "n = {n} is below the dimension {d}; T_n can never be invertible"
            )));
        }
        let mut points = vec![0.0; n * d];
        for _ in 0..MAX_INITIAL_REDRAWS {
            for chunk in points.chunks_exact_mut(d) {
                spec.sample_into(rng, chunk);
            }
            let c = Self::from_flat(d, points.clone());
            if c.in_domain {
                return Ok(c);
            }
        }
        Err(Error::DomainUnreachable {
            attempts: MAX_INITIAL_REDRAWS,
        })
    }

    /// Recomputes every cache from the points.
    pub fn refresh(&mut self) {
        let d = self.dim;
        self.sum.iter_mut().for_each(|s| *s = 0.0);
        self.second = SymMat::zeros(d);
        for p in self.points.chunks_exact(d) {
            for (s, v) in self.sum.iter_mut().zip(p) {
                *s += v;
            }
            self.second.add_outer(p, 1.0);
        }
        self.refresh_inverse();
    }

    fn refresh_inverse(&mut self) {
        match self.second.inv_spd() {
            Ok(inv) => {
                self.energy = 0.5 * inv.quad_form(&self.sum);
                self.second_inv = inv;
                self.in_domain = true;
            }
            Err(_) => {
                self.energy = f64::NAN;
                self.in_domain = false;
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.points.chunks_exact(self.dim).map(|c| c.to_vec()).collect()
    }

    pub fn sum(&self) -> &[f64] {
        &self.sum
    }

    pub fn second(&self) -> &SymMat {
        &self.second
    }

    pub fn second_inv(&self) -> Option<&SymMat> {
        self.in_domain.then_some(&self.second_inv)
    }

    /// Cached `H`; `None` outside `D_n^+`.
    pub fn energy(&self) -> Option<f64> {
        self.in_domain.then_some(self.energy)
    }

    pub fn in_domain(&self) -> bool {
        self.in_domain
    }
}

/// Which Gibbs weight the chain targets.
#[derive(Debug, Clone)]
pub(crate) enum Target {
    /// `exp(½⟨T_n⁻¹S_n, S_n⟩)` on `D_n^+`.
    SelfOrganized,
    /// `exp(⟨T⁻¹S_n, S_n⟩ / 2n)` for a fixed temperature field `T`.
    FixedTemperature { inverse: SymMat },
}

/// Single-site Metropolis chain with ρ-proposals.
#[derive(Debug, Clone)]
pub struct MetropolisChain<'a> {
    spec: &'a MeasureSpec,
    target: Target,
    config: Configuration,
    proposal: Vec<f64>,
    old_point: Vec<f64>,
    new_sum: Vec<f64>,
    work: Vec<f64>,
    removed_inv: SymMat,
    new_inv: SymMat,
    updates_since_inverse: usize,
    steps_since_resum: usize,
    steps: u64,
    accepted: u64,
}

impl<'a> MetropolisChain<'a> {
    pub fn new(spec: &'a MeasureSpec, config: Configuration) -> Result<Self> {
        Self::with_target(spec, config, Target::SelfOrganized)
    }

    pub(crate) fn with_target(spec: &'a MeasureSpec, mut config: Configuration, target: Target) -> Result<Self> {
        let d = spec.dim();
        if config.dim != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: config.dim,
            });
        }
        if let Target::FixedTemperature { inverse } = &target {
            config.energy = inverse.quad_form(&config.sum) / (2.0 * config.n as f64);
        }
        Ok(MetropolisChain {
            spec,
            target,
            config,
            proposal: vec![0.0; d],
            old_point: vec![0.0; d],
            new_sum: vec![0.0; d],
            work: vec![0.0; d],
            removed_inv: SymMat::zeros(d),
            new_inv: SymMat::zeros(d),
            updates_since_inverse: 0,
            steps_since_resum: 0,
            steps: 0,
            accepted: 0,
        })
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn into_config(self) -> Configuration {
        self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn reset_counters(&mut self) {
        self.steps = 0;
        self.accepted = 0;
    }

    /// Current value of the exponent being targeted (`H` or `H_T`).
    pub fn energy(&self) -> f64 {
        self.config.energy
    }

    /// One Metropolis step: uniform site, fresh ρ draw, accept with
    /// probability `min(1, exp(ΔH))`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let site = rng.random_range(0..self.config.n);
        let mut proposal = std::mem::take(&mut self.proposal);
        self.spec.sample_into(rng, &mut proposal);
        let accepted = self.step_with(site, &proposal, || rng.random::<f64>());
        self.proposal = proposal;
        accepted
    }

    /// Deterministic core of [`step`](Self::step): `uniform` is only
    /// called when the move lowers the energy.
    pub fn step_with(&mut self, site: usize, proposal: &[f64], uniform: impl FnOnce() -> f64) -> bool {
        self.steps += 1;
        let d = self.config.dim;
        self.old_point
            .copy_from_slice(&self.config.points[site * d..(site + 1) * d]);
        if self.old_point == proposal {
            self.accepted += 1;
            return true;
        }
        for k in 0..d {
            self.new_sum[k] = self.config.sum[k] - self.old_point[k] + proposal[k];
        }

        let new_energy = match &self.target {
            Target::FixedTemperature { inverse } => {
                inverse.quad_form(&self.new_sum) / (2.0 * self.config.n as f64)
            }
            Target::SelfOrganized => {
                if !self.config.in_domain {
                    // Outside D_n^+ the chain is plain ρ-resampling until it re-enters.
                    self.commit_point(site, proposal);
                    self.config.refresh_inverse();
                    self.accepted += 1;
                    return true;
                }
                match self.propose_inverse(proposal) {
                    Some(()) => 0.5 * self.new_inv.quad_form(&self.new_sum),
                    None => return false,
                }
            }
        };

        let delta = new_energy - self.config.energy;
        if delta < 0.0 && uniform() >= delta.exp() {
            return false;
        }

        self.commit_point(site, proposal);
        self.config.energy = new_energy;
        self.accepted += 1;
        if matches!(self.target, Target::SelfOrganized) {
            std::mem::swap(&mut self.config.second_inv, &mut self.new_inv);
            self.updates_since_inverse += 1;
            if self.updates_since_inverse >= INVERSE_REFRESH_INTERVAL {
                self.updates_since_inverse = 0;
                self.config.refresh_inverse();
            }
        }
        self.steps_since_resum += 1;
        if self.steps_since_resum >= RESUM_SWEEPS * self.config.n {
            self.steps_since_resum = 0;
            self.resum();
        }
        true
    }

    /// Fills `new_inv` with the inverse after swapping in `proposal`.
    /// `None` means the proposal leaves `D_n^+`.
    fn propose_inverse(&mut self, proposal: &[f64]) -> Option<()> {
        let removed = rank_one_inv_update_into(
            &self.config.second_inv,
            &self.old_point,
            -1.0,
            &mut self.removed_inv,
            &mut self.work,
        );
        if removed.is_ok()
            && rank_one_inv_update_into(&self.removed_inv, proposal, 1.0, &mut self.new_inv, &mut self.work).is_ok()
        {
            return Some(());
        }
        // The intermediate matrix is singular: rebuild from scratch.
        let mut second = self.config.second.clone();
        second.add_outer(&self.old_point, -1.0);
        second.add_outer(proposal, 1.0);
        let inv = second.inv_spd().ok()?;
        self.new_inv.copy_from(&inv);
        Some(())
    }

    fn commit_point(&mut self, site: usize, proposal: &[f64]) {
        let d = self.config.dim;
        self.config.points[site * d..(site + 1) * d].copy_from_slice(proposal);
        std::mem::swap(&mut self.config.sum, &mut self.new_sum);
        self.config.second.add_outer(&self.old_point, -1.0);
        self.config.second.add_outer(proposal, 1.0);
    }

    fn resum(&mut self) {
        match &self.target {
            Target::SelfOrganized => {
                self.config.refresh();
                self.updates_since_inverse = 0;
            }
            Target::FixedTemperature { inverse } => {
                let inverse = inverse.clone();
                self.config.refresh();
                self.config.energy = inverse.quad_form(&self.config.sum) / (2.0 * self.config.n as f64);
            }
        }
    }
}

/// Retained chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub step: u64,
    pub sum: Vec<f64>,
    pub second: SymMat,
    /// The exponent of the target weight at this state.
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ChainSettings {
    /// Single-site steps discarded before sampling.
    pub burn_in: u64,
    /// Single-site steps after burn-in.
    pub steps: u64,
    /// Keep one sample every `thin` steps.
    pub thin: u64,
}

impl ChainSettings {
    /// Ten sweeps of burn-in and one retained sample per sweep.
    pub fn defaults_for(n: usize, retained: u64) -> Self {
        let n = n as u64;
        ChainSettings {
            burn_in: 10 * n,
            steps: retained * n,
            thin: n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainRun {
    pub samples: Vec<Sample>,
    pub stats: ChainStats,
}

pub(crate) fn drive_chain<R: Rng + ?Sized>(
    mut chain: MetropolisChain<'_>,
    settings: &ChainSettings,
    rng: &mut R,
) -> ChainRun {
    for _ in 0..settings.burn_in {
        chain.step(rng);
    }
    chain.reset_counters();
    let thin = settings.thin.max(1);
    let mut samples = Vec::with_capacity((settings.steps / thin) as usize);
    for t in 1..=settings.steps {
        chain.step(rng);
        if t % thin == 0 {
            let c = chain.config();
            samples.push(Sample {
                step: t,
                sum: c.sum.clone(),
                second: c.second.clone(),
                energy: chain.energy(),
            });
        }
    }
    let stats = chain_stats(&[&samples], chain.steps(), chain.accepted());
    ChainRun { samples, stats }
}

/// Runs one SOC chain from a `ρ^{⊗n}` start conditioned on `D_n^+`.
pub fn run_chain<R: Rng + ?Sized>(
    spec: &MeasureSpec,
    n: usize,
    settings: &ChainSettings,
    rng: &mut R,
) -> Result<ChainRun> {
    let config = Configuration::sample_in_domain(spec, n, rng)?;
    let chain = MetropolisChain::new(spec, config)?;
    Ok(drive_chain(chain, settings, rng))
}

#[derive(Debug, Clone)]
pub struct MultiChainRun {
    pub chains: Vec<ChainRun>,
    pub stats: ChainStats,
}

impl MultiChainRun {
    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.chains.iter().flat_map(|c| c.samples.iter())
    }

    pub fn pooled(&self) -> Vec<Sample> {
        self.samples().cloned().collect()
    }
}

/// Runs `chains` independent chains in parallel; chain `c` uses stream
/// `(seed, c)`, so output is independent of thread scheduling.
pub fn run_chains(
    spec: &MeasureSpec,
    n: usize,
    settings: &ChainSettings,
    seed: u64,
    chains: usize,
) -> Result<MultiChainRun> {
    let runs = (0..chains)
        .into_par_iter()
        .map(|c| run_chain(spec, n, settings, &mut stream(seed, c as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_runs(runs))
}

pub(crate) fn combine_runs(runs: Vec<ChainRun>) -> MultiChainRun {
    let steps = runs.iter().map(|r| r.stats.steps).sum();
    let accepted = runs.iter().map(|r| r.stats.accepted).sum();
    let refs: Vec<&Vec<Sample>> = runs.iter().map(|r| &r.samples).collect();
    let stats = chain_stats(&refs, steps, accepted);
    MultiChainRun { chains: runs, stats }
}

fn chain_stats(chains: &[&Vec<Sample>], steps: u64, accepted: u64) -> ChainStats {
    let retained: usize = chains.iter().map(|c| c.len()).sum();
    let mut observables = Vec::new();
    if retained > 0 {
        let d = chains.iter().find_map(|c| c.first()).map(|s| s.sum.len()).unwrap_or(0);
        let mut extractors: Vec<(String, Box<dyn Fn(&Sample) -> f64>)> = (0..d)
            .map(|k| (format!("S_{}", k + 1), Box::new(move |s: &Sample| s.sum[k]) as Box<dyn Fn(&Sample) -> f64>))
            .collect();
        extractors.push(("H".into(), Box::new(|s: &Sample| s.energy)));
        for (name, f) in extractors {
            let series: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(&f).collect()).collect();
            let ess: f64 = series.iter().map(|s| effective_sample_size(s)).sum();
            observables.push(ObservableDiagnostics {
                name,
                ess,
                rhat: split_rhat(&series),
            });
        }
    }
    ChainStats {
        steps,
        accepted,
        acceptance_rate: if steps > 0 { accepted as f64 / steps as f64 } else { 0.0 },
        retained,
        observables,
    }
}

/// Point estimate with standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Draws from `ρ^{⊗n}` carrying self-normalized weights `exp(H)·1_{D_n^+}`.
#[derive(Debug, Clone)]
pub struct ImportanceSample {
    n: usize,
    dim: usize,
    sums: Vec<f64>,
    seconds: Vec<SymMat>,
    weights: Vec<f64>,
}

/// Self-normalized ESS below this flags the estimate as unreliable.
pub const IMPORTANCE_MIN_ESS: f64 = 50.0;

impl ImportanceSample {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sum(&self, i: usize) -> &[f64] {
        &self.sums[i * self.dim..(i + 1) * self.dim]
    }

    pub fn second(&self, i: usize) -> &SymMat {
        &self.seconds[i]
    }

    /// Self-normalized expectation with a delta-method standard error.
    pub fn expectation(&self, f: impl Fn(&[f64], &SymMat) -> f64) -> Estimate {
        let total: f64 = self.weights.iter().sum();
        if total <= 0.0 {
            return Estimate {
                mean: f64::NAN,
                std_error: f64::NAN,
            };
        }
        let values: Vec<f64> = (0..self.len()).map(|i| f(self.sum(i), self.second(i))).collect();
        let mean = self
            .weights
            .iter()
            .zip(&values)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            / total;
        let var = self
            .weights
            .iter()
            .zip(&values)
            .map(|(w, v)| (w * (v - mean)).powi(2))
            .sum::<f64>()
            / (total * total);
        Estimate {
            mean,
            std_error: var.sqrt(),
        }
    }

    /// Unbiased estimate of `Z_n = E_{ρ^{⊗n}}[exp(H) 1_{D_n^+}]`.
    pub fn normalization(&self) -> Estimate {
        let m = self.weights.len() as f64;
        let mean = self.weights.iter().sum::<f64>() / m;
        let var = self.weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        Estimate {
            mean,
            std_error: (var / m).sqrt(),
        }
    }

    /// Kish effective sample size `(Σw)² / Σw²`.
    pub fn ess(&self) -> f64 {
        let s: f64 = self.weights.iter().sum();
        let s2: f64 = self.weights.iter().map(|w| w * w).sum();
        if s2 > 0.0 {
            s * s / s2
        } else {
            0.0
        }
    }

    pub fn low_ess_warning(&self) -> bool {
        self.ess() < IMPORTANCE_MIN_ESS
    }
}

/// Independent-draw oracle for `μ̃_{n,ρ}`: the law of `(S_n, T_n)` is the
/// `ρ^{⊗n}` law reweighted by `exp(H)` on `D_n^+`. Weights are bounded by
/// `e^{n/2}`, so this is only practical for small `n`.
pub fn importance_oracle<R: Rng + ?Sized>(
    spec: &MeasureSpec,
    n: usize,
    draws: usize,
    rng: &mut R,
) -> ImportanceSample {
    let d = spec.dim();
    let mut sums = Vec::with_capacity(draws * d);
    let mut seconds = Vec::with_capacity(draws);
    let mut weights = Vec::with_capacity(draws);
    let mut x = vec![0.0; d];
    for _ in 0..draws {
        let mut sum = vec![0.0; d];
        let mut second = SymMat::zeros(d);
        for _ in 0..n {
            spec.sample_into(rng, &mut x);
            for (s, v) in sum.iter_mut().zip(&x) {
                *s += v;
            }
            second.add_outer(&x, 1.0);
        }
        let w = match second.inv_spd() {
            Ok(inv) => (0.5 * inv.quad_form(&sum)).exp(),
            Err(_) => 0.0,
        };
        sums.extend_from_slice(&sum);
        seconds.push(second);
        weights.push(w);
    }
    ImportanceSample {
        n,
        dim: d,
        sums,
        seconds,
        weights,
    }
}

/// Per-sample transforms of `(S_n, T_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationRow {
    /// `S_n / n^{3/4}`.
    pub raw: Vec<f64>,
    /// `T_n^{-1/2} S_n / n^{1/4}`.
    pub whitened: Vec<f64>,
    /// `S_n / n`.
    pub mean: Vec<f64>,
    /// `T_n / n`.
    pub second: SymMat,
    /// `‖T_n/n − Σ‖_F`.
    pub second_deviation: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FluctuationSet {
    pub rows: Vec<FluctuationRow>,
    /// Samples whose `T_n` was not positive definite.
    pub skipped: usize,
}

impl FluctuationSet {
    pub fn raw(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.raw.clone()).collect()
    }

    pub fn whitened(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.whitened.clone()).collect()
    }
}

pub fn fluctuation_statistics<'s>(
    samples: impl IntoIterator<Item = &'s Sample>,
    n: usize,
    sigma: &SymMat,
) -> FluctuationSet {
    let nf = n as f64;
    let mut out = FluctuationSet::default();
    for s in samples {
        let Ok(root) = s.second.inv_sqrt_spd() else {
            out.skipped += 1;
            continue;
        };
        let second = s.second.scaled(1.0 / nf);
        out.rows.push(FluctuationRow {
            raw: s.sum.iter().map(|v| v / nf.powf(0.75)).collect(),
            whitened: root.mul_vec(&s.sum).iter().map(|v| v / nf.powf(0.25)).collect(),
            mean: s.sum.iter().map(|v| v / nf).collect(),
            second_deviation: second.sub(sigma).frobenius_norm(),
            second,
        });
    }
    out
}

/// Adds `W / n^{1/4}` with `W` standard Gaussian to each whitened vector.
pub fn hs_statistic<R: Rng + ?Sized>(whitened: &[Vec<f64>], n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    hs_statistic_with(whitened, n, |w| {
        for v in w.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    })
}

/// [`hs_statistic`] with caller-supplied noise.
pub fn hs_statistic_with(
    whitened: &[Vec<f64>],
    n: usize,
    mut noise: impl FnMut(&mut [f64]),
) -> Vec<Vec<f64>> {
    let scale = (n as f64).powf(-0.25);
    whitened
        .iter()
        .map(|x| {
            let mut w = vec![0.0; x.len()];
            noise(&mut w);
            x.iter().zip(&w).map(|(a, b)| a + scale * b).collect()
        })
        .collect()
}

/// `g(y) = ln cosh y − y²/2`, accurate near 0.
pub fn g_function(y: f64) -> f64 {
    let a = y.abs();
    if a < 1e-2 {
        let y2 = y * y;
        let y4 = y2 * y2;
        // ln cosh y = y²/2 − y⁴/12 + y⁶/45 − 17y⁸/2520 + …
        return -y4 / 12.0 + y4 * y2 / 45.0 - 17.0 * y4 * y4 / 2520.0;
    }
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2 - 0.5 * y * y
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct GBoundSettings {
    pub radii: Vec<f64>,
    /// Random unit directions used in addition to the coordinate axes (d ≥ 2).
    pub random_directions: usize,
}

impl Default for GBoundSettings {
    fn default() -> Self {
        GBoundSettings {
            radii: (0..50).map(|k| 0.1 + 4.9 * k as f64 / 49.0).collect(),
            random_directions: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GBoundReport {
    pub n: usize,
    pub trials: usize,
    /// Draws discarded because `Σ U_j ᵗU_j` was singular.
    pub redraws: usize,
    /// Infimum over trials and grid of `−LHS·(1 + ‖z‖²/√n)/‖z‖⁴`.
    pub c_empirical: f64,
    pub worst_z: Vec<f64>,
    /// Largest `|Σ⟨z, a_i⟩² − ‖z‖²| / ‖z‖²` observed.
    pub max_identity_error: f64,
    pub lhs_at_zero: f64,
    pub bound_holds: bool,
    pub identity_holds: bool,
}

/// Tolerance on the identity `Σ_i ⟨z, a_{i,n}⟩² = ‖z‖²`.
pub const G_IDENTITY_TOLERANCE: f64 = 1e-8;

/// Empirical check of `Σ_i g(n^{1/4}⟨z, a_{i,n}⟩) ≤ −c‖z‖⁴/(1 + ‖z‖²/√n)`
/// with `a_{i,n} = (Σ_j U_j ᵗU_j)^{-1/2} U_i`, `U_j ~ ρ`.
pub fn g_bound_check<R: Rng + ?Sized>(
    spec: &MeasureSpec,
    n: usize,
    trials: usize,
    settings: &GBoundSettings,
    rng: &mut R,
) -> Result<GBoundReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("g-bound check needs at least one trial".into()));
    }
    let d = spec.dim();
    let mut directions: Vec<Vec<f64>> = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        directions.push(e.clone());
        e[i] = -1.0;
        directions.push(e);
    }
    if d >= 2 {
        for _ in 0..settings.random_directions {
            let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            directions.push(v);
        }
    }

    let nf = n as f64;
    let quarter = nf.powf(0.25);
    let mut report = GBoundReport {
        n,
        trials,
        redraws: 0,
        c_empirical: f64::INFINITY,
        worst_z: vec![0.0; d],
        max_identity_error: 0.0,
        lhs_at_zero: 0.0,
        bound_holds: false,
        identity_holds: false,
    };
    let mut u = vec![0.0; n * d];
    for _ in 0..trials {
        let root = loop {
            for chunk in u.chunks_exact_mut(d) {
                spec.sample_into(rng, chunk);
            }
            let mut second = SymMat::zeros(d);
            for chunk in u.chunks_exact(d) {
                second.add_outer(chunk, 1.0);
            }
            match second.inv_sqrt_spd() {
                Ok(r) => break r,
                Err(_) => report.redraws += 1,
            }
        };
        let a: Vec<Vec<f64>> = u.chunks_exact(d).map(|ui| root.mul_vec(ui)).collect();
        report.lhs_at_zero += a.iter().map(|_| g_function(0.0)).sum::<f64>();

        for dir in &directions {
            let dots: Vec<f64> = a
                .iter()
                .map(|ai| ai.iter().zip(dir).map(|(x, y)| x * y).sum())
                .collect();
            for &r in &settings.radii {
                if r <= 0.0 {
                    continue;
                }
                let z2 = r * r;
                let mut lhs = 0.0;
                let mut squares = 0.0;
                for &dot in &dots {
                    let t = r * dot;
                    squares += t * t;
                    lhs += g_function(quarter * t);
                }
                report.max_identity_error = report.max_identity_error.max((squares - z2).abs() / z2);
                let c = -lhs * (1.0 + z2 / nf.sqrt()) / (z2 * z2);
                if c < report.c_empirical {
                    report.c_empirical = c;
                    report.worst_z = dir.iter().map(|x| x * r).collect();
                }
            }
        }
    }
    report.bound_holds = report.c_empirical > 0.0;
    report.identity_holds = report.max_identity_error <= G_IDENTITY_TOLERANCE;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamiltonian_examples() {
        assert_eq!(hamiltonian(&[vec![1.0], vec![1.0]]), Some(1.0));
        assert_eq!(hamiltonian(&[vec![1.0], vec![-1.0]]), Some(0.0));
        let h = hamiltonian(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((h - 1.0).abs() < 1e-15);
        assert_eq!(hamiltonian(&[vec![1.0, 0.0], vec![-1.0, 0.0]]), None);
    }

    #[test]
    fn proposal_equal_to_current_is_accepted_unchanged() {
        let spec = MeasureSpec::standard_gaussian(2).unwrap();
        let mut rng = stream(5, 0);
        let config = Configuration::sample_in_domain(&spec, 6, &mut rng).unwrap();
        let before = config.points();
        let mut chain = MetropolisChain::new(&spec, config).unwrap();
        let p = chain.config().point(3).to_vec();
        assert!(chain.step_with(3, &p, || panic!("no uniform needed")));
        assert_eq!(chain.config().points(), before);
    }

    #[test]
    fn rademacher_acceptance_ratio() {
        // T_n ≡ n, so ΔH = (S'² − S²)/(2n).
        let spec = MeasureSpec::rademacher(1).unwrap();
        let config = Configuration::from_points(&[vec![1.0], vec![1.0], vec![1.0], vec![-1.0]]).unwrap();
        let mut chain = MetropolisChain::new(&spec, config).unwrap();
        let mut seen = None;
        let accepted = chain.step_with(0, &[-1.0], || {
            seen = Some(());
            0.999
        });
        assert!(seen.is_some());
        assert!(!accepted);
        let expected = ((0.0_f64 - 4.0) / 8.0).exp();
        let accepted = chain.step_with(0, &[-1.0], || expected - 1e-9);
        assert!(accepted);
        assert_eq!(chain.config().sum(), &[0.0]);
        assert_eq!(chain.config().second().get(0, 0), 4.0);
    }

    #[test]
    fn exits_from_domain_are_rejected() {
        let spec = MeasureSpec::axes(2).unwrap();
        let config = Configuration::from_points(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let mut chain = MetropolisChain::new(&spec, config).unwrap();
        assert!(!chain.step_with(1, &[-1.0, 0.0], || 0.0));
        assert!(chain.config().in_domain());
    }

    #[test]
    fn out_of_domain_start_resamples_until_inside() {
        let spec = MeasureSpec::axes(2).unwrap();
        let config = Configuration::from_points(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(!config.in_domain());
        let mut chain = MetropolisChain::new(&spec, config).unwrap();
        assert!(chain.step_with(0, &[0.0, 1.0], || panic!()));
        assert!(chain.config().in_domain());
        assert!((chain.energy() - hamiltonian(&chain.config().points()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn caches_stay_coherent() {
        for spec in [
            MeasureSpec::standard_gaussian(2).unwrap(),
            MeasureSpec::axes(3).unwrap(),
            MeasureSpec::uniform_ball(2, 1.5).unwrap(),
        ] {
            let mut rng = stream(9, 0);
            let config = Configuration::sample_in_domain(&spec, 12, &mut rng).unwrap();
            let mut chain = MetropolisChain::new(&spec, config).unwrap();
            for _ in 0..5000 {
                chain.step(&mut rng);
                let c = chain.config();
                let h = chain.energy();
                assert!(h >= -1e-12 && h <= 6.0 + 1e-9, "{h}");
                let _ = c;
            }
            let c = chain.config();
            let fresh = Configuration::from_points(&c.points()).unwrap();
            for (a, b) in c.sum().iter().zip(fresh.sum()) {
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
            }
            let dev = c.second().sub(fresh.second()).frobenius_norm();
            assert!(dev <= 1e-8 * fresh.second().frobenius_norm());
            let h = fresh.energy().unwrap();
            assert!((chain.energy() - h).abs() <= 1e-8 * h.max(1.0));
        }
    }

    #[test]
    fn run_chain_edge_cases() {
        let spec = MeasureSpec::rademacher(1).unwrap();
        let settings = ChainSettings {
            burn_in: 1000,
            steps: 0,
            thin: 10,
        };
        let run = run_chain(&spec, 100, &settings, &mut stream(1, 0)).unwrap();
        assert!(run.samples.is_empty());
        assert_eq!(run.stats, ChainStats::default());

        let settings = ChainSettings {
            burn_in: 1000,
            steps: 10_000,
            thin: 100,
        };
        let run = run_chain(&spec, 100, &settings, &mut stream(1, 0)).unwrap();
        assert_eq!(run.samples.len(), 100);
        assert!(run.samples.iter().all(|s| s.second.get(0, 0) == 100.0));
        let rate = run.stats.acceptance_rate;
        assert!((0.0..=1.0).contains(&rate));
        assert!(run.stats.min_ess() <= run.stats.retained as f64);
    }

    #[test]
    fn n_below_dimension_is_rejected() {
        let spec = MeasureSpec::standard_gaussian(3).unwrap();
        let err = Configuration::sample_in_domain(&spec, 2, &mut stream(0, 0));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn fluctuation_examples() {
        let sigma = SymMat::identity(1);
        let s = Sample {
            step: 1,
            sum: vec![6.0],
            second: SymMat::scalar(1, 16.0),
            energy: 0.0,
        };
        let f = fluctuation_statistics([&s], 16, &sigma);
        assert!((f.rows[0].raw[0] - 6.0 / 8.0).abs() < 1e-15);
        assert!((f.rows[0].whitened[0] - 6.0 / 8.0).abs() < 1e-15);

        let zero = Sample {
            sum: vec![0.0],
            ..s.clone()
        };
        let f = fluctuation_statistics([&zero], 16, &sigma);
        assert_eq!(f.rows[0].raw[0], 0.0);
        assert_eq!(f.rows[0].whitened[0], 0.0);

        let s2 = Sample {
            step: 1,
            sum: vec![2.0, 0.0],
            second: SymMat::scalar(2, 4.0),
            energy: 0.0,
        };
        let f = fluctuation_statistics([&s2], 4, &SymMat::identity(2));
        assert!((f.rows[0].whitened[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(f.rows[0].whitened[1], 0.0);
        assert_eq!(f.rows[0].second_deviation, 0.0);

        let singular = Sample {
            sum: vec![1.0, 0.0],
            second: SymMat::diagonal(&[1.0, 0.0]),
            ..s2
        };
        let f = fluctuation_statistics([&singular], 4, &SymMat::identity(2));
        assert_eq!((f.rows.len(), f.skipped), (0, 1));
    }

    #[test]
    fn hs_with_zero_noise_is_identity() {
        let w = vec![vec![0.3, -1.2], vec![2.0, 0.1]];
        assert_eq!(hs_statistic_with(&w, 100, |b| b.fill(0.0)), w);
    }

    #[test]
    fn g_function_behaviour() {
        assert_eq!(g_function(0.0), 0.0);
        for &y in &[1e-3, 5e-3, 0.02, 0.5, 3.0, 40.0, 800.0] {
            assert!(g_function(y) < 0.0);
            assert_eq!(g_function(y), g_function(-y));
        }
        // Series and closed form agree where they meet.
        let y: f64 = 0.0099;
        let closed = y.cosh().ln() - 0.5 * y * y;
        assert!((g_function(y) - closed).abs() < 1e-15);
        assert!((g_function(800.0) - (800.0 - std::f64::consts::LN_2 - 320_000.0)).abs() < 1e-9);
    }
}
