//! MCMC output diagnostics: effective sample size and split-chain R̂.

use serde::Serialize;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two points.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn interquartile_range(xs: &[f64]) -> f64 {
    quantile(xs, 0.75) - quantile(xs, 0.25)
}

fn autocovariance(xs: &[f64], m: f64, lag: usize) -> f64 {
    let n = xs.len();
    xs[..n - lag]
        .iter()
        .zip(&xs[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Integrated autocorrelation time via Geyer's initial monotone sequence.
pub fn integrated_autocorrelation_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return 1.0;
    }
    let m = mean(xs);
    let c0 = autocovariance(xs, m, 0);
    if c0 <= 0.0 {
        return 1.0;
    }
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (autocovariance(xs, m, lag) + autocovariance(xs, m, lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    tau.max(1.0 / n as f64)
}

/// Effective sample size of one series, capped at its length.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    if variance(xs) == 0.0 {
        return n;
    }
    (n / integrated_autocorrelation_time(xs)).min(n)
}

/// Sum of per-chain effective sample sizes.
pub fn multi_chain_ess(chains: &[Vec<f64>]) -> f64 {
    chains.iter().map(|c| effective_sample_size(c)).sum()
}

/// Split-chain potential scale reduction. Every chain is cut in half and
/// the halves are compared as separate chains. Returns 1 for constant or
/// too-short input.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::new();
    for c in chains {
        let h = c.len() / 2;
        if h >= 2 {
            halves.push(&c[..h]);
            halves.push(&c[c.len() - h..]);
        }
    }
    if halves.len() < 2 {
        return 1.0;
    }
    let len = halves.iter().map(|h| h.len()).min().unwrap();
    let halves: Vec<&[f64]> = halves.iter().map(|h| &h[..len]).collect();
    let nf = len as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let within = mean(&halves.iter().map(|h| variance(h)).collect::<Vec<_>>());
    let between = nf * variance(&means);
    if within <= 0.0 {
        return 1.0;
    }
    let pooled = (nf - 1.0) / nf * within + between / nf;
    (pooled / within).sqrt()
}

/// Per-observable convergence summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableDiagnostics {
    pub name: String,
    pub ess: f64,
    pub rhat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ChainStats {
    pub steps: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
    pub retained: usize,
    pub observables: Vec<ObservableDiagnostics>,
}

impl ChainStats {
    pub fn ess(&self, name: &str) -> Option<f64> {
        self.observables.iter().find(|o| o.name == name).map(|o| o.ess)
    }

    pub fn min_ess(&self) -> f64 {
        self.observables
            .iter()
            .map(|o| o.ess)
            .fold(f64::INFINITY, f64::min)
            .min(self.retained as f64)
    }

    pub fn max_rhat(&self) -> f64 {
        self.observables.iter().map(|o| o.rhat).fold(1.0, f64::max)
    }
}
