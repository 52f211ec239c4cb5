use cwsoc_core::diagnostics::{effective_sample_size, mean, median, variance};
use cwsoc_core::gof::{energy_permutation_test, ks_distance, PermutationSettings, PermutationTest, KS_CRITICAL_1PCT};
use cwsoc_core::ising::{
    critical_scaling_check, gaussian_check, gaussian_covariance, run_chains_fixed_t, FixedTModel,
    GaussianCheckSettings, ScalingSettings,
};
use cwsoc_core::ldp::{rate_point, verify_rate_minimum, RateGrid, SIGMA_GAP_TOLERANCE};
use cwsoc_core::limit::{LimitLaw, LimitMode};
use cwsoc_core::rng::{derive_seed, stream};
use cwsoc_core::soc::{
    fluctuation_statistics, g_bound_check, g_function, importance_oracle, run_chains, ChainSettings,
    GBoundSettings, MultiChainRun, Sample, G_IDENTITY_TOLERANCE,
};
use cwsoc_core::{MeasureSpec, SymMat};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;
use crate::output::PlotTable;
use crate::record::{Comparison, Verdict};

const HIST_BINS: usize = 60;

/// Everything an experiment produced before it is written to disk.
#[derive(Debug, Default)]
pub struct Outcome {
    pub metrics: Value,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
    pub plots: Vec<PlotTable>,
    pub runs: Vec<(usize, MultiChainRun)>,
}

pub fn dispatch(experiment: Experiment, config: &ExperimentConfig) -> Result<Outcome, CliError> {
    match experiment {
        Experiment::Lln => lln(config),
        Experiment::Fluct => fluct(config),
        Experiment::LimitLaw => limit_law(config),
        Experiment::LdpScan => ldp_scan(config),
        Experiment::IsingBaseline => ising_baseline(config),
        Experiment::OracleCompare => oracle_compare(config),
        Experiment::GBound => g_bound(config),
    }
}

fn seed(config: &ExperimentConfig) -> u64 {
    config.seed.expect("validated config has a seed")
}

fn chain_settings(config: &ExperimentConfig, n: usize) -> ChainSettings {
    let n = n as u64;
    ChainSettings {
        burn_in: config.burn_in * n,
        steps: config.steps * n,
        thin: config.thin * n,
    }
}

/// Verdict names carry the size when several are run.
fn label(name: &str, n: usize, many: bool) -> String {
    if many {
        format!("{name}@n={n}")
    } else {
        name.to_string()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Smallest ESS over the coordinates of `S_n`.
fn sum_ess(run: &MultiChainRun, d: usize) -> f64 {
    (1..=d)
        .filter_map(|k| run.stats.ess(&format!("S_{k}")))
        .fold(f64::INFINITY, f64::min)
}

/// Every `stride`-th element, then thinned evenly down to at most `cap`.
fn subsample<T: Clone>(xs: &[T], stride: usize, cap: usize) -> Vec<T> {
    let strided: Vec<T> = xs.iter().step_by(stride.max(1)).cloned().collect();
    let step = strided.len().div_ceil(cap.max(1)).max(1);
    strided.into_iter().step_by(step).collect()
}

fn permutation_settings(config: &ExperimentConfig, salt: u64) -> PermutationSettings {
    PermutationSettings {
        permutations: config.thresholds.permutations,
        alpha: config.thresholds.alpha,
        seed: derive_seed(seed(config), salt),
    }
}

fn lln(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = &config.measure;
    let sigma = spec.covariance()?;
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    let mut scaling = PlotTable::new("lln_scaling", &["n", "median_mean_norm", "median_second_deviation"]);
    let (mut means, mut devs) = (Vec::new(), Vec::new());
    for n in config.sizes() {
        let run = run_chains(spec, n, &chain_settings(config, n), derive_seed(seed(config), n as u64), config.chains)?;
        let set = fluctuation_statistics(run.samples(), n, &sigma);
        if set.skipped > 0 {
            out.warnings.push(format!("n={n}: {} samples with singular T_n", set.skipped));
        }
        let m = median(&set.rows.iter().map(|r| norm(&r.mean)).collect::<Vec<_>>());
        let dev = median(&set.rows.iter().map(|r| r.second_deviation).collect::<Vec<_>>());
        scaling.rows.push(vec![n as f64, m, dev]);
        rows.push(json!({
            "n": n,
            "median_mean_norm": m,
            "median_second_deviation": dev,
            "samples": set.rows.len(),
            "acceptance_rate": run.stats.acceptance_rate,
            "max_rhat": run.stats.max_rhat(),
        }));
        means.push(m);
        devs.push(dev);
        out.runs.push((n, run));
    }
    // Strict decrease; two exact zeros (e.g. a constant T_n) count as flat.
    let increases = |xs: &[f64]| {
        xs.windows(2)
            .filter(|w| !(w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0)))
            .count() as f64
    };
    out.verdicts.push(Verdict::new("mean_norm_increases", increases(&means), Comparison::AtMost, 0.0));
    out.verdicts.push(Verdict::new("second_deviation_increases", increases(&devs), Comparison::AtMost, 0.0));
    let scale = sigma.frobenius_norm();
    out.verdicts.push(Verdict::new(
        "final_second_deviation_fraction",
        devs.last().copied().unwrap_or(f64::NAN) / scale,
        Comparison::Below,
        config.thresholds.lln_fraction,
    ));
    out.metrics = json!({ "sigma_frobenius": scale, "sizes": rows });
    out.plots.push(scaling);
    Ok(out)
}

/// Marginal density of coordinate `axis` of a 2-d law, by Simpson in the other.
fn marginal_2d(law: &LimitLaw, axis: usize, z: f64) -> f64 {
    let l = law.half_width();
    let m = 400;
    let h = 2.0 * l / m as f64;
    let mut s = 0.0;
    for k in 0..=m {
        let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        let other = -l + k as f64 * h;
        let p = if axis == 0 { [z, other] } else { [other, z] };
        s += w * law.density(&p);
    }
    s * h / 3.0
}

fn marginal_plots(prefix: &str, law: &LimitLaw, points: &[Vec<f64>]) -> Vec<PlotTable> {
    let d = law.dim();
    (0..d)
        .map(|k| {
            let xs: Vec<f64> = points.iter().map(|p| p[k]).collect();
            let name = if d == 1 { prefix.to_string() } else { format!("{prefix}_{}", k + 1) };
            PlotTable::density(name, &xs, HIST_BINS, |z| match d {
                1 => law.density(&[z]),
                2 => marginal_2d(law, k, z),
                _ => f64::NAN,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct FluctRow {
    n: usize,
    samples: usize,
    skipped: usize,
    ess: f64,
    acceptance_rate: f64,
    max_rhat: f64,
    ks: Option<f64>,
    ks_critical_1pct: Option<f64>,
    energy_test: Option<PermutationTest>,
}

fn fluct(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = &config.measure;
    let d = spec.dim();
    let sigma = spec.covariance()?;
    let law = LimitLaw::from_spec(spec, config.mode)?;
    let sizes = config.sizes();
    let many = sizes.len() > 1;
    let t = &config.thresholds;
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for n in sizes {
        let run = run_chains(spec, n, &chain_settings(config, n), derive_seed(seed(config), n as u64), config.chains)?;
        let set = fluctuation_statistics(run.samples(), n, &sigma);
        if set.skipped > 0 {
            out.warnings.push(format!("n={n}: {} samples with singular T_n", set.skipped));
        }
        let points = match config.mode {
            LimitMode::Raw => set.raw(),
            LimitMode::Whitened => set.whitened(),
        };
        let ess = sum_ess(&run, d);
        let mut row = FluctRow {
            n,
            samples: points.len(),
            skipped: set.skipped,
            ess,
            acceptance_rate: run.stats.acceptance_rate,
            max_rhat: run.stats.max_rhat(),
            ks: None,
            ks_critical_1pct: None,
            energy_test: None,
        };
        if d == 1 {
            let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
            let ks = ks_distance(&xs, |z| law.cdf_1d(z).unwrap_or(f64::NAN));
            row.ks = Some(ks);
            row.ks_critical_1pct = Some(KS_CRITICAL_1PCT / ess.sqrt());
            out.verdicts.push(Verdict::new(label("ks", n, many), ks, Comparison::Below, t.ks));
        } else {
            let picked = subsample(&points, config.test_stride, config.max_test_samples);
            let reference = law.sample_seeded(picked.len(), derive_seed(seed(config), 0xF1 ^ n as u64))?;
            let test = energy_permutation_test(&picked, &reference, &permutation_settings(config, 0xE7 ^ n as u64))?;
            out.verdicts.push(Verdict::new(label("energy_p_value", n, many), test.p_value, Comparison::AtLeast, t.alpha));
            row.energy_test = Some(test);
        }
        out.verdicts.push(Verdict::new(label("ess", n, many), ess, Comparison::AtLeast, t.min_ess));
        let prefix = if many { format!("fluct_n{n}") } else { "fluct".into() };
        out.plots.extend(marginal_plots(&prefix, &law, &points));
        rows.push(row);
        out.runs.push((n, run));
    }
    out.metrics = json!({ "law": law.export(), "sizes": rows });
    Ok(out)
}

fn limit_law(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let law = LimitLaw::from_spec(&config.measure, config.mode)?;
    let d = law.dim();
    let t = &config.thresholds;
    let mut out = Outcome::default();
    let mut metrics = json!({ "law": law.export(), "acceptance_rate": law.acceptance_rate() });
    // Independent re-quadrature of the normalised density on a different grid.
    let check_nodes = match d {
        1 | 2 => Some(257),
        3 => Some(97),
        _ => None,
    };
    if let Some(nodes) = check_nodes {
        let table = law.density_table(nodes)?;
        let h = 2.0 * law.half_width() / (nodes - 1) as f64;
        let weight = |i: usize| if i == 0 || i == nodes - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let total: f64 = table
            .iter()
            .enumerate()
            .map(|(flat, (_, p))| {
                let mut w = 1.0;
                let mut r = flat;
                for _ in 0..d {
                    w *= weight(r % nodes) * h / 3.0;
                    r /= nodes;
                }
                w * p
            })
            .sum();
        metrics["requadrature_total"] = json!(total);
        out.verdicts.push(Verdict::new(
            "normalization_error",
            (total - 1.0).abs(),
            Comparison::AtMost,
            t.normalization,
        ));
    } else {
        let rel = law.normalization_std_error() / law.normalization();
        metrics["normalization_relative_std_error"] = json!(rel);
        out.verdicts.push(Verdict::new("normalization_relative_std_error", rel, Comparison::AtMost, 1e-2));
    }
    let draws = config.draws.unwrap_or(10_000);
    let sample = law.sample_seeded(draws, seed(config))?;
    if d == 1 {
        let xs: Vec<f64> = sample.iter().map(|p| p[0]).collect();
        let ks = ks_distance(&xs, |z| law.cdf_1d(z).unwrap_or(f64::NAN));
        let critical = KS_CRITICAL_1PCT / (draws as f64).sqrt();
        metrics["sampler_ks"] = json!(ks);
        out.verdicts.push(Verdict::new("sampler_ks", ks, Comparison::Below, critical));
    }
    metrics["draws"] = json!(draws);
    out.plots.extend(marginal_plots("limit_law", &law, &sample));
    if d <= 2 {
        let nodes = if d == 1 { 401 } else { 101 };
        let mut cols: Vec<String> = (1..=d).map(|k| format!("z_{k}")).collect();
        cols.push("density".into());
        let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
        let mut grid = PlotTable::new("limit_density_grid", &col_refs);
        for (z, p) in law.density_table(nodes)? {
            let mut row = z;
            row.push(p);
            grid.rows.push(row);
        }
        out.plots.push(grid);
    }
    out.metrics = metrics;
    Ok(out)
}

fn ldp_scan(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = &config.measure;
    let grid = RateGrid {
        seed: derive_seed(seed(config), 0x1D),
        ..config.grid.clone()
    };
    let report = verify_rate_minimum(spec, &grid)?;
    let mut out = Outcome::default();
    out.verdicts.push(Verdict::new(
        "gap_at_sigma",
        report.gap_at_sigma.abs(),
        Comparison::AtMost,
        SIGMA_GAP_TOLERANCE,
    ));
    let sigma = spec.covariance()?;
    let argmin = &report.min_location;
    let argmin_distance = (norm(&argmin.x).powi(2) + argmin.m.sub(&sigma).frobenius_norm().powi(2)).sqrt();
    out.verdicts.push(Verdict::new("argmin_distance", argmin_distance, Comparison::AtMost, grid.epsilon));
    out.verdicts.push(Verdict::new("violations", report.violations.len() as f64, Comparison::AtMost, 0.0));
    if report.grid.unconverged > 0 {
        out.warnings.push(format!("{} grid points did not converge", report.grid.unconverged));
    }
    // Profile along the first coordinate with M = Σ.
    let mut profile = PlotTable::new("ldp_profile", &["x_1", "F", "I", "gap"]);
    let reach = grid.x_fraction * sigma.get(0, 0).sqrt();
    for k in 0..=40 {
        let mut x = vec![0.0; spec.dim()];
        x[0] = -reach + 2.0 * reach * k as f64 / 40.0;
        if let Ok(p) = rate_point(spec, &x, &sigma) {
            profile.rows.push(vec![x[0], p.f, p.rate, p.gap]);
        }
    }
    out.plots.push(profile);
    let shown = report.violations.len().min(20);
    out.metrics = json!({
        "min_location": report.min_location,
        "min_value": report.min_value,
        "gap_at_sigma": report.gap_at_sigma,
        "grid": report.grid,
        "violation_count": report.violations.len(),
        "violations": &report.violations[..shown],
        "passed": report.passed,
    });
    Ok(out)
}

fn ising_baseline(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = &config.measure;
    let sigma = spec.covariance()?;
    let temperature = config.temperature.clone().unwrap_or_else(|| sigma.scaled(2.0));
    let t = &config.thresholds;
    let sizes = config.sizes();
    let many = sizes.len() > 1;
    let mut out = Outcome::default();
    let Some(target) = gaussian_covariance(&temperature, &sigma)? else {
        return critical_baseline(config, &temperature, &sigma);
    };
    let settings = GaussianCheckSettings {
        max_test_samples: config.max_test_samples,
        permutations: permutation_settings(config, 0x15),
    };
    let mut rows = Vec::new();
    for n in sizes {
        let model = FixedTModel::new(spec.clone(), temperature.clone(), n)?;
        let run = run_chains_fixed_t(&model, &chain_settings(config, n), derive_seed(seed(config), n as u64), config.chains)?;
        let picked: Vec<Sample> = subsample(&run.pooled(), config.test_stride, usize::MAX);
        let report = gaussian_check(&picked, n, &temperature, &sigma, &settings)?;
        out.verdicts.push(Verdict::new(
            label("covariance_relative_deviation", n, many),
            report.max_relative_deviation,
            Comparison::Below,
            t.covariance_relative,
        ));
        if let Some(test) = &report.normality {
            out.verdicts.push(Verdict::new(label("normality_p_value", n, many), test.p_value, Comparison::AtLeast, t.alpha));
        }
        let xs: Vec<f64> = run.samples().map(|s| s.sum[0] / (n as f64).sqrt()).collect();
        let var = target.get(0, 0);
        let name = if many { format!("ising_n{n}") } else { "ising".into() };
        out.plots.push(PlotTable::density(name, &xs, HIST_BINS, |z| {
            (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
        }));
        rows.push(json!({
            "n": n,
            "report": report,
            "acceptance_rate": run.stats.acceptance_rate,
            "min_ess": sum_ess(&run, spec.dim()),
        }));
        out.runs.push((n, run));
    }
    out.metrics = json!({ "temperature": temperature, "target": target, "sizes": rows });
    Ok(out)
}

/// `T = cΣ` with `c ≤ 1`: the Gaussian limit does not apply; compare the
/// spread of `S_n` under the two scalings across `n_list`.
fn critical_baseline(config: &ExperimentConfig, temperature: &SymMat, sigma: &SymMat) -> Result<Outcome, CliError> {
    let factor = temperature.get(0, 0) / sigma.get(0, 0);
    if temperature.sub(&sigma.scaled(factor)).max_abs() > 1e-12 * sigma.max_abs() {
        return Err(CliError::Config(vec![
            "temperature: outside the Gaussian regime only multiples of Σ are supported".into(),
        ]));
    }
    let sizes = config.sizes();
    if sizes.len() < 2 {
        return Err(CliError::Config(vec![
            "n_list: the critical scaling check needs at least two sizes".into(),
        ]));
    }
    let t = &config.thresholds;
    let settings = ScalingSettings {
        chains: config.chains,
        burn_in_sweeps: config.burn_in,
        retained: (config.steps / config.thin).max(1),
        thin_sweeps: config.thin,
        temperature_factor: factor,
        max_critical_ratio: t.max_critical_ratio,
        min_sqrt_growth: t.min_sqrt_growth,
        seed: seed(config),
    };
    let report = critical_scaling_check(&config.measure, &sizes, &settings)?;
    let mut out = Outcome::default();
    out.verdicts.push(Verdict::new("critical_iqr_ratio", report.critical_ratio, Comparison::AtMost, t.max_critical_ratio));
    out.verdicts.push(Verdict::new("sqrt_iqr_growth", report.sqrt_growth, Comparison::AtLeast, t.min_sqrt_growth));
    let mut plot = PlotTable::new("ising_scaling", &["n", "iqr_critical", "iqr_sqrt"]);
    for (k, n) in report.n_list.iter().enumerate() {
        plot.rows.push(vec![*n as f64, report.iqr_critical[k], report.iqr_sqrt[k]]);
    }
    out.plots.push(plot);
    out.metrics = json!({ "temperature": temperature, "gaussian_regime": false, "scaling": report });
    Ok(out)
}

#[derive(Serialize)]
struct Comparand {
    observable: String,
    mcmc: f64,
    mcmc_std_error: f64,
    oracle: f64,
    oracle_std_error: f64,
    /// `(|Δ| − slack) / combined SE`, floored at 0.
    z: f64,
}

type Observable = (String, Box<dyn Fn(&[f64], &SymMat) -> f64 + Sync>);

fn observables(d: usize) -> Vec<Observable> {
    let mut v: Vec<Observable> = Vec::new();
    for k in 0..d {
        v.push((format!("S_{}", k + 1), Box::new(move |s: &[f64], _: &SymMat| s[k])));
    }
    for i in 0..d {
        for j in i..d {
            v.push((format!("SS_{}{}", i + 1, j + 1), Box::new(move |s: &[f64], _: &SymMat| s[i] * s[j])));
        }
    }
    for i in 0..d {
        for j in i..d {
            v.push((format!("T_{}{}", i + 1, j + 1), Box::new(move |_: &[f64], t: &SymMat| t.get(i, j))));
        }
    }
    v
}

/// Pooled mean with a standard error from per-chain effective sizes.
fn mcmc_estimate(run: &MultiChainRun, f: &(dyn Fn(&[f64], &SymMat) -> f64 + Sync)) -> (f64, f64) {
    let series: Vec<Vec<f64>> = run
        .chains
        .iter()
        .map(|c| c.samples.iter().map(|s| f(&s.sum, &s.second)).collect())
        .collect();
    let pooled: Vec<f64> = series.iter().flatten().copied().collect();
    let ess: f64 = series.iter().map(|s| effective_sample_size(s)).sum();
    (mean(&pooled), (variance(&pooled) / ess.max(1.0)).sqrt())
}

fn oracle_compare(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = &config.measure;
    let d = spec.dim();
    let draws = config.draws.unwrap_or(100_000);
    let sizes = config.sizes();
    let many = sizes.len() > 1;
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for n in sizes {
        let run = run_chains(spec, n, &chain_settings(config, n), derive_seed(seed(config), n as u64), config.chains)?;
        let oracle = importance_oracle(spec, n, draws, &mut stream(derive_seed(seed(config), 0x0AC1E), n as u64));
        if oracle.low_ess_warning() {
            out.warnings.push(format!("n={n}: importance ESS {:.1} is low", oracle.ess()));
        }
        let mut comparands = Vec::new();
        for (name, f) in observables(d) {
            let (m, se) = mcmc_estimate(&run, f.as_ref());
            let o = oracle.expectation(|s, t| f(s, t));
            let combined = (se * se + o.std_error * o.std_error).sqrt();
            let slack = 1e-9 * (1.0 + o.mean.abs());
            let excess = ((m - o.mean).abs() - slack).max(0.0);
            let z = if excess == 0.0 { 0.0 } else { excess / combined };
            comparands.push(Comparand {
                observable: name,
                mcmc: m,
                mcmc_std_error: se,
                oracle: o.mean,
                oracle_std_error: o.std_error,
                z,
            });
        }
        let worst = comparands.iter().map(|c| c.z).fold(0.0, f64::max);
        out.verdicts.push(Verdict::new(
            label("max_standardized_gap", n, many),
            worst,
            Comparison::AtMost,
            config.thresholds.oracle_se,
        ));
        let z_n = oracle.normalization();
        rows.push(json!({
            "n": n,
            "comparisons": comparands,
            "importance_ess": oracle.ess(),
            "Z_n": z_n,
            "acceptance_rate": run.stats.acceptance_rate,
        }));
        out.runs.push((n, run));
    }
    out.metrics = json!({ "draws": draws, "sizes": rows });
    Ok(out)
}

fn g_bound(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec: &MeasureSpec = &config.measure;
    let trials = config.trials.unwrap_or(100);
    let sizes = config.sizes();
    let many = sizes.len() > 1;
    let settings = GBoundSettings::default();
    let mut out = Outcome::default();
    let mut reports = Vec::new();
    for n in sizes {
        let report = g_bound_check(spec, n, trials, &settings, &mut stream(derive_seed(seed(config), 0x6B), n as u64))?;
        out.verdicts.push(Verdict::new(label("c_empirical", n, many), report.c_empirical, Comparison::Above, 0.0));
        out.verdicts.push(Verdict::new(
            label("identity_error", n, many),
            report.max_identity_error,
            Comparison::AtMost,
            G_IDENTITY_TOLERANCE,
        ));
        out.verdicts.push(Verdict::new(label("lhs_at_zero", n, many), report.lhs_at_zero.abs(), Comparison::AtMost, 1e-12));
        reports.push(report);
    }
    let mut curve = PlotTable::new("g_function", &["y", "g", "quartic_bound"]);
    for k in 0..=200 {
        let y = -5.0 + 10.0 * k as f64 / 200.0;
        curve.rows.push(vec![y, g_function(y), -y.powi(4) / 12.0 / (1.0 + y * y / 3.0)]);
    }
    out.plots.push(curve);
    out.metrics = json!({ "trials": trials, "sizes": reports });
    Ok(out)
}
