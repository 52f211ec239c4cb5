use std::path::{Path, PathBuf};

use cwsoc_core::ldp::RateGrid;
use cwsoc_core::limit::LimitMode;
use cwsoc_core::{MeasureSpec, SymMat};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Lln,
    Fluct,
    LimitLaw,
    LdpScan,
    IsingBaseline,
    OracleCompare,
    GBound,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Lln,
        Experiment::Fluct,
        Experiment::LimitLaw,
        Experiment::LdpScan,
        Experiment::IsingBaseline,
        Experiment::OracleCompare,
        Experiment::GBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Lln => "lln",
            Experiment::Fluct => "fluct",
            Experiment::LimitLaw => "limit-law",
            Experiment::LdpScan => "ldp-scan",
            Experiment::IsingBaseline => "ising-baseline",
            Experiment::OracleCompare => "oracle-compare",
            Experiment::GBound => "g-bound",
        }
    }
}

/// Verdict thresholds. Every field has a default and every verdict in a
/// result record names the threshold it used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Largest KS distance accepted by `fluct` (d = 1).
    pub ks: f64,
    /// Level of the energy permutation tests.
    pub alpha: f64,
    pub permutations: usize,
    /// Smallest pooled effective sample size for `fluct`.
    pub min_ess: f64,
    /// `lln`: the last median of `‖T_n/n − Σ‖_F` must be below this
    /// multiple of `‖Σ‖_F`.
    pub lln_fraction: f64,
    /// `oracle-compare`: allowed gap in combined standard errors.
    pub oracle_se: f64,
    /// `ising-baseline`: largest covariance deviation, relative to the
    /// largest entry of the target.
    pub covariance_relative: f64,
    /// `limit-law`: allowed deviation of the re-quadrature total from 1.
    pub normalization: f64,
    /// `ising-baseline` scaling: largest max/min ratio of `n^{3/4}` IQRs.
    pub max_critical_ratio: f64,
    /// `ising-baseline` scaling: smallest growth of the `√n` IQR.
    pub min_sqrt_growth: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            ks: 0.05,
            alpha: 0.05,
            permutations: 199,
            min_ess: 100.0,
            lln_fraction: 0.1,
            oracle_se: 3.0,
            covariance_relative: 0.1,
            normalization: 1e-6,
            max_critical_ratio: 3.0,
            min_sqrt_growth: 2.0,
        }
    }
}

fn default_chains() -> usize {
    4
}
fn default_burn_in() -> u64 {
    10
}
fn default_steps() -> u64 {
    100
}
fn default_thin() -> u64 {
    1
}
fn default_true() -> bool {
    true
}
fn default_max_test_samples() -> usize {
    2000
}
fn default_stride() -> usize {
    1
}
fn default_mode() -> LimitMode {
    LimitMode::Raw
}

/// Experiment description read from JSON. Chain lengths (`burn_in`,
/// `steps`, `thin`) are in sweeps of `n` single-site steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub measure: MeasureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_thin")]
    pub thin: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Output directory; never echoed into results.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
    /// Statistic compared against the limit law: `raw` is `S_n/n^{3/4}`,
    /// `whitened` is `T_n^{-1/2}S_n/n^{1/4}`.
    #[serde(default = "default_mode")]
    pub mode: LimitMode,
    /// Temperature field for `ising-baseline`; defaults to `2Σ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<SymMat>,
    /// Importance draws (`oracle-compare`) or limit-law draws (`limit-law`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    /// Trials for `g-bound`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default)]
    pub grid: RateGrid,
    /// Cap on the sample size fed to energy permutation tests.
    #[serde(default = "default_max_test_samples")]
    pub max_test_samples: usize,
    /// Use every `test_stride`-th retained sample in two-sample tests.
    #[serde(default = "default_stride")]
    pub test_stride: usize,
    #[serde(default = "default_true")]
    pub write_samples: bool,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the measure, sizes and seed.
    pub fn new(measure: MeasureSpec, experiment: Experiment, seed: u64) -> Self {
        ExperimentConfig {
            measure,
            experiment: Some(experiment),
            n: None,
            n_list: None,
            chains: default_chains(),
            burn_in: default_burn_in(),
            steps: default_steps(),
            thin: default_thin(),
            seed: Some(seed),
            output: None,
            mode: default_mode(),
            temperature: None,
            draws: None,
            trials: None,
            grid: RateGrid::default(),
            max_test_samples: default_max_test_samples(),
            test_stride: default_stride(),
            write_samples: true,
            thresholds: Thresholds::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    /// `n` values to run, from `n_list` or the single `n`.
    pub fn sizes(&self) -> Vec<usize> {
        match (&self.n_list, self.n) {
            (Some(list), _) => list.clone(),
            (None, Some(n)) => vec![n],
            (None, None) => vec![],
        }
    }

    /// Checks the config against the chosen experiment and reports every
    /// offending field at once.
    pub fn validate(&self, experiment: Experiment) -> Result<(), CliError> {
        let mut errors = Vec::new();
        let d = self.measure.dim();
        if let Some(e) = self.experiment {
            if e != experiment {
                errors.push(format!(
                    "experiment: config says `{}` but `{}` was requested",
                    e.name(),
                    experiment.name()
                ));
            }
        }
        if self.seed.is_none() {
            errors.push("seed: required (in the config or via --seed)".into());
        }
        let needs_n = !matches!(experiment, Experiment::LimitLaw | Experiment::LdpScan);
        let sizes = self.sizes();
        if needs_n && sizes.is_empty() {
            errors.push("n: required (or n_list)".into());
        }
        for &n in &sizes {
            if n < d {
                errors.push(format!("n: {n} is below the dimension {d}"));
            }
        }
        if let Some(list) = &self.n_list {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                errors.push("n_list: must be strictly increasing".into());
            }
        }
        if needs_n && experiment != Experiment::GBound {
            if self.chains == 0 {
                errors.push("chains: must be at least 1".into());
            }
            if self.thin == 0 {
                errors.push("thin: must be at least 1".into());
            }
        }
        if self.max_test_samples < 2 {
            errors.push("max_test_samples: must be at least 2".into());
        }
        if self.test_stride == 0 {
            errors.push("test_stride: must be at least 1".into());
        }
        if let Some(t) = &self.temperature {
            if t.dim() != d {
                errors.push(format!("temperature: dimension {} does not match the measure ({d})", t.dim()));
            } else if !t.is_pd() {
                errors.push("temperature: must be positive definite".into());
            }
        }
        if experiment == Experiment::LdpScan && !self.measure.has_bounded_support() {
            errors.push(format!(
                "measure: ldp-scan needs bounded support, got {}",
                self.measure.kind_name()
            ));
        }
        if experiment == Experiment::GBound && self.trials == Some(0) {
            errors.push("trials: must be at least 1".into());
        }
        if experiment == Experiment::OracleCompare && self.draws == Some(0) {
            errors.push("draws: must be at least 1".into());
        }
        let t = &self.thresholds;
        if !(0.0 < t.alpha && t.alpha < 1.0) {
            errors.push("thresholds.alpha: must lie in (0, 1)".into());
        }
        if t.permutations == 0 {
            errors.push("thresholds.permutations: must be at least 1".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errors))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_json(r#"{"measure": {"kind": "rademacher-product", "dim": 1}, "n": 10, "seed": 1}"#).unwrap();
        assert_eq!(c.chains, 4);
        assert_eq!(c.thresholds, Thresholds::default());
        c.validate(Experiment::Lln).unwrap();
    }

    #[test]
    fn all_problems_are_listed() {
        let c = ExperimentConfig::from_json(
            r#"{"measure": {"kind": "gaussian", "dim": 2, "covariance": [[1,0],[0,1]]}, "n": 1, "thin": 0}"#,
        )
        .unwrap();
        let Err(CliError::Config(errs)) = c.validate(Experiment::Fluct) else {
            panic!()
        };
        assert!(errs.iter().any(|e| e.starts_with("seed")));
        assert!(errs.iter().any(|e| e.starts_with("n:")));
        assert!(errs.iter().any(|e| e.starts_with("thin")));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"measure": {"kind": "rademacher", "dim": 1}, "seeed": 1}"#);
        match err {
            Err(CliError::Config(e)) => assert!(e[0].contains("seeed")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn output_is_not_echoed() {
        let mut c = ExperimentConfig::new(MeasureSpec::rademacher(1).unwrap(), Experiment::Lln, 3);
        c.output = Some("/tmp/x".into());
        let v = serde_json::to_value(&c).unwrap();
        assert!(v.get("output").is_none());
    }
}
