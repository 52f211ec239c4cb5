use std::fs;
use std::path::Path;

use cwsoc_core::soc::{MultiChainRun, Sample};

use crate::error::CliError;

/// A numeric table written to `plotdata/<name>.csv`. Missing values
/// (`NaN`) are written as empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub const DENSITY_COLUMNS: [&str; 3] = ["bin_center", "empirical_density", "theoretical_density"];

impl PlotTable {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        PlotTable {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Histogram of `values` against a reference density evaluated at the
    /// bin centres. `theory` may return `NaN` when no reference exists.
    pub fn density(name: impl Into<String>, values: &[f64], bins: usize, theory: impl Fn(f64) -> f64) -> Self {
        let mut t = PlotTable::new(name, &DENSITY_COLUMNS);
        for (center, p) in histogram(values, bins) {
            t.rows.push(vec![center, p, theory(center)]);
        }
        t
    }
}

/// Equal-width histogram over `[min, max]` of the data, normalised so that
/// `Σ density · width = 1`. Empty input gives no bins.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64)> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() || bins == 0 {
        return vec![];
    }
    let mut lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in &finite {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let total = finite.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (lo + (k as f64 + 0.5) * width, c as f64 / (total * width)))
        .collect()
}

pub fn emit_plot_data(tables: &[PlotTable], out_dir: &Path) -> Result<(), CliError> {
    let dir = out_dir.join("plotdata");
    fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&t.columns)?;
        for row in &t.rows {
            w.write_record(row.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }))?;
        }
        w.flush().map_err(CliError::io(&path))?;
    }
    Ok(())
}

pub fn sample_header(d: usize) -> Vec<String> {
    let mut h = vec!["n".to_string(), "chain".into(), "step".into()];
    h.extend((1..=d).map(|k| format!("S_{k}")));
    for i in 1..=d {
        for j in i..=d {
            h.push(format!("T_{i}{j}"));
        }
    }
    h.push("H".into());
    h
}

fn sample_record(n: usize, chain: usize, s: &Sample) -> Vec<String> {
    let mut r = vec![n.to_string(), chain.to_string(), s.step.to_string()];
    r.extend(s.sum.iter().map(|v| v.to_string()));
    r.extend(s.second.upper_triangle().iter().map(|v| v.to_string()));
    r.push(s.energy.to_string());
    r
}

/// Writes every retained sample of every run as one CSV row.
pub fn write_samples(path: &Path, d: usize, runs: &[(usize, MultiChainRun)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(sample_header(d))?;
    for (n, run) in runs {
        for (c, chain) in run.chains.iter().enumerate() {
            for s in &chain.samples {
                w.write_record(sample_record(*n, c, s))?;
            }
        }
    }
    w.flush().map_err(CliError::io(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_mass_is_one() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 37.0).collect();
        let h = histogram(&xs, 25);
        let width = h[1].0 - h[0].0;
        let mass: f64 = h.iter().map(|(_, p)| p * width).sum();
        assert!((mass - 1.0).abs() < 1e-9);
        assert!(histogram(&[], 10).is_empty());
        let flat = histogram(&[2.0; 5], 4);
        assert!((flat.iter().map(|(_, p)| p * 0.25).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn header_lists_upper_triangle() {
        assert_eq!(
            sample_header(2),
            ["n", "chain", "step", "S_1", "S_2", "T_11", "T_12", "T_22", "H"]
        );
    }
}
