use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<")]
    Below,
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Above,
    #[serde(rename = ">=")]
    AtLeast,
}

impl Comparison {
    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparison::Below => value < threshold,
            Comparison::AtMost => value <= threshold,
            Comparison::Above => value > threshold,
            Comparison::AtLeast => value >= threshold,
        }
    }
}

/// One pass/fail decision: `value <comparison> threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub passed: bool,
}

impl Verdict {
    pub fn new(name: impl Into<String>, value: f64, comparison: Comparison, threshold: f64) -> Self {
        Verdict {
            name: name.into(),
            value,
            comparison,
            threshold,
            passed: comparison.holds(value, threshold),
        }
    }

    /// A boolean check, recorded as `1 >= 1` or `0 >= 1`.
    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Comparison::AtLeast, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub metrics: serde_json::Value,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
    pub passed: bool,
}

impl ResultRecord {
    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
