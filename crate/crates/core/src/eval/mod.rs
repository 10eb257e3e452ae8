//! End-to-end experiments: generate a trace, defend it, observe it as one of
//! the adversaries, run both attacks and score them.

mod pipeline;
mod report;
mod score;
mod sweep;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AnalysisParams, DetectorParams};
use crate::defenses::DefenseConfig;
use crate::trace::AdversaryView;

pub use pipeline::{analyze, cross_validate, prepare, run_experiment, stream_features, Prepared};
pub use report::{
    write_report, BehaviorReport, ClassMetrics, DnsReport, EvaluationReport, FeatureRow, IdentificationReport,
};
pub use score::{score_events, EventScore};
pub use sweep::{sweep, SweepGrid, SweepOutcome, SweepRow};

pub const DEFAULT_MATCH_TOLERANCE_S: f64 = 30.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: String, message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

impl EvalError {
    pub(crate) fn stage(stage: impl Into<String>, err: impl std::fmt::Display) -> Self {
        EvalError::Stage {
            stage: stage.into(),
            message: err.to_string(),
        }
    }

    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        EvalError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }
}

/// One experiment, as read from a TOML config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `builtin:<name>` or a scenario file path.
    #[serde(default = "default_scenario")]
    pub scenario: String,
    #[serde(default = "default_view")]
    pub view: AdversaryView,
    /// Master seed; replaces the scenario's own seed when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub analysis: AnalysisParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
    #[serde(default)]
    pub detector: DetectorParams,
    #[serde(default = "default_tolerance")]
    pub match_tolerance_s: f64,
    #[serde(default, rename = "defense", skip_serializing_if = "Vec::is_empty")]
    pub defenses: Vec<DefenseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_scenario() -> String {
    "builtin:default".to_string()
}

fn default_view() -> AdversaryView {
    AdversaryView::LastMile
}

fn default_tolerance() -> f64 {
    DEFAULT_MATCH_TOLERANCE_S
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: default_scenario(),
            view: default_view(),
            seed: None,
            analysis: AnalysisParams::default(),
            sweep: None,
            detector: DetectorParams::default(),
            match_tolerance_s: DEFAULT_MATCH_TOLERANCE_S,
            defenses: Vec::new(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, EvalError> {
        let config: Self = toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let cfg = |e: &dyn std::fmt::Display| EvalError::Config(e.to_string());
        self.analysis.validate().map_err(|e| cfg(&e))?;
        self.detector.validate().map_err(|e| cfg(&e))?;
        if !(self.match_tolerance_s.is_finite() && self.match_tolerance_s >= 0.0) {
            return Err(EvalError::Config("match_tolerance_s must be non-negative".into()));
        }
        if let Some(grid) = &self.sweep {
            grid.validate()?;
        }
        for d in &self.defenses {
            d.validate().map_err(|e| cfg(&e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.analysis.k, 5);
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
scenario = "builtin:clean_burst"
view = "wifi"
seed = 7
match_tolerance_s = 15.0

[analysis]
s = 5.0
w = 60.0
k = 3

[sweep]
s = [1.0, 5.0]
w = [60.0]
k = [1, 3]

[detector]
baseline_window_s = 600.0
threshold = 3.0
sustain_s = 20.0
merge_gap_s = 30.0

[[defense]]
kind = "inject_decoys"
multiplier = 1.0
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.view, AdversaryView::WifiEavesdropper);
        assert_eq!(c.analysis.folds, 10);
        assert_eq!(c.defenses.len(), 1);
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ExperimentConfig::from_toml("[analysis]\ns = 7.0\nw = 60.0\nk = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[sweep]\ns = []\nw = [60.0]\nk = [1]\n").is_err());
    }
}
