use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvalError, EventScore, ExperimentConfig, SweepOutcome};
use crate::adversary::{AnalysisParams, ConfusionMatrix};
use crate::defenses::DefenseCost;
use crate::trace::AdversaryView;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub params: AnalysisParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub windows: usize,
    pub mean_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    pub fold_sizes: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DnsReport {
    pub fraction_identified: f64,
    /// Device type found for each stream, `null` when none.
    pub streams: BTreeMap<String, Option<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorReport {
    pub sample_period_s: f64,
    pub detected: usize,
    pub real_events: usize,
    pub decoy_events: usize,
    pub score: EventScore,
}

/// One window of the feature scatter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub stream: String,
    pub label: String,
    pub window_index: usize,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scenario: String,
    pub view: AdversaryView,
    pub master_seed: u64,
    pub duration_s: f64,
    pub streams: Vec<String>,
    pub identification: Option<IdentificationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identification_note: Option<String>,
    pub dns_identification: DnsReport,
    pub behavior: BehaviorReport,
    pub costs: Vec<DefenseCost>,
    pub skipped_defenses: Vec<String>,
    /// Decoys seen by the radio eavesdropper are taken to be indistinguishable
    /// from real frames; nothing here models locating the transmitter.
    pub wifi_spoofing_assumed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepOutcome>,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub features: Vec<FeatureRow>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn features_csv(&self) -> String {
        let mut out = String::from("stream,label,window_index,mean,stddev\n");
        for f in &self.features {
            out.push_str(&format!("{},{},{},{},{}\n", f.stream, f.label, f.window_index, f.mean, f.stddev));
        }
        out
    }

    pub fn costs_csv(&self) -> String {
        let mut out = format!("{}\n", DefenseCost::csv_header());
        for c in &self.costs {
            out.push_str(&c.csv_row());
            out.push('\n');
        }
        out
    }

    /// Short human-readable summary.
    pub fn summary(&self) -> String {
        let mut lines = vec![format!(
            "scenario {} ({} s), view {}, seed {}",
            self.scenario, self.duration_s, self.view, self.master_seed
        )];
        match (&self.identification, &self.identification_note) {
            (Some(id), _) => {
                lines.push(format!(
                    "identification: mean accuracy {:.4} over {} windows (s={}, w={}, k={}, folds={})",
                    id.mean_accuracy, id.windows, id.params.s, id.params.w, id.params.k, id.params.folds
                ));
                if let Some(n) = &id.note {
                    lines.push(format!("  note: {n}"));
                }
                for (label, m) in &id.per_class {
                    lines.push(format!(
                        "  {label}: precision {:.3} recall {:.3} support {}",
                        m.precision, m.recall, m.support
                    ));
                }
            }
            (None, note) => lines.push(format!("identification: n/a ({})", note.as_deref().unwrap_or("no features"))),
        }
        lines.push(format!(
            "dns identification: {:.3} of streams",
            self.dns_identification.fraction_identified
        ));
        for (stream, ty) in &self.dns_identification.streams {
            lines.push(format!("  {stream}: {}", ty.as_deref().unwrap_or("none")));
        }
        let b = &self.behavior;
        lines.push(format!(
            "behavior: {} detections, {} real + {} decoy events; precision {:.3} recall {:.3} f1 {:.3}",
            b.detected, b.real_events, b.decoy_events, b.score.precision, b.score.recall, b.score.f1
        ));
        for c in &self.costs {
            lines.push(format!(
                "cost {}: overhead {} B ({:.4}), latency mean {:.3} s max {:.3} s",
                c.defense, c.overhead_bytes, c.overhead_ratio, c.mean_added_latency_s, c.max_added_latency_s
            ));
        }
        for s in &self.skipped_defenses {
            lines.push(format!("skipped {s}"));
        }
        if let Some(sw) = &self.sweep {
            lines.push(format!("sweep: {} points, {} skipped", sw.rows.len(), sw.skipped.len()));
        }
        lines.join("\n") + "\n"
    }
}

/// Writes `report.json`, `features.csv`, `costs.csv`, and when present
/// `confusion.csv` and `sweep.csv` into `dir`.
pub fn write_report(report: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    let mut files = vec![
        ("report.json", report.to_json()),
        ("features.csv", report.features_csv()),
        ("costs.csv", report.costs_csv()),
    ];
    if let Some(id) = &report.identification {
        files.push(("confusion.csv", id.confusion.to_csv()));
    }
    if let Some(sw) = &report.sweep {
        files.push(("sweep.csv", sw.to_csv()));
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| EvalError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
