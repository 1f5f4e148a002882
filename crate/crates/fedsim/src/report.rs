//! Experiment report and its file renderings.

use std::fmt::Write;

use fedsim_core::federation::{HistoryRow, RoundReport, RunReport};
use fedsim_core::metrics::{ConfusionMatrix, RocCurve};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub train_samples: usize,
    pub test_samples: usize,
    pub features: usize,
    pub classes: usize,
}

/// One row of the centralized-versus-federated comparison. Federated train
/// figures are those of the reference client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub approach: String,
    pub train_loss: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

/// Wall-clock seconds, rounded to two decimals. The only part of the report
/// that differs between identical runs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub centralized_seconds: Option<f64>,
    pub federated_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub centralized: Option<RunReport>,
    pub federated: Option<RunReport>,
    /// Present when both approaches ran.
    pub summary: Option<Vec<SummaryRow>>,
    pub timing: Timing,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

pub fn round_seconds(seconds: f64) -> f64 {
    (seconds * 100.0).round() / 100.0
}

/// Seventeen significant digits, enough to recover any `f64` exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

pub fn metrics_csv(history: &[HistoryRow]) -> String {
    let mut s = String::from("round,train_loss,train_acc,test_loss,test_acc\n");
    for row in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            row.index,
            fmt_opt(row.train_loss),
            fmt_opt(row.train_accuracy),
            fmt_float(row.test_loss),
            fmt_float(row.test_accuracy)
        );
    }
    s
}

/// Rows are true classes, columns predicted classes.
pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut s = String::from("true_class");
    for c in 0..cm.classes() {
        let _ = write!(s, ",pred_{c}");
    }
    s.push('\n');
    for (c, row) in cm.counts.iter().enumerate() {
        let _ = write!(s, "{c}");
        for n in row {
            let _ = write!(s, ",{n}");
        }
        s.push('\n');
    }
    s
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("fpr,tpr\n");
    for &(f, t) in &curve.points {
        let _ = writeln!(s, "{},{}", fmt_float(f), fmt_float(t));
    }
    s
}

/// Per-client training records of every round.
pub fn clients_csv(rounds: &[RoundReport]) -> String {
    let mut s = String::from("round,client,samples,learning_rate,train_loss,train_acc,drift,reference\n");
    for r in rounds {
        for c in &r.clients {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.round,
                c.id,
                c.samples,
                fmt_float(c.learning_rate),
                fmt_float(c.train_loss),
                fmt_float(c.train_accuracy),
                fmt_float(c.drift),
                c.reference
            );
        }
    }
    s
}

/// Fixed-width comparison table with accuracy, loss and time columns.
pub fn summary_table(rows: &[SummaryRow], timing: &Timing) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut s = format!(
        "{:<12} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "approach", "train_loss", "train_acc", "test_loss", "test_acc", "time_s"
    );
    for row in rows {
        let time = match row.approach.as_str() {
            "centralized" => timing.centralized_seconds,
            "federated" => timing.federated_seconds,
            _ => None,
        };
        let _ = writeln!(
            s,
            "{:<12} {:>10} {:>10} {:>10} {:>10} {:>10}",
            row.approach,
            cell(row.train_loss),
            cell(row.train_accuracy),
            cell(Some(row.test_loss)),
            cell(Some(row.test_accuracy)),
            time.map_or_else(|| "-".to_string(), |t| format!("{t:.2}"))
        );
    }
    s
}
