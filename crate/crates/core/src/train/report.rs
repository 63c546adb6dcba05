use serde::Serialize;

use super::metrics::{ClassMetrics, ConfusionMatrix, Metrics};
use crate::pointcloud::Label;

/// Evaluation report laid out like a results table row plus both confusion
/// matrices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub method: String,
    pub vehicle: ClassMetrics,
    pub pedestrian: ClassMetrics,
    pub average: ClassMetrics,
    pub params: u64,
    pub flops: u64,
    pub confusion: ConfusionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionReport {
    /// Row and column order.
    pub classes: [&'static str; 3],
    pub counts: [[u64; 3]; 3],
    pub normalized: [[f64; 3]; 3],
}

impl Report {
    pub fn new(method: impl Into<String>, metrics: &Metrics, cm: &ConfusionMatrix, params: u64, flops: u64) -> Self {
        Report {
            method: method.into(),
            vehicle: metrics.vehicle,
            pedestrian: metrics.pedestrian,
            average: metrics.average,
            params,
            flops,
            confusion: ConfusionReport {
                classes: Label::ALL.map(Label::name),
                counts: cm.counts,
                normalized: cm.normalized(),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("reports always serialize")
    }
}

/// `418.6K`, `1.55G` style.
pub fn human_count(n: u64) -> String {
    let n = n as f64;
    if n >= 1e9 {
        format!("{:.2}G", n / 1e9)
    } else if n >= 1e6 {
        format!("{:.2}M", n / 1e6)
    } else if n >= 1e3 {
        format!("{:.1}K", n / 1e3)
    } else {
        format!("{n}")
    }
}

fn pct(v: f64) -> String {
    format!("{:6.2}", 100.0 * v)
}

/// Fixed-width table (percent values): method, then precision/recall/F1 for
/// vehicle, pedestrian and their average, then parameters and FLOPs.
pub fn format_table(rows: &[Report]) -> String {
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
    let mut out = format!(
        "{:width$} | {:^22} | {:^22} | {:^22} | {:>8} | {:>7}\n",
        "Method", "Moving Vehicle", "Moving Pedestrian", "Average", "Param.", "FLOPs"
    );
    out.push_str(&format!(
        "{:width$} | {} | {} | {} | {:>8} | {:>7}\n",
        "",
        " Prec. Recall     F1",
        " Prec. Recall     F1",
        " Prec. Recall     F1",
        "",
        ""
    ));
    for r in rows {
        let cells = [r.vehicle, r.pedestrian, r.average]
            .map(|c| format!("{} {} {}", pct(c.precision), pct(c.recall), pct(c.f1)));
        out.push_str(&format!(
            "{:width$} | {} | {} | {} | {:>8} | {:>7}\n",
            r.method,
            cells[0],
            cells[1],
            cells[2],
            human_count(r.params),
            human_count(r.flops)
        ));
    }
    out
}

/// Both confusion matrices as text.
pub fn format_confusion(c: &ConfusionReport) -> String {
    let mut out = String::from("truth \\ pred      static    vehicle pedestrian\n");
    for (i, name) in c.classes.iter().enumerate() {
        out.push_str(&format!(
            "{name:<12} {:>10} {:>10} {:>10}\n",
            c.counts[i][0], c.counts[i][1], c.counts[i][2]
        ));
    }
    out.push('\n');
    for (i, name) in c.classes.iter().enumerate() {
        out.push_str(&format!(
            "{name:<12} {:>10.4} {:>10.4} {:>10.4}\n",
            c.normalized[i][0], c.normalized[i][1], c.normalized[i][2]
        ));
    }
    out
}
