//! Experiment reports: one row of metrics per architecture, renderable
//! as machine-readable JSON or an aligned human-readable table.

use serde::{Deserialize, Serialize};

use crate::scalar::Precision;

use super::HarnessError;

pub const REPORT_VERSION: u32 = 1;

/// Metrics for one architecture. The optional columns are only filled by
/// the second experiment (retraining on filtered ROIs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub architecture: String,
    /// Best validation accuracy of the baseline classifier.
    pub val_acc: f64,
    /// Mean-Dice between its class activation maps and the truth masks,
    /// averaged over abnormal ROIs.
    pub dice: f64,
    /// Validation accuracy after retraining on CAM-filtered ROIs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cam_val_acc: Option<f64>,
    /// Validation accuracy after retraining on truth-mask-filtered ROIs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_val_acc: Option<f64>,
    /// Validation accuracy after retraining on inverse-mask-filtered ROIs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse_val_acc: Option<f64>,
}

/// A full experiment run: metadata plus one row per architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    /// Which experiment produced the rows: 1 (train + localize) or
    /// 2 (filtered retraining).
    pub experiment: u8,
    pub seed: u64,
    pub precision: Precision,
    pub tool_version: String,
    /// Digest of the sample ids, labels, pixels, and masks, in dataset
    /// order; two runs over the same data share this value.
    pub dataset_hash: String,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    /// Orders rows the way each experiment presents them: the first by
    /// descending validation accuracy, the second by descending Dice.
    /// Ties fall back to architecture name so the order is total.
    pub fn sort_rows(&mut self) {
        let by_dice = self.experiment == 2;
        self.rows.sort_by(|a, b| {
            let (ka, kb) = if by_dice {
                (a.dice, b.dice)
            } else {
                (a.val_acc, b.val_acc)
            };
            kb.total_cmp(&ka)
                .then_with(|| a.architecture.cmp(&b.architecture))
        });
    }
}

/// Output shape for `render_report`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            other => Err(HarnessError::Report(format!(
                "unknown report format {other:?} (expected \"json\" or \"text\")"
            ))),
        }
    }
}

/// Renders a report as pretty JSON or an aligned text table.
pub fn render_report(
    report: &ExperimentReport,
    format: ReportFormat,
) -> Result<String, HarnessError> {
    match format {
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(report)
                .map_err(|e| HarnessError::Report(e.to_string()))?;
            text.push('\n');
            Ok(text)
        }
        ReportFormat::Text => Ok(render_table(report)),
    }
}

/// Parses a report previously rendered as JSON.
pub fn parse_report(text: &str) -> Result<ExperimentReport, HarnessError> {
    let report: ExperimentReport =
        serde_json::from_str(text).map_err(|e| HarnessError::Report(e.to_string()))?;
    if report.version != REPORT_VERSION {
        return Err(HarnessError::Report(format!(
            "unsupported report version {} (this build reads {})",
            report.version, REPORT_VERSION
        )));
    }
    Ok(report)
}

fn render_table(report: &ExperimentReport) -> String {
    let optional = [
        ("cam_val_acc", report.rows.iter().any(|r| r.cam_val_acc.is_some())),
        ("mask_val_acc", report.rows.iter().any(|r| r.mask_val_acc.is_some())),
        (
            "inverse_val_acc",
            report.rows.iter().any(|r| r.inverse_val_acc.is_some()),
        ),
    ];

    let mut header: Vec<String> = vec!["architecture".into(), "val_acc".into(), "dice".into()];
    for (name, present) in optional {
        if present {
            header.push(name.into());
        }
    }

    let cell = |v: Option<f64>| match v {
        Some(v) => format!("{v:.4}"),
        None => "-".into(),
    };
    let mut grid: Vec<Vec<String>> = vec![header];
    for row in &report.rows {
        let mut cells = vec![
            row.architecture.clone(),
            format!("{:.4}", row.val_acc),
            format!("{:.4}", row.dice),
        ];
        let extras = [row.cam_val_acc, row.mask_val_acc, row.inverse_val_acc];
        for ((_, present), value) in optional.iter().zip(extras) {
            if *present {
                cells.push(cell(value));
            }
        }
        grid.push(cells);
    }

    let columns = grid[0].len();
    let widths: Vec<usize> = (0..columns)
        .map(|c| grid.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();

    let mut out = format!(
        "experiment {}  seed {}  precision {:?}  tool {}\ndataset {}\n\n",
        report.experiment, report.seed, report.precision, report.tool_version, report.dataset_hash
    );
    for (i, row) in grid.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, width)| format!("{cell:<width$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out
}
