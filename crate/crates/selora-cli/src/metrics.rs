//! Metrics documents: JSON for single runs and sweeps, CSV for plot data.
//!
//! Serialization is deterministic (fixed field order, shortest-round-trip
//! floats, no timestamps), so identical runs produce byte-identical files.
//! Wall-clock timing is reported on stderr by the runner, never stored here.

use serde::{Deserialize, Serialize};

use selora_core::trainer::{RunMetrics, SweepReport};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunDocument {
    pub kind: String,
    pub arm: String,
    pub seed: u64,
    pub metric: String,
    pub final_metric: f64,
    pub trainable_params: usize,
    pub steps: usize,
    pub loss_series: Vec<f64>,
    pub config_echo: String,
    pub config_text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepEntryDocument {
    pub axis_value: String,
    pub arm: String,
    pub seed: u64,
    pub final_metric: Option<f64>,
    pub params: Option<usize>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepMedianDocument {
    pub axis_value: String,
    pub arm: String,
    pub median_metric: Option<f64>,
    pub params: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepDocument {
    pub kind: String,
    pub axis: String,
    pub metric: String,
    pub seeds: Vec<u64>,
    pub entries: Vec<SweepEntryDocument>,
    pub medians: Vec<SweepMedianDocument>,
    pub config_text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MetricsDocument {
    Run(RunDocument),
    Sweep(SweepDocument),
}

pub fn run_document(config: &RunConfig, seed: u64, metrics: &RunMetrics) -> RunDocument {
    RunDocument {
        kind: "run".into(),
        arm: config.adapter.schema.name().into(),
        seed,
        metric: metrics.metric.name().into(),
        final_metric: metrics.final_metric,
        trainable_params: metrics.trainable_params,
        steps: metrics.loss_series.len(),
        loss_series: metrics.loss_series.clone(),
        config_echo: metrics.config_echo.clone(),
        config_text: config.emit(),
    }
}

pub fn sweep_document(config: &RunConfig, report: &SweepReport) -> SweepDocument {
    SweepDocument {
        kind: "sweep".into(),
        axis: report.axis.name().into(),
        metric: report.metric.name().into(),
        seeds: report.seeds.clone(),
        entries: report
            .entries
            .iter()
            .map(|e| SweepEntryDocument {
                axis_value: e.grid_label.clone(),
                arm: e.arm.into(),
                seed: e.seed,
                final_metric: e.metrics.as_ref().map(|m| m.final_metric),
                params: e.metrics.as_ref().map(|m| m.trainable_params),
                skipped: e.skip_reason.clone(),
            })
            .collect(),
        medians: report
            .medians
            .iter()
            .map(|m| SweepMedianDocument {
                axis_value: m.grid_label.clone(),
                arm: m.arm.into(),
                median_metric: m.median_metric,
                params: m.trainable_params,
            })
            .collect(),
        config_text: config.emit(),
    }
}

pub fn to_json(doc: &impl Serialize) -> String {
    let mut out = serde_json::to_string_pretty(doc).expect("documents always serialize");
    out.push('\n');
    out
}

const CSV_HEADER: &str = "axis_value,arm,seed,final_metric,params";

fn csv_field_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn csv_field_opt_usize(v: Option<usize>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// CSV plot data: `axis_value,arm,seed,final_metric,params`, one row per
/// sweep entry (or a single row for a plain run; skipped entries keep their
/// key columns and leave the value columns empty).
pub fn to_csv(doc: &MetricsDocument) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    match doc {
        MetricsDocument::Run(run) => {
            out.push_str(&format!(
                "-,{},{},{},{}\n",
                run.arm, run.seed, run.final_metric, run.trainable_params
            ));
        }
        MetricsDocument::Sweep(sweep) => {
            for e in &sweep.entries {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    e.axis_value,
                    e.arm,
                    e.seed,
                    csv_field_opt_f64(e.final_metric),
                    csv_field_opt_usize(e.params)
                ));
            }
        }
    }
    out
}

/// Parses a metrics JSON document of either kind.
pub fn parse_document(text: &str) -> CliResult<MetricsDocument> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| CliError::Format(format!("not a metrics JSON document: {e}")))?;
    match value.get("kind").and_then(|k| k.as_str()) {
        Some("run") => serde_json::from_value(value)
            .map(MetricsDocument::Run)
            .map_err(|e| CliError::Format(format!("malformed run document: {e}"))),
        Some("sweep") => serde_json::from_value(value)
            .map(MetricsDocument::Sweep)
            .map_err(|e| CliError::Format(format!("malformed sweep document: {e}"))),
        other => Err(CliError::Format(format!("unknown document kind {other:?}"))),
    }
}
