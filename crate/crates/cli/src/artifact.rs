//! Files a training run leaves behind.
//!
//! `metrics.json` and `epochs.csv` depend only on the configuration and seed,
//! so two runs can be compared byte for byte. Wall-clock numbers go to
//! `timing.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slicegcn_core::engine::{EpochReport, Evaluation, MetricKind, RunSummary, Variant};
use slicegcn_core::graph::SynthConfig;
use slicegcn_core::nn::{LayerForm, ParamBreakdown};

use crate::spec::{Precision, RunSpec};
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const METRICS_FILE: &str = "metrics.json";
pub const EPOCHS_FILE: &str = "epochs.csv";
pub const TIMING_FILE: &str = "timing.json";

/// The settings that influence results. Output paths and the thread count are
/// left out on purpose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEcho {
    pub dataset: String,
    pub synth: Option<SynthConfig>,
    pub precision: Precision,
    pub variant: Variant,
    pub devices: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub layers: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub dropout: f64,
    pub slice_scale: f64,
    pub layer_form: LayerForm,
    pub relu_over_sum: bool,
    pub classifier_layers: usize,
    pub preserve_direction: bool,
    pub self_loops: bool,
}

impl ConfigEcho {
    pub fn new(spec: &RunSpec, synth: Option<SynthConfig>) -> Self {
        Self {
            dataset: spec.dataset.clone(),
            synth,
            precision: spec.precision,
            variant: spec.variant,
            devices: spec.devices,
            epochs: spec.epochs,
            hidden: spec.hidden,
            layers: spec.layers,
            lr: spec.lr,
            lr_min: spec.lr_min,
            dropout: spec.dropout,
            slice_scale: spec.slice_scale,
            layer_form: spec.layer_form,
            relu_over_sum: spec.relu_over_sum,
            classifier_layers: spec.classifier_layers,
            preserve_direction: spec.preserve_direction,
            self_loops: spec.self_loops,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryRecord {
    /// Resolved metric, never `auto`.
    pub metric: MetricKind,
    pub initial: Evaluation,
    pub best_epoch: Option<usize>,
    pub best_val: f64,
    pub test_at_best_val: f64,
    pub final_loss: Option<f64>,
    pub param_count: usize,
    pub params: ParamBreakdown,
}

impl From<&RunSummary> for SummaryRecord {
    fn from(s: &RunSummary) -> Self {
        Self {
            metric: s.metric,
            initial: s.initial,
            best_epoch: s.best_epoch,
            best_val: s.best_val,
            test_at_best_val: s.test_at_best_val,
            final_loss: s.final_loss,
            param_count: s.param_count,
            params: s.params,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_metric: f64,
    pub val_metric: f64,
    pub test_metric: f64,
}

impl From<&EpochReport> for EpochRecord {
    fn from(r: &EpochReport) -> Self {
        Self {
            epoch: r.epoch,
            lr: r.lr,
            loss: r.loss,
            train_metric: r.train_metric,
            val_metric: r.val_metric,
            test_metric: r.test_metric,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsArtifact {
    pub schema_version: u32,
    pub seed: u64,
    pub config: ConfigEcho,
    pub summary: SummaryRecord,
    pub epochs: Vec<EpochRecord>,
}

impl MetricsArtifact {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingArtifact {
    pub schema_version: u32,
    /// Epochs per second over the summed per-epoch wall time.
    pub throughput: f64,
    pub train_seconds: f64,
    pub threads: Option<usize>,
    pub epoch_wall_ms: Vec<f64>,
}

/// One row of `epochs.csv`.
#[derive(Serialize)]
struct CurveRow {
    epoch: usize,
    lr: f64,
    loss: f64,
    val_metric: f64,
}

pub fn epochs_csv(records: &[EpochRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(CurveRow {
            epoch: r.epoch,
            lr: r.lr,
            loss: r.loss,
            val_metric: r.val_metric,
        })
        .expect("csv row serializes");
    }
    if records.is_empty() {
        w.write_record(["epoch", "lr", "loss", "val_metric"]).expect("csv header");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

fn write(path: PathBuf, contents: &str) -> Result<(), CliError> {
    fs::write(&path, contents).map_err(|source| CliError::Output { path, source })
}

/// Writes the three run files into `dir`, creating it if needed.
pub fn write_run(dir: &Path, metrics: &MetricsArtifact, timing: &TimingArtifact) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })?;
    write(dir.join(METRICS_FILE), &metrics.to_json())?;
    write(dir.join(EPOCHS_FILE), &epochs_csv(&metrics.epochs))?;
    let mut timing = serde_json::to_string_pretty(timing).expect("timing serializes");
    timing.push('\n');
    write(dir.join(TIMING_FILE), &timing)
}
