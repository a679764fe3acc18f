//! Run specification files.
//!
//! A spec is a TOML document whose keys mirror the command-line flags. Every
//! key is optional; unknown keys are rejected so typos do not pass silently.
//!
//! ```toml
//! dataset = "synth"
//! variant = "slice_ffse"
//! devices = 2
//! epochs = 200
//! lr = 0.005
//!
//! [synth]
//! nodes = 400
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slicegcn_core::engine::{MetricKind, TrainConfig, Variant};
use slicegcn_core::graph::SynthConfig;
use slicegcn_core::nn::LayerForm;
pub use slicegcn_core::tensor::Precision;

use crate::CliError;

/// Dataset name that selects the generated planted-partition graph.
pub const SYNTH: &str = "synth";

/// Planted-partition generator settings. `avg_degree`, when set, replaces
/// `p_in`/`p_out` with probabilities that give that expected degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub nodes: usize,
    pub classes: usize,
    pub features: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub avg_degree: Option<f64>,
    /// Share of the expected degree inside a node's own class.
    pub intra_fraction: f64,
    pub signal: f64,
    /// Graph seed; defaults to the run seed.
    pub seed: Option<u64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            nodes: 400,
            classes: 2,
            features: 16,
            p_in: 0.05,
            p_out: 0.005,
            avg_degree: None,
            intra_fraction: 0.9,
            signal: 1.0,
            seed: None,
        }
    }
}

impl SynthSpec {
    pub fn resolve(&self, run_seed: u64) -> SynthConfig {
        let seed = self.seed.unwrap_or(run_seed);
        match self.avg_degree {
            Some(deg) => SynthConfig::with_average_degree(
                self.nodes,
                self.classes,
                self.features,
                deg,
                self.intra_fraction,
                self.signal,
                seed,
            ),
            None => SynthConfig {
                nodes: self.nodes,
                classes: self.classes,
                features: self.features,
                p_in: self.p_in,
                p_out: self.p_out,
                signal: self.signal,
                seed,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    /// Dataset directory, or `synth`.
    pub dataset: String,
    pub out: Option<PathBuf>,
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
    pub seed: u64,
    pub layer_form: LayerForm,
    pub relu_over_sum: bool,
    pub classifier_layers: usize,
    pub metric: MetricKind,
    pub threads: Option<usize>,
    pub preserve_direction: bool,
    pub self_loops: bool,
    pub synth: SynthSpec,
}

impl Default for RunSpec {
    fn default() -> Self {
        let c = TrainConfig::default();
        Self {
            dataset: SYNTH.to_string(),
            out: None,
            precision: Precision::F32,
            variant: c.variant,
            devices: c.devices,
            epochs: c.epochs,
            hidden: c.hidden,
            layers: c.layers,
            lr: c.lr,
            lr_min: c.lr_min,
            dropout: c.dropout,
            slice_scale: c.slice_scale,
            seed: c.seed,
            layer_form: c.form,
            relu_over_sum: c.relu_over_sum,
            classifier_layers: c.classifier_layers,
            metric: c.metric,
            threads: c.threads,
            preserve_direction: false,
            self_loops: false,
            synth: SynthSpec::default(),
        }
    }
}

impl RunSpec {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Spec {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| CliError::Spec {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn is_synthetic(&self) -> bool {
        self.dataset == SYNTH
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            variant: self.variant,
            devices: self.devices,
            epochs: self.epochs,
            hidden: self.hidden,
            layers: self.layers,
            lr: self.lr,
            lr_min: self.lr_min,
            dropout: self.dropout,
            slice_scale: self.slice_scale,
            seed: self.seed,
            form: self.layer_form,
            relu_over_sum: self.relu_over_sum,
            classifier_layers: self.classifier_layers,
            metric: self.metric,
            threads: self.threads,
        }
    }
}
