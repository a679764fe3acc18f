use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LayerForm;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One device over all features.
    #[default]
    Baseline,
    /// Direct column slicing.
    Slice,
    /// Direct slicing plus per-device slice encoding.
    SliceSe,
    /// Feature fusion instead of slicing.
    SliceFf,
    /// Feature fusion plus slice encoding.
    SliceFfse,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::Slice,
        Variant::SliceSe,
        Variant::SliceFf,
        Variant::SliceFfse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Slice => "slice",
            Variant::SliceSe => "slice_se",
            Variant::SliceFf => "slice_ff",
            Variant::SliceFfse => "slice_ffse",
        }
    }

    pub fn uses_fusion(self) -> bool {
        matches!(self, Variant::SliceFf | Variant::SliceFfse)
    }

    pub fn uses_encoding(self) -> bool {
        matches!(self, Variant::SliceSe | Variant::SliceFfse)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                format!("unknown variant `{s}` (expected baseline, slice, slice_se, slice_ff or slice_ffse)")
            })
    }
}

/// Which score `evaluate` reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// AUC-ROC for two classes, accuracy otherwise.
    #[default]
    Auto,
    Accuracy,
    AucRoc,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Auto => "auto",
            MetricKind::Accuracy => "accuracy",
            MetricKind::AucRoc => "auc_roc",
        }
    }

    /// Replaces `Auto` by the concrete metric for `num_classes`.
    pub fn resolve(self, num_classes: usize) -> MetricKind {
        match self {
            MetricKind::Auto if num_classes == 2 => MetricKind::AucRoc,
            MetricKind::Auto => MetricKind::Accuracy,
            other => other,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(MetricKind::Auto),
            "accuracy" => Ok(MetricKind::Accuracy),
            "auc_roc" | "auc" => Ok(MetricKind::AucRoc),
            other => Err(format!("unknown metric `{other}` (expected auto, accuracy or auc_roc)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    /// Number of simulated devices `p`.
    pub devices: usize,
    pub epochs: usize,
    /// Full hidden width `h`; each device uses `⌈h/p⌉`.
    pub hidden: usize,
    /// GCN layers per device.
    pub layers: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub dropout: f64,
    pub slice_scale: f64,
    pub seed: u64,
    pub form: LayerForm,
    /// Apply the ReLU over aggregation and self path together.
    pub relu_over_sum: bool,
    pub classifier_layers: usize,
    pub metric: MetricKind,
    /// `None`: one thread per device. `Some(0)`: run devices inline on the
    /// calling thread. `Some(k)`: `k` threads, devices assigned round-robin.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Baseline,
            devices: 1,
            epochs: 500,
            hidden: 256,
            layers: 2,
            lr: 0.001,
            lr_min: 0.0,
            dropout: 0.5,
            slice_scale: 1.0,
            seed: 0,
            form: LayerForm::AggregateSelf,
            relu_over_sum: false,
            classifier_layers: 2,
            metric: MetricKind::Auto,
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.devices == 0 {
            return bad("device count must be at least 1".into());
        }
        if self.variant == Variant::Baseline && self.devices != 1 {
            return bad(format!("the baseline runs on one device, got p={}", self.devices));
        }
        if self.hidden == 0 || self.layers == 0 || self.classifier_layers == 0 {
            return bad(format!(
                "hidden ({}), layers ({}) and classifier layers ({}) must be positive",
                self.hidden, self.layers, self.classifier_layers
            ));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.lr));
        }
        if !(self.lr_min.is_finite() && self.lr_min >= 0.0 && self.lr_min <= self.lr) {
            return bad(format!("lr_min must lie in [0, lr], got {}", self.lr_min));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.slice_scale.is_finite() && self.slice_scale > 0.0) {
            return bad(format!("slice scale must be positive, got {}", self.slice_scale));
        }
        Ok(())
    }
}
