//! Layers with explicit forward and backward passes, the optimizer, the
//! learning-rate schedule and parameter accounting.

mod adam;
mod encoding;
mod gcn;
mod mlp;
mod params;
mod schedule;

pub use adam::{Adam, AdamConfig};
pub use encoding::SliceEncoding;
pub use gcn::{GcnCache, GcnGrads, GcnLayer, LayerForm, LayerOptions, NormalizedAdjacency};
pub use mlp::{Mlp, MlpCache};
pub use params::{count_params, ModelShape, ParamBreakdown};
pub use schedule::cosine_lr;
