use serde::{Deserialize, Serialize};

use super::gcn::LayerForm;
use crate::slicing::fusion_width;

/// Width description of a full model, enough to count parameters without
/// building it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub num_classes: usize,
    pub devices: usize,
    pub fusion: bool,
    pub encoding: bool,
    pub form: LayerForm,
    pub slice_scale: f64,
    pub classifier_layers: usize,
}

impl ModelShape {
    /// Single-device model over all features, no fusion or encoding.
    pub fn baseline(input_dim: usize, hidden: usize, layers: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden,
            layers,
            num_classes,
            devices: 1,
            fusion: false,
            encoding: false,
            form: LayerForm::AggregateSelf,
            slice_scale: 1.0,
            classifier_layers: 2,
        }
    }

    pub fn sliced(self, devices: usize) -> Self {
        Self { devices, ..self }
    }

    /// Per-device representation width `⌈h/p⌉`.
    pub fn worker_hidden(&self) -> usize {
        self.hidden.div_ceil(self.devices.max(1))
    }

    /// Per-device input width: the fusion output when fusing, else the slice width.
    pub fn worker_input(&self) -> usize {
        if self.fusion {
            fusion_width(self.input_dim, self.devices)
        } else {
            let slice = self.input_dim.div_ceil(self.devices.max(1));
            (slice as f64 * self.slice_scale).trunc() as usize
        }
    }

    /// Classifier widths, input first.
    pub fn classifier_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.devices * self.worker_hidden()];
        dims.extend(std::iter::repeat_n(self.hidden, self.classifier_layers.saturating_sub(1)));
        dims.push(self.num_classes);
        dims
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBreakdown {
    pub workers: usize,
    pub fusion: usize,
    pub encoding: usize,
    pub classifier: usize,
}

impl ParamBreakdown {
    pub fn total(&self) -> usize {
        self.workers + self.fusion + self.encoding + self.classifier
    }
}

fn gcn_layer_params(w_in: usize, w_out: usize, form: LayerForm) -> usize {
    let weights = if form.has_self_path() { 2 } else { 1 };
    weights * w_in * w_out + w_out
}

fn mlp_params(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

pub fn count_params(shape: &ModelShape) -> ParamBreakdown {
    let h_out = shape.worker_hidden();
    let w_in = shape.worker_input();
    let per_worker = (0..shape.layers)
        .map(|l| gcn_layer_params(if l == 0 { w_in } else { h_out }, h_out, shape.form))
        .sum::<usize>();
    let d = shape.input_dim;
    ParamBreakdown {
        workers: shape.devices * per_worker,
        fusion: if shape.fusion {
            mlp_params(&[d, d, fusion_width(d, shape.devices)])
        } else {
            0
        },
        encoding: if shape.encoding { shape.devices * h_out } else { 0 },
        classifier: mlp_params(&shape.classifier_dims()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roman_empire() -> ModelShape {
        ModelShape::baseline(300, 256, 3, 18)
    }

    #[test]
    fn encoding_adds_one_row_per_device() {
        let base = roman_empire().sliced(2);
        let with = ModelShape { encoding: true, ..base };
        assert_eq!(base.worker_hidden(), 128);
        assert_eq!(count_params(&with).total() - count_params(&base).total(), 2 * 128);
        // at h_out = 256 the table holds 512 entries
        let wide = ModelShape { hidden: 512, ..with };
        assert_eq!(count_params(&wide).encoding, 512);
    }

    #[test]
    fn fusion_module_sizes() {
        for (p, expected) in [(3, 120_701), (2, 135_751)] {
            let shape = ModelShape { fusion: true, ..roman_empire().sliced(p) };
            assert_eq!(count_params(&shape).fusion, expected);
        }
    }

    #[test]
    fn fusion_widens_worker_inputs_by_one() {
        let direct = roman_empire().sliced(3);
        let fused = ModelShape { fusion: true, ..direct };
        assert_eq!(direct.worker_input(), 100);
        assert_eq!(fused.worker_input(), 101);
        assert_eq!(fused.worker_hidden(), 86);
    }

    #[test]
    fn more_devices_fewer_parameters() {
        let c1 = count_params(&roman_empire()).total();
        let c2 = count_params(&roman_empire().sliced(2)).total();
        let c3 = count_params(&roman_empire().sliced(3)).total();
        assert!(c3 < c2 && c2 < c1, "{c3} {c2} {c1}");
    }

    #[test]
    fn hand_counted_baseline() {
        // layer 0: 2·300·256 + 256, layers 1-2: 2·256·256 + 256, classifier 256→256→18
        let expected = (2 * 300 * 256 + 256) + 2 * (2 * 256 * 256 + 256) + (256 * 256 + 256) + (256 * 18 + 18);
        assert_eq!(count_params(&roman_empire()).total(), expected);
        let eq1 = ModelShape { form: LayerForm::Aggregate, ..roman_empire() };
        assert_eq!(count_params(&eq1).workers, (300 * 256 + 256) + 2 * (256 * 256 + 256));
    }

    #[test]
    fn single_layer_classifier() {
        let shape = ModelShape { classifier_layers: 1, ..roman_empire().sliced(3) };
        assert_eq!(shape.classifier_dims(), vec![258, 18]);
    }
}
