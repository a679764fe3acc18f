use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, GcnCache, GcnLayer, LayerForm, LayerOptions, NormalizedAdjacency};
use crate::tensor::{DetRng, Matrix, Real};

/// Requests the master sends to a device.
#[derive(Debug)]
pub enum Command<T> {
    /// Run all layers. `input` is the broadcast fused matrix; `None` means the
    /// device's resident slice.
    Forward { input: Option<Arc<Matrix<T>>>, training: bool },
    /// Backpropagate the gradient of this device's output block.
    Backward { grad: Matrix<T>, need_input_grad: bool },
    Step { lr: f64 },
    Parameters,
    Gradients,
    SetParameter { index: usize, value: Matrix<T> },
}

#[derive(Debug)]
pub enum Reply<T> {
    Output(Matrix<T>),
    InputGrad(Option<Matrix<T>>),
    Named(Vec<(String, Matrix<T>)>),
    Done,
}

#[derive(Debug)]
struct Trace<T> {
    input: Arc<Matrix<T>>,
    /// Outputs of every layer but the last, i.e. the inputs of layers `1..L`.
    hidden: Vec<Matrix<T>>,
    caches: Vec<GcnCache<T>>,
}

/// One simulated device: its GCN stack, optimizer state and random stream.
#[derive(Debug)]
pub struct Worker<T> {
    device: usize,
    layers: Vec<GcnLayer<T>>,
    adam: Adam<T>,
    rng: DetRng,
    resident: Option<Arc<Matrix<T>>>,
    dropout: f64,
    relu_over_sum: bool,
    trace: Option<Trace<T>>,
    grads: Option<Vec<Matrix<T>>>,
}

impl<T: Real> Worker<T> {
    /// Initializes `layers` GCN layers `w_in -> h_out -> ... -> h_out` from
    /// `rng`, which the worker keeps for its dropout masks.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        device: usize,
        w_in: usize,
        h_out: usize,
        layers: usize,
        form: LayerForm,
        dropout: f64,
        relu_over_sum: bool,
        mut rng: DetRng,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| GcnLayer::new(if l == 0 { w_in } else { h_out }, h_out, form, &mut rng))
            .collect();
        Self {
            device,
            layers,
            adam: Adam::new(AdamConfig::default()),
            rng,
            resident: None,
            dropout,
            relu_over_sum,
            trace: None,
            grads: None,
        }
    }

    /// Keeps a slice on the device so later forwards need no transfer.
    pub fn with_resident_input(mut self, input: Arc<Matrix<T>>) -> Self {
        self.resident = Some(input);
        self
    }

    pub fn device(&self) -> usize {
        self.device
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(GcnLayer::num_params).sum()
    }

    fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            names.push(format!("worker{}.layer{l}.w_agg", self.device));
            if layer.w_self().is_some() {
                names.push(format!("worker{}.layer{l}.w_self", self.device));
            }
            names.push(format!("worker{}.layer{l}.bias", self.device));
        }
        names
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix<T>> {
        self.layers.iter_mut().flat_map(GcnLayer::parameters_mut).collect()
    }

    fn forward(&mut self, adj: &NormalizedAdjacency<T>, input: Option<Arc<Matrix<T>>>, training: bool) -> Result<Matrix<T>> {
        let input = input
            .or_else(|| self.resident.clone())
            .ok_or_else(|| Error::Worker {
                device: self.device,
                message: "no input was scattered to this device".into(),
            })?;
        let last = self.layers.len() - 1;
        let mut hidden = Vec::with_capacity(last);
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut out = None;
        for (l, layer) in self.layers.iter().enumerate() {
            let opts = LayerOptions {
                relu_over_sum: self.relu_over_sum,
                dropout: if l < last { self.dropout } else { 0.0 },
                training,
            };
            let h_in = if l == 0 { &*input } else { &hidden[l - 1] };
            let (h, cache) = layer.forward(adj, h_in, opts, &mut self.rng)?;
            if training {
                caches.push(cache);
            }
            if l < last {
                hidden.push(h);
            } else {
                out = Some(h);
            }
        }
        self.trace = training.then_some(Trace { input, hidden, caches });
        self.grads = None;
        Ok(out.expect("a worker has at least one layer"))
    }

    fn backward(&mut self, adj: &NormalizedAdjacency<T>, grad: Matrix<T>, need_input_grad: bool) -> Result<Option<Matrix<T>>> {
        let trace = self.trace.take().ok_or_else(|| Error::Worker {
            device: self.device,
            message: "backward without a training forward".into(),
        })?;
        let mut per_layer = vec![Vec::new(); self.layers.len()];
        let mut delta = grad;
        for l in (0..self.layers.len()).rev() {
            let h_in = if l == 0 { &*trace.input } else { &trace.hidden[l - 1] };
            let need = l > 0 || need_input_grad;
            let (g, d_in) = self.layers[l].backward(adj, h_in, &trace.caches[l], &delta, need)?;
            per_layer[l] = g;
            match d_in {
                Some(d) => delta = d,
                None => {
                    self.grads = Some(per_layer.into_iter().flatten().collect());
                    return Ok(None);
                }
            }
        }
        self.grads = Some(per_layer.into_iter().flatten().collect());
        Ok(Some(delta))
    }

    fn step(&mut self, lr: f64) -> Result<()> {
        let grads = self.grads.take().ok_or_else(|| Error::Worker {
            device: self.device,
            message: "optimizer step without gradients".into(),
        })?;
        let params = self.layers.iter_mut().flat_map(GcnLayer::parameters_mut).collect();
        self.adam.step(params, &grads, lr)
    }

    /// Executes one command against this device's state.
    pub fn handle(&mut self, adj: &NormalizedAdjacency<T>, command: Command<T>) -> Result<Reply<T>> {
        match command {
            Command::Forward { input, training } => self.forward(adj, input, training).map(Reply::Output),
            Command::Backward { grad, need_input_grad } => {
                self.backward(adj, grad, need_input_grad).map(Reply::InputGrad)
            }
            Command::Step { lr } => self.step(lr).map(|()| Reply::Done),
            Command::Parameters => {
                let values = self.layers.iter().flat_map(GcnLayer::parameters).cloned();
                Ok(Reply::Named(self.parameter_names().into_iter().zip(values).collect()))
            }
            Command::Gradients => {
                let grads = self.grads.clone().ok_or_else(|| Error::Worker {
                    device: self.device,
                    message: "no gradients computed yet".into(),
                })?;
                Ok(Reply::Named(self.parameter_names().into_iter().zip(grads).collect()))
            }
            Command::SetParameter { index, value } => {
                let device = self.device;
                let mut params = self.parameters_mut();
                let slot = params.get_mut(index).ok_or_else(|| Error::Worker {
                    device,
                    message: format!("no parameter {index}"),
                })?;
                if slot.shape() != value.shape() {
                    return Err(Error::shape("set parameter", slot.shape(), value.shape()));
                }
                **slot = value;
                Ok(Reply::Done)
            }
        }
    }
}
