use std::sync::Arc;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::config::{MetricKind, TrainConfig, Variant};
use super::metrics::evaluate;
use super::runtime::Executor;
use super::worker::{Command, Reply, Worker};
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Split};
use crate::nn::{cosine_lr, count_params, Adam, AdamConfig, Mlp, MlpCache, ModelShape, NormalizedAdjacency, ParamBreakdown, SliceEncoding};
use crate::slicing::{
    accumulate_worker_grads, feature_fusion_backward, feature_fusion_forward, fusion_width, init_feature_fusion,
    slice_feature, slice_strategy_generator, SliceStrategy,
};
use crate::tensor::{softmax_cross_entropy, DetRng, Matrix, Real};

/// First RNG stream id used by the master; devices use ids `0..p`.
pub const MASTER_STREAM: u64 = 1 << 32;
const FUSION_STREAM: u64 = MASTER_STREAM;
const ENCODING_STREAM: u64 = MASTER_STREAM + 1;
const CLASSIFIER_STREAM: u64 = MASTER_STREAM + 2;
const DROPOUT_STREAM: u64 = MASTER_STREAM + 3;

/// Split metrics from one dropout-free forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f64,
    /// Training loss of the forward pass that produced this epoch's update.
    pub loss: f64,
    pub train_metric: f64,
    pub val_metric: f64,
    pub test_metric: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub epochs: usize,
    pub metric: MetricKind,
    /// Metrics before the first update.
    pub initial: Evaluation,
    /// Epoch with the highest validation metric; `None` when no epoch beat the
    /// initial evaluation.
    pub best_epoch: Option<usize>,
    pub best_val: f64,
    pub test_at_best_val: f64,
    pub final_loss: Option<f64>,
    pub param_count: usize,
    pub params: ParamBreakdown,
    /// Epochs per second of the training loop (forward, backward, step, eval).
    pub throughput: f64,
    pub train_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub summary: RunSummary,
    pub reports: Vec<EpochReport>,
}

/// Gradients of the master-owned parameters from the last backward pass.
#[derive(Clone, Debug, Default)]
struct HeadGrads<T> {
    fusion: Option<Vec<Matrix<T>>>,
    encoding: Option<Matrix<T>>,
    classifier: Vec<Matrix<T>>,
}

struct Head<T> {
    fusion: Option<(Mlp<T>, Adam<T>)>,
    encoding: Option<(SliceEncoding<T>, Adam<T>)>,
    classifier: Mlp<T>,
    classifier_adam: Adam<T>,
    rng: DetRng,
    grads: Option<HeadGrads<T>>,
}

impl<T: Real> Head<T> {
    fn named_parameters_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        let mut out = Vec::new();
        if let Some((ff, _)) = &mut self.fusion {
            out.extend(mlp_names("fusion", ff.parameters().len()).into_iter().zip(ff.parameters_mut()));
        }
        if let Some((enc, _)) = &mut self.encoding {
            out.push(("encoding".to_string(), enc.table_mut()));
        }
        let n = self.classifier.parameters().len();
        out.extend(mlp_names("classifier", n).into_iter().zip(self.classifier.parameters_mut()));
        out
    }

    fn named_gradients(&self) -> Option<Vec<(String, Matrix<T>)>> {
        let g = self.grads.as_ref()?;
        let mut out = Vec::new();
        if let Some(f) = &g.fusion {
            out.extend(mlp_names("fusion", f.len()).into_iter().zip(f.iter().cloned()));
        }
        if let Some(e) = &g.encoding {
            out.push(("encoding".to_string(), e.clone()));
        }
        out.extend(mlp_names("classifier", g.classifier.len()).into_iter().zip(g.classifier.iter().cloned()));
        Some(out)
    }

    fn num_params(&self) -> (usize, usize, usize) {
        (
            self.fusion.as_ref().map_or(0, |(f, _)| f.num_params()),
            self.encoding.as_ref().map_or(0, |(e, _)| e.table().len()),
            self.classifier.num_params(),
        )
    }
}

fn mlp_names(prefix: &str, count: usize) -> Vec<String> {
    (0..count)
        .map(|k| format!("{prefix}.layer{}.{}", k / 2, if k % 2 == 0 { "weight" } else { "bias" }))
        .collect()
}

/// Everything one forward pass leaves behind for the backward pass.
pub struct ForwardPass<T> {
    pub loss: T,
    pub logits: Matrix<T>,
    /// Gathered representation `[H^0 | H^1 | ...]` fed to the classifier.
    pub hidden: Matrix<T>,
    /// Loss gradient with respect to all logits (zero outside the train split).
    pub d_logits: Matrix<T>,
    classifier_cache: MlpCache<T>,
    fusion_cache: Option<MlpCache<T>>,
}

/// A built training run: device workers, master head and the data they share.
pub struct Run<T: Real> {
    config: TrainConfig,
    shape: ModelShape,
    strategy: SliceStrategy,
    metric: MetricKind,
    features: Arc<Matrix<T>>,
    labels: Vec<u32>,
    num_classes: usize,
    train_nodes: Vec<usize>,
    train_labels: Vec<usize>,
    val_nodes: Vec<usize>,
    test_nodes: Vec<usize>,
    head: Head<T>,
    exec: Executor<T>,
    worker_params: usize,
}

/// Sets up workers, head and slice strategy for `graph` under `config`.
pub fn build_run<T: Real>(graph: &AttributedGraph, config: &TrainConfig) -> Result<Run<T>> {
    config.validate()?;
    let p = config.devices;
    let d = graph.num_features();
    if p > d {
        return Err(Error::InvalidArgument(format!(
            "{p} devices exceed the {d} feature columns"
        )));
    }
    let variant = config.variant;
    let scale = if variant == Variant::Baseline { 1.0 } else { config.slice_scale };
    let strategy = slice_strategy_generator(d, p, scale)?;
    let shape = model_shape(config, d, graph.num_classes());
    let h_out = shape.worker_hidden();
    let w_in = if shape.fusion { fusion_width(d, p) } else { strategy.width() };

    let features: Arc<Matrix<T>> = Arc::new(graph.features().cast());
    let adj = Arc::new(NormalizedAdjacency::<T>::from_graph(graph));

    let slices = if shape.fusion {
        None
    } else if variant == Variant::Baseline {
        Some(vec![Arc::clone(&features)])
    } else {
        Some(slice_feature(&features, &strategy)?.into_iter().map(Arc::new).collect::<Vec<_>>())
    };
    let mut workers = Vec::with_capacity(p);
    for i in 0..p {
        let rng = DetRng::new(config.seed, i as u64);
        let w = Worker::new(i, w_in, h_out, config.layers, config.form, config.dropout, config.relu_over_sum, rng);
        workers.push(match &slices {
            Some(s) => w.with_resident_input(Arc::clone(&s[i])),
            None => w,
        });
    }
    let worker_params = workers.iter().map(Worker::num_params).sum();

    let adam = || Adam::new(AdamConfig::default());
    let fusion = if shape.fusion {
        let mut rng = DetRng::new(config.seed, FUSION_STREAM);
        Some((init_feature_fusion(d, p, config.dropout, &mut rng)?, adam()))
    } else {
        None
    };
    let encoding = shape.encoding.then(|| {
        let mut rng = DetRng::new(config.seed, ENCODING_STREAM);
        (SliceEncoding::new(p, h_out, &mut rng), adam())
    });
    let classifier = Mlp::new(
        &shape.classifier_dims(),
        config.dropout,
        &mut DetRng::new(config.seed, CLASSIFIER_STREAM),
    )?;
    let head = Head {
        fusion,
        encoding,
        classifier,
        classifier_adam: adam(),
        rng: DetRng::new(config.seed, DROPOUT_STREAM),
        grads: None,
    };

    let train_nodes = graph.split_indices(Split::Train);
    if train_nodes.is_empty() {
        return Err(Error::Empty("the training split is empty".into()));
    }
    let labels = graph.labels().to_vec();
    let train_labels = train_nodes.iter().map(|&v| labels[v] as usize).collect();
    let threads = config.threads.unwrap_or(p);
    debug!("building run: p={p}, w_in={w_in}, h_out={h_out}, threads={threads}");

    Ok(Run {
        config: config.clone(),
        shape,
        strategy,
        metric: config.metric.resolve(graph.num_classes()),
        features,
        labels,
        num_classes: graph.num_classes(),
        train_nodes,
        train_labels,
        val_nodes: graph.split_indices(Split::Val),
        test_nodes: graph.split_indices(Split::Test),
        head,
        exec: Executor::new(adj, workers, threads)?,
        worker_params,
    })
}

fn expect_output<T>(reply: Reply<T>) -> Result<Matrix<T>> {
    match reply {
        Reply::Output(m) => Ok(m),
        other => Err(unexpected(other)),
    }
}

fn unexpected<T>(reply: Reply<T>) -> Error {
    let kind = match reply {
        Reply::Output(_) => "output",
        Reply::InputGrad(_) => "input gradient",
        Reply::Named(_) => "named matrices",
        Reply::Done => "done",
    };
    Error::Worker {
        device: usize::MAX,
        message: format!("unexpected {kind} reply"),
    }
}

impl<T: Real> Run<T> {
    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn strategy(&self) -> &SliceStrategy {
        &self.strategy
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    /// Per-device input width.
    pub fn worker_input_width(&self) -> usize {
        if self.shape.fusion {
            fusion_width(self.shape.input_dim, self.shape.devices)
        } else {
            self.strategy.width()
        }
    }

    /// Per-device representation width.
    pub fn worker_hidden_width(&self) -> usize {
        self.shape.worker_hidden()
    }

    /// Parameter counts of the built model, read off the actual matrices.
    pub fn param_breakdown(&self) -> ParamBreakdown {
        let (fusion, encoding, classifier) = self.head.num_params();
        ParamBreakdown {
            workers: self.worker_params,
            fusion,
            encoding,
            classifier,
        }
    }

    /// Full forward pass. With `training` the dropout masks are drawn and every
    /// cache needed by [`backward`](Self::backward) is kept.
    pub fn forward(&mut self, training: bool) -> Result<ForwardPass<T>> {
        let fused = match &self.head.fusion {
            Some((ff, _)) => {
                let (z, cache) = feature_fusion_forward(&self.features, ff, &mut self.head.rng, training)?;
                Some((Arc::new(z), cache))
            }
            None => None,
        };
        let input = fused.as_ref().map(|(z, _)| z);
        let outputs = self.exec.broadcast(|_| Command::Forward {
            input: input.cloned(),
            training,
        })?;
        let mut blocks = Vec::with_capacity(outputs.len());
        for (i, reply) in outputs.into_iter().enumerate() {
            let h = expect_output(reply)?;
            blocks.push(match &self.head.encoding {
                Some((enc, _)) => enc.encode(h, i)?,
                None => h,
            });
        }
        let hidden = Matrix::hcat(&blocks)?;
        drop(blocks);
        let (logits, classifier_cache) = self.head.classifier.forward(&hidden, training, &mut self.head.rng)?;
        let (loss, d_train) = softmax_cross_entropy(&logits.select_rows(&self.train_nodes)?, &self.train_labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss is {loss}")));
        }
        let d_logits = d_train.scatter_rows(logits.rows(), &self.train_nodes)?;
        Ok(ForwardPass {
            loss,
            logits,
            hidden,
            d_logits,
            classifier_cache,
            fusion_cache: fused.map(|(_, c)| c),
        })
    }

    /// Backpropagates the training loss of `pass`.
    pub fn backward(&mut self, pass: &ForwardPass<T>) -> Result<()> {
        self.backward_from(pass, &pass.d_logits)
    }

    /// Backpropagates an arbitrary logit gradient through the whole system.
    /// Device gradients stay on the devices until [`step`](Self::step).
    pub fn backward_from(&mut self, pass: &ForwardPass<T>, d_logits: &Matrix<T>) -> Result<()> {
        let (classifier, d_hidden) =
            self.head
                .classifier
                .backward(&pass.hidden, &pass.classifier_cache, d_logits, true)?;
        let d_hidden = d_hidden.expect("input gradient was requested");
        let p = self.exec.devices();
        let blocks = d_hidden.split_columns(&vec![self.shape.worker_hidden(); p])?;
        let encoding = match &self.head.encoding {
            Some((enc, _)) => Some(enc.backward(&blocks)?),
            None => None,
        };
        let need_input_grad = self.head.fusion.is_some();
        let mut blocks = blocks.into_iter();
        let replies = self.exec.broadcast(|_| Command::Backward {
            grad: blocks.next().expect("one block per device"),
            need_input_grad,
        })?;
        let fusion = match (&self.head.fusion, &pass.fusion_cache) {
            (Some((ff, _)), Some(cache)) => {
                let mut d_inputs = Vec::with_capacity(p);
                for reply in replies {
                    match reply {
                        Reply::InputGrad(Some(g)) => d_inputs.push(g),
                        other => return Err(unexpected(other)),
                    }
                }
                let d_z = accumulate_worker_grads(&d_inputs)?;
                Some(feature_fusion_backward(&self.features, ff, cache, &d_z)?)
            }
            (Some(_), None) => {
                return Err(Error::InvalidArgument("forward pass has no fusion cache".into()));
            }
            _ => None,
        };
        self.head.grads = Some(HeadGrads {
            fusion,
            encoding,
            classifier,
        });
        Ok(())
    }

    /// One Adam step on every parameter group with learning rate `lr`.
    pub fn step(&mut self, lr: f64) -> Result<()> {
        for reply in self.exec.broadcast(|_| Command::Step { lr })? {
            if !matches!(reply, Reply::Done) {
                return Err(unexpected(reply));
            }
        }
        let grads = self
            .head
            .grads
            .take()
            .ok_or_else(|| Error::InvalidArgument("optimizer step without a backward pass".into()))?;
        if let (Some((ff, adam)), Some(g)) = (&mut self.head.fusion, &grads.fusion) {
            adam.step(ff.parameters_mut(), g, lr)?;
        }
        if let (Some((enc, adam)), Some(g)) = (&mut self.head.encoding, &grads.encoding) {
            adam.step(vec![enc.table_mut()], std::slice::from_ref(g), lr)?;
        }
        self.head
            .classifier_adam
            .step(self.head.classifier.parameters_mut(), &grads.classifier, lr)
    }

    fn collect_named(&mut self, command: impl Fn() -> Command<T>) -> Result<Vec<(String, Matrix<T>)>> {
        let mut out = Vec::new();
        for reply in self.exec.broadcast(|_| command())? {
            match reply {
                Reply::Named(v) => out.extend(v),
                other => return Err(unexpected(other)),
            }
        }
        Ok(out)
    }

    /// Every parameter group by name: devices in order, then fusion,
    /// encoding and classifier.
    pub fn parameters(&mut self) -> Result<Vec<(String, Matrix<T>)>> {
        let mut out = self.collect_named(|| Command::Parameters)?;
        out.extend(
            self.head
                .named_parameters_mut()
                .into_iter()
                .map(|(n, m)| (n, m.clone())),
        );
        Ok(out)
    }

    /// Gradients from the last backward pass, named and ordered like
    /// [`parameters`](Self::parameters).
    pub fn gradients(&mut self) -> Result<Vec<(String, Matrix<T>)>> {
        let mut out = self.collect_named(|| Command::Gradients)?;
        out.extend(
            self.head
                .named_gradients()
                .ok_or_else(|| Error::InvalidArgument("no backward pass has run".into()))?,
        );
        Ok(out)
    }

    /// Overwrites one parameter group by name.
    pub fn set_parameter(&mut self, name: &str, value: Matrix<T>) -> Result<()> {
        if let Some(rest) = name.strip_prefix("worker") {
            let device: usize = rest
                .split('.')
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("bad parameter name `{name}`")))?;
            let names = match self.exec.dispatch(vec![(device, Command::Parameters)])?.pop() {
                Some(Reply::Named(v)) => v,
                Some(other) => return Err(unexpected(other)),
                None => return Err(Error::InvalidArgument(format!("no device {device}"))),
            };
            let index = names
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))?;
            self.exec.dispatch(vec![(device, Command::SetParameter { index, value })])?;
            return Ok(());
        }
        let mut params = self.head.named_parameters_mut();
        let (_, slot) = params
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))?;
        if slot.shape() != value.shape() {
            return Err(Error::shape("set parameter", slot.shape(), value.shape()));
        }
        **slot = value;
        Ok(())
    }

    /// Split metrics from a dropout-free forward pass.
    pub fn evaluate(&mut self) -> Result<Evaluation> {
        let pass = self.forward(false)?;
        let metric = |nodes: &[usize]| evaluate(&pass.logits, &self.labels, nodes, self.num_classes, self.metric);
        Ok(Evaluation {
            train: metric(&self.train_nodes)?,
            val: metric(&self.val_nodes)?,
            test: metric(&self.test_nodes)?,
        })
    }

    /// Forward, backward and step at the cosine learning rate for `epoch`,
    /// followed by an evaluation pass.
    pub fn train_epoch(&mut self, epoch: usize) -> Result<EpochReport> {
        let start = Instant::now();
        let c = &self.config;
        let lr = cosine_lr(epoch, c.epochs, c.lr, c.lr_min);
        let tag = |e: Error| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}: {m}")),
            other => other,
        };
        let pass = self.forward(true).map_err(tag)?;
        let loss = pass.loss.to_f64_lossless();
        self.backward(&pass).map_err(tag)?;
        drop(pass);
        self.step(lr).map_err(tag)?;
        let eval = self.evaluate().map_err(tag)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        debug!(
            "epoch {epoch}: lr {lr:.3e} loss {loss:.6} train {:.4} val {:.4} test {:.4} ({wall_ms:.1} ms)",
            eval.train, eval.val, eval.test
        );
        Ok(EpochReport {
            epoch,
            lr,
            loss,
            train_metric: eval.train,
            val_metric: eval.val,
            test_metric: eval.test,
            wall_ms,
        })
    }

    /// Runs the configured number of epochs after an initial evaluation.
    pub fn train(&mut self) -> Result<TrainOutcome> {
        let initial = self.evaluate()?;
        let mut reports = Vec::with_capacity(self.config.epochs);
        let mut best_epoch = None;
        let (mut best_val, mut test_at_best_val) = (initial.val, initial.test);
        let start = Instant::now();
        for epoch in 0..self.config.epochs {
            let r = self.train_epoch(epoch)?;
            if r.val_metric > best_val {
                best_epoch = Some(epoch);
                best_val = r.val_metric;
                test_at_best_val = r.test_metric;
            }
            reports.push(r);
        }
        let train_seconds = start.elapsed().as_secs_f64();
        let epochs = reports.len();
        let summed: f64 = reports.iter().map(|r| r.wall_ms).sum::<f64>() / 1e3;
        let throughput = if epochs == 0 || summed <= 0.0 { 0.0 } else { epochs as f64 / summed };
        let params = self.param_breakdown();
        info!(
            "{} p={}: best val {best_val:.4} test@best {test_at_best_val:.4}, {throughput:.3} epochs/s",
            self.config.variant, self.config.devices
        );
        Ok(TrainOutcome {
            summary: RunSummary {
                epochs,
                metric: self.metric,
                initial,
                best_epoch,
                best_val,
                test_at_best_val,
                final_loss: reports.last().map(|r| r.loss),
                param_count: params.total(),
                params,
                throughput,
                train_seconds,
            },
            reports,
        })
    }
}

/// Builds a run and trains it.
pub fn train<T: Real>(graph: &AttributedGraph, config: &TrainConfig) -> Result<TrainOutcome> {
    build_run::<T>(graph, config)?.train()
}

/// Parameter counts for `config` on a graph with the given widths, without
/// building anything.
pub fn model_shape(config: &TrainConfig, num_features: usize, num_classes: usize) -> ModelShape {
    ModelShape {
        input_dim: num_features,
        hidden: config.hidden,
        layers: config.layers,
        num_classes,
        devices: config.devices,
        fusion: config.variant.uses_fusion(),
        encoding: config.variant.uses_encoding(),
        form: config.form,
        slice_scale: if config.variant == Variant::Baseline { 1.0 } else { config.slice_scale },
        classifier_layers: config.classifier_layers,
    }
}

/// Convenience for reports: `count_params` of [`model_shape`].
pub fn expected_params(config: &TrainConfig, num_features: usize, num_classes: usize) -> ParamBreakdown {
    count_params(&model_shape(config, num_features, num_classes))
}
