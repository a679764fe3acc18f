use crate::error::{Error, Result};
use crate::tensor::{dropout, glorot_init, relu, relu_backward, DetRng, DropoutMask, Matrix, Real};

#[derive(Clone, Debug, PartialEq)]
struct Dense<T> {
    weight: Matrix<T>,
    bias: Matrix<T>,
}

impl<T: Real> Dense<T> {
    fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut y = x.matmul(&self.weight)?;
        y.add_row_broadcast(&self.bias)?;
        Ok(y)
    }
}

/// Fully connected stack: `ReLU` then dropout between layers, raw output from
/// the last layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
    dropout: f64,
}

#[derive(Clone, Debug)]
struct HiddenCache<T> {
    pre: Matrix<T>,
    out: Matrix<T>,
    mask: Option<DropoutMask>,
}

/// Intermediates of one forward pass, consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct MlpCache<T> {
    hidden: Vec<HiddenCache<T>>,
}

impl<T: Real> Mlp<T> {
    /// Glorot-uniform weights and zero biases for layer widths `dims[0] -> dims[1] -> ...`.
    pub fn new(dims: &[usize], dropout: f64, rng: &mut DetRng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid MLP widths {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| Dense {
                weight: glorot_init(w[0], w[1], rng),
                bias: Matrix::zeros(1, w[1]),
            })
            .collect();
        Ok(Self { layers, dropout })
    }

    /// Builds from explicit `(weight, bias)` pairs; biases are `1 × out`.
    pub fn from_layers(layers: Vec<(Matrix<T>, Matrix<T>)>, dropout: f64) -> Result<Self> {
        let mut prev: Option<usize> = None;
        for (w, b) in &layers {
            if b.shape() != (1, w.cols()) || prev.is_some_and(|p| p != w.rows()) {
                return Err(Error::shape("mlp layers", w.shape(), b.shape()));
            }
            prev = Some(w.cols());
        }
        if layers.is_empty() {
            return Err(Error::InvalidArgument("MLP needs at least one layer".into()));
        }
        Ok(Self {
            layers: layers
                .into_iter()
                .map(|(weight, bias)| Dense { weight, bias })
                .collect(),
            dropout,
        })
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].weight.rows())
            .chain(self.layers.iter().map(|l| l.weight.cols()))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weight.cols()).unwrap_or(0)
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// `[W0, b0, W1, b1, ...]`.
    pub fn parameters(&self) -> Vec<&Matrix<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn forward(&self, x: &Matrix<T>, training: bool, rng: &mut DetRng) -> Result<(Matrix<T>, MlpCache<T>)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("mlp forward", x.shape(), self.layers[0].weight.shape()));
        }
        let last = self.layers.len() - 1;
        let mut hidden: Vec<HiddenCache<T>> = Vec::with_capacity(last);
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = match hidden.last() {
                Some(prev) => layer.forward(&prev.out)?,
                None => layer.forward(x)?,
            };
            if i == last {
                return Ok((pre, MlpCache { hidden }));
            }
            let (out, mask) = dropout(&relu(&pre), self.dropout, training, rng)?;
            hidden.push(HiddenCache { pre, out, mask });
        }
        unreachable!("an MLP has at least one layer")
    }

    /// Returns parameter gradients in [`parameters`](Self::parameters) order,
    /// and the input gradient when `need_input_grad`.
    #[allow(clippy::type_complexity)]
    pub fn backward(
        &self,
        x: &Matrix<T>,
        cache: &MlpCache<T>,
        d_out: &Matrix<T>,
        need_input_grad: bool,
    ) -> Result<(Vec<Matrix<T>>, Option<Matrix<T>>)> {
        if cache.hidden.len() + 1 != self.layers.len() {
            return Err(Error::InvalidArgument("MLP cache does not match the network".into()));
        }
        if d_out.cols() != self.output_dim() || d_out.rows() != x.rows() {
            return Err(Error::shape("mlp backward", d_out.shape(), (x.rows(), self.output_dim())));
        }
        let mut grads = vec![None; self.layers.len() * 2];
        let mut delta = d_out.clone();
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 { x } else { &cache.hidden[i - 1].out };
            let layer = &self.layers[i];
            grads[2 * i] = Some(input.matmul_tn(&delta)?);
            grads[2 * i + 1] = Some(delta.column_sums());
            if i == 0 {
                let dx = if need_input_grad {
                    Some(delta.matmul_nt(&layer.weight)?)
                } else {
                    None
                };
                return Ok((grads.into_iter().map(Option::unwrap).collect(), dx));
            }
            let d_hidden = delta.matmul_nt(&layer.weight)?;
            let h = &cache.hidden[i - 1];
            let d_hidden = match &h.mask {
                Some(mask) => mask.apply(&d_hidden)?,
                None => d_hidden,
            };
            delta = relu_backward(&h.pre, &d_hidden)?;
        }
        unreachable!("loop returns at layer 0")
    }
}
