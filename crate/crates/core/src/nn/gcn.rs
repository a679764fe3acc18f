//! Graph convolution layers.
//!
//! Two layer forms are supported:
//!
//! * aggregation only: `H' = ReLU(b + Â·H·W_agg)`
//! * aggregation plus self path: `H' = ReLU(b + Â·H·W_agg) + H·W_self`
//!
//! where `Â = D^-1/2 A D^-1/2` (no self loops). With `relu_over_sum` the second
//! form becomes `ReLU(b + Â·H·W_agg + H·W_self)`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, CsrAdjacency};
use crate::tensor::{
    dropout, glorot_init, relu, relu_backward, spmm_norm, spmm_norm_transpose, DetRng, DropoutMask,
    Matrix, Real,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerForm {
    /// Neighbor aggregation only.
    #[serde(rename = "eq1")]
    Aggregate,
    /// Neighbor aggregation plus a separate self-update weight.
    #[default]
    #[serde(rename = "eq6")]
    AggregateSelf,
}

impl LayerForm {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerForm::Aggregate => "eq1",
            LayerForm::AggregateSelf => "eq6",
        }
    }

    pub fn has_self_path(self) -> bool {
        self == LayerForm::AggregateSelf
    }
}

impl FromStr for LayerForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eq1" => Ok(LayerForm::Aggregate),
            "eq6" => Ok(LayerForm::AggregateSelf),
            other => Err(format!("unknown layer form `{other}` (expected eq1 or eq6)")),
        }
    }
}

/// The CSR structure together with `s = D^-1/2` in the run precision.
#[derive(Clone, Debug)]
pub struct NormalizedAdjacency<T> {
    adj: CsrAdjacency,
    scale: Vec<T>,
}

impl<T: Real> NormalizedAdjacency<T> {
    pub fn new(adj: CsrAdjacency, scale: &[f64]) -> Result<Self> {
        if scale.len() != adj.num_nodes() {
            return Err(Error::shape(
                "normalized adjacency",
                (adj.num_nodes(), 1),
                (scale.len(), 1),
            ));
        }
        Ok(Self {
            adj,
            scale: scale.iter().map(|&s| T::of(s)).collect(),
        })
    }

    pub fn from_graph(graph: &AttributedGraph) -> Self {
        Self {
            adj: graph.adjacency().clone(),
            scale: graph.norm_scale().iter().map(|&s| T::of(s)).collect(),
        }
    }

    pub fn adjacency(&self) -> &CsrAdjacency {
        &self.adj
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.num_nodes()
    }

    pub fn aggregate(&self, h: &Matrix<T>) -> Result<Matrix<T>> {
        spmm_norm(&self.adj, &self.scale, h)
    }

    /// Adjoint of [`aggregate`](Self::aggregate). For a symmetric adjacency
    /// the operator is self-adjoint and the forward kernel is reused.
    pub fn aggregate_adjoint(&self, g: &Matrix<T>) -> Result<Matrix<T>> {
        if self.adj.is_symmetric() {
            spmm_norm(&self.adj, &self.scale, g)
        } else {
            spmm_norm_transpose(&self.adj, &self.scale, g)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerOptions {
    pub relu_over_sum: bool,
    /// Dropout on the layer output; zero for the last layer.
    pub dropout: f64,
    pub training: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayer<T> {
    w_agg: Matrix<T>,
    w_self: Option<Matrix<T>>,
    bias: Matrix<T>,
}

/// Forward intermediates of one layer. The layer input itself is not stored;
/// callers pass it again to [`GcnLayer::backward`].
#[derive(Clone, Debug)]
pub struct GcnCache<T> {
    /// `Â·H` when the layer aggregated before transforming.
    aggregated: Option<Matrix<T>>,
    /// Argument of the ReLU.
    pre: Matrix<T>,
    mask: Option<DropoutMask>,
    relu_over_sum: bool,
}

/// Gradients in [`GcnLayer::parameters`] order.
pub type GcnGrads<T> = Vec<Matrix<T>>;

impl<T: Real> GcnLayer<T> {
    /// Glorot-uniform `W_agg` (then `W_self`), zero bias.
    pub fn new(w_in: usize, w_out: usize, form: LayerForm, rng: &mut DetRng) -> Self {
        let w_agg = glorot_init(w_in, w_out, rng);
        let w_self = form.has_self_path().then(|| glorot_init(w_in, w_out, rng));
        Self {
            w_agg,
            w_self,
            bias: Matrix::zeros(1, w_out),
        }
    }

    pub fn from_parts(w_agg: Matrix<T>, w_self: Option<Matrix<T>>, bias: Matrix<T>) -> Result<Self> {
        if bias.shape() != (1, w_agg.cols()) {
            return Err(Error::shape("gcn bias", w_agg.shape(), bias.shape()));
        }
        if let Some(ws) = &w_self {
            if ws.shape() != w_agg.shape() {
                return Err(Error::shape("gcn self weight", w_agg.shape(), ws.shape()));
            }
        }
        Ok(Self { w_agg, w_self, bias })
    }

    pub fn form(&self) -> LayerForm {
        if self.w_self.is_some() {
            LayerForm::AggregateSelf
        } else {
            LayerForm::Aggregate
        }
    }

    pub fn input_width(&self) -> usize {
        self.w_agg.rows()
    }

    pub fn output_width(&self) -> usize {
        self.w_agg.cols()
    }

    pub fn w_agg(&self) -> &Matrix<T> {
        &self.w_agg
    }

    pub fn w_self(&self) -> Option<&Matrix<T>> {
        self.w_self.as_ref()
    }

    pub fn bias(&self) -> &Matrix<T> {
        &self.bias
    }

    pub fn num_params(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// `[W_agg, W_self (if present), b]`.
    pub fn parameters(&self) -> Vec<&Matrix<T>> {
        let mut out = vec![&self.w_agg];
        out.extend(self.w_self.as_ref());
        out.push(&self.bias);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = vec![&mut self.w_agg];
        out.extend(self.w_self.as_mut());
        out.push(&mut self.bias);
        out
    }

    /// Aggregating first is cheaper when the layer widens; otherwise the
    /// transform runs first. Both orders compute `Â·H·W_agg`.
    fn aggregate_first(&self) -> bool {
        self.w_agg.rows() <= self.w_agg.cols()
    }

    pub fn forward(
        &self,
        adj: &NormalizedAdjacency<T>,
        h: &Matrix<T>,
        opts: LayerOptions,
        rng: &mut DetRng,
    ) -> Result<(Matrix<T>, GcnCache<T>)> {
        if h.cols() != self.input_width() || h.rows() != adj.num_nodes() {
            return Err(Error::shape("gcn forward", h.shape(), self.w_agg.shape()));
        }
        let (mut pre, aggregated) = if self.aggregate_first() {
            let a = adj.aggregate(h)?;
            (a.matmul(&self.w_agg)?, Some(a))
        } else {
            (adj.aggregate(&h.matmul(&self.w_agg)?)?, None)
        };
        pre.add_row_broadcast(&self.bias)?;
        let out = match &self.w_self {
            None => relu(&pre),
            Some(ws) if opts.relu_over_sum => {
                pre.add_assign(&h.matmul(ws)?)?;
                relu(&pre)
            }
            Some(ws) => {
                let mut out = relu(&pre);
                out.add_assign(&h.matmul(ws)?)?;
                out
            }
        };
        let (out, mask) = dropout(&out, opts.dropout, opts.training, rng)?;
        Ok((
            out,
            GcnCache {
                aggregated,
                pre,
                mask,
                relu_over_sum: opts.relu_over_sum,
            },
        ))
    }

    /// Gradients of all parameters, and of the layer input when requested.
    pub fn backward(
        &self,
        adj: &NormalizedAdjacency<T>,
        h: &Matrix<T>,
        cache: &GcnCache<T>,
        d_out: &Matrix<T>,
        need_input_grad: bool,
    ) -> Result<(GcnGrads<T>, Option<Matrix<T>>)> {
        if d_out.shape() != cache.pre.shape() {
            return Err(Error::shape("gcn backward", d_out.shape(), cache.pre.shape()));
        }
        if h.shape() != (adj.num_nodes(), self.input_width()) {
            return Err(Error::shape("gcn backward input", h.shape(), (adj.num_nodes(), self.input_width())));
        }
        let d = match &cache.mask {
            Some(mask) => mask.apply(d_out)?,
            None => d_out.clone(),
        };
        let d_pre = relu_backward(&cache.pre, &d)?;
        let d_self = if cache.relu_over_sum { &d_pre } else { &d };

        let mut grads = Vec::with_capacity(3);
        let mut d_h = None;
        match &cache.aggregated {
            Some(a) => {
                grads.push(a.matmul_tn(&d_pre)?);
                if need_input_grad {
                    d_h = Some(adj.aggregate_adjoint(&d_pre.matmul_nt(&self.w_agg)?)?);
                }
            }
            None => {
                let g = adj.aggregate_adjoint(&d_pre)?;
                grads.push(h.matmul_tn(&g)?);
                if need_input_grad {
                    d_h = Some(g.matmul_nt(&self.w_agg)?);
                }
            }
        }
        if let Some(ws) = &self.w_self {
            grads.push(h.matmul_tn(d_self)?);
            if let Some(dh) = d_h.as_mut() {
                dh.add_assign(&d_self.matmul_nt(ws)?)?;
            }
        }
        grads.push(d_pre.column_sums());
        Ok((grads, d_h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{degree_norms, EdgeMode};
    use crate::nn::testing::{numeric_grad, rel_err};

    fn random_graph(n: usize, p: f64, seed: u64, mode: EdgeMode) -> NormalizedAdjacency<f64> {
        let mut rng = DetRng::new(seed, 99);
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in 0..n as u32 {
                if u != v && (mode == EdgeMode::InNeighbors || u < v) && rng.uniform() < p {
                    edges.push((u, v));
                }
            }
        }
        let adj = CsrAdjacency::from_edges(n, &edges, mode).unwrap();
        let s = degree_norms(&adj);
        NormalizedAdjacency::new(adj, &s).unwrap()
    }

    fn opts(relu_over_sum: bool) -> LayerOptions {
        LayerOptions {
            relu_over_sum,
            dropout: 0.0,
            training: true,
        }
    }

    #[test]
    fn edgeless_graph_reduces_to_self_path() {
        let adj = random_graph(5, 0.0, 1, EdgeMode::Symmetrize);
        let mut rng = DetRng::new(1, 0);
        let layer: GcnLayer<f64> = GcnLayer::new(3, 4, LayerForm::AggregateSelf, &mut rng);
        let h = Matrix::from_fn(5, 3, |_, _| rng.normal());
        let (out, _) = layer.forward(&adj, &h, opts(false), &mut rng).unwrap();
        assert_eq!(out, h.matmul(layer.w_self().unwrap()).unwrap());
    }

    #[test]
    fn identity_self_path() {
        let adj = random_graph(6, 0.5, 2, EdgeMode::Symmetrize);
        let layer = GcnLayer::from_parts(
            Matrix::<f64>::zeros(3, 3),
            Some(Matrix::identity(3)),
            Matrix::zeros(1, 3),
        )
        .unwrap();
        let mut rng = DetRng::new(2, 0);
        let h = Matrix::from_fn(6, 3, |_, _| rng.normal());
        let (out, _) = layer.forward(&adj, &h, opts(false), &mut rng).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn single_edge_matches_dense_formula() {
        // Â = [[0,1],[1,0]] for one edge between degree-1 nodes
        let adj = CsrAdjacency::from_edges(2, &[(0, 1)], EdgeMode::Symmetrize).unwrap();
        let adj = NormalizedAdjacency::<f64>::new(adj.clone(), &degree_norms(&adj)).unwrap();
        let w = Matrix::from_f64(2, 2, &[1., -1., 2., 0.5]).unwrap();
        let b = Matrix::from_f64(1, 2, &[0.1, -3.0]).unwrap();
        let layer = GcnLayer::from_parts(w, None, b).unwrap();
        let h = Matrix::from_f64(2, 2, &[1., 2., 3., 4.]).unwrap();
        let (out, _) = layer.forward(&adj, &h, opts(false), &mut DetRng::new(0, 0)).unwrap();
        // row 0 gets h[1]·W = [3+8, -3+2] = [11, -1]; +b -> [11.1, -4] -> relu [11.1, 0]
        // row 1 gets h[0]·W = [1+4, -1+1] = [5, 0];   +b -> [5.1, -3] -> relu [5.1, 0]
        let expected = Matrix::from_f64(2, 2, &[11.1, 0., 5.1, 0.]).unwrap();
        assert!(out.max_abs_diff(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn zero_upstream_gradient() {
        let adj = random_graph(8, 0.4, 3, EdgeMode::Symmetrize);
        let mut rng = DetRng::new(3, 0);
        let layer: GcnLayer<f64> = GcnLayer::new(4, 3, LayerForm::AggregateSelf, &mut rng);
        let h = Matrix::from_fn(8, 4, |_, _| rng.normal());
        let (out, cache) = layer.forward(&adj, &h, opts(false), &mut rng).unwrap();
        let zero = Matrix::zeros(out.rows(), out.cols());
        let (grads, dh) = layer.backward(&adj, &h, &cache, &zero, true).unwrap();
        assert!(grads.iter().chain(dh.iter()).all(|g| g.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn self_weight_gradient_with_zero_aggregation() {
        let adj = random_graph(8, 0.4, 4, EdgeMode::Symmetrize);
        let mut rng = DetRng::new(4, 0);
        let ws = glorot_init(4, 3, &mut rng);
        let layer = GcnLayer::from_parts(Matrix::<f64>::zeros(4, 3), Some(ws), Matrix::zeros(1, 3)).unwrap();
        let h = Matrix::from_fn(8, 4, |_, _| rng.normal());
        let (_, cache) = layer.forward(&adj, &h, opts(false), &mut rng).unwrap();
        let d = Matrix::from_fn(8, 3, |_, _| rng.normal());
        let (grads, _) = layer.backward(&adj, &h, &cache, &d, false).unwrap();
        assert_eq!(grads[1], h.matmul_tn(&d).unwrap());
    }

    fn check_gradients(adj: &NormalizedAdjacency<f64>, w_in: usize, w_out: usize, form: LayerForm, relu_over_sum: bool, seed: u64) {
        let mut rng = DetRng::new(seed, 0);
        let mut layer: GcnLayer<f64> = GcnLayer::new(w_in, w_out, form, &mut rng);
        for b in layer.bias.data_mut() {
            *b = 0.1 * rng.normal();
        }
        let n = adj.num_nodes();
        let h = Matrix::from_fn(n, w_in, |_, _| rng.normal());
        let probe = Matrix::from_fn(n, w_out, |_, _| rng.normal());
        let o = opts(relu_over_sum);
        let loss = |l: &GcnLayer<f64>, h: &Matrix<f64>| {
            let (out, _) = l.forward(adj, h, o, &mut DetRng::new(0, 0)).unwrap();
            out.hadamard(&probe).unwrap().data().iter().sum::<f64>()
        };
        let (_, cache) = layer.forward(adj, &h, o, &mut DetRng::new(0, 0)).unwrap();
        let (grads, dh) = layer.backward(adj, &h, &cache, &probe, true).unwrap();
        for (k, analytic) in grads.iter().enumerate() {
            let numeric = numeric_grad(layer.parameters()[k], |p| {
                let mut l = layer.clone();
                *l.parameters_mut()[k] = p.clone();
                loss(&l, &h)
            });
            let err = rel_err(analytic, &numeric);
            assert!(err < 1e-5, "{form:?} {w_in}->{w_out} param {k}: {err}");
        }
        let numeric = numeric_grad(&h, |hp| loss(&layer, hp));
        let err = rel_err(&dh.unwrap(), &numeric);
        assert!(err < 1e-5, "{form:?} {w_in}->{w_out} input: {err}");
    }

    #[test]
    fn gradients_match_finite_differences_on_thirty_nodes() {
        let adj = random_graph(30, 0.15, 5, EdgeMode::Symmetrize);
        for (w_in, w_out) in [(3, 5), (6, 2)] {
            check_gradients(&adj, w_in, w_out, LayerForm::AggregateSelf, false, 10);
            check_gradients(&adj, w_in, w_out, LayerForm::AggregateSelf, true, 11);
            check_gradients(&adj, w_in, w_out, LayerForm::Aggregate, false, 12);
        }
    }

    #[test]
    fn gradients_on_directed_graph() {
        let adj = random_graph(20, 0.15, 6, EdgeMode::InNeighbors);
        assert!(!adj.adjacency().is_symmetric());
        check_gradients(&adj, 3, 5, LayerForm::AggregateSelf, false, 13);
        check_gradients(&adj, 6, 2, LayerForm::AggregateSelf, false, 14);
    }

    #[test]
    fn self_path_without_aggregation_is_affine() {
        // W_agg = 0: output = ReLU(b) + H·W_self
        let adj = random_graph(7, 0.5, 7, EdgeMode::Symmetrize);
        let mut rng = DetRng::new(7, 0);
        let ws = glorot_init(3, 2, &mut rng);
        let b = Matrix::from_f64(1, 2, &[0.7, -0.2]).unwrap();
        let layer = GcnLayer::from_parts(Matrix::<f64>::zeros(3, 2), Some(ws.clone()), b).unwrap();
        let h = Matrix::from_fn(7, 3, |_, _| rng.normal());
        let (out, _) = layer.forward(&adj, &h, opts(false), &mut rng).unwrap();
        let mut expected = h.matmul(&ws).unwrap();
        expected.add_row_broadcast(&Matrix::from_f64(1, 2, &[0.7, 0.0]).unwrap()).unwrap();
        assert!(out.max_abs_diff(&expected).unwrap() < 1e-15);
    }

    #[test]
    fn form_parsing() {
        assert_eq!("eq1".parse::<LayerForm>().unwrap(), LayerForm::Aggregate);
        assert_eq!("eq6".parse::<LayerForm>().unwrap(), LayerForm::AggregateSelf);
        assert!("eq7".parse::<LayerForm>().is_err());
    }
}
