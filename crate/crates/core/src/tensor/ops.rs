use super::{DetRng, Matrix, Real};
use crate::error::{Error, Result};

/// Glorot-uniform weights: entries uniform in `[-a, a]`, `a = sqrt(6 / (rows + cols))`.
pub fn glorot_init<T: Real>(rows: usize, cols: usize, rng: &mut DetRng) -> Matrix<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| T::of((2.0 * rng.uniform() - 1.0) * bound))
}

pub fn relu<T: Real>(a: &Matrix<T>) -> Matrix<T> {
    a.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`]; the subgradient at exactly zero is zero.
pub fn relu_backward<T: Real>(input: &Matrix<T>, d_out: &Matrix<T>) -> Result<Matrix<T>> {
    if input.shape() != d_out.shape() {
        return Err(Error::shape("relu_backward", input.shape(), d_out.shape()));
    }
    let data = input
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Matrix::from_vec(input.rows(), input.cols(), data)
}

/// Kept positions of an inverted-dropout draw.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    keep: Vec<bool>,
    scale: f64,
}

impl DropoutMask {
    pub fn kept(&self) -> &[bool] {
        &self.keep
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Applies the mask to a gradient (or any matrix of the masked shape).
    pub fn apply<T: Real>(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        if m.len() != self.keep.len() {
            return Err(Error::shape(
                "dropout mask",
                m.shape(),
                (self.keep.len(), 1),
            ));
        }
        let scale = T::of(self.scale);
        let data = m
            .data()
            .iter()
            .zip(&self.keep)
            .map(|(&v, &k)| if k { v * scale } else { T::zero() })
            .collect();
        Matrix::from_vec(m.rows(), m.cols(), data)
    }
}

/// Inverted dropout. Returns the input unchanged (and no mask) when not
/// training or when `rate == 0`; otherwise zeroes each entry with probability
/// `rate` and scales survivors by `1 / (1 - rate)`.
pub fn dropout<T: Real>(
    a: &Matrix<T>,
    rate: f64,
    training: bool,
    rng: &mut DetRng,
) -> Result<(Matrix<T>, Option<DropoutMask>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok((a.clone(), None));
    }
    let keep: Vec<bool> = (0..a.len()).map(|_| rng.uniform() >= rate).collect();
    let mask = DropoutMask {
        keep,
        scale: 1.0 / (1.0 - rate),
    };
    let out = mask.apply(a)?;
    Ok((out, Some(mask)))
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Mean cross-entropy of `softmax(logits)` against integer labels, and its
/// gradient `(softmax - onehot) / m`.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Matrix<T>,
    labels: &[usize],
) -> Result<(T, Matrix<T>)> {
    let (m, classes) = logits.shape();
    if m == 0 {
        return Err(Error::Empty("cross-entropy over an empty batch".into()));
    }
    if labels.len() != m {
        return Err(Error::shape("softmax_cross_entropy", logits.shape(), (labels.len(), 1)));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let inv_m = T::one() / T::of(m as f64);
    let mut grad = Matrix::zeros(m, classes);
    let mut total = T::zero();
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let (arg, max) = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, T::neg_infinity()), |(i, m), (j, v)| if v > m { (j, v) } else { (i, m) });
        // the max term contributes exactly 1; ln_1p keeps confident rows accurate
        let rest: T = row
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != arg)
            .map(|(_, &v)| (v - max).exp())
            .sum();
        let sum = T::one() + rest;
        let log_sum = rest.ln_1p();
        // -log softmax[y] = log Σ exp(z - max) - (z_y - max)
        total += log_sum - (row[y] - max);
        let g = grad.row_mut(r);
        for (c, gv) in g.iter_mut().enumerate() {
            let p = (row[c] - max).exp() / sum;
            let target = if c == y { T::one() } else { T::zero() };
            *gv = (p - target) * inv_m;
        }
    }
    Ok((total * inv_m, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix<f64> {
        Matrix::from_f64(rows, cols, v).unwrap()
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let mut rng = DetRng::new(3, 0);
        let w: Matrix<f64> = glorot_init(40, 60, &mut rng);
        let a = (6.0f64 / 100.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= a));
        let mut rng2 = DetRng::new(3, 0);
        assert_eq!(w, glorot_init(40, 60, &mut rng2));
    }

    #[test]
    fn glorot_sample_mean_near_zero() {
        let mut rng = DetRng::new(11, 0);
        let w: Matrix<f64> = glorot_init(512, 512, &mut rng);
        let a = (6.0f64 / 1024.0).sqrt();
        let n = (512 * 512) as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        // 3 standard errors of a uniform[-a, a] mean: sd = a / sqrt(3)
        assert!(mean.abs() <= 3.0 * a / (3.0 * n).sqrt(), "mean {mean}");
    }

    #[test]
    fn relu_cases() {
        let neg = m(1, 3, &[-1., -2., -0.5]);
        assert_eq!(relu(&neg), Matrix::zeros(1, 3));
        let pos = m(1, 3, &[1., 2., 0.5]);
        assert_eq!(relu(&pos), pos);
        let g = m(1, 3, &[3., 4., 5.]);
        assert_eq!(relu_backward(&pos, &g).unwrap(), g);
        let zero = m(1, 1, &[0.]);
        assert_eq!(relu(&zero), zero);
        assert_eq!(relu_backward(&zero, &m(1, 1, &[7.])).unwrap(), m(1, 1, &[0.]));
    }

    #[test]
    fn dropout_identity_cases() {
        let a = m(2, 2, &[1., 2., 3., 4.]);
        let mut rng = DetRng::new(0, 0);
        let (out, mask) = dropout(&a, 0.0, true, &mut rng).unwrap();
        assert_eq!(out, a);
        assert!(mask.is_none());
        let (out, mask) = dropout(&a, 0.9, false, &mut rng).unwrap();
        assert_eq!(out, a);
        assert!(mask.is_none());
        assert!(dropout(&a, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_mean() {
        let a = Matrix::<f64>::filled(500, 500, 1.0);
        let mut rng = DetRng::new(5, 0);
        let (out, mask) = dropout(&a, 0.5, true, &mut rng).unwrap();
        let mean = out.data().iter().sum::<f64>() / out.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        let mask = mask.unwrap();
        assert!(out
            .data()
            .iter()
            .zip(mask.kept())
            .all(|(&v, &k)| if k { v == 2.0 } else { v == 0.0 }));
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let logits = Matrix::<f64>::zeros(4, 5);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 1, 2, 4]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_confident_row() {
        let logits = m(1, 2, &[10., -10.]);
        let (loss, grad) = softmax_cross_entropy(&logits, &[0]).unwrap();
        // -log σ(20) = log(1 + e^-20)
        let expected = (-20f64).exp().ln_1p();
        assert!((loss - expected).abs() < 1e-18);
        assert!((loss - 2.061e-9).abs() < 1e-12);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-8));
    }

    #[test]
    fn cross_entropy_shift_invariance() {
        let logits = m(2, 3, &[0.3, -1.2, 2.0, 0.0, 0.5, -0.5]);
        let shifted = logits.map(|v| v + 100.0);
        let (l1, g1) = softmax_cross_entropy(&logits, &[2, 1]).unwrap();
        let (l2, g2) = softmax_cross_entropy(&shifted, &[2, 1]).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        assert!(g1.max_abs_diff(&g2).unwrap() < 1e-12);
    }

    #[test]
    fn cross_entropy_errors() {
        let logits = Matrix::<f64>::zeros(0, 3);
        assert!(matches!(softmax_cross_entropy(&logits, &[]), Err(Error::Empty(_))));
        let logits = Matrix::<f64>::zeros(1, 3);
        assert!(softmax_cross_entropy(&logits, &[3]).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = DetRng::new(9, 0);
        let logits = Matrix::<f64>::from_fn(20, 7, |_, _| rng.normal() * 5.0);
        let p = softmax(&logits);
        for r in 0..p.rows() {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    fn central_difference(f: impl Fn(&Matrix<f64>) -> f64, x: &Matrix<f64>) -> Matrix<f64> {
        let h = 1e-6;
        let mut grad = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            grad.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        grad
    }

    fn rel_err(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
        let diff = a.add(&b.scale(-1.0)).unwrap().frobenius_norm();
        diff / a.frobenius_norm().max(b.frobenius_norm()).max(1e-300)
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = DetRng::new(21, 0);
        let logits = Matrix::<f64>::from_fn(6, 4, |_, _| rng.normal());
        let labels = [0, 3, 1, 1, 2, 0];
        let (_, analytic) = softmax_cross_entropy(&logits, &labels).unwrap();
        let numeric = central_difference(|x| softmax_cross_entropy(x, &labels).unwrap().0, &logits);
        assert!(rel_err(&analytic, &numeric) < 1e-5);
    }

    #[test]
    fn relu_gradient_matches_finite_differences() {
        let mut rng = DetRng::new(22, 0);
        let x = Matrix::<f64>::from_fn(5, 4, |_, _| rng.normal());
        let w = Matrix::<f64>::from_fn(5, 4, |_, _| rng.normal());
        let loss = |x: &Matrix<f64>| relu(x).hadamard(&w).unwrap().data().iter().sum::<f64>();
        let analytic = relu_backward(&x, &w).unwrap();
        let numeric = central_difference(loss, &x);
        assert!(rel_err(&analytic, &numeric) < 1e-5);
    }
}
