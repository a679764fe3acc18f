//! Turning the full feature matrix into per-worker inputs.
//!
//! Two modes exist. Direct slicing cuts column ranges out of `X`, one range per
//! worker, following the slice strategy. Feature fusion runs `X` through a
//! shared two-layer MLP whose single output (width `⌈d/p⌉ + 1`) is handed to
//! every worker.
//!
//! Ranges are 0-based and half-open. When `⌈d/p⌉` does not divide `d`, the
//! last range is shifted back so it ends at `d` while keeping the common
//! width; it therefore overlaps its predecessor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpCache};
use crate::tensor::{DetRng, Matrix, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceStrategy {
    ranges: Vec<(usize, usize)>,
    slice_size: usize,
    scale: f64,
}

impl SliceStrategy {
    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    /// `⌈in_d / p⌉`.
    pub fn slice_size(&self) -> usize {
        self.slice_size
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn devices(&self) -> usize {
        self.ranges.len()
    }

    /// Common width of every range.
    pub fn width(&self) -> usize {
        self.ranges.first().map(|&(s, e)| e - s).unwrap_or(0)
    }
}

/// Builds the per-device column ranges for `in_d` features over `p` devices.
///
/// Device `i` starts at `i·⌈in_d/p⌉` and spans `⌊⌈in_d/p⌉·scale⌋` columns; a
/// range that would run past `in_d` is shifted back to end exactly at `in_d`.
pub fn slice_strategy_generator(in_d: usize, p: usize, scale: f64) -> Result<SliceStrategy> {
    if in_d == 0 || p == 0 {
        return Err(Error::SliceStrategy(format!(
            "need in_d >= 1 and p >= 1, got in_d={in_d}, p={p}"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::SliceStrategy(format!("scale must be positive, got {scale}")));
    }
    let slice_size = in_d.div_ceil(p);
    let width = (slice_size as f64 * scale).trunc() as usize;
    if width == 0 {
        return Err(Error::SliceStrategy(format!(
            "scale {scale} shrinks slice size {slice_size} to zero columns"
        )));
    }
    if width > in_d {
        return Err(Error::SliceStrategy(format!(
            "scale {scale} widens slices to {width} columns, more than the {in_d} available"
        )));
    }
    let ranges = (0..p)
        .map(|i| {
            let start = i * slice_size;
            let end = start + width;
            if end > in_d {
                (start - (end - in_d), in_d)
            } else {
                (start, end)
            }
        })
        .collect();
    Ok(SliceStrategy {
        ranges,
        slice_size,
        scale,
    })
}

/// Copies the column block of every range, in device order.
pub fn slice_feature<T: Real>(x: &Matrix<T>, strategy: &SliceStrategy) -> Result<Vec<Matrix<T>>> {
    if let Some(&(s, e)) = strategy.ranges.iter().find(|&&(_, e)| e > x.cols()) {
        return Err(Error::SliceStrategy(format!(
            "range {s}..{e} exceeds the {} feature columns",
            x.cols()
        )));
    }
    strategy
        .ranges
        .iter()
        .map(|&(s, e)| x.columns(s, e))
        .collect()
}

/// Output width of the fusion MLP: `⌈in_d / p⌉ + 1`.
pub fn fusion_width(in_d: usize, p: usize) -> usize {
    in_d.div_ceil(p.max(1)) + 1
}

/// Fusion MLP with layer shapes `in_d -> in_d -> ⌈in_d/p⌉ + 1`.
pub fn init_feature_fusion<T: Real>(in_d: usize, p: usize, dropout: f64, rng: &mut DetRng) -> Result<Mlp<T>> {
    Mlp::new(&[in_d, in_d, fusion_width(in_d, p)], dropout, rng)
}

fn check_fusion<T: Real>(x: &Matrix<T>, ff: &Mlp<T>) -> Result<()> {
    let dims = ff.dims();
    if dims.len() != 3 || dims[0] != x.cols() || dims[1] != x.cols() {
        return Err(Error::shape("feature fusion", x.shape(), (dims[0], *dims.last().unwrap_or(&0))));
    }
    Ok(())
}

/// `Z = layer2(dropout(relu(layer1(X))))`. The one `Z` is what every worker consumes.
pub fn feature_fusion_forward<T: Real>(
    x: &Matrix<T>,
    ff: &Mlp<T>,
    rng: &mut DetRng,
    training: bool,
) -> Result<(Matrix<T>, MlpCache<T>)> {
    check_fusion(x, ff)?;
    ff.forward(x, training, rng)
}

/// Sums per-worker gradients of `Z` in ascending device order.
pub fn accumulate_worker_grads<T: Real>(grads: &[Matrix<T>]) -> Result<Matrix<T>> {
    let mut iter = grads.iter();
    let mut total = iter
        .next()
        .ok_or_else(|| Error::Empty("no worker gradients to accumulate".into()))?
        .clone();
    for g in iter {
        total.add_assign(g)?;
    }
    Ok(total)
}

/// Parameter gradients of the fusion MLP for the aggregated `dZ`. The gradient
/// with respect to `X` is not needed (features are data) and is not formed.
pub fn feature_fusion_backward<T: Real>(
    x: &Matrix<T>,
    ff: &Mlp<T>,
    cache: &MlpCache<T>,
    d_z: &Matrix<T>,
) -> Result<Vec<Matrix<T>>> {
    check_fusion(x, ff)?;
    let (grads, _) = ff.backward(x, cache, d_z, false)?;
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Line-by-line transcription of the generation loop, kept separate from
    /// the implementation above.
    fn reference(in_d: usize, p: usize, scale: f64) -> (Vec<(i64, i64)>, usize) {
        let mut in_sizes = Vec::new();
        let slice_size = (in_d as f64 / p as f64).ceil() as i64;
        for i in 0..p as i64 {
            let mut slice_start = i * slice_size;
            let mut slice_end = slice_start + ((slice_size as f64) * scale) as i64;
            if slice_end > in_d as i64 {
                slice_start -= slice_end - in_d as i64;
                slice_end = in_d as i64;
            }
            in_sizes.push((slice_start, slice_end));
        }
        (in_sizes, slice_size as usize)
    }

    #[test]
    fn non_divisible_case() {
        let s = slice_strategy_generator(7, 3, 1.0).unwrap();
        assert_eq!(s.ranges(), &[(0, 3), (3, 6), (4, 7)]);
        assert_eq!(s.slice_size(), 3);
    }

    #[test]
    fn divisible_case_is_a_partition() {
        let s = slice_strategy_generator(6, 3, 1.0).unwrap();
        assert_eq!(s.ranges(), &[(0, 2), (2, 4), (4, 6)]);
    }

    #[test]
    fn scaled_slices_overlap() {
        let s = slice_strategy_generator(10, 2, 1.5).unwrap();
        assert_eq!(s.slice_size(), 5);
        assert_eq!(s.width(), 7);
        assert_eq!(s.ranges(), &[(0, 7), (3, 10)]);
    }

    #[test]
    fn invalid_widths() {
        assert!(slice_strategy_generator(10, 2, 0.1).is_err());
        assert!(slice_strategy_generator(10, 2, 2.5).is_err());
        assert!(slice_strategy_generator(0, 2, 1.0).is_err());
        assert!(slice_strategy_generator(4, 0, 1.0).is_err());
        assert!(slice_strategy_generator(4, 2, -1.0).is_err());
    }

    #[test]
    fn single_device_slice_is_identity() {
        let x = Matrix::<f64>::from_fn(3, 5, |r, c| (r * 10 + c) as f64);
        let s = slice_strategy_generator(5, 1, 1.0).unwrap();
        let slices = slice_feature(&x, &s).unwrap();
        assert_eq!(slices, vec![x]);
    }

    #[test]
    fn column_index_matrix_slices() {
        let x = Matrix::<f64>::from_fn(4, 7, |_, c| c as f64);
        let s = slice_strategy_generator(7, 3, 1.0).unwrap();
        let slices = slice_feature(&x, &s).unwrap();
        for r in 0..4 {
            assert_eq!(slices[2].row(r), &[4., 5., 6.]);
        }
    }

    #[test]
    fn overlapping_slices_share_columns() {
        let x = Matrix::<f64>::from_fn(2, 10, |_, c| c as f64);
        let s = slice_strategy_generator(10, 2, 1.5).unwrap();
        let slices = slice_feature(&x, &s).unwrap();
        assert_eq!(slices[0].row(0), &[0., 1., 2., 3., 4., 5., 6.]);
        assert_eq!(slices[1].row(0), &[3., 4., 5., 6., 7., 8., 9.]);
    }

    #[test]
    fn slicing_rejects_narrow_matrix() {
        let x = Matrix::<f64>::zeros(2, 5);
        let s = slice_strategy_generator(7, 3, 1.0).unwrap();
        assert!(slice_feature(&x, &s).is_err());
    }

    proptest! {
        #[test]
        fn strategy_matches_reference(in_d in 1usize..=64, p in 1usize..=8, k in 0usize..3) {
            let scale = [0.5, 1.0, 1.5][k];
            let (expected, size) = reference(in_d, p, scale);
            match slice_strategy_generator(in_d, p, scale) {
                Ok(s) => {
                    let got: Vec<(i64, i64)> = s.ranges().iter().map(|&(a, b)| (a as i64, b as i64)).collect();
                    prop_assert_eq!(got, expected);
                    prop_assert_eq!(s.slice_size(), size);
                    let w = s.width();
                    for &(a, b) in s.ranges() {
                        prop_assert!(a < b && b <= in_d);
                        prop_assert_eq!(b - a, w);
                    }
                }
                Err(_) => {
                    let w = ((size as f64) * scale) as usize;
                    prop_assert!(w == 0 || w > in_d);
                }
            }
        }

        #[test]
        fn unit_scale_slices_reconstruct_features(in_d in 1usize..=24, p in 1usize..=6) {
            prop_assume!(slice_strategy_generator(in_d, p, 1.0).is_ok());
            let s = slice_strategy_generator(in_d, p, 1.0).unwrap();
            let x = Matrix::<f64>::from_fn(3, in_d, |r, c| (r * 100 + c) as f64);
            let slices = slice_feature(&x, &s).unwrap();
            // keep only columns not already covered by earlier slices
            let mut covered = 0usize;
            let mut parts = Vec::new();
            for (block, &(a, b)) in slices.iter().zip(s.ranges()) {
                if b > covered {
                    parts.push(block.columns(covered.max(a) - a, b - a).unwrap());
                    covered = b;
                }
            }
            prop_assert_eq!(covered, in_d);
            prop_assert_eq!(Matrix::hcat(&parts).unwrap(), x);
        }
    }

    #[test]
    fn fusion_widths_for_three_hundred_features() {
        assert_eq!(fusion_width(300, 3), 101);
        assert_eq!(fusion_width(300, 2), 151);
        let mut rng = DetRng::new(0, 0);
        let ff: Mlp<f64> = init_feature_fusion(300, 3, 0.5, &mut rng).unwrap();
        assert_eq!(ff.num_params(), 300 * 300 + 300 + 300 * 101 + 101);
        assert_eq!(ff.num_params(), 120_701);
        let ff: Mlp<f64> = init_feature_fusion(300, 2, 0.5, &mut rng).unwrap();
        assert_eq!(ff.num_params(), 135_751);
    }

    #[test]
    fn zero_fusion_maps_to_zero() {
        let mut rng = DetRng::new(1, 0);
        let mut ff: Mlp<f64> = init_feature_fusion(6, 2, 0.0, &mut rng).unwrap();
        for p in ff.parameters_mut() {
            p.data_mut().fill(0.0);
        }
        let x = Matrix::<f64>::from_fn(5, 6, |r, c| (r + c) as f64);
        let (z, _) = feature_fusion_forward(&x, &ff, &mut rng, true).unwrap();
        assert_eq!(z, Matrix::zeros(5, 4));
    }

    #[test]
    fn fusion_backward_zero_and_linearity() {
        let mut rng = DetRng::new(2, 0);
        let ff: Mlp<f64> = init_feature_fusion(6, 2, 0.0, &mut rng).unwrap();
        let x = Matrix::<f64>::from_fn(5, 6, |_, _| rng.normal());
        let (z, cache) = feature_fusion_forward(&x, &ff, &mut rng, false).unwrap();
        let zero = feature_fusion_backward(&x, &ff, &cache, &Matrix::zeros(z.rows(), z.cols())).unwrap();
        assert!(zero.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));

        let dz = Matrix::<f64>::from_fn(z.rows(), z.cols(), |_, _| rng.normal());
        let single = feature_fusion_backward(&x, &ff, &cache, &dz).unwrap();
        let summed = accumulate_worker_grads(&[dz.clone(), dz.clone()]).unwrap();
        let double = feature_fusion_backward(&x, &ff, &cache, &summed).unwrap();
        for (a, b) in single.iter().zip(&double) {
            assert_eq!(a.scale(2.0), *b);
        }
    }

    #[test]
    fn fusion_eval_is_deterministic() {
        let mut rng = DetRng::new(3, 0);
        let ff: Mlp<f64> = init_feature_fusion(6, 3, 0.5, &mut rng).unwrap();
        let x = Matrix::<f64>::from_fn(4, 6, |_, _| rng.normal());
        let (a, _) = feature_fusion_forward(&x, &ff, &mut DetRng::new(8, 0), false).unwrap();
        let (b, _) = feature_fusion_forward(&x, &ff, &mut DetRng::new(9, 0), false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fusion_rejects_wrong_input_width() {
        let mut rng = DetRng::new(4, 0);
        let ff: Mlp<f64> = init_feature_fusion(6, 3, 0.0, &mut rng).unwrap();
        let x = Matrix::<f64>::zeros(4, 5);
        assert!(feature_fusion_forward(&x, &ff, &mut rng, false).is_err());
    }
}
