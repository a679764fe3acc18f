use std::f64::consts::PI;

/// Cosine annealing from `lr0` at epoch 0 down to `lr_min` at epoch `total`:
/// `lr_min + (lr0 - lr_min) · (1 + cos(π·t/total)) / 2`.
pub fn cosine_lr(epoch: usize, total: usize, lr0: f64, lr_min: f64) -> f64 {
    if total == 0 {
        return lr0;
    }
    let t = epoch.min(total) as f64 / total as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (PI * t).cos())
}
