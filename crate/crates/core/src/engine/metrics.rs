use super::config::MetricKind;
use crate::error::{Error, Result};
use crate::tensor::{softmax, Matrix, Real};

fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Fraction of `nodes` whose arg-max logit equals the label. Ties go to the
/// lowest class index.
pub fn accuracy<T: Real>(logits: &Matrix<T>, labels: &[u32], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::Empty("accuracy over an empty node set".into()));
    }
    let mut correct = 0usize;
    for &v in nodes {
        if v >= logits.rows() || v >= labels.len() {
            return Err(Error::InvalidArgument(format!("node {v} out of range")));
        }
        if argmax(logits.row(v)) == labels[v] as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / nodes.len() as f64)
}

/// Area under the ROC curve via the Mann-Whitney rank sum. Tied scores share
/// their average rank, so each tied positive/negative pair counts one half.
pub fn auc_roc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::shape("auc_roc", (scores.len(), 1), (positive.len(), 1)));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s} in auc_roc")));
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as u128;
    let n_neg = positive.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument(
            "auc_roc needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the positive rank sum, so tied groups stay integral
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j average to (i+1+j)/2
        let group_rank2 = (i + 1 + j) as u128;
        let group_pos = order[i..j].iter().filter(|&&k| positive[k]).count() as u128;
        rank_sum2 += group_pos * group_rank2;
        i = j;
    }
    let u2 = rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// The split metric for `nodes`: accuracy, or AUC of the class-1 probability.
pub fn evaluate<T: Real>(
    logits: &Matrix<T>,
    labels: &[u32],
    nodes: &[usize],
    num_classes: usize,
    kind: MetricKind,
) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::Empty("evaluation over an empty split".into()));
    }
    match kind.resolve(num_classes) {
        MetricKind::AucRoc => {
            if logits.cols() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "AUC-ROC needs two classes, got {}",
                    logits.cols()
                )));
            }
            let probs = softmax(&logits.select_rows(nodes)?);
            let scores: Vec<f64> = (0..nodes.len()).map(|r| probs.get(r, 1).to_f64_lossless()).collect();
            let positive: Vec<bool> = nodes.iter().map(|&v| labels[v] == 1).collect();
            auc_roc(&scores, &positive)
        }
        _ => accuracy(logits, labels, nodes),
    }
}
