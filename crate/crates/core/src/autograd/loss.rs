use crate::autograd::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Cross-entropy of `logits: [T, K]` against `gold` with the target mixed
/// towards uniform: `q = (1 - eps) * onehot(gold) + eps / K`.
///
/// Averaged over positions. `eps = 0` is plain cross-entropy.
pub fn cross_entropy_label_smoothed(tape: &mut Tape, logits: Var, gold: &[usize], eps: f64) -> Result<Var> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::contract(format!("label smoothing eps must lie in [0, 1), got {eps}")));
    }
    let shape = tape.shape(logits);
    let (rows, k) = match shape {
        [r, k] => (*r, *k),
        _ => return Err(Error::shape("cross_entropy_label_smoothed", &[shape])),
    };
    if rows != gold.len() {
        return Err(Error::shape("cross_entropy_label_smoothed", &[shape, &[gold.len()]]));
    }
    if let Some(bad) = gold.iter().find(|&&g| g >= k) {
        return Err(Error::contract(format!("gold label {bad} out of range for {k} classes")));
    }
    let off = eps / k as f64;
    let mut targets = vec![off; rows * k];
    for (r, &g) in gold.iter().enumerate() {
        targets[r * k + g] += 1.0 - eps;
    }
    tape.soft_cross_entropy(logits, targets)
}

/// Mean over classes of sigmoid cross-entropy against a binary target.
pub fn binary_cross_entropy_multilabel(tape: &mut Tape, logits: Var, target: &[f64]) -> Result<Var> {
    tape.bce_with_logits(logits, target.to_vec())
}
