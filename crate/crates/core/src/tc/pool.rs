//! Span pooling over encoder rows.
//!
//! Weighted pooling scores each in-span row `e_j` with `(w, e_j) + b`,
//! normalises the scores with a softmax into `alpha`, and returns
//! `sum_j alpha_j e_j`.

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};

fn rows_of(tape: &Tape, rows: Var, op: &str) -> Result<(usize, usize)> {
    match tape.shape(rows) {
        [k, n] if *k > 0 => Ok((*k, *n)),
        other => Err(Error::contract(format!("{op}: empty span ({other:?})"))),
    }
}

/// Arithmetic mean of `rows: [k, n]`, as `[1, n]`.
pub fn pool_mean(tape: &mut Tape, rows: Var) -> Result<Var> {
    rows_of(tape, rows, "pool_mean")?;
    tape.mean_rows(rows)
}

/// Weighted pooling of `rows: [k, n]` with `w: [n, 1]` and `b: [1]`.
/// Returns the pooled `[1, n]` row and the weights `alpha: [1, k]`.
pub fn pool_weighted(tape: &mut Tape, rows: Var, w: Var, b: Var) -> Result<(Var, Var)> {
    let (_, n) = rows_of(tape, rows, "pool_weighted")?;
    if tape.shape(w) != [n, 1] || tape.shape(b) != [1] {
        return Err(Error::shape("pool_weighted", &[tape.shape(rows), tape.shape(w), tape.shape(b)]));
    }
    let scores = tape.matmul(rows, w)?;
    let scores = tape.add_bias(scores, b)?;
    let scores = tape.transpose(scores)?;
    let alpha = tape.softmax(scores);
    let pooled = tape.matmul(alpha, rows)?;
    Ok((pooled, alpha))
}
