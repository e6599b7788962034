use crate::autograd::params::ParamStore;
use crate::autograd::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compare analytic gradients of `loss` with the fourth-order central
/// difference `(8(f(θ + h) - f(θ - h)) - (f(θ + 2h) - f(θ - 2h))) / 12h`,
/// coordinate by coordinate, over every parameter in `store`. The
/// truncation error is O(h⁴), so `h` around 1e-3 keeps both truncation and
/// round-off far below the gradients of interest.
///
/// The error at a coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
/// `loss` must be deterministic (no dropout, fixed teacher-forcing draws).
pub fn grad_check<F>(store: &mut ParamStore, h: f64, mut loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let out = loss(&mut tape, store)?;
    tape.backward(out)?;
    tape.flush_param_grads(store);

    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let out = loss(&mut tape, store)?;
        Ok(tape.scalar(out))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for j in 0..store.get(id).len() {
            let analytic = store.get(id).grad[j];
            let original = store.get(id).data[j];
            let mut at = |offset: f64| -> Result<f64> {
                store.get_mut(id).data[j] = original + offset;
                let v = eval(store);
                store.get_mut(id).data[j] = original;
                v
            };
            let near = at(h)? - at(-h)?;
            let far = at(2.0 * h)? - at(-2.0 * h)?;
            let numeric = (8.0 * near - far) / (12.0 * h);
            if !(analytic.is_finite() && numeric.is_finite()) {
                return Err(Error::GradCheck {
                    param: store.get(id).name.clone(),
                    index: j,
                    message: format!("non-finite gradient (analytic {analytic}, numeric {numeric})"),
                });
            }
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let err = (analytic - numeric).abs() / denom;
            report.coordinates += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.get(id).name.clone(), j));
            }
        }
    }
    store.zero_grad();
    Ok(report)
}
