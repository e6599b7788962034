//! Minimal dense reverse-mode autodiff: tape, parameters, losses, Adam,
//! finite-difference gradient check and the checkpoint container.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod optim;
pub mod params;
pub mod tape;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{binary_cross_entropy_multilabel, cross_entropy_label_smoothed};
pub use optim::{Adam, WarmupLinear};
pub use params::{Init, Param, ParamId, ParamStore};
pub use tape::{log_sum_exp, sigmoid, Tape, Var};

use rand::Rng;

/// Dense affine map `x W + b` with `W: [input, output]`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: store.add(format!("{name}.weight"), &[input, output], Init::Normal(0.02), rng),
            bias: store.add(format!("{name}.bias"), &[output], Init::Zeros, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> crate::Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(x, w)?;
        tape.add_bias(y, b)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dim: usize, rng: &mut R) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), &[dim], Init::Ones, rng),
            bias: store.add(format!("{name}.bias"), &[dim], Init::Zeros, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> crate::Result<Var> {
        let g = tape.param(store, self.gain);
        let b = tape.param(store, self.bias);
        tape.layer_norm(x, g, b, LAYER_NORM_EPS)
    }
}

/// Inverted dropout. A no-op when `rng` is `None` or `rate` is zero.
pub fn dropout<R: Rng + ?Sized>(tape: &mut Tape, x: Var, rate: f64, rng: Option<&mut R>) -> crate::Result<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if rate <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 - rate;
    let mask: Vec<f64> = (0..tape.value(x).len())
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let shape = tape.shape(x).to_vec();
    let m = tape.constant(&shape, mask)?;
    tape.mul(x, m)
}
