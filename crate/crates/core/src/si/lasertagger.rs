//! Autoregressive tag decoder that reads the encoder row of the current
//! position directly instead of attending over the whole encoder output.
//!
//! Step `i` embeds the previously emitted label (a dedicated start label at
//! `i = 0`) plus a position embedding, runs masked self-attention over the
//! decoder's own earlier steps, and combines the resulting hidden state
//! `H_i` with encoder row `E_i` by concatenation and an affine projection:
//!
//! ```text
//! x_i    = LN(label_emb[L_{i-1}] + pos_emb[i])
//! H_i    = post-LN transformer layers over x_0..x_i (causal)
//! logits = W_out gelu(W_c [H_i ; E_i] + b_c) + b_out
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{cross_entropy_label_smoothed, Init, LayerNorm, Linear, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub feedforward: usize,
    pub labels: usize,
    pub max_positions: usize,
}

#[derive(Clone, Copy, Debug)]
struct DecoderLayer {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    attn_norm: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
    ff_norm: LayerNorm,
}

#[derive(Clone, Debug)]
pub struct LaserTagger {
    pub config: DecoderConfig,
    label_embedding: ParamId,
    position_embedding: ParamId,
    input_norm: LayerNorm,
    layers: Vec<DecoderLayer>,
    combine: Linear,
    output: Linear,
}

/// Per-sequence decoding state: the key/value cache of every layer, the
/// hidden states produced so far and the labels fed at each step.
#[derive(Clone, Debug, Default)]
pub struct DecoderState {
    keys: Vec<Vec<Var>>,
    values: Vec<Vec<Var>>,
    pub hidden: Vec<Var>,
    pub fed_labels: Vec<usize>,
}

impl DecoderState {
    pub fn position(&self) -> usize {
        self.hidden.len()
    }
}

/// Result of one training pass.
#[derive(Clone, Debug)]
pub struct SequenceLoss {
    pub loss: Var,
    /// Label fed into each step, starting with the start label.
    pub fed_labels: Vec<usize>,
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl LaserTagger {
    pub fn new<R: Rng + ?Sized>(
        config: DecoderConfig,
        encoder_dim: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        let d = config.hidden;
        if config.layers == 0 || config.heads == 0 || d % config.heads != 0 || config.labels < 2 {
            return Err(Error::contract(format!(
                "decoder needs layers >= 1, hidden {d} divisible by heads {}, labels >= 2",
                config.heads
            )));
        }
        let label_embedding = store.add("decoder.label_embedding", &[config.labels + 1, d], Init::Normal(0.02), rng);
        let position_embedding =
            store.add("decoder.position_embedding", &[config.max_positions, d], Init::Normal(0.02), rng);
        let input_norm = LayerNorm::new(store, "decoder.input_norm", d, rng);
        let layers = (0..config.layers)
            .map(|l| {
                let p = format!("decoder.layer{l}");
                DecoderLayer {
                    query: Linear::new(store, &format!("{p}.query"), d, d, rng),
                    key: Linear::new(store, &format!("{p}.key"), d, d, rng),
                    value: Linear::new(store, &format!("{p}.value"), d, d, rng),
                    output: Linear::new(store, &format!("{p}.attn_out"), d, d, rng),
                    attn_norm: LayerNorm::new(store, &format!("{p}.attn_norm"), d, rng),
                    ff_in: Linear::new(store, &format!("{p}.ff_in"), d, config.feedforward, rng),
                    ff_out: Linear::new(store, &format!("{p}.ff_out"), config.feedforward, d, rng),
                    ff_norm: LayerNorm::new(store, &format!("{p}.ff_norm"), d, rng),
                }
            })
            .collect();
        let combine = Linear::new(store, "decoder.combine", d + encoder_dim, d, rng);
        let output = Linear::new(store, "decoder.output", d, config.labels, rng);
        Ok(Self {
            config,
            label_embedding,
            position_embedding,
            input_norm,
            layers,
            combine,
            output,
        })
    }

    /// Label id fed at position 0.
    pub fn start_label(&self) -> usize {
        self.config.labels
    }

    pub fn new_state(&self) -> DecoderState {
        DecoderState {
            keys: vec![Vec::new(); self.config.layers],
            values: vec![Vec::new(); self.config.layers],
            ..DecoderState::default()
        }
    }

    /// Logits `[1, K]` for `position`, given the encoder row `e_i: [1, n]`
    /// and the label emitted at the previous position.
    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        state: &mut DecoderState,
        position: usize,
        e_i: Var,
        prev_label: usize,
    ) -> Result<Var> {
        if position != state.position() {
            return Err(Error::contract(format!(
                "decoder step for position {position} while at position {}",
                state.position()
            )));
        }
        if position >= self.config.max_positions {
            return Err(Error::contract(format!(
                "decoder position {position} beyond {} positions",
                self.config.max_positions
            )));
        }
        if prev_label > self.config.labels || (position == 0) != (prev_label == self.start_label()) {
            return Err(Error::contract(format!(
                "decoder label {prev_label} invalid at position {position}"
            )));
        }
        let labels = tape.param(store, self.label_embedding);
        let label = tape.embedding(labels, &[prev_label])?;
        let positions = tape.param(store, self.position_embedding);
        let pos = tape.embedding(positions, &[position])?;
        let sum = tape.add(label, pos)?;
        let mut x = self.input_norm.forward(tape, store, sum)?;
        for (l, layer) in self.layers.iter().enumerate() {
            let q = layer.query.forward(tape, store, x)?;
            let k = layer.key.forward(tape, store, x)?;
            let v = layer.value.forward(tape, store, x)?;
            state.keys[l].push(k);
            state.values[l].push(v);
            let keys = tape.concat_rows(&state.keys[l])?;
            let values = tape.concat_rows(&state.values[l])?;
            let a = tape.attention(q, keys, values, self.config.heads, true)?;
            let a = layer.output.forward(tape, store, a)?;
            let r = tape.add(x, a)?;
            x = layer.attn_norm.forward(tape, store, r)?;
            let f = layer.ff_in.forward(tape, store, x)?;
            let f = tape.gelu(f);
            let f = layer.ff_out.forward(tape, store, f)?;
            let r = tape.add(x, f)?;
            x = layer.ff_norm.forward(tape, store, r)?;
        }
        state.hidden.push(x);
        state.fed_labels.push(prev_label);
        let joined = tape.concat_cols(&[x, e_i])?;
        let c = self.combine.forward(tape, store, joined)?;
        let c = tape.gelu(c);
        self.output.forward(tape, store, c)
    }

    /// Sequential training pass over `encoded: [T, n]`. After each step the
    /// label fed forward is the gold label with probability `rate` and the
    /// model's argmax otherwise; one draw is made per position whatever the
    /// rate. The loss is the label-smoothed cross-entropy over all positions.
    pub fn train_sequence<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        encoded: Var,
        gold: &[usize],
        rate: f64,
        smoothing: f64,
        rng: &mut R,
    ) -> Result<SequenceLoss> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::contract(format!("teacher-forcing rate {rate} outside [0, 1]")));
        }
        let rows = tape.shape(encoded)[0];
        if rows != gold.len() || gold.is_empty() {
            return Err(Error::shape("train_sequence", &[tape.shape(encoded), &[gold.len()]]));
        }
        let mut state = self.new_state();
        let mut prev = self.start_label();
        let mut logits = Vec::with_capacity(gold.len());
        for (i, &g) in gold.iter().enumerate() {
            let e_i = tape.slice_rows(encoded, i, i + 1)?;
            let l = self.step(tape, store, &mut state, i, e_i, prev)?;
            let forced = rng.random::<f64>() < rate;
            prev = if forced { g } else { argmax(tape.value(l)) };
            logits.push(l);
        }
        let all = tape.concat_rows(&logits)?;
        Ok(SequenceLoss {
            loss: cross_entropy_label_smoothed(tape, all, gold, smoothing)?,
            fed_labels: state.fed_labels,
        })
    }

    /// Greedy left-to-right decoding feeding back its own predictions.
    pub fn infer(&self, tape: &mut Tape, store: &ParamStore, encoded: Option<Var>) -> Result<Vec<usize>> {
        let Some(encoded) = encoded else { return Ok(Vec::new()) };
        let rows = tape.shape(encoded)[0];
        let mut state = self.new_state();
        let mut prev = self.start_label();
        let mut out = Vec::with_capacity(rows);
        for i in 0..rows {
            let e_i = tape.slice_rows(encoded, i, i + 1)?;
            let l = self.step(tape, store, &mut state, i, e_i, prev)?;
            prev = argmax(tape.value(l));
            out.push(prev);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SeededRng;
    use rand::SeedableRng;

    fn setup() -> (LaserTagger, ParamStore, SeededRng) {
        let mut rng = SeededRng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let cfg = DecoderConfig {
            layers: 1,
            hidden: 8,
            heads: 2,
            feedforward: 16,
            labels: 2,
            max_positions: 16,
        };
        let dec = LaserTagger::new(cfg, 6, &mut store, &mut rng).unwrap();
        store.randomize(0.5, &mut rng);
        (dec, store, rng)
    }

    fn encoded(tape: &mut Tape, rows: usize, seed: u64) -> Var {
        let mut rng = SeededRng::seed_from_u64(seed);
        let data = (0..rows * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        tape.constant(&[rows, 6], data).unwrap()
    }

    #[test]
    fn out_of_order_step_is_rejected() {
        let (dec, store, _) = setup();
        let mut tape = Tape::new();
        let e = encoded(&mut tape, 1, 1);
        let mut state = dec.new_state();
        assert!(dec.step(&mut tape, &store, &mut state, 1, e, 0).is_err());
        assert!(dec.step(&mut tape, &store, &mut state, 0, e, 0).is_err());
        dec.step(&mut tape, &store, &mut state, 0, e, dec.start_label()).unwrap();
        assert!(dec.step(&mut tape, &store, &mut state, 0, e, 1).is_err());
    }

    #[test]
    fn empty_input_decodes_to_nothing() {
        let (dec, store, _) = setup();
        let mut tape = Tape::new();
        assert!(dec.infer(&mut tape, &store, None).unwrap().is_empty());
    }

    #[test]
    fn seeded_loss_is_reproducible() {
        let (dec, store, _) = setup();
        let run = |seed| {
            let mut tape = Tape::new();
            let e = encoded(&mut tape, 5, 9);
            let mut rng = SeededRng::seed_from_u64(seed);
            let run = dec
                .train_sequence(&mut tape, &store, e, &[0, 1, 1, 0, 1], 0.5, 0.1, &mut rng)
                .unwrap();
            tape.scalar(run.loss).to_bits()
        };
        assert_eq!(run(1), run(1));
    }

    #[test]
    fn free_running_training_feeds_inference_predictions() {
        let (dec, store, _) = setup();
        let mut tape = Tape::new();
        let e = encoded(&mut tape, 6, 2);
        let predicted = dec.infer(&mut tape, &store, Some(e)).unwrap();
        let mut rng = SeededRng::seed_from_u64(0);
        let run = dec.train_sequence(&mut tape, &store, e, &[1; 6], 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(run.fed_labels[0], dec.start_label());
        assert_eq!(&run.fed_labels[1..], &predicted[..5]);
        let forced = dec.train_sequence(&mut tape, &store, e, &[1, 0, 1, 1, 0, 0], 1.0, 0.0, &mut rng).unwrap();
        assert_eq!(&forced.fed_labels[1..], &[1, 0, 1, 1, 0]);
    }
}
