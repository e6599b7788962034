//! Small pre-norm transformer encoder with learned absolute positions and a
//! tied masked-LM head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{
    cross_entropy_label_smoothed, dropout, Adam, Init, LayerNorm, Linear, ParamId, ParamStore, Tape, Var,
    WarmupLinear,
};
use crate::corpus::vocab::{MASK, MARKER};
use crate::error::{Error, Result};
use crate::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub feedforward: usize,
    pub max_positions: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    /// Desk-scale default: 2 layers, hidden 64, 4 heads, feed-forward 128.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            hidden: 64,
            layers: 2,
            heads: 4,
            feedforward: 128,
            max_positions: 128,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(Error::contract(format!(
                "encoder hidden size {} must be a positive multiple of heads {}",
                self.hidden, self.heads
            )));
        }
        if self.vocab_size <= MARKER || self.max_positions == 0 || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::contract("encoder needs vocab beyond reserved ids, positions >= 1, dropout in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct EncoderLayer {
    attn_norm: LayerNorm,
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    ff_norm: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    token_embedding: ParamId,
    position_embedding: ParamId,
    layers: Vec<EncoderLayer>,
    final_norm: LayerNorm,
    mlm_bias: ParamId,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let n = config.hidden;
        let token_embedding = store.add("encoder.token_embedding", &[config.vocab_size, n], Init::Normal(0.02), rng);
        let position_embedding =
            store.add("encoder.position_embedding", &[config.max_positions, n], Init::Normal(0.02), rng);
        let layers = (0..config.layers)
            .map(|l| {
                let p = format!("encoder.layer{l}");
                EncoderLayer {
                    attn_norm: LayerNorm::new(store, &format!("{p}.attn_norm"), n, rng),
                    query: Linear::new(store, &format!("{p}.query"), n, n, rng),
                    key: Linear::new(store, &format!("{p}.key"), n, n, rng),
                    value: Linear::new(store, &format!("{p}.value"), n, n, rng),
                    output: Linear::new(store, &format!("{p}.attn_out"), n, n, rng),
                    ff_norm: LayerNorm::new(store, &format!("{p}.ff_norm"), n, rng),
                    ff_in: Linear::new(store, &format!("{p}.ff_in"), n, config.feedforward, rng),
                    ff_out: Linear::new(store, &format!("{p}.ff_out"), config.feedforward, n, rng),
                }
            })
            .collect();
        let final_norm = LayerNorm::new(store, "encoder.final_norm", n, rng);
        let mlm_bias = store.add("encoder.mlm_bias", &[config.vocab_size], Init::Zeros, rng);
        Ok(Self {
            config,
            token_embedding,
            position_embedding,
            layers,
            final_norm,
            mlm_bias,
        })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    /// Contextual representations `[T, hidden]` of `ids`. Dropout is active
    /// only when `rng` is given.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ids: &[usize],
        mut rng: Option<&mut SeededRng>,
    ) -> Result<Var> {
        let t = ids.len();
        if t == 0 || t > self.config.max_positions {
            return Err(Error::contract(format!(
                "encode: sequence length {t} outside 1..={}",
                self.config.max_positions
            )));
        }
        let p = self.config.dropout;
        let tok_table = tape.param(store, self.token_embedding);
        let tok = tape.embedding(tok_table, ids)?;
        let pos_table = tape.param(store, self.position_embedding);
        let positions: Vec<usize> = (0..t).collect();
        let pos = tape.embedding(pos_table, &positions)?;
        let mut x = tape.add(tok, pos)?;
        x = dropout(tape, x, p, rng.as_deref_mut())?;
        for layer in &self.layers {
            let h = layer.attn_norm.forward(tape, store, x)?;
            let q = layer.query.forward(tape, store, h)?;
            let k = layer.key.forward(tape, store, h)?;
            let v = layer.value.forward(tape, store, h)?;
            let a = tape.attention(q, k, v, self.config.heads, false)?;
            let a = layer.output.forward(tape, store, a)?;
            let a = dropout(tape, a, p, rng.as_deref_mut())?;
            x = tape.add(x, a)?;

            let h = layer.ff_norm.forward(tape, store, x)?;
            let f = layer.ff_in.forward(tape, store, h)?;
            let f = tape.gelu(f);
            let f = layer.ff_out.forward(tape, store, f)?;
            let f = dropout(tape, f, p, rng.as_deref_mut())?;
            x = tape.add(x, f)?;
        }
        self.final_norm.forward(tape, store, x)
    }

    /// Vocabulary logits `[T, V]` from encoder output, tied to the token
    /// embedding table.
    pub fn mlm_logits(&self, tape: &mut Tape, store: &ParamStore, encoded: Var) -> Result<Var> {
        let table = tape.param(store, self.token_embedding);
        let table_t = tape.transpose(table)?;
        let logits = tape.matmul(encoded, table_t)?;
        let bias = tape.param(store, self.mlm_bias);
        tape.add_bias(logits, bias)
    }

    /// Masked-LM loss of one sequence; `None` when no position was selected.
    pub fn mlm_loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ids: &[usize],
        masking: &MaskingPolicy,
        rng: &mut SeededRng,
        train: bool,
    ) -> Result<Option<Var>> {
        let (input, targets) = masking.apply(ids, self.config.vocab_size, rng);
        if targets.is_empty() {
            return Ok(None);
        }
        let encoded = self.encode(tape, store, &input, if train { Some(rng) } else { None })?;
        let rows: Vec<Var> = targets
            .iter()
            .map(|&(pos, _)| tape.slice_rows(encoded, pos, pos + 1))
            .collect::<Result<_>>()?;
        let picked = tape.concat_rows(&rows)?;
        let logits = self.mlm_logits(tape, store, picked)?;
        let gold: Vec<usize> = targets.iter().map(|&(_, id)| id).collect();
        Ok(Some(cross_entropy_label_smoothed(tape, logits, &gold, 0.0)?))
    }
}

/// BERT-style corruption: each position is selected with probability
/// `rate`; a selected token becomes `[MASK]` 80% of the time, a random
/// ordinary token 10%, and stays unchanged 10%.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingPolicy {
    pub rate: f64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        Self { rate: 0.15 }
    }
}

impl MaskingPolicy {
    /// Returns the corrupted input and `(position, original id)` targets.
    pub fn apply(&self, ids: &[usize], vocab_size: usize, rng: &mut SeededRng) -> (Vec<usize>, Vec<(usize, usize)>) {
        let mut input = ids.to_vec();
        let mut targets = Vec::new();
        if self.rate <= 0.0 {
            return (input, targets);
        }
        for (pos, &id) in ids.iter().enumerate() {
            if rng.random::<f64>() >= self.rate {
                continue;
            }
            targets.push((pos, id));
            let roll: f64 = rng.random();
            if roll < 0.8 {
                input[pos] = MASK;
            } else if roll < 0.9 && vocab_size > MARKER + 1 {
                input[pos] = rng.random_range(MARKER + 1..vocab_size);
            }
        }
        (input, targets)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlmOptions {
    pub epochs: usize,
    pub masking: MaskingPolicy,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub accumulation: usize,
}

impl Default for MlmOptions {
    fn default() -> Self {
        Self {
            epochs: 3,
            masking: MaskingPolicy::default(),
            learning_rate: 2e-5,
            warmup_fraction: 0.1,
            batch_size: 16,
            accumulation: 2,
        }
    }
}

/// Continue masked-LM training of the encoder on `corpus` (one id sequence
/// per sentence). Returns the mean loss of each epoch over sequences that
/// had at least one masked position.
pub fn mlm_pretrain(
    encoder: &Encoder,
    store: &mut ParamStore,
    corpus: &[Vec<usize>],
    options: &MlmOptions,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::contract("mlm_pretrain: empty corpus"));
    }
    let max_len = encoder.config.max_positions;
    let batch = options.batch_size.max(1);
    let batches_per_epoch = corpus.len().div_ceil(batch);
    let updates = (options.epochs * batches_per_epoch).div_ceil(options.accumulation.max(1)).max(1);
    let mut adam = Adam::new(
        store,
        options.learning_rate,
        WarmupLinear::new(options.warmup_fraction, updates)?,
        options.accumulation,
    );
    let mut history = Vec::with_capacity(options.epochs);
    for _ in 0..options.epochs {
        let mut total = 0.0;
        let mut counted = 0usize;
        for chunk in corpus.chunks(batch) {
            let mut tape = Tape::new();
            let mut losses = Vec::new();
            for ids in chunk.iter().filter(|s| !s.is_empty()) {
                let ids = &ids[..ids.len().min(max_len)];
                if let Some(l) = encoder.mlm_loss(&mut tape, store, ids, &options.masking, rng, true)? {
                    total += tape.scalar(l);
                    counted += 1;
                    losses.push(l);
                }
            }
            if !losses.is_empty() {
                let rows = losses
                    .iter()
                    .map(|&l| tape.reshape(l, &[1, 1]))
                    .collect::<Result<Vec<_>>>()?;
                let stacked = tape.concat_rows(&rows)?;
                let loss = tape.mean(stacked);
                tape.backward(loss)?;
                tape.flush_param_grads(store);
                if adam.accumulate() {
                    adam.step(store);
                    store.round_to_f32();
                }
            }
        }
        history.push(if counted == 0 { 0.0 } else { total / counted as f64 });
    }
    if adam.has_pending() {
        adam.step(store);
        store.round_to_f32();
    }
    store.zero_grad();
    Ok(history)
}

/// Mean masked-LM loss with dropout off and masking drawn from `seed`.
pub fn mlm_eval_loss(
    encoder: &Encoder,
    store: &ParamStore,
    corpus: &[Vec<usize>],
    masking: &MaskingPolicy,
    seed: u64,
) -> Result<f64> {
    use rand::SeedableRng;
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut counted = 0usize;
    for ids in corpus.iter().filter(|s| !s.is_empty()) {
        let ids = &ids[..ids.len().min(encoder.config.max_positions)];
        let mut tape = Tape::new();
        if let Some(l) = encoder.mlm_loss(&mut tape, store, ids, masking, &mut rng, false)? {
            total += tape.scalar(l);
            counted += 1;
        }
    }
    Ok(if counted == 0 { 0.0 } else { total / counted as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny(vocab: usize) -> (Encoder, ParamStore) {
        let mut rng = SeededRng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let cfg = EncoderConfig {
            vocab_size: vocab,
            hidden: 16,
            layers: 2,
            heads: 4,
            feedforward: 32,
            max_positions: 16,
            dropout: 0.0,
        };
        let enc = Encoder::new(cfg, &mut store, &mut rng).unwrap();
        (enc, store)
    }

    #[test]
    fn single_token_shape() {
        let (enc, store) = tiny(20);
        let mut t = Tape::new();
        let e = enc.encode(&mut t, &store, &[7], None).unwrap();
        assert_eq!(t.shape(e), &[1, 16]);
    }

    #[test]
    fn too_long_is_rejected() {
        let (enc, store) = tiny(20);
        let mut t = Tape::new();
        assert!(enc.encode(&mut t, &store, &[7; 17], None).is_err());
        assert!(enc.encode(&mut t, &store, &[], None).is_err());
    }

    #[test]
    fn deterministic_and_position_sensitive() {
        let (enc, store) = tiny(20);
        let mut t = Tape::new();
        let a = enc.encode(&mut t, &store, &[7, 8, 9], None).unwrap();
        let b = enc.encode(&mut t, &store, &[7, 8, 9], None).unwrap();
        assert_eq!(t.value(a), t.value(b));
        let c = enc.encode(&mut t, &store, &[8, 7, 9], None).unwrap();
        assert_ne!(&t.value(a)[..16], &t.value(c)[16..32]);
        assert!(t.value(a).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_masking_rate_leaves_parameters_alone() {
        let (enc, mut store) = tiny(20);
        let before = store.clone();
        let corpus = vec![vec![6, 7, 8, 9], vec![10, 11]];
        let mut rng = SeededRng::seed_from_u64(1);
        let opts = MlmOptions {
            epochs: 1,
            masking: MaskingPolicy { rate: 0.0 },
            ..MlmOptions::default()
        };
        let hist = mlm_pretrain(&enc, &mut store, &corpus, &opts, &mut rng).unwrap();
        assert_eq!(hist, vec![0.0]);
        for ((_, a), (_, b)) in before.iter().zip(store.iter()) {
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn masking_policy_proportions() {
        let mut rng = SeededRng::seed_from_u64(5);
        let ids: Vec<usize> = (0..20_000).map(|i| 6 + i % 50).collect();
        let (input, targets) = MaskingPolicy::default().apply(&ids, 56, &mut rng);
        let rate = targets.len() as f64 / ids.len() as f64;
        assert!((rate - 0.15).abs() < 0.01, "{rate}");
        let masked = targets.iter().filter(|(p, _)| input[*p] == MASK).count() as f64;
        assert!((masked / targets.len() as f64 - 0.8).abs() < 0.03);
    }
}
