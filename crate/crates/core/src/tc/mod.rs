//! Technique classification over marker-token samples: a leading
//! classifier-token representation, optionally joined with a pooled
//! representation of the in-span rows, feeds a multilabel sigmoid head.

pub mod pool;
pub mod predictions;
pub mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Init, Linear, ParamId, ParamStore, Tape, Var};
use crate::corpus::TcSample;
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::SeededRng;

pub use pool::{pool_mean, pool_weighted};
pub use predictions::{
    decide_labels, ensemble, load_probabilities, read_probabilities, rows_for_sample, write_probabilities, Decision, PredictionRow,
    PredictionSet,
};
pub use train::{evaluate_tc, predict_samples, train_tc, TcDataset, TcTrainOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Classifier-token representation only.
    Cls,
    Mean,
    Weighted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcConfig {
    pub pooling: Pooling,
    pub labels: usize,
    pub threshold: f64,
    pub decision: Decision,
    /// Per-class loss weights; uniform when absent.
    #[serde(default)]
    pub class_weights: Option<Vec<f64>>,
}

impl TcConfig {
    pub fn new(pooling: Pooling, labels: usize) -> Self {
        Self {
            pooling,
            labels,
            threshold: 0.5,
            decision: Decision::Multilabel,
            class_weights: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.labels == 0 {
            problems.push("labels must be >= 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            problems.push(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.labels || w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                problems.push(format!("class_weights must be {} non-negative numbers", self.labels));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::contract(problems.join("; ")))
        }
    }
}

/// Learnable parameters of weighted pooling: `w: [n, 1]`, `b: [1]`.
#[derive(Clone, Copy, Debug)]
pub struct SpanPooler {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug)]
pub struct TcModel {
    pub encoder: Encoder,
    pub config: TcConfig,
    pub pooler: Option<SpanPooler>,
    pub output: Linear,
}

impl TcModel {
    pub fn new<R: Rng + ?Sized>(
        encoder_config: EncoderConfig,
        config: TcConfig,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::new(encoder_config, store, rng)?;
        let n = encoder.hidden();
        let pooler = (config.pooling == Pooling::Weighted).then(|| SpanPooler {
            w: store.add("pooler.w", &[n, 1], Init::Normal(0.02), rng),
            b: store.add("pooler.b", &[1], Init::Zeros, rng),
        });
        let input = if config.pooling == Pooling::Cls { n } else { 2 * n };
        let output = Linear::new(store, "classifier", input, config.labels, rng);
        Ok(Self {
            encoder,
            config,
            pooler,
            output,
        })
    }

    /// Token ids cut to the encoder's length limit. The span and its closing
    /// marker must survive the cut.
    pub fn fit_sample<'a>(&self, sample: &'a TcSample) -> Result<&'a [usize]> {
        let max = self.encoder.config.max_positions;
        if sample.span.end + 1 > max {
            return Err(Error::Alignment(format!(
                "span ({}, {}) of article {} ends at token {} beyond the {max}-token limit",
                sample.begin, sample.end, sample.article_id, sample.span.end
            )));
        }
        Ok(&sample.token_ids[..sample.token_ids.len().min(max)])
    }

    /// Output logits `[1, K]` of one sample.
    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, sample: &TcSample, rng: Option<&mut SeededRng>) -> Result<Var> {
        let ids = self.fit_sample(sample)?;
        let encoded = self.encoder.encode(tape, store, ids, rng)?;
        let cls = tape.slice_rows(encoded, 0, 1)?;
        let features = match self.config.pooling {
            Pooling::Cls => cls,
            Pooling::Mean | Pooling::Weighted => {
                let rows = tape.slice_rows(encoded, sample.span.start, sample.span.end)?;
                let pooled = match self.pooler {
                    Some(p) => {
                        let w = tape.param(store, p.w);
                        let b = tape.param(store, p.b);
                        pool_weighted(tape, rows, w, b)?.0
                    }
                    None => pool_mean(tape, rows)?,
                };
                tape.concat_cols(&[cls, pooled])?
            }
        };
        self.output.forward(tape, store, features)
    }

    /// Multilabel training loss of one sample.
    pub fn loss(&self, tape: &mut Tape, store: &ParamStore, sample: &TcSample, rng: Option<&mut SeededRng>) -> Result<Var> {
        if sample.label_vector.len() != self.config.labels {
            return Err(Error::contract(format!(
                "sample has {} labels, model {}",
                sample.label_vector.len(),
                self.config.labels
            )));
        }
        let logits = self.logits(tape, store, sample, rng)?;
        let target: Vec<f64> = sample.label_vector.iter().map(|&v| f64::from(v)).collect();
        weighted_bce(tape, logits, &target, self.config.class_weights.as_deref())
    }

    /// Class probabilities of one sample.
    pub fn classify(&self, store: &ParamStore, sample: &TcSample) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let logits = self.logits(&mut tape, store, sample, None)?;
        Ok(tape.value(logits).iter().map(|&x| crate::autograd::sigmoid(x)).collect())
    }
}

/// Mean sigmoid cross-entropy with optional per-class weights.
fn weighted_bce(tape: &mut Tape, logits: Var, target: &[f64], weights: Option<&[f64]>) -> Result<Var> {
    let Some(weights) = weights else {
        return tape.bce_with_logits(logits, target.to_vec());
    };
    let x = tape.value(logits).to_vec();
    if x.len() != target.len() || x.len() != weights.len() {
        return Err(Error::shape("weighted_bce", &[&[x.len()], &[target.len()], &[weights.len()]]));
    }
    let k = x.len() as f64;
    let value = x
        .iter()
        .zip(target)
        .zip(weights)
        .map(|((&x, &y), &w)| w * (x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()))
        .sum::<f64>()
        / k;
    let grad: Vec<f64> = x
        .iter()
        .zip(target)
        .zip(weights)
        .map(|((&x, &y), &w)| w * (crate::autograd::sigmoid(x) - y) / k)
        .collect();
    let backward = Box::new(move |g: &[f64]| vec![grad.iter().map(|d| d * g[0]).collect()]);
    Ok(tape.custom(&[logits], &[1], vec![value], backward))
}
