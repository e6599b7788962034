use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Adam, ParamStore, Tape, WarmupLinear};
use crate::corpus::{article_tc_samples, split_sentences, Article, LabelSet, SpanAnnotation, TcSample, Vocabulary};
use crate::encoder::{mlm_pretrain, MlmOptions};
use crate::error::{Error, Result};
use crate::eval::{tc_micro_f, EpochMetrics, ScoreReport};
use crate::tc::{PredictionRow, PredictionSet, TcModel};
use crate::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcTrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub accumulation: usize,
    /// Masked-LM training of the encoder on the training articles before
    /// supervised training.
    #[serde(default)]
    pub finetune: Option<MlmOptions>,
}

impl Default for TcTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 2e-5,
            warmup_fraction: 0.1,
            batch_size: 16,
            accumulation: 2,
            finetune: None,
        }
    }
}

/// Gold annotation rows with the marker samples built from them and the
/// sentence id sequences used for masked-LM finetuning.
#[derive(Clone, Debug)]
pub struct TcDataset {
    pub articles: Vec<Article>,
    pub spans: Vec<SpanAnnotation>,
    pub samples: Vec<TcSample>,
    pub sentences: Vec<Vec<usize>>,
}

impl TcDataset {
    pub fn new(articles: Vec<Article>, spans: Vec<SpanAnnotation>, vocab: &Vocabulary, labels: &LabelSet) -> Result<Self> {
        let mut samples = Vec::new();
        let mut sentences = Vec::new();
        for a in &articles {
            let sents = split_sentences(a);
            samples.extend(article_tc_samples(a, &sents, &spans, vocab, labels)?);
            sentences.extend(sents.iter().map(|s| vocab.encode(s.tokens.iter().map(|t| t.surface.as_str()))));
        }
        let known: std::collections::HashSet<&str> = articles.iter().map(|a| a.id.as_str()).collect();
        if let Some(s) = spans.iter().find(|s| !known.contains(s.article_id.as_str())) {
            return Err(Error::contract(format!("span ({}, {}) refers to unknown article {}", s.begin, s.end, s.article_id)));
        }
        Ok(Self {
            articles,
            spans,
            samples,
            sentences,
        })
    }
}

/// Probabilities of every sample, one row per gold annotation row.
pub fn predict_samples(model: &TcModel, store: &ParamStore, samples: &[TcSample]) -> Result<PredictionSet> {
    let mut rows = Vec::new();
    for s in samples {
        let probabilities = model.classify(store, s)?;
        for _ in 0..s.rows.max(1) {
            rows.push(PredictionRow {
                article_id: s.article_id.clone(),
                begin: s.begin,
                end: s.end,
                probabilities: probabilities.clone(),
            });
        }
    }
    Ok(PredictionSet { rows })
}

/// Micro-F of the model's decisions on a dataset.
pub fn evaluate_tc(model: &TcModel, store: &ParamStore, data: &TcDataset, labels: &LabelSet) -> Result<ScoreReport> {
    let set = predict_samples(model, store, &data.samples)?;
    let rows = set.to_annotations(labels, model.config.decision, model.config.threshold)?;
    tc_micro_f(&rows, &data.spans)
}

/// Train `model`, after optional masked-LM finetuning of its encoder, and
/// score `dev` (the training data when `None`) after every epoch.
pub fn train_tc(
    model: &TcModel,
    store: &mut ParamStore,
    labels: &LabelSet,
    train: &TcDataset,
    dev: Option<&TcDataset>,
    options: &TcTrainOptions,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    if train.samples.is_empty() {
        return Err(Error::contract("train_tc: empty training set"));
    }
    let mut rng = SeededRng::seed_from_u64(seed);
    if let Some(mlm) = &options.finetune {
        let corpus: Vec<Vec<usize>> = train.sentences.iter().filter(|s| !s.is_empty()).cloned().collect();
        mlm_pretrain(&model.encoder, store, &corpus, mlm, &mut rng)?;
    }
    let batch = options.batch_size.max(1);
    let micro = options.epochs * train.samples.len().div_ceil(batch);
    let updates = micro.div_ceil(options.accumulation.max(1)).max(1);
    let mut adam = Adam::new(
        store,
        options.learning_rate,
        WarmupLinear::new(options.warmup_fraction, updates)?,
        options.accumulation,
    );
    let mut order: Vec<usize> = (0..train.samples.len()).collect();
    let mut history = Vec::with_capacity(options.epochs);
    for epoch in 1..=options.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for group in order.chunks(batch) {
            let mut tape = Tape::new();
            let mut losses = Vec::with_capacity(group.len());
            for &i in group {
                let l = model.loss(&mut tape, store, &train.samples[i], Some(&mut rng))?;
                loss_sum += tape.scalar(l);
                losses.push(tape.reshape(l, &[1, 1])?);
            }
            let stacked = tape.concat_rows(&losses)?;
            let loss = tape.mean(stacked);
            tape.backward(loss)?;
            tape.flush_param_grads(store);
            if adam.accumulate() {
                adam.step(store);
                store.round_to_f32();
            }
        }
        if epoch == options.epochs && adam.has_pending() {
            adam.step(store);
            store.round_to_f32();
        }
        let report = evaluate_tc(model, store, dev.unwrap_or(train), labels)?;
        let m = EpochMetrics {
            epoch,
            loss: loss_sum / train.samples.len() as f64,
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
        };
        on_epoch(&m);
        history.push(m);
    }
    store.zero_grad();
    Ok(history)
}
