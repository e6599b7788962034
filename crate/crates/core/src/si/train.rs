use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Adam, ParamStore, Tape, WarmupLinear};
use crate::corpus::{sentences_to_spans, tagged_sentences, Article, Sentence, SpanAnnotation, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{si_score, EpochMetrics};
use crate::si::SiModel;
use crate::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiTrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub accumulation: usize,
}

impl Default for SiTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 2e-5,
            warmup_fraction: 0.1,
            batch_size: 16,
            accumulation: 2,
        }
    }
}

/// Articles with their gold spans and the tagged sentences derived from
/// them.
#[derive(Clone, Debug)]
pub struct SiDataset {
    pub articles: Vec<Article>,
    pub spans: Vec<SpanAnnotation>,
    pub sentences: Vec<Sentence>,
}

impl SiDataset {
    pub fn new(articles: Vec<Article>, spans: Vec<SpanAnnotation>) -> Result<Self> {
        let sentences = tagged_sentences(&articles, &spans)?;
        Ok(Self {
            articles,
            spans,
            sentences,
        })
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }
}

fn sentence_ids(vocab: &Vocabulary, s: &Sentence) -> Vec<usize> {
    vocab.encode(s.tokens.iter().map(|t| t.surface.as_str()))
}

/// Predicted spans for every article of `data`.
pub fn predict_dataset(model: &SiModel, store: &ParamStore, vocab: &Vocabulary, data: &SiDataset) -> Result<Vec<SpanAnnotation>> {
    let mut spans = Vec::new();
    for article in &data.articles {
        let sentences: Vec<Sentence> = data
            .sentences
            .iter()
            .filter(|s| s.article_id == article.id)
            .cloned()
            .collect();
        let tags = sentences
            .iter()
            .map(|s| model.predict_tags(store, &sentence_ids(vocab, s)))
            .collect::<Result<Vec<_>>>()?;
        spans.extend(sentences_to_spans(article, &sentences, &tags)?);
    }
    Ok(spans)
}

/// Fraction of tokens whose predicted tag equals the gold tag.
pub fn token_accuracy(model: &SiModel, store: &ParamStore, vocab: &Vocabulary, data: &SiDataset) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for s in &data.sentences {
        let gold = s.tags.as_ref().ok_or_else(|| Error::contract("token_accuracy: untagged sentence"))?;
        let pred = model.predict_tags(store, &sentence_ids(vocab, s))?;
        correct += pred.iter().zip(gold).filter(|(p, g)| p == g).count();
        total += gold.len();
    }
    Ok(if total == 0 { 1.0 } else { correct as f64 / total as f64 })
}

/// Train `model` end to end. Each epoch shuffles the sentences, runs
/// micro-batches of `batch_size` with an optimiser update every
/// `accumulation` micro-batches, and scores `dev` (the training data when
/// `None`). The teacher-forcing rate decays across all micro-batches of
/// the run.
pub fn train_si(
    model: &SiModel,
    store: &mut ParamStore,
    vocab: &Vocabulary,
    train: &SiDataset,
    dev: Option<&SiDataset>,
    options: &SiTrainOptions,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    let mut chunks: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for s in &train.sentences {
        let ids = sentence_ids(vocab, s);
        let tags = s.tags.as_ref().ok_or_else(|| Error::contract("train_si: untagged sentence"))?;
        for (i, t) in ids.chunks(model.chunk_len()).zip(tags.chunks(model.chunk_len())) {
            chunks.push((i.to_vec(), t.iter().map(|&x| usize::from(x)).collect()));
        }
    }
    if chunks.is_empty() {
        return Err(Error::contract("train_si: empty training set"));
    }
    let batch = options.batch_size.max(1);
    let micro_per_epoch = chunks.len().div_ceil(batch);
    let total_micro = options.epochs * micro_per_epoch;
    let updates = total_micro.div_ceil(options.accumulation.max(1)).max(1);
    let mut adam = Adam::new(
        store,
        options.learning_rate,
        WarmupLinear::new(options.warmup_fraction, updates)?,
        options.accumulation,
    );
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    let mut history = Vec::with_capacity(options.epochs);
    let mut micro = 0usize;
    for epoch in 1..=options.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for group in order.chunks(batch) {
            let rate = model.tagger.teacher_forcing.rate(micro, total_micro);
            let mut tape = Tape::new();
            let mut losses = Vec::with_capacity(group.len());
            for &i in group {
                let (ids, gold) = &chunks[i];
                let l = model.loss(&mut tape, store, ids, gold, rate, &mut rng, true)?;
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
            micro += 1;
        }
        if epoch == options.epochs && adam.has_pending() {
            adam.step(store);
            store.round_to_f32();
        }
        let eval = dev.unwrap_or(train);
        let report = si_score(&predict_dataset(model, store, vocab, eval)?, &eval.spans)?;
        let m = EpochMetrics {
            epoch,
            loss: loss_sum / chunks.len() as f64,
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
