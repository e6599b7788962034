//! Span identification as binary per-token tagging with three heads over a
//! shared backbone: an independent linear layer, a linear-chain CRF, and an
//! autoregressive decoder.

pub mod crf;
pub mod lasertagger;
pub mod postprocess;
pub mod recurrent;
pub mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{cross_entropy_label_smoothed, Linear, ParamStore, Tape, Var};
use crate::corpus::{sentences_to_spans, split_sentences, tokenize, Article, SpanAnnotation, Vocabulary};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::SeededRng;

pub use crf::{crf_nll, CrfLayer, CrfParams};
pub use lasertagger::{DecoderConfig, DecoderState, LaserTagger, SequenceLoss};
pub use postprocess::postprocess_fill;
pub use recurrent::{BiLstm, RecurrentConfig};
pub use train::{predict_dataset, token_accuracy, train_si, SiDataset, SiTrainOptions};

/// Longest chunk a recurrent backbone processes as one sequence.
const RECURRENT_CHUNK: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Linear,
    Crf,
    #[serde(rename = "lasertagger")]
    LaserTagger,
}

/// Linear teacher-forcing schedule from `start` to `end` over training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherForcing {
    pub start: f64,
    pub end: f64,
}

impl Default for TeacherForcing {
    fn default() -> Self {
        Self { start: 1.0, end: 0.0 }
    }
}

impl TeacherForcing {
    /// Always feed gold labels.
    pub const FORCED: Self = Self { start: 1.0, end: 1.0 };

    pub fn rate(&self, step: usize, total_steps: usize) -> f64 {
        let total = total_steps.max(1);
        let s = step.min(total);
        self.start + (self.end - self.start) * s as f64 / total as f64
    }
}

/// Teacher-forcing rate of the default schedule: `1 - step / total_steps`.
pub fn tf_rate(step: usize, total_steps: usize) -> f64 {
    TeacherForcing::default().rate(step, total_steps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub head: HeadKind,
    pub decoder_layers: usize,
    pub decoder_hidden: usize,
    pub decoder_heads: usize,
    pub decoder_feedforward: usize,
    pub labels: usize,
    pub teacher_forcing: TeacherForcing,
    pub label_smoothing: f64,
    /// Fill each sentence between its first and last positive tag.
    pub postprocess: bool,
}

impl TaggerConfig {
    pub fn new(head: HeadKind) -> Self {
        Self {
            head,
            decoder_layers: 1,
            decoder_hidden: 128,
            decoder_heads: 4,
            decoder_feedforward: 256,
            labels: 2,
            teacher_forcing: TeacherForcing::default(),
            label_smoothing: 0.0,
            postprocess: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.labels < 2 {
            problems.push(format!("labels = {} (need >= 2)", self.labels));
        }
        let tf = self.teacher_forcing;
        if !(0.0..=1.0).contains(&tf.start) || !(0.0..=1.0).contains(&tf.end) {
            problems.push(format!("teacher forcing endpoints {} / {} outside [0, 1]", tf.start, tf.end));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            problems.push(format!("label smoothing {} outside [0, 1)", self.label_smoothing));
        }
        if self.head == HeadKind::LaserTagger
            && (self.decoder_layers == 0 || self.decoder_heads == 0 || self.decoder_hidden % self.decoder_heads != 0)
        {
            problems.push(format!(
                "decoder layers {} / hidden {} / heads {} invalid",
                self.decoder_layers, self.decoder_hidden, self.decoder_heads
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::contract(problems.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum BackboneConfig {
    Transformer(EncoderConfig),
    Recurrent(RecurrentConfig),
}

#[derive(Clone, Debug)]
pub enum Backbone {
    Transformer(Encoder),
    Recurrent(BiLstm),
}

#[derive(Clone, Debug)]
pub enum Head {
    Linear(Linear),
    Crf { emission: Linear, crf: CrfLayer },
    LaserTagger(LaserTagger),
}

/// Backbone plus tagging head. Parameters live in a separate [`ParamStore`].
#[derive(Clone, Debug)]
pub struct SiModel {
    pub backbone_config: BackboneConfig,
    pub tagger: TaggerConfig,
    pub backbone: Backbone,
    pub head: Head,
}

impl SiModel {
    pub fn new<R: Rng + ?Sized>(
        backbone_config: BackboneConfig,
        tagger: TaggerConfig,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        tagger.validate()?;
        let (backbone, dim, chunk) = match &backbone_config {
            BackboneConfig::Transformer(cfg) => {
                let enc = Encoder::new(cfg.clone(), store, rng)?;
                (Backbone::Transformer(enc), cfg.hidden, cfg.max_positions)
            }
            BackboneConfig::Recurrent(cfg) => {
                let lstm = BiLstm::new(cfg.clone(), store, rng)?;
                let dim = lstm.output_dim();
                (Backbone::Recurrent(lstm), dim, RECURRENT_CHUNK)
            }
        };
        let k = tagger.labels;
        let head = match tagger.head {
            HeadKind::Linear => Head::Linear(Linear::new(store, "head.linear", dim, k, rng)),
            HeadKind::Crf => Head::Crf {
                emission: Linear::new(store, "head.emission", dim, k, rng),
                crf: CrfLayer::new(store, "head.crf", k, rng),
            },
            HeadKind::LaserTagger => {
                let cfg = DecoderConfig {
                    layers: tagger.decoder_layers,
                    hidden: tagger.decoder_hidden,
                    heads: tagger.decoder_heads,
                    feedforward: tagger.decoder_feedforward,
                    labels: k,
                    max_positions: chunk,
                };
                Head::LaserTagger(LaserTagger::new(cfg, dim, store, rng)?)
            }
        };
        Ok(Self {
            backbone_config,
            tagger,
            backbone,
            head,
        })
    }

    /// Longest id sequence handled in one pass; longer sentences are cut
    /// into consecutive chunks of this length.
    pub fn chunk_len(&self) -> usize {
        match &self.backbone {
            Backbone::Transformer(enc) => enc.config.max_positions,
            Backbone::Recurrent(_) => RECURRENT_CHUNK,
        }
    }

    /// Backbone activations `[T, n]`; dropout only when `rng` is given.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, ids: &[usize], rng: Option<&mut SeededRng>) -> Result<Var> {
        match &self.backbone {
            Backbone::Transformer(enc) => enc.encode(tape, store, ids, rng),
            Backbone::Recurrent(lstm) => lstm.encode(tape, store, ids),
        }
    }

    /// Training loss of one chunk. `rate` is the teacher-forcing rate and is
    /// ignored by the non-autoregressive heads.
    pub fn loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ids: &[usize],
        gold: &[usize],
        rate: f64,
        rng: &mut SeededRng,
        dropout: bool,
    ) -> Result<Var> {
        if ids.len() != gold.len() || ids.is_empty() {
            return Err(Error::shape("si loss", &[&[ids.len()], &[gold.len()]]));
        }
        let encoded = self.encode(tape, store, ids, if dropout { Some(&mut *rng) } else { None })?;
        let eps = self.tagger.label_smoothing;
        match &self.head {
            Head::Linear(lin) => {
                let logits = lin.forward(tape, store, encoded)?;
                cross_entropy_label_smoothed(tape, logits, gold, eps)
            }
            Head::Crf { emission, crf } => {
                let logits = emission.forward(tape, store, encoded)?;
                let nll = crf.nll(tape, store, logits, gold)?;
                Ok(tape.scale(nll, 1.0 / gold.len() as f64))
            }
            Head::LaserTagger(dec) => Ok(dec.train_sequence(tape, store, encoded, gold, rate, eps, rng)?.loss),
        }
    }

    fn predict_chunk(&self, store: &ParamStore, ids: &[usize]) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let encoded = self.encode(&mut tape, store, ids, None)?;
        match &self.head {
            Head::Linear(lin) => {
                let logits = lin.forward(&mut tape, store, encoded)?;
                let k = self.tagger.labels;
                Ok(tape.value(logits).chunks(k).map(lasertagger::argmax).collect())
            }
            Head::Crf { emission, crf } => {
                let logits = emission.forward(&mut tape, store, encoded)?;
                crf.values(store).viterbi(tape.value(logits), ids.len())
            }
            Head::LaserTagger(dec) => dec.infer(&mut tape, store, Some(encoded)),
        }
    }

    /// Binary tags of one sentence, postprocessed when configured.
    pub fn predict_tags(&self, store: &ParamStore, ids: &[usize]) -> Result<Vec<u8>> {
        let mut tags = Vec::with_capacity(ids.len());
        for chunk in ids.chunks(self.chunk_len()) {
            tags.extend(self.predict_chunk(store, chunk)?.into_iter().map(|t| u8::from(t != 0)));
        }
        if self.tagger.postprocess {
            tags = postprocess_fill(&tags)?;
        }
        Ok(tags)
    }

    /// Predicted propaganda spans of a raw article.
    pub fn predict_article(&self, store: &ParamStore, vocab: &Vocabulary, article: &Article) -> Result<Vec<SpanAnnotation>> {
        let sentences = split_sentences(article);
        let tags = sentences
            .iter()
            .map(|s| self.predict_tags(store, &vocab.encode(s.tokens.iter().map(|t| t.surface.as_str()))))
            .collect::<Result<Vec<_>>>()?;
        sentences_to_spans(article, &sentences, &tags)
    }
}

/// Token ids of a raw text, for callers that skip sentence splitting.
pub fn encode_text(vocab: &Vocabulary, text: &str) -> Vec<usize> {
    vocab.encode(tokenize(text).iter().map(|t| t.surface.as_str()))
}
