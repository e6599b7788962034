//! Run configuration: a TOML file naming a preset plus optional overrides.
//!
//! ```toml
//! task = "si"                  # "si" or "tc"
//! preset = "lasertagger-tf-ls"
//! seed = 13
//!
//! [paths]                      # relative paths resolve against the config file
//! train_articles = "data/articles"
//! train_labels = "data/train.si.tsv"
//! dev_articles = "data/dev"    # optional; scored on the training set when absent
//! dev_labels = "data/dev.si.tsv"
//! label_set = "data/techniques.txt"  # TC only; the 14 shared-task names when absent
//! output = "runs/si"
//!
//! [train]        # epochs, learning_rate, warmup_fraction, batch_size, accumulation
//! [encoder]      # hidden, layers, heads, feedforward, max_positions, dropout
//! [recurrent]    # embedding, hidden (bilstm-baseline only)
//! [tagger]       # decoder_*, teacher_forcing_start/end, label_smoothing, postprocess
//! [classifier]   # threshold, decision, class_weights
//! [finetune]     # epochs, masking_rate, learning_rate, ... (finetuned TC presets)
//! ```
//!
//! The environment overrides paths and seed only: `PROPSPAN_SEED`,
//! `PROPSPAN_TRAIN_ARTICLES`, `PROPSPAN_TRAIN_LABELS`, `PROPSPAN_DEV_ARTICLES`,
//! `PROPSPAN_DEV_LABELS`, `PROPSPAN_LABEL_SET`, `PROPSPAN_OUTPUT`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use propspan::encoder::{EncoderConfig, MaskingPolicy, MlmOptions};
use propspan::presets::{preset, Preset, PRESET_NAMES};
use propspan::si::{BackboneConfig, RecurrentConfig, SiTrainOptions, TaggerConfig};
use propspan::tc::{Decision, TcConfig, TcTrainOptions};

use crate::CliError;

/// Stand-in vocabulary size until the training vocabulary is known.
const PLACEHOLDER_VOCAB: usize = propspan::corpus::vocab::MARKER + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Si,
    Tc,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Si => "si",
            Task::Tc => "tc",
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsFile {
    pub train_articles: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub dev_articles: Option<PathBuf>,
    pub dev_labels: Option<PathBuf>,
    pub label_set: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub warmup_fraction: Option<f64>,
    pub batch_size: Option<usize>,
    pub accumulation: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderOverrides {
    pub hidden: Option<usize>,
    pub layers: Option<usize>,
    pub heads: Option<usize>,
    pub feedforward: Option<usize>,
    pub max_positions: Option<usize>,
    pub dropout: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecurrentOverrides {
    pub embedding: Option<usize>,
    pub hidden: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaggerOverrides {
    pub decoder_layers: Option<usize>,
    pub decoder_hidden: Option<usize>,
    pub decoder_heads: Option<usize>,
    pub decoder_feedforward: Option<usize>,
    pub teacher_forcing_start: Option<f64>,
    pub teacher_forcing_end: Option<f64>,
    pub label_smoothing: Option<f64>,
    pub postprocess: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierOverrides {
    pub threshold: Option<f64>,
    pub decision: Option<Decision>,
    pub class_weights: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneOverrides {
    pub epochs: Option<usize>,
    pub masking_rate: Option<f64>,
    pub learning_rate: Option<f64>,
    pub warmup_fraction: Option<f64>,
    pub batch_size: Option<usize>,
    pub accumulation: Option<usize>,
}

/// The file as written.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub task: Option<Task>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: PathsFile,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub encoder: EncoderOverrides,
    #[serde(default)]
    pub recurrent: RecurrentOverrides,
    #[serde(default)]
    pub tagger: TaggerOverrides,
    #[serde(default)]
    pub classifier: ClassifierOverrides,
    #[serde(default)]
    pub finetune: FinetuneOverrides,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunPaths {
    pub train_articles: PathBuf,
    pub train_labels: PathBuf,
    pub dev: Option<(PathBuf, PathBuf)>,
    pub label_set: Option<PathBuf>,
    pub output: PathBuf,
}

/// Everything a training run needs, with the preset applied. The encoder
/// and recurrent configs carry a placeholder vocabulary size until the
/// vocabulary is built.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelPlan {
    Si {
        backbone: BackboneConfig,
        tagger: TaggerConfig,
        train: SiTrainOptions,
    },
    Tc {
        encoder: EncoderConfig,
        classifier: TcConfig,
        train: TcTrainOptions,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub preset: String,
    pub seed: u64,
    pub paths: RunPaths,
    pub plan: ModelPlan,
}

/// Source of environment overrides; a closure so tests need not touch the
/// process environment.
pub type Env<'a> = &'a dyn Fn(&str) -> Option<String>;

pub fn process_env(key: &str) -> Option<String> {
    std::env::var(key).ok()
}

fn set<T: Copy>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

fn check(problems: &mut Vec<String>, result: propspan::Result<()>, section: &str) {
    if let Err(e) = result {
        let msg = e.to_string();
        let msg = msg.strip_prefix("contract violation: ").unwrap_or(&msg);
        problems.extend(msg.split("; ").map(|m| format!("{section}: {m}")));
    }
}

impl RunConfig {
    /// Read, merge and validate a config file. Every problem found is
    /// reported at once.
    pub fn load(path: &Path, env: Env<'_>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(vec![format!("cannot read config {}: {e}", path.display())]))?;
        let file: RunFile = toml::from_str(&text)
            .map_err(|e| CliError::Validation(vec![format!("{}: {}", path.display(), e.message())]))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::resolve(file, &base, env)
    }

    pub fn resolve(file: RunFile, base: &Path, env: Env<'_>) -> Result<Self, CliError> {
        let mut problems = Vec::new();
        let from_file = |p: &Option<PathBuf>| p.as_ref().map(|p| base.join(p));
        let pick = |key: &str, p: &Option<PathBuf>| env(key).map(PathBuf::from).or_else(|| from_file(p));

        let seed = match env("PROPSPAN_SEED") {
            Some(s) => s.trim().parse().unwrap_or_else(|_| {
                problems.push(format!("PROPSPAN_SEED: {s:?} is not an unsigned integer"));
                0
            }),
            None => file.seed.unwrap_or_else(|| {
                problems.push("seed: missing".into());
                0
            }),
        };
        let task = file.task;
        if task.is_none() {
            problems.push("task: missing (\"si\" or \"tc\")".into());
        }
        let preset_name = file.preset.clone().unwrap_or_default();
        let preset = match &file.preset {
            None => {
                problems.push("preset: missing".into());
                None
            }
            Some(name) => match preset(name) {
                None => {
                    problems.push(format!("preset: unknown {name:?}; expected one of {}", PRESET_NAMES.join(", ")));
                    None
                }
                Some(p) => {
                    if let Some(t) = task {
                        if p.task() != t.name() {
                            problems.push(format!("preset: {name} is a {} preset but task is {}", p.task(), t.name()));
                        }
                    }
                    Some(p)
                }
            },
        };

        let mut required = |key: &str, field: &str, p: &Option<PathBuf>, dir: bool| -> PathBuf {
            match pick(key, p) {
                None => {
                    problems.push(format!("paths.{field}: missing"));
                    PathBuf::new()
                }
                Some(path) => {
                    let ok = if dir { path.is_dir() } else { path.is_file() };
                    if !ok {
                        let kind = if dir { "directory" } else { "file" };
                        problems.push(format!("paths.{field}: {kind} {} does not exist", path.display()));
                    }
                    path
                }
            }
        };
        let train_articles = required("PROPSPAN_TRAIN_ARTICLES", "train_articles", &file.paths.train_articles, true);
        let train_labels = required("PROPSPAN_TRAIN_LABELS", "train_labels", &file.paths.train_labels, false);
        let dev_articles = pick("PROPSPAN_DEV_ARTICLES", &file.paths.dev_articles);
        let dev_labels = pick("PROPSPAN_DEV_LABELS", &file.paths.dev_labels);
        let dev = match (dev_articles, dev_labels) {
            (None, None) => None,
            (Some(a), Some(l)) => {
                if !a.is_dir() {
                    problems.push(format!("paths.dev_articles: directory {} does not exist", a.display()));
                }
                if !l.is_file() {
                    problems.push(format!("paths.dev_labels: file {} does not exist", l.display()));
                }
                Some((a, l))
            }
            _ => {
                problems.push("paths: dev_articles and dev_labels must be given together".into());
                None
            }
        };
        let label_set = pick("PROPSPAN_LABEL_SET", &file.paths.label_set);
        if let Some(l) = &label_set {
            if !l.is_file() {
                problems.push(format!("paths.label_set: file {} does not exist", l.display()));
            }
            if task == Some(Task::Si) {
                problems.push("paths.label_set: only meaningful for task tc".into());
            }
        }
        let output = pick("PROPSPAN_OUTPUT", &file.paths.output).unwrap_or_else(|| {
            problems.push("paths.output: missing".into());
            PathBuf::new()
        });
        if output.is_file() {
            problems.push(format!("paths.output: {} is a file", output.display()));
        }

        let plan = preset.map(|p| apply_overrides(p, &file, &mut problems));
        match (task, plan) {
            (Some(task), Some(plan)) if problems.is_empty() => Ok(Self {
                task,
                preset: preset_name,
                seed,
                paths: RunPaths {
                    train_articles,
                    train_labels,
                    dev,
                    label_set,
                    output,
                },
                plan,
            }),
            _ => Err(CliError::Validation(problems)),
        }
    }
}

fn apply_overrides(preset: Preset, file: &RunFile, problems: &mut Vec<String>) -> ModelPlan {
    let mut encoder = EncoderConfig::desk(PLACEHOLDER_VOCAB);
    let e = &file.encoder;
    set(&mut encoder.hidden, e.hidden);
    set(&mut encoder.layers, e.layers);
    set(&mut encoder.heads, e.heads);
    set(&mut encoder.feedforward, e.feedforward);
    set(&mut encoder.max_positions, e.max_positions);
    set(&mut encoder.dropout, e.dropout);
    check(problems, encoder.validate(), "encoder");

    let t = &file.train;
    match preset {
        Preset::Si(p) => {
            for (section, used) in [("classifier", !is_empty_classifier(&file.classifier)), ("finetune", !is_empty_finetune(&file.finetune))] {
                if used {
                    problems.push(format!("{section}: not used by task si"));
                }
            }
            let mut backbone = p.backbone_config(PLACEHOLDER_VOCAB);
            match &mut backbone {
                BackboneConfig::Transformer(cfg) => *cfg = encoder,
                BackboneConfig::Recurrent(cfg) => apply_recurrent(cfg, &file.recurrent, problems),
            }
            let mut tagger = p.tagger;
            let g = &file.tagger;
            set(&mut tagger.decoder_layers, g.decoder_layers);
            set(&mut tagger.decoder_hidden, g.decoder_hidden);
            set(&mut tagger.decoder_heads, g.decoder_heads);
            set(&mut tagger.decoder_feedforward, g.decoder_feedforward);
            set(&mut tagger.teacher_forcing.start, g.teacher_forcing_start);
            set(&mut tagger.teacher_forcing.end, g.teacher_forcing_end);
            set(&mut tagger.label_smoothing, g.label_smoothing);
            set(&mut tagger.postprocess, g.postprocess);
            check(problems, tagger.validate(), "tagger");
            let mut train = p.train;
            set(&mut train.epochs, t.epochs);
            set(&mut train.learning_rate, t.learning_rate);
            set(&mut train.warmup_fraction, t.warmup_fraction);
            set(&mut train.batch_size, t.batch_size);
            set(&mut train.accumulation, t.accumulation);
            check_train(problems, train.epochs, train.learning_rate, train.warmup_fraction, train.batch_size, train.accumulation, "train");
            ModelPlan::Si { backbone, tagger, train }
        }
        Preset::Tc(p) => {
            if file.tagger.decoder_layers.is_some() || file.tagger.label_smoothing.is_some() || file.tagger.postprocess.is_some() {
                problems.push("tagger: not used by task tc".into());
            }
            if file.recurrent.embedding.is_some() || file.recurrent.hidden.is_some() {
                problems.push("recurrent: not used by task tc".into());
            }
            let mut classifier = p.classifier(1);
            let c = &file.classifier;
            set(&mut classifier.threshold, c.threshold);
            set(&mut classifier.decision, c.decision);
            if c.class_weights.is_some() {
                classifier.class_weights = c.class_weights.clone();
            }
            let mut train = p.train;
            set(&mut train.epochs, t.epochs);
            set(&mut train.learning_rate, t.learning_rate);
            set(&mut train.warmup_fraction, t.warmup_fraction);
            set(&mut train.batch_size, t.batch_size);
            set(&mut train.accumulation, t.accumulation);
            check_train(problems, train.epochs, train.learning_rate, train.warmup_fraction, train.batch_size, train.accumulation, "train");
            let f = &file.finetune;
            match &mut train.finetune {
                Some(mlm) => {
                    apply_finetune(mlm, f);
                    check_train(problems, mlm.epochs, mlm.learning_rate, mlm.warmup_fraction, mlm.batch_size, mlm.accumulation, "finetune");
                    if !(0.0..=1.0).contains(&mlm.masking.rate) {
                        problems.push(format!("finetune: masking_rate {} outside [0, 1]", mlm.masking.rate));
                    }
                }
                None if !is_empty_finetune(f) => problems.push("finetune: preset does not finetune".into()),
                None => {}
            }
            ModelPlan::Tc { encoder, classifier, train }
        }
    }
}

fn apply_recurrent(cfg: &mut RecurrentConfig, r: &RecurrentOverrides, problems: &mut Vec<String>) {
    set(&mut cfg.embedding, r.embedding);
    set(&mut cfg.hidden, r.hidden);
    if cfg.embedding == 0 || cfg.hidden == 0 {
        problems.push("recurrent: embedding and hidden must be >= 1".into());
    }
}

fn apply_finetune(mlm: &mut MlmOptions, f: &FinetuneOverrides) {
    set(&mut mlm.epochs, f.epochs);
    if let Some(rate) = f.masking_rate {
        mlm.masking = MaskingPolicy { rate };
    }
    set(&mut mlm.learning_rate, f.learning_rate);
    set(&mut mlm.warmup_fraction, f.warmup_fraction);
    set(&mut mlm.batch_size, f.batch_size);
    set(&mut mlm.accumulation, f.accumulation);
}

fn is_empty_classifier(c: &ClassifierOverrides) -> bool {
    c.threshold.is_none() && c.decision.is_none() && c.class_weights.is_none()
}

fn is_empty_finetune(f: &FinetuneOverrides) -> bool {
    f.epochs.is_none()
        && f.masking_rate.is_none()
        && f.learning_rate.is_none()
        && f.warmup_fraction.is_none()
        && f.batch_size.is_none()
        && f.accumulation.is_none()
}

fn check_train(problems: &mut Vec<String>, epochs: usize, lr: f64, warmup: f64, batch: usize, accumulation: usize, section: &str) {
    if epochs == 0 {
        problems.push(format!("{section}: epochs must be >= 1"));
    }
    if !(lr.is_finite() && lr > 0.0) {
        problems.push(format!("{section}: learning_rate must be positive, got {lr}"));
    }
    if !(0.0..=1.0).contains(&warmup) {
        problems.push(format!("{section}: warmup_fraction {warmup} outside [0, 1]"));
    }
    if batch == 0 {
        problems.push(format!("{section}: batch_size must be >= 1"));
    }
    if accumulation == 0 {
        problems.push(format!("{section}: accumulation must be >= 1"));
    }
}
