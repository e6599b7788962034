use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;

use propspan::corpus::{
    build_vocabulary, format_si_rows, format_tc_rows, load_articles, load_span_labels, load_span_labels_auto, make_synthetic as generate,
    LabelMode, LabelSet, SpanAnnotation, SyntheticSpec,
};
use propspan::eval::{si_score, tc_micro_f, EpochMetrics};
use propspan::presets::{preset, Preset, PRESET_NAMES};
use propspan::saved::{load_model, save_model, LoadedModel, ModelSpec};
use propspan::si::{predict_dataset, train_si, BackboneConfig, HeadKind, SiDataset, SiModel};
use propspan::tc::{ensemble as average, load_probabilities, predict_samples, train_tc, write_probabilities, Decision, TcDataset, TcModel};
use propspan::SeededRng;

use crate::config::{Env, ModelPlan, RunConfig, Task};
use crate::{invalid, runtime, CliError, DecisionArg, ReportFormat, TaskArg};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const PROBABILITIES_FILE: &str = "probabilities.tsv";

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn without_techniques(spans: Vec<SpanAnnotation>) -> Vec<SpanAnnotation> {
    spans
        .into_iter()
        .map(|s| SpanAnnotation { technique: None, ..s })
        .collect()
}

fn metrics_file(rows: &[EpochMetrics]) -> String {
    let mut out = format!("{}\n", EpochMetrics::HEADER);
    for m in rows {
        out.push_str(&m.to_row());
        out.push('\n');
    }
    out
}

fn progress(total: usize) -> impl FnMut(&EpochMetrics) {
    move |m| {
        eprintln!(
            "epoch {}/{total}  loss {:.4}  P {:.4}  R {:.4}  F {:.4}",
            m.epoch, m.loss, m.precision, m.recall, m.f1
        )
    }
}

fn load_si_data(articles: &Path, labels: &Path) -> Result<SiDataset, CliError> {
    let articles = load_articles(articles).map_err(invalid)?;
    let (spans, _) = load_span_labels_auto(labels).map_err(invalid)?;
    SiDataset::new(articles, without_techniques(spans)).map_err(invalid)
}

/// Train per `config_path`, writing the checkpoint, the per-epoch metrics
/// and predictions for the evaluation set (dev, else train) into the
/// output directory.
pub fn train(config_path: &Path, env: Env<'_>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config_path, env)?;
    let paths = &cfg.paths;
    let mut init = SeededRng::seed_from_u64(cfg.seed);
    match (&cfg.task, cfg.plan.clone()) {
        (Task::Si, ModelPlan::Si { backbone, tagger, train }) => {
            let train_data = load_si_data(&paths.train_articles, &paths.train_labels)?;
            let dev_data = match &paths.dev {
                Some((a, l)) => Some(load_si_data(a, l)?),
                None => None,
            };
            let vocabulary = build_vocabulary(&train_data.articles, 1);
            let backbone = match backbone {
                BackboneConfig::Transformer(mut c) => {
                    c.vocab_size = vocabulary.len();
                    BackboneConfig::Transformer(c)
                }
                BackboneConfig::Recurrent(mut c) => {
                    c.vocab_size = vocabulary.len();
                    BackboneConfig::Recurrent(c)
                }
            };
            let mut store = propspan::autograd::ParamStore::new();
            let model = SiModel::new(backbone.clone(), tagger.clone(), &mut store, &mut init).map_err(invalid)?;

            let metrics = train_si(
                &model,
                &mut store,
                &vocabulary,
                &train_data,
                dev_data.as_ref(),
                &train,
                cfg.seed,
                progress(train.epochs),
            )
            .map_err(runtime)?;
            let eval = dev_data.as_ref().unwrap_or(&train_data);
            let predictions = predict_dataset(&model, &store, &vocabulary, eval).map_err(runtime)?;
            let spec = ModelSpec::Si {
                backbone,
                tagger,
                vocabulary,
            };
            fs::create_dir_all(&paths.output).map_err(|e| runtime(format!("cannot create {}: {e}", paths.output.display())))?;
            save_model(&paths.output.join(CHECKPOINT_FILE), &spec, &store).map_err(runtime)?;
            write(&paths.output.join(METRICS_FILE), &metrics_file(&metrics))?;
            write(&paths.output.join(PREDICTIONS_FILE), &format_si_rows(&predictions))
        }
        (Task::Tc, ModelPlan::Tc { mut encoder, mut classifier, train }) => {
            let labels = match &paths.label_set {
                Some(p) => LabelSet::load(p).map_err(invalid)?,
                None => LabelSet::default(),
            };
            let load = |articles: &Path, spans: &Path| -> Result<_, CliError> {
                let articles = load_articles(articles).map_err(invalid)?;
                let spans = load_span_labels(spans, LabelMode::Tc).map_err(invalid)?;
                Ok((articles, spans))
            };
            let (train_articles, train_spans) = load(&paths.train_articles, &paths.train_labels)?;
            let vocabulary = build_vocabulary(&train_articles, 1);
            let train_data = TcDataset::new(train_articles, train_spans, &vocabulary, &labels).map_err(invalid)?;
            let dev_data = match &paths.dev {
                Some((a, l)) => {
                    let (articles, spans) = load(a, l)?;
                    Some(TcDataset::new(articles, spans, &vocabulary, &labels).map_err(invalid)?)
                }
                None => None,
            };
            encoder.vocab_size = vocabulary.len();
            classifier.labels = labels.len();
            let mut store = propspan::autograd::ParamStore::new();
            let model = TcModel::new(encoder.clone(), classifier.clone(), &mut store, &mut init).map_err(invalid)?;
            for s in train_data.samples.iter().chain(dev_data.iter().flat_map(|d| &d.samples)) {
                model.fit_sample(s).map_err(invalid)?;
            }

            let metrics = train_tc(
                &model,
                &mut store,
                &labels,
                &train_data,
                dev_data.as_ref(),
                &train,
                cfg.seed,
                progress(train.epochs),
            )
            .map_err(runtime)?;
            let eval = dev_data.as_ref().unwrap_or(&train_data);
            let probabilities = predict_samples(&model, &store, &eval.samples).map_err(runtime)?;
            let rows = probabilities
                .to_annotations(&labels, classifier.decision, classifier.threshold)
                .map_err(runtime)?;
            let spec = ModelSpec::Tc {
                encoder,
                classifier,
                vocabulary,
                labels,
            };
            fs::create_dir_all(&paths.output).map_err(|e| runtime(format!("cannot create {}: {e}", paths.output.display())))?;
            save_model(&paths.output.join(CHECKPOINT_FILE), &spec, &store).map_err(runtime)?;
            write(&paths.output.join(METRICS_FILE), &metrics_file(&metrics))?;
            write(&paths.output.join(PREDICTIONS_FILE), &format_tc_rows(&rows))?;
            write(&paths.output.join(PROBABILITIES_FILE), &write_probabilities(&probabilities))
        }
        _ => Err(CliError::invalid("task and preset disagree")),
    }
}

pub struct PredictArgs {
    pub checkpoint: PathBuf,
    pub articles: PathBuf,
    pub task: Option<TaskArg>,
    pub spans: Option<PathBuf>,
    pub output: PathBuf,
    pub probabilities: Option<PathBuf>,
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let mut problems = Vec::new();
    if !args.checkpoint.is_file() {
        problems.push(format!("--checkpoint: file {} does not exist", args.checkpoint.display()));
    }
    if !args.articles.is_dir() {
        problems.push(format!("--articles: directory {} does not exist", args.articles.display()));
    }
    if let Some(s) = &args.spans {
        if !s.is_file() {
            problems.push(format!("--spans: file {} does not exist", s.display()));
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let model = load_model(&args.checkpoint).map_err(invalid)?;
    let found = match model {
        LoadedModel::Si { .. } => TaskArg::Si,
        LoadedModel::Tc { .. } => TaskArg::Tc,
    };
    if let Some(expected) = args.task {
        if expected != found {
            problems.push(format!(
                "--task: checkpoint {} holds a {} model, not {}",
                args.checkpoint.display(),
                model.task(),
                if expected == TaskArg::Si { "si" } else { "tc" }
            ));
        }
    }
    match found {
        TaskArg::Si => {
            if args.spans.is_some() {
                problems.push("--spans: only used for tc".into());
            }
            if args.probabilities.is_some() {
                problems.push("--probabilities: only written for tc".into());
            }
        }
        TaskArg::Tc if args.spans.is_none() => problems.push("--spans: required for tc".into()),
        TaskArg::Tc => {}
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let articles = load_articles(&args.articles).map_err(invalid)?;

    match model {
        LoadedModel::Si { model, store, vocabulary } => {
            let mut spans = Vec::new();
            for a in &articles {
                spans.extend(model.predict_article(&store, &vocabulary, a).map_err(runtime)?);
            }
            write(&args.output, &format_si_rows(&spans))
        }
        LoadedModel::Tc {
            model,
            store,
            vocabulary,
            labels,
        } => {
            let spans_path = args.spans.as_deref().unwrap_or(Path::new(""));
            let (spans, _) = load_span_labels_auto(spans_path).map_err(invalid)?;
            let data = TcDataset::new(articles, without_techniques(spans), &vocabulary, &labels).map_err(invalid)?;
            for s in &data.samples {
                model.fit_sample(s).map_err(invalid)?;
            }
            let set = predict_samples(&model, &store, &data.samples).map_err(runtime)?;
            let rows = set
                .to_annotations(&labels, model.config.decision, model.config.threshold)
                .map_err(runtime)?;
            write(&args.output, &format_tc_rows(&rows))?;
            if let Some(p) = &args.probabilities {
                write(p, &write_probabilities(&set))?;
            }
            Ok(())
        }
    }
}

pub fn score(task: TaskArg, gold: &Path, pred: &Path, format: ReportFormat) -> Result<(), CliError> {
    let report = match task {
        TaskArg::Si => {
            let (g, _) = load_span_labels_auto(gold).map_err(invalid)?;
            let (p, _) = load_span_labels_auto(pred).map_err(invalid)?;
            si_score(&p, &g).map_err(invalid)?
        }
        TaskArg::Tc => {
            let g = load_span_labels(gold, LabelMode::Tc).map_err(invalid)?;
            let p = load_span_labels(pred, LabelMode::Tc).map_err(invalid)?;
            tc_micro_f(&p, &g).map_err(invalid)?
        }
    };
    match format {
        ReportFormat::Text => print!("{}", report.to_text()),
        ReportFormat::Rows => print!("{}", report.to_rows()),
    }
    Ok(())
}

pub fn ensemble(files: &[PathBuf], labels: Option<&Path>, decision: DecisionArg, threshold: f64, output: &Path) -> Result<(), CliError> {
    let mut problems = Vec::new();
    if !(0.0..=1.0).contains(&threshold) {
        problems.push(format!("--threshold: {threshold} outside [0, 1]"));
    }
    let labels = match labels.map(LabelSet::load).transpose() {
        Ok(l) => l.unwrap_or_default(),
        Err(e) => {
            problems.push(e.to_string());
            LabelSet::default()
        }
    };
    let mut sets = Vec::with_capacity(files.len());
    for f in files {
        match load_probabilities(f) {
            Ok(s) => sets.push(s),
            Err(e) => problems.push(e.to_string()),
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let joint = average(&sets).map_err(invalid)?;
    let decision = match decision {
        DecisionArg::Multilabel => Decision::Multilabel,
        DecisionArg::Single => Decision::Single,
    };
    let rows = joint.to_annotations(&labels, decision, threshold).map_err(invalid)?;
    write(output, &format_tc_rows(&rows))
}

fn sample_config(task: &str, preset: &str, labels: &str, extra: &str) -> String {
    format!(
        "task = \"{task}\"\npreset = \"{preset}\"\nseed = 13\n\n[paths]\ntrain_articles = \"articles\"\ntrain_labels = \"{labels}\"\n{extra}output = \"runs/{preset}\"\n"
    )
}

pub fn make_synthetic(output: &Path, seed: u64, articles: usize, sentences: usize, classes: usize) -> Result<(), CliError> {
    if output.is_file() {
        return Err(CliError::invalid(format!("--output: {} is a file", output.display())));
    }
    let spec = SyntheticSpec {
        articles,
        sentences_per_article: sentences,
        classes,
        seed,
    };
    let corpus = generate(&spec).map_err(invalid)?;
    for a in &corpus.articles {
        write(&output.join("articles").join(format!("article{}.txt", a.id)), &a.text)?;
    }
    write(&output.join("train.si.tsv"), &format_si_rows(&corpus.si_spans()))?;
    write(&output.join("train.tc.tsv"), &format_tc_rows(&corpus.spans))?;
    write(&output.join("techniques.txt"), &corpus.labels.to_file_contents())?;
    write(&output.join("si.toml"), &sample_config("si", "lasertagger-tf-ls", "train.si.tsv", ""))?;
    write(
        &output.join("tc.toml"),
        &sample_config("tc", "tc-rbert-w", "train.tc.tsv", "label_set = \"techniques.txt\"\n"),
    )?;
    println!(
        "wrote {} articles, {} spans and {} classes to {}",
        corpus.articles.len(),
        corpus.spans.len(),
        corpus.labels.len(),
        output.display()
    );
    Ok(())
}

fn describe(p: &Preset) -> String {
    match p {
        Preset::Si(s) => {
            let backbone = match s.backbone {
                propspan::presets::BackboneKind::Transformer => "encoder",
                propspan::presets::BackboneKind::Recurrent => "bilstm",
            };
            let tf = &s.tagger.teacher_forcing;
            let head = match s.tagger.head {
                HeadKind::Linear => "linear head".to_string(),
                HeadKind::Crf => "CRF head".to_string(),
                HeadKind::LaserTagger => format!(
                    "decoder head, teacher forcing {} to {}, label smoothing {}",
                    tf.start, tf.end, s.tagger.label_smoothing
                ),
            };
            let post = if s.tagger.postprocess { ", fill postprocessing" } else { "" };
            format!("{backbone} + {head}{post}, lr {}", s.train.learning_rate)
        }
        Preset::Tc(t) => format!(
            "{} pooling{}, lr {}",
            match t.pooling {
                propspan::tc::Pooling::Cls => "classifier-token",
                propspan::tc::Pooling::Mean => "classifier-token + mean span",
                propspan::tc::Pooling::Weighted => "classifier-token + weighted span",
            },
            if t.train.finetune.is_some() { " after masked-LM finetuning" } else { "" },
            t.train.learning_rate
        ),
    }
}

pub fn presets(name: Option<&str>) -> Result<(), CliError> {
    match name {
        None => {
            for n in PRESET_NAMES {
                let p = preset(n).ok_or_else(|| runtime(format!("preset {n} missing")))?;
                println!("{n:<18} {}  {}", p.task(), describe(&p));
            }
            Ok(())
        }
        Some(n) => {
            let p = preset(n).ok_or_else(|| {
                CliError::invalid(format!("unknown preset {n:?}; expected one of {}", PRESET_NAMES.join(", ")))
            })?;
            let text = match &p {
                Preset::Si(s) => toml::to_string_pretty(s),
                Preset::Tc(t) => toml::to_string_pretty(t),
            }
            .map_err(runtime)?;
            println!("# {n} ({})\n{text}", p.task());
            Ok(())
        }
    }
}
