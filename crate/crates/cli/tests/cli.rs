use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn propspan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_propspan"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PROPSPAN_SEED")
        .env_remove("PROPSPAN_OUTPUT")
        .output()
        .expect("failed to spawn propspan")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn synthetic() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&propspan(&["make-synthetic", "--output", "."], dir.path()));
    dir
}

/// A small, fast run configuration in `dir`.
fn write_config(dir: &Path, name: &str, task: &str, preset: &str, labels: &str, output: &str) -> PathBuf {
    let extra = if task == "tc" { "label_set = \"techniques.txt\"\n" } else { "" };
    let text = format!(
        "task = \"{task}\"\npreset = \"{preset}\"\nseed = 3\n\n[paths]\ntrain_articles = \"articles\"\ntrain_labels = \"{labels}\"\n{extra}output = \"{output}\"\n\n[train]\nepochs = 2\n\n[encoder]\nhidden = 16\nheads = 2\nfeedforward = 32\nlayers = 1\n"
    );
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn synthetic_corpus_is_deterministic() {
    let a = synthetic();
    let b = synthetic();
    for f in ["train.si.tsv", "train.tc.tsv", "techniques.txt", "articles/article1.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let tc = fs::read_to_string(a.path().join("train.tc.tsv")).unwrap();
    assert_eq!(tc.lines().count(), 40);
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = synthetic();
    for (task, preset, labels) in [("si", "lasertagger-tf-ls", "train.si.tsv"), ("tc", "tc-rbert-w-ft", "train.tc.tsv")] {
        let cfg1 = write_config(dir.path(), "a.toml", task, preset, labels, "run1");
        let cfg2 = write_config(dir.path(), "b.toml", task, preset, labels, "run2");
        ok(&propspan(&["train", "--config", cfg1.to_str().unwrap()], dir.path()));
        ok(&propspan(&["train", "--config", cfg2.to_str().unwrap()], dir.path()));
        let mut files = vec!["metrics.tsv", "predictions.tsv", "model.ckpt"];
        if task == "tc" {
            files.push("probabilities.tsv");
        }
        for f in files {
            let one = fs::read(dir.path().join("run1").join(f)).unwrap();
            let two = fs::read(dir.path().join("run2").join(f)).unwrap();
            assert_eq!(one, two, "{task} {f}");
        }
        let metrics = fs::read_to_string(dir.path().join("run1/metrics.tsv")).unwrap();
        assert_eq!(metrics.lines().next(), Some("epoch\tloss\tprecision\trecall\tf1"));
        assert_eq!(metrics.lines().count(), 3);
        fs::remove_dir_all(dir.path().join("run1")).unwrap();
        fs::remove_dir_all(dir.path().join("run2")).unwrap();
    }
}

#[test]
fn seed_comes_from_the_environment_when_set() {
    let dir = synthetic();
    let cfg = write_config(dir.path(), "a.toml", "si", "crf", "train.si.tsv", "run");
    let run = |seed: &str, out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_propspan"))
            .args(["train", "--config", cfg.to_str().unwrap()])
            .current_dir(dir.path())
            .env("PROPSPAN_SEED", seed)
            .env("PROPSPAN_OUTPUT", out)
            .output()
            .unwrap();
        ok(&status);
        fs::read(dir.path().join(out).join("model.ckpt")).unwrap()
    };
    assert_ne!(run("1", "x"), run("2", "y"));
}

#[test]
fn invalid_config_lists_every_problem_and_writes_nothing() {
    let dir = synthetic();
    fs::write(
        dir.path().join("bad.toml"),
        "task = \"si\"\npreset = \"tc-cls\"\nseed = 1\n[paths]\ntrain_articles = \"missing\"\ntrain_labels = \"train.si.tsv\"\noutput = \"run\"\n[train]\nepochs = 0\n[encoder]\nheads = 5\n",
    )
    .unwrap();
    let out = propspan(&["train", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["tc-cls is a tc preset", "train_articles", "epochs", "heads"] {
        assert!(err.contains(needle), "{needle} missing from {err}");
    }
    assert!(!dir.path().join("run").exists());
}

#[test]
fn bad_arguments_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(propspan(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(propspan(&["presets", "bert-large"], dir.path()).status.code(), Some(1));
    assert_eq!(propspan(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn predict_checks_the_task_and_is_idempotent() {
    let dir = synthetic();
    let cfg = write_config(dir.path(), "si.toml", "si", "linear", "train.si.tsv", "run");
    ok(&propspan(&["train", "--config", cfg.to_str().unwrap()], dir.path()));
    let ckpt = "run/model.ckpt";
    let mismatch = propspan(&["predict", "--checkpoint", ckpt, "--articles", "articles", "--task", "tc", "--output", "p.tsv"], dir.path());
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(!dir.path().join("p.tsv").exists());

    ok(&propspan(&["predict", "--checkpoint", ckpt, "--articles", "articles", "--output", "p1.tsv"], dir.path()));
    ok(&propspan(&["predict", "--checkpoint", ckpt, "--articles", "articles", "--output", "p2.tsv"], dir.path()));
    assert_eq!(fs::read(dir.path().join("p1.tsv")).unwrap(), fs::read(dir.path().join("p2.tsv")).unwrap());

    fs::create_dir(dir.path().join("empty")).unwrap();
    ok(&propspan(&["predict", "--checkpoint", ckpt, "--articles", "empty", "--output", "none.tsv"], dir.path()));
    assert_eq!(fs::read_to_string(dir.path().join("none.tsv")).unwrap(), "");
}

#[test]
fn tc_prediction_emits_one_row_per_span_row() {
    let dir = synthetic();
    let cfg = write_config(dir.path(), "tc.toml", "tc", "tc-rbert", "train.tc.tsv", "run");
    ok(&propspan(&["train", "--config", cfg.to_str().unwrap()], dir.path()));
    ok(&propspan(
        &[
            "predict", "--checkpoint", "run/model.ckpt", "--articles", "articles", "--spans", "train.si.tsv", "--output",
            "tc.tsv", "--probabilities", "p.tsv",
        ],
        dir.path(),
    ));
    let rows = fs::read_to_string(dir.path().join("tc.tsv")).unwrap();
    assert_eq!(rows.lines().count(), 40);
    assert!(rows.lines().all(|l| l.split('\t').count() == 4));
    let probs = fs::read_to_string(dir.path().join("p.tsv")).unwrap();
    assert!(probs.lines().all(|l| l.split('\t').count() == 3 + 3));

    let single = propspan(&["ensemble", "p.tsv", "--labels", "techniques.txt", "--output", "e.tsv"], dir.path());
    ok(&single);
    assert_eq!(fs::read_to_string(dir.path().join("e.tsv")).unwrap(), rows);
}

#[test]
fn score_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("gold.si"), "1\t0\t10\n").unwrap();
    fs::write(p.join("half.si"), "1\t0\t5\n").unwrap();
    fs::write(p.join("gold.tc"), "1\tDoubt\t0\t10\n2\tSlogans\t3\t9\n").unwrap();

    let rows = ok(&propspan(&["score", "--task", "si", "--gold", "gold.si", "--pred", "gold.si", "--format", "rows"], p));
    assert!(rows.contains("f1\t1\n"), "{rows}");
    let rows = ok(&propspan(&["score", "--task", "tc", "--gold", "gold.tc", "--pred", "gold.tc", "--format", "rows"], p));
    assert!(rows.starts_with("precision\t1\nrecall\t1\nf1\t1\n"), "{rows}");
    let rows = ok(&propspan(&["score", "--task", "si", "--gold", "gold.si", "--pred", "half.si", "--format", "rows"], p));
    let f: f64 = rows
        .lines()
        .find_map(|l| l.strip_prefix("f1\t"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((f - 2.0 / 3.0).abs() < 1e-12, "{rows}");
    let text = ok(&propspan(&["score", "--task", "si", "--gold", "gold.si", "--pred", "half.si"], p));
    assert!(text.contains("overall"));
}

#[test]
fn ensemble_tie_goes_to_the_lower_class() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("labels.txt"), "A\nB\n").unwrap();
    fs::write(p.join("one.tsv"), "1\t0\t4\t0.4\t0.8\n").unwrap();
    fs::write(p.join("two.tsv"), "1\t0\t4\t0.8\t0.4\n").unwrap();
    for decision in ["single", "multilabel"] {
        for (first, second, out) in [("one.tsv", "two.tsv", "x.tsv"), ("two.tsv", "one.tsv", "y.tsv")] {
            ok(&propspan(
                &["ensemble", first, second, "--labels", "labels.txt", "--decision", decision, "--output", out],
                p,
            ));
        }
        let x = fs::read_to_string(p.join("x.tsv")).unwrap();
        assert_eq!(x, "1\tA\t0\t4\n");
        assert_eq!(fs::read_to_string(p.join("y.tsv")).unwrap(), x);
    }
    fs::write(p.join("three.tsv"), "1\t0\t5\t0.4\t0.8\n").unwrap();
    let misaligned = propspan(&["ensemble", "one.tsv", "three.tsv", "--labels", "labels.txt", "--output", "z.tsv"], p);
    assert_eq!(misaligned.status.code(), Some(1));
}
