use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use affmt_cli::experiment::{run_experiment, ExperimentResults, ExperimentSpec, Family, RunOptions};
use affmt_cli::{commands, run_cli, schema};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_affmt"))
}

fn corpus(dir: &Path) -> PathBuf {
    let root = dir.join("corpus");
    let r = root.to_str().unwrap();
    assert_eq!(run_cli(["affmt", "synth-data", "--out", r, "--subjects", "6", "--frames", "40", "--resolution", "32", "--seed", "3"]), 0);
    assert_eq!(run_cli(["affmt", "split", "--corpus", r, "--seed", "3"]), 0);
    root
}

const TINY_MT: &str = "[base]\nsteps = 3\nsequence_length = 8\nattention_length = 4\nsequences = 2\nfeature_units = 16\ngru_units = 8\n";

fn write_spec(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("spec.toml");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn run_writes_sorted_table_with_medians() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let spec = write_spec(
        dir.path(),
        &format!("name = \"t11\"\nfamily = \"mt_table11\"\nseeds = [2, 1, 0]\ncorpus = {:?}\n{TINY_MT}", c.to_str().unwrap()),
    );
    let out = dir.path().join("out");
    let results = commands::run(&spec, &out, false).unwrap();
    assert_eq!(results.rows.len(), 7 * 4);
    let keys: Vec<&str> = results.rows.iter().map(|r| r.grid_key.as_str()).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    for chunk in results.rows.chunks(4) {
        assert!(chunk[..3].iter().all(|r| !r.aggregate && r.seed.is_some()));
        assert!(chunk[3].aggregate && chunk[3].seed.is_none());
        let mut v: Vec<f64> = chunk[..3].iter().map(|r| r.metrics.ccc_v.unwrap()).collect();
        v.sort_by(f64::total_cmp);
        assert_eq!(chunk[3].metrics.ccc_v, Some(v[1]));
    }
    let json = std::fs::read_to_string(out.join("results.json")).unwrap();
    let parsed: ExperimentResults = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed, results);
    let text = std::fs::read_to_string(out.join("results.txt")).unwrap();
    assert!(text.lines().any(|l| l.contains("0.5") && l.contains("median")));
}

#[test]
fn every_family_matches_its_schema() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    for (family, base) in [
        (Family::GanTable9, "[base]\nsteps = 2\nbatch = 4\n"),
        (Family::MtTable10, TINY_MT),
        (Family::MtTable11, TINY_MT),
    ] {
        let spec: ExperimentSpec = toml::from_str(&format!(
            "name = \"s\"\nfamily = \"{}\"\nseeds = [0]\ncorpus = {:?}\n{base}",
            family.name(),
            c.to_str().unwrap()
        ))
        .unwrap();
        let results = run_experiment(&spec, &RunOptions::default()).unwrap();
        assert_eq!(results.rows.len(), 2 * family.default_grid().len());
        let value = serde_json::to_value(&results).unwrap();
        let errors = schema::validate(&schema::schema(family), &value);
        assert!(errors.is_empty(), "{family:?}: {errors:?}");

        // a renamed column is caught
        let mut drifted = value.clone();
        drifted["columns"][0] = "renamed".into();
        assert!(!schema::validate(&schema::schema(family), &drifted).is_empty());
        let mut extra = value;
        extra["rows"][0]["metrics"]["new_metric"] = 1.0.into();
        assert!(!schema::validate(&schema::schema(family), &extra).is_empty());
    }
}

#[test]
fn gan_rows_follow_head_choice() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let spec: ExperimentSpec = toml::from_str(&format!(
        "name = \"g\"\nfamily = \"gan_table9\"\nseeds = [0]\ncorpus = {:?}\n[base]\nsteps = 2\nbatch = 4\n",
        c.to_str().unwrap()
    ))
    .unwrap();
    let results = run_experiment(&spec, &RunOptions::default()).unwrap();
    let keys: Vec<&str> = results.rows.iter().filter(|r| r.aggregate).map(|r| r.grid_key.as_str()).collect();
    assert_eq!(keys, ["heads=au", "heads=joint,va_loss=ccc", "heads=joint,va_loss=mse", "heads=va,va_loss=ccc", "heads=va,va_loss=mse"]);
    for r in &results.rows {
        let heads = r.params["heads"].as_str().unwrap();
        assert_eq!(r.metrics.ccc_v.is_some(), heads != "au");
        assert_eq!(r.metrics.f1_weighted.is_some(), heads != "va");
    }
}

#[test]
fn spec_validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let c = c.to_str().unwrap();
    for body in [
        format!("name = \"x\"\nfamily = \"mt_table11\"\nseeds = []\ncorpus = {c:?}\n"),
        format!("name = \"x\"\nfamily = \"mt_table11\"\nseeds = [0]\ncorpus = {c:?}\ngrid = []\n"),
        format!("name = \"x\"\nfamily = \"mt_table11\"\nseeds = [0]\ncorpus = {c:?}\ngrid = [{{gamma = 1}}]\n"),
        format!("name = \"x\"\nfamily = \"gan_table9\"\nseeds = [0]\ncorpus = {c:?}\ngrid = [{{alpha = 1}}]\n"),
        format!("name = \"x\"\nfamily = \"mt_table12\"\nseeds = [0]\ncorpus = {c:?}\n"),
    ] {
        let spec = write_spec(dir.path(), &body);
        let code = run_cli(["affmt", "run", "--config", spec.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(code, 2, "{body}");
    }
    let empty = ExperimentSpec {
        name: "x".into(),
        family: Family::MtTable11,
        grid: None,
        seeds: vec![],
        corpus: c.into(),
        base: Default::default(),
    };
    assert!(empty.validate().unwrap_err().to_string().contains("seed"));
}

#[test]
fn missing_corpus_names_synth_data() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        &format!("name = \"x\"\nfamily = \"mt_table11\"\nseeds = [0]\ncorpus = {:?}\n", dir.path().join("absent").to_str().unwrap()),
    );
    let out = bin().args(["run", "--config", spec.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("synth-data"), "{err}");
}

#[test]
fn missing_split_names_split_command() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("c");
    assert_eq!(run_cli(["affmt", "synth-data", "--out", root.to_str().unwrap(), "--subjects", "3", "--frames", "10", "--resolution", "32"]), 0);
    let spec = write_spec(dir.path(), &format!("name = \"x\"\nfamily = \"mt_table11\"\nseeds = [0]\ncorpus = {:?}\n", root.to_str().unwrap()));
    let out = bin().args(["run", "--config", spec.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("affmt split"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["split"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["synth-data", "--out", "/tmp/x", "--resolution", "50"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().arg("--version").output().unwrap().status.code(), Some(0));
}

#[test]
fn consolidate_rewrites_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let csv = c.join("consolidated/s000_v0.csv");
    let before = std::fs::read(&csv).unwrap();
    std::fs::remove_file(&csv).unwrap();
    assert_eq!(run_cli(["affmt", "consolidate", "--corpus", c.to_str().unwrap()]), 0);
    assert_eq!(std::fs::read(&csv).unwrap(), before);
    assert_eq!(run_cli(["affmt", "consolidate", "--corpus", dir.path().join("nope").to_str().unwrap()]), 2);
}

fn gan_checkpoint(dir: &Path) -> (PathBuf, PathBuf) {
    let c = corpus(dir);
    let spec = write_spec(
        dir,
        &format!(
            "name = \"g\"\nfamily = \"gan_table9\"\nseeds = [0]\ncorpus = {:?}\ngrid = [{{heads = \"joint\"}}]\n[base]\nsteps = 2\nbatch = 4\n",
            c.to_str().unwrap()
        ),
    );
    let out = dir.join("run");
    assert_eq!(run_cli(["affmt", "run", "--checkpoints", "--config", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    (c, out.join("checkpoints/heads_joint/seed0"))
}

#[test]
fn sample_writes_grid_and_tiles() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = gan_checkpoint(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let code = run_cli(["affmt", "sample", "--checkpoint", ckpt.to_str().unwrap(), "-n", "64", "--seed", "9", "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0);
    }
    let grid = image::open(a.join("grid.png")).unwrap();
    assert_eq!((grid.width(), grid.height()), (256, 256));
    let tile = image::open(a.join("sample_063.png")).unwrap();
    assert_eq!((tile.width(), tile.height()), (32, 32));
    let names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 65);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap());
    }
    assert_eq!(commands::grid_dims(10), (3, 4));
}

#[test]
fn sample_refuses_multitask_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = affmt_train::MtTrainConfig { input_size: 32, attention_length: 4, sequence_length: 8, ..Default::default() };
    let ckpt = dir.path().join("mt");
    affmt_train::MtTrainer::new(cfg, 0).unwrap().save(&ckpt).unwrap();
    let out = bin().args(["sample", "--checkpoint", ckpt.to_str().unwrap(), "--out", dir.path().join("s").to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("GAN checkpoint"));
}

#[test]
fn evaluate_matches_training_report() {
    let dir = tempfile::tempdir().unwrap();
    let (c, ckpt) = gan_checkpoint(dir.path());
    let report_path = dir.path().join("report.json");
    let code = run_cli([
        "affmt", "evaluate", "--checkpoint", ckpt.to_str().unwrap(), "--corpus", c.to_str().unwrap(),
        "--split", "test", "--out", report_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let report: affmt_core::metrics::MetricReport = serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    let results: ExperimentResults = serde_json::from_slice(&std::fs::read(dir.path().join("run/results.json")).unwrap()).unwrap();
    assert_eq!(report.ccc_v, results.rows[0].metrics.ccc_v);
    assert_eq!(report.total_accuracy, results.rows[0].metrics.total_accuracy);
    assert_eq!(run_cli(["affmt", "evaluate", "--checkpoint", ckpt.to_str().unwrap(), "--corpus", c.to_str().unwrap(), "--split", "dev"]), 2);
}

#[test]
fn non_finite_loss_exits_3_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let spec = write_spec(
        dir.path(),
        &format!(
            "name = \"nan\"\nfamily = \"mt_table11\"\nseeds = [0]\ncorpus = {:?}\ngrid = [{{alpha = 1.0, beta = 0.0}}]\n{TINY_MT}lr = 1e300\nva_loss = \"mse\"\n",
            c.to_str().unwrap()
        ),
    );
    let out = dir.path().join("o");
    let code = run_cli(["affmt", "run", "--config", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3);
    let diag = std::fs::read_dir(out.join("diagnostics")).unwrap().next().unwrap().unwrap().path();
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(diag).unwrap()).unwrap();
    assert_eq!(v["loss"], "multitask");
    assert!(v["step"].as_u64().unwrap() >= 1);
}

#[test]
fn serve_annotation_health_and_missing_store() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["serve-annotation", "--store", dir.path().join("none").to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let c = corpus(dir.path());
    let mut child = bin()
        .args(["serve-annotation", "--store", c.to_str().unwrap(), "--addr", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().rsplit("http://").next().unwrap().to_string();
    let get = |path: &str| {
        let mut s = TcpStream::connect(&addr).unwrap();
        write!(s, "GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
        let mut body = String::new();
        s.read_to_string(&mut body).unwrap();
        body
    };
    let health = get("/health");
    let videos = get("/videos");
    child.kill().unwrap();
    let _ = child.wait();
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    assert!(health.contains(&format!("\"version\":\"{}\"", affmt_annotation::VERSION)));
    assert!(videos.contains("\"video_id\":\"s000_v0\""));
}
