use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use quake_cli::config::RunConfig;
use quake_cli::pipeline;
use quake_cli::provenance::{file_digest, provenance_path};
use quake_core::model::load_checkpoint;

const SMALL: &str = "
seed = 3
n_rows = 6
n_cols = 6
mag_threshold = 5.0
synth_days = 500
synth_background_rate = 0.02
synth_pair_rate = 0.003
embed_channels = 2
hidden_channels = 3
window_days = 5
epochs = 1
batch_days = 4
samples_per_epoch = 16
patience = 0
train_fraction = 0.5
val_fraction = 0.2
test_fraction = 0.3
thresholds = 0.01,0.1,0.5,0.9
";

fn quake(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quake"))
        .args(args)
        .arg("--work-dir")
        .arg(dir)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn small_config(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::parse(SMALL).unwrap();
    cfg.work_dir = dir.to_path_buf();
    cfg
}

#[test]
fn help_and_version_exit_zero() {
    for flag in ["--help", "--version"] {
        let out = Command::new(env!("CARGO_BIN_EXE_quake")).arg(flag).output().unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    let out = Command::new(env!("CARGO_BIN_EXE_quake")).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = quake(&["train", "--set", "learning_rat=0.1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));

    let out = quake(&["train"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `ingest` first"));

    let csv = dir.path().join("empty.csv");
    fs::write(&csv, "time,lat,lon,mag\n").unwrap();
    let out = quake(&["ingest", "--catalog", csv.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty catalog"));

    let conf = dir.path().join("dup.conf");
    fs::write(&conf, "seed = 1\nseed = 2\n").unwrap();
    let out = quake(&["synth", "--config", conf.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_summary_counts_every_event() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("time,lat,lon,mag\n");
    for i in 0..100 {
        let mag = if i < 7 { 6.1 } else if i < 20 { 5.2 } else { 3.0 };
        csv.push_str(&format!("2010-01-{:02}T12:00:00Z,35.2,135.3,{mag}\n", 1 + i % 28));
    }
    let path = dir.path().join("in.csv");
    fs::write(&path, csv).unwrap();
    let text = ok(quake(&["ingest", "--catalog", path.to_str().unwrap()], dir.path()));
    assert!(text.contains("events = 100"), "{text}");
    assert!(text.contains("m_ge_5 = 20"));
    assert!(text.contains("m_ge_6 = 7"));
    let summary = fs::read_to_string(dir.path().join(pipeline::SUMMARY)).unwrap();
    assert_eq!(summary, text);
}

#[test]
fn pipeline_outputs_and_provenance_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    pipeline::cmd_synth(&cfg).unwrap();
    pipeline::cmd_ingest(&cfg).unwrap();
    assert!(pipeline::cmd_features(&cfg).unwrap() > 0);
    pipeline::cmd_train(&cfg).unwrap();
    let eval = pipeline::cmd_evaluate(&cfg).unwrap();
    assert_eq!(eval.model.rows.len(), cfg.thresholds.len());
    let sweep = fs::read_to_string(dir.path().join(pipeline::SWEEP_PRIOR)).unwrap();
    assert_eq!(sweep.lines().count(), 1 + cfg.thresholds.len());
    let metrics = fs::read_to_string(dir.path().join(pipeline::METRICS)).unwrap();
    assert!(metrics.starts_with("method,roc_auc,pr_auc"));
    assert_eq!(metrics.lines().count(), 3);

    for cmd in ["synth", "ingest", "features", "train", "evaluate"] {
        assert!(provenance_path(dir.path(), cmd).exists(), "{cmd}");
    }
    let record = provenance_path(dir.path(), "train");
    let ckpt = dir.path().join(pipeline::CHECKPOINT);
    let first = file_digest(&ckpt).unwrap();
    assert!(fs::read_to_string(&record).unwrap().contains(&first));

    // the record is itself a config that repeats the run
    ok(quake(&["--threads", "2", "train", "--config", record.to_str().unwrap()], dir.path()));
    assert_eq!(file_digest(&ckpt).unwrap(), first);
}

#[test]
fn prior_baseline_ranks_training_cells() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.synth.pair_rate = 0.0;
    cfg.synth.background_rate = 0.05;
    pipeline::cmd_synth(&cfg).unwrap();
    cfg.labels.mag_threshold = 3.0;
    // uneven rates: a third of the events moved into one corner cell
    let text = fs::read_to_string(cfg.catalog_path()).unwrap();
    let mut shifted = String::new();
    for (i, line) in text.lines().enumerate() {
        if i > 0 && i % 3 == 0 {
            let f: Vec<&str> = line.split(',').collect();
            shifted.push_str(&format!("{},35.02,135.02,{},\n", f[0], f[3]));
        } else {
            shifted.push_str(line);
            shifted.push('\n');
        }
    }
    fs::write(cfg.catalog_path(), shifted).unwrap();
    pipeline::cmd_ingest(&cfg).unwrap();
    pipeline::cmd_train(&cfg).unwrap();
    cfg.set("eval_split", "train").unwrap();
    let eval = pipeline::cmd_evaluate(&cfg).unwrap();
    assert!(eval.prior.roc_auc > 0.5, "{}", eval.prior.roc_auc);
}

#[test]
fn variants_give_distinct_loadable_checkpoints() {
    let root = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for variant in ["cnn", "cnn_lstm", "cnn_lstm"] {
        let dir = root.path().join(format!("{variant}-{}", digests.len()));
        let mut cfg = small_config(&dir);
        cfg.set("variant", variant).unwrap();
        pipeline::cmd_synth(&cfg).unwrap();
        pipeline::cmd_ingest(&cfg).unwrap();
        pipeline::cmd_train(&cfg).unwrap();
        let ckpt = dir.join(pipeline::CHECKPOINT);
        let (net, _) = load_checkpoint(&ckpt).unwrap();
        assert_eq!(net.config().variant.as_str(), variant);
        digests.push(file_digest(&ckpt).unwrap());
    }
    assert_ne!(digests[0], digests[1]);
    assert_eq!(digests[1], digests[2]);
}

#[test]
fn evaluate_without_history_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    pipeline::cmd_synth(&cfg).unwrap();
    pipeline::cmd_ingest(&cfg).unwrap();
    pipeline::cmd_train(&cfg).unwrap();
    cfg.split = [0.9, 0.0, 0.1];
    let err = pipeline::cmd_evaluate(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
}
