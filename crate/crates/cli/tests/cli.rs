use std::path::Path;

use gnncca_cli::config::KEYS;
use gnncca_cli::{run, CliError, RunConfig, EXIT_DATA, EXIT_USAGE};
use sha2::{Digest, Sha256};

fn ok(args: &[&str]) -> String {
    let mut argv = vec!["gnncca"];
    argv.extend_from_slice(args);
    match run(argv) {
        Ok(out) => out,
        Err(e) => panic!("{args:?} failed: {e}"),
    }
}

fn fail(args: &[&str]) -> CliError {
    let mut argv = vec!["gnncca"];
    argv.extend_from_slice(args);
    run(argv).expect_err("command should fail")
}

fn digest(dir: &Path) -> String {
    let mut h = Sha256::new();
    for name in ["detections.csv", "descriptors.bin", "homographies.txt"] {
        h.update(std::fs::read(dir.join(name)).unwrap());
    }
    hex::encode(h.finalize())
}

fn synth(dir: &Path, seed: &str, frames: &str) {
    let out = dir.to_str().unwrap();
    ok(&["synth", "--out", out, "--seed", seed, "--frames", frames, "--descriptor-dim", "16"]);
}

#[test]
fn defaults_follow_the_published_training_setup() {
    let cfg = RunConfig::default();
    assert_eq!((cfg.epochs, cfg.batch_size, cfg.lr, cfg.steps), (20, 64, 5e-3, 4));
    assert_eq!(cfg.warmup_epochs, 5);
    assert_eq!(cfg.momentum, 0.0);
    assert!(cfg.prune && cfg.split);
}

#[test]
fn config_text_round_trips_every_key() {
    let mut cfg = RunConfig::default();
    cfg.set("frame_range", "3:9").unwrap();
    cfg.set("grad_clip", "none").unwrap();
    cfg.set("method", "geo_app").unwrap();
    let text = cfg.to_text();
    assert_eq!(text.lines().count(), KEYS.len());
    let mut back = RunConfig::default();
    back.apply_text(&text, "mem").unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn config_errors_name_file_line_and_key() {
    let mut cfg = RunConfig::default();
    let err = cfg.apply_text("lr = 0.1\n\n# note\nlearning_rate = 3\n", "run.cfg").unwrap_err().to_string();
    assert!(err.contains("run.cfg:4") && err.contains("learning_rate"), "{err}");
    let err = cfg.apply_text("momentum = 1.5\n", "run.cfg").unwrap_err().to_string();
    assert!(err.contains("run.cfg:1") && err.contains("momentum"), "{err}");
    let err = cfg.apply_text("steps\n", "run.cfg").unwrap_err().to_string();
    assert!(err.contains("key = value"), "{err}");
    assert!(cfg.set("frame_range", "9:3").is_err());
    assert!(cfg.set("message_source", "both").unwrap_err().contains("message_source"));
    assert_eq!(cfg.lr, 0.1);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, "frames = 7\ndescriptor_dim = 8\nseed = 2\n").unwrap();
    let data = dir.path().join("d");
    let out = ok(&["synth", "--config", cfg_path.to_str().unwrap(), "--frames", "3", "--out", data.to_str().unwrap()]);
    assert!(out.contains("over 3 frames"), "{out}");
    let text = std::fs::read_to_string(data.join("descriptors.bin").with_file_name("detections.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.split(',').next().unwrap().parse::<u32>().unwrap() < 3));

    std::fs::write(&cfg_path, "bogus = 1\n").unwrap();
    let err = fail(&["synth", "--config", cfg_path.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert_eq!(err.exit_code(), EXIT_DATA);
    assert!(err.to_string().contains("run.cfg:1") && err.to_string().contains("bogus"));
}

#[test]
fn exit_codes() {
    assert_eq!(fail(&["frobnicate"]).exit_code(), EXIT_USAGE);
    assert_eq!(fail(&["train", "--out", "x"]).exit_code(), EXIT_USAGE);
    let err = fail(&["train", "--data", "/nonexistent", "--out", "x", "--lr", "fast"]);
    assert_eq!(err.exit_code(), EXIT_DATA);
    assert!(err.to_string().contains("--lr"), "{err}");
    let err = fail(&["eval", "--pred", "/nonexistent/p.csv", "--truth", "/nonexistent/t.csv"]);
    assert_eq!(err.exit_code(), EXIT_DATA);
    assert!(err.to_string().contains("/nonexistent/p.csv"));
    assert_eq!(fail(&[]).exit_code(), EXIT_USAGE);
    assert!(ok(&["--help"]).contains("train"));
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    synth(&a, "7", "5");
    synth(&b, "7", "5");
    synth(&c, "8", "5");
    assert_eq!(digest(&a), digest(&b));
    assert_ne!(digest(&a), digest(&c));
}

#[test]
fn descriptor_dim_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1", "3");
    let data = dir.path().to_str().unwrap();
    let out = dir.path().join("b.csv");
    let err = fail(&["baseline", "--data", data, "--out", out.to_str().unwrap(), "--descriptor-dim", "32"]);
    assert_eq!(err.exit_code(), EXIT_DATA);
    assert!(err.to_string().contains("configuration error") && err.to_string().contains("descriptor_dim"), "{err}");
}

#[test]
fn truncated_store_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1", "3");
    let store = dir.path().join("descriptors.bin");
    let mut bytes = std::fs::read(&store).unwrap();
    bytes.truncate(bytes.len() - 5);
    std::fs::write(&store, bytes).unwrap();
    let out = dir.path().join("b.csv");
    let err = fail(&["baseline", "--data", dir.path().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(err.exit_code(), EXIT_DATA);
    assert!(err.to_string().contains("descriptors.bin") && err.to_string().contains("bytes"), "{err}");
}

#[test]
fn eval_of_identical_files_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "3", "6");
    let data = dir.path().to_str().unwrap();
    let pred = dir.path().join("p.csv");
    let report = dir.path().join("r.txt");
    ok(&["baseline", "--data", data, "--method", "cos_th", "--out", pred.to_str().unwrap()]);
    let p = pred.to_str().unwrap();
    ok(&["eval", "--pred", p, "--truth", p, "--report", report.to_str().unwrap()]);
    let text = std::fs::read_to_string(&report).unwrap();
    for line in text.lines().skip(1) {
        assert!(line.ends_with("=1"), "{line}");
    }
}

#[test]
fn eval_rejects_mismatched_detections() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.csv");
    let t = dir.path().join("t.csv");
    std::fs::write(&p, "frame,camera,det_id,cluster_id\n0,0,0,0\n0,1,0,0\n").unwrap();
    std::fs::write(&t, "frame,camera,det_id,cluster_id\n0,0,0,0\n0,1,1,0\n").unwrap();
    let err = fail(&["eval", "--pred", p.to_str().unwrap(), "--truth", t.to_str().unwrap()]);
    assert_eq!(err.exit_code(), EXIT_DATA);
    assert!(err.to_string().contains("det 0") && err.to_string().contains("p.csv"), "{err}");
}

#[test]
fn train_infer_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "4", "20");
    let data = dir.path().to_str().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let log = dir.path().join("loss.csv");
    let pred = dir.path().join("p.csv");
    let out = ok(&[
        "train", "--data", data, "--out", ckpt.to_str().unwrap(), "--loss-log", log.to_str().unwrap(),
        "--epochs", "3", "--warmup", "1", "--batch", "4", "--steps", "2", "--frame-range", "0:15",
    ]);
    assert!(out.contains("checkpoint written"));
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(log_text.lines().count(), 4);
    assert!(log_text.starts_with("epoch,lr,mean_loss\n"));
    ok(&["infer", "--data", data, "--checkpoint", ckpt.to_str().unwrap(), "--out", pred.to_str().unwrap(), "--frame-range", "15:20"]);
    let rows = std::fs::read_to_string(&pred).unwrap();
    assert!(rows.lines().skip(1).all(|l| {
        let f: u32 = l.split(',').next().unwrap().parse().unwrap();
        (15..20).contains(&f)
    }));
    let report = ok(&["eval", "--pred", pred.to_str().unwrap(), "--data", data, "--frame-range", "15:20"]);
    assert!(report.contains("(5 frames)"), "{report}");

    // A model trained on other descriptors is refused.
    let other = dir.path().join("other");
    ok(&["synth", "--out", other.to_str().unwrap(), "--frames", "2", "--descriptor-dim", "8"]);
    let err = fail(&["infer", "--data", other.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap(), "--out", pred.to_str().unwrap()]);
    assert!(err.to_string().contains("m.ckpt"), "{err}");
}

#[test]
fn train_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "5", "12");
    let data = dir.path().to_str().unwrap();
    let mut outputs = Vec::new();
    for (k, threads) in ["1", "3"].iter().enumerate() {
        let ckpt = dir.path().join(format!("m{k}.ckpt"));
        let log = dir.path().join(format!("l{k}.csv"));
        ok(&[
            "train", "--data", data, "--out", ckpt.to_str().unwrap(), "--loss-log", log.to_str().unwrap(),
            "--epochs", "2", "--warmup", "1", "--batch", "5", "--seed", "11", "--set", &format!("threads={threads}"),
        ]);
        outputs.push((std::fs::read(&ckpt).unwrap(), std::fs::read(&log).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sweep_and_baselines_run() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "6", "8");
    let data = dir.path().to_str().unwrap();
    let report = dir.path().join("sweep.csv");
    let out = ok(&["sweep", "--data", data, "--method", "geo", "--report", report.to_str().unwrap()]);
    assert!(out.contains("best threshold"));
    assert_eq!(std::fs::read_to_string(&report).unwrap().lines().count(), 12);
    for method in ["l2_th", "cos_th", "top1", "geo", "geo_app"] {
        let out = dir.path().join(format!("{method}.csv"));
        ok(&["baseline", "--data", data, "--method", method, "--out", out.to_str().unwrap(), "--post"]);
    }
    assert_eq!(fail(&["sweep", "--data", data, "--method", "top1"]).exit_code(), EXIT_DATA);
    assert_eq!(fail(&["sweep", "--data", data, "--method", "nearest"]).exit_code(), EXIT_DATA);
}

#[test]
fn thread_cap_from_environment() {
    std::env::set_var(gnncca_cli::THREADS_ENV, "2");
    assert_eq!(gnncca_cli::effective_threads(0).unwrap(), 2);
    assert_eq!(gnncca_cli::effective_threads(8).unwrap(), 2);
    assert_eq!(gnncca_cli::effective_threads(1).unwrap(), 1);
    std::env::set_var(gnncca_cli::THREADS_ENV, "many");
    assert!(gnncca_cli::effective_threads(0).unwrap_err().to_string().contains(gnncca_cli::THREADS_ENV));
    std::env::remove_var(gnncca_cli::THREADS_ENV);
    assert_eq!(gnncca_cli::effective_threads(0).unwrap(), 0);
}
