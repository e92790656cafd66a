use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pointmix::io::{read_entry, read_manifest, write_manifest};
use pointmix::pipeline::read_run_record;
use pointmix::{DatasetManifest, Domain, ManifestEntry, SplitTag};

fn pointmix(dir: &Path, args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pointmix"));
    cmd.args(args).current_dir(dir).env_remove("POINTMIX_SEED");
    if let Some(s) = env_seed {
        cmd.env("POINTMIX_SEED", s);
    }
    cmd.output().unwrap()
}

fn error_report(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("no JSON error line");
    serde_json::from_str(line).unwrap()
}

fn fake_manifest(dir: &Path, n: usize) {
    let entries = (0..n)
        .map(|i| ManifestEntry {
            id: format!("f{i:05}"),
            cloud: dir.join(format!("clouds/{i:05}.bin")),
            labels: dir.join(format!("labels/{i:05}.json")),
            domain: Domain::Target,
            split: SplitTag::None,
        })
        .collect();
    write_manifest(&dir.join("manifest.json"), &DatasetManifest::new(entries)).unwrap();
}

#[test]
fn malformed_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "seed = [").unwrap();
    let out = pointmix(dir.path(), &["--config", "bad.toml", "synth", "-o", "x"], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_report(&out)["error"], "config");
}

#[test]
fn unknown_config_key_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "seed = 3\n[cutmix]\nhalf_extent = 4.0\n").unwrap();
    let out = pointmix(dir.path(), &["--config", "c.toml", "synth", "-o", "x"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_report(&out)["message"].as_str().unwrap().contains("half_extent"));
}

#[test]
fn out_of_range_flag_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fake_manifest(dir.path(), 10);
    let out = pointmix(dir.path(), &["split", "--input", "manifest.json", "--fraction", "1.5", "-o", "s"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = pointmix(dir.path(), &["split", "--input", "nope.json", "-o", "s"], None);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_report(&out)["error"], "io");
}

#[test]
fn missing_frame_files_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    fake_manifest(dir.path(), 3);
    let out = pointmix(dir.path(), &["gtdb", "--input", "manifest.json", "-o", "db"], None);
    assert_eq!(out.status.code(), Some(1));
    let report = error_report(&out);
    assert_eq!(report["error"], "missing_files");
    assert!(report["message"].as_str().unwrap().contains("00002.json"));
}

#[test]
fn one_percent_split_of_the_full_target_set() {
    let dir = tempfile::tempdir().unwrap();
    fake_manifest(dir.path(), 28130);
    let out = pointmix(dir.path(), &["split", "--input", "manifest.json", "--fraction", "0.01", "-o", "s"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let record = read_run_record(&dir.path().join("s/run_record.json")).unwrap();
    assert_eq!(record.counts["labeled"], 282);
    assert_eq!(record.counts["unlabeled"], 28130 - 282);
    let m = read_manifest(&dir.path().join("s/manifest.json")).unwrap();
    assert_eq!(m.with_split(SplitTag::Labeled).count(), 282);
    assert_eq!(m.entries[100].split, SplitTag::Labeled);
}

#[test]
fn seed_precedence_flag_over_env_over_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "seed = 11\n[synth]\nscenes = 1\nobjects_per_scene = 2\n").unwrap();
    let seed_of = |args: &[&str], env: Option<&str>, out: &str| {
        let mut all = vec!["--config", "c.toml", "synth", "-o", out];
        all.extend_from_slice(args);
        let o = pointmix(dir.path(), &all, env);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        read_run_record(&dir.path().join(out).join("run_record.json")).unwrap().seed
    };
    assert_eq!(seed_of(&[], None, "a"), 11);
    assert_eq!(seed_of(&[], Some("22"), "b"), 22);
    assert_eq!(seed_of(&["--seed", "33"], Some("22"), "c"), 33);

    let bad = pointmix(dir.path(), &["--config", "c.toml", "synth", "-o", "d"], Some("abc"));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn stage1_without_mixing_or_augmentation_reproduces_the_targets() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let o = pointmix(dir.path(), args, None);
        assert!(o.status.success(), "{:?}: {}", args, String::from_utf8_lossy(&o.stderr));
    };
    run(&["synth", "--scenes", "4", "--objects", "5", "-o", "synth"]);
    run(&["split", "--input", "synth/target/manifest.json", "--fraction", "0.5", "-o", "split"]);
    run(&[
        "stage1", "--source", "synth/source/manifest.json", "--target", "split/manifest.json",
        "--apply-probability", "0", "--no-augment", "-o", "s1",
    ]);
    let targets = read_manifest(&dir.path().join("split/manifest.json")).unwrap();
    let labeled: Vec<&ManifestEntry> = targets.with_split(SplitTag::Labeled).collect();
    let out = read_manifest(&dir.path().join("s1/manifest.json")).unwrap();
    assert_eq!(out.len(), labeled.len());
    for (o, t) in out.entries.iter().zip(labeled) {
        assert_eq!(fs::read(&o.cloud).unwrap(), fs::read(&t.cloud).unwrap());
        let (a, b) = (read_entry(o).unwrap(), read_entry(t).unwrap());
        assert_eq!(a.labels, b.labels);
    }
    let record = read_run_record(&dir.path().join("s1/run_record.json")).unwrap();
    assert_eq!(record.counts["mixed"], 0);
}

#[test]
fn eval_prints_the_report_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let ok = |args: &[&str]| {
        let o = pointmix(dir.path(), args, None);
        assert!(o.status.success(), "{:?}: {}", args, String::from_utf8_lossy(&o.stderr));
        o
    };
    ok(&["synth", "--scenes", "3", "--objects", "6", "-o", "synth"]);
    ok(&["noisy-preds", "--input", "synth/target/manifest.json", "-o", "preds"]);
    let o = ok(&[
        "eval", "--gt", "synth/target/manifest.json", "--predictions", "preds",
        "--source-only-ap", "42.6", "--oracle-ap", "78.4", "-o", "ev",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let mean = v["report"]["mean_ap"].as_f64().unwrap();
    let gap = v["closed_gap"].as_f64().unwrap();
    assert!((gap - (100.0 * mean - 42.6) / (78.4 - 42.6) * 100.0).abs() < 1e-9);
    assert!(dir.path().join("ev/eval_report.json").is_file());
}
