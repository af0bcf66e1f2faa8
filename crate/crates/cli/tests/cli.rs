use std::path::Path;
use std::process::Command;

use lrp_cli::app::{run, RunOutput};
use lrp_cli::output::RunManifest;

fn lrp(out: &Path, args: &[&str]) -> RunOutput {
    let mut argv = vec!["lrp".to_string(), "--out".into(), out.display().to_string()];
    argv.extend(args.iter().map(|a| a.to_string()));
    run(argv)
}

#[test]
fn renorm_check_reports_a_quarter() {
    let tmp = tempfile::tempdir().unwrap();
    let r = lrp(
        tmp.path(),
        &["--d", "1", "--beta", "1", "--block-k", "2", "renorm-check", "--w", "[2]"],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("block edge marginal 0.25"), "{}", r.stdout);
    assert!(r.stdout.contains(": PASS"));
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("renorm_check.json")).unwrap()).unwrap();
    assert!((doc["marginal"].as_f64().unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn coupling_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let r = lrp(tmp.path(), &["--replicas", "50", "coupling-check", "--beta-low", "0.5", "--beta-high", "2"]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    assert!(r.stdout.contains("0 edge violations, 0 distance violations"));
}

#[test]
fn decreasing_sizes_exit_with_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let r = lrp(&out, &["--sizes", "[64,32]", "theta"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("sizes"), "{}", r.stderr);
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("bad.conf");
    std::fs::write(&file, "d = 1\ncolour = 3\n").unwrap();
    let r = lrp(&tmp.path().join("run"), &["--config", file.to_str().unwrap(), "sample"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("colour"), "{}", r.stderr);
}

#[test]
fn failed_runs_remove_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    std::fs::create_dir(&out).unwrap();
    // A directory in the way of the second output makes the run fail after
    // theta.json has been written.
    std::fs::create_dir(out.join("growth.json")).unwrap();
    let r = lrp(&out, &["--sizes", "[16,32,64,128]", "--replicas", "20", "--set", "ball_replicas=4", "--set", "ball_box=256", "growth"]);
    assert_eq!(r.code, 2, "{}", r.stdout);
    assert!(!out.join("theta.json").exists());
    assert!(!out.join("theta.csv").exists());
    assert!(!out.join("manifest.json").exists());
    assert!(out.join("growth.json").is_dir());
}

fn hashes(out: &Path) -> Vec<(String, String)> {
    RunManifest::read(out)
        .unwrap()
        .outputs
        .into_iter()
        .map(|e| (e.path, e.sha256))
        .collect()
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    for task in ["theta", "sample", "distances"] {
        let mut seen = Vec::new();
        for threads in ["1", "2", "3"] {
            let out = tmp.path().join(format!("{task}-{threads}"));
            let r = lrp(
                &out,
                &["--threads", threads, "--seed", "17", "--sizes", "[16,32,64,128]", "--replicas", "24", task],
            );
            assert_eq!(r.code, 0, "{}", r.stderr);
            seen.push(hashes(&out));
        }
        assert!(!seen[0].is_empty());
        assert!(seen.iter().all(|h| *h == seen[0]), "{task}: {seen:?}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let r = lrp(out, &["--seed", "5", "--sizes", "[16,32,64,128]", "--replicas", "24", "boxcount"]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    assert_eq!(hashes(&a), hashes(&b));
    let c = tmp.path().join("c");
    lrp(&c, &["--seed", "6", "--sizes", "[16,32,64,128]", "--replicas", "24", "sample"]);
    let d = tmp.path().join("d");
    lrp(&d, &["--seed", "5", "--sizes", "[16,32,64,128]", "--replicas", "24", "sample"]);
    assert_ne!(hashes(&c), hashes(&d));
}

#[test]
fn manifest_records_config_and_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let r = lrp(tmp.path(), &["--seed", "9", "--sizes", "[16,32,64,128]", "sample"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let m = RunManifest::read(tmp.path()).unwrap();
    assert_eq!(m.subcommand, "sample");
    assert_eq!(m.seed, 9);
    assert_eq!(m.config_hash.len(), 64);
    assert!(m.outputs.iter().all(|e| e.path != "manifest.json"));
    for e in &m.outputs {
        let (sha, bytes) = lrp_cli::output::file_sha256(&tmp.path().join(&e.path)).unwrap();
        assert_eq!((sha, bytes), (e.sha256.clone(), e.bytes));
    }
}

#[test]
fn report_on_mean_field_run_shows_unit_exponent() {
    let tmp = tempfile::tempdir().unwrap();
    let r = lrp(
        tmp.path(),
        &[
            "--beta", "0", "--sizes", "[16,32,64,128]", "--replicas", "10",
            "--set", "ball_replicas=10", "--set", "ball_box=512",
            "growth",
        ],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report = lrp(tmp.path(), &["report"]);
    assert_eq!(report.code, 0, "{}", report.stderr);
    assert!(report.stdout.contains("theta_hat          1.000"), "{}", report.stdout);
    assert!(report.stdout.contains("volume slope       1.000  vs d/theta_hat 1.000"), "{}", report.stdout);
}

#[test]
fn report_without_outputs_fails() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(lrp(tmp.path(), &["report"]).code, 2);
}

#[test]
fn kernel_dump_matches_inverse_square() {
    let tmp = tempfile::tempdir().unwrap();
    let r = lrp(tmp.path(), &["--d", "1", "--beta", "1", "kernel", "dump", "--radius", "8"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = std::fs::read_to_string(tmp.path().join("kernel.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("w_canonical,J,p"));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let k: f64 = f[0].parse().unwrap();
        let p: f64 = f[2].parse().unwrap();
        if k >= 2.0 {
            assert!((p - 1.0 / (k * k)).abs() < 1e-12, "{line}");
        }
    }
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_lrp");
    let ok = Command::new(bin)
        .args(["--out", tmp.path().to_str().unwrap(), "renorm-check"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = Command::new(bin).args(["no-such-command"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let bad_value = Command::new(bin)
        .args(["--out", tmp.path().join("x").to_str().unwrap(), "--beta", "-1", "sample"])
        .output()
        .unwrap();
    assert_eq!(bad_value.status.code(), Some(2));
}
