//! End-to-end tests driving the compiled `datadiet` binary.

use std::path::Path;
use std::process::{Command, Output};

fn datadiet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_datadiet"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// synth → stats → evaluate → prune → qq, all through the binary.
#[test]
fn full_workflow_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let out = datadiet(
        root,
        &[
            "synth", "--out", "cohort", "--fdg", "4", "--psma", "10", "--sick-rate", "0.8",
            "--seed", "5",
        ],
    );
    assert_exit(&out, 0);
    assert!(root.join("cohort/manifest.json").exists());

    let out = datadiet(
        root,
        &[
            "stats",
            "--manifest",
            "cohort/manifest.json",
            "--csv",
            "stats.csv",
        ],
    );
    assert_exit(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("total samples: 14"), "{text}");
    assert!(text.contains("FDG"), "{text}");
    let csv = std::fs::read_to_string(root.join("stats.csv")).unwrap();
    assert!(csv.starts_with("tracer,count,fraction,sick,healthy,unknown,sick_rate"));
    assert_eq!(csv.lines().count(), 3);

    let out = datadiet(
        root,
        &[
            "evaluate",
            "--manifest",
            "cohort/manifest.json",
            "--out",
            "reports.jsonl",
            "--out-manifest",
            "with_metrics.json",
        ],
    );
    assert_exit(&out, 0);
    let reports = std::fs::read_to_string(root.join("reports.jsonl")).unwrap();
    assert_eq!(reports.lines().count(), 14);
    for line in reports.lines() {
        let parsed: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["sample_id", "dice", "loss", "fpv_ml", "fnv_ml", "threshold", "loss_formula"] {
            assert!(parsed.get(key).is_some(), "missing {key} in {line}");
        }
    }

    let out = datadiet(
        root,
        &[
            "prune",
            "--manifest",
            "with_metrics.json",
            "--percentile",
            "30",
            "--out-dir",
            "diet",
        ],
    );
    assert_exit(&out, 0);
    let ids = std::fs::read_to_string(root.join("diet/excluded_ids.txt")).unwrap();
    assert_eq!(ids.lines().count(), 3); // ceil(0.30 · 10)
    assert!(ids.lines().all(|l| l.starts_with("psma_")));
    assert!(root.join("diet/plan.json").exists());
    assert!(root.join("diet/retained_manifest.json").exists());

    // identical before/after must sit exactly on the identity line
    let out = datadiet(
        root,
        &[
            "qq",
            "--before",
            "reports.jsonl",
            "--after",
            "reports.jsonl",
            "--metric",
            "fpv_ml",
            "--tracer",
            "psma",
            "--out",
            "qq.csv",
            "--svg",
            "qq.svg",
        ],
    );
    assert_exit(&out, 0);
    let qq = std::fs::read_to_string(root.join("qq.csv")).unwrap();
    let mut lines = qq.lines();
    assert_eq!(lines.next(), Some("quantile,log_before,log_after"));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 3);
        assert_eq!(cols[1], cols[2], "identity violated: {line}");
    }
    assert!(std::fs::read_to_string(root.join("qq.svg"))
        .unwrap()
        .starts_with("<svg"));

    // retained manifest is directly evaluable from another directory
    let out = datadiet(
        root,
        &[
            "evaluate",
            "--manifest",
            "diet/retained_manifest.json",
            "--out",
            "reports_after.jsonl",
        ],
    );
    assert_exit(&out, 0);
    assert_eq!(
        std::fs::read_to_string(root.join("reports_after.jsonl"))
            .unwrap()
            .lines()
            .count(),
        11
    );

    // fnv comparison path works the same way
    let out = datadiet(
        root,
        &[
            "qq",
            "--before",
            "reports.jsonl",
            "--after",
            "reports_after.jsonl",
            "--metric",
            "fnv_ml",
            "--tracer",
            "psma",
            "--out",
            "qq_fnv.csv",
        ],
    );
    assert_exit(&out, 0);
    assert_eq!(
        std::fs::read_to_string(root.join("qq_fnv.csv"))
            .unwrap()
            .lines()
            .count(),
        100
    );
}

#[test]
fn evaluate_skips_missing_and_corrupt_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let out = datadiet(
        root,
        &[
            "synth", "--out", "cohort", "--fdg", "0", "--psma", "6", "--sick-rate", "1.0",
            "--seed", "3",
        ],
    );
    assert_exit(&out, 0);

    // break one sample's prediction and delete another's
    let manifest = std::fs::read_to_string(root.join("cohort/manifest.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    let ids: Vec<String> = parsed["samples"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["sample_id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(ids.len(), 6);
    let corrupt = root.join(format!("cohort/{}_pred.nii.gz", ids[0]));
    std::fs::write(&corrupt, b"not a volume at all").unwrap();
    let missing = root.join(format!("cohort/{}_pred.nii.gz", ids[1]));
    std::fs::remove_file(&missing).unwrap();

    let out = datadiet(
        root,
        &[
            "evaluate",
            "--manifest",
            "cohort/manifest.json",
            "--out",
            "reports.jsonl",
        ],
    );
    assert_exit(&out, 2);
    let reports = std::fs::read_to_string(root.join("reports.jsonl")).unwrap();
    assert_eq!(reports.lines().count(), 4, "others must be unaffected");
    let errs = stderr(&out);
    assert!(errs.contains(&ids[0]) && errs.contains(&ids[1]), "{errs}");
    for line in errs.lines() {
        assert!(line.starts_with("WARN\t"), "diagnostic not structured: {line}");
        assert_eq!(line.split('\t').count(), 3, "{line}");
    }
}

#[test]
fn prune_rejects_out_of_range_percentile() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_exit(
        &datadiet(
            root,
            &["synth", "--out", "c", "--fdg", "0", "--psma", "3", "--seed", "1"],
        ),
        0,
    );
    assert_exit(
        &datadiet(
            root,
            &[
                "evaluate", "--manifest", "c/manifest.json", "--out", "r.jsonl",
                "--out-manifest", "m.json",
            ],
        ),
        0,
    );
    let out = datadiet(
        root,
        &["prune", "--manifest", "m.json", "--percentile", "0", "--out-dir", "d"],
    );
    assert_exit(&out, 1);
    assert!(stderr(&out).contains("percentile"), "{}", stderr(&out));

    // pruning without metrics is fatal too, and names the offenders
    let out = datadiet(
        root,
        &[
            "prune", "--manifest", "c/manifest.json", "--percentile", "5", "--out-dir", "d",
        ],
    );
    assert_exit(&out, 1);
    assert!(stderr(&out).contains("lack metrics"), "{}", stderr(&out));
}

#[test]
fn scan_reports_malformed_ids_without_dropping_good_ones() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_exit(
        &datadiet(
            root,
            &["synth", "--out", "data", "--fdg", "2", "--psma", "2", "--seed", "9"],
        ),
        0,
    );
    // a volume with an unparsable id and one with no role suffix
    std::fs::write(root.join("data/petx_cccc_2020-01-01_ct.nii"), b"junk").unwrap();
    std::fs::write(root.join("data/psma_bad.nii"), b"junk").unwrap();

    let out = datadiet(root, &["scan", "--root", "data", "--out", "scanned.json"]);
    assert_exit(&out, 2);
    let errs = stderr(&out);
    assert!(errs.contains("petx_cccc_2020-01-01"), "{errs}");
    assert!(errs.contains("psma_bad"), "{errs}");
    assert!(stdout(&out).contains("scanned 4 samples"), "{}", stdout(&out));

    let manifest = std::fs::read_to_string(root.join("scanned.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(parsed["samples"].as_array().unwrap().len(), 4);
    // is_sick was derived from the labels
    for sample in parsed["samples"].as_array().unwrap() {
        assert!(sample.get("is_sick").is_some());
    }
}

#[test]
fn preprocess_resamples_to_target_spacing() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_exit(
        &datadiet(
            root,
            &[
                "synth", "--out", "c", "--fdg", "1", "--psma", "1", "--seed", "2", "--dims",
                "10,12,8",
            ],
        ),
        0,
    );
    let out = datadiet(
        root,
        &[
            "preprocess",
            "--manifest",
            "c/manifest.json",
            "--out-dir",
            "prep",
            "--target-spacing",
            "4.0,4.0,4.5",
            "--ct-clip",
            "-500,500",
        ],
    );
    assert_exit(&out, 0);
    assert!(root.join("prep/manifest.json").exists());
    let conf = std::fs::read_to_string(root.join("prep/preprocess.conf")).unwrap();
    assert!(conf.contains("target_spacing = 4, 4, 4.5"), "{conf}");
    assert!(conf.contains("ct_clip = -500, 500"), "{conf}");

    let manifest = std::fs::read_to_string(root.join("prep/manifest.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    let first_ct = parsed["samples"][0]["ct_path"].as_str().unwrap();
    let grid = datadiet_core::nifti::load_nifti(root.join("prep").join(first_ct)).unwrap();
    for (got, want) in grid.spacing().into_iter().zip([4.0, 4.0, 4.5]) {
        assert!((got - want).abs() < 1e-6);
    }
    // CT was normalized into [0, 1]
    assert!(grid
        .as_scalar()
        .unwrap()
        .iter()
        .all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn thread_flag_and_env_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_exit(
        &datadiet(
            root,
            &[
                "synth", "--threads", "1", "--out", "c", "--fdg", "1", "--psma", "1", "--seed",
                "4",
            ],
        ),
        0,
    );
    let out = Command::new(env!("CARGO_BIN_EXE_datadiet"))
        .args(["evaluate", "--manifest", "c/manifest.json", "--out", "r.jsonl"])
        .env("DATADIET_THREADS", "1")
        .current_dir(root)
        .output()
        .unwrap();
    assert_exit(&out, 0);
}

#[test]
fn identical_invocations_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for name in ["a", "b"] {
        assert_exit(
            &datadiet(
                root,
                &["synth", "--out", name, "--fdg", "2", "--psma", "3", "--seed", "21"],
            ),
            0,
        );
    }
    let a = std::fs::read_to_string(root.join("a/manifest.json")).unwrap();
    let b = std::fs::read_to_string(root.join("b/manifest.json")).unwrap();
    assert_eq!(a, b);

    for (manifest, out) in [("a/manifest.json", "ra.jsonl"), ("b/manifest.json", "rb.jsonl")] {
        assert_exit(
            &datadiet(root, &["evaluate", "--manifest", manifest, "--out", out]),
            0,
        );
    }
    assert_eq!(
        std::fs::read_to_string(root.join("ra.jsonl")).unwrap(),
        std::fs::read_to_string(root.join("rb.jsonl")).unwrap()
    );
}
