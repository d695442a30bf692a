mod common;

use std::path::Path;
use std::process::Command;

use common::*;
use unida::metrics::h_score;
use unida::runner::{emit_tables, parse_table_csv, run_experiment, ExperimentConfig, TableFormat};

fn config(dir: &Path, task: &BlobTask, files: &TaskFiles, method: &str, extra: &str) -> ExperimentConfig {
    let text = config_text(task, files, method, extra);
    ExperimentConfig::parse(&text, dir, method).unwrap()
}

fn small_task() -> BlobTask {
    BlobTask { per_class: 20, ..BlobTask::visda_like() }
}

#[test]
fn fixed_model_is_seed_independent() {
    let dir = tempfile::tempdir().unwrap();
    let task = small_task();
    let files = write_blob_task(&task, dir.path());
    let report = run_experiment(&config(dir.path(), &task, &files, "distill_fixed", "")).unwrap();
    assert_eq!(report.runs.len(), 3);
    assert_eq!(report.std("h_score"), Some(0.0));
    assert!(report.tau.unwrap() > 0.0);
    assert!(report.calibration.is_some());
}

#[test]
fn aggregate_recomposes_from_components() {
    let dir = tempfile::tempdir().unwrap();
    let task = small_task();
    let files = write_blob_task(&task, dir.path());
    let report = run_experiment(&config(dir.path(), &task, &files, "distill", "iterations=300\n")).unwrap();
    for run in &report.runs {
        let r = &run.report;
        assert!((r.h_score - h_score(r.acc_in, r.acc_out.unwrap())).abs() < 1e-12);
    }
    let mean: f64 = report.runs.iter().map(|r| r.report.h_score).sum::<f64>() / 3.0;
    assert!((report.mean("h_score").unwrap() - mean).abs() < 1e-12);
}

#[test]
fn closed_split_reports_accuracy_as_h_score() {
    let dir = tempfile::tempdir().unwrap();
    let task = BlobTask {
        total_classes: 6,
        n_shared: 6,
        n_source_private: 0,
        per_class: 20,
        ..BlobTask::visda_like()
    };
    let files = write_blob_task(&task, dir.path());
    let report = run_experiment(&config(dir.path(), &task, &files, "zero_shot", "")).unwrap();
    assert!(report.split.starts_with("closed"));
    for run in &report.runs {
        let r = &run.report;
        assert_eq!(r.acc_out, None);
        assert_eq!(r.nmi, None);
        assert_eq!(r.h_score, r.acc_in);
        assert_eq!(r.h3_score, r.acc_in);
        assert_eq!(r.ucr, r.acc_in);
    }
}

#[test]
fn table_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let task = small_task();
    let files = write_blob_task(&task, dir.path());
    let report = run_experiment(&config(dir.path(), &task, &files, "zero_shot", "seeds=0\n")).unwrap();
    let csv = emit_tables(&[report], TableFormat::Csv);
    let rows = parse_table_csv(&csv).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(unida::runner::emit_rows(&rows, TableFormat::Csv), csv);
}

#[test]
fn cli_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let task = small_task();
    let files = write_blob_task(&task, dir.path());
    let cfg_path = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg_path,
        config_text(&task, &files, "distill", "name=exp\niterations=200\nseeds=0,1\n"),
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_unida"))
        .args(["run", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .args(["--format", "markdown"])
        .status()
        .unwrap();
    assert!(status.success());
    for name in [
        "report.csv",
        "report.md",
        "calibration_exp.txt",
        "calibration_exp_bins.csv",
        "curve_exp_seed0.csv",
        "curve_exp_seed1.csv",
    ] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("run,method,split,"), "{csv}");

    let train_out = dir.path().join("train");
    let status = Command::new(env!("CARGO_BIN_EXE_unida"))
        .args(["train", "--seeds", "5", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&train_out)
        .status()
        .unwrap();
    assert!(status.success());
    let head = train_out.join("head_exp_seed5.udfs");
    assert!(head.is_file());
    let status = Command::new(env!("CARGO_BIN_EXE_unida"))
        .args(["evaluate", "--config"])
        .arg(&cfg_path)
        .arg("--head")
        .arg(&head)
        .arg("--out")
        .arg(&train_out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(train_out.join("report.csv").is_file());
}

#[test]
fn cli_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.cfg");
    std::fs::write(&cfg_path, "method=distill\n").unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_unida"))
        .args(["run", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("error:"));
}
