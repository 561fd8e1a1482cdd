use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otopipe::evaluation::PredictionSet;
use otopipe::manifest;
use otopipe::pipeline::DiskFrames;
use otopipe::splitting::load_assignments;
use otopipe::synth::knn_probe;

const SMALL_SYNTH: &str = "\
[synth]
classes = 4
patients_per_class = 3
videos_per_patient = 1
frames_per_video = 12
image_side = 32
seed = 7
";

fn otopipe(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otopipe"))
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn ok(out: &Path, args: &[&str]) {
    let o = otopipe(out, args);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// Writes a small synthetic dataset and ingests, scores and filters it.
fn prepared() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, SMALL_SYNTH).unwrap();
    let c = cfg.to_str().unwrap();
    ok(&out, &["--config", c, "synth", "--runs", "2", "--write-frames"]);
    let root = out.join("synth/frames");
    let table = out.join("synth/diagnosis.csv");
    ok(&out, &["ingest", "--root", root.to_str().unwrap(), "--table", table.to_str().unwrap()]);
    ok(&out, &["--config", c, "score"]);
    ok(&out, &["--config", c, "filter"]);
    (dir, out, cfg)
}

#[test]
fn grouped_flow_passes_the_gate() {
    let (_dir, out, _) = prepared();
    ok(&out, &["split", "--strategy", "grouped", "--seed", "1", "--runs", "3"]);
    ok(&out, &["audit"]);
    let audit = fs::read_to_string(out.join("audit.txt")).unwrap();
    assert_eq!(audit.matches("gate: pass").count(), 3);

    let m = manifest::load(&out.join("filtered.txt")).unwrap();
    let mut rows = Vec::new();
    for a in load_assignments(&out.join("splits.csv")).unwrap() {
        rows.extend(knn_probe(&m, &a, 1, &DiskFrames).unwrap().predictions.rows);
    }
    let pred = out.join("pred.csv");
    PredictionSet::new(rows).save(&pred).unwrap();
    ok(&out, &["eval", "--predictions", pred.to_str().unwrap(), "--splits", out.join("splits.csv").to_str().unwrap()]);
    assert!(fs::read_to_string(out.join("summary.csv")).unwrap().contains("accuracy"));

    ok(&out, &["report"]);
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    for section in ["evaluation", "audit", "pipeline", "leakage inflation"] {
        assert!(report.contains(&format!("==== {section} ====")), "{section}");
    }
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("section,row,column,value\n"));

    let log = fs::read_to_string(out.join("run.log")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 8);
    assert!(lines.iter().all(|l| l.contains("\tconfig_sha256=") && l.contains("\texit=0")));
}

#[test]
fn naive_split_fails_the_gate() {
    let (_dir, out, _) = prepared();
    ok(&out, &["split", "--strategy", "naive", "--seed", "1", "--runs", "2"]);
    let o = otopipe(&out, &["audit", "--skip-duplicates"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("patient overlap"));
    // Overlap may be waived, but a contamination ceiling still catches it.
    ok(&out, &["audit", "--skip-duplicates", "--allow-patient-overlap"]);
    let o = otopipe(&out, &["audit", "--skip-duplicates", "--allow-patient-overlap", "--max-contamination", "0.05"]);
    assert_eq!(code(&o), 3);
    assert!(fs::read_to_string(out.join("run.log")).unwrap().contains("exit=3"));
}

#[test]
fn anova_matches_the_reference_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&out, &["anova", "--summaries", data("reference_summaries.csv").to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("anova.csv")).unwrap();
    let field = |source: &str, col: usize| -> f64 {
        let line = csv.lines().find(|l| l.starts_with(&format!("{source},"))).unwrap();
        line.split(',').nth(col).unwrap().parse().unwrap()
    };
    let close = |got: f64, want: f64, tol: f64| assert!((got - want).abs() <= tol * want.abs(), "{got} vs {want}");
    close(field("Sample", 1), 0.241029, 1e-4);
    close(field("Within", 1), 0.037438, 1e-4);
    close(field("Sample", 4), 193.1412, 1e-4);
    close(field("Columns", 4), 0.592026, 1e-4);
    close(field("Interaction", 4), 0.517820, 1e-4);
    close(field("Sample", 6), 4.170877, 1e-5);
    close(field("Columns", 6), 3.31583, 1e-5);
    assert!(fs::read_to_string(out.join("anova.txt")).unwrap().contains("replicates per cell: 6"));
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&otopipe(&out, &["anova"])), 1);
    assert_eq!(code(&otopipe(&out, &["split", "--strategy", "sideways"])), 1);
    assert_eq!(code(&otopipe(&out, &["audit"])), 2);
    assert_eq!(code(&otopipe(&out, &["report"])), 2);
}

#[test]
fn help_matches_snapshot() {
    let got = otopipe::cli::help_snapshot();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots/cli_help.txt");
    if std::env::var_os("UPDATE_SNAPSHOTS").is_some() || !path.exists() {
        fs::write(&path, &got).unwrap();
    }
    assert_eq!(got, fs::read_to_string(&path).unwrap(), "rerun with UPDATE_SNAPSHOTS=1 after changing flags");
}
