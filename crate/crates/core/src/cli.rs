//! Command-line front end. One binary, one subcommand per workflow step,
//! all sharing config parsing, seeding and the run log.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 leakage gate failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{audit_split, compute_fingerprints, gate, AuditOptions, GatePolicy};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_all, summarize_runs, PredictionSet};
use crate::manifest::{self, ingest_tree, DatasetManifest, FrameRecord, FrameStatus, IngestOptions, Severity};
use crate::pipeline::{crop_frames, filter_frames, score_frames, trim_manifest, DiskFrames, PipelineConfig};
use crate::splitting::{load_assignments, run_series, save_assignments, SplitSpec, SplitStrategy};
use crate::stats::{anova_from_summaries, load_raw_design, load_summary_design};
use crate::synth::{default_specs, generate, inflation_experiment, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_GATE: i32 = 3;

/// Name of the append-only provenance log inside `--out`.
pub const RUN_LOG: &str = "run.log";

// File names inside --out.
const MANIFEST: &str = "manifest.txt";
const SCORED: &str = "scored.txt";
const FILTERED: &str = "filtered.txt";
const SPLITS: &str = "splits.csv";

#[derive(Debug, Parser)]
#[command(name = "otopipe", version, about = "Frame-dataset pipeline, leakage audit and evaluation statistics")]
pub struct Cli {
    /// Manifest to read (or, for ingest, to write). Defaults to the newest
    /// of filtered.txt, scored.txt and manifest.txt in --out.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    /// TOML file with [pipeline], [split], [audit], [gate] and [synth] tables.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed for every random choice; overrides seeds in --config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a manifest from a frame tree and a diagnosis table.
    Ingest(IngestArgs),
    /// Trim video ends and compute blur and entropy scores.
    Score,
    /// Apply quality thresholds and the circular crop.
    Filter(FilterArgs),
    /// Assign frames to train and test for every run.
    Split(SplitArgs),
    /// Check splits for leakage; exits 3 when the gate fails.
    Audit(AuditArgs),
    /// Compute metrics from a prediction file.
    Eval(EvalArgs),
    /// Two-factor ANOVA with replication.
    Anova(AnovaArgs),
    /// Run the synthetic leakage-inflation experiment.
    Synth(SynthArgs),
    /// Merge evaluation, audit, ANOVA and experiment outputs in --out.
    Report,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Root of the YYYY-MM/patient/video/frame tree.
    #[arg(long, value_name = "DIR")]
    pub root: PathBuf,
    /// CSV with patient_id, video_id and label columns.
    #[arg(long, value_name = "CSV")]
    pub table: PathBuf,
    /// CSV with video_id, dir and period columns for videos stored elsewhere.
    #[arg(long, value_name = "CSV")]
    pub layout: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Skip the circular crop even if the config enables it.
    #[arg(long)]
    pub no_crop: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// naive | grouped
    #[arg(long)]
    pub strategy: Option<SplitStrategy>,
    /// Share of frames (naive) or patients (grouped) held out.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Number of runs.
    #[arg(long)]
    pub runs: Option<u32>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Split file; defaults to splits.csv in --out.
    #[arg(long, value_name = "CSV")]
    pub splits: Option<PathBuf>,
    /// Largest frame-index gap that counts as adjacent.
    #[arg(long)]
    pub window: Option<u32>,
    /// Largest fingerprint hamming distance that counts as a duplicate.
    #[arg(long)]
    pub dup_threshold: Option<u32>,
    /// Do not read frames for the duplicate search.
    #[arg(long)]
    pub skip_duplicates: bool,
    /// Let patient overlap pass the gate.
    #[arg(long)]
    pub allow_patient_overlap: bool,
    /// Fail when a run's contamination rate exceeds this value.
    #[arg(long)]
    pub max_contamination: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV with frame_id,run,true,pred,s0,s1,s2,s3.
    #[arg(long, value_name = "CSV")]
    pub predictions: PathBuf,
    /// Check that predictions cover exactly the test side of these splits.
    #[arg(long, value_name = "CSV")]
    pub splits: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["summaries", "raw"])))]
pub struct AnovaArgs {
    /// CSV of cell summaries: row_level,col_level,count,mean,variance.
    #[arg(long, value_name = "CSV")]
    pub summaries: Option<PathBuf>,
    /// CSV of observations: row_level,col_level,value.
    #[arg(long, value_name = "CSV")]
    pub raw: Option<PathBuf>,
    /// Significance level for the critical values.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Ignore the [synth] table of --config and use the built-in defaults.
    #[arg(long)]
    pub default: bool,
    /// Runs per split strategy.
    #[arg(long, default_value_t = 11)]
    pub runs: u32,
    /// Neighbours in the probe classifier.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Override frames per video (1 removes adjacency leakage).
    #[arg(long)]
    pub frames_per_video: Option<usize>,
    /// Also write the generated frames, diagnosis table and manifest.
    #[arg(long)]
    pub write_frames: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub adjacency_window: u32,
    pub dup_threshold: u32,
}

impl Default for AuditConfig {
    fn default() -> Self {
        let d = AuditOptions::default();
        Self {
            adjacency_window: d.adjacency_window,
            dup_threshold: d.dup_threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub forbid_patient_overlap: bool,
    pub max_contamination: Option<f64>,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            forbid_patient_overlap: true,
            max_contamination: None,
        }
    }
}

/// Contents of the `--config` file. Every table is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub pipeline: PipelineConfig,
    pub split: SplitSpec,
    pub audit: AuditConfig,
    pub gate: GateConfig,
    pub synth: SynthConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the effective configuration, as lowercase hex.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

enum Outcome {
    Ok,
    GateFailed,
}

struct Ctx<'a> {
    cli: &'a Cli,
    config: FileConfig,
}

impl Ctx<'_> {
    fn say(&self, text: &str) {
        if !self.cli.quiet {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cli.out.join(name)
    }

    fn write(&self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.out(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn input_manifest(&self) -> Result<PathBuf> {
        if let Some(p) = &self.cli.manifest {
            return Ok(p.clone());
        }
        [FILTERED, SCORED, MANIFEST]
            .iter()
            .map(|n| self.out(n))
            .find(|p| p.is_file())
            .ok_or_else(|| {
                Error::invalid(format!(
                    "no manifest given and none found in {}; run ingest or pass --manifest",
                    self.cli.out.display()
                ))
            })
    }

    fn load_manifest(&self) -> Result<DatasetManifest> {
        let path = self.input_manifest()?;
        let m = manifest::load(&path)?;
        let errors: Vec<String> = m
            .validate()
            .into_iter()
            .filter(|v| v.severity == Severity::Error)
            .map(|v| v.to_string())
            .collect();
        if !errors.is_empty() {
            return Err(Error::data(format!("{}: {}", path.display(), errors.join("; "))));
        }
        Ok(m)
    }

    fn save_manifest(&self, m: &DatasetManifest, default_name: &str) -> Result<PathBuf> {
        let path = match (&self.cli.manifest, &self.cli.command) {
            (Some(p), Command::Ingest(_)) => p.clone(),
            _ => self.out(default_name),
        };
        manifest::save(m, &path)?;
        Ok(path)
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut config = match cli.config.as_deref().map(FileConfig::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_DATA;
        }
    };
    if let Some(seed) = cli.seed {
        config.split.seed = seed;
        config.synth.seed = seed;
    }
    let digest = config.digest();
    let seed = config.split.seed;
    let ctx = Ctx { cli: &cli, config };
    let code = match dispatch(&ctx) {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::GateFailed) => EXIT_GATE,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    };
    let line = format!(
        "{}\tconfig_sha256={digest}\tseed={seed}\texit={code}\n",
        args.iter().map(|a| a.to_string_lossy()).collect::<Vec<_>>().join(" ")
    );
    append_log(&cli.out, &line);
    code
}

fn append_log(out: &Path, line: &str) {
    use std::io::Write;
    if fs::create_dir_all(out).is_err() {
        return;
    }
    if let Ok(mut f) = fs::OpenOptions::new().create(true).append(true).open(out.join(RUN_LOG)) {
        let _ = f.write_all(line.as_bytes());
    }
}

fn dispatch(ctx: &Ctx) -> Result<Outcome> {
    match &ctx.cli.command {
        Command::Ingest(a) => cmd_ingest(ctx, a),
        Command::Score => cmd_score(ctx),
        Command::Filter(a) => cmd_filter(ctx, a),
        Command::Split(a) => cmd_split(ctx, a),
        Command::Audit(a) => cmd_audit(ctx, a),
        Command::Eval(a) => cmd_eval(ctx, a),
        Command::Anova(a) => cmd_anova(ctx, a),
        Command::Synth(a) => cmd_synth(ctx, a),
        Command::Report => cmd_report(ctx),
    }
    .map(|o| o.unwrap_or(Outcome::Ok))
}

fn cmd_ingest(ctx: &Ctx, a: &IngestArgs) -> Result<Option<Outcome>> {
    let opts = IngestOptions {
        layout_override: a.layout.clone(),
    };
    let (m, report) = ingest_tree(&a.root, &a.table, &opts)?;
    for v in m.validate() {
        match v.severity {
            Severity::Error => return Err(Error::data(v.to_string())),
            Severity::Warning => eprintln!("warning: {v}"),
        }
    }
    let path = ctx.save_manifest(&m, MANIFEST)?;
    ctx.say(&format!(
        "{} videos, {} frames -> {}\n{}",
        m.videos().len(),
        m.frames().len(),
        path.display(),
        report.render()
    ));
    Ok(None)
}

fn cmd_score(ctx: &Ctx) -> Result<Option<Outcome>> {
    let raw = ctx.load_manifest()?;
    let cfg = ctx.config.pipeline;
    cfg.validate()?;
    let reset: Vec<FrameRecord> = raw
        .frames()
        .iter()
        .map(|f| FrameRecord {
            status: FrameStatus::Included,
            laplacian_variance: None,
            shannon_entropy: None,
            ..f.clone()
        })
        .collect();
    let m = trim_manifest(&raw.with_frames(reset), &cfg)?;
    let m = score_frames(&m, &DiskFrames);
    let path = ctx.save_manifest(&m, SCORED)?;
    let report = crate::pipeline::PipelineReport::from_manifest(&m);
    ctx.say(&format!("{}scored manifest -> {}", report.render_text(), path.display()));
    Ok(None)
}

fn cmd_filter(ctx: &Ctx, a: &FilterArgs) -> Result<Option<Outcome>> {
    let scored = ctx.load_manifest()?;
    let cfg = ctx.config.pipeline;
    // Earlier quality decisions are recomputed so re-runs are identical.
    let reset: Vec<FrameRecord> = scored
        .frames()
        .iter()
        .map(|f| match f.status {
            FrameStatus::LowQuality => FrameRecord {
                status: FrameStatus::Included,
                ..f.clone()
            },
            _ => f.clone(),
        })
        .collect();
    let (m, _) = filter_frames(&scored.with_frames(reset), &cfg)?;
    let m = if cfg.crop_enabled && !a.no_crop {
        crop_frames(&m, &cfg, &DiskFrames, &ctx.out("frames"))?
    } else {
        m
    };
    let report = crate::pipeline::PipelineReport::from_manifest(&m);
    ctx.write("pipeline.txt", &report.render_text())?;
    ctx.write("pipeline.csv", &report.render_csv())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let path = ctx.save_manifest(&m, FILTERED)?;
    ctx.say(&format!("{}filtered manifest -> {}", report.render_text(), path.display()));
    Ok(None)
}

fn cmd_split(ctx: &Ctx, a: &SplitArgs) -> Result<Option<Outcome>> {
    let m = ctx.load_manifest()?;
    let mut spec = ctx.config.split;
    if let Some(s) = a.strategy {
        spec.strategy = s;
    }
    if let Some(f) = a.test_fraction {
        spec.test_fraction = f;
    }
    if let Some(r) = a.runs {
        spec.run_count = r;
    }
    let series = run_series(&m, &spec)?;
    let path = ctx.out(SPLITS);
    save_assignments(&series, &path)?;
    let mut s = format!(
        "{} runs, strategy {}, seed {} -> {}\n",
        series.len(),
        spec.strategy,
        spec.seed,
        path.display()
    );
    for a in &series {
        let _ = writeln!(s, "run {}: {} train, {} test", a.run_index, a.train.len(), a.test.len());
    }
    ctx.say(&s);
    Ok(None)
}

fn cmd_audit(ctx: &Ctx, a: &AuditArgs) -> Result<Option<Outcome>> {
    let m = ctx.load_manifest()?;
    let splits = a.splits.clone().unwrap_or_else(|| ctx.out(SPLITS));
    let series = load_assignments(&splits)?;
    let opts = AuditOptions {
        adjacency_window: a.window.unwrap_or(ctx.config.audit.adjacency_window),
        dup_threshold: a.dup_threshold.unwrap_or(ctx.config.audit.dup_threshold),
        ..Default::default()
    };
    opts.validate()?;
    let policy = GatePolicy {
        forbid_patient_overlap: ctx.config.gate.forbid_patient_overlap && !a.allow_patient_overlap,
        max_contamination: a.max_contamination.or(ctx.config.gate.max_contamination),
    };
    let fps = if a.skip_duplicates {
        None
    } else {
        Some(compute_fingerprints(&m, &DiskFrames)?)
    };
    let mut text = String::new();
    let mut csv = String::new();
    let mut failures = Vec::new();
    for asg in &series {
        let report = audit_split(&m, asg, &opts, fps.as_ref())?;
        let outcome = gate(&report, &policy);
        let _ = writeln!(text, "== run {} ==", asg.run_index);
        text.push_str(&report.render_text());
        let _ = writeln!(text, "gate: {}", if outcome.passed { "pass" } else { "FAIL" });
        for r in &outcome.reasons {
            let _ = writeln!(text, "  {r}");
            failures.push(format!("run {}: {r}", asg.run_index));
        }
        for (i, line) in report.render_csv().lines().enumerate() {
            if i == 0 {
                if csv.is_empty() {
                    let _ = writeln!(csv, "run,{line}");
                }
            } else {
                let _ = writeln!(csv, "{},{line}", asg.run_index);
            }
        }
    }
    ctx.write("audit.txt", &text)?;
    ctx.write("audit.csv", &csv)?;
    ctx.say(&text);
    if failures.is_empty() {
        Ok(None)
    } else {
        for f in &failures {
            eprintln!("gate: {f}");
        }
        Ok(Some(Outcome::GateFailed))
    }
}

fn cmd_eval(ctx: &Ctx, a: &EvalArgs) -> Result<Option<Outcome>> {
    let pred = PredictionSet::load(&a.predictions)?;
    for w in pred.validate()? {
        eprintln!("warning: {w}");
    }
    if let Some(splits) = &a.splits {
        pred.check_against(&load_assignments(splits)?)?;
    }
    let reports = evaluate_all(&pred)?;
    let summary = summarize_runs(&reports)?;
    let mut text = String::new();
    let mut csv = String::from("run,metric,value\n");
    for r in &reports {
        text.push_str(&r.render_text());
        text.push('\n');
        for (k, v) in r.values() {
            let v = v.map_or_else(String::new, |v| format!("{v:?}"));
            let _ = writeln!(csv, "{},{k},{v}", r.run_index);
        }
    }
    let _ = writeln!(text, "summary over {} runs", reports.len());
    text.push_str(&summary.render_text());
    ctx.write("metrics.txt", &text)?;
    ctx.write("metrics.csv", &csv)?;
    ctx.write("summary.csv", &summary.render_csv())?;
    ctx.say(&text);
    Ok(None)
}

fn cmd_anova(ctx: &Ctx, a: &AnovaArgs) -> Result<Option<Outcome>> {
    let design = match (&a.summaries, &a.raw) {
        (Some(p), _) => load_summary_design(p)?,
        (None, Some(p)) => load_raw_design(p)?,
        (None, None) => unreachable!("clap requires one input"),
    };
    let table = anova_from_summaries(&design, a.alpha)?;
    let text = format!(
        "rows: {}\ncolumns: {}\nreplicates per cell: {}\n{}",
        design.row_levels.join(", "),
        design.col_levels.join(", "),
        design.replicates(),
        table.render_text()
    );
    ctx.write("anova.txt", &text)?;
    ctx.write("anova.csv", &table.render_csv())?;
    ctx.say(&text);
    Ok(None)
}

fn cmd_synth(ctx: &Ctx, a: &SynthArgs) -> Result<Option<Outcome>> {
    let mut cfg = if a.default {
        SynthConfig {
            seed: ctx.config.synth.seed,
            ..SynthConfig::default()
        }
    } else {
        ctx.config.synth.clone()
    };
    if let Some(f) = a.frames_per_video {
        cfg.frames_per_video = f;
    }
    cfg.validate()?;
    if a.write_frames {
        let m = generate(&cfg, &ctx.out("synth"))?;
        ctx.say(&format!("wrote {} frames under {}", m.frames().len(), ctx.out("synth").display()));
    }
    let (naive, grouped) = default_specs(cfg.seed, a.runs);
    let r = inflation_experiment(&cfg, &naive, &grouped, a.k)?;
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    let text = r.render_text();
    ctx.write("inflation.txt", &text)?;
    ctx.write("delta.csv", &r.delta.render_csv())?;
    ctx.write("naive_summary.csv", &r.naive.render_csv())?;
    ctx.write("grouped_summary.csv", &r.grouped.render_csv())?;
    ctx.say(&text);
    Ok(None)
}

/// Sections merged by `report`: (title, text file, machine-readable file).
const REPORT_SECTIONS: [(&str, &str, &str); 5] = [
    ("evaluation", "metrics.txt", "summary.csv"),
    ("audit", "audit.txt", "audit.csv"),
    ("anova", "anova.txt", "anova.csv"),
    ("pipeline", "pipeline.txt", "pipeline.csv"),
    ("leakage inflation", "inflation.txt", "delta.csv"),
];

fn cmd_report(ctx: &Ctx) -> Result<Option<Outcome>> {
    let mut text = String::new();
    let mut csv = String::from("section,row,column,value\n");
    let mut found = 0;
    for (title, txt, table) in REPORT_SECTIONS {
        let txt_path = ctx.out(txt);
        let table_path = ctx.out(table);
        if !txt_path.is_file() && !table_path.is_file() {
            continue;
        }
        found += 1;
        let _ = writeln!(text, "==== {title} ====");
        if txt_path.is_file() {
            text.push_str(&fs::read_to_string(&txt_path).map_err(|e| Error::io(&txt_path, e))?);
        }
        text.push('\n');
        if table_path.is_file() {
            append_long_form(&mut csv, title, &table_path)?;
        }
    }
    // The two per-strategy summaries of the synthetic experiment.
    for (title, name) in [("naive summary", "naive_summary.csv"), ("grouped summary", "grouped_summary.csv")] {
        let p = ctx.out(name);
        if p.is_file() {
            append_long_form(&mut csv, title, &p)?;
        }
    }
    if found == 0 {
        return Err(Error::invalid(format!(
            "nothing to report in {}; run eval, audit, anova or synth first",
            ctx.cli.out.display()
        )));
    }
    ctx.write("report.txt", &text)?;
    ctx.write("report.csv", &csv)?;
    ctx.say(&text);
    Ok(None)
}

/// Appends a CSV table as `section,row,column,value` rows, keyed by the
/// table's first column (or the row number when that is ambiguous).
fn append_long_form(out: &mut String, section: &str, path: &Path) -> Result<()> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let quote = |s: &str| {
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    };
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let key = format!("{}:{}", i, rec.get(0).unwrap_or(""));
        for (h, v) in headers.iter().zip(rec.iter()).skip(1) {
            let _ = writeln!(out, "{},{},{},{}", quote(section), quote(&key), quote(h), quote(v));
        }
    }
    Ok(())
}

/// Long help for the top level and every subcommand, as one string.
pub fn help_snapshot() -> String {
    use clap::CommandFactory;
    let mut root = Cli::command().term_width(100);
    root.build();
    let mut s = root.render_long_help().to_string();
    for sub in root.get_subcommands() {
        let mut sub = sub.clone().term_width(100);
        let _ = writeln!(s, "\n---- {} ----", sub.get_name());
        s.push_str(&sub.render_long_help().to_string());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one_and_help_exits_zero() {
        assert_eq!(run(["otopipe", "bogus"]), EXIT_USAGE);
        assert_eq!(run(["otopipe", "--help"]), EXIT_OK);
        assert_eq!(run(["otopipe", "anova"]), EXIT_USAGE);
    }

    #[test]
    fn config_tables_parse() {
        let c: FileConfig = toml::from_str(
            "[pipeline]\ntrim_fraction = 0.05\nlaplacian = { kind = \"absolute\", threshold = 10.0 }\n\
             [split]\nstrategy = \"naive\"\nseed = 3\n[synth]\nframes_per_video = 5\n",
        )
        .unwrap();
        assert_eq!(c.pipeline.trim_fraction, 0.05);
        assert_eq!(c.split.strategy, SplitStrategy::NaiveFrame);
        assert_eq!(c.synth.frames_per_video, 5);
        assert!(toml::from_str::<FileConfig>("[nope]\n").is_err());
        assert_eq!(c.digest(), c.clone().digest());
        assert_ne!(c.digest(), FileConfig::default().digest());
    }

    #[test]
    fn missing_config_file_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run(["otopipe", "--out", out, "--config", "/nonexistent.toml", "report"]), EXIT_DATA);
    }
}
