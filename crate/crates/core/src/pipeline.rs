//! Frame preparation: trim the head and tail of each video, score every
//! remaining frame, drop low-quality frames, and optionally crop to the
//! circular region of interest.
//!
//! Scores are computed on the grayscale image before cropping, so the black
//! annulus added by the crop never lowers a frame's entropy.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{self, GrayImage};
use crate::manifest::{DatasetManifest, FrameRecord, FrameStatus};

/// Cut-off rule for one quality score. Frames pass when their score is at
/// least the cut-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QualityPolicy {
    /// Fixed score threshold.
    Absolute { threshold: f64 },
    /// Cut-off at the given percentile (0–100, linear interpolation) of the
    /// video's own scores.
    Percentile { percentile: f64 },
}

impl QualityPolicy {
    fn validate(&self, name: &str) -> Result<()> {
        match *self {
            QualityPolicy::Absolute { threshold } if threshold.is_nan() || threshold < 0.0 => Err(Error::invalid(
                format!("{name} threshold must be >= 0, got {threshold}"),
            )),
            QualityPolicy::Percentile { percentile } if !(0.0..=100.0).contains(&percentile) => {
                Err(Error::invalid(format!(
                    "{name} percentile must be in [0, 100], got {percentile}"
                )))
            }
            _ => Ok(()),
        }
    }

    fn cutoff(&self, sorted_scores: &[f64]) -> f64 {
        match *self {
            QualityPolicy::Absolute { threshold } => threshold,
            QualityPolicy::Percentile { percentile } => percentile_of_sorted(sorted_scores, percentile),
        }
    }
}

/// Linear-interpolation percentile of ascending data (`q` in 0–100).
pub fn percentile_of_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NEG_INFINITY,
        1 => sorted[0],
        n => {
            let pos = q / 100.0 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if frac == 0.0 || lo + 1 >= n {
                return sorted[lo.min(n - 1)];
            }
            let (a, b) = (sorted[lo], sorted[lo + 1]);
            (a + (b - a) * frac).clamp(a, b)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Fraction of frames dropped at each end of every video, in `[0, 0.5)`.
    pub trim_fraction: f64,
    pub laplacian: QualityPolicy,
    pub entropy: QualityPolicy,
    pub crop_enabled: bool,
    pub fill: u8,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            trim_fraction: 0.10,
            laplacian: QualityPolicy::Percentile { percentile: 25.0 },
            entropy: QualityPolicy::Percentile { percentile: 25.0 },
            crop_enabled: true,
            fill: 0,
        }
    }
}

impl PipelineConfig {
    /// Keeps every readable frame: no trim, zero thresholds, no crop.
    pub fn neutral() -> Self {
        Self {
            trim_fraction: 0.0,
            laplacian: QualityPolicy::Absolute { threshold: 0.0 },
            entropy: QualityPolicy::Absolute { threshold: 0.0 },
            crop_enabled: false,
            fill: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return Err(Error::invalid(format!(
                "trim_fraction must be in [0, 0.5), got {}",
                self.trim_fraction
            )));
        }
        self.laplacian.validate("laplacian")?;
        self.entropy.validate("entropy")
    }
}

/// Where frame pixels come from. The pipeline only ever reads through this.
pub trait FrameSource: Sync {
    fn load(&self, frame: &FrameRecord) -> Result<GrayImage>;
}

/// Reads frames from the paths recorded in the manifest.
#[derive(Debug, Clone, Copy, Default)]
pub struct DiskFrames;

impl FrameSource for DiskFrames {
    fn load(&self, frame: &FrameRecord) -> Result<GrayImage> {
        imaging::read_gray(&frame.path)
    }
}

/// Drops `floor(n * trim_fraction)` entries from each end.
pub fn trim<T: Clone>(frame_indices: &[T], trim_fraction: f64) -> Vec<T> {
    let n = frame_indices.len();
    let cut = (n as f64 * trim_fraction).floor() as usize;
    if n == 0 {
        return Vec::new();
    }
    if 2 * cut >= n {
        // Only reachable with trim_fraction >= 0.5: keep the middle frame.
        return vec![frame_indices[n / 2].clone()];
    }
    frame_indices[cut..n - cut].to_vec()
}

fn frames_by_video(frames: &[FrameRecord]) -> BTreeMap<&str, Vec<usize>> {
    let mut by_video: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, f) in frames.iter().enumerate() {
        by_video.entry(f.video_id.as_str()).or_default().push(i);
    }
    for idx in by_video.values_mut() {
        idx.sort_by_key(|&i| frames[i].frame_index);
    }
    by_video
}

/// Marks the head and tail of each video's currently included frames as
/// trimmed.
pub fn trim_manifest(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<DatasetManifest> {
    config.validate()?;
    let mut frames = manifest.frames().to_vec();
    for idx in frames_by_video(manifest.frames()).into_values() {
        let candidates: Vec<usize> = idx.into_iter().filter(|&i| frames[i].included()).collect();
        let kept: std::collections::HashSet<usize> =
            trim(&candidates, config.trim_fraction).into_iter().collect();
        for i in candidates {
            if !kept.contains(&i) {
                frames[i].status = FrameStatus::Trimmed;
            }
        }
    }
    Ok(manifest.with_frames(frames))
}

/// Fills Laplacian variance and entropy for every included frame. Frames
/// that cannot be read become [`FrameStatus::Unreadable`].
pub fn score_frames(manifest: &DatasetManifest, source: &dyn FrameSource) -> DatasetManifest {
    let frames: Vec<FrameRecord> = manifest
        .frames()
        .par_iter()
        .map(|f| {
            let mut f = f.clone();
            if !f.included() {
                return f;
            }
            match source.load(&f) {
                Ok(img) => match imaging::laplacian_variance(&img) {
                    Ok(lap) => {
                        f.laplacian_variance = Some(lap);
                        f.shannon_entropy = Some(imaging::shannon_entropy(&img));
                    }
                    Err(_) => f.status = FrameStatus::Unreadable,
                },
                Err(_) => f.status = FrameStatus::Unreadable,
            }
            f
        })
        .collect();
    manifest.with_frames(frames)
}

/// Per-video frame accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VideoCounts {
    pub video_id: String,
    pub kept: usize,
    pub dropped_trim: usize,
    pub dropped_quality: usize,
    pub dropped_unreadable: usize,
}

impl VideoCounts {
    pub fn total(&self) -> usize {
        self.kept + self.dropped_trim + self.dropped_quality + self.dropped_unreadable
    }

    fn add(&mut self, status: FrameStatus) {
        match status {
            FrameStatus::Included => self.kept += 1,
            FrameStatus::Trimmed => self.dropped_trim += 1,
            FrameStatus::LowQuality => self.dropped_quality += 1,
            FrameStatus::Unreadable => self.dropped_unreadable += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineReport {
    pub videos: Vec<VideoCounts>,
    pub warnings: Vec<String>,
}

impl PipelineReport {
    /// Tallies frame statuses per video.
    pub fn from_manifest(manifest: &DatasetManifest) -> Self {
        let mut counts: BTreeMap<&str, VideoCounts> = manifest
            .videos()
            .iter()
            .map(|v| {
                (
                    v.video_id.as_str(),
                    VideoCounts {
                        video_id: v.video_id.clone(),
                        ..Default::default()
                    },
                )
            })
            .collect();
        for f in manifest.frames() {
            counts
                .entry(f.video_id.as_str())
                .or_insert_with(|| VideoCounts {
                    video_id: f.video_id.clone(),
                    ..Default::default()
                })
                .add(f.status);
        }
        let videos: Vec<VideoCounts> = counts.into_values().collect();
        let warnings = videos
            .iter()
            .filter(|c| c.kept == 0 && c.total() > 0)
            .map(|c| format!("video {} has no frames left after filtering", c.video_id))
            .collect();
        Self { videos, warnings }
    }

    pub fn totals(&self) -> VideoCounts {
        let mut t = VideoCounts {
            video_id: "TOTAL".into(),
            ..Default::default()
        };
        for v in &self.videos {
            t.kept += v.kept;
            t.dropped_trim += v.dropped_trim;
            t.dropped_quality += v.dropped_quality;
            t.dropped_unreadable += v.dropped_unreadable;
        }
        t
    }

    pub fn render_text(&self) -> String {
        let t = self.totals();
        let mut s = String::new();
        let _ = writeln!(s, "frames: {}", t.total());
        let _ = writeln!(s, "  kept:               {}", t.kept);
        let _ = writeln!(s, "  dropped (trim):     {}", t.dropped_trim);
        let _ = writeln!(s, "  dropped (quality):  {}", t.dropped_quality);
        let _ = writeln!(s, "  dropped (unreadable): {}", t.dropped_unreadable);
        let _ = writeln!(s, "per video (kept/trim/quality/unreadable):");
        for v in &self.videos {
            let _ = writeln!(
                s,
                "  {:<24} {:>5} {:>5} {:>5} {:>5}",
                v.video_id, v.kept, v.dropped_trim, v.dropped_quality, v.dropped_unreadable
            );
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }

    pub fn render_csv(&self) -> String {
        let mut s = String::from("video_id,kept,dropped_trim,dropped_quality,dropped_unreadable,total\n");
        for v in self.videos.iter().chain(std::iter::once(&self.totals())) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                v.video_id,
                v.kept,
                v.dropped_trim,
                v.dropped_quality,
                v.dropped_unreadable,
                v.total()
            );
        }
        s
    }
}

/// Applies both quality policies; a frame stays included only if it passes
/// both. Percentile cut-offs are computed per video over its scored frames.
pub fn filter_frames(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
) -> Result<(DatasetManifest, PipelineReport)> {
    config.validate()?;
    let mut frames = manifest.frames().to_vec();
    for idx in frames_by_video(manifest.frames()).into_values() {
        let scored: Vec<usize> = idx.into_iter().filter(|&i| frames[i].included()).collect();
        let mut laps = Vec::with_capacity(scored.len());
        let mut ents = Vec::with_capacity(scored.len());
        for &i in &scored {
            let f = &frames[i];
            let (Some(l), Some(h)) = (f.laplacian_variance, f.shannon_entropy) else {
                return Err(Error::invalid(format!("frame {} has not been scored", f.id())));
            };
            laps.push(l);
            ents.push(h);
        }
        let lap_cut = config.laplacian.cutoff(&sorted(&laps));
        let ent_cut = config.entropy.cutoff(&sorted(&ents));
        for (k, &i) in scored.iter().enumerate() {
            if !(laps[k] >= lap_cut && ents[k] >= ent_cut) {
                frames[i].status = FrameStatus::LowQuality;
            }
        }
    }
    let out = manifest.with_frames(frames);
    let report = PipelineReport::from_manifest(&out);
    Ok((out, report))
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Output location of a processed frame: `<out>/<YYYY-MM>/<patient>/<video>/<index>.pgm`.
pub fn processed_path(out_dir: &Path, manifest: &DatasetManifest, frame: &FrameRecord) -> PathBuf {
    let mut p = out_dir.to_path_buf();
    if let Some(v) = manifest.video(&frame.video_id) {
        p.push(v.capture_period.to_string());
        p.push(v.patient.as_str());
    }
    p.push(&frame.video_id);
    p.push(format!("{}.pgm", frame.frame_index));
    p
}

/// Crops every included frame and writes it under `out_dir`, pointing the
/// returned manifest at the new files.
pub fn crop_frames(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    source: &dyn FrameSource,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let frames: Vec<FrameRecord> = manifest
        .frames()
        .par_iter()
        .map(|f| {
            if !f.included() {
                return Ok(f.clone());
            }
            let img = source.load(f)?;
            let cropped = imaging::circular_crop(&img, config.fill);
            let path = processed_path(out_dir, manifest, f);
            imaging::write_pgm(&path, &cropped)?;
            Ok(FrameRecord { path, ..f.clone() })
        })
        .collect::<Result<_>>()?;
    Ok(manifest.with_frames(frames))
}

/// trim → score → filter → optional crop. Every frame status is reset first,
/// so re-running on a processed manifest starts from scratch.
pub fn run_pipeline(
    raw: &DatasetManifest,
    config: &PipelineConfig,
    source: &dyn FrameSource,
    out_dir: &Path,
) -> Result<(DatasetManifest, PipelineReport)> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let probe = out_dir.join(".otopipe-write-test");
    fs::write(&probe, b"").map_err(|e| Error::io(out_dir, e))?;
    let _ = fs::remove_file(&probe);

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
    let m = raw.with_frames(reset);
    let m = trim_manifest(&m, config)?;
    let m = score_frames(&m, source);
    let (m, _) = filter_frames(&m, config)?;
    let m = if config.crop_enabled {
        crop_frames(&m, config, source, out_dir)?
    } else {
        m
    };
    let report = PipelineReport::from_manifest(&m);
    let t = report.totals();
    if t.total() != raw.frames().len() {
        return Err(Error::data(format!(
            "frame accounting broke: {} accounted vs {} input frames",
            t.total(),
            raw.frames().len()
        )));
    }
    Ok((m, report))
}

/// Runs a user-supplied decoder command to split a video container into
/// frame images. `{input}` and `{output}` in the template are replaced by
/// the video path and the output directory; the command runs under `sh -c`.
/// Returns the files present in the output directory afterwards, sorted.
pub fn decode_with_external(template: &str, input: &Path, output_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let cmd = template
        .replace("{input}", &shell_quote(&input.to_string_lossy()))
        .replace("{output}", &shell_quote(&output_dir.to_string_lossy()));
    let status = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .status()
        .map_err(|e| Error::io(input, e))?;
    if !status.success() {
        return Err(Error::data(format!("decoder command failed ({status}): {cmd}")));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(output_dir)
        .map_err(|e| Error::io(output_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}
