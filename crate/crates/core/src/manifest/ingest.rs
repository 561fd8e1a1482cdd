//! Builds a manifest from a raw frame tree and a diagnosis table.
//!
//! Normative layout: `<root>/<YYYY-MM>/<patient_id>/<video_id>/<index>.<ext>`.
//! A layout override file (`video_id,dir,period`) can point individual
//! videos at arbitrary directories below the root.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{CapturePeriod, ClassLabel, DatasetManifest, FrameRecord, PatientId, VideoRecord};
use crate::error::{Error, Result};

/// Extensions treated as frame images.
pub const FRAME_EXTENSIONS: &[&str] = &["pgm", "ppm", "png"];

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Optional CSV with columns `video_id,dir,period`; `dir` is relative to
    /// the root and replaces the normative location of that video.
    pub layout_override: Option<PathBuf>,
}

/// Everything ingest noticed but did not turn into manifest entries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    /// Videos found on disk with no diagnosis row (excluded).
    pub orphan_videos: Vec<String>,
    /// Diagnosis rows whose video has no directory on disk.
    pub missing_videos: Vec<String>,
    /// Paths that do not fit the layout or are not readable frame images.
    pub skipped_paths: Vec<PathBuf>,
}

impl IngestReport {
    pub fn render(&self) -> String {
        let mut s = format!(
            "orphan videos (on disk, not in table): {}\n",
            self.orphan_videos.len()
        );
        for v in &self.orphan_videos {
            s.push_str(&format!("  {v}\n"));
        }
        s.push_str(&format!(
            "missing videos (in table, not on disk): {}\n",
            self.missing_videos.len()
        ));
        for v in &self.missing_videos {
            s.push_str(&format!("  {v}\n"));
        }
        s.push_str(&format!("skipped paths: {}\n", self.skipped_paths.len()));
        for p in &self.skipped_paths {
            s.push_str(&format!("  {}\n", p.display()));
        }
        s
    }
}

struct DiagnosisRow {
    patient: PatientId,
    label: ClassLabel,
}

struct VideoDir {
    period: CapturePeriod,
    patient: String,
    video_id: String,
    dir: PathBuf,
}

fn read_table(path: &Path) -> Result<BTreeMap<String, DiagnosisRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::data(format!("{}: missing column {name:?}", path.display())))
    };
    let (pc, vc, lc) = (col("patient_id")?, col("video_id")?, col("label")?);

    let mut rows = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let row_no = i + 2;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let label: ClassLabel = field(lc).parse().map_err(|_| {
            Error::data(format!(
                "{}:{row_no}: unknown label {:?} in row {:?}",
                path.display(),
                field(lc),
                rec.iter().collect::<Vec<_>>().join(",")
            ))
        })?;
        let patient = PatientId::new(field(pc))
            .map_err(|_| Error::data(format!("{}:{row_no}: empty patient_id", path.display())))?;
        let video = field(vc).to_string();
        if video.is_empty() {
            return Err(Error::data(format!("{}:{row_no}: empty video_id", path.display())));
        }
        if rows.insert(video.clone(), DiagnosisRow { patient, label }).is_some() {
            return Err(Error::data(format!(
                "{}:{row_no}: video {video:?} listed twice",
                path.display()
            )));
        }
    }
    Ok(rows)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<fs::DirEntry>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

fn name_of(entry: &fs::DirEntry) -> Option<String> {
    entry.file_name().to_str().map(str::to_owned)
}

fn discover_videos(root: &Path, report: &mut IngestReport) -> Result<Vec<VideoDir>> {
    let mut out = Vec::new();
    for period_entry in read_dir_sorted(root)? {
        let path = period_entry.path();
        if !path.is_dir() {
            // Loose files at the root (the diagnosis table, notes) are expected.
            continue;
        }
        let Some(period) = name_of(&period_entry).and_then(|n| n.parse::<CapturePeriod>().ok())
        else {
            report.skipped_paths.push(path);
            continue;
        };
        for patient_entry in read_dir_sorted(&path)? {
            let ppath = patient_entry.path();
            let Some(patient) = name_of(&patient_entry).filter(|_| ppath.is_dir()) else {
                report.skipped_paths.push(ppath);
                continue;
            };
            for video_entry in read_dir_sorted(&ppath)? {
                let vpath = video_entry.path();
                let Some(video_id) = name_of(&video_entry).filter(|_| vpath.is_dir()) else {
                    report.skipped_paths.push(vpath);
                    continue;
                };
                out.push(VideoDir {
                    period,
                    patient: patient.clone(),
                    video_id,
                    dir: vpath,
                });
            }
        }
    }
    Ok(out)
}

fn read_layout_override(path: &Path, root: &Path) -> Result<HashMap<String, (PathBuf, CapturePeriod)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut out = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let row_no = i + 2;
        let (Some(video), Some(dir), Some(period)) = (rec.get(0), rec.get(1), rec.get(2)) else {
            return Err(Error::data(format!(
                "{}:{row_no}: expected columns video_id,dir,period",
                path.display()
            )));
        };
        let period = period
            .parse()
            .map_err(|e| Error::data(format!("{}:{row_no}: {e}", path.display())))?;
        out.insert(video.to_string(), (root.join(dir), period));
    }
    Ok(out)
}

type Scanned = (Vec<(u32, PathBuf)>, Vec<PathBuf>);

/// Frame images of one video directory, as `(index, path)`, plus skipped
/// paths. Errors on two files claiming the same index.
fn scan_video(video: &VideoDir) -> Result<Scanned> {
    let mut frames: BTreeMap<u32, PathBuf> = BTreeMap::new();
    let mut skipped = Vec::new();
    for entry in read_dir_sorted(&video.dir)? {
        let path = entry.path();
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        let index = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u32>().ok());
        let readable = path.is_file() && fs::File::open(&path).is_ok();
        match index {
            Some(index) if ext_ok && readable => {
                if let Some(prev) = frames.insert(index, path.clone()) {
                    return Err(Error::data(format!(
                        "duplicate frame ({}, {index}): {} and {}",
                        video.video_id,
                        prev.display(),
                        path.display()
                    )));
                }
            }
            _ => skipped.push(path),
        }
    }
    Ok((frames.into_iter().collect(), skipped))
}

/// Walks `root`, joins the diagnosis table and returns the manifest plus a
/// report of orphans and skipped paths.
pub fn ingest_tree(
    root: &Path,
    diagnosis_table: &Path,
    options: &IngestOptions,
) -> Result<(DatasetManifest, IngestReport)> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "root is not a readable directory"),
        ));
    }
    let table = read_table(diagnosis_table)?;
    let mut report = IngestReport::default();
    let mut dirs = discover_videos(root, &mut report)?;

    if let Some(layout) = &options.layout_override {
        let overrides = read_layout_override(layout, root)?;
        dirs.retain(|d| !overrides.contains_key(&d.video_id));
        for (video_id, (dir, period)) in overrides {
            let patient = table
                .get(&video_id)
                .map(|r| r.patient.as_str().to_string())
                .unwrap_or_default();
            dirs.push(VideoDir {
                period,
                patient,
                video_id,
                dir,
            });
        }
        dirs.sort_by(|a, b| a.dir.cmp(&b.dir));
    }

    let mut seen: HashMap<&str, &Path> = HashMap::new();
    for d in &dirs {
        if let Some(prev) = seen.insert(&d.video_id, &d.dir) {
            return Err(Error::data(format!(
                "duplicate video id {:?} in {} and {}",
                d.video_id,
                prev.display(),
                d.dir.display()
            )));
        }
    }

    let scanned: Vec<_> = dirs.par_iter().map(scan_video).collect::<Result<_>>()?;

    let mut videos = Vec::new();
    let mut frames = Vec::new();
    for (dir, (found, skipped)) in dirs.iter().zip(scanned) {
        report.skipped_paths.extend(skipped);
        let Some(row) = table.get(&dir.video_id) else {
            report.orphan_videos.push(dir.video_id.clone());
            continue;
        };
        if !dir.patient.is_empty() && dir.patient != row.patient.as_str() {
            return Err(Error::data(format!(
                "video {:?} sits under patient folder {:?} but the table assigns patient {:?}",
                dir.video_id, dir.patient, row.patient
            )));
        }
        let frame_count = found.last().map_or(0, |(i, _)| i + 1);
        videos.push(VideoRecord {
            video_id: dir.video_id.clone(),
            patient: row.patient.clone(),
            label: row.label,
            capture_period: dir.period,
            frame_count,
            resolution: VideoRecord::DEFAULT_RESOLUTION,
            fps: VideoRecord::DEFAULT_FPS,
        });
        frames.extend(
            found
                .into_iter()
                .map(|(i, p)| FrameRecord::new(dir.video_id.clone(), i, p)),
        );
    }
    report.missing_videos = table
        .keys()
        .filter(|v| !seen.contains_key(v.as_str()))
        .cloned()
        .collect();
    report.orphan_videos.sort();
    report.skipped_paths.sort();
    Ok((DatasetManifest::new(videos, frames), report))
}
