//! Dataset data model: patients, videos, frames and their quality scores.
//!
//! A [`DatasetManifest`] is an immutable value. Stages that change frame
//! state build a new manifest with [`DatasetManifest::with_frames`].

mod format;
mod ingest;

pub use format::{load, parse, save, serialize, MANIFEST_HEADER};
pub use ingest::{ingest_tree, IngestOptions, IngestReport};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four diagnostic classes. Ordinals follow the per-class table order
/// used in reports, with `Normal` last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    ChronicOtitisMedia = 0,
    Earwax = 1,
    Myringosclerosis = 2,
    Normal = 3,
}

pub const NUM_CLASSES: usize = 4;

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [
        ClassLabel::ChronicOtitisMedia,
        ClassLabel::Earwax,
        ClassLabel::Myringosclerosis,
        ClassLabel::Normal,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Self> {
        Self::ALL.get(ordinal).copied()
    }

    /// Token used in manifest files.
    pub fn key(self) -> &'static str {
        match self {
            ClassLabel::ChronicOtitisMedia => "chronic_otitis_media",
            ClassLabel::Earwax => "earwax",
            ClassLabel::Myringosclerosis => "myringosclerosis",
            ClassLabel::Normal => "normal",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ClassLabel::ChronicOtitisMedia => "Chronic Otitis Media",
            ClassLabel::Earwax => "Earwax",
            ClassLabel::Myringosclerosis => "Myringosclerosis",
            ClassLabel::Normal => "Normal",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    /// Accepts the manifest key, the display name, and common spellings
    /// ("ear wax", "COM"), case- and separator-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let folded: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .flat_map(char::to_lowercase)
            .collect();
        match folded.as_str() {
            "chronicotitismedia" | "com" => Ok(ClassLabel::ChronicOtitisMedia),
            "earwax" | "cerumen" => Ok(ClassLabel::Earwax),
            "myringosclerosis" => Ok(ClassLabel::Myringosclerosis),
            "normal" | "healthy" => Ok(ClassLabel::Normal),
            _ => Err(Error::invalid(format!("unknown class label {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatientId(String);

impl PatientId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("patient id must not be empty"));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PatientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Capture year and month, taken from the `<year>-<month>` folder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CapturePeriod {
    pub year: u16,
    pub month: u8,
}

impl fmt::Display for CapturePeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for CapturePeriod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("capture period {s:?} is not YYYY-MM"));
        let (y, m) = s.split_once(['-', '_']).ok_or_else(bad)?;
        if y.len() != 4 || m.is_empty() || m.len() > 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month: u8 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(Self { year, month })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    pub patient: PatientId,
    pub label: ClassLabel,
    pub capture_period: CapturePeriod,
    pub frame_count: u32,
    pub resolution: (u32, u32),
    pub fps: f64,
}

impl VideoRecord {
    pub const DEFAULT_RESOLUTION: (u32, u32) = (1280, 1024);
    pub const DEFAULT_FPS: f64 = 30.0;
}

/// Why a frame is (or is not) part of the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameStatus {
    Included,
    Trimmed,
    LowQuality,
    Unreadable,
}

impl FrameStatus {
    pub fn key(self) -> &'static str {
        match self {
            FrameStatus::Included => "included",
            FrameStatus::Trimmed => "trimmed",
            FrameStatus::LowQuality => "low_quality",
            FrameStatus::Unreadable => "unreadable",
        }
    }
}

impl FromStr for FrameStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "included" => FrameStatus::Included,
            "trimmed" => FrameStatus::Trimmed,
            "low_quality" => FrameStatus::LowQuality,
            "unreadable" => FrameStatus::Unreadable,
            _ => return Err(Error::invalid(format!("unknown frame status {s:?}"))),
        })
    }
}

/// Stable identity of a frame: its video plus index, written `video#index`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameId {
    pub video_id: String,
    pub index: u32,
}

impl FrameId {
    pub fn new(video_id: impl Into<String>, index: u32) -> Self {
        Self {
            video_id: video_id.into(),
            index,
        }
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.video_id, self.index)
    }
}

impl FromStr for FrameId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (video, index) = s
            .rsplit_once('#')
            .ok_or_else(|| Error::invalid(format!("frame id {s:?} is not <video>#<index>")))?;
        let index = index
            .parse()
            .map_err(|_| Error::invalid(format!("frame id {s:?} has a non-numeric index")))?;
        Ok(FrameId::new(video, index))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub video_id: String,
    pub frame_index: u32,
    pub path: PathBuf,
    pub laplacian_variance: Option<f64>,
    pub shannon_entropy: Option<f64>,
    pub status: FrameStatus,
}

impl FrameRecord {
    pub fn new(video_id: impl Into<String>, frame_index: u32, path: impl Into<PathBuf>) -> Self {
        Self {
            video_id: video_id.into(),
            frame_index,
            path: path.into(),
            laplacian_variance: None,
            shannon_entropy: None,
            status: FrameStatus::Included,
        }
    }

    pub fn id(&self) -> FrameId {
        FrameId::new(self.video_id.clone(), self.frame_index)
    }

    pub fn included(&self) -> bool {
        self.status == FrameStatus::Included
    }
}

/// Registry of videos and frames. Entries are kept sorted by
/// `(patient, video, frame_index)` so serialization is deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    videos: Vec<VideoRecord>,
    frames: Vec<FrameRecord>,
    video_index: HashMap<String, usize>,
}

impl DatasetManifest {
    pub fn new(mut videos: Vec<VideoRecord>, mut frames: Vec<FrameRecord>) -> Self {
        videos.sort_by(|a, b| (&a.patient, &a.video_id).cmp(&(&b.patient, &b.video_id)));
        let video_index: HashMap<String, usize> = videos
            .iter()
            .enumerate()
            .map(|(i, v)| (v.video_id.clone(), i))
            .collect();
        // Frames of unknown videos sort last; validate() reports them.
        frames.sort_by(|a, b| {
            let ka = video_index.get(&a.video_id).copied().unwrap_or(usize::MAX);
            let kb = video_index.get(&b.video_id).copied().unwrap_or(usize::MAX);
            (ka, &a.video_id, a.frame_index).cmp(&(kb, &b.video_id, b.frame_index))
        });
        Self {
            videos,
            frames,
            video_index,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn videos(&self) -> &[VideoRecord] {
        &self.videos
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoRecord> {
        self.video_index.get(video_id).map(|&i| &self.videos[i])
    }

    pub fn patient_of(&self, frame: &FrameRecord) -> Option<&PatientId> {
        self.video(&frame.video_id).map(|v| &v.patient)
    }

    pub fn label_of(&self, frame: &FrameRecord) -> Option<ClassLabel> {
        self.video(&frame.video_id).map(|v| v.label)
    }

    pub fn included_frames(&self) -> impl Iterator<Item = &FrameRecord> {
        self.frames.iter().filter(|f| f.included())
    }

    pub fn patients(&self) -> BTreeSet<&PatientId> {
        self.videos.iter().map(|v| &v.patient).collect()
    }

    /// Frame totals per class, over every listed frame.
    pub fn label_counts(&self) -> [u64; NUM_CLASSES] {
        self.count_labels(self.frames.iter())
    }

    pub fn included_label_counts(&self) -> [u64; NUM_CLASSES] {
        self.count_labels(self.included_frames())
    }

    fn count_labels<'a>(&self, frames: impl Iterator<Item = &'a FrameRecord>) -> [u64; NUM_CLASSES] {
        let mut counts = [0u64; NUM_CLASSES];
        for f in frames {
            if let Some(label) = self.label_of(f) {
                counts[label.ordinal()] += 1;
            }
        }
        counts
    }

    /// Same videos, new frame list.
    pub fn with_frames(&self, frames: Vec<FrameRecord>) -> Self {
        Self::new(self.videos.clone(), frames)
    }

    /// Frame lookup by id.
    pub fn frame_map(&self) -> HashMap<FrameId, &FrameRecord> {
        self.frames.iter().map(|f| (f.id(), f)).collect()
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub severity: Severity,
    pub entity: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.entity, self.rule)
    }
}

/// Checks every manifest invariant. Never fails; an empty list means the
/// manifest is well formed. A patient whose videos carry different labels
/// is reported as a warning.
pub fn validate(manifest: &DatasetManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut err = |entity: String, rule: String| {
        out.push(Violation {
            severity: Severity::Error,
            entity,
            rule,
        })
    };

    let mut seen_videos = HashSet::new();
    for v in &manifest.videos {
        if v.video_id.is_empty() {
            err("video <empty>".into(), "video id must not be empty".into());
        }
        if !seen_videos.insert(v.video_id.as_str()) {
            err(format!("video {}", v.video_id), "duplicate video id".into());
        }
        if v.patient.as_str().is_empty() {
            err(format!("video {}", v.video_id), "patient id must not be empty".into());
        }
        if v.fps.is_nan() || v.fps <= 0.0 {
            err(format!("video {}", v.video_id), format!("fps {} must be positive", v.fps));
        }
    }

    let mut seen_frames = HashSet::new();
    for f in &manifest.frames {
        let entity = format!("frame {}", f.id());
        match manifest.video(&f.video_id) {
            None => err(entity.clone(), format!("references unknown video {:?}", f.video_id)),
            Some(v) if f.frame_index >= v.frame_count => err(
                entity.clone(),
                format!("index {} outside [0, {})", f.frame_index, v.frame_count),
            ),
            Some(_) => {}
        }
        if !seen_frames.insert((f.video_id.as_str(), f.frame_index)) {
            err(entity.clone(), "duplicate (video_id, frame_index)".into());
        }
        if let Some(l) = f.laplacian_variance {
            if !l.is_finite() || l < 0.0 {
                err(entity.clone(), format!("laplacian_variance {l} must be finite and >= 0"));
            }
        }
        if let Some(h) = f.shannon_entropy {
            if !(0.0..=8.0).contains(&h) {
                err(entity.clone(), format!("shannon_entropy {h} outside [0, 8]"));
            }
        }
    }

    let mut labels_by_patient: BTreeMap<&PatientId, BTreeSet<ClassLabel>> = BTreeMap::new();
    for v in &manifest.videos {
        labels_by_patient.entry(&v.patient).or_default().insert(v.label);
    }
    for (patient, labels) in labels_by_patient {
        if labels.len() > 1 {
            let names: Vec<_> = labels.iter().map(|l| l.key()).collect();
            out.push(Violation {
                severity: Severity::Warning,
                entity: format!("patient {patient}"),
                rule: format!("videos carry different labels: {}", names.join(", ")),
            });
        }
    }
    out
}
