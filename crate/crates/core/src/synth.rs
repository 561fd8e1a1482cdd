//! Synthetic "videos" with controllable class, patient and temporal
//! structure, a k-nearest-neighbour probe, and the experiment that measures
//! how much a frame-level split inflates the probe's scores.
//!
//! Each frame is `128 + up(σc·C + σp·P + σt·T(t)) + σn·noise`, where `C`,
//! `P` and `T` are 8x8 standard normal fields (class, patient, video) that are
//! bilinearly upsampled by `up`, `T` follows a first-order autoregression
//! with correlation `ρ` across frame indices, and `noise` is per pixel.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{audit_split, compute_fingerprints, AuditOptions};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_all, summarize_runs, MetricsReport, PredictionRow, PredictionSet, RunSummary};
use crate::imaging::{thumbnail, write_pgm, GrayImage, THUMB_SIDE};
use crate::manifest::{
    self, CapturePeriod, ClassLabel, DatasetManifest, FrameId, FrameRecord, PatientId, VideoRecord,
};
use crate::pipeline::{filter_frames, processed_path, score_frames, trim_manifest, FrameSource, PipelineConfig, PipelineReport};
use crate::rng::SplitMix64;
use crate::splitting::{run_series, SplitAssignment, SplitSpec, SplitStrategy};
use crate::stats::{delta_report, DeltaReport};

const GRID: usize = 8;
type Field = [f64; GRID * GRID];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    pub patients_per_class: usize,
    pub videos_per_patient: usize,
    pub frames_per_video: usize,
    pub image_side: usize,
    /// σc, spread of the class prototypes.
    pub class_signal: f64,
    /// σp, spread of the per-patient offsets.
    pub patient_signal: f64,
    /// σt, spread of the per-video temporal field.
    pub temporal_noise: f64,
    /// ρ in `[0, 1]`; 1 freezes the temporal field, 0 redraws it every frame.
    pub temporal_correlation: f64,
    /// σn, independent per-pixel noise.
    pub pixel_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            patients_per_class: 6,
            videos_per_patient: 2,
            frames_per_video: 60,
            image_side: 64,
            class_signal: 10.0,
            patient_signal: 14.0,
            temporal_noise: 10.0,
            temporal_correlation: 0.98,
            pixel_noise: 4.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.classes) {
            return Err(Error::invalid(format!("classes must be in 1..=4, got {}", self.classes)));
        }
        for (name, v) in [
            ("patients_per_class", self.patients_per_class),
            ("videos_per_patient", self.videos_per_patient),
            ("frames_per_video", self.frames_per_video),
        ] {
            if v < 1 {
                return Err(Error::invalid(format!("{name} must be >= 1")));
            }
        }
        if self.image_side < 8 {
            return Err(Error::invalid(format!("image_side must be >= 8, got {}", self.image_side)));
        }
        for (name, v) in [
            ("class_signal", self.class_signal),
            ("patient_signal", self.patient_signal),
            ("temporal_noise", self.temporal_noise),
            ("pixel_noise", self.pixel_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.temporal_correlation) {
            return Err(Error::invalid(format!(
                "temporal_correlation must be in [0, 1], got {}",
                self.temporal_correlation
            )));
        }
        Ok(())
    }

    pub fn total_frames(&self) -> usize {
        self.classes * self.patients_per_class * self.videos_per_patient * self.frames_per_video
    }
}

fn gaussian_field(rng: &mut SplitMix64) -> Field {
    std::array::from_fn(|_| rng.next_gaussian())
}

/// Bilinear upsampling of the 8x8 grid, sampling at pixel centres.
fn upsample(field: &Field, side: usize) -> Vec<f64> {
    let coord = |p: usize| {
        let u = ((p as f64 + 0.5) * GRID as f64 / side as f64 - 0.5).clamp(0.0, (GRID - 1) as f64);
        let i = (u.floor() as usize).min(GRID - 2);
        (i, u - i as f64)
    };
    let axis: Vec<(usize, f64)> = (0..side).map(coord).collect();
    let mut out = Vec::with_capacity(side * side);
    for &(iy, fy) in &axis {
        for &(ix, fx) in &axis {
            let at = |x: usize, y: usize| field[y * GRID + x];
            let top = at(ix, iy) * (1.0 - fx) + at(ix + 1, iy) * fx;
            let bottom = at(ix, iy + 1) * (1.0 - fx) + at(ix + 1, iy + 1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

struct VideoPlan {
    record: VideoRecord,
    class: usize,
    patient: usize,
    global: usize,
}

fn plan(cfg: &SynthConfig) -> Vec<VideoPlan> {
    let mut out = Vec::new();
    for class in 0..cfg.classes {
        for p in 0..cfg.patients_per_class {
            let patient = class * cfg.patients_per_class + p;
            for v in 0..cfg.videos_per_patient {
                let global = patient * cfg.videos_per_patient + v;
                out.push(VideoPlan {
                    record: VideoRecord {
                        video_id: format!("p{patient:03}v{v:02}"),
                        patient: PatientId::new(format!("p{patient:03}")).expect("non-empty"),
                        label: ClassLabel::ALL[class],
                        capture_period: CapturePeriod {
                            year: 2023,
                            month: (patient % 12 + 1) as u8,
                        },
                        frame_count: cfg.frames_per_video as u32,
                        resolution: (cfg.image_side as u32, cfg.image_side as u32),
                        fps: VideoRecord::DEFAULT_FPS,
                    },
                    class,
                    patient,
                    global,
                });
            }
        }
    }
    out
}

fn render_video(cfg: &SynthConfig, v: &VideoPlan) -> Vec<GrayImage> {
    let class = gaussian_field(&mut SplitMix64::keyed(cfg.seed, &[0, v.class as u64]));
    let patient = gaussian_field(&mut SplitMix64::keyed(cfg.seed, &[1, v.patient as u64]));
    let mut trng = SplitMix64::keyed(cfg.seed, &[2, v.global as u64]);
    let rho = cfg.temporal_correlation;
    let innovation = (1.0 - rho * rho).sqrt();
    let mut temporal = gaussian_field(&mut trng);
    let side = cfg.image_side;
    let mut frames = Vec::with_capacity(cfg.frames_per_video);
    for t in 0..cfg.frames_per_video {
        if t > 0 {
            for x in temporal.iter_mut() {
                *x = rho * *x + innovation * trng.next_gaussian();
            }
        }
        let combined: Field = std::array::from_fn(|i| {
            cfg.class_signal * class[i] + cfg.patient_signal * patient[i] + cfg.temporal_noise * temporal[i]
        });
        let base = upsample(&combined, side);
        let mut nrng = SplitMix64::keyed(cfg.seed, &[3, v.global as u64, t as u64]);
        let data = base
            .iter()
            .map(|b| {
                let noise = if cfg.pixel_noise > 0.0 { cfg.pixel_noise * nrng.next_gaussian() } else { 0.0 };
                (128.0 + b + noise).round().clamp(0.0, 255.0) as u8
            })
            .collect();
        frames.push(GrayImage::new(side, side, data).expect("dimensions match"));
    }
    frames
}

/// A generated dataset held in memory. It serves its own frames.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub manifest: DatasetManifest,
    pub images: HashMap<FrameId, GrayImage>,
}

impl FrameSource for SynthData {
    fn load(&self, frame: &FrameRecord) -> Result<GrayImage> {
        self.images
            .get(&frame.id())
            .cloned()
            .ok_or_else(|| Error::data(format!("no synthetic image for frame {}", frame.id())))
    }
}

/// Builds the dataset in memory. Frame paths follow the on-disk layout
/// relative to an empty root.
pub fn generate_in_memory(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let plans = plan(cfg);
    let rendered: Vec<Vec<GrayImage>> = plans.par_iter().map(|v| render_video(cfg, v)).collect();
    let videos: Vec<VideoRecord> = plans.iter().map(|v| v.record.clone()).collect();
    let skeleton = DatasetManifest::new(videos.clone(), Vec::new());
    let mut frames = Vec::with_capacity(cfg.total_frames());
    let mut images = HashMap::with_capacity(cfg.total_frames());
    for (v, imgs) in plans.iter().zip(rendered) {
        for (t, img) in imgs.into_iter().enumerate() {
            let mut f = FrameRecord::new(v.record.video_id.clone(), t as u32, PathBuf::new());
            f.path = processed_path(Path::new(""), &skeleton, &f);
            images.insert(f.id(), img);
            frames.push(f);
        }
    }
    Ok(SynthData {
        manifest: DatasetManifest::new(videos, frames),
        images,
    })
}

/// File names written by [`generate`] inside its output directory.
pub const DIAGNOSIS_FILE: &str = "diagnosis.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const FRAMES_DIR: &str = "frames";

/// Writes the dataset as `frames/<YYYY-MM>/<patient>/<video>/<index>.pgm`
/// plus a diagnosis table and a manifest. Returns the manifest.
pub fn generate(cfg: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    let data = generate_in_memory(cfg)?;
    let root = out_dir.join(FRAMES_DIR);
    let frames: Vec<FrameRecord> = data
        .manifest
        .frames()
        .par_iter()
        .map(|f| {
            let path = root.join(&f.path);
            write_pgm(&path, &data.images[&f.id()])?;
            Ok(FrameRecord { path, ..f.clone() })
        })
        .collect::<Result<_>>()?;
    let m = data.manifest.with_frames(frames);
    let mut table = String::from("patient_id,video_id,label\n");
    for v in m.videos() {
        let _ = writeln!(table, "{},{},{}", v.patient, v.video_id, v.label.key());
    }
    let diag = out_dir.join(DIAGNOSIS_FILE);
    fs::write(&diag, table).map_err(|e| Error::io(&diag, e))?;
    manifest::save(&m, &out_dir.join(MANIFEST_FILE))?;
    Ok(m)
}

// --- nearest-neighbour probe --------------------------------------------------

pub type Thumb = Box<[u8; THUMB_SIDE * THUMB_SIDE]>;

/// 32x32 thumbnails of every included frame.
pub fn thumbnails(manifest: &DatasetManifest, source: &dyn FrameSource) -> Result<HashMap<FrameId, Thumb>> {
    let frames: Vec<_> = manifest.included_frames().collect();
    frames
        .par_iter()
        .map(|f| Ok((f.id(), thumbnail(&source.load(f)?))))
        .collect()
}

/// Squared Euclidean distance between thumbnails.
pub fn thumb_distance(a: &Thumb, b: &Thumb) -> u32 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = i32::from(x) - i32::from(y);
            (d * d) as u32
        })
        .sum()
}

/// `thumb_distance` if it is below `bound`, abandoning early otherwise.
fn distance_below(a: &Thumb, b: &Thumb, bound: u32) -> Option<u32> {
    let mut acc = 0u32;
    for (ra, rb) in a.chunks_exact(THUMB_SIDE).zip(b.chunks_exact(THUMB_SIDE)) {
        acc += ra
            .iter()
            .zip(rb)
            .map(|(&x, &y)| {
                let d = i32::from(x) - i32::from(y);
                (d * d) as u32
            })
            .sum::<u32>();
        if acc >= bound {
            return None;
        }
    }
    Some(acc)
}

#[derive(Debug, Clone)]
pub struct ProbeOutput {
    pub predictions: PredictionSet,
    pub warnings: Vec<String>,
}

/// k-NN over precomputed thumbnails. Scores are vote fractions; vote ties go
/// to the class with the larger summed inverse distance, then the lowest
/// ordinal. Equal distances are ordered by train frame id.
pub fn knn_predict(
    manifest: &DatasetManifest,
    assignment: &SplitAssignment,
    k: usize,
    thumbs: &HashMap<FrameId, Thumb>,
) -> Result<ProbeOutput> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if assignment.train.is_empty() {
        return Err(Error::data("cannot run the probe with an empty train side"));
    }
    let label_of = |id: &FrameId| {
        manifest
            .video(&id.video_id)
            .map(|v| v.label)
            .ok_or_else(|| Error::data(format!("frame {id} belongs to no video in the manifest")))
    };
    let thumb_of = |id: &FrameId| thumbs.get(id).ok_or_else(|| Error::data(format!("no thumbnail for frame {id}")));
    let train: Vec<(&Thumb, ClassLabel)> = assignment
        .train
        .iter()
        .map(|id| Ok((thumb_of(id)?, label_of(id)?)))
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let k_eff = k.min(train.len());
    if k_eff < k {
        warnings.push(format!(
            "run {}: k = {k} exceeds the {} train frames; using k = {k_eff}",
            assignment.run_index,
            train.len()
        ));
    }
    let test: Vec<&FrameId> = assignment.test.iter().collect();
    let rows = test
        .par_iter()
        .map(|&id| {
            let q = thumb_of(id)?;
            // Sorted (distance, train position) of the best k so far.
            let mut best: Vec<(u32, usize)> = Vec::with_capacity(k_eff + 1);
            for (pos, (t, _)) in train.iter().enumerate() {
                let bound = if best.len() == k_eff { best[k_eff - 1].0 } else { u32::MAX };
                let Some(d) = distance_below(q, t, bound) else {
                    continue;
                };
                let at = best.partition_point(|&(bd, _)| bd <= d);
                best.insert(at, (d, pos));
                best.truncate(k_eff);
            }
            let mut votes = [0usize; 4];
            let mut closeness = [0f64; 4];
            for &(d, pos) in &best {
                let c = train[pos].1.ordinal();
                votes[c] += 1;
                closeness[c] += if d == 0 { f64::INFINITY } else { 1.0 / f64::from(d).sqrt() };
            }
            let mut winner = 0;
            for c in 1..4 {
                let better = votes[c] > votes[winner]
                    || (votes[c] == votes[winner] && closeness[c] > closeness[winner]);
                if better {
                    winner = c;
                }
            }
            Ok(PredictionRow {
                frame_id: id.clone(),
                run_index: assignment.run_index,
                true_label: label_of(id)?,
                predicted: ClassLabel::ALL[winner],
                scores: votes.map(|v| v as f64 / k_eff as f64),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeOutput {
        predictions: PredictionSet::new(rows),
        warnings,
    })
}

/// k-NN probe reading frames through `source`.
pub fn knn_probe(
    manifest: &DatasetManifest,
    assignment: &SplitAssignment,
    k: usize,
    source: &dyn FrameSource,
) -> Result<ProbeOutput> {
    knn_predict(manifest, assignment, k, &thumbnails(manifest, source)?)
}

// --- inflation experiment ------------------------------------------------------

#[derive(Debug, Clone)]
pub struct InflationResult {
    pub config: SynthConfig,
    pub k: usize,
    pub pipeline: PipelineReport,
    pub naive_reports: Vec<MetricsReport>,
    pub grouped_reports: Vec<MetricsReport>,
    pub naive: RunSummary,
    pub grouped: RunSummary,
    /// Naive ("before") minus grouped ("after") for the probe model.
    pub delta: DeltaReport,
    /// Contamination rate of every naive and grouped run.
    pub naive_contamination: Vec<f64>,
    pub grouped_contamination: Vec<f64>,
    pub warnings: Vec<String>,
}

impl InflationResult {
    pub fn model_key(&self) -> String {
        format!("{}-nn", self.k)
    }

    pub fn accuracy_drop(&self) -> f64 {
        self.delta.get(&self.model_key(), "accuracy").map_or(f64::NAN, |e| e.drop)
    }

    /// Side-by-side comparison of the two split strategies.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "inflation experiment: {} frames, {} runs per strategy, {}-NN probe",
            self.config.total_frames(),
            self.naive_reports.len(),
            self.k
        );
        s.push_str("\nwith leakage (naive frame split)\n");
        s.push_str(&self.naive.render_text());
        s.push_str("\nwithout leakage (patient-grouped split)\n");
        s.push_str(&self.grouped.render_text());
        s.push_str("\nmetric drop after removing leakage\n");
        s.push_str(&self.delta.render_text());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let _ = writeln!(
            s,
            "\nmean contamination: naive {:.4}, grouped {:.4}",
            mean(&self.naive_contamination),
            mean(&self.grouped_contamination)
        );
        let _ = writeln!(s, "accuracy drop: {:.4}", self.accuracy_drop());
        s
    }
}

/// Split specs for both strategies with a shared seed, run count and test
/// fraction.
pub fn default_specs(seed: u64, runs: u32) -> (SplitSpec, SplitSpec) {
    let base = SplitSpec {
        seed,
        run_count: runs,
        ..SplitSpec::default()
    };
    (
        SplitSpec {
            strategy: SplitStrategy::NaiveFrame,
            ..base
        },
        SplitSpec {
            strategy: SplitStrategy::GroupedPatient,
            ..base
        },
    )
}

/// generate → neutral pipeline → both split strategies → k-NN probe →
/// evaluation → drop report.
pub fn inflation_experiment(
    cfg: &SynthConfig,
    naive: &SplitSpec,
    grouped: &SplitSpec,
    k: usize,
) -> Result<InflationResult> {
    if naive.strategy != SplitStrategy::NaiveFrame || grouped.strategy != SplitStrategy::GroupedPatient {
        return Err(Error::invalid("expected one naive and one grouped split spec"));
    }
    let data = generate_in_memory(cfg)?;
    let neutral = PipelineConfig::neutral();
    let m = trim_manifest(&data.manifest, &neutral)?;
    let m = score_frames(&m, &data);
    let (m, pipeline) = filter_frames(&m, &neutral)?;
    let thumbs = thumbnails(&m, &data)?;
    let fps = compute_fingerprints(&m, &data)?;

    let mut warnings = Vec::new();
    let mut run = |spec: &SplitSpec| -> Result<(Vec<MetricsReport>, Vec<f64>)> {
        let mut preds = Vec::new();
        let mut contamination = Vec::new();
        for a in run_series(&m, spec)? {
            let out = knn_predict(&m, &a, k, &thumbs)?;
            warnings.extend(out.warnings);
            preds.extend(out.predictions.rows);
            contamination.push(audit_split(&m, &a, &AuditOptions::default(), Some(&fps))?.contamination_rate);
        }
        Ok((evaluate_all(&PredictionSet::new(preds))?, contamination))
    };
    let (naive_reports, naive_contamination) = run(naive)?;
    let (grouped_reports, grouped_contamination) = run(grouped)?;
    let naive_summary = summarize_runs(&naive_reports)?;
    let grouped_summary = summarize_runs(&grouped_reports)?;
    let key = format!("{k}-nn");
    let before: BTreeMap<String, RunSummary> = [(key.clone(), naive_summary.clone())].into();
    let after: BTreeMap<String, RunSummary> = [(key, grouped_summary.clone())].into();
    let delta = delta_report(&before, &after)?;
    Ok(InflationResult {
        config: cfg.clone(),
        k,
        pipeline,
        naive_reports,
        grouped_reports,
        naive: naive_summary,
        grouped: grouped_summary,
        delta,
        naive_contamination,
        grouped_contamination,
        warnings,
    })
}
