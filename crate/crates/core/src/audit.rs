//! Leakage audit for a (manifest, split) pair: patient and video overlap,
//! adjacent frames straddling the split, and near-duplicate frames.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{fingerprint, hamming, FrameFingerprint};
use crate::manifest::{DatasetManifest, FrameId, PatientId};
use crate::pipeline::FrameSource;
use crate::splitting::SplitAssignment;

/// Below this many fingerprinted frames the duplicate search compares every
/// test/train pair directly.
pub const ALL_PAIRS_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicateSearch {
    /// All pairs below [`ALL_PAIRS_LIMIT`] frames, blocked above.
    #[default]
    Auto,
    AllPairs,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditOptions {
    /// Largest index difference that still counts as adjacent.
    pub adjacency_window: u32,
    /// Largest hamming distance (of 64 bits) that counts as a duplicate.
    pub dup_threshold: u32,
    pub search: DuplicateSearch,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            adjacency_window: 30,
            dup_threshold: 5,
            search: DuplicateSearch::Auto,
        }
    }
}

impl AuditOptions {
    pub fn validate(&self) -> Result<()> {
        if self.adjacency_window < 1 {
            return Err(Error::invalid("adjacency_window must be >= 1"));
        }
        if self.dup_threshold > 64 {
            return Err(Error::invalid(format!(
                "dup_threshold must be in [0, 64], got {}",
                self.dup_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DuplicatePair {
    pub test: FrameId,
    pub train: FrameId,
    pub distance: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakageReport {
    pub options: AuditOptions,
    pub patient_overlap: Vec<PatientId>,
    pub video_overlap: Vec<String>,
    /// (test frame, train frame) from one video within the window.
    pub adjacency_pairs: Vec<(FrameId, FrameId)>,
    /// `None` when no fingerprints were supplied.
    pub duplicate_pairs: Option<Vec<DuplicatePair>>,
    pub test_frames: usize,
    /// Test frames with at least one adjacent or duplicate train counterpart.
    pub contaminated_frames: usize,
    pub contamination_rate: f64,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.patient_overlap.is_empty() && self.video_overlap.is_empty() && self.contaminated_frames == 0
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "leakage audit (adjacency window {}, duplicate threshold {} bits)",
            self.options.adjacency_window, self.options.dup_threshold
        );
        let list = |items: Vec<String>| if items.is_empty() { "none".to_string() } else { items.join(", ") };
        let _ = writeln!(
            s,
            "patient overlap: {} ({})",
            self.patient_overlap.len(),
            list(self.patient_overlap.iter().map(|p| p.to_string()).collect())
        );
        let _ = writeln!(s, "video overlap: {} ({})", self.video_overlap.len(), list(self.video_overlap.clone()));
        let _ = writeln!(s, "adjacent pairs: {}", self.adjacency_pairs.len());
        match &self.duplicate_pairs {
            Some(d) => {
                let _ = writeln!(s, "duplicate pairs: {}", d.len());
            }
            None => s.push_str("duplicate pairs: skipped (no fingerprints)\n"),
        }
        let _ = writeln!(
            s,
            "contamination: {}/{} test frames ({:.4})",
            self.contaminated_frames, self.test_frames, self.contamination_rate
        );
        s
    }

    /// One row per finding: `kind,test,train,value`.
    pub fn render_csv(&self) -> String {
        let mut s = String::from("kind,test,train,value\n");
        for p in &self.patient_overlap {
            let _ = writeln!(s, "patient_overlap,{p},,");
        }
        for v in &self.video_overlap {
            let _ = writeln!(s, "video_overlap,{v},,");
        }
        for (t, r) in &self.adjacency_pairs {
            let _ = writeln!(s, "adjacent,{t},{r},{}", t.index.abs_diff(r.index));
        }
        if let Some(d) = &self.duplicate_pairs {
            for p in d {
                let _ = writeln!(s, "duplicate,{},{},{}", p.test, p.train, p.distance);
            }
        }
        let _ = writeln!(s, "contamination_rate,,,{:?}", self.contamination_rate);
        s
    }
}

/// Fingerprints of every included frame.
pub fn compute_fingerprints(
    manifest: &DatasetManifest,
    source: &dyn FrameSource,
) -> Result<HashMap<FrameId, FrameFingerprint>> {
    let frames: Vec<_> = manifest.included_frames().collect();
    frames
        .par_iter()
        .map(|f| {
            let img = source.load(f)?;
            Ok((f.id(), fingerprint(&img)?))
        })
        .collect()
}

fn check_coverage(manifest: &DatasetManifest, assignment: &SplitAssignment) -> Result<()> {
    if let Some(id) = assignment.train.intersection(&assignment.test).next() {
        return Err(Error::data(format!("frame {id} is assigned to both sides")));
    }
    let included: HashSet<FrameId> = manifest.included_frames().map(|f| f.id()).collect();
    if let Some(id) = assignment.train.iter().chain(&assignment.test).find(|id| !included.contains(*id)) {
        return Err(Error::data(format!(
            "assignment names frame {id}, which is not an included frame of the manifest"
        )));
    }
    if included.len() != assignment.len() {
        let missing = included
            .iter()
            .filter(|id| assignment.side_of(id).is_none())
            .min()
            .expect("sizes differ so something is missing");
        return Err(Error::data(format!(
            "assignment does not cover the manifest: frame {missing} is unassigned ({} of {} included frames assigned)",
            assignment.len(),
            included.len()
        )));
    }
    Ok(())
}

fn adjacency(assignment: &SplitAssignment, window: u32) -> Vec<(FrameId, FrameId)> {
    let mut train_by_video: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for id in &assignment.train {
        train_by_video.entry(&id.video_id).or_default().push(id.index);
    }
    // BTreeSet order already sorts indices within a video.
    let mut pairs = Vec::new();
    for t in &assignment.test {
        let Some(train) = train_by_video.get(t.video_id.as_str()) else {
            continue;
        };
        let lo = t.index.saturating_sub(window);
        let hi = t.index.saturating_add(window);
        let start = train.partition_point(|&i| i < lo);
        for &i in train[start..].iter().take_while(|&&i| i <= hi) {
            pairs.push((t.clone(), FrameId::new(t.video_id.clone(), i)));
        }
    }
    pairs
}

type Entry<'a> = (&'a FrameId, &'a FrameFingerprint);

fn all_pairs(test: &[Entry], train: &[Entry], threshold: u32) -> Vec<DuplicatePair> {
    test.par_iter()
        .flat_map_iter(|&(t, ft)| {
            train.iter().filter_map(move |&(r, fr)| {
                let d = hamming(ft, fr);
                (d <= threshold).then(|| DuplicatePair {
                    test: t.clone(),
                    train: r.clone(),
                    distance: d,
                })
            })
        })
        .collect()
}

/// Bit ranges of `chunks` near-equal contiguous pieces of a 64-bit hash.
fn chunk_masks(chunks: u32) -> Vec<(u32, u64)> {
    (0..chunks)
        .map(|c| {
            let lo = 64 * c / chunks;
            let hi = 64 * (c + 1) / chunks;
            let width = hi - lo;
            let mask = if width == 64 { u64::MAX } else { ((1u64 << width) - 1) << lo };
            (c, mask)
        })
        .collect()
}

/// Multi-index blocking: cut the hash into `threshold + 1` pieces. Two hashes
/// within `threshold` bits must agree exactly on at least one piece, so
/// looking up every piece finds every qualifying pair.
fn blocked(test: &[Entry], train: &[Entry], threshold: u32) -> Vec<DuplicatePair> {
    if threshold >= 63 {
        return all_pairs(test, train, threshold);
    }
    let masks = chunk_masks(threshold + 1);
    let mut tables: Vec<HashMap<u64, Vec<usize>>> = vec![HashMap::new(); masks.len()];
    for (k, (_, fr)) in train.iter().enumerate() {
        for (c, mask) in &masks {
            tables[*c as usize].entry(fr.bits & mask).or_default().push(k);
        }
    }
    test.par_iter()
        .flat_map_iter(|&(t, ft)| {
            let mut seen = HashSet::new();
            for (c, mask) in &masks {
                if let Some(bucket) = tables[*c as usize].get(&(ft.bits & mask)) {
                    seen.extend(bucket.iter().copied());
                }
            }
            let mut hits: Vec<DuplicatePair> = seen
                .into_iter()
                .filter_map(|k| {
                    let (r, fr) = train[k];
                    let d = hamming(ft, fr);
                    (d <= threshold).then(|| DuplicatePair {
                        test: t.clone(),
                        train: r.clone(),
                        distance: d,
                    })
                })
                .collect();
            hits.sort();
            hits.into_iter()
        })
        .collect()
}

fn lookup<'a>(
    ids: &'a BTreeSet<FrameId>,
    fps: &'a HashMap<FrameId, FrameFingerprint>,
) -> Result<Vec<Entry<'a>>> {
    ids.iter()
        .map(|id| {
            fps.get(id)
                .map(|f| (id, f))
                .ok_or_else(|| Error::data(format!("no fingerprint for frame {id}")))
        })
        .collect()
}

/// Audits one split. Overlaps and adjacency are exact set computations; the
/// duplicate search is exact as well, whichever strategy runs.
pub fn audit_split(
    manifest: &DatasetManifest,
    assignment: &SplitAssignment,
    options: &AuditOptions,
    fingerprints: Option<&HashMap<FrameId, FrameFingerprint>>,
) -> Result<LeakageReport> {
    options.validate()?;
    check_coverage(manifest, assignment)?;

    let video_patient: HashMap<&str, &PatientId> =
        manifest.videos().iter().map(|v| (v.video_id.as_str(), &v.patient)).collect();
    fn side_sets<'a>(
        ids: &'a BTreeSet<FrameId>,
        video_patient: &HashMap<&str, &'a PatientId>,
    ) -> (BTreeSet<&'a str>, BTreeSet<&'a PatientId>) {
        let videos: BTreeSet<&str> = ids.iter().map(|id| id.video_id.as_str()).collect();
        let patients = videos.iter().map(|v| video_patient[v]).collect();
        (videos, patients)
    }
    let (train_videos, train_patients) = side_sets(&assignment.train, &video_patient);
    let (test_videos, test_patients) = side_sets(&assignment.test, &video_patient);

    let patient_overlap = test_patients.intersection(&train_patients).map(|p| (*p).clone()).collect();
    let video_overlap = test_videos.intersection(&train_videos).map(|v| v.to_string()).collect();
    let adjacency_pairs = adjacency(assignment, options.adjacency_window);

    let duplicate_pairs = match fingerprints {
        None => None,
        Some(fps) => {
            let test = lookup(&assignment.test, fps)?;
            let train = lookup(&assignment.train, fps)?;
            let use_all_pairs = match options.search {
                DuplicateSearch::AllPairs => true,
                DuplicateSearch::Blocked => false,
                DuplicateSearch::Auto => test.len() + train.len() < ALL_PAIRS_LIMIT,
            };
            let mut pairs = if use_all_pairs {
                all_pairs(&test, &train, options.dup_threshold)
            } else {
                blocked(&test, &train, options.dup_threshold)
            };
            pairs.sort();
            Some(pairs)
        }
    };

    let mut contaminated: HashSet<&FrameId> = adjacency_pairs.iter().map(|(t, _)| t).collect();
    if let Some(d) = &duplicate_pairs {
        contaminated.extend(d.iter().map(|p| &p.test));
    }
    let test_frames = assignment.test.len();
    let contaminated_frames = contaminated.len();
    let contamination_rate = if test_frames == 0 {
        0.0
    } else {
        contaminated_frames as f64 / test_frames as f64
    };

    Ok(LeakageReport {
        options: *options,
        patient_overlap,
        video_overlap,
        adjacency_pairs,
        duplicate_pairs,
        test_frames,
        contaminated_frames,
        contamination_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatePolicy {
    pub forbid_patient_overlap: bool,
    /// Fail when the contamination rate exceeds this value.
    pub max_contamination: Option<f64>,
}

impl Default for GatePolicy {
    fn default() -> Self {
        Self {
            forbid_patient_overlap: true,
            max_contamination: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateOutcome {
    pub passed: bool,
    pub reasons: Vec<String>,
}

pub fn gate(report: &LeakageReport, policy: &GatePolicy) -> GateOutcome {
    let mut reasons = Vec::new();
    if policy.forbid_patient_overlap && !report.patient_overlap.is_empty() {
        reasons.push(format!("patient overlap: {} patients", report.patient_overlap.len()));
    }
    if let Some(max) = policy.max_contamination {
        if report.contamination_rate > max {
            reasons.push(format!(
                "contamination {:.4} exceeds maximum {max}",
                report.contamination_rate
            ));
        }
    }
    GateOutcome {
        passed: reasons.is_empty(),
        reasons,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::THUMB_SIDE;
    use crate::manifest::tests::video;
    use crate::manifest::{ClassLabel, FrameRecord};
    use crate::rng::SplitMix64;
    use crate::splitting::{split, SplitSpec, SplitStrategy};

    fn one_video(frames: u32) -> DatasetManifest {
        let f = (0..frames).map(|i| FrameRecord::new("v", i, format!("{i}.pgm"))).collect();
        DatasetManifest::new(vec![video("v", "p", ClassLabel::Normal, frames)], f)
    }

    fn many(patients: usize) -> DatasetManifest {
        let mut videos = Vec::new();
        let mut frames = Vec::new();
        for p in 0..patients {
            let n = 10 + p as u32;
            let id = format!("v{p}");
            videos.push(video(&id, &format!("p{p}"), ClassLabel::ALL[p % 4], n));
            frames.extend((0..n).map(|i| FrameRecord::new(id.clone(), i, format!("{id}/{i}.pgm"))));
        }
        DatasetManifest::new(videos, frames)
    }

    fn random_fps(m: &DatasetManifest, seed: u64) -> HashMap<FrameId, FrameFingerprint> {
        let mut rng = SplitMix64::new(seed);
        m.frames()
            .iter()
            .map(|f| {
                let fp = FrameFingerprint {
                    bits: rng.next_u64(),
                    thumb: Box::new([0; THUMB_SIDE * THUMB_SIDE]),
                };
                (f.id(), fp)
            })
            .collect()
    }

    #[test]
    fn grouped_split_has_no_overlap() {
        let m = many(12);
        for seed in 0..20 {
            let a = split(&m, &SplitSpec::new(SplitStrategy::GroupedPatient, seed), 0).unwrap();
            let r = audit_split(&m, &a, &AuditOptions::default(), None).unwrap();
            assert!(r.patient_overlap.is_empty() && r.video_overlap.is_empty() && r.adjacency_pairs.is_empty());
            assert!(gate(&r, &GatePolicy::default()).passed);
        }
    }

    #[test]
    fn naive_split_of_one_video() {
        let m = one_video(100);
        let a = split(&m, &SplitSpec::new(SplitStrategy::NaiveFrame, 3), 0).unwrap();
        let opts = AuditOptions {
            adjacency_window: 1,
            ..Default::default()
        };
        let r = audit_split(&m, &a, &opts, None).unwrap();
        // A test frame is clean only if both neighbours are test frames too.
        let expected = a
            .test
            .iter()
            .filter(|t| {
                [t.index.checked_sub(1), Some(t.index + 1)]
                    .into_iter()
                    .flatten()
                    .any(|i| a.train.contains(&FrameId::new("v", i)))
            })
            .count();
        assert_eq!(r.contaminated_frames, expected);
        assert!(r.contamination_rate > 0.8);
        let g = gate(&r, &GatePolicy::default());
        assert_eq!(g.reasons, vec!["patient overlap: 1 patients".to_string()]);
    }

    #[test]
    fn identical_frames_are_duplicates_at_threshold_zero() {
        let m = one_video(4);
        let a = split(&m, &SplitSpec::new(SplitStrategy::NaiveFrame, 1), 0).unwrap();
        let mut fps = random_fps(&m, 9);
        let t = a.test.iter().next().unwrap().clone();
        let r = a.train.iter().next().unwrap().clone();
        let copy = fps[&r].clone();
        fps.insert(t.clone(), copy);
        let opts = AuditOptions {
            dup_threshold: 0,
            ..Default::default()
        };
        let rep = audit_split(&m, &a, &opts, Some(&fps)).unwrap();
        assert!(rep.duplicate_pairs.unwrap().contains(&DuplicatePair {
            test: t,
            train: r,
            distance: 0
        }));
    }

    #[test]
    fn blocked_search_equals_all_pairs() {
        let m = many(30);
        let a = split(&m, &SplitSpec::new(SplitStrategy::NaiveFrame, 2), 0).unwrap();
        let mut fps = random_fps(&m, 4);
        // Plant near copies at a range of distances.
        let mut rng = SplitMix64::new(11);
        let train: Vec<_> = a.train.iter().cloned().collect();
        for t in a.test.iter().take(60) {
            let src = &train[rng.below(train.len() as u64) as usize];
            let mut bits = fps[src].bits;
            for _ in 0..rng.below(9) {
                bits ^= 1 << rng.below(64);
            }
            fps.get_mut(t).unwrap().bits = bits;
        }
        for threshold in [0, 1, 3, 5, 8, 20, 64] {
            let mk = |search| AuditOptions {
                dup_threshold: threshold,
                search,
                ..Default::default()
            };
            let x = audit_split(&m, &a, &mk(DuplicateSearch::AllPairs), Some(&fps)).unwrap();
            let y = audit_split(&m, &a, &mk(DuplicateSearch::Blocked), Some(&fps)).unwrap();
            assert_eq!(x.duplicate_pairs, y.duplicate_pairs, "threshold {threshold}");
        }
    }

    #[test]
    fn mismatched_assignment_is_fatal() {
        let m = one_video(10);
        let mut a = split(&m, &SplitSpec::new(SplitStrategy::NaiveFrame, 1), 0).unwrap();
        let opts = AuditOptions::default();
        let mut extra = a.clone();
        extra.test.insert(FrameId::new("ghost", 0));
        assert!(audit_split(&m, &extra, &opts, None).is_err());
        let first = a.train.iter().next().unwrap().clone();
        a.train.remove(&first);
        let err = audit_split(&m, &a, &opts, None).unwrap_err().to_string();
        assert!(err.contains("unassigned"), "{err}");
    }

    #[test]
    fn gate_thresholds() {
        let m = many(8);
        let a = split(&m, &SplitSpec::new(SplitStrategy::GroupedPatient, 1), 0).unwrap();
        let mut r = audit_split(&m, &a, &AuditOptions::default(), None).unwrap();
        r.contamination_rate = 0.05;
        let policy = GatePolicy {
            forbid_patient_overlap: true,
            max_contamination: Some(0.10),
        };
        assert!(gate(&r, &policy).passed);
        r.contamination_rate = 0.2;
        assert!(!gate(&r, &policy).passed);
    }

    #[test]
    fn bad_options_are_rejected() {
        let m = one_video(4);
        let a = split(&m, &SplitSpec::new(SplitStrategy::NaiveFrame, 1), 0).unwrap();
        for opts in [
            AuditOptions { adjacency_window: 0, ..Default::default() },
            AuditOptions { dup_threshold: 65, ..Default::default() },
        ] {
            assert!(audit_split(&m, &a, &opts, None).is_err());
        }
    }
}
