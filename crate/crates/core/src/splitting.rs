//! Train/test splitting: the naive frame-level split that leaks adjacent
//! frames across sides, and the patient-grouped split that cannot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{ClassLabel, DatasetManifest, FrameId, PatientId};
use crate::rng::SplitMix64;

/// Re-draw budget for the grouped split's class-coverage requirement.
pub const MAX_COVERAGE_RETRIES: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    #[serde(alias = "naive")]
    NaiveFrame,
    #[serde(alias = "grouped")]
    GroupedPatient,
}

impl SplitStrategy {
    pub fn key(self) -> &'static str {
        match self {
            SplitStrategy::NaiveFrame => "naive",
            SplitStrategy::GroupedPatient => "grouped",
        }
    }
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for SplitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" | "naive_frame" | "frame" => Ok(SplitStrategy::NaiveFrame),
            "grouped" | "grouped_patient" | "patient" => Ok(SplitStrategy::GroupedPatient),
            _ => Err(Error::invalid(format!("unknown split strategy {s:?} (naive | grouped)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub strategy: SplitStrategy,
    pub test_fraction: f64,
    pub seed: u64,
    pub run_count: u32,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            strategy: SplitStrategy::GroupedPatient,
            test_fraction: 0.2,
            seed: 0,
            run_count: 11,
        }
    }
}

impl SplitSpec {
    pub fn new(strategy: SplitStrategy, seed: u64) -> Self {
        Self {
            strategy,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "test_fraction must be in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.run_count == 0 {
            return Err(Error::invalid("run_count must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub spec: SplitSpec,
    pub run_index: u32,
    pub train: BTreeSet<FrameId>,
    pub test: BTreeSet<FrameId>,
}

impl SplitAssignment {
    pub fn side_of(&self, id: &FrameId) -> Option<Side> {
        if self.train.contains(id) {
            Some(Side::Train)
        } else if self.test.contains(id) {
            Some(Side::Test)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Train,
    Test,
}

impl Side {
    pub fn key(self) -> &'static str {
        match self {
            Side::Train => "train",
            Side::Test => "test",
        }
    }
}

/// `ceil(n * fraction)` tolerant of representation error in `fraction`
/// (10 * 0.2 must give 2, not 3).
fn ceil_share(n: usize, fraction: f64) -> usize {
    let x = n as f64 * fraction;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Shuffles every included frame and sends the first `ceil(n * f)` to test.
pub fn split_naive_frame(
    manifest: &DatasetManifest,
    spec: &SplitSpec,
    run_index: u32,
) -> Result<SplitAssignment> {
    spec.validate()?;
    let mut ids: Vec<FrameId> = manifest.included_frames().map(|f| f.id()).collect();
    let n = ids.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "naive split needs at least 2 included frames, manifest has {n}"
        )));
    }
    let mut rng = SplitMix64::keyed(spec.seed, &[u64::from(run_index)]);
    rng.shuffle(&mut ids);
    let k = ceil_share(n, spec.test_fraction).clamp(1, n - 1);
    let train = ids.split_off(k).into_iter().collect();
    Ok(SplitAssignment {
        spec: *spec,
        run_index,
        train,
        test: ids.into_iter().collect(),
    })
}

struct PatientGroup {
    frames: Vec<FrameId>,
    labels: BTreeSet<ClassLabel>,
}

/// Shuffles patients and moves whole patients to test until the test side
/// first holds at least `test_fraction` of all included frames. Re-draws
/// (up to [`MAX_COVERAGE_RETRIES`] times) while some class present in the
/// data is missing from train.
pub fn split_grouped_patient(
    manifest: &DatasetManifest,
    spec: &SplitSpec,
    run_index: u32,
) -> Result<SplitAssignment> {
    spec.validate()?;
    let mut by_patient: BTreeMap<&PatientId, PatientGroup> = BTreeMap::new();
    for f in manifest.included_frames() {
        let video = manifest
            .video(&f.video_id)
            .ok_or_else(|| Error::data(format!("frame {} references unknown video", f.id())))?;
        let g = by_patient.entry(&video.patient).or_insert_with(|| PatientGroup {
            frames: Vec::new(),
            labels: BTreeSet::new(),
        });
        g.frames.push(f.id());
        g.labels.insert(video.label);
    }
    if by_patient.len() < 2 {
        return Err(Error::invalid(format!(
            "grouped split needs at least 2 patients with included frames, found {}",
            by_patient.len()
        )));
    }
    let groups: Vec<PatientGroup> = by_patient.into_values().collect();
    let total: usize = groups.iter().map(|g| g.frames.len()).sum();
    let target = spec.test_fraction * total as f64;
    let all_labels: BTreeSet<ClassLabel> = groups.iter().flat_map(|g| g.labels.iter().copied()).collect();

    let mut missing = BTreeSet::new();
    for attempt in 0..MAX_COVERAGE_RETRIES {
        let mut order: Vec<usize> = (0..groups.len()).collect();
        SplitMix64::keyed(spec.seed, &[u64::from(run_index), attempt]).shuffle(&mut order);

        let mut test_count = 0usize;
        let mut cut = 0;
        // At least one patient stays on each side.
        while cut < order.len() - 1 && (test_count as f64) < target - 1e-9 {
            test_count += groups[order[cut]].frames.len();
            cut += 1;
        }
        let (test_side, train_side) = order.split_at(cut);
        let train_labels: BTreeSet<ClassLabel> = train_side
            .iter()
            .flat_map(|&i| groups[i].labels.iter().copied())
            .collect();
        missing = all_labels.difference(&train_labels).copied().collect();
        if missing.is_empty() {
            let collect = |side: &[usize]| -> BTreeSet<FrameId> {
                side.iter().flat_map(|&i| groups[i].frames.iter().cloned()).collect()
            };
            return Ok(SplitAssignment {
                spec: *spec,
                run_index,
                train: collect(train_side),
                test: collect(test_side),
            });
        }
    }
    let names: Vec<_> = missing.iter().map(|l| l.key()).collect();
    Err(Error::data(format!(
        "grouped split could not place class {} in train after {MAX_COVERAGE_RETRIES} draws",
        names.join(", ")
    )))
}

pub fn split(manifest: &DatasetManifest, spec: &SplitSpec, run_index: u32) -> Result<SplitAssignment> {
    match spec.strategy {
        SplitStrategy::NaiveFrame => split_naive_frame(manifest, spec, run_index),
        SplitStrategy::GroupedPatient => split_grouped_patient(manifest, spec, run_index),
    }
}

/// One assignment per run, run `i` using `run_index = i`.
pub fn run_series(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<Vec<SplitAssignment>> {
    spec.validate()?;
    (0..spec.run_count).map(|i| split(manifest, spec, i)).collect()
}

// --- delimited text -------------------------------------------------------

const SPEC_PREFIX: &str = "# split";

fn spec_comment(spec: &SplitSpec) -> String {
    format!(
        "{SPEC_PREFIX} strategy={} test_fraction={:?} seed={} run_count={}\n",
        spec.strategy, spec.test_fraction, spec.seed, spec.run_count
    )
}

fn parse_spec_comment(line: &str) -> Result<SplitSpec> {
    let mut spec = SplitSpec::default();
    let rest = line
        .strip_prefix(SPEC_PREFIX)
        .ok_or_else(|| Error::invalid("split file lacks its '# split ...' header line"))?;
    for kv in rest.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("bad split header field {kv:?}")))?;
        let bad = || Error::invalid(format!("bad split header value {kv:?}"));
        match k {
            "strategy" => spec.strategy = v.parse()?,
            "test_fraction" => spec.test_fraction = v.parse().map_err(|_| bad())?,
            "seed" => spec.seed = v.parse().map_err(|_| bad())?,
            "run_count" => spec.run_count = v.parse().map_err(|_| bad())?,
            _ => return Err(Error::invalid(format!("unknown split header field {k:?}"))),
        }
    }
    Ok(spec)
}

/// Serializes assignments as CSV: a `# split ...` line carrying the spec,
/// then `frame_id,run_index,side` rows.
pub fn serialize_assignments(assignments: &[SplitAssignment]) -> String {
    let mut out = String::new();
    if let Some(first) = assignments.first() {
        out.push_str(&spec_comment(&first.spec));
    }
    out.push_str("frame_id,run_index,side\n");
    for a in assignments {
        let mut rows: Vec<(&FrameId, Side)> = a
            .train
            .iter()
            .map(|f| (f, Side::Train))
            .chain(a.test.iter().map(|f| (f, Side::Test)))
            .collect();
        rows.sort_by(|x, y| x.0.cmp(y.0));
        for (id, side) in rows {
            out.push_str(&csv_field(&id.to_string()));
            out.push_str(&format!(",{},{}\n", a.run_index, side.key()));
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn save_assignments(assignments: &[SplitAssignment], path: &Path) -> Result<()> {
    fs::write(path, serialize_assignments(assignments)).map_err(|e| Error::io(path, e))
}

pub fn load_assignments(path: &Path) -> Result<Vec<SplitAssignment>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or("");
    let spec = parse_spec_comment(first).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut runs: BTreeMap<u32, SplitAssignment> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let row = i + 3;
        let bad = |m: String| Error::data(format!("{}:{row}: {m}", path.display()));
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 columns, found {}", rec.len())));
        }
        let id: FrameId = rec[0].parse().map_err(|e: Error| bad(e.to_string()))?;
        let run: u32 = rec[1].parse().map_err(|_| bad(format!("bad run_index {:?}", &rec[1])))?;
        let a = runs.entry(run).or_insert_with(|| SplitAssignment {
            spec,
            run_index: run,
            train: BTreeSet::new(),
            test: BTreeSet::new(),
        });
        let inserted = match &rec[2] {
            "train" => !a.test.contains(&id) && a.train.insert(id.clone()),
            "test" => !a.train.contains(&id) && a.test.insert(id.clone()),
            other => return Err(bad(format!("side must be train or test, found {other:?}"))),
        };
        if !inserted {
            return Err(bad(format!("frame {id} listed twice in run {run}")));
        }
    }
    Ok(runs.into_values().collect())
}
