use std::collections::BTreeSet;
use std::fs;

use otopipe::manifest::{FrameId, FrameStatus};
use otopipe::pipeline::{run_pipeline, trim, DiskFrames, PipelineConfig, QualityPolicy};
use otopipe::rng::SplitMix64;
use otopipe::synth::{generate, SynthConfig};
use proptest::prelude::*;

fn small_synth(seed: u64, frames: usize) -> SynthConfig {
    SynthConfig {
        classes: 2,
        patients_per_class: 2,
        videos_per_patient: 1,
        frames_per_video: frames,
        image_side: 16,
        seed,
        ..SynthConfig::default()
    }
}

fn kept(m: &otopipe::manifest::DatasetManifest) -> BTreeSet<FrameId> {
    m.included_frames().map(|f| f.id()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn frames_are_conserved_and_thresholds_are_monotone(
        seed in any::<u64>(),
        frames in 1usize..30,
        trim_fraction in 0.0f64..0.45,
        pct in 0.0f64..100.0,
        deletions in 0usize..6,
        crop in any::<bool>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let raw = generate(&small_synth(seed, frames), &dir.path().join("data")).unwrap();
        let mut rng = SplitMix64::new(seed);
        for _ in 0..deletions {
            let f = &raw.frames()[rng.below(raw.frames().len() as u64) as usize];
            let _ = fs::remove_file(&f.path);
        }
        let cfg = |lap: QualityPolicy, ent: QualityPolicy| PipelineConfig {
            trim_fraction,
            laplacian: lap,
            entropy: ent,
            crop_enabled: crop,
            fill: 0,
        };
        let run = |c: &PipelineConfig, name: &str| run_pipeline(&raw, c, &DiskFrames, &dir.path().join(name)).unwrap();

        let (m, report) = run(&cfg(QualityPolicy::Percentile { percentile: pct }, QualityPolicy::Percentile { percentile: pct }), "a");
        let totals = report.totals();
        prop_assert_eq!(totals.total(), raw.frames().len());
        for v in &report.videos {
            let n = raw.video(&v.video_id).unwrap().frame_count as usize;
            prop_assert_eq!(v.total(), n);
        }
        let missing = raw.frames().iter().filter(|f| !f.path.exists()).count();
        let unreadable = m.frames().iter().filter(|f| f.status == FrameStatus::Unreadable).count();
        prop_assert!(unreadable <= missing);

        // Raising an absolute threshold only ever removes frames.
        let mut prev: Option<BTreeSet<FrameId>> = None;
        for t in [0.0, 50.0, 200.0, 800.0, 5000.0] {
            let (m, _) = run(&cfg(QualityPolicy::Absolute { threshold: t }, QualityPolicy::Absolute { threshold: 0.0 }), "b");
            let k = kept(&m);
            if let Some(p) = &prev {
                prop_assert!(k.is_subset(p));
            }
            prev = Some(k);
        }
        let mut prev: Option<BTreeSet<FrameId>> = None;
        for q in [0.0, 25.0, 50.0, 75.0, 100.0] {
            let policy = QualityPolicy::Percentile { percentile: q };
            let (m, _) = run(&cfg(QualityPolicy::Absolute { threshold: 0.0 }, policy), "c");
            let k = kept(&m);
            if let Some(p) = &prev {
                prop_assert!(k.is_subset(p));
            }
            prev = Some(k);
        }
    }
}

#[test]
fn neutral_config_keeps_every_readable_frame() {
    let dir = tempfile::tempdir().unwrap();
    let raw = generate(&small_synth(3, 12), &dir.path().join("data")).unwrap();
    fs::remove_file(&raw.frames()[5].path).unwrap();
    let (m, report) = run_pipeline(&raw, &PipelineConfig::neutral(), &DiskFrames, &dir.path().join("o")).unwrap();
    let t = report.totals();
    assert_eq!(t.kept, raw.frames().len() - 1);
    assert_eq!(t.dropped_unreadable, 1);
    assert_eq!(m.frames()[5].status, FrameStatus::Unreadable);
}

#[test]
fn trimming_keeps_the_middle() {
    let idx: Vec<u32> = (0..100).collect();
    assert_eq!(trim(&idx, 0.10), (10..90).collect::<Vec<_>>());
    assert_eq!(trim(&idx, 0.0), idx);
    assert_eq!(trim(&[7u32], 0.2), vec![7]);
}

#[test]
fn rerunning_the_pipeline_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let raw = generate(&small_synth(9, 15), &dir.path().join("data")).unwrap();
    let out = dir.path().join("o");
    let (a, _) = run_pipeline(&raw, &PipelineConfig::default(), &DiskFrames, &out).unwrap();
    let (b, _) = run_pipeline(&raw, &PipelineConfig::default(), &DiskFrames, &out).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unwritable_output_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let raw = generate(&small_synth(1, 4), &dir.path().join("data")).unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    assert!(run_pipeline(&raw, &PipelineConfig::default(), &DiskFrames, &blocker.join("sub")).is_err());
}
