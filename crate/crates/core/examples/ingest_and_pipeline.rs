//! Writes a small synthetic frame tree, ingests it back from disk and runs
//! the trim / score / filter / crop pipeline over it.

use otopipe::manifest::{ingest_tree, IngestOptions};
use otopipe::pipeline::{run_pipeline, DiskFrames, PipelineConfig};
use otopipe::synth::{generate, SynthConfig, DIAGNOSIS_FILE, FRAMES_DIR};

fn main() -> otopipe::Result<()> {
    let dir = std::env::temp_dir().join(format!("otopipe-example-{}", std::process::id()));
    let cfg = SynthConfig {
        patients_per_class: 2,
        videos_per_patient: 1,
        frames_per_video: 20,
        image_side: 48,
        ..SynthConfig::default()
    };
    generate(&cfg, &dir)?;

    let (raw, report) = ingest_tree(&dir.join(FRAMES_DIR), &dir.join(DIAGNOSIS_FILE), &IngestOptions::default())?;
    println!("ingested {} videos, {} frames", raw.videos().len(), raw.frames().len());
    print!("{}", report.render());

    let (_, counts) = run_pipeline(&raw, &PipelineConfig::default(), &DiskFrames, &dir.join("processed"))?;
    print!("{}", counts.render_text());

    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
