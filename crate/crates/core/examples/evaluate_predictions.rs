//! Metrics for a noisy four-class classifier over three runs.

use otopipe::evaluation::{evaluate_all, summarize_runs, PredictionRow, PredictionSet};
use otopipe::manifest::{ClassLabel, FrameId};
use otopipe::rng::SplitMix64;

fn main() -> otopipe::Result<()> {
    let mut rng = SplitMix64::new(12);
    let mut rows = Vec::new();
    for run in 0..3 {
        for i in 0..200u32 {
            let truth = ClassLabel::ALL[(i % 4) as usize];
            // Right about 80% of the time; scores put most mass on the guess.
            let guess = if rng.below(5) == 0 { ClassLabel::ALL[rng.below(4) as usize] } else { truth };
            let mut scores = [0.1; 4];
            scores[guess.ordinal()] = 0.7;
            rows.push(PredictionRow {
                frame_id: FrameId::new(format!("v{}", i % 25), i),
                run_index: run,
                true_label: truth,
                predicted: guess,
                scores,
            });
        }
    }
    let reports = evaluate_all(&PredictionSet::new(rows))?;
    print!("{}", reports[0].render_text());
    println!("\nacross {} runs:", reports.len());
    print!("{}", summarize_runs(&reports)?.render_text());
    Ok(())
}
