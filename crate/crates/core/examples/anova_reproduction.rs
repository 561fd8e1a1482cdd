//! Two-factor ANOVA from cell summaries (leakage condition x model), then the
//! same analysis from raw per-run values.

use otopipe::rng::SplitMix64;
use otopipe::stats::{anova_from_raw, anova_from_summaries, load_summary_design};

fn main() -> otopipe::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/reference_summaries.csv");
    let design = load_summary_design(&path)?;
    println!("{} x {}, n = {}", design.row_levels.join("/"), design.col_levels.join("/"), design.replicates());
    print!("{}", anova_from_summaries(&design, 0.05)?.render_text());

    let mut rng = SplitMix64::new(1);
    let raw: Vec<Vec<Vec<f64>>> = [0.99, 0.83]
        .iter()
        .map(|&base| (0..3).map(|_| (0..11).map(|_| base + 0.03 * rng.next_gaussian()).collect()).collect())
        .collect();
    println!("\nsimulated 2 x 3 x 11:");
    print!("{}", anova_from_raw(&raw, 0.05)?.render_text());
    Ok(())
}
