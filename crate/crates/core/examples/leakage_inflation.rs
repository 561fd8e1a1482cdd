//! How much a frame-level split flatters a nearest-neighbour probe compared
//! with a patient-level split. Pass a seed as the first argument.

use otopipe::synth::{default_specs, inflation_experiment, SynthConfig};

fn main() -> otopipe::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let (naive, grouped) = default_specs(seed, 11);
    let r = inflation_experiment(&cfg, &naive, &grouped, 1)?;
    print!("{}", r.render_text());
    Ok(())
}
