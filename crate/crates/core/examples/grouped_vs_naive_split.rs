//! The same manifest split two ways, then audited for leakage.

use otopipe::audit::{audit_split, gate, AuditOptions, GatePolicy};
use otopipe::splitting::{split, SplitSpec, SplitStrategy};
use otopipe::synth::{generate_in_memory, SynthConfig};

fn main() -> otopipe::Result<()> {
    let data = generate_in_memory(&SynthConfig {
        frames_per_video: 30,
        image_side: 32,
        ..SynthConfig::default()
    })?;
    let m = &data.manifest;

    for strategy in [SplitStrategy::NaiveFrame, SplitStrategy::GroupedPatient] {
        let a = split(m, &SplitSpec::new(strategy, 3), 0)?;
        let report = audit_split(m, &a, &AuditOptions::default(), None)?;
        let outcome = gate(&report, &GatePolicy::default());
        println!(
            "{strategy}: {} train / {} test, {} shared patients, contamination {:.1}%, gate {}",
            a.train.len(),
            a.test.len(),
            report.patient_overlap.len(),
            100.0 * report.contamination_rate,
            if outcome.passed { "pass" } else { "FAIL" }
        );
    }
    Ok(())
}
