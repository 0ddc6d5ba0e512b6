//! Generates a biased loan table and runs the before/after experiment.
//!
//! cargo run --release --example quickstart

use dualfair::harness::MedianRow;
use dualfair::{generate_synthetic, run_dualfair, ExperimentConfig, SensitiveSpec, SyntheticSpec};

fn main() {
    let spec = SensitiveSpec::hmda();
    let synth = SyntheticSpec::new(20_000, spec.clone(), 5)
        .with_label_bias(0.4)
        .with_skew_ratio(4.0);
    let data = generate_synthetic(&synth, 1).expect("valid synthetic spec");

    let cfg = ExperimentConfig {
        repeats: 3,
        master_seed: 42,
        ..ExperimentConfig::default()
    };
    let report = run_dualfair(&data, &cfg, &spec).expect("experiment runs");

    let show = |phase: &str, m: &MedianRow| {
        println!(
            "{phase:<6} AWI {:.3}  accuracy {:.3}  false alarm {:.3}",
            m.awi_reported, m.accuracy, m.false_alarm
        )
    };
    show("before", &report.median_before);
    show("after", &report.median_after);
}
