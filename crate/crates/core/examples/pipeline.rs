// SPDX-License-Identifier: Apache-2.0

// End-to-end run on a small synthetic task, comparing the three encodings.
// Pass a TOML config path to run that instead.

use bsnn::harness::{compare_encodings, DatasetConfig, DatasetSource, ExperimentConfig};
use bsnn::netgen::GridDims;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    run_config(None)
}

fn run_config(path: Option<String>) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match path {
        Some(p) => ExperimentConfig::load(p.as_ref())?,
        None => ExperimentConfig {
            dims: GridDims::new(7, 7, 2),
            runs_per_sample: 2,
            dataset: DatasetConfig {
                source: DatasetSource::Synthetic,
                classes: vec![0, 1, 2, 3],
                train_per_class: 6,
                test_per_class: 3,
                augment: true,
            },
            output_dir: std::env::temp_dir().join("bsnn-runs"),
            ..Default::default()
        },
    };
    let report = compare_encodings(&cfg)?;
    print!("{}", report.accuracy_csv());
    println!("{:.1} spikes per window; artifacts in {}", report.mean_window_spikes, report.run_dir.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_config(std::env::args().nth(1))
}
