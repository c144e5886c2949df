// SPDX-License-Identifier: Apache-2.0

// Resource model against the fitted scaling law for 2 to 5 layers.

use bsnn::elaborator::{max_neurons_for, scaling_estimate};
use bsnn::harness::{scaling_csv, sweep_scaling};
use bsnn::netgen::ConnectivityParams;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let rows = sweep_scaling(2..=5, &ConnectivityParams::default(), 1)?;
    print!("{}", scaling_csv(&rows));
    println!("law at 447 neurons: {} LEs", scaling_estimate(447));
    println!("largest network in 114480 LEs: {} neurons", max_neurons_for(114_480));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
