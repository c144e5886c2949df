// SPDX-License-Identifier: Apache-2.0

// Samples the default 7x7x4 reservoir and saves it with its adjacency
// matrices.

use bsnn::elaborator::kind_histogram;
use bsnn::netgen::{adjacency_matrices, generate, ConnectivityParams, GridDims, NetworkSpec};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let spec = generate(GridDims::default(), &ConnectivityParams::default(), Some(7), 49)?;
    for (kind, n) in kind_histogram(&spec) {
        println!("{kind:?}: {n}");
    }
    println!("{} synapses", spec.synapses.len());

    let dir = std::env::temp_dir().join("bsnn-reservoir");
    std::fs::create_dir_all(&dir)?;
    spec.save(&dir.join("network.json"))?;
    let adj = adjacency_matrices(&spec);
    std::fs::write(dir.join("delay_ps.csv"), adj.delay_csv())?;
    std::fs::write(dir.join("weight.csv"), adj.weight_csv())?;
    assert_eq!(NetworkSpec::load(&dir.join("network.json"))?, spec);
    println!("written to {}", dir.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
