// SPDX-License-Identifier: Apache-2.0

// Elaborates a two-layer reservoir to gates, emits structural Verilog and
// prints the logic-element estimate.

use bsnn::elaborator::{elaborate, emit_hdl, estimate_resources};
use bsnn::netgen::{generate, ConnectivityParams, GridDims};
use bsnn::neuroblocks::BlockConfig;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let spec = generate(GridDims::new(7, 7, 2), &ConnectivityParams::default(), Some(1), 49)?;
    let net = elaborate(&spec, &BlockConfig::default())?;
    let hdl = emit_hdl(&net.netlist);
    let path = std::env::temp_dir().join("bsnn_top.v");
    std::fs::write(&path, &hdl)?;
    println!("{} gates -> {} ({} lines)", net.netlist.gates.len(), path.display(), hdl.lines().count());
    print!("{}", estimate_resources(&spec, true).to_csv());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
