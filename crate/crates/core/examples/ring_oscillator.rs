// SPDX-License-Identifier: Apache-2.0

// A three-inverter ring: the smallest autonomous Boolean network. Prints
// its period and writes a VCD.

use std::sync::Arc;

use bsnn::desim::{GateKind, Netlist, SimTime, Simulator, Timing};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let mut nl = Netlist::new();
    let nets: Vec<_> = (0..3).map(|i| nl.add_net(format!("r{i}"))).collect();
    for i in 0..3 {
        nl.gate_into(GateKind::Inv, &[nets[i]], nets[(i + 1) % 3], Timing::default());
    }
    nl.add_probe(nets[0], "r0");
    let trace = Simulator::new(Arc::new(nl))?.run_until(SimTime::ns(20))?;
    let edges = trace.probe("r0").ok_or("no probe")?.rising_edges();
    let period = edges[2] - edges[1];
    println!("{} rising edges, period {period}", edges.len());
    assert_eq!(period, SimTime(2 * 3 * 280));
    std::fs::write(std::env::temp_dir().join("ring.vcd"), trace.to_vcd())?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
