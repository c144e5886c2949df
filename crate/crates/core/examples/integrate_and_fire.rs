// SPDX-License-Identifier: Apache-2.0

// Gate-level neuron with C_M = 4 against its calibrated reference model.

use std::sync::Arc;

use bsnn::desim::{SimTime, Simulator};
use bsnn::neuroblocks::{build_neuron, calibrate_oracle, BlockConfig, SignedSpike};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = BlockConfig::default();
    let frag = build_neuron(4, 1, 1, &cfg)?;
    let oracle = calibrate_oracle(4, &cfg)?;
    println!("{} gates; fire latency {}", frag.gate_count(), oracle.timing.fire_latency);

    // + + - + + + +  : fires once the count returns to 4
    let train = [true, true, false, true, true, true, true];
    let mut sim = Simulator::new(Arc::new(frag.netlist.clone()))?;
    let mut events = Vec::new();
    for (k, &exc) in train.iter().enumerate() {
        let t = SimTime::ns(10 + 20 * k as u64);
        let port = frag.input(if exc { "exc0" } else { "inh0" });
        sim.schedule_pulse(port, t, cfg.tau_p() * 4)?;
        events.push(SignedSpike { time: t, excitatory: exc });
    }
    let gate = sim.run_until(SimTime::ns(200))?.probe("spike").ok_or("no probe")?.rising_edges();
    let model = oracle.run(&events)?;
    println!("gate {gate:?}\nmodel {model:?}");
    assert_eq!(gate, model);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
