// SPDX-License-Identifier: Apache-2.0

//! Network flattening, structural Verilog emission and logic-element
//! accounting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::desim::{Driver, GateKind, NetId, Netlist};
use crate::netgen::{NetgenError, NetworkSpec, NeuronKind};
use crate::neuroblocks::{
    delay_line_into, neuron_into_net, weighted_synapse_into, BlockConfig, BlockError, Sign,
    BRANCH_SPACING_PAIRS, TAU_P,
};

#[derive(Debug, Error)]
pub enum ElabError {
    #[error(transparent)]
    Spec(#[from] NetgenError),
    #[error(transparent)]
    Block(#[from] BlockError),
}

/// A reservoir flattened to gates.
#[derive(Debug, Clone)]
pub struct ElaboratedNetwork {
    pub netlist: Netlist,
    /// Stimulus port per input channel.
    pub input_ports: Vec<NetId>,
    /// Output spike net per neuron, also probed as `n{id}`.
    pub spikes: Vec<NetId>,
}

pub fn probe_label(neuron: usize) -> String {
    format!("n{neuron}")
}

/// One gate-level neuron per spec neuron. Each presynaptic neuron drives a
/// single tapped delay line; every synapse taps it at its delay, passes a
/// weight structure and enters the target's excitatory or inhibitory
/// dendrite.
pub fn elaborate(spec: &NetworkSpec, cfg: &BlockConfig) -> Result<ElaboratedNetwork, ElabError> {
    spec.validate()?;
    let tau = cfg.tau_p();
    let mut nl = Netlist::new();
    let n = spec.len();

    let input_ports: Vec<NetId> = (0..spec.input_map.len())
        .map(|ch| nl.add_stimulus_port(format!("in{ch}")))
        .collect();
    let spikes: Vec<NetId> = (0..n).map(|i| nl.add_net(format!("n{i}_spike"))).collect();
    let groups: Vec<u32> = (0..n).map(|i| nl.begin_group(format!("neuron_{i}"))).collect();

    let mut exc_in: Vec<Vec<NetId>> = vec![Vec::new(); n];
    let mut inh_in: Vec<Vec<NetId>> = vec![Vec::new(); n];
    for (ch, &r) in spec.input_map.iter().enumerate() {
        exc_in[r as usize].push(input_ports[ch]);
    }

    let mut by_pre: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (k, s) in spec.synapses.iter().enumerate() {
        by_pre.entry(s.pre).or_default().push(k);
    }
    for (&pre, syns) in &by_pre {
        nl.set_group(groups[pre as usize]);
        let mut taps: BTreeMap<u64, NetId> = BTreeMap::new();
        let delays: BTreeSet<u64> = syns
            .iter()
            .map(|&k| spec.synapses[k].delay.as_ps() / TAU_P.as_ps())
            .collect();
        let (mut at, mut net) = (0u64, spikes[pre as usize]);
        for d in delays {
            net = delay_line_into(&mut nl, net, (d - at) as u32, cfg);
            at = d;
            taps.insert(d, net);
        }
        for &k in syns {
            let s = &spec.synapses[k];
            nl.set_group(groups[s.post as usize]);
            let tap = taps[&(s.delay.as_ps() / TAU_P.as_ps())];
            let w = weighted_synapse_into(&mut nl, tap, s.weight, cfg, &format!("s{}_{}", s.pre, s.post))?;
            match s.sign {
                Sign::Excitatory => exc_in[s.post as usize].push(w),
                Sign::Inhibitory => inh_in[s.post as usize].push(w),
            }
        }
    }
    debug_assert_eq!(tau, cfg.tau_p());

    for (i, neuron) in spec.neurons.iter().enumerate() {
        nl.set_group(groups[i]);
        neuron_into_net(
            &mut nl,
            &exc_in[i],
            &inh_in[i],
            neuron.kind.capacity(),
            cfg,
            &format!("n{i}"),
            spikes[i],
        )?;
        nl.add_probe(spikes[i], probe_label(i));
    }
    nl.set_group(0);
    Ok(ElaboratedNetwork {
        netlist: nl,
        input_ports,
        spikes,
    })
}

/// Logic elements of a lone neuron with a 4-bit counter.
pub const NEURON_LES: u64 = 22;
/// One inverter per logic element.
pub const LES_PER_PAIR: u64 = 2;
/// Ethernet 4730 + time tagger 2862 + spike generator 676 + control 376.
pub const INFRASTRUCTURE_LES: u64 = 4730 + 2862 + 676 + 376;
/// 145 M9K blocks of 8 Kib payload.
pub const INFRASTRUCTURE_MEMORY_BITS: u64 = 145 * 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResourceReport {
    pub neurons: u64,
    pub delay_lines: u64,
    pub synapses: u64,
    pub overhead: u64,
    pub logic_elements: u64,
    pub memory_bits: u64,
}

impl ResourceReport {
    pub fn to_csv(&self) -> String {
        format!(
            "category,logic_elements\nneurons,{}\ndelay_lines,{}\nsynapses,{}\noverhead,{}\ntotal,{}\nmemory_bits,{}\n",
            self.neurons, self.delay_lines, self.synapses, self.overhead, self.logic_elements, self.memory_bits
        )
    }
}

/// LEs for a cascade merging `fan_in` signals with 4-input LUTs.
pub fn wide_gate_les(fan_in: u64) -> u64 {
    fan_in.saturating_sub(1).div_ceil(3)
}

/// Greedy 4-LUT accounting of the structures [`elaborate`] would build.
pub fn estimate_resources(spec: &NetworkSpec, with_infrastructure: bool) -> ResourceReport {
    let tau = TAU_P.as_ps();
    let mut max_delay: BTreeMap<u32, u64> = BTreeMap::new();
    let mut exc_fan = vec![0u64; spec.len()];
    let mut inh_fan = vec![0u64; spec.len()];
    for &r in &spec.input_map {
        exc_fan[r as usize] += 1;
    }
    let mut synapses = 0;
    for s in &spec.synapses {
        let d = max_delay.entry(s.pre).or_default();
        *d = (*d).max(s.delay.as_ps() / tau);
        let w = u64::from(s.weight);
        synapses += LES_PER_PAIR * u64::from(BRANCH_SPACING_PAIRS) * (w - 1) + wide_gate_les(w);
        match s.sign {
            Sign::Excitatory => exc_fan[s.post as usize] += 1,
            Sign::Inhibitory => inh_fan[s.post as usize] += 1,
        }
    }
    synapses += exc_fan.iter().chain(&inh_fan).map(|&f| wide_gate_les(f)).sum::<u64>();
    let delay_lines = LES_PER_PAIR * max_delay.values().sum::<u64>();
    let neurons = NEURON_LES * spec.len() as u64;
    let (overhead, memory_bits) = if with_infrastructure {
        (INFRASTRUCTURE_LES, INFRASTRUCTURE_MEMORY_BITS)
    } else {
        (0, 0)
    };
    ResourceReport {
        neurons,
        delay_lines,
        synapses,
        overhead,
        logic_elements: neurons + delay_lines + synapses + overhead,
        memory_bits,
    }
}

/// Empirical fit `15.40 * N^1.46` of synthesized totals, rounded.
pub fn scaling_estimate(neurons: u64) -> u64 {
    (15.40 * (neurons as f64).powf(1.46)).round() as u64
}

/// Largest network whose scaling estimate fits in `budget` LEs.
pub fn max_neurons_for(budget: u64) -> u64 {
    let mut n = 1;
    while scaling_estimate(n + 1) <= budget {
        n += 1;
    }
    n
}

/// Counts neurons per kind; used by reports.
pub fn kind_histogram(spec: &NetworkSpec) -> [(NeuronKind, usize); 3] {
    [
        NeuronKind::Receptive,
        NeuronKind::Excitatory,
        NeuronKind::Inhibitory,
    ]
    .map(|k| (k, spec.count(k)))
}

fn wire(net: NetId) -> String {
    format!("w{}", net.0)
}

fn pin_names(kind: GateKind) -> &'static [&'static str] {
    match kind {
        GateKind::Inv | GateKind::Buf => &["a"],
        GateKind::Xor2 | GateKind::Or2 | GateKind::And2 => &["a", "b"],
        GateKind::Dff => &["d", "clk", "clr"],
        GateKind::SrLatch => &["s", "r"],
        GateKind::TLatch => &["t"],
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

/// Structural Verilog: one module per gate group plus a top module wiring
/// them together, one `bsnn_*` cell instance per gate.
pub fn emit_hdl(nl: &Netlist) -> String {
    let mut out = String::new();
    out.push_str("// bsnn structural netlist\n");
    out.push_str("// cells: bsnn_inv bsnn_buf bsnn_xor2 bsnn_or2 bsnn_and2 bsnn_dff bsnn_srlatch bsnn_tlatch\n");
    out.push_str("// every cell instance carries (* keep *) so synthesis leaves the asynchronous logic intact\n");
    if nl.gates.is_empty() {
        return out;
    }

    let ng = nl.groups.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ng];
    for (i, g) in nl.gates.iter().enumerate() {
        members[g.group as usize].push(i);
    }
    // which groups read each net
    let mut readers: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); nl.nets.len()];
    for g in &nl.gates {
        for i in &g.inputs {
            readers[i.index()].insert(g.group);
        }
    }
    let driver_group = |n: NetId| match nl.nets[n.index()].driver {
        Some(Driver::Gate(gid)) => Some(nl.gates[gid.index()].group),
        _ => None,
    };
    let probed: BTreeSet<NetId> = nl.probes.iter().map(|p| p.net).collect();

    let mut sub_ports: Vec<(Vec<NetId>, Vec<NetId>)> = vec![(Vec::new(), Vec::new()); ng];
    for (gi, gates) in members.iter().enumerate().skip(1) {
        if gates.is_empty() {
            continue;
        }
        let gi = gi as u32;
        let mut ins = BTreeSet::new();
        let mut outs = BTreeSet::new();
        for &k in gates {
            let g = &nl.gates[k];
            for &i in &g.inputs {
                if driver_group(i) != Some(gi) {
                    ins.insert(i);
                }
            }
            let o = g.output;
            if probed.contains(&o) || readers[o.index()].iter().any(|&r| r != gi) {
                outs.insert(o);
            }
        }
        sub_ports[gi as usize] = (ins.into_iter().collect(), outs.into_iter().collect());
    }

    let emit_gate = |out: &mut String, k: usize| {
        let g = &nl.gates[k];
        let mut pins = vec![format!(".y({})", wire(g.output))];
        for (name, net) in pin_names(g.kind).iter().zip(&g.inputs) {
            pins.push(format!(".{name}({})", wire(*net)));
        }
        let _ = writeln!(
            out,
            "  bsnn_{} #(.DELAY_PS({}), .REJECT_PS({})) g{k} ({});",
            g.kind.mnemonic().to_ascii_lowercase(),
            g.delay.as_ps(),
            g.reject_window.as_ps(),
            pins.join(", ")
        );
    };

    for (gi, gates) in members.iter().enumerate().skip(1) {
        if gates.is_empty() {
            continue;
        }
        let (ins, outs) = &sub_ports[gi];
        let _ = writeln!(out, "\nmodule {}_{gi} (", sanitize(&nl.groups[gi]));
        let mut decl: Vec<String> = ins.iter().map(|n| format!("  input wire {}", wire(*n))).collect();
        decl.extend(outs.iter().map(|n| format!("  output wire {}", wire(*n))));
        out.push_str(&decl.join(",\n"));
        out.push_str("\n);\n");
        let ported: BTreeSet<NetId> = ins.iter().chain(outs).copied().collect();
        for &k in gates {
            let o = nl.gates[k].output;
            if !ported.contains(&o) {
                let _ = writeln!(out, "  wire {}; // {}", wire(o), nl.net_name(o));
            }
        }
        for &k in gates {
            emit_gate(&mut out, k);
        }
        out.push_str("endmodule\n");
    }

    let _ = writeln!(out, "\nmodule bsnn_top (");
    let mut decl: Vec<String> = nl
        .stimuli
        .iter()
        .map(|n| format!("  input wire {} /* {} */", wire(*n), nl.net_name(*n)))
        .collect();
    decl.extend(
        nl.probes
            .iter()
            .map(|p| format!("  output wire {} /* {} */", sanitize(&p.label), nl.net_name(p.net))),
    );
    out.push_str(&decl.join(",\n"));
    out.push_str("\n);\n");
    let stim: BTreeSet<NetId> = nl.stimuli.iter().copied().collect();
    for (i, net) in nl.nets.iter().enumerate() {
        let id = NetId(i as u32);
        if stim.contains(&id) {
            continue;
        }
        let top_visible = match net.driver {
            Some(Driver::Tie0) => true,
            Some(Driver::Gate(g)) => {
                let grp = nl.gates[g.index()].group as usize;
                grp == 0 || sub_ports[grp].1.contains(&id)
            }
            _ => false,
        };
        if top_visible {
            let _ = writeln!(out, "  wire {}; // {}", wire(id), net.name);
        }
    }
    for (i, net) in nl.nets.iter().enumerate() {
        if net.driver == Some(Driver::Tie0) {
            let _ = writeln!(out, "  assign {} = 1'b0;", wire(NetId(i as u32)));
        }
    }
    for &k in &members[0] {
        emit_gate(&mut out, k);
    }
    for (gi, gates) in members.iter().enumerate().skip(1) {
        if gates.is_empty() {
            continue;
        }
        let (ins, outs) = &sub_ports[gi];
        let pins: Vec<String> = ins
            .iter()
            .chain(outs)
            .map(|n| format!(".{0}({0})", wire(*n)))
            .collect();
        let name = sanitize(&nl.groups[gi]);
        let _ = writeln!(out, "  {name}_{gi} u_{gi} ({});", pins.join(", "));
    }
    for p in &nl.probes {
        let _ = writeln!(out, "  assign {} = {};", sanitize(&p.label), wire(p.net));
    }
    out.push_str("endmodule\n");
    out
}
