// SPDX-License-Identifier: Apache-2.0

//! Gate-level builders for the Boolean neuron and its parts.
//!
//! Every builder comes in two flavours: an `*_into` function that appends
//! gates to an existing [`Netlist`] (used by the elaborator) and a `build_*`
//! function that returns a standalone [`Fragment`] with stimulus ports and
//! probes.
//!
//! All embedded delays are multiples of the inverter-pair delay `tau_p`
//! (two gate delays, 560 ps nominal).

mod oracle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::desim::{GateKind, NetId, Netlist, SimError, SimTime, Timing, GATE_DELAY};

pub use oracle::{
    calibrate_oracle, expand_weighted, oracle_step, BehavioralNeuron, BehavioralNeuronState,
    OracleTiming, SignedSpike,
};

/// Nominal inverter-pair delay.
pub const TAU_P: SimTime = SimTime(2 * GATE_DELAY.0);

/// Branch spacing of weighted synapses, in inverter pairs.
pub const BRANCH_SPACING_PAIRS: u32 = 5;

/// Extra delay between the exc/inh merge and the counter clock, in pairs.
pub const ACM_GUARD_PAIRS: u32 = 2;

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("delay {delay} is not a positive multiple of tau_p = {tau_p}")]
    DelayNotMultiple { delay: SimTime, tau_p: SimTime },
    #[error("oracle events out of order: {at} after {last}")]
    OutOfOrder { at: SimTime, last: SimTime },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// How delay lines are realised in the netlist.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DelayModel {
    /// Chains of NOT gates, two per inverter pair.
    #[default]
    InverterChain,
    /// One `Buf` element per line segment carrying the whole segment delay.
    /// Same inertial window as a single inverter, far fewer events.
    Lumped,
}

/// Shared construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub timing: Timing,
    pub delay_model: DelayModel,
    /// Optional absolute refractory period, in inverter pairs. Off by default.
    pub refractory_pairs: Option<u32>,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig {
            timing: Timing::default(),
            delay_model: DelayModel::InverterChain,
            refractory_pairs: None,
        }
    }
}

impl BlockConfig {
    pub fn tau_p(&self) -> SimTime {
        self.timing.delay * 2
    }

    pub fn lumped() -> Self {
        BlockConfig {
            delay_model: DelayModel::Lumped,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseGeneratorSpec {
    pub line_a_pairs: u32,
    pub line_b_pairs: u32,
}

impl Default for PulseGeneratorSpec {
    /// Width `4 * tau_p` = 2,240 ps.
    fn default() -> Self {
        PulseGeneratorSpec {
            line_a_pairs: 0,
            line_b_pairs: 4,
        }
    }
}

impl PulseGeneratorSpec {
    pub fn validate(&self) -> Result<(), BlockError> {
        if self.line_b_pairs <= self.line_a_pairs {
            return Err(BlockError::InvalidSpec(format!(
                "line_b_pairs ({}) must exceed line_a_pairs ({})",
                self.line_b_pairs, self.line_a_pairs
            )));
        }
        Ok(())
    }

    pub fn width(&self, tau_p: SimTime) -> SimTime {
        tau_p * u64::from(self.line_b_pairs - self.line_a_pairs)
    }
}

/// Bidirectional counter whose capacity is the firing threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcmSpec {
    pub capacity: u32,
}

impl AcmSpec {
    pub fn new(capacity: u32) -> Result<Self, BlockError> {
        if capacity == 0 {
            return Err(BlockError::InvalidSpec("counter capacity must be >= 1".into()));
        }
        Ok(AcmSpec { capacity })
    }

    /// Number of storage bits, `ceil(log2(C_M + 1))`.
    pub fn latch_count(&self) -> usize {
        (u32::BITS - self.capacity.leading_zeros()) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Excitatory,
    Inhibitory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynapseWeightSpec {
    pub weight: u32,
    pub sign: Sign,
}

impl SynapseWeightSpec {
    pub fn branch_spacing(tau_p: SimTime) -> SimTime {
        tau_p * u64::from(BRANCH_SPACING_PAIRS)
    }
}

/// XOR is the real dendrite; OR is kept as a control build that shows
/// overlapping pulses merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combiner {
    Xor,
    Or,
}

/// A standalone circuit with named ports.
#[derive(Debug, Clone)]
pub struct Fragment {
    pub netlist: Netlist,
    pub inputs: Vec<(String, NetId)>,
    pub outputs: Vec<(String, NetId)>,
}

impl Fragment {
    pub fn input(&self, name: &str) -> NetId {
        port(&self.inputs, name)
    }

    pub fn output(&self, name: &str) -> NetId {
        port(&self.outputs, name)
    }

    pub fn gate_count(&self) -> usize {
        self.netlist.gates.len()
    }

    /// Structural HDL dump of the fragment.
    pub fn to_hdl(&self) -> String {
        crate::elaborator::emit_hdl(&self.netlist)
    }
}

fn port(ports: &[(String, NetId)], name: &str) -> NetId {
    ports
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, id)| *id)
        .unwrap_or_else(|| panic!("no port named `{name}`"))
}

/// Appends a delay of `pairs` inverter pairs and returns the delayed net.
pub fn delay_line_into(nl: &mut Netlist, input: NetId, pairs: u32, cfg: &BlockConfig) -> NetId {
    if pairs == 0 {
        return input;
    }
    let base = nl.net_name(input).to_string();
    match cfg.delay_model {
        DelayModel::InverterChain => {
            let mut x = input;
            for i in 0..2 * pairs {
                x = nl.gate(GateKind::Inv, &[x], cfg.timing, &format!("{base}_d{i}"));
            }
            x
        }
        DelayModel::Lumped => {
            let t = Timing {
                delay: cfg.timing.delay * u64::from(2 * pairs),
                reject: cfg.timing.reject,
            };
            nl.gate(GateKind::Buf, &[input], t, &format!("{base}_d{pairs}p"))
        }
    }
}

/// Toggle flip-flop feeding two delay lines recombined by XOR. Every rising
/// edge on `clk` yields one pulse of `(line_b - line_a) * tau_p`.
pub fn pulse_generator_into(
    nl: &mut Netlist,
    clk: NetId,
    spec: &PulseGeneratorSpec,
    cfg: &BlockConfig,
    out: Option<NetId>,
) -> Result<NetId, BlockError> {
    spec.validate()?;
    let base = nl.net_name(clk).to_string();
    let tie0 = nl.tie0();
    let q = nl.add_net(format!("{base}_pg_q"));
    let q_bar = nl.gate(GateKind::Inv, &[q], cfg.timing, &format!("{base}_pg_qn"));
    nl.gate_into(GateKind::Dff, &[q_bar, clk, tie0], q, cfg.timing);
    let a = delay_line_into(nl, q, spec.line_a_pairs, cfg);
    let b = delay_line_into(nl, q, spec.line_b_pairs, cfg);
    let out = out.unwrap_or_else(|| nl.add_net(format!("{base}_pg")));
    nl.gate_into(GateKind::Xor2, &[a, b], out, cfg.timing);
    Ok(out)
}

/// Balanced tree of two-input gates. No inputs gives the constant-0 net and
/// a single input is passed through.
pub fn dendrite_into(
    nl: &mut Netlist,
    inputs: &[NetId],
    combiner: Combiner,
    cfg: &BlockConfig,
    name: &str,
) -> NetId {
    let kind = match combiner {
        Combiner::Xor => GateKind::Xor2,
        Combiner::Or => GateKind::Or2,
    };
    match inputs.len() {
        0 => nl.tie0(),
        1 => inputs[0],
        _ => {
            let mut level: Vec<NetId> = inputs.to_vec();
            let mut depth = 0;
            while level.len() > 1 {
                let mut next = Vec::with_capacity(level.len().div_ceil(2));
                for (i, pair) in level.chunks(2).enumerate() {
                    if let [a, b] = pair {
                        next.push(nl.gate(kind, &[*a, *b], cfg.timing, &format!("{name}_l{depth}_{i}")));
                    } else {
                        next.push(pair[0]);
                    }
                }
                level = next;
                depth += 1;
            }
            level[0]
        }
    }
}

/// Splits `input` into `weight` taps spaced `5 * tau_p` apart and recombines
/// them with XOR, so one input pulse yields `weight` output pulses.
pub fn weighted_synapse_into(
    nl: &mut Netlist,
    input: NetId,
    weight: u32,
    cfg: &BlockConfig,
    name: &str,
) -> Result<NetId, BlockError> {
    if weight == 0 {
        return Err(BlockError::InvalidSpec("synapse weight must be >= 1".into()));
    }
    let mut taps = vec![input];
    let mut x = input;
    for _ in 1..weight {
        x = delay_line_into(nl, x, BRANCH_SPACING_PAIRS, cfg);
        taps.push(x);
    }
    Ok(dendrite_into(nl, &taps, Combiner::Xor, cfg, name))
}

/// Nets of one asynchronous counting module.
#[derive(Debug, Clone)]
pub struct AcmPorts {
    /// Guarded count trigger (the counter clock).
    pub clock: NetId,
    /// Mode latch: 1 counts up, 0 counts down.
    pub mode: NetId,
    pub nonzero: NetId,
    /// Count bits, least significant first.
    pub bits: Vec<NetId>,
    /// High while the count equals the capacity.
    pub full: NetId,
}

/// Up/down counter of `ceil(log2(C_M+1))` toggle cells.
///
/// Excitatory and inhibitory pulses set or reset the mode latch and are
/// merged by XOR into a single count trigger, delayed by two inverter pairs
/// so the mode settles first. Decrements are gated by a wide-OR zero
/// detector. `clear` holds every cell at zero and masks the clock.
#[allow(clippy::too_many_arguments)]
pub fn acm_into(
    nl: &mut Netlist,
    exc: NetId,
    inh: NetId,
    clear: NetId,
    spec: &AcmSpec,
    cfg: &BlockConfig,
    full_out: Option<NetId>,
    name: &str,
) -> AcmPorts {
    let t = cfg.timing;
    let n = spec.latch_count();
    let full_bits: Vec<usize> = (0..n).filter(|i| spec.capacity >> i & 1 == 1).collect();

    let bits: Vec<NetId> = (0..n)
        .map(|i| match full_out {
            Some(f) if full_bits == [i] => f,
            _ => nl.add_net(format!("{name}_q{i}")),
        })
        .collect();

    let mode = nl.gate(GateKind::SrLatch, &[exc, inh], t, &format!("{name}_mode"));
    let mode_n = nl.gate(GateKind::Inv, &[mode], t, &format!("{name}_mode_n"));
    let merged = nl.gate(GateKind::Xor2, &[exc, inh], t, &format!("{name}_trig"));
    let clock = delay_line_into(nl, merged, ACM_GUARD_PAIRS, cfg);

    let nonzero = dendrite_into(nl, &bits, Combiner::Or, cfg, &format!("{name}_nz"));
    let inv_bits: Vec<NetId> = bits
        .iter()
        .enumerate()
        .map(|(i, b)| nl.gate(GateKind::Inv, &[*b], t, &format!("{name}_qn{i}")))
        .collect();

    let mut up_en: Option<NetId> = None; // None = constant 1
    let mut dn_en = nonzero;
    for i in 0..n {
        let d_up = match up_en {
            None => inv_bits[i],
            Some(en) => nl.gate(GateKind::Xor2, &[bits[i], en], t, &format!("{name}_dup{i}")),
        };
        let d_dn = nl.gate(GateKind::Xor2, &[bits[i], dn_en], t, &format!("{name}_ddn{i}"));
        let a = nl.gate(GateKind::And2, &[mode, d_up], t, &format!("{name}_mu{i}"));
        let b = nl.gate(GateKind::And2, &[mode_n, d_dn], t, &format!("{name}_md{i}"));
        let d = nl.gate(GateKind::Or2, &[a, b], t, &format!("{name}_d{i}"));
        nl.gate_into(GateKind::Dff, &[d, clock, clear], bits[i], t);
        if i + 1 < n {
            up_en = Some(match up_en {
                None => bits[i],
                Some(en) => nl.gate(GateKind::And2, &[en, bits[i]], t, &format!("{name}_ue{}", i + 1)),
            });
            dn_en = nl.gate(
                GateKind::And2,
                &[dn_en, inv_bits[i]],
                t,
                &format!("{name}_de{}", i + 1),
            );
        }
    }

    // count <= C_M, so "all bits of C_M set" means count == C_M
    let full = match (full_bits.as_slice(), full_out) {
        ([i], _) => bits[*i],
        (fb, out) => {
            let mut acc = bits[fb[0]];
            for (k, &i) in fb[1..].iter().enumerate() {
                let last = k + 2 == fb.len();
                acc = match (last, out) {
                    (true, Some(o)) => {
                        nl.gate_into(GateKind::And2, &[acc, bits[i]], o, t);
                        o
                    }
                    _ => nl.gate(GateKind::And2, &[acc, bits[i]], t, &format!("{name}_full{k}")),
                };
            }
            acc
        }
    };

    AcmPorts {
        clock,
        mode,
        nonzero,
        bits,
        full,
    }
}

/// Nets of one gate-level neuron.
#[derive(Debug, Clone)]
pub struct NeuronPorts {
    pub spike: NetId,
    pub exc: NetId,
    pub inh: NetId,
    pub clear: NetId,
    pub acm: AcmPorts,
}

/// Dendrites, counter and output pulse generator. The output spike clears
/// the counter and blocks counting while it lasts.
pub fn neuron_into(
    nl: &mut Netlist,
    exc_inputs: &[NetId],
    inh_inputs: &[NetId],
    capacity: u32,
    cfg: &BlockConfig,
    name: &str,
) -> Result<NeuronPorts, BlockError> {
    let spike = nl.add_net(format!("{name}_spike"));
    neuron_into_net(nl, exc_inputs, inh_inputs, capacity, cfg, name, spike)
}

/// [`neuron_into`] driving a pre-allocated, undriven `spike` net, so that
/// recurrent connections can be wired before the neuron exists.
pub fn neuron_into_net(
    nl: &mut Netlist,
    exc_inputs: &[NetId],
    inh_inputs: &[NetId],
    capacity: u32,
    cfg: &BlockConfig,
    name: &str,
    spike: NetId,
) -> Result<NeuronPorts, BlockError> {
    let spec = AcmSpec::new(capacity)?;
    let exc = dendrite_into(nl, exc_inputs, Combiner::Xor, cfg, &format!("{name}_exc"));
    let inh = dendrite_into(nl, inh_inputs, Combiner::Xor, cfg, &format!("{name}_inh"));
    let full = nl.add_net(format!("{name}_full"));
    pulse_generator_into(nl, full, &PulseGeneratorSpec::default(), cfg, Some(spike))?;
    let clear = match cfg.refractory_pairs {
        None | Some(0) => spike,
        Some(r) => {
            let spec = PulseGeneratorSpec {
                line_a_pairs: 0,
                line_b_pairs: r,
            };
            let refr = pulse_generator_into(nl, spike, &spec, cfg, None)?;
            nl.gate(GateKind::Or2, &[spike, refr], cfg.timing, &format!("{name}_clr"))
        }
    };
    let acm = acm_into(nl, exc, inh, clear, &spec, cfg, Some(full), name);
    Ok(NeuronPorts {
        spike,
        exc,
        inh,
        clear,
        acm,
    })
}

pub fn build_pulse_generator(
    spec: PulseGeneratorSpec,
    cfg: &BlockConfig,
) -> Result<Fragment, BlockError> {
    let mut nl = Netlist::new();
    let clk = nl.add_stimulus_port("clk");
    let out = pulse_generator_into(&mut nl, clk, &spec, cfg, None)?;
    nl.add_probe(clk, "clk");
    nl.add_probe(out, "pulse");
    Ok(Fragment {
        netlist: nl,
        inputs: vec![("clk".into(), clk)],
        outputs: vec![("pulse".into(), out)],
    })
}

/// Standalone counter. The threshold output also clears the counter (fire
/// and reset); the `reset` port clears it externally. Count bits are probed
/// as `q0`, `q1`, ...
pub fn build_acm(spec: AcmSpec, cfg: &BlockConfig) -> Result<Fragment, BlockError> {
    let spec = AcmSpec::new(spec.capacity)?;
    let mut nl = Netlist::new();
    let exc = nl.add_stimulus_port("exc");
    let inh = nl.add_stimulus_port("inh");
    let reset = nl.add_stimulus_port("reset");
    let clear = nl.add_net("acm_clear");
    let acm = acm_into(&mut nl, exc, inh, clear, &spec, cfg, None, "acm");
    nl.gate_into(GateKind::Or2, &[reset, acm.full], clear, cfg.timing);
    for (i, b) in acm.bits.iter().enumerate() {
        nl.add_probe(*b, format!("q{i}"));
    }
    if !acm.bits.contains(&acm.full) {
        nl.add_probe(acm.full, "threshold");
    }
    nl.add_probe(acm.clock, "clock");
    Ok(Fragment {
        netlist: nl,
        inputs: vec![
            ("exc".into(), exc),
            ("inh".into(), inh),
            ("reset".into(), reset),
        ],
        outputs: vec![("threshold".into(), acm.full)],
    })
}

/// Dendrite over `fan_in` stimulus ports `in0..`; output probed as `out`.
pub fn build_dendrite(
    fan_in: usize,
    combiner: Combiner,
    cfg: &BlockConfig,
) -> Result<Fragment, BlockError> {
    if fan_in == 0 {
        return Err(BlockError::InvalidSpec("dendrite fan-in must be >= 1".into()));
    }
    let mut nl = Netlist::new();
    let ins: Vec<NetId> = (0..fan_in)
        .map(|i| nl.add_stimulus_port(format!("in{i}")))
        .collect();
    let out = dendrite_into(&mut nl, &ins, combiner, cfg, "dend");
    nl.add_probe(out, "out");
    Ok(Fragment {
        inputs: ins
            .iter()
            .enumerate()
            .map(|(i, n)| (format!("in{i}"), *n))
            .collect(),
        outputs: vec![("out".into(), out)],
        netlist: nl,
    })
}

pub fn build_weighted_synapse(
    spec: SynapseWeightSpec,
    cfg: &BlockConfig,
) -> Result<Fragment, BlockError> {
    let mut nl = Netlist::new();
    let input = nl.add_stimulus_port("in");
    let out = weighted_synapse_into(&mut nl, input, spec.weight, cfg, "syn")?;
    if out != input {
        nl.add_probe(out, "out");
    }
    nl.add_probe(input, "in");
    Ok(Fragment {
        netlist: nl,
        inputs: vec![("in".into(), input)],
        outputs: vec![("out".into(), out)],
    })
}

/// Delay line of `delay / tau_p` inverter pairs.
pub fn build_delay_line(delay: SimTime, cfg: &BlockConfig) -> Result<Fragment, BlockError> {
    let tau_p = cfg.tau_p();
    if delay == SimTime::ZERO || !delay.as_ps().is_multiple_of(tau_p.as_ps()) {
        return Err(BlockError::DelayNotMultiple { delay, tau_p });
    }
    let mut nl = Netlist::new();
    let input = nl.add_stimulus_port("in");
    let out = delay_line_into(&mut nl, input, (delay.as_ps() / tau_p.as_ps()) as u32, cfg);
    nl.add_probe(input, "in");
    nl.add_probe(out, "out");
    Ok(Fragment {
        netlist: nl,
        inputs: vec![("in".into(), input)],
        outputs: vec![("out".into(), out)],
    })
}

/// Neuron with `exc_fan_in` + `inh_fan_in` stimulus ports (`exc0..`,
/// `inh0..`). Probes: `spike`, `clock`, `q0..`.
pub fn build_neuron(
    capacity: u32,
    exc_fan_in: usize,
    inh_fan_in: usize,
    cfg: &BlockConfig,
) -> Result<Fragment, BlockError> {
    let mut nl = Netlist::new();
    let exc: Vec<NetId> = (0..exc_fan_in)
        .map(|i| nl.add_stimulus_port(format!("exc{i}")))
        .collect();
    let inh: Vec<NetId> = (0..inh_fan_in)
        .map(|i| nl.add_stimulus_port(format!("inh{i}")))
        .collect();
    let ports = neuron_into(&mut nl, &exc, &inh, capacity, cfg, "n")?;
    nl.add_probe(ports.spike, "spike");
    nl.add_probe(ports.acm.clock, "clock");
    for (i, b) in ports.acm.bits.iter().enumerate() {
        if *b != ports.spike {
            nl.add_probe(*b, format!("q{i}"));
        }
    }
    if ports.clear != ports.spike {
        nl.add_probe(ports.clear, "clear");
    }
    let mut inputs: Vec<(String, NetId)> = exc
        .iter()
        .enumerate()
        .map(|(i, n)| (format!("exc{i}"), *n))
        .collect();
    inputs.extend(inh.iter().enumerate().map(|(i, n)| (format!("inh{i}"), *n)));
    Ok(Fragment {
        netlist: nl,
        inputs,
        outputs: vec![("spike".into(), ports.spike)],
    })
}

#[cfg(test)]
mod tests;
