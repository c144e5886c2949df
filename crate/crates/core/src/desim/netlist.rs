// SPDX-License-Identifier: Apache-2.0

//! Flat gate-level circuit graph.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::gate::{eval_gate, GateKind, GateState, SrConflictPolicy};
use super::{SimError, SimTime, GATE_DELAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NetId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GateId(pub u32);

impl NetId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl GateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Driver {
    Gate(GateId),
    Stimulus,
    /// Tied to logic 0.
    Tie0,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Net {
    pub name: String,
    pub driver: Option<Driver>,
}

/// Propagation delay and inertial rejection window of a gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub delay: SimTime,
    pub reject: SimTime,
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            delay: GATE_DELAY,
            reject: GATE_DELAY,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateInstance {
    pub kind: GateKind,
    pub inputs: Vec<NetId>,
    pub output: NetId,
    pub delay: SimTime,
    pub reject_window: SimTime,
    /// Index into [`Netlist::groups`]; used for hierarchical HDL emission.
    pub group: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Probe {
    pub net: NetId,
    pub label: String,
}

/// Nets, gates, probes and stimulus ports of one circuit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Netlist {
    pub nets: Vec<Net>,
    pub gates: Vec<GateInstance>,
    pub probes: Vec<Probe>,
    pub stimuli: Vec<NetId>,
    pub groups: Vec<String>,
    current_group: u32,
    tie0: Option<NetId>,
}

impl Default for Netlist {
    fn default() -> Self {
        Self::new()
    }
}

impl Netlist {
    pub fn new() -> Self {
        Netlist {
            nets: Vec::new(),
            gates: Vec::new(),
            probes: Vec::new(),
            stimuli: Vec::new(),
            groups: vec!["top".to_string()],
            current_group: 0,
            tie0: None,
        }
    }

    /// Starts a new gate group; gates added afterwards belong to it.
    pub fn begin_group(&mut self, name: impl Into<String>) -> u32 {
        self.groups.push(name.into());
        self.current_group = (self.groups.len() - 1) as u32;
        self.current_group
    }

    pub fn set_group(&mut self, group: u32) {
        assert!((group as usize) < self.groups.len());
        self.current_group = group;
    }

    pub fn add_net(&mut self, name: impl Into<String>) -> NetId {
        let id = NetId(self.nets.len() as u32);
        self.nets.push(Net {
            name: name.into(),
            driver: None,
        });
        id
    }

    pub fn add_stimulus_port(&mut self, name: impl Into<String>) -> NetId {
        let id = self.add_net(name);
        self.nets[id.index()].driver = Some(Driver::Stimulus);
        self.stimuli.push(id);
        id
    }

    /// Shared constant-0 net.
    pub fn tie0(&mut self) -> NetId {
        if let Some(n) = self.tie0 {
            return n;
        }
        let id = self.add_net("tie0");
        self.nets[id.index()].driver = Some(Driver::Tie0);
        self.tie0 = Some(id);
        id
    }

    /// Adds a gate driving a fresh net and returns that net.
    pub fn gate(&mut self, kind: GateKind, inputs: &[NetId], timing: Timing, name: &str) -> NetId {
        let out = self.add_net(name);
        self.gate_into(kind, inputs, out, timing);
        out
    }

    /// Adds a gate driving an existing, still undriven net.
    pub fn gate_into(
        &mut self,
        kind: GateKind,
        inputs: &[NetId],
        output: NetId,
        timing: Timing,
    ) -> GateId {
        assert_eq!(
            inputs.len(),
            kind.arity(),
            "{} takes {} inputs",
            kind.mnemonic(),
            kind.arity()
        );
        assert!(
            self.nets[output.index()].driver.is_none(),
            "net {} already driven",
            self.nets[output.index()].name
        );
        let id = GateId(self.gates.len() as u32);
        self.gates.push(GateInstance {
            kind,
            inputs: inputs.to_vec(),
            output,
            delay: timing.delay,
            reject_window: timing.reject.min(timing.delay),
            group: self.current_group,
        });
        self.nets[output.index()].driver = Some(Driver::Gate(id));
        id
    }

    pub fn add_probe(&mut self, net: NetId, label: impl Into<String>) {
        self.probes.push(Probe {
            net,
            label: label.into(),
        });
    }

    pub fn net_name(&self, net: NetId) -> &str {
        &self.nets[net.index()].name
    }

    /// Checks the single-driver rule and gate arities/delays.
    pub fn validate(&self) -> Result<(), SimError> {
        for net in &self.nets {
            if net.driver.is_none() {
                return Err(SimError::Undriven(net.name.clone()));
            }
        }
        for g in &self.gates {
            if g.inputs.len() != g.kind.arity() {
                return Err(SimError::Arity {
                    kind: g.kind,
                    expected: g.kind.arity(),
                    got: g.inputs.len(),
                });
            }
            if g.delay == SimTime::ZERO {
                return Err(SimError::ZeroDelay(self.net_name(g.output).to_string()));
            }
            if g.inputs.iter().any(|n| n.index() >= self.nets.len()) {
                return Err(SimError::DanglingNet);
            }
        }
        Ok(())
    }

    /// Redraws every gate delay from N(nominal, sigma), rounded to whole
    /// picoseconds. The rejection window is capped at the new delay.
    pub fn apply_delay_jitter(&mut self, sigma: f64, seed: u64) {
        if sigma <= 0.0 {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).expect("finite sigma");
        for g in &mut self.gates {
            // lumped delay elements stand for many gates: scale variance accordingly
            let stages = (g.delay.as_ps() as f64 / GATE_DELAY.as_ps() as f64).max(1.0);
            let d = g.delay.as_ps() as f64 + noise.sample(&mut rng) * stages.sqrt();
            let d = d.round().max(1.0) as u64;
            g.delay = SimTime(d);
            g.reject_window = g.reject_window.min(g.delay);
        }
    }

    /// Gate-index fanout table in CSR form: `(offsets, gates)`.
    pub(crate) fn fanout(&self) -> (Vec<u32>, Vec<u32>) {
        let mut counts = vec![0u32; self.nets.len() + 1];
        for g in &self.gates {
            for n in &g.inputs {
                counts[n.index() + 1] += 1;
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut out = vec![0u32; *counts.last().unwrap() as usize];
        for (gi, g) in self.gates.iter().enumerate() {
            for n in &g.inputs {
                let slot = &mut fill[n.index()];
                out[*slot as usize] = gi as u32;
                *slot += 1;
            }
        }
        (counts, out)
    }

    /// Quiescent power-on state: stimuli low, storage elements cleared and
    /// combinational logic settled. Purely combinational cycles are broken at
    /// one gate each; those gates are returned so the engine can evaluate them
    /// at t = 0 (a ring of inverters then starts oscillating from there).
    pub(crate) fn settle(&self) -> (Vec<bool>, Vec<GateState>, Vec<u32>) {
        let mut values = vec![false; self.nets.len()];
        let states = vec![GateState::default(); self.gates.len()];
        let (offsets, fan) = self.fanout();

        // Kahn's algorithm over combinational gates; storage outputs are sources.
        let mut indeg = vec![0u32; self.gates.len()];
        for (gi, g) in self.gates.iter().enumerate() {
            if g.kind.is_sequential() {
                continue;
            }
            for n in &g.inputs {
                if let Some(Driver::Gate(src)) = self.nets[n.index()].driver {
                    if !self.gates[src.index()].kind.is_sequential() {
                        indeg[gi] += 1;
                    }
                }
            }
        }
        let mut ready: Vec<u32> = (0..self.gates.len() as u32)
            .filter(|&g| !self.gates[g as usize].kind.is_sequential() && indeg[g as usize] == 0)
            .collect();
        let mut done = vec![false; self.gates.len()];
        let mut forced = Vec::new();
        let mut next_forced = 0usize;
        let mut inbuf = Vec::with_capacity(3);
        loop {
            let gi = match ready.pop() {
                Some(g) => g,
                None => {
                    // a combinational cycle: break it at the lowest pending gate
                    while next_forced < self.gates.len()
                        && (done[next_forced] || self.gates[next_forced].kind.is_sequential())
                    {
                        next_forced += 1;
                    }
                    if next_forced == self.gates.len() {
                        break;
                    }
                    forced.push(next_forced as u32);
                    next_forced as u32
                }
            };
            if done[gi as usize] {
                continue;
            }
            let g = &self.gates[gi as usize];
            done[gi as usize] = true;
            inbuf.clear();
            inbuf.extend(g.inputs.iter().map(|n| values[n.index()]));
            let (v, _) = eval_gate(g.kind, &inbuf, GateState::default(), SrConflictPolicy::Hold)
                .expect("arity checked at construction");
            values[g.output.index()] = v;
            let out = g.output.index();
            for &succ in &fan[offsets[out] as usize..offsets[out + 1] as usize] {
                let s = succ as usize;
                if self.gates[s].kind.is_sequential() || done[s] {
                    continue;
                }
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.push(succ);
                }
            }
        }
        let cyclic = forced;
        (values, states, cyclic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_rejects_undriven_net() {
        let mut nl = Netlist::new();
        let a = nl.add_net("a");
        nl.gate(GateKind::Inv, &[a], Timing::default(), "y");
        assert!(matches!(nl.validate(), Err(SimError::Undriven(n)) if n == "a"));
    }

    #[test]
    #[should_panic]
    fn second_driver_panics() {
        let mut nl = Netlist::new();
        let a = nl.add_stimulus_port("a");
        let y = nl.gate(GateKind::Inv, &[a], Timing::default(), "y");
        nl.gate_into(GateKind::Inv, &[a], y, Timing::default());
    }

    #[test]
    fn settle_inverter_chain_alternates() {
        let mut nl = Netlist::new();
        let mut n = nl.add_stimulus_port("in");
        for i in 0..5 {
            n = nl.gate(GateKind::Inv, &[n], Timing::default(), &format!("i{i}"));
        }
        let (values, _, cyclic) = nl.settle();
        assert!(cyclic.is_empty());
        assert!(values[n.index()]);
    }

    #[test]
    fn settle_reports_ring_as_cyclic() {
        let mut nl = Netlist::new();
        let a = nl.add_net("a");
        let b = nl.gate(GateKind::Inv, &[a], Timing::default(), "b");
        let c = nl.gate(GateKind::Inv, &[b], Timing::default(), "c");
        nl.gate_into(GateKind::Inv, &[c], a, Timing::default());
        let (_, _, cyclic) = nl.settle();
        assert_eq!(cyclic.len(), 1);
    }

    #[test]
    fn jitter_is_seeded() {
        let mut a = Netlist::new();
        let s = a.add_stimulus_port("s");
        let mut n = s;
        for _ in 0..20 {
            n = a.gate(GateKind::Inv, &[n], Timing::default(), "x");
        }
        let mut b = a.clone();
        let mut c = a.clone();
        a.apply_delay_jitter(10.0, 7);
        b.apply_delay_jitter(10.0, 7);
        c.apply_delay_jitter(10.0, 8);
        let d = |nl: &Netlist| nl.gates.iter().map(|g| g.delay).collect::<Vec<_>>();
        assert_eq!(d(&a), d(&b));
        assert_ne!(d(&a), d(&c));
        assert!(a.gates.iter().all(|g| g.reject_window <= g.delay));
    }
}
