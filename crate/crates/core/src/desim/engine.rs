// SPDX-License-Identifier: Apache-2.0

//! The event loop.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::Arc;

use super::gate::{eval_gate, GateKind, GateState, SrConflictPolicy};
use super::netlist::{Driver, NetId, Netlist};
use super::trace::{ProbeTrace, WaveTrace};
use super::{SimError, SimTime};

/// A pending transition on a net.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub net: NetId,
    pub new_value: bool,
    pub serial: u64,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    time: SimTime,
    value: bool,
    serial: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct EngineConfig {
    /// Abort after this many processed transitions.
    pub event_budget: u64,
    pub sr_policy: SrConflictPolicy,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            event_budget: 200_000_000,
            sr_policy: SrConflictPolicy::Hold,
        }
    }
}

/// One simulation instance over a netlist.
pub struct Simulator {
    netlist: Arc<Netlist>,
    config: EngineConfig,
    fan_offsets: Vec<u32>,
    fan_gates: Vec<u32>,
    values: Vec<bool>,
    states: Vec<GateState>,
    pending: Vec<VecDeque<Pending>>,
    queue: BinaryHeap<Reverse<(SimTime, u64, u32)>>,
    now: SimTime,
    serial: u64,
    processed: u64,
    net_events: Vec<u32>,
    probe_of_net: Vec<u32>,
    traces: Vec<ProbeTrace>,
    inbuf: Vec<bool>,
}

const NO_PROBE: u32 = u32::MAX;

impl Simulator {
    pub fn new(netlist: Arc<Netlist>) -> Result<Self, SimError> {
        Self::with_config(netlist, EngineConfig::default())
    }

    pub fn with_config(netlist: Arc<Netlist>, config: EngineConfig) -> Result<Self, SimError> {
        netlist.validate()?;
        let (fan_offsets, fan_gates) = netlist.fanout();
        let (values, mut states, cyclic) = netlist.settle();
        for (g, st) in netlist.gates.iter().zip(states.iter_mut()) {
            let edge_input = match g.kind {
                GateKind::Dff => Some(g.inputs[1]),
                GateKind::TLatch => Some(g.inputs[0]),
                _ => None,
            };
            if let Some(n) = edge_input {
                st.last_edge_input = values[n.index()];
            }
        }
        let mut probe_of_net = vec![NO_PROBE; netlist.nets.len()];
        let mut traces = Vec::with_capacity(netlist.probes.len());
        for (i, p) in netlist.probes.iter().enumerate() {
            if probe_of_net[p.net.index()] != NO_PROBE {
                return Err(SimError::DuplicateProbe(p.label.clone()));
            }
            probe_of_net[p.net.index()] = i as u32;
            traces.push(ProbeTrace {
                label: p.label.clone(),
                net: p.net,
                initial: values[p.net.index()],
                transitions: Vec::new(),
            });
        }
        let n_nets = netlist.nets.len();
        let mut sim = Simulator {
            netlist,
            config,
            fan_offsets,
            fan_gates,
            values,
            states,
            pending: vec![VecDeque::new(); n_nets],
            queue: BinaryHeap::new(),
            now: SimTime::ZERO,
            serial: 0,
            processed: 0,
            net_events: vec![0; n_nets],
            probe_of_net,
            traces,
            inbuf: Vec::with_capacity(3),
        };
        for g in cyclic {
            sim.evaluate(g as usize)?;
        }
        Ok(sim)
    }

    pub fn netlist(&self) -> &Netlist {
        &self.netlist
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn value(&self, net: NetId) -> bool {
        self.values[net.index()]
    }

    pub fn events_processed(&self) -> u64 {
        self.processed
    }

    /// Schedules a transition on a stimulus port. Events on the same net at
    /// the same time collapse to the last one scheduled.
    pub fn schedule(&mut self, time: SimTime, net: NetId, value: bool) -> Result<Event, SimError> {
        if time < self.now {
            return Err(SimError::Past {
                at: time,
                now: self.now,
            });
        }
        match self.netlist.nets.get(net.index()).and_then(|n| n.driver) {
            Some(Driver::Stimulus) => {}
            _ => return Err(SimError::NotStimulus(net)),
        }
        self.serial += 1;
        let serial = self.serial;
        let q = &mut self.pending[net.index()];
        let pos = q.partition_point(|p| p.time < time);
        let entry = Pending {
            time,
            value,
            serial,
        };
        if pos < q.len() && q[pos].time == time {
            q[pos] = entry;
        } else {
            q.insert(pos, entry);
        }
        self.queue.push(Reverse((time, serial, net.0)));
        Ok(Event {
            time,
            net,
            new_value: value,
            serial,
        })
    }

    /// Schedules a pulse `[start, start + width)` on a stimulus port.
    pub fn schedule_pulse(
        &mut self,
        net: NetId,
        start: SimTime,
        width: SimTime,
    ) -> Result<(), SimError> {
        self.schedule(start, net, true)?;
        self.schedule(start + width, net, false)?;
        Ok(())
    }

    /// Processes every event with time `<= t_end`.
    pub fn advance(&mut self, t_end: SimTime) -> Result<(), SimError> {
        while let Some(&Reverse((time, serial, net))) = self.queue.peek() {
            if time > t_end {
                break;
            }
            self.queue.pop();
            let n = net as usize;
            match self.pending[n].front() {
                Some(p) if p.serial == serial => {}
                _ => continue, // cancelled
            }
            let p = self.pending[n].pop_front().unwrap();
            self.now = time;
            if self.values[n] == p.value {
                continue;
            }
            self.values[n] = p.value;
            self.processed += 1;
            self.net_events[n] += 1;
            if self.processed > self.config.event_budget {
                return Err(self.runaway());
            }
            let probe = self.probe_of_net[n];
            if probe != NO_PROBE {
                self.traces[probe as usize]
                    .transitions
                    .push((time, p.value));
            }
            let (lo, hi) = (self.fan_offsets[n] as usize, self.fan_offsets[n + 1] as usize);
            for i in lo..hi {
                let g = self.fan_gates[i] as usize;
                self.evaluate(g)?;
            }
        }
        if t_end > self.now {
            self.now = t_end;
        }
        Ok(())
    }

    /// Advances to `t_end` and returns the probe transitions recorded so far.
    pub fn run_until(&mut self, t_end: SimTime) -> Result<WaveTrace, SimError> {
        self.advance(t_end)?;
        Ok(self.trace())
    }

    pub fn trace(&self) -> WaveTrace {
        WaveTrace {
            end: self.now,
            probes: self.traces.clone(),
        }
    }

    pub fn into_trace(self) -> WaveTrace {
        WaveTrace {
            end: self.now,
            probes: self.traces,
        }
    }

    fn runaway(&self) -> SimError {
        let (idx, count) = self
            .net_events
            .iter()
            .enumerate()
            .max_by_key(|(_, c)| **c)
            .map(|(i, c)| (i, *c))
            .unwrap_or((0, 0));
        SimError::Runaway {
            net: self
                .netlist
                .nets
                .get(idx)
                .map(|n| n.name.clone())
                .unwrap_or_default(),
            transitions: count as u64,
            budget: self.config.event_budget,
        }
    }

    fn evaluate(&mut self, g: usize) -> Result<(), SimError> {
        let gate = &self.netlist.gates[g];
        self.inbuf.clear();
        for n in &gate.inputs {
            self.inbuf.push(self.values[n.index()]);
        }
        let (v, st) = eval_gate(gate.kind, &self.inbuf, self.states[g], self.config.sr_policy)?;
        self.states[g] = st;
        let out = gate.output.index();
        let at = self.now + gate.delay;
        let reject = gate.reject_window;

        // inertial scheduling on the output net
        let q = &mut self.pending[out];
        while q.back().is_some_and(|p| p.time >= at) {
            q.pop_back();
        }
        let projected = q.back().map(|p| p.value).unwrap_or(self.values[out]);
        if projected == v {
            return Ok(());
        }
        if let Some(last) = q.back() {
            if at - last.time < reject {
                q.pop_back();
                return Ok(());
            }
        }
        self.serial += 1;
        q.push_back(Pending {
            time: at,
            value: v,
            serial: self.serial,
        });
        self.queue.push(Reverse((at, self.serial, out as u32)));
        Ok(())
    }
}
