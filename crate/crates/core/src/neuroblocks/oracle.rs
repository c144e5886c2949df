// SPDX-License-Identifier: Apache-2.0

//! Integer integrate-and-fire reference model of the gate-level neuron.

use std::sync::Arc;

use crate::desim::{SimTime, Simulator};

use super::{build_neuron, BlockConfig, BlockError, BRANCH_SPACING_PAIRS};

/// Timing constants of the gate-level neuron, measured by
/// [`calibrate_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleTiming {
    /// Counter input edge to output spike onset.
    pub fire_latency: SimTime,
    /// Inputs arriving in `[t_fire, t_fire + block)` are not counted.
    pub block: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BehavioralNeuron {
    pub capacity: u32,
    pub timing: OracleTiming,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BehavioralNeuronState {
    pub count: u32,
    pub firing_until: SimTime,
    pub last_time: SimTime,
}

/// A unit increment (`excitatory`) or decrement at the counter input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignedSpike {
    pub time: SimTime,
    pub excitatory: bool,
}

/// Advances the reference neuron by one unit event.
pub fn oracle_step(
    neuron: &BehavioralNeuron,
    state: BehavioralNeuronState,
    event: SignedSpike,
) -> Result<(BehavioralNeuronState, Option<SimTime>), BlockError> {
    if event.time < state.last_time {
        return Err(BlockError::OutOfOrder {
            at: event.time,
            last: state.last_time,
        });
    }
    let mut next = BehavioralNeuronState {
        last_time: event.time,
        ..state
    };
    if event.time < state.firing_until {
        return Ok((next, None));
    }
    if event.excitatory {
        next.count = (next.count + 1).min(neuron.capacity);
    } else {
        next.count = next.count.saturating_sub(1);
    }
    if next.count == neuron.capacity {
        next.count = 0;
        next.firing_until = event.time + neuron.timing.block;
        return Ok((next, Some(event.time + neuron.timing.fire_latency)));
    }
    Ok((next, None))
}

impl BehavioralNeuron {
    /// Runs a whole train and returns the output spike times.
    pub fn run(&self, events: &[SignedSpike]) -> Result<Vec<SimTime>, BlockError> {
        let mut state = BehavioralNeuronState::default();
        let mut out = Vec::new();
        for &ev in events {
            let (s, fired) = oracle_step(self, state, ev)?;
            state = s;
            out.extend(fired);
        }
        Ok(out)
    }
}

/// Unit events produced by one spike through a `weight`-branch synapse.
pub fn expand_weighted(time: SimTime, weight: u32, excitatory: bool, tau_p: SimTime) -> Vec<SignedSpike> {
    (0..u64::from(weight))
        .map(|k| SignedSpike {
            time: time + tau_p * (k * u64::from(BRANCH_SPACING_PAIRS)),
            excitatory,
        })
        .collect()
}

/// Measures the neuron's fire latency and blocking window by driving a
/// single-input neuron to threshold once.
pub fn calibrate_oracle(capacity: u32, cfg: &BlockConfig) -> Result<BehavioralNeuron, BlockError> {
    let frag = build_neuron(capacity, 1, 0, cfg)?;
    let input = frag.input("exc0");
    let mut sim = Simulator::new(Arc::new(frag.netlist))?;
    let spacing = SimTime::ns(20);
    let width = cfg.tau_p() * 4;
    let mut last = SimTime::ZERO;
    for k in 0..u64::from(capacity) {
        last = SimTime::ns(10) + spacing * k;
        sim.schedule_pulse(input, last, width)?;
    }
    let trace = sim.run_until(last + SimTime::ns(50))?;
    let spike = trace.probe("spike").expect("spike probe");
    let clock = trace.probe("clock").expect("clock probe");
    let clear = trace.probe("clear").unwrap_or(spike);
    let invalid = || BlockError::InvalidSpec("calibration run did not fire exactly once".into());
    let &[onset] = spike.rising_edges().as_slice() else {
        return Err(invalid());
    };
    let clk_fire = *clock.rising_edges().last().ok_or_else(invalid)?;
    let (_, clear_end) = *clear.pulses().last().ok_or_else(invalid)?;
    Ok(BehavioralNeuron {
        capacity,
        timing: OracleTiming {
            fire_latency: onset - last,
            block: clear_end - clk_fire,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neuron(c: u32) -> BehavioralNeuron {
        BehavioralNeuron {
            capacity: c,
            timing: OracleTiming {
                fire_latency: SimTime(2_000),
                block: SimTime(3_000),
            },
        }
    }

    fn exc(t: u64) -> SignedSpike {
        SignedSpike {
            time: SimTime(t),
            excitatory: true,
        }
    }

    fn inh(t: u64) -> SignedSpike {
        SignedSpike {
            time: SimTime(t),
            excitatory: false,
        }
    }

    #[test]
    fn fires_at_capacity_and_resets() {
        let n = neuron(4);
        let s = BehavioralNeuronState {
            count: 3,
            ..Default::default()
        };
        let (s, fired) = oracle_step(&n, s, exc(100)).unwrap();
        assert_eq!(fired, Some(SimTime(2_100)));
        assert_eq!(s.count, 0);
    }

    #[test]
    fn decrement_at_zero_is_a_no_op() {
        let n = neuron(4);
        let (s, fired) = oracle_step(&n, BehavioralNeuronState::default(), inh(5)).unwrap();
        assert_eq!(s.count, 0);
        assert!(fired.is_none());
    }

    #[test]
    fn inputs_during_firing_are_ignored() {
        let n = neuron(2);
        let out = n
            .run(&[exc(0), exc(10_000), exc(11_000), exc(20_000)])
            .unwrap();
        // the event at 11_000 lands inside the block window after the fire at 10_000
        assert_eq!(out, vec![SimTime(12_000)]);
    }

    #[test]
    fn out_of_order_is_rejected() {
        let n = neuron(2);
        let (s, _) = oracle_step(&n, BehavioralNeuronState::default(), exc(100)).unwrap();
        assert!(matches!(
            oracle_step(&n, s, exc(50)),
            Err(BlockError::OutOfOrder { .. })
        ));
    }

    #[test]
    fn mixed_sequence_counts_three_minus_one_plus_two() {
        let n = neuron(4);
        let t: Vec<u64> = (0..6).map(|k| k * 50_000).collect();
        let events = [exc(t[0]), exc(t[1]), exc(t[2]), inh(t[3]), exc(t[4]), exc(t[5])];
        let out = n.run(&events).unwrap();
        assert_eq!(out, vec![SimTime(t[5] + 2_000)]);
    }

    #[test]
    fn weighted_expansion_spacing() {
        let ev = expand_weighted(SimTime(1_000), 2, true, SimTime(560));
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[1].time - ev[0].time, SimTime(2_800));
    }
}
