// SPDX-License-Identifier: Apache-2.0

//! Picosecond-resolution discrete-event simulation of two-valued clockless
//! logic.
//!
//! Gates use inertial delays: an output pulse narrower than the driving
//! gate's rejection window never appears on its net. At t = 0 every storage
//! element is cleared, stimuli are low and the combinational logic has
//! already settled.

mod engine;
mod gate;
mod netlist;
mod time;
mod trace;

use thiserror::Error;

pub use engine::{EngineConfig, Event, Simulator};
pub use gate::{eval_gate, GateKind, GateState, SrConflictPolicy};
pub use netlist::{Driver, GateId, GateInstance, Net, NetId, Netlist, Probe, Timing};
pub use time::{SimTime, CLOCK_STEP, GATE_DELAY};
pub use trace::{ProbeTrace, WaveTrace};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot schedule at {at}: simulation time is already {now}")]
    Past { at: SimTime, now: SimTime },
    #[error("net {0:?} is not a stimulus port")]
    NotStimulus(NetId),
    #[error("net `{0}` has no driver")]
    Undriven(String),
    #[error("gate driving `{0}` has zero delay")]
    ZeroDelay(String),
    #[error("gate input refers to a net outside the netlist")]
    DanglingNet,
    #[error("net probed twice under label `{0}`")]
    DuplicateProbe(String),
    #[error("{} expects {expected} inputs, got {got}", kind.mnemonic())]
    Arity {
        kind: GateKind,
        expected: usize,
        got: usize,
    },
    #[error("SR latch driven with S=R=1")]
    SrConflict,
    #[error("event budget of {budget} exceeded; net `{net}` toggled {transitions} times")]
    Runaway {
        net: String,
        transitions: u64,
        budget: u64,
    },
}
