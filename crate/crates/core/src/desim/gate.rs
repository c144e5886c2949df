// SPDX-License-Identifier: Apache-2.0

//! Gate kinds and their evaluation rules.

use serde::{Deserialize, Serialize};

use super::SimError;

/// Primitive gate kinds understood by the engine.
///
/// Input order for the storage elements:
/// `Dff` is `[D, CLK, CLR]` (rising-edge clock, level-sensitive clear),
/// `SrLatch` is `[S, R]`, `TLatch` is `[T]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    Inv,
    /// Non-inverting delay element. Stands in for an even-length inverter
    /// chain when delay lines are lumped.
    Buf,
    Xor2,
    Or2,
    And2,
    Dff,
    SrLatch,
    TLatch,
}

impl GateKind {
    pub const fn arity(self) -> usize {
        match self {
            GateKind::Inv | GateKind::Buf | GateKind::TLatch => 1,
            GateKind::Xor2 | GateKind::Or2 | GateKind::And2 | GateKind::SrLatch => 2,
            GateKind::Dff => 3,
        }
    }

    pub const fn is_sequential(self) -> bool {
        matches!(self, GateKind::Dff | GateKind::SrLatch | GateKind::TLatch)
    }

    pub const fn mnemonic(self) -> &'static str {
        match self {
            GateKind::Inv => "INV",
            GateKind::Buf => "BUF",
            GateKind::Xor2 => "XOR2",
            GateKind::Or2 => "OR2",
            GateKind::And2 => "AND2",
            GateKind::Dff => "DFF",
            GateKind::SrLatch => "SRLATCH",
            GateKind::TLatch => "TLATCH",
        }
    }
}

/// What an SR latch does when S and R are both high.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SrConflictPolicy {
    /// Keep the previous state and log a warning.
    #[default]
    Hold,
    /// Abort the simulation.
    Error,
}

/// Internal state of a storage element.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GateState {
    pub q: bool,
    /// Last observed level of the edge-sensitive input (CLK or T).
    pub last_edge_input: bool,
}

impl GateState {
    pub fn q_bar(&self) -> bool {
        !self.q
    }
}

/// Evaluates one gate. Combinational kinds ignore `state`.
pub fn eval_gate(
    kind: GateKind,
    inputs: &[bool],
    state: GateState,
    policy: SrConflictPolicy,
) -> Result<(bool, GateState), SimError> {
    if inputs.len() != kind.arity() {
        return Err(SimError::Arity {
            kind,
            expected: kind.arity(),
            got: inputs.len(),
        });
    }
    let out = match kind {
        GateKind::Inv => (!inputs[0], state),
        GateKind::Buf => (inputs[0], state),
        GateKind::Xor2 => (inputs[0] ^ inputs[1], state),
        GateKind::Or2 => (inputs[0] | inputs[1], state),
        GateKind::And2 => (inputs[0] & inputs[1], state),
        GateKind::Dff => {
            let (d, clk, clr) = (inputs[0], inputs[1], inputs[2]);
            let rising = clk && !state.last_edge_input;
            let q = if clr {
                false
            } else if rising {
                d
            } else {
                state.q
            };
            (
                q,
                GateState {
                    q,
                    last_edge_input: clk,
                },
            )
        }
        GateKind::SrLatch => {
            let q = match (inputs[0], inputs[1]) {
                (true, false) => true,
                (false, true) => false,
                (false, false) => state.q,
                (true, true) => match policy {
                    SrConflictPolicy::Hold => {
                        log::warn!("SR latch driven with S=R=1; holding previous state");
                        state.q
                    }
                    SrConflictPolicy::Error => return Err(SimError::SrConflict),
                },
            };
            (q, GateState { q, ..state })
        }
        GateKind::TLatch => {
            let t = inputs[0];
            let q = if t && !state.last_edge_input {
                !state.q
            } else {
                state.q
            };
            (
                q,
                GateState {
                    q,
                    last_edge_input: t,
                },
            )
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(kind: GateKind, inputs: &[bool], state: GateState) -> (bool, GateState) {
        eval_gate(kind, inputs, state, SrConflictPolicy::Hold).unwrap()
    }

    #[test]
    fn combinational_truth_tables() {
        let s = GateState::default();
        assert!(!eval(GateKind::Xor2, &[true, true], s).0);
        assert!(eval(GateKind::Xor2, &[true, false], s).0);
        assert!(eval(GateKind::Or2, &[false, true], s).0);
        assert!(!eval(GateKind::And2, &[false, true], s).0);
        assert!(eval(GateKind::Inv, &[false], s).0);
        assert!(eval(GateKind::Buf, &[true], s).0);
    }

    #[test]
    fn dff_captures_on_rising_edge() {
        let s = GateState::default();
        let (q, s) = eval(GateKind::Dff, &[true, true, false], s);
        assert!(q);
        assert!(!s.q_bar());
        // clock held high: D changes are ignored
        let (q, s) = eval(GateKind::Dff, &[false, true, false], s);
        assert!(q);
        let (q, s) = eval(GateKind::Dff, &[false, false, false], s);
        assert!(q);
        let (q, _) = eval(GateKind::Dff, &[false, true, false], s);
        assert!(!q);
    }

    #[test]
    fn dff_clear_overrides_clock() {
        let s = GateState {
            q: true,
            last_edge_input: false,
        };
        let (q, s) = eval(GateKind::Dff, &[true, true, true], s);
        assert!(!q);
        // releasing clear without a new edge keeps the cleared state
        let (q, _) = eval(GateKind::Dff, &[true, true, false], s);
        assert!(!q);
    }

    #[test]
    fn tlatch_even_toggles_return_to_zero() {
        let mut s = GateState::default();
        for _ in 0..4 {
            s = eval(GateKind::TLatch, &[true], s).1;
            s = eval(GateKind::TLatch, &[false], s).1;
        }
        assert!(!s.q);
    }

    #[test]
    fn sr_latch_set_reset_and_conflict() {
        let s = GateState::default();
        let (q, s) = eval(GateKind::SrLatch, &[true, false], s);
        assert!(q);
        let (q, s) = eval(GateKind::SrLatch, &[false, false], s);
        assert!(q);
        let (q, s) = eval(GateKind::SrLatch, &[true, true], s);
        assert!(q, "default policy holds");
        assert!(matches!(
            eval_gate(GateKind::SrLatch, &[true, true], s, SrConflictPolicy::Error),
            Err(SimError::SrConflict)
        ));
        let (q, _) = eval(GateKind::SrLatch, &[false, true], s);
        assert!(!q);
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        assert!(eval_gate(
            GateKind::Xor2,
            &[true],
            GateState::default(),
            SrConflictPolicy::Hold
        )
        .is_err());
    }
}
