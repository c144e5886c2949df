// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Simulation timestamp in integer picoseconds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn ns(ns: u64) -> Self {
        SimTime(ns * 1_000)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_ns_f64(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl Mul<u64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: u64) -> SimTime {
        SimTime(self.0 * rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ps", self.0)
    }
}

/// Propagation delay of one NOT gate.
pub const GATE_DELAY: SimTime = SimTime(280);

/// Period of the synchronous spike generator and time tagger.
pub const CLOCK_STEP: SimTime = SimTime(10_000);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_step_is_ten_nanoseconds() {
        assert_eq!(CLOCK_STEP, SimTime::ns(10));
        assert_eq!(CLOCK_STEP.as_ps(), 10_000);
        assert_eq!(GATE_DELAY * 2, SimTime::ps(560));
    }
}
