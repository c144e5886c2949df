// SPDX-License-Identifier: Apache-2.0

pub mod desim;
pub mod elaborator;
pub mod harness;
pub mod netgen;
pub mod neuroblocks;
pub mod readout;
pub mod shd;
pub mod spikeio;
