// SPDX-License-Identifier: Apache-2.0

//! Synchronous periphery of the reservoir: a 10 ns spike generator, a 10 ns
//! time tagger, raster export and a UDP event-streaming protocol.

mod net;
mod packet;
mod raster;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::desim::{Netlist, SimError, SimTime, Simulator, WaveTrace, CLOCK_STEP};
use crate::elaborator::ElaboratedNetwork;
use crate::neuroblocks::TAU_P;

pub use net::{Client, ClientConfig, ClientStats, Server, ServerConfig, ServerStats, WindowRunner};
pub use packet::{PacketError, PacketKind, SpikePacket, HEADER_LEN, MAGIC, MAX_DATAGRAM, MAX_EVENTS, VERSION};
pub use raster::{parse_raster_csv, RasterEvent, RasterWindow};

pub const MAX_INPUT_CHANNELS: usize = 128;
pub const MAX_PROBES: usize = 200;
/// Bins per observation window: 10.24 us at 10 ns.
pub const WINDOW_BINS: usize = 1024;

#[derive(Debug, Error)]
pub enum SpikeIoError {
    #[error("channel {channel} outside the {limit}-channel input map")]
    Channel { channel: u16, limit: usize },
    #[error("{0} channels exceeds the generator's {MAX_INPUT_CHANNELS}")]
    TooManyChannels(usize),
    #[error("{0} probes exceeds the tagger's {MAX_PROBES}")]
    TooManyProbes(usize),
    #[error("window start {0} is not on a 10 ns boundary")]
    Unaligned(SimTime),
    #[error("no probe labelled `{0}`")]
    UnknownProbe(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("server rejected window of session {0}")]
    Rejected(u32),
    #[error("timed out waiting for session {0}")]
    Timeout(u32),
    #[error("raster parse error on line {0}")]
    Raster(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub time_step: u32,
    pub channel: u16,
}

/// Stimulus on a 10 ns step grid.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpikeTrainInput {
    pub channels: usize,
    pub events: Vec<SpikeEvent>,
}

impl SpikeTrainInput {
    pub fn new(channels: usize, mut events: Vec<SpikeEvent>) -> Result<Self, SpikeIoError> {
        if channels > MAX_INPUT_CHANNELS {
            return Err(SpikeIoError::TooManyChannels(channels));
        }
        if let Some(e) = events.iter().find(|e| usize::from(e.channel) >= channels) {
            return Err(SpikeIoError::Channel {
                channel: e.channel,
                limit: channels,
            });
        }
        events.sort_unstable();
        events.dedup();
        Ok(SpikeTrainInput { channels, events })
    }
}

/// Binary tagger output, `bins` rows by `channels` columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObservationMatrix {
    pub bins: usize,
    pub channels: usize,
    bits: Vec<u8>,
}

impl ObservationMatrix {
    pub fn zeros(bins: usize, channels: usize) -> Self {
        ObservationMatrix {
            bins,
            channels,
            bits: vec![0; bins * channels],
        }
    }

    pub fn get(&self, bin: usize, channel: usize) -> bool {
        self.bits[bin * self.channels + channel] != 0
    }

    pub fn set(&mut self, bin: usize, channel: usize) {
        self.bits[bin * self.channels + channel] = 1;
    }

    /// Bins in which `channel` fired, ascending.
    pub fn spike_bins(&self, channel: usize) -> Vec<usize> {
        (0..self.bins).filter(|&b| self.get(b, channel)).collect()
    }

    pub fn count(&self, channel: usize) -> usize {
        (0..self.bins).filter(|&b| self.get(b, channel)).count()
    }

    pub fn total(&self) -> usize {
        self.bits.iter().filter(|b| **b != 0).count()
    }

    /// Set cells as `(bin, channel)` in row-major order.
    pub fn events(&self) -> Vec<SpikeEvent> {
        let mut out = Vec::new();
        for b in 0..self.bins {
            for c in 0..self.channels {
                if self.get(b, c) {
                    out.push(SpikeEvent {
                        time_step: b as u32,
                        channel: c as u16,
                    });
                }
            }
        }
        out
    }

    /// One byte per cell, row-major.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    pub fn from_bytes(bins: usize, channels: usize, bits: Vec<u8>) -> Option<Self> {
        (bits.len() == bins * channels && bits.iter().all(|b| *b <= 1)).then_some(ObservationMatrix {
            bins,
            channels,
            bits,
        })
    }
}

/// Width of every generated input pulse.
pub fn input_pulse_width() -> SimTime {
    TAU_P * 4
}

/// Schedules one `4 tau_p` pulse per event at `time_step * 10 ns` on the
/// external port of the mapped receptive neuron. Returns the pulse count.
pub fn inject(
    input: &SpikeTrainInput,
    network: &ElaboratedNetwork,
    sim: &mut Simulator,
) -> Result<usize, SpikeIoError> {
    let limit = network.input_ports.len();
    for e in &input.events {
        let port = *network
            .input_ports
            .get(usize::from(e.channel))
            .ok_or(SpikeIoError::Channel {
                channel: e.channel,
                limit,
            })?;
        sim.schedule_pulse(port, CLOCK_STEP * u64::from(e.time_step), input_pulse_width())?;
    }
    Ok(input.events.len())
}

/// Bins rising edges of the `labels` probes into `bins` 10 ns bins starting
/// at `start`. Column order follows `labels`.
pub fn tag(
    trace: &WaveTrace,
    labels: &[String],
    start: SimTime,
    bins: usize,
) -> Result<ObservationMatrix, SpikeIoError> {
    if labels.len() > MAX_PROBES {
        return Err(SpikeIoError::TooManyProbes(labels.len()));
    }
    if !start.as_ps().is_multiple_of(CLOCK_STEP.as_ps()) {
        return Err(SpikeIoError::Unaligned(start));
    }
    let mut m = ObservationMatrix::zeros(bins, labels.len());
    let end = start + CLOCK_STEP * bins as u64;
    for (c, label) in labels.iter().enumerate() {
        let p = trace
            .probe(label)
            .ok_or_else(|| SpikeIoError::UnknownProbe(label.clone()))?;
        for t in p.rising_edges() {
            if t >= start && t < end {
                m.set(((t - start).as_ps() / CLOCK_STEP.as_ps()) as usize, c);
            }
        }
    }
    Ok(m)
}

/// Labels of every probe of a netlist, in probe order.
pub fn probe_labels(netlist: &Netlist) -> Vec<String> {
    netlist.probes.iter().map(|p| p.label.clone()).collect()
}

/// Simulates one observation window from a quiescent reservoir: stimulus
/// onset and window start coincide at t = 0.
pub fn observe(netlist: &Arc<Netlist>, network: &ElaboratedNetwork, input: &SpikeTrainInput) -> Result<(ObservationMatrix, WaveTrace), SpikeIoError> {
    let mut sim = Simulator::new(Arc::clone(netlist))?;
    inject(input, network, &mut sim)?;
    let trace = sim.run_until(CLOCK_STEP * WINDOW_BINS as u64)?;
    let labels = probe_labels(netlist);
    Ok((tag(&trace, &labels, SimTime::ZERO, WINDOW_BINS)?, trace))
}
