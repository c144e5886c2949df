// SPDX-License-Identifier: Apache-2.0

//! Datagram codec. All integers are big-endian.
//!
//! ```text
//! 0..4   "BSNN"
//! 4      version
//! 5      kind
//! 6..10  session  u32
//! 10..14 sequence u32
//! 14..16 count    u16
//! 16..   count x (time_step u32, channel u16)
//! ```

use thiserror::Error;

use super::SpikeEvent;

pub const MAGIC: [u8; 4] = *b"BSNN";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;
const EVENT_LEN: usize = 6;
/// Largest UDP payload that avoids IPv4 fragmentation on a 1500-byte MTU.
pub const MAX_DATAGRAM: usize = 1472;
pub const MAX_EVENTS: usize = (MAX_DATAGRAM - HEADER_LEN) / EVENT_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PacketKind {
    Input = 0,
    Output = 1,
    Start = 2,
    End = 3,
    Ack = 4,
    /// Window rejected by the server.
    Error = 5,
}

impl TryFrom<u8> for PacketKind {
    type Error = PacketError;

    fn try_from(v: u8) -> Result<Self, PacketError> {
        Ok(match v {
            0 => PacketKind::Input,
            1 => PacketKind::Output,
            2 => PacketKind::Start,
            3 => PacketKind::End,
            4 => PacketKind::Ack,
            5 => PacketKind::Error,
            k => return Err(PacketError::Kind(k)),
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PacketError {
    #[error("datagram of {0} bytes is shorter than the header")]
    Short(usize),
    #[error("bad magic")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u8),
    #[error("unknown packet kind {0}")]
    Kind(u8),
    #[error("count {count} disagrees with a {len}-byte datagram")]
    Length { count: usize, len: usize },
    #[error("{0} events do not fit one datagram")]
    TooMany(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikePacket {
    pub kind: PacketKind,
    pub session: u32,
    pub sequence: u32,
    pub events: Vec<SpikeEvent>,
}

impl SpikePacket {
    pub fn new(kind: PacketKind, session: u32, sequence: u32, events: Vec<SpikeEvent>) -> Self {
        SpikePacket {
            kind,
            session,
            sequence,
            events,
        }
    }

    pub fn control(kind: PacketKind, session: u32, sequence: u32) -> Self {
        Self::new(kind, session, sequence, Vec::new())
    }

    pub fn encode(&self) -> Result<Vec<u8>, PacketError> {
        if self.events.len() > MAX_EVENTS {
            return Err(PacketError::TooMany(self.events.len()));
        }
        let mut b = Vec::with_capacity(HEADER_LEN + EVENT_LEN * self.events.len());
        b.extend_from_slice(&MAGIC);
        b.push(VERSION);
        b.push(self.kind as u8);
        b.extend_from_slice(&self.session.to_be_bytes());
        b.extend_from_slice(&self.sequence.to_be_bytes());
        b.extend_from_slice(&(self.events.len() as u16).to_be_bytes());
        for e in &self.events {
            b.extend_from_slice(&e.time_step.to_be_bytes());
            b.extend_from_slice(&e.channel.to_be_bytes());
        }
        Ok(b)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, PacketError> {
        if buf.len() < HEADER_LEN {
            return Err(PacketError::Short(buf.len()));
        }
        if buf[..4] != MAGIC {
            return Err(PacketError::Magic);
        }
        if buf[4] != VERSION {
            return Err(PacketError::Version(buf[4]));
        }
        let kind = PacketKind::try_from(buf[5])?;
        let u32_at = |i: usize| u32::from_be_bytes([buf[i], buf[i + 1], buf[i + 2], buf[i + 3]]);
        let session = u32_at(6);
        let sequence = u32_at(10);
        let count = usize::from(u16::from_be_bytes([buf[14], buf[15]]));
        if buf.len() != HEADER_LEN + EVENT_LEN * count {
            return Err(PacketError::Length {
                count,
                len: buf.len(),
            });
        }
        let events = buf[HEADER_LEN..]
            .chunks_exact(EVENT_LEN)
            .map(|c| SpikeEvent {
                time_step: u32::from_be_bytes([c[0], c[1], c[2], c[3]]),
                channel: u16::from_be_bytes([c[4], c[5]]),
            })
            .collect();
        Ok(SpikePacket {
            kind,
            session,
            sequence,
            events,
        })
    }
}

/// Splits events into datagram-sized batches (at least one, possibly empty).
pub(crate) fn batches(events: &[SpikeEvent], per_packet: usize) -> Vec<Vec<SpikeEvent>> {
    let per_packet = per_packet.clamp(1, MAX_EVENTS);
    events.chunks(per_packet).map(<[SpikeEvent]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn layout_is_big_endian() {
        let p = SpikePacket::new(
            PacketKind::Input,
            0x0102_0304,
            0x0A0B_0C0D,
            vec![SpikeEvent {
                time_step: 0x1122_3344,
                channel: 0x5566,
            }],
        );
        let b = p.encode().unwrap();
        assert_eq!(
            b,
            [
                b'B', b'S', b'N', b'N', 1, 0, 1, 2, 3, 4, 0x0A, 0x0B, 0x0C, 0x0D, 0, 1, 0x11, 0x22, 0x33, 0x44,
                0x55, 0x66
            ]
        );
    }

    #[test]
    fn max_events_fill_one_datagram() {
        assert_eq!(MAX_EVENTS, 242);
        let p = SpikePacket::new(PacketKind::Output, 1, 2, vec![SpikeEvent::default(); MAX_EVENTS]);
        assert!(p.encode().unwrap().len() <= MAX_DATAGRAM);
        let q = SpikePacket::new(PacketKind::Output, 1, 2, vec![SpikeEvent::default(); MAX_EVENTS + 1]);
        assert_eq!(q.encode(), Err(PacketError::TooMany(243)));
    }

    #[test]
    fn rejects_bad_headers() {
        let good = SpikePacket::control(PacketKind::Start, 7, 0).encode().unwrap();
        assert_eq!(SpikePacket::decode(&good[..10]), Err(PacketError::Short(10)));
        let mut m = good.clone();
        m[0] = b'X';
        assert_eq!(SpikePacket::decode(&m), Err(PacketError::Magic));
        let mut v = good.clone();
        v[4] = 9;
        assert_eq!(SpikePacket::decode(&v), Err(PacketError::Version(9)));
        let mut k = good.clone();
        k[5] = 6;
        assert_eq!(SpikePacket::decode(&k), Err(PacketError::Kind(6)));
    }

    #[test]
    fn batching() {
        assert_eq!(batches(&[], 10).len(), 0);
        let ev = vec![SpikeEvent::default(); 500];
        let b = batches(&ev, 1000);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![242, 242, 16]);
    }

    fn kind() -> impl Strategy<Value = PacketKind> {
        (0u8..6).prop_map(|k| PacketKind::try_from(k).unwrap())
    }

    fn packet() -> impl Strategy<Value = SpikePacket> {
        (
            kind(),
            any::<u32>(),
            any::<u32>(),
            prop::collection::vec((any::<u32>(), any::<u16>()), 0..=MAX_EVENTS),
        )
            .prop_map(|(k, s, q, ev)| {
                let events = ev
                    .into_iter()
                    .map(|(time_step, channel)| SpikeEvent { time_step, channel })
                    .collect();
                SpikePacket::new(k, s, q, events)
            })
    }

    proptest! {
        #[test]
        fn round_trip(p in packet()) {
            let b = p.encode().unwrap();
            prop_assert!(b.len() <= MAX_DATAGRAM);
            prop_assert_eq!(SpikePacket::decode(&b).unwrap(), p);
        }

        #[test]
        fn count_mismatch_rejected(p in packet(), extra in 1usize..6, cut in any::<bool>()) {
            let mut b = p.encode().unwrap();
            if cut && b.len() > HEADER_LEN {
                let n = extra.min(b.len() - HEADER_LEN);
                b.truncate(b.len() - n);
            } else {
                b.extend(std::iter::repeat_n(0, extra));
            }
            let is_length_error = matches!(SpikePacket::decode(&b), Err(PacketError::Length { .. }));
            prop_assert!(is_length_error);
        }

        #[test]
        fn arbitrary_bytes_never_panic(b in prop::collection::vec(any::<u8>(), 0..64)) {
            let _ = SpikePacket::decode(&b);
        }
    }
}
