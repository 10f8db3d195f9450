//! Frame subheaders and payloads.
//!
//! | type        | layout after the type byte                                   |
//! |-------------|--------------------------------------------------------------|
//! | 0x00        | PADDING, one byte each; a run parses as a single frame       |
//! | 0x01        | CONNECTION_CLOSE: code u16, reason_len u16, reason           |
//! | 0x02        | MAX_DATA: maximum u64                                        |
//! | 0x03        | MAX_STREAM_DATA: stream u32, maximum u64                     |
//! | 0x04        | VERSION_NEGOTIATION: count u16, versions u32 * count         |
//! | 0x05        | ACK: largest u32, delay_us u32, blocks u16, first u32, (gap u32, len u32) * blocks |
//! | 0x08 / 0x09 | STREAM (0x09 = FIN): stream u32, offset u64, length u16, data |

use std::collections::BTreeSet;
use std::fmt;
use std::ops::RangeInclusive;

use super::cursor::Reader;
use super::WireError;

pub const STREAM_FRAME_OVERHEAD: usize = 15;
pub const MAX_STREAM_FRAME_DATA: usize = u16::MAX as usize;

const PADDING: u8 = 0x00;
const CONNECTION_CLOSE: u8 = 0x01;
const MAX_DATA: u8 = 0x02;
const MAX_STREAM_DATA: u8 = 0x03;
const VERSION_NEGOTIATION: u8 = 0x04;
const ACK: u8 = 0x05;
const STREAM: u8 = 0x08;
const STREAM_FIN: u8 = 0x09;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamId(pub u32);

impl StreamId {
    /// Reserved for handshake and control data.
    pub const CONTROL: StreamId = StreamId(0);
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct StreamFrame {
    pub stream_id: StreamId,
    pub offset: u64,
    pub fin: bool,
    pub data: Vec<u8>,
}

impl fmt::Debug for StreamFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StreamFrame")
            .field("stream_id", &self.stream_id.0)
            .field("offset", &self.offset)
            .field("len", &self.data.len())
            .field("fin", &self.fin)
            .finish()
    }
}

impl StreamFrame {
    pub fn end(&self) -> u64 {
        self.offset + self.data.len() as u64
    }
}

/// One additional ACK block: `gap` unacknowledged packet numbers followed
/// by `length` acknowledged ones, counting downwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AckBlock {
    pub gap: u64,
    pub length: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AckFrame {
    pub largest_acked: u64,
    pub ack_delay_us: u32,
    /// Number of packets in the first block, which ends at `largest_acked`.
    pub first_block_length: u64,
    pub blocks: Vec<AckBlock>,
}

impl AckFrame {
    /// Builds a frame from disjoint, non-adjacent ranges sorted from highest
    /// to lowest.
    pub fn from_ranges(ranges: &[RangeInclusive<u64>], ack_delay_us: u32) -> Option<AckFrame> {
        let first = ranges.first()?;
        let mut blocks = Vec::with_capacity(ranges.len() - 1);
        let mut low = *first.start();
        for r in &ranges[1..] {
            debug_assert!(
                *r.end() + 1 < low,
                "ranges must be descending and non-adjacent"
            );
            blocks.push(AckBlock {
                gap: low - r.end() - 1,
                length: r.end() - r.start() + 1,
            });
            low = *r.start();
        }
        Some(AckFrame {
            largest_acked: *first.end(),
            ack_delay_us,
            first_block_length: first.end() - first.start() + 1,
            blocks,
        })
    }

    /// Compresses a set of packet numbers into blocks.
    pub fn from_packet_numbers(pns: &BTreeSet<u64>, ack_delay_us: u32) -> Option<AckFrame> {
        let mut ranges: Vec<RangeInclusive<u64>> = Vec::new();
        for &pn in pns.iter().rev() {
            match ranges.last_mut() {
                Some(r) if *r.start() == pn + 1 => *r = pn..=*r.end(),
                _ => ranges.push(pn..=pn),
            }
        }
        Self::from_ranges(&ranges, ack_delay_us)
    }

    /// Acknowledged ranges from highest to lowest. Assumes a valid frame.
    pub fn ranges(&self) -> Vec<RangeInclusive<u64>> {
        let mut out = Vec::with_capacity(self.blocks.len() + 1);
        let mut high = self.largest_acked;
        let mut low = high + 1 - self.first_block_length;
        out.push(low..=high);
        for b in &self.blocks {
            high = low - b.gap - 1;
            low = high + 1 - b.length;
            out.push(low..=high);
        }
        out
    }

    pub fn contains(&self, pn: u64) -> bool {
        self.ranges().iter().any(|r| r.contains(&pn))
    }

    pub fn smallest_acked(&self) -> u64 {
        *self.ranges().last().unwrap().start()
    }

    pub fn packet_numbers(&self) -> BTreeSet<u64> {
        self.ranges().into_iter().flatten().collect()
    }

    fn validate(&self, offset: usize) -> Result<(), WireError> {
        let bad = WireError::InvalidAckBlocks { offset };
        if self.first_block_length == 0 || self.first_block_length > self.largest_acked + 1 {
            return Err(bad);
        }
        let mut low = self.largest_acked + 1 - self.first_block_length;
        for b in &self.blocks {
            if b.gap == 0 || b.length == 0 {
                return Err(bad);
            }
            // next block's highest = low - gap - 1, lowest = that - length + 1
            let Some(high) = low.checked_sub(b.gap + 1) else {
                return Err(bad);
            };
            let Some(next_low) = (high + 1).checked_sub(b.length) else {
                return Err(bad);
            };
            low = next_low;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameKind {
    Padding,
    Stream,
    Ack,
    VersionNegotiation,
    ConnectionClose,
    MaxData,
    MaxStreamData,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Frame {
    Padding { length: usize },
    Stream(StreamFrame),
    Ack(AckFrame),
    VersionNegotiation { versions: Vec<u32> },
    ConnectionClose { error_code: u16, reason: Vec<u8> },
    MaxData { maximum: u64 },
    MaxStreamData { stream_id: StreamId, maximum: u64 },
}

impl Frame {
    pub fn kind(&self) -> FrameKind {
        match self {
            Frame::Padding { .. } => FrameKind::Padding,
            Frame::Stream(_) => FrameKind::Stream,
            Frame::Ack(_) => FrameKind::Ack,
            Frame::VersionNegotiation { .. } => FrameKind::VersionNegotiation,
            Frame::ConnectionClose { .. } => FrameKind::ConnectionClose,
            Frame::MaxData { .. } => FrameKind::MaxData,
            Frame::MaxStreamData { .. } => FrameKind::MaxStreamData,
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            Frame::Padding { length } => *length,
            Frame::Stream(s) => STREAM_FRAME_OVERHEAD + s.data.len(),
            Frame::Ack(a) => 1 + 4 + 4 + 2 + 4 + 8 * a.blocks.len(),
            Frame::VersionNegotiation { versions } => 1 + 2 + 4 * versions.len(),
            Frame::ConnectionClose { reason, .. } => 1 + 2 + 2 + reason.len(),
            Frame::MaxData { .. } => 1 + 8,
            Frame::MaxStreamData { .. } => 1 + 4 + 8,
        }
    }

    /// Packets made only of these frames do not require acknowledgement.
    pub fn is_ack_eliciting(&self) -> bool {
        !matches!(self, Frame::Ack(_) | Frame::Padding { .. })
    }

    /// Frames carried again under a new packet number when their packet is lost.
    pub fn is_retransmittable(&self) -> bool {
        matches!(
            self,
            Frame::Stream(_) | Frame::MaxData { .. } | Frame::MaxStreamData { .. }
        )
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<(), WireError> {
        match self {
            Frame::Padding { length } => {
                if *length == 0 {
                    return Err(WireError::FieldRange("padding length"));
                }
                out.resize(out.len() + length, PADDING);
            }
            Frame::Stream(s) => {
                let len = u16::try_from(s.data.len())
                    .map_err(|_| WireError::FieldRange("stream frame length"))?;
                out.push(if s.fin { STREAM_FIN } else { STREAM });
                out.extend_from_slice(&s.stream_id.0.to_be_bytes());
                out.extend_from_slice(&s.offset.to_be_bytes());
                out.extend_from_slice(&len.to_be_bytes());
                out.extend_from_slice(&s.data);
            }
            Frame::Ack(a) => {
                a.validate(0)
                    .map_err(|_| WireError::FieldRange("ack blocks"))?;
                let u32_field =
                    |v: u64, what| u32::try_from(v).map_err(|_| WireError::FieldRange(what));
                let count = u16::try_from(a.blocks.len())
                    .map_err(|_| WireError::FieldRange("ack block count"))?;
                out.push(ACK);
                out.extend_from_slice(&u32_field(a.largest_acked, "largest acked")?.to_be_bytes());
                out.extend_from_slice(&a.ack_delay_us.to_be_bytes());
                out.extend_from_slice(&count.to_be_bytes());
                out.extend_from_slice(
                    &u32_field(a.first_block_length, "first block")?.to_be_bytes(),
                );
                for b in &a.blocks {
                    out.extend_from_slice(&u32_field(b.gap, "ack gap")?.to_be_bytes());
                    out.extend_from_slice(&u32_field(b.length, "ack block")?.to_be_bytes());
                }
            }
            Frame::VersionNegotiation { versions } => {
                let count = u16::try_from(versions.len())
                    .map_err(|_| WireError::FieldRange("version count"))?;
                out.push(VERSION_NEGOTIATION);
                out.extend_from_slice(&count.to_be_bytes());
                for v in versions {
                    out.extend_from_slice(&v.to_be_bytes());
                }
            }
            Frame::ConnectionClose { error_code, reason } => {
                let len = u16::try_from(reason.len())
                    .map_err(|_| WireError::FieldRange("close reason length"))?;
                out.push(CONNECTION_CLOSE);
                out.extend_from_slice(&error_code.to_be_bytes());
                out.extend_from_slice(&len.to_be_bytes());
                out.extend_from_slice(reason);
            }
            Frame::MaxData { maximum } => {
                out.push(MAX_DATA);
                out.extend_from_slice(&maximum.to_be_bytes());
            }
            Frame::MaxStreamData { stream_id, maximum } => {
                out.push(MAX_STREAM_DATA);
                out.extend_from_slice(&stream_id.0.to_be_bytes());
                out.extend_from_slice(&maximum.to_be_bytes());
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out)?;
        Ok(out)
    }

    fn read(r: &mut Reader<'_>) -> Result<Frame, WireError> {
        let start = r.pos();
        // Field reads past the end are reported as a frame overrun at the
        // frame's first byte.
        let overrun = |e: WireError| match e {
            WireError::Truncated { .. } => WireError::FrameOverrun { offset: start },
            other => other,
        };
        let code = r.u8()?;
        let frame = match code {
            PADDING => {
                let mut length = 1;
                while r.peek_u8() == Some(PADDING) {
                    r.u8()?;
                    length += 1;
                }
                Frame::Padding { length }
            }
            STREAM | STREAM_FIN => {
                let stream_id = StreamId(r.u32().map_err(overrun)?);
                let offset = r.u64().map_err(overrun)?;
                let len = r.u16().map_err(overrun)? as usize;
                let data = r.bytes(len).map_err(overrun)?.to_vec();
                if offset.checked_add(len as u64).is_none() {
                    return Err(WireError::FieldRange("stream offset"));
                }
                Frame::Stream(StreamFrame {
                    stream_id,
                    offset,
                    fin: code == STREAM_FIN,
                    data,
                })
            }
            ACK => {
                let largest_acked = r.u32().map_err(overrun)? as u64;
                let ack_delay_us = r.u32().map_err(overrun)?;
                let count = r.u16().map_err(overrun)? as usize;
                let first_block_length = r.u32().map_err(overrun)? as u64;
                let mut blocks = Vec::with_capacity(count);
                for _ in 0..count {
                    let gap = r.u32().map_err(overrun)? as u64;
                    let length = r.u32().map_err(overrun)? as u64;
                    blocks.push(AckBlock { gap, length });
                }
                let ack = AckFrame {
                    largest_acked,
                    ack_delay_us,
                    first_block_length,
                    blocks,
                };
                ack.validate(start)?;
                Frame::Ack(ack)
            }
            VERSION_NEGOTIATION => {
                let count = r.u16().map_err(overrun)? as usize;
                let versions = (0..count)
                    .map(|_| r.u32().map_err(overrun))
                    .collect::<Result<_, _>>()?;
                Frame::VersionNegotiation { versions }
            }
            CONNECTION_CLOSE => {
                let error_code = r.u16().map_err(overrun)?;
                let len = r.u16().map_err(overrun)? as usize;
                let reason = r.bytes(len).map_err(overrun)?.to_vec();
                Frame::ConnectionClose { error_code, reason }
            }
            MAX_DATA => Frame::MaxData {
                maximum: r.u64().map_err(overrun)?,
            },
            MAX_STREAM_DATA => {
                let stream_id = StreamId(r.u32().map_err(overrun)?);
                let maximum = r.u64().map_err(overrun)?;
                Frame::MaxStreamData { stream_id, maximum }
            }
            other => {
                return Err(WireError::UnknownFrameType {
                    code: other,
                    offset: start,
                })
            }
        };
        Ok(frame)
    }
}

/// Parses a whole payload into frames. Byte offsets in errors are relative
/// to the start of `b`.
pub fn parse_frames(b: &[u8]) -> Result<Vec<Frame>, WireError> {
    let mut r = Reader::new(b);
    let mut frames = Vec::new();
    while !r.is_empty() {
        frames.push(Frame::read(&mut r)?);
    }
    Ok(frames)
}

pub(crate) fn parse_frames_at(b: &[u8], base: usize) -> Result<Vec<Frame>, WireError> {
    parse_frames(b).map_err(|e| shift(e, base))
}

fn shift(e: WireError, base: usize) -> WireError {
    match e {
        WireError::Truncated { offset } => WireError::Truncated {
            offset: offset + base,
        },
        WireError::UnknownFrameType { code, offset } => WireError::UnknownFrameType {
            code,
            offset: offset + base,
        },
        WireError::InvalidAckBlocks { offset } => WireError::InvalidAckBlocks {
            offset: offset + base,
        },
        WireError::FrameOverrun { offset } => WireError::FrameOverrun {
            offset: offset + base,
        },
        other => other,
    }
}

pub fn serialize_frames(frames: &[Frame]) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(frames.iter().map(Frame::encoded_len).sum());
    for f in frames {
        f.encode_into(&mut out)?;
    }
    Ok(out)
}
