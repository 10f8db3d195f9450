//! Byte formats exchanged between simulated endpoints.

mod cursor;
mod error;
pub mod frame;
pub mod header;
pub mod packet;

pub use error::WireError;
pub use frame::{
    parse_frames, serialize_frames, AckBlock, AckFrame, Frame, FrameKind, StreamFrame, StreamId,
    MAX_STREAM_FRAME_DATA, STREAM_FRAME_OVERHEAD,
};
pub use header::{
    pn_length, ConnectionId, HeaderForm, LongType, QuicHeader, LONG_HEADER_LEN,
    MAX_SHORT_HEADER_LEN,
};
pub use packet::QuicPacket;

use crate::sim::SimTime;

/// Largest serialized packet, equal to the maximum segment size.
pub const MAX_PACKET_SIZE: usize = 1460;

pub const QUIC_VERSION_NEGOTIATION: u32 = 0;
pub const QUIC_VERSION_D: u32 = 0x0D;
pub const QUIC_VERSION_E: u32 = 0x0E;
/// In order of preference.
pub const SUPPORTED_VERSIONS: [u32; 2] = [QUIC_VERSION_E, QUIC_VERSION_D];

/// Delay between receiving the largest acknowledged packet and sending its
/// ACK, in microseconds, saturating at `u32::MAX`.
pub fn ack_delay_encode(received_at: SimTime, ack_sent_at: SimTime) -> Result<u32, WireError> {
    match ack_sent_at.checked_since(received_at) {
        Some(d) => Ok(u32::try_from(d.as_micros()).unwrap_or(u32::MAX)),
        None => Err(WireError::NegativeAckDelay {
            received_us: received_at.as_micros(),
            sent_us: ack_sent_at.as_micros(),
        }),
    }
}
