//! Socket- and stream-level send and receive buffers.

mod socket_rx;
mod socket_tx;
mod stream_rx;
mod stream_tx;

pub use socket_rx::SocketRxBuffer;
pub use socket_tx::{AckOutcome, SentPacketInfo, SocketTxBuffer, SocketTxItem};
pub use stream_rx::StreamRxBuffer;
pub use stream_tx::{StreamChunk, StreamTxBuffer};

use thiserror::Error;

pub const DEFAULT_SOCKET_BUFFER: usize = 128 * 1024;
pub const DEFAULT_STREAM_BUFFER: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BufferError {
    #[error("ACK for packet {largest} which was never sent")]
    AckOfUnsent { largest: u64 },
    #[error("packet number {pn} does not exceed the last recorded {last}")]
    PacketNumberReuse { pn: u64, last: u64 },
    #[error("requeue of [{offset}, {end}) overlaps buffered stream data")]
    RequeueOverlap { offset: u64, end: u64 },
    #[error("stream data up to {end} extends past the final size {fin}")]
    DataBeyondFin { end: u64, fin: u64 },
    #[error("final size {new} conflicts with {previous}")]
    FinMismatch { previous: u64, new: u64 },
    #[error("{needed} bytes exceed the remaining capacity of {available}")]
    Capacity { needed: usize, available: usize },
}
