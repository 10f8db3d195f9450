use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("input truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("unknown long header type {code:#04x} at byte {offset}")]
    UnknownLongType { code: u8, offset: usize },
    #[error("invalid header flags {flags:#04x} at byte {offset}")]
    InvalidFlags { flags: u8, offset: usize },
    #[error("packet number {pn} does not use the minimal encoding at byte {offset}")]
    NonMinimalPacketNumber { pn: u64, offset: usize },
    #[error("packet number {0} exceeds 32 bits")]
    PacketNumberTooLarge(u64),
    #[error("unknown frame type {code:#04x} at byte {offset}")]
    UnknownFrameType { code: u8, offset: usize },
    #[error("ACK blocks overlap or underflow at byte {offset}")]
    InvalidAckBlocks { offset: usize },
    #[error("frame at byte {offset} extends past the end of the payload")]
    FrameOverrun { offset: usize },
    #[error("frame field out of range: {0}")]
    FieldRange(&'static str),
    #[error("packet has no frames")]
    EmptyPacket,
    #[error("packet of {size} bytes exceeds the {max}-byte limit")]
    PacketTooLarge { size: usize, max: usize },
    #[error("ack sent at {sent_us} us precedes reception at {received_us} us")]
    NegativeAckDelay { received_us: u64, sent_us: u64 },
}
