use std::time::Duration;

use crate::buffers::{DEFAULT_SOCKET_BUFFER, DEFAULT_STREAM_BUFFER};
use crate::wire::{WireError, QUIC_VERSION_E};

pub const CRYPTO_BLOB_LEN: usize = 64;
pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(300);
pub const DEFAULT_MAX_STREAMS: u16 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransportParameters {
    /// Connection-level receive credit in bytes.
    pub max_data: u64,
    /// Per-stream receive credit in bytes.
    pub max_stream_data: u64,
    pub max_streams: u16,
    pub idle_timeout: Duration,
    pub initial_version: u32,
    pub omit_connection_id: bool,
}

impl Default for TransportParameters {
    fn default() -> Self {
        TransportParameters {
            max_data: DEFAULT_SOCKET_BUFFER as u64,
            max_stream_data: DEFAULT_STREAM_BUFFER as u64,
            max_streams: DEFAULT_MAX_STREAMS,
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            initial_version: QUIC_VERSION_E,
            omit_connection_id: false,
        }
    }
}

impl TransportParameters {
    pub const ENCODED_LEN: usize = 8 + 8 + 2 + 4 + 4 + 1;

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.max_data == 0 || self.max_stream_data == 0 {
            return Err("flow-control credit must be positive");
        }
        if self.max_streams == 0 {
            return Err("max_streams must be positive");
        }
        if self.idle_timeout.as_secs() == 0 || self.idle_timeout.subsec_nanos() != 0 {
            return Err("idle timeout must be a positive whole number of seconds");
        }
        Ok(())
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.max_data.to_be_bytes());
        out.extend_from_slice(&self.max_stream_data.to_be_bytes());
        out.extend_from_slice(&self.max_streams.to_be_bytes());
        out.extend_from_slice(&(self.idle_timeout.as_secs() as u32).to_be_bytes());
        out.extend_from_slice(&self.initial_version.to_be_bytes());
        out.push(self.omit_connection_id as u8);
    }

    pub fn decode(b: &[u8]) -> Result<Self, WireError> {
        if b.len() < Self::ENCODED_LEN {
            return Err(WireError::Truncated { offset: b.len() });
        }
        let u64_at = |i: usize| u64::from_be_bytes(b[i..i + 8].try_into().unwrap());
        let u32_at = |i: usize| u32::from_be_bytes(b[i..i + 4].try_into().unwrap());
        Ok(TransportParameters {
            max_data: u64_at(0),
            max_stream_data: u64_at(8),
            max_streams: u16::from_be_bytes([b[16], b[17]]),
            idle_timeout: Duration::from_secs(u32_at(18) as u64),
            initial_version: u32_at(22),
            omit_connection_id: b[26] != 0,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HandshakeKind {
    ClientHello = 1,
    ServerHello = 2,
    ClientFinished = 3,
    ZeroRttHello = 4,
}

/// Stream-0 payload of handshake packets. The crypto blob only occupies
/// space; it is never interpreted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HandshakeMessage {
    pub kind: HandshakeKind,
    pub params: TransportParameters,
}

impl HandshakeMessage {
    pub const ENCODED_LEN: usize = 1 + TransportParameters::ENCODED_LEN + CRYPTO_BLOB_LEN;

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::ENCODED_LEN);
        out.push(self.kind as u8);
        self.params.encode_into(&mut out);
        out.extend(std::iter::repeat_n(0xC5, CRYPTO_BLOB_LEN));
        out
    }

    pub fn decode(b: &[u8]) -> Result<Self, WireError> {
        if b.len() != Self::ENCODED_LEN {
            return Err(WireError::Truncated { offset: b.len() });
        }
        let kind = match b[0] {
            1 => HandshakeKind::ClientHello,
            2 => HandshakeKind::ServerHello,
            3 => HandshakeKind::ClientFinished,
            4 => HandshakeKind::ZeroRttHello,
            _ => return Err(WireError::FieldRange("handshake message type")),
        };
        Ok(HandshakeMessage {
            kind,
            params: TransportParameters::decode(&b[1..])?,
        })
    }
}
