//! Packet headers.
//!
//! Layout, all integers big-endian:
//!
//! ```text
//! LONG  (17 B): flags(1) = 0x80 | type | conn_id(8) | version(4) | pn(4)
//! SHORT (2-13): flags(1) = 0x40 | 0x20 if conn_id present | pn-length code
//!               [conn_id(8)] | pn(1, 2 or 4)
//! ```
//!
//! Short-header packet numbers are written at full value in the narrowest
//! of 1, 2 or 4 bytes; there is no truncation relative to acknowledged
//! packets, so packet numbers are limited to 32 bits.

use std::fmt;

use super::cursor::Reader;
use super::WireError;

pub const LONG_HEADER_LEN: usize = 17;
pub const MAX_SHORT_HEADER_LEN: usize = 13;

const LONG_FORM: u8 = 0x80;
const SHORT_FIXED: u8 = 0x40;
const SHORT_CID_PRESENT: u8 = 0x20;
const SHORT_PN_MASK: u8 = 0x03;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConnectionId(pub u64);

impl fmt::Display for ConnectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LongType {
    VersionNegotiation,
    ClientInitial,
    Handshake,
    ZeroRttProtected,
}

impl LongType {
    fn code(self) -> u8 {
        match self {
            LongType::VersionNegotiation => 0x01,
            LongType::ClientInitial => 0x02,
            LongType::Handshake => 0x03,
            LongType::ZeroRttProtected => 0x04,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0x01 => LongType::VersionNegotiation,
            0x02 => LongType::ClientInitial,
            0x03 => LongType::Handshake,
            0x04 => LongType::ZeroRttProtected,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeaderForm {
    Long,
    Short,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuicHeader {
    Long {
        long_type: LongType,
        connection_id: ConnectionId,
        version: u32,
        packet_number: u64,
    },
    Short {
        /// `None` when the omit-connection-id transport parameter is set.
        connection_id: Option<ConnectionId>,
        packet_number: u64,
    },
}

/// Narrowest width in {1, 2, 4} bytes able to hold `pn`.
pub fn pn_length(pn: u64) -> Result<usize, WireError> {
    match pn {
        0..=0xff => Ok(1),
        0x100..=0xffff => Ok(2),
        0x1_0000..=0xffff_ffff => Ok(4),
        _ => Err(WireError::PacketNumberTooLarge(pn)),
    }
}

fn pn_code(len: usize) -> u8 {
    match len {
        1 => 0,
        2 => 1,
        _ => 2,
    }
}

impl QuicHeader {
    pub fn form(&self) -> HeaderForm {
        match self {
            QuicHeader::Long { .. } => HeaderForm::Long,
            QuicHeader::Short { .. } => HeaderForm::Short,
        }
    }

    pub fn packet_number(&self) -> u64 {
        match *self {
            QuicHeader::Long { packet_number, .. } | QuicHeader::Short { packet_number, .. } => {
                packet_number
            }
        }
    }

    pub fn connection_id(&self) -> Option<ConnectionId> {
        match *self {
            QuicHeader::Long { connection_id, .. } => Some(connection_id),
            QuicHeader::Short { connection_id, .. } => connection_id,
        }
    }

    pub fn long_type(&self) -> Option<LongType> {
        match *self {
            QuicHeader::Long { long_type, .. } => Some(long_type),
            QuicHeader::Short { .. } => None,
        }
    }

    pub fn encoded_len(&self) -> Result<usize, WireError> {
        match *self {
            QuicHeader::Long { packet_number, .. } => {
                if packet_number > u32::MAX as u64 {
                    return Err(WireError::PacketNumberTooLarge(packet_number));
                }
                Ok(LONG_HEADER_LEN)
            }
            QuicHeader::Short {
                connection_id,
                packet_number,
            } => Ok(1 + if connection_id.is_some() { 8 } else { 0 } + pn_length(packet_number)?),
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<(), WireError> {
        match *self {
            QuicHeader::Long {
                long_type,
                connection_id,
                version,
                packet_number,
            } => {
                let pn = u32::try_from(packet_number)
                    .map_err(|_| WireError::PacketNumberTooLarge(packet_number))?;
                out.push(LONG_FORM | long_type.code());
                out.extend_from_slice(&connection_id.0.to_be_bytes());
                out.extend_from_slice(&version.to_be_bytes());
                out.extend_from_slice(&pn.to_be_bytes());
            }
            QuicHeader::Short {
                connection_id,
                packet_number,
            } => {
                let len = pn_length(packet_number)?;
                let mut flags = SHORT_FIXED | pn_code(len);
                if connection_id.is_some() {
                    flags |= SHORT_CID_PRESENT;
                }
                out.push(flags);
                if let Some(cid) = connection_id {
                    out.extend_from_slice(&cid.0.to_be_bytes());
                }
                out.extend_from_slice(&packet_number.to_be_bytes()[8 - len..]);
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::with_capacity(LONG_HEADER_LEN);
        self.encode_into(&mut out)?;
        Ok(out)
    }

    /// Parses a header from the front of `b`, returning it with the number
    /// of bytes consumed.
    pub fn parse(b: &[u8]) -> Result<(QuicHeader, usize), WireError> {
        let mut r = Reader::new(b);
        let h = Self::read(&mut r)?;
        Ok((h, r.pos()))
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<QuicHeader, WireError> {
        let flags_at = r.pos();
        let flags = r.u8()?;
        if flags & LONG_FORM != 0 {
            let code = flags & !LONG_FORM;
            let long_type = LongType::from_code(code).ok_or(WireError::UnknownLongType {
                code,
                offset: flags_at,
            })?;
            let connection_id = ConnectionId(r.u64()?);
            let version = r.u32()?;
            let packet_number = r.u32()? as u64;
            return Ok(QuicHeader::Long {
                long_type,
                connection_id,
                version,
                packet_number,
            });
        }
        if flags & !(SHORT_FIXED | SHORT_CID_PRESENT | SHORT_PN_MASK) != 0
            || flags & SHORT_FIXED == 0
        {
            return Err(WireError::InvalidFlags {
                flags,
                offset: flags_at,
            });
        }
        let len = match flags & SHORT_PN_MASK {
            0 => 1,
            1 => 2,
            2 => 4,
            _ => {
                return Err(WireError::InvalidFlags {
                    flags,
                    offset: flags_at,
                })
            }
        };
        let connection_id = if flags & SHORT_CID_PRESENT != 0 {
            Some(ConnectionId(r.u64()?))
        } else {
            None
        };
        let pn_at = r.pos();
        let packet_number = r.uint(len)?;
        if pn_length(packet_number)? != len {
            return Err(WireError::NonMinimalPacketNumber {
                pn: packet_number,
                offset: pn_at,
            });
        }
        Ok(QuicHeader::Short {
            connection_id,
            packet_number,
        })
    }
}
