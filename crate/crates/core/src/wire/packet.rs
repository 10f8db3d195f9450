use super::cursor::Reader;
use super::frame::{parse_frames_at, Frame};
use super::header::QuicHeader;
use super::{WireError, MAX_PACKET_SIZE};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuicPacket {
    pub header: QuicHeader,
    pub frames: Vec<Frame>,
}

impl QuicPacket {
    pub fn new(header: QuicHeader, frames: Vec<Frame>) -> Self {
        QuicPacket { header, frames }
    }

    pub fn encoded_len(&self) -> Result<usize, WireError> {
        Ok(self.header.encoded_len()? + self.frames.iter().map(Frame::encoded_len).sum::<usize>())
    }

    pub fn is_ack_eliciting(&self) -> bool {
        self.frames.iter().any(Frame::is_ack_eliciting)
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        if self.frames.is_empty() {
            return Err(WireError::EmptyPacket);
        }
        let size = self.encoded_len()?;
        if size > MAX_PACKET_SIZE {
            return Err(WireError::PacketTooLarge {
                size,
                max: MAX_PACKET_SIZE,
            });
        }
        let mut out = Vec::with_capacity(size);
        self.header.encode_into(&mut out)?;
        for f in &self.frames {
            f.encode_into(&mut out)?;
        }
        debug_assert_eq!(out.len(), size);
        Ok(out)
    }

    pub fn decode(b: &[u8]) -> Result<QuicPacket, WireError> {
        if b.len() > MAX_PACKET_SIZE {
            return Err(WireError::PacketTooLarge {
                size: b.len(),
                max: MAX_PACKET_SIZE,
            });
        }
        let mut r = Reader::new(b);
        let header = QuicHeader::read(&mut r)?;
        let at = r.pos();
        let frames = parse_frames_at(&b[at..], at)?;
        if frames.is_empty() {
            return Err(WireError::EmptyPacket);
        }
        Ok(QuicPacket { header, frames })
    }
}
