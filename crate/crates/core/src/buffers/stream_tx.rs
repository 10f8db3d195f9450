use std::collections::BTreeMap;

use super::BufferError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamChunk {
    pub offset: u64,
    pub data: Vec<u8>,
    pub fin: bool,
}

impl StreamChunk {
    pub fn end(&self) -> u64 {
        self.offset + self.data.len() as u64
    }
}

/// Application data waiting to be handed to the socket, addressed by
/// stream offset. Offsets are assigned once, when data is written.
#[derive(Debug)]
pub struct StreamTxBuffer {
    unsent: BTreeMap<u64, Vec<u8>>,
    capacity: usize,
    buffered: usize,
    next_offset: u64,
    fin_offset: Option<u64>,
    fin_pending: bool,
}

impl StreamTxBuffer {
    pub fn new(capacity: usize) -> Self {
        StreamTxBuffer {
            unsent: BTreeMap::new(),
            capacity,
            buffered: 0,
            next_offset: 0,
            fin_offset: None,
            fin_pending: false,
        }
    }

    pub fn buffered(&self) -> usize {
        self.buffered
    }

    pub fn available(&self) -> usize {
        self.capacity - self.buffered
    }

    /// Total bytes ever accepted.
    pub fn written(&self) -> u64 {
        self.next_offset
    }

    pub fn is_finished(&self) -> bool {
        self.fin_offset.is_some()
    }

    pub fn has_pending(&self) -> bool {
        !self.unsent.is_empty() || self.fin_pending
    }

    /// Accepts as much of `data` as fits, returning the accepted length.
    pub fn write(&mut self, data: &[u8]) -> usize {
        if self.fin_offset.is_some() {
            return 0;
        }
        let n = data.len().min(self.available());
        if n > 0 {
            self.unsent.insert(self.next_offset, data[..n].to_vec());
            self.next_offset += n as u64;
            self.buffered += n;
        }
        n
    }

    /// Marks the end of the stream at the current write offset.
    pub fn finish(&mut self) {
        if self.fin_offset.is_none() {
            self.fin_offset = Some(self.next_offset);
            self.fin_pending = true;
        }
    }

    /// Lowest-offset contiguous run of at most `max_len` bytes. A chunk
    /// reaching the final offset carries the FIN, so a finished stream with
    /// nothing left to send yields one empty FIN chunk.
    pub fn issue(&mut self, max_len: usize) -> Option<StreamChunk> {
        let Some((&offset, _)) = self.unsent.first_key_value() else {
            if self.fin_pending {
                self.fin_pending = false;
                let at = self.fin_offset.unwrap();
                return Some(StreamChunk {
                    offset: at,
                    data: Vec::new(),
                    fin: true,
                });
            }
            return None;
        };
        if max_len == 0 {
            return None;
        }
        let mut data = Vec::new();
        let mut at = offset;
        while data.len() < max_len {
            let Some(mut seg) = self.unsent.remove(&at) else {
                break;
            };
            let room = max_len - data.len();
            if seg.len() > room {
                let rest = seg.split_off(room);
                self.unsent.insert(at + room as u64, rest);
            }
            at += seg.len() as u64;
            data.extend_from_slice(&seg);
        }
        self.buffered -= data.len();
        let end = offset + data.len() as u64;
        let fin =
            self.fin_pending && Some(end) == self.fin_offset && !self.unsent.contains_key(&end);
        if fin {
            self.fin_pending = false;
        }
        Some(StreamChunk { offset, data, fin })
    }

    /// Returns a chunk that could not be placed in the socket buffer. It will
    /// be issued again at the same offset.
    pub fn requeue(&mut self, chunk: StreamChunk) -> Result<(), BufferError> {
        let end = chunk.end();
        let overlap = |o: u64, len: usize| o < end && chunk.offset < o + len as u64;
        let prev = self.unsent.range(..=chunk.offset).next_back();
        let next = self.unsent.range(chunk.offset..).next();
        if end > self.next_offset
            || prev.is_some_and(|(&o, d)| overlap(o, d.len()))
            || next.is_some_and(|(&o, d)| overlap(o, d.len()))
        {
            return Err(BufferError::RequeueOverlap {
                offset: chunk.offset,
                end,
            });
        }
        if chunk.fin {
            self.fin_pending = true;
        }
        if !chunk.data.is_empty() {
            self.buffered += chunk.data.len();
            self.unsent.insert(chunk.offset, chunk.data);
        }
        Ok(())
    }
}
