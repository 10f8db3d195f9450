use std::collections::BTreeMap;

use super::BufferError;

/// Out-of-order reassembly for one stream. Overlapping data keeps the bytes
/// that arrived first.
#[derive(Debug)]
pub struct StreamRxBuffer {
    segments: BTreeMap<u64, Vec<u8>>,
    capacity: usize,
    stored: usize,
    next_expected: u64,
    fin_offset: Option<u64>,
    highest_received: u64,
}

impl StreamRxBuffer {
    pub fn new(capacity: usize) -> Self {
        StreamRxBuffer {
            segments: BTreeMap::new(),
            capacity,
            stored: 0,
            next_expected: 0,
            fin_offset: None,
            highest_received: 0,
        }
    }

    pub fn next_expected(&self) -> u64 {
        self.next_expected
    }

    /// Bytes held out of order.
    pub fn stored(&self) -> usize {
        self.stored
    }

    /// Final stream length once the FIN has been seen.
    pub fn final_size(&self) -> Option<u64> {
        self.fin_offset
    }

    /// Highest stream offset received so far.
    pub fn highest_received(&self) -> u64 {
        self.highest_received
    }

    /// All data up to the FIN has been released.
    pub fn is_complete(&self) -> bool {
        self.fin_offset == Some(self.next_expected)
    }

    /// Stores a segment and returns the bytes that became contiguous.
    pub fn insert(&mut self, offset: u64, data: &[u8], fin: bool) -> Result<Vec<u8>, BufferError> {
        let end = offset + data.len() as u64;
        if fin {
            if let Some(prev) = self.fin_offset.filter(|&f| f != end) {
                return Err(BufferError::FinMismatch {
                    previous: prev,
                    new: end,
                });
            }
            if end < self.highest_received {
                return Err(BufferError::FinMismatch {
                    previous: self.highest_received,
                    new: end,
                });
            }
            self.fin_offset = Some(end);
        }
        if let Some(f) = self.fin_offset {
            if end > f {
                return Err(BufferError::DataBeyondFin { end, fin: f });
            }
        }
        self.highest_received = self.highest_received.max(end);

        // Fill only the gaps not covered by stored segments.
        let mut pos = offset.max(self.next_expected);
        let mut pieces = Vec::new();
        if let Some((&o, d)) = self.segments.range(..pos).next_back() {
            pos = pos.max(o + d.len() as u64);
        }
        if pos < end {
            for (&o, d) in self.segments.range(pos..end) {
                if o > pos {
                    pieces.push((pos, o));
                }
                pos = pos.max(o + d.len() as u64);
            }
        }
        if pos < end {
            pieces.push((pos, end));
        }
        let added: usize = pieces.iter().map(|(a, b)| (b - a) as usize).sum();
        if self.stored + added > self.capacity {
            return Err(BufferError::Capacity {
                needed: added,
                available: self.capacity - self.stored,
            });
        }
        for (a, b) in pieces {
            let s = (a - offset) as usize;
            let e = (b - offset) as usize;
            self.segments.insert(a, data[s..e].to_vec());
        }
        self.stored += added;

        let mut out = Vec::new();
        while let Some(seg) = self.segments.remove(&self.next_expected) {
            self.stored -= seg.len();
            self.next_expected += seg.len() as u64;
            out.extend_from_slice(&seg);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes(range: std::ops::Range<u64>) -> Vec<u8> {
        range.map(|i| (i % 251) as u8).collect()
    }

    #[test]
    fn contiguity() {
        let mut b = StreamRxBuffer::new(10_000);
        assert_eq!(b.insert(0, &bytes(0..500), false).unwrap(), bytes(0..500));
        assert!(b
            .insert(1000, &bytes(1000..1500), false)
            .unwrap()
            .is_empty());
        assert_eq!(
            b.insert(500, &bytes(500..1000), false).unwrap(),
            bytes(500..1500)
        );
        assert_eq!(b.stored(), 0);
    }

    #[test]
    fn duplicates_release_nothing() {
        let mut b = StreamRxBuffer::new(10_000);
        b.insert(0, &bytes(0..500), false).unwrap();
        assert!(b.insert(0, &bytes(0..500), false).unwrap().is_empty());
        assert_eq!(b.next_expected(), 500);
    }

    #[test]
    fn overlap_keeps_first_bytes() {
        let mut b = StreamRxBuffer::new(10_000);
        b.insert(10, &[1; 10], false).unwrap();
        b.insert(30, &[1; 10], false).unwrap();
        let out = b.insert(0, &[2; 45], false).unwrap();
        let mut expected = vec![2; 10];
        expected.extend([1; 10]);
        expected.extend([2; 10]);
        expected.extend([1; 10]);
        expected.extend([2; 5]);
        assert_eq!(out, expected);
    }

    #[test]
    fn fin_accounting() {
        let mut b = StreamRxBuffer::new(10_000);
        b.insert(0, &[0; 100], true).unwrap();
        assert_eq!(b.final_size(), Some(100));
        assert!(b.is_complete());
        assert!(matches!(
            b.insert(100, &[0; 1], false),
            Err(BufferError::DataBeyondFin { .. })
        ));
        assert!(matches!(
            b.insert(0, &[0; 50], true),
            Err(BufferError::FinMismatch { .. })
        ));
    }

    #[test]
    fn fin_before_data() {
        let mut b = StreamRxBuffer::new(10_000);
        assert!(b.insert(50, &[0; 50], true).unwrap().is_empty());
        assert!(!b.is_complete());
        assert_eq!(b.insert(0, &[0; 50], false).unwrap().len(), 100);
        assert!(b.is_complete());
    }

    #[test]
    fn capacity_enforced() {
        let mut b = StreamRxBuffer::new(100);
        b.insert(10, &[0; 101], false).unwrap_err();
        b.insert(10, &[0; 90], false).unwrap();
        assert_eq!(b.stored(), 90);
    }
}
