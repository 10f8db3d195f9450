use std::collections::VecDeque;

use super::BufferError;
use crate::congestion::LossRule;
use crate::sim::SimTime;
use crate::wire::{AckFrame, Frame, StreamFrame, STREAM_FRAME_OVERHEAD};

/// A transmitted packet. Only retransmittable frames are kept; ACK and
/// padding frames are rebuilt for every packet.
#[derive(Clone, Debug)]
pub struct SocketTxItem {
    pub packet_number: u64,
    pub frames: Vec<Frame>,
    /// Serialized packet size.
    pub size: usize,
    pub sent_at: SimTime,
    pub acked_at: Option<SimTime>,
    pub in_flight: bool,
    pub lost: bool,
    pub retransmitted: bool,
    pub released: bool,
}

impl SocketTxItem {
    fn outstanding(&self) -> bool {
        self.acked_at.is_none() && !self.lost
    }

    fn info(&self) -> SentPacketInfo {
        SentPacketInfo {
            packet_number: self.packet_number,
            size: self.size,
            sent_at: self.sent_at,
            in_flight: self.in_flight,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SentPacketInfo {
    pub packet_number: u64,
    pub size: usize,
    pub sent_at: SimTime,
    pub in_flight: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AckOutcome {
    pub acked: Vec<SentPacketInfo>,
    pub lost: Vec<SentPacketInfo>,
    /// The frame's largest acknowledged packet, when this ACK is the first
    /// to cover it. Source of the RTT sample.
    pub largest_newly_acked: Option<SentPacketInfo>,
}

impl AckOutcome {
    pub fn acked_bytes(&self) -> usize {
        self.acked
            .iter()
            .filter(|p| p.in_flight)
            .map(|p| p.size)
            .sum()
    }
}

/// Bytes a frame occupies in the buffer: payload for stream frames, the
/// encoding otherwise.
fn buffered_size(f: &Frame) -> usize {
    match f {
        Frame::Stream(s) => s.data.len(),
        other => other.encoded_len(),
    }
}

#[derive(Debug)]
pub struct SocketTxBuffer {
    unsent: VecDeque<Frame>,
    /// Leading entries of `unsent` that jump the queue: stream 0, control
    /// frames and retransmissions.
    priority: usize,
    sent: VecDeque<SocketTxItem>,
    capacity: usize,
    buffered: usize,
    bytes_in_flight: usize,
    largest_acked: Option<u64>,
    last_sent_pn: Option<u64>,
}

impl SocketTxBuffer {
    pub fn new(capacity: usize) -> Self {
        SocketTxBuffer {
            unsent: VecDeque::new(),
            priority: 0,
            sent: VecDeque::new(),
            capacity,
            buffered: 0,
            bytes_in_flight: 0,
            largest_acked: None,
            last_sent_pn: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Unsent plus sent-but-unacknowledged bytes.
    pub fn buffered(&self) -> usize {
        self.buffered
    }

    pub fn available(&self) -> usize {
        self.capacity - self.buffered
    }

    pub fn bytes_in_flight(&self) -> usize {
        self.bytes_in_flight
    }

    pub fn largest_acked(&self) -> Option<u64> {
        self.largest_acked
    }

    pub fn has_unsent(&self) -> bool {
        !self.unsent.is_empty()
    }

    pub fn unsent_frames(&self) -> usize {
        self.unsent.len()
    }

    /// Encoded size of every unsent frame.
    pub fn unsent_encoded_len(&self) -> usize {
        self.unsent.iter().map(Frame::encoded_len).sum()
    }

    pub fn sent_items(&self) -> impl Iterator<Item = &SocketTxItem> {
        self.sent.iter()
    }

    /// Whether any packet is neither acknowledged nor declared lost.
    pub fn has_outstanding(&self) -> bool {
        self.sent.iter().any(SocketTxItem::outstanding)
    }

    pub fn has_in_flight(&self) -> bool {
        self.bytes_in_flight > 0
    }

    /// Rejects the frame, leaving the buffer untouched, if it would not fit.
    /// Priority frames go ahead of every other unsent frame.
    pub fn add(&mut self, frame: Frame, priority: bool) -> bool {
        let size = buffered_size(&frame);
        if size > self.available() {
            return false;
        }
        self.buffered += size;
        if priority {
            self.unsent.insert(self.priority, frame);
            self.priority += 1;
        } else {
            self.unsent.push_back(frame);
        }
        true
    }

    /// Takes frames from the head of the unsent list totalling at most
    /// `max_size` encoded bytes, splitting a stream frame that does not fit.
    pub fn next_packet(&mut self, max_size: usize) -> Option<Vec<Frame>> {
        let mut room = max_size;
        let mut out = Vec::new();
        while let Some(front) = self.unsent.front_mut() {
            let len = front.encoded_len();
            if len <= room {
                room -= len;
                out.push(self.unsent.pop_front().unwrap());
                self.priority = self.priority.saturating_sub(1);
                continue;
            }
            if let Frame::Stream(s) = front {
                if room > STREAM_FRAME_OVERHEAD {
                    let take = room - STREAM_FRAME_OVERHEAD;
                    let rest = s.data.split_off(take);
                    let head = StreamFrame {
                        stream_id: s.stream_id,
                        offset: s.offset,
                        fin: false,
                        data: std::mem::replace(&mut s.data, rest),
                    };
                    s.offset += take as u64;
                    out.push(Frame::Stream(head));
                }
            }
            break;
        }
        if out.is_empty() {
            None
        } else {
            Some(out)
        }
    }

    /// Records a transmitted packet. `frames` must be the frames previously
    /// returned by `next_packet`, or empty for packets that carry none.
    pub fn on_sent(
        &mut self,
        packet_number: u64,
        frames: Vec<Frame>,
        size: usize,
        now: SimTime,
        in_flight: bool,
    ) -> Result<(), BufferError> {
        if let Some(last) = self.last_sent_pn {
            if packet_number <= last {
                return Err(BufferError::PacketNumberReuse {
                    pn: packet_number,
                    last,
                });
            }
        }
        self.last_sent_pn = Some(packet_number);
        if in_flight {
            self.bytes_in_flight += size;
        }
        self.sent.push_back(SocketTxItem {
            packet_number,
            frames,
            size,
            sent_at: now,
            acked_at: None,
            in_flight,
            lost: false,
            retransmitted: false,
            released: false,
        });
        Ok(())
    }

    fn index_of(&self, pn: u64) -> usize {
        self.sent.partition_point(|i| i.packet_number < pn)
    }

    /// Marks the acknowledged packets, then applies the loss rule to what
    /// is still outstanding.
    pub fn on_ack(
        &mut self,
        ack: &AckFrame,
        rule: &LossRule,
        now: SimTime,
    ) -> Result<AckOutcome, BufferError> {
        match self.last_sent_pn {
            Some(last) if ack.largest_acked <= last => {}
            _ => {
                return Err(BufferError::AckOfUnsent {
                    largest: ack.largest_acked,
                })
            }
        }
        let mut out = AckOutcome::default();
        for range in ack.ranges().into_iter().rev() {
            let mut i = self.index_of(*range.start());
            while i < self.sent.len() && self.sent[i].packet_number <= *range.end() {
                let item = &mut self.sent[i];
                if item.outstanding() {
                    item.acked_at = Some(now);
                    if item.in_flight {
                        self.bytes_in_flight -= item.size;
                    }
                    let released: usize = item.frames.iter().map(buffered_size).sum();
                    item.frames.clear();
                    item.released = true;
                    self.buffered -= released;
                    let info = item.info();
                    if info.packet_number == ack.largest_acked {
                        out.largest_newly_acked = Some(info);
                    }
                    out.acked.push(info);
                }
                i += 1;
            }
        }
        self.largest_acked = Some(
            self.largest_acked
                .map_or(ack.largest_acked, |l| l.max(ack.largest_acked)),
        );
        out.lost = self.detect_losses(rule, now);
        self.trim();
        Ok(out)
    }

    pub fn detect_losses(&mut self, rule: &LossRule, now: SimTime) -> Vec<SentPacketInfo> {
        let Some(largest) = self.largest_acked else {
            return Vec::new();
        };
        let end = self.index_of(largest);
        let mut lost = Vec::new();
        for item in self.sent.range_mut(..end) {
            if item.outstanding() && rule.is_lost(item.packet_number, item.sent_at, largest, now) {
                item.lost = true;
                if item.in_flight {
                    self.bytes_in_flight -= item.size;
                }
                lost.push(item.info());
            }
        }
        lost
    }

    /// Earliest instant at which an outstanding packet crosses the loss
    /// rule's time threshold.
    pub fn loss_time(&self, rule: &LossRule) -> Option<SimTime> {
        let largest = self.largest_acked?;
        self.sent
            .iter()
            .take_while(|i| i.packet_number < largest)
            .filter(|i| i.outstanding())
            .filter_map(|i| rule.loss_deadline(i.packet_number, i.sent_at, largest))
            .min()
    }

    /// Declares every outstanding packet lost, as on a retransmission timeout.
    pub fn mark_all_lost(&mut self) -> Vec<SentPacketInfo> {
        let mut lost = Vec::new();
        for item in self.sent.iter_mut().filter(|i| i.outstanding()) {
            item.lost = true;
            if item.in_flight {
                self.bytes_in_flight -= item.size;
            }
            lost.push(item.info());
        }
        lost
    }

    /// Moves the frames of lost packets back to the head of the unsent list,
    /// oldest first. They go out again under new packet numbers.
    pub fn prepare_retransmissions(&mut self) -> usize {
        let mut frames = Vec::new();
        let mut count = 0;
        for item in self.sent.iter_mut().filter(|i| i.lost && !i.retransmitted) {
            item.retransmitted = true;
            if !item.frames.is_empty() {
                count += 1;
                frames.append(&mut item.frames);
            }
        }
        for f in frames.into_iter().rev() {
            self.unsent.push_front(f);
            self.priority += 1;
        }
        self.trim();
        count
    }

    /// Drops settled items from the front of the sent list.
    fn trim(&mut self) {
        while let Some(front) = self.sent.front() {
            let settled = front.acked_at.is_some() || (front.lost && front.frames.is_empty());
            if !settled {
                break;
            }
            self.sent.pop_front();
        }
    }

    /// Recomputes bytes in flight from the sent list.
    pub fn recount_in_flight(&self) -> usize {
        self.sent
            .iter()
            .filter(|i| i.in_flight && i.outstanding())
            .map(|i| i.size)
            .sum()
    }

    /// Recomputes buffered bytes from both lists.
    pub fn recount_buffered(&self) -> usize {
        self.unsent.iter().map(buffered_size).sum::<usize>()
            + self
                .sent
                .iter()
                .flat_map(|i| i.frames.iter())
                .map(buffered_size)
                .sum::<usize>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::StreamId;
    use std::collections::BTreeSet;

    fn stream(id: u32, offset: u64, len: usize) -> Frame {
        Frame::Stream(StreamFrame {
            stream_id: StreamId(id),
            offset,
            fin: false,
            data: vec![id as u8; len],
        })
    }

    fn send_all(b: &mut SocketTxBuffer, pns: std::ops::RangeInclusive<u64>) {
        for pn in pns {
            b.on_sent(pn, vec![], 100, SimTime::ZERO, true).unwrap();
        }
    }

    #[test]
    fn capacity_rejection() {
        let mut b = SocketTxBuffer::new(10_000);
        assert!(b.add(stream(1, 0, 8_000), false));
        assert!(!b.add(stream(1, 8_000, 3_000), false));
        assert_eq!(b.buffered(), 8_000);
        assert_eq!(b.unsent_frames(), 1);
        assert!(b.add(stream(1, 8_000, 2_000), false));
    }

    #[test]
    fn stream_zero_first() {
        let mut b = SocketTxBuffer::new(10_000);
        b.add(stream(1, 0, 100), false);
        b.add(stream(0, 0, 50), true);
        let p = b.next_packet(1460).unwrap();
        assert!(matches!(&p[0], Frame::Stream(s) if s.stream_id == StreamId(0)));
    }

    #[test]
    fn split_preserves_offsets() {
        let mut b = SocketTxBuffer::new(10_000);
        b.add(stream(1, 0, 3000), false);
        let p = b.next_packet(1460).unwrap();
        let Frame::Stream(s) = &p[0] else { panic!() };
        assert_eq!((s.offset, s.data.len()), (0, 1460 - STREAM_FRAME_OVERHEAD));
        let p2 = b.next_packet(1460).unwrap();
        let Frame::Stream(s2) = &p2[0] else { panic!() };
        assert_eq!(s2.offset, 1445);
    }

    #[test]
    fn small_frames_share_a_packet() {
        let mut b = SocketTxBuffer::new(10_000);
        b.add(stream(1, 0, 400), false);
        b.add(stream(1, 400, 400), false);
        assert_eq!(b.next_packet(1460).unwrap().len(), 2);
        assert!(b.next_packet(1460).is_none());
    }

    #[test]
    fn ack_with_gaps_marks_losses() {
        let mut b = SocketTxBuffer::new(10_000);
        send_all(&mut b, 1..=10);
        let acked: BTreeSet<u64> = [10, 9, 8, 5, 4, 3].into();
        let ack = AckFrame::from_packet_numbers(&acked, 0).unwrap();
        let out = b.on_ack(&ack, &LossRule::default(), SimTime::ZERO).unwrap();
        let got: BTreeSet<u64> = out.acked.iter().map(|p| p.packet_number).collect();
        assert_eq!(got, acked);
        let lost: BTreeSet<u64> = out.lost.iter().map(|p| p.packet_number).collect();
        assert_eq!(lost, [1, 2, 6, 7].into());
        assert_eq!(b.bytes_in_flight(), 0);
        assert_eq!(b.bytes_in_flight(), b.recount_in_flight());
    }

    #[test]
    fn duplicate_ack_is_idempotent() {
        let mut b = SocketTxBuffer::new(10_000);
        send_all(&mut b, 0..=3);
        let ack = AckFrame::from_ranges(&[0..=3], 0).unwrap();
        let first = b.on_ack(&ack, &LossRule::default(), SimTime::ZERO).unwrap();
        assert_eq!(first.acked.len(), 4);
        let again = b.on_ack(&ack, &LossRule::default(), SimTime::ZERO).unwrap();
        assert_eq!(again, AckOutcome::default());
        assert_eq!(b.bytes_in_flight(), 0);
    }

    #[test]
    fn ack_of_unsent_is_an_error() {
        let mut b = SocketTxBuffer::new(10_000);
        send_all(&mut b, 0..=3);
        let ack = AckFrame::from_ranges(&[4..=4], 0).unwrap();
        assert_eq!(
            b.on_ack(&ack, &LossRule::default(), SimTime::ZERO),
            Err(BufferError::AckOfUnsent { largest: 4 })
        );
    }

    #[test]
    fn retransmission_goes_to_the_head() {
        let mut b = SocketTxBuffer::new(10_000);
        b.add(stream(1, 0, 100), false);
        b.add(stream(2, 0, 100), false);
        let f = b.next_packet(120).unwrap();
        b.on_sent(0, f, 140, SimTime::ZERO, true).unwrap();
        let f = b.next_packet(120).unwrap();
        b.on_sent(1, f, 140, SimTime::ZERO, true).unwrap();
        b.add(stream(3, 0, 100), false);
        assert_eq!(b.mark_all_lost().len(), 2);
        assert_eq!(b.bytes_in_flight(), 0);
        assert_eq!(b.prepare_retransmissions(), 2);
        assert_eq!(b.prepare_retransmissions(), 0);
        let p = b.next_packet(1460).unwrap();
        let ids: Vec<u32> = p
            .iter()
            .map(|f| match f {
                Frame::Stream(s) => s.stream_id.0,
                _ => 99,
            })
            .collect();
        assert_eq!(ids, [1, 2, 3]);
        assert!(matches!(
            b.on_sent(1, p.clone(), 400, SimTime::ZERO, true),
            Err(BufferError::PacketNumberReuse { .. })
        ));
        b.on_sent(2, p, 400, SimTime::ZERO, true).unwrap();
        assert_eq!(b.buffered(), 300);
        assert_eq!(b.recount_buffered(), 300);
    }
}
