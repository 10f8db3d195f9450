use std::collections::BTreeMap;
use std::time::Duration;

use crate::sim::{Addr, SimTime};
use crate::transport::Connection;
use crate::wire::StreamId;

/// Byte `offset` of stream `stream` in every generated payload. Receivers
/// recompute it to check content and order.
pub fn pattern_byte(stream: u32, offset: u64) -> u8 {
    (offset.wrapping_mul(31).wrapping_add(stream as u64 * 101) % 251) as u8
}

pub fn pattern(stream: u32, offset: u64, len: usize) -> Vec<u8> {
    (0..len as u64)
        .map(|i| pattern_byte(stream, offset + i))
        .collect()
}

/// What a client application writes.
#[derive(Clone, Debug, PartialEq)]
pub enum Workload {
    /// Keep the send buffers full, stopping after `total` bytes if given.
    Bulk {
        total: Option<u64>,
        packet_size: usize,
    },
    /// One application packet every `interval`, the first at start.
    Periodic {
        packet_size: usize,
        interval: Duration,
        count: Option<u64>,
    },
    /// Explicit writes `(delay after start, stream, bytes)`, in time order.
    /// Stream 0 means round-robin.
    Scripted(Vec<(Duration, u32, usize)>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WriteRecord {
    pub at: SimTime,
    pub stream: u32,
    pub offset: u64,
    pub len: usize,
}

/// A client sending application packets round-robin over `streams`
/// streams: packet i goes to stream `(i mod n) + 1`.
#[derive(Clone, Debug)]
pub struct ClientApp {
    pub endpoint: usize,
    pub remote: Addr,
    pub start: SimTime,
    pub streams: u32,
    pub workload: Workload,
    /// Close every used stream with a FIN once the workload is exhausted.
    pub finish_streams: bool,
    next_index: u64,
    scheduled: u64,
    pending: Option<(u32, usize)>,
    offsets: BTreeMap<u32, u64>,
    finished: bool,
    pub writes: Vec<WriteRecord>,
}

impl ClientApp {
    pub fn new(
        endpoint: usize,
        remote: Addr,
        start: SimTime,
        streams: u32,
        workload: Workload,
    ) -> Self {
        ClientApp {
            endpoint,
            remote,
            start,
            streams: streams.max(1),
            workload,
            finish_streams: false,
            next_index: 0,
            scheduled: 0,
            pending: None,
            offsets: BTreeMap::new(),
            finished: false,
            writes: Vec::new(),
        }
    }

    pub fn bytes_sent(&self) -> u64 {
        self.offsets.values().sum()
    }

    /// Bytes accepted by the transport, per stream.
    pub fn stream_bytes(&self) -> &BTreeMap<u32, u64> {
        &self.offsets
    }

    fn round_robin(&self) -> u32 {
        (self.next_index % self.streams as u64) as u32 + 1
    }

    fn exhausted(&self) -> bool {
        match &self.workload {
            Workload::Bulk { total, .. } => total.is_some_and(|t| self.scheduled >= t),
            Workload::Periodic { count, .. } => count.is_some_and(|c| self.next_index >= c),
            Workload::Scripted(s) => self.next_index as usize >= s.len(),
        }
    }

    /// The next application packet due at `now`, as `(stream, bytes)`.
    fn next_packet(&self, now: SimTime) -> Option<(u32, usize)> {
        if self.exhausted() {
            return None;
        }
        match &self.workload {
            Workload::Bulk { total, packet_size } => {
                let left = total.map_or(u64::MAX, |t| t - self.scheduled);
                Some((self.round_robin(), (*packet_size as u64).min(left) as usize))
            }
            Workload::Periodic {
                packet_size,
                interval,
                ..
            } => {
                let due = self.start + *interval * self.next_index as u32;
                (due <= now).then(|| (self.round_robin(), *packet_size))
            }
            Workload::Scripted(s) => {
                let (delay, stream, len) = s[self.next_index as usize];
                let stream = if stream == 0 {
                    self.round_robin()
                } else {
                    stream
                };
                (self.start + delay <= now).then_some((stream, len))
            }
        }
    }

    /// When the workload next has something to write, if it waits on time.
    pub fn next_wakeup(&self) -> Option<SimTime> {
        if self.exhausted() || self.pending.is_some() {
            return None;
        }
        match &self.workload {
            Workload::Bulk { .. } => None,
            Workload::Periodic { interval, .. } => {
                Some(self.start + *interval * self.next_index as u32)
            }
            Workload::Scripted(s) => Some(self.start + s[self.next_index as usize].0),
        }
    }

    /// Writes as much due data as the connection accepts.
    pub fn pump(&mut self, conn: &mut Connection, now: SimTime) {
        loop {
            let (stream, len) = match self.pending {
                Some(p) => p,
                None => match self.next_packet(now) {
                    Some(p) => {
                        self.scheduled += p.1 as u64;
                        self.next_index += 1;
                        p
                    }
                    None => break,
                },
            };
            let offset = self.offsets.get(&stream).copied().unwrap_or(0);
            let data = pattern(stream, offset, len);
            let n = match conn.send(&data, stream) {
                Ok(n) => n,
                Err(_) => {
                    self.pending = Some((stream, len));
                    break;
                }
            };
            if n > 0 {
                *self.offsets.entry(stream).or_insert(0) += n as u64;
                self.writes.push(WriteRecord {
                    at: now,
                    stream,
                    offset,
                    len: n,
                });
            }
            if n < len {
                self.pending = Some((stream, len - n));
                break;
            }
            self.pending = None;
        }
        if self.finish_streams && !self.finished && self.pending.is_none() && self.exhausted() {
            let used: Vec<u32> = self.offsets.keys().copied().collect();
            if used.iter().all(|&s| conn.finish(s).is_ok()) {
                self.finished = true;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub at: SimTime,
    pub remote: Addr,
    pub stream: u32,
    pub offset: u64,
    pub len: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StreamSink {
    pub received: u64,
    /// Bytes that differ from the generated pattern.
    pub mismatches: u64,
    pub finished: bool,
}

/// Server-side application: reads everything and checks it.
#[derive(Clone, Debug)]
pub struct SinkApp {
    pub endpoint: usize,
    pub streams: BTreeMap<(Addr, u32), StreamSink>,
    pub deliveries: Vec<Delivery>,
    pub first_byte_at: Option<SimTime>,
}

impl SinkApp {
    pub fn new(endpoint: usize) -> Self {
        SinkApp {
            endpoint,
            streams: BTreeMap::new(),
            deliveries: Vec::new(),
            first_byte_at: None,
        }
    }

    pub fn on_readable(&mut self, remote: Addr, conn: &mut Connection, now: SimTime) {
        while let Some((StreamId(id), data)) = conn.recv() {
            let s = self.streams.entry((remote, id)).or_default();
            let offset = s.received;
            s.mismatches += data
                .iter()
                .enumerate()
                .filter(|(i, b)| **b != pattern_byte(id, offset + *i as u64))
                .count() as u64;
            s.received += data.len() as u64;
            self.first_byte_at.get_or_insert(now);
            self.deliveries.push(Delivery {
                at: now,
                remote,
                stream: id,
                offset,
                len: data.len(),
            });
        }
    }

    pub fn on_finished(&mut self, remote: Addr, stream: StreamId) {
        self.streams.entry((remote, stream.0)).or_default().finished = true;
    }

    pub fn bytes_from(&self, remote: Addr) -> u64 {
        self.streams
            .iter()
            .filter(|((r, _), _)| *r == remote)
            .map(|(_, s)| s.received)
            .sum()
    }

    pub fn total_mismatches(&self) -> u64 {
        self.streams.values().map(|s| s.mismatches).sum()
    }

    pub fn first_byte_from(&self, remote: Addr) -> Option<SimTime> {
        self.deliveries
            .iter()
            .find(|d| d.remote == remote)
            .map(|d| d.at)
    }
}
