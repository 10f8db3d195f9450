use std::fmt::Write as _;
use std::time::Duration;

use crate::sim::SimTime;
use crate::transport::{ConnSnapshot, ConnectionState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub flow: usize,
    pub cwnd: usize,
    pub ssthresh: usize,
    pub srtt: Duration,
    pub latest_rtt: Duration,
    pub bytes_in_flight: usize,
    pub packets_lost: u64,
    pub state: ConnectionState,
}

impl TraceRecord {
    pub fn from_snapshot(time: SimTime, flow: usize, s: &ConnSnapshot) -> Self {
        TraceRecord {
            time,
            flow,
            cwnd: s.cwnd,
            ssthresh: s.ssthresh,
            srtt: s.srtt,
            latest_rtt: s.latest_rtt,
            bytes_in_flight: s.bytes_in_flight,
            packets_lost: s.packets_lost,
            state: s.state,
        }
    }

    fn same_values(&self, other: &TraceRecord) -> bool {
        TraceRecord {
            time: other.time,
            ..*self
        } == *other
    }
}

/// Per-flow congestion trace plus raw RTT samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowTrace {
    pub flow: usize,
    pub records: Vec<TraceRecord>,
    pub rtt_samples: Vec<(SimTime, Duration)>,
}

impl FlowTrace {
    pub fn new(flow: usize) -> Self {
        FlowTrace {
            flow,
            ..Default::default()
        }
    }

    /// Appends a record when a value changed, or unconditionally for a
    /// heartbeat unless a record already exists at that instant.
    pub fn observe(&mut self, rec: TraceRecord, heartbeat: bool) {
        match self.records.last() {
            Some(last) if heartbeat && last.time == rec.time => {}
            Some(last) if !heartbeat && last.same_values(&rec) => {}
            _ => self.records.push(rec),
        }
    }

    /// Time-weighted mean cwnd over `[from, to)`, treating the trace as a
    /// step function.
    pub fn mean_cwnd(&self, from: SimTime, to: SimTime) -> Option<f64> {
        if to <= from {
            return None;
        }
        let mut acc = 0.0;
        let mut covered = 0u64;
        for (i, r) in self.records.iter().enumerate() {
            let end = self.records.get(i + 1).map_or(to, |n| n.time).min(to);
            let start = r.time.max(from);
            if end > start {
                let w = (end - start).as_micros() as u64;
                acc += r.cwnd as f64 * w as f64;
                covered += w;
            }
        }
        (covered > 0).then(|| acc / covered as f64)
    }

    /// First time the congestion window reaches `bytes`.
    pub fn first_cwnd_at_least(&self, bytes: usize) -> Option<SimTime> {
        self.records
            .iter()
            .find(|r| r.cwnd >= bytes)
            .map(|r| r.time)
    }
}

fn secs(t: SimTime) -> String {
    let us = t.as_micros();
    format!("{}.{:06}", us / 1_000_000, us % 1_000_000)
}

fn millis(d: Duration) -> String {
    let us = d.as_micros();
    format!("{}.{:03}", us / 1000, us % 1000)
}

pub const CWND_HEADER: &str = "time_s,cwnd_bytes,ssthresh_bytes,bytes_in_flight,packets_lost,state";
pub const RTT_HEADER: &str = "time_s,rtt_ms,srtt_ms";

pub fn cwnd_csv(trace: &FlowTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.records.len() + 1));
    out.push_str(CWND_HEADER);
    out.push('\n');
    for r in &trace.records {
        let ssthresh = if r.ssthresh == usize::MAX {
            "inf".to_string()
        } else {
            r.ssthresh.to_string()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            secs(r.time),
            r.cwnd,
            ssthresh,
            r.bytes_in_flight,
            r.packets_lost,
            r.state
        );
    }
    out
}

/// One row per RTT sample, with the smoothed estimate in force at that time.
pub fn rtt_csv(trace: &FlowTrace) -> String {
    let mut out = String::with_capacity(32 * (trace.rtt_samples.len() + 1));
    out.push_str(RTT_HEADER);
    out.push('\n');
    let mut idx = 0;
    for &(t, sample) in &trace.rtt_samples {
        while idx + 1 < trace.records.len() && trace.records[idx + 1].time <= t {
            idx += 1;
        }
        let srtt = trace.records.get(idx).map_or(Duration::ZERO, |r| r.srtt);
        let _ = writeln!(out, "{},{},{}", secs(t), millis(sample), millis(srtt));
    }
    out
}
