use std::collections::BTreeMap;
use std::time::Duration;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::apps::{ClientApp, SinkApp};
use super::trace::{FlowTrace, TraceRecord};
use crate::error::ConfigError;
use crate::sim::{Addr, EventHandle, NetEvent, Network, Scheduler, SimTime};
use crate::transport::{is_valid_path, ConnEvent, ConnectionConfig, ConnectionState, QuicEndpoint};
use crate::wire::{ConnectionId, Frame, LongType, QuicPacket};

#[derive(Debug)]
pub enum WorldEvent {
    Net(NetEvent),
    Timer(usize),
    AppWake(usize),
    Start(usize),
    Sample,
}

impl From<NetEvent> for WorldEvent {
    fn from(e: NetEvent) -> Self {
        WorldEvent::Net(e)
    }
}

#[derive(Debug)]
struct Slot {
    ep: QuicEndpoint,
    timer: Option<(SimTime, EventHandle)>,
    last_pn: BTreeMap<Addr, u64>,
}

/// A network plus the QUIC endpoints and applications attached to it,
/// driven by one event loop.
#[derive(Debug)]
pub struct World {
    pub sched: Scheduler<WorldEvent>,
    pub net: Network,
    slots: Vec<Slot>,
    by_addr: BTreeMap<Addr, usize>,
    pub clients: Vec<ClientApp>,
    app_timers: Vec<Option<(SimTime, EventHandle)>>,
    pub sinks: Vec<SinkApp>,
    rng: ChaCha8Rng,
    traces: Vec<FlowTrace>,
    sample_interval: Option<Duration>,
    /// Inspect every emitted packet for monotone packet numbers and
    /// close-only content while closing.
    pub check_packets: bool,
    violations: Vec<String>,
    undeliverable: u64,
}

impl World {
    pub fn new(net: Network, seed: u64) -> Self {
        World {
            sched: Scheduler::new(),
            net,
            slots: Vec::new(),
            by_addr: BTreeMap::new(),
            clients: Vec::new(),
            app_timers: Vec::new(),
            sinks: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            traces: Vec::new(),
            sample_interval: None,
            check_packets: true,
            violations: Vec::new(),
            undeliverable: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn add_endpoint(
        &mut self,
        addr: Addr,
        cfg: ConnectionConfig,
    ) -> Result<usize, ConfigError> {
        if self.by_addr.contains_key(&addr) {
            return Err(ConfigError::invalid(
                "endpoint",
                format!("address {addr} already bound"),
            ));
        }
        let ep = QuicEndpoint::new(addr, cfg)?;
        self.slots.push(Slot {
            ep,
            timer: None,
            last_pn: BTreeMap::new(),
        });
        self.by_addr.insert(addr, self.slots.len() - 1);
        Ok(self.slots.len() - 1)
    }

    pub fn endpoint(&self, i: usize) -> &QuicEndpoint {
        &self.slots[i].ep
    }

    pub fn endpoint_mut(&mut self, i: usize) -> &mut QuicEndpoint {
        &mut self.slots[i].ep
    }

    pub fn listen(&mut self, i: usize) {
        let now = self.now();
        self.slots[i].ep.listen(now).expect("endpoint listens once");
    }

    /// Registers a client; it connects at its start time.
    pub fn add_client(&mut self, app: ClientApp) -> usize {
        let at = app.start.max(self.now());
        self.clients.push(app);
        self.app_timers.push(None);
        let idx = self.clients.len() - 1;
        self.sched.schedule(at, WorldEvent::Start(idx));
        idx
    }

    pub fn add_sink(&mut self, app: SinkApp) -> usize {
        self.sinks.push(app);
        self.sinks.len() - 1
    }

    /// Records one trace per client, on every change and on a fixed grid.
    pub fn enable_tracing(&mut self, interval: Duration) {
        self.traces = (0..self.clients.len())
            .map(|k| FlowTrace::new(k + 1))
            .collect();
        self.sample_interval = Some(interval);
        let now = self.now();
        self.sched.schedule(now, WorldEvent::Sample);
    }

    pub fn traces(&self) -> &[FlowTrace] {
        &self.traces
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    pub fn link_stats(&self, id: crate::sim::LinkId) -> crate::sim::network::LinkStats {
        self.net.link(id).stats()
    }

    pub fn undeliverable(&self) -> u64 {
        self.undeliverable
    }

    /// Closes the connection from endpoint `i` to `remote` at the current time.
    pub fn close(&mut self, i: usize, remote: Addr) {
        let now = self.now();
        self.slots[i].ep.close(remote, now);
        self.service(i);
    }

    pub fn run_until(&mut self, t_end: SimTime) {
        while let Some((now, ev)) = self.sched.pop_until(t_end) {
            self.handle(now, ev);
        }
        self.sched.advance_to(t_end);
    }

    fn handle(&mut self, now: SimTime, ev: WorldEvent) {
        match ev {
            WorldEvent::Net(e) => {
                let Some(d) = self.net.handle(&mut self.sched, e) else {
                    return;
                };
                let Some(&i) = self.by_addr.get(&d.dst) else {
                    self.undeliverable += 1;
                    return;
                };
                let rng = &mut self.rng;
                let mut new_cid = || ConnectionId(rng.next_u64());
                self.slots[i]
                    .ep
                    .on_datagram(d.src, &d.payload, now, &mut new_cid);
                self.service(i);
            }
            WorldEvent::Timer(i) => {
                self.slots[i].timer = None;
                self.slots[i].ep.on_timeout(now);
                self.service(i);
            }
            WorldEvent::Start(a) => {
                let (i, remote) = (self.clients[a].endpoint, self.clients[a].remote);
                let cid = ConnectionId(self.rng.next_u64());
                if let Err(e) = self.slots[i].ep.connect(remote, cid, now) {
                    self.violations
                        .push(format!("client {a} failed to connect: {e}"));
                    return;
                }
                self.slots[i].last_pn.remove(&remote);
                self.pump_client(a, now);
                self.service(i);
            }
            WorldEvent::AppWake(a) => {
                self.app_timers[a] = None;
                self.pump_client(a, now);
                let i = self.clients[a].endpoint;
                self.service(i);
            }
            WorldEvent::Sample => {
                for a in 0..self.clients.len() {
                    self.observe(a, now, true);
                }
                if let Some(iv) = self.sample_interval {
                    self.sched.schedule(now + iv, WorldEvent::Sample);
                }
            }
        }
    }

    fn pump_client(&mut self, a: usize, now: SimTime) {
        let app = &mut self.clients[a];
        if let Some(conn) = self.slots[app.endpoint].ep.connection_mut(app.remote) {
            app.pump(conn, now);
        }
    }

    fn observe(&mut self, a: usize, now: SimTime, heartbeat: bool) {
        if self.traces.is_empty() {
            return;
        }
        let app = &self.clients[a];
        let Some(conn) = self.slots[app.endpoint].ep.connection(app.remote) else {
            return;
        };
        let trace = &mut self.traces[a];
        trace.observe(
            TraceRecord::from_snapshot(now, a + 1, &conn.snapshot()),
            heartbeat,
        );
        let samples = conn.rtt_samples();
        if samples.len() > trace.rtt_samples.len() {
            trace
                .rtt_samples
                .extend_from_slice(&samples[trace.rtt_samples.len()..]);
        }
    }

    /// Flushes endpoint `i`: transmits, dispatches events to applications
    /// and re-arms timers until nothing changes.
    fn service(&mut self, i: usize) {
        let now = self.now();
        loop {
            let mut progressed = false;
            while let Some((dst, bytes)) = self.slots[i].ep.poll_transmit(now) {
                if self.check_packets {
                    self.check_packet(i, dst, &bytes);
                }
                let src = self.slots[i].ep.local();
                if let Err(e) = self.net.send(&mut self.sched, src, dst, bytes) {
                    self.violations.push(format!("send from {src} failed: {e}"));
                }
                progressed = true;
            }
            for (remote, e) in self.slots[i].ep.poll_events() {
                progressed = true;
                self.dispatch(i, remote, e, now);
            }
            if !progressed {
                break;
            }
        }
        for a in 0..self.clients.len() {
            if self.clients[a].endpoint == i {
                self.observe(a, now, false);
                self.arm_app(a);
            }
        }
        self.arm_timer(i);
    }

    fn dispatch(&mut self, i: usize, remote: Addr, e: ConnEvent, now: SimTime) {
        match e {
            ConnEvent::Connected | ConnEvent::Writable => {
                for a in 0..self.clients.len() {
                    if self.clients[a].endpoint == i && self.clients[a].remote == remote {
                        self.pump_client(a, now);
                    }
                }
            }
            ConnEvent::Readable | ConnEvent::StreamFinished(_) => {
                let Some(conn) = self.slots[i].ep.connection_mut(remote) else {
                    return;
                };
                for sink in self.sinks.iter_mut().filter(|s| s.endpoint == i) {
                    match e {
                        ConnEvent::StreamFinished(id) => sink.on_finished(remote, id),
                        _ => sink.on_readable(remote, conn, now),
                    }
                }
            }
            ConnEvent::Closed => {
                if let Some((_, conn)) = self.slots[i].ep.finished().last() {
                    if !is_valid_path(conn.transitions()) {
                        self.violations.push(format!(
                            "connection {remote} took an invalid transition path"
                        ));
                    }
                }
            }
            ConnEvent::Closing => {}
        }
    }

    fn check_packet(&mut self, i: usize, dst: Addr, bytes: &[u8]) {
        let pkt = match QuicPacket::decode(bytes) {
            Ok(p) => p,
            Err(e) => {
                self.violations
                    .push(format!("endpoint {i} emitted an unparseable packet: {e}"));
                return;
            }
        };
        if pkt.header.long_type() == Some(LongType::VersionNegotiation) {
            return;
        }
        let pn = pkt.header.packet_number();
        let slot = &mut self.slots[i];
        if let Some(&last) = slot.last_pn.get(&dst) {
            if pn != last + 1 {
                self.violations
                    .push(format!("endpoint {i} to {dst}: pn {pn} after {last}"));
            }
        }
        slot.last_pn.insert(dst, pn);
        let state = slot.ep.connection(dst).map(|c| c.state());
        if state == Some(ConnectionState::Closing)
            && pkt.frames.iter().any(|f| {
                !matches!(
                    f,
                    Frame::Ack(_) | Frame::ConnectionClose { .. } | Frame::Padding { .. }
                )
            })
        {
            self.violations
                .push(format!("endpoint {i} sent data while closing"));
        }
    }

    fn arm_timer(&mut self, i: usize) {
        let next = self.slots[i].ep.next_timeout().map(|t| t.max(self.now()));
        let slot = &mut self.slots[i];
        if slot.timer.map(|(t, _)| t) == next {
            return;
        }
        if let Some((_, h)) = slot.timer.take() {
            self.sched.cancel(h);
        }
        if let Some(t) = next {
            slot.timer = Some((t, self.sched.schedule(t, WorldEvent::Timer(i))));
        }
    }

    fn arm_app(&mut self, a: usize) {
        let next = self.clients[a].next_wakeup().map(|t| t.max(self.now()));
        if self.app_timers[a].map(|(t, _)| t) == next {
            return;
        }
        if let Some((_, h)) = self.app_timers[a].take() {
            self.sched.cancel(h);
        }
        if let Some(t) = next {
            self.app_timers[a] = Some((t, self.sched.schedule(t, WorldEvent::AppWake(a))));
        }
    }

    /// End-of-run consistency checks; returns every violation seen.
    pub fn finish_checks(&self) -> Vec<String> {
        let mut v = self.violations.clone();
        if !self.net.conservation_holds() {
            v.push("datagram conservation violated".into());
        }
        for (i, slot) in self.slots.iter().enumerate() {
            for (remote, c) in slot.ep.connections() {
                if !is_valid_path(c.transitions()) {
                    v.push(format!(
                        "endpoint {i}, connection {remote}: invalid transition path"
                    ));
                }
            }
        }
        for s in &self.sinks {
            if s.total_mismatches() > 0 {
                v.push(format!(
                    "sink on endpoint {} received corrupted bytes",
                    s.endpoint
                ));
            }
        }
        v
    }
}
