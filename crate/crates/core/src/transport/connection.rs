use std::collections::{BTreeMap, VecDeque};
use std::time::Duration;

use thiserror::Error;

use super::ack::{AckPolicy, RecvTracker};
use super::params::{HandshakeKind, HandshakeMessage, TransportParameters};
use super::state::{ConnectionState, StateMachine, Transition};
use super::stream::Stream;
use crate::buffers::{
    SocketRxBuffer, SocketTxBuffer, DEFAULT_SOCKET_BUFFER, DEFAULT_STREAM_BUFFER,
};
use crate::congestion::{algorithm_by_name, CongestionController, CongestionState, INITIAL_RTO};
use crate::error::ConfigError;
use crate::sim::SimTime;
use crate::wire::{
    ConnectionId, Frame, FrameKind, LongType, QuicHeader, QuicPacket, StreamFrame, StreamId,
    MAX_PACKET_SIZE, MAX_SHORT_HEADER_LEN, STREAM_FRAME_OVERHEAD, SUPPORTED_VERSIONS,
};

pub mod close_code {
    pub const NO_ERROR: u16 = 0x0;
    pub const FLOW_CONTROL_ERROR: u16 = 0x3;
    pub const STREAM_LIMIT_ERROR: u16 = 0x4;
    pub const FINAL_SIZE_ERROR: u16 = 0x6;
    pub const VERSION_NEGOTIATION_ERROR: u16 = 0x9;
    pub const PROTOCOL_VIOLATION: u16 = 0xA;
}

/// Largest stream chunk moved into the socket buffer at once, sized so a
/// chunk plus a short header and a small ACK fits one packet.
const STREAM_CHUNK: usize = MAX_PACKET_SIZE - MAX_SHORT_HEADER_LEN - STREAM_FRAME_OVERHEAD - 15;

#[derive(Clone, Debug)]
pub struct ConnectionConfig {
    pub params: TransportParameters,
    pub congestion: String,
    pub initial_ssthresh: usize,
    pub ack_policy: AckPolicy,
    pub socket_send_buffer: usize,
    pub stream_send_buffer: usize,
    /// In order of preference.
    pub supported_versions: Vec<u32>,
    pub max_packet_size: usize,
    /// Keep a per-packet transmit log.
    pub record_packets: bool,
}

impl Default for ConnectionConfig {
    fn default() -> Self {
        ConnectionConfig {
            params: TransportParameters::default(),
            congestion: "newreno".into(),
            initial_ssthresh: usize::MAX,
            ack_policy: AckPolicy::default(),
            socket_send_buffer: DEFAULT_SOCKET_BUFFER,
            stream_send_buffer: DEFAULT_STREAM_BUFFER,
            supported_versions: SUPPORTED_VERSIONS.to_vec(),
            max_packet_size: MAX_PACKET_SIZE,
            record_packets: false,
        }
    }
}

impl ConnectionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params
            .validate()
            .map_err(|r| ConfigError::invalid("transport parameters", r))?;
        algorithm_by_name(&self.congestion)?;
        if self.max_packet_size < 200 || self.max_packet_size > MAX_PACKET_SIZE {
            return Err(ConfigError::invalid(
                "max_packet_size",
                "must be within [200, 1460]",
            ));
        }
        if self.supported_versions.is_empty() {
            return Err(ConfigError::invalid(
                "supported_versions",
                "must not be empty",
            ));
        }
        if self.socket_send_buffer == 0 || self.stream_send_buffer == 0 {
            return Err(ConfigError::invalid("send buffers", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConnEvent {
    Connected,
    /// New in-order data is waiting in the receive buffer.
    Readable,
    StreamFinished(StreamId),
    /// Send capacity or credit freed up after a short write.
    Writable,
    Closing,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("operation not allowed in state {0}")]
    InvalidState(ConnectionState),
    #[error("stream {id} exceeds the limit of {max} streams")]
    StreamLimit { id: u32, max: u16 },
    #[error("stream {0} is already finished")]
    StreamFinished(StreamId),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConnectionStats {
    pub packets_sent: u64,
    pub bytes_sent: u64,
    pub packets_received: u64,
    pub duplicate_packets: u64,
    pub parse_errors: u64,
    pub packets_lost: u64,
    /// Lost packets whose frames were queued again.
    pub retransmissions: u64,
    pub rto_count: u64,
    pub stream_bytes_received: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PacketRecord {
    pub packet_number: u64,
    pub at: SimTime,
    pub state: ConnectionState,
    pub long_type: Option<LongType>,
    pub size: usize,
    pub frames: Vec<FrameKind>,
    pub in_flight: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConnSnapshot {
    pub cwnd: usize,
    pub ssthresh: usize,
    pub bytes_in_flight: usize,
    pub srtt: Duration,
    pub latest_rtt: Duration,
    pub state: ConnectionState,
    pub packets_lost: u64,
}

#[derive(Debug, Default)]
struct HandshakeState {
    need_initial: bool,
    need_server_hello: bool,
    need_finished: bool,
    /// Client packets use 0-RTT long headers until the server is heard from.
    zero_rtt_long: bool,
    zero_rtt_hello_sent: bool,
    retry_at: Option<SimTime>,
    retries: u32,
}

/// One end of a QUIC connection. Sans-IO: datagram payloads go in through
/// `handle_packet` and come out of `poll_transmit`; the owner drives timers
/// through `next_timeout` and `on_timeout`.
pub struct Connection {
    role: Role,
    cfg: ConnectionConfig,
    state: StateMachine,
    cid: ConnectionId,
    version: u32,
    next_pn: u64,
    recv: RecvTracker,
    streams: BTreeMap<u32, Stream>,
    sock_tx: SocketTxBuffer,
    sock_rx: SocketRxBuffer,
    cc: CongestionController,
    peer_params: TransportParameters,
    conn_send_credit: u64,
    conn_admitted: u64,
    conn_recv_credit: u64,
    conn_received: u64,
    conn_consumed: u64,
    pending_control: Vec<Frame>,
    app_blocked: bool,
    hs: HandshakeState,
    close_frame: Option<u16>,
    idle_deadline: SimTime,
    drain_deadline: Option<SimTime>,
    rto_base: Option<SimTime>,
    events: VecDeque<ConnEvent>,
    stats: ConnectionStats,
    packet_log: Vec<PacketRecord>,
    rtt_log: Vec<(SimTime, Duration)>,
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Connection")
            .field("role", &self.role)
            .field("cid", &self.cid)
            .field("state", &self.state.get())
            .field("next_pn", &self.next_pn)
            .finish_non_exhaustive()
    }
}

impl Connection {
    fn new(
        role: Role,
        cfg: ConnectionConfig,
        cid: ConnectionId,
        now: SimTime,
    ) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let cc =
            CongestionController::new(algorithm_by_name(&cfg.congestion)?, cfg.initial_ssthresh);
        let p = cfg.params;
        Ok(Connection {
            role,
            state: StateMachine::default(),
            cid,
            version: p.initial_version,
            next_pn: 0,
            recv: RecvTracker::default(),
            streams: BTreeMap::new(),
            sock_tx: SocketTxBuffer::new(cfg.socket_send_buffer),
            sock_rx: SocketRxBuffer::new(p.max_data as usize),
            cc,
            peer_params: p,
            conn_send_credit: p.max_data,
            conn_admitted: 0,
            conn_recv_credit: p.max_data,
            conn_received: 0,
            conn_consumed: 0,
            pending_control: Vec::new(),
            app_blocked: false,
            hs: HandshakeState::default(),
            close_frame: None,
            idle_deadline: now + p.idle_timeout,
            drain_deadline: None,
            rto_base: None,
            events: VecDeque::new(),
            stats: ConnectionStats::default(),
            packet_log: Vec::new(),
            rtt_log: Vec::new(),
            cfg,
        })
    }

    pub fn client(
        cfg: ConnectionConfig,
        cid: ConnectionId,
        now: SimTime,
    ) -> Result<Self, ConfigError> {
        Self::new(Role::Client, cfg, cid, now)
    }

    /// A socket forked by a listener for a new client. Feed it the packet
    /// that created it through `handle_packet`.
    pub fn server(
        cfg: ConnectionConfig,
        cid: ConnectionId,
        version: u32,
        zero_rtt: bool,
        now: SimTime,
    ) -> Result<Self, ConfigError> {
        let mut c = Self::new(Role::Server, cfg, cid, now)?;
        c.version = version;
        if zero_rtt {
            c.state.set(ConnectionState::Open, now);
            c.events.push_back(ConnEvent::Connected);
        } else {
            c.state.set(ConnectionState::Connecting1Rtt, now);
            c.hs.need_server_hello = true;
        }
        Ok(c)
    }

    /// Starts the handshake. With `zero_rtt` the first packet already
    /// carries application data under the remembered connection id.
    pub fn connect(&mut self, now: SimTime, zero_rtt: bool) -> Result<(), TransportError> {
        if self.role != Role::Client || self.state.get() != ConnectionState::Idle {
            return Err(TransportError::InvalidState(self.state.get()));
        }
        if zero_rtt {
            self.state.set(ConnectionState::Open, now);
            self.hs.zero_rtt_long = true;
            self.events.push_back(ConnEvent::Connected);
        } else {
            let next = if self.version == crate::wire::QUIC_VERSION_NEGOTIATION {
                ConnectionState::Connecting2Rtt
            } else {
                ConnectionState::Connecting1Rtt
            };
            self.state.set(next, now);
            self.hs.need_initial = true;
        }
        Ok(())
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn state(&self) -> ConnectionState {
        self.state.get()
    }

    pub fn transitions(&self) -> &[Transition] {
        self.state.log()
    }

    pub fn connection_id(&self) -> ConnectionId {
        self.cid
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn next_packet_number(&self) -> u64 {
        self.next_pn
    }

    pub fn largest_received_pn(&self) -> Option<u64> {
        self.recv.largest()
    }

    pub fn congestion(&self) -> &CongestionState {
        self.cc.state()
    }

    pub fn congestion_algorithm(&self) -> &'static str {
        self.cc.algorithm()
    }

    pub fn stats(&self) -> &ConnectionStats {
        &self.stats
    }

    pub fn packet_log(&self) -> &[PacketRecord] {
        &self.packet_log
    }

    /// Raw RTT samples `(time, now - sent_at)`, one per ACK that newly
    /// acknowledges its largest packet.
    pub fn rtt_samples(&self) -> &[(SimTime, Duration)] {
        &self.rtt_log
    }

    pub fn socket_tx(&self) -> &SocketTxBuffer {
        &self.sock_tx
    }

    pub fn peer_params(&self) -> &TransportParameters {
        &self.peer_params
    }

    pub fn stream(&self, id: StreamId) -> Option<&Stream> {
        self.streams.get(&id.0)
    }

    pub fn connection_send_credit(&self) -> u64 {
        self.conn_send_credit
    }

    pub fn snapshot(&self) -> ConnSnapshot {
        let st = self.cc.state();
        ConnSnapshot {
            cwnd: st.cwnd,
            ssthresh: st.ssthresh,
            bytes_in_flight: st.bytes_in_flight,
            srtt: st.rtt.srtt(),
            latest_rtt: st.rtt.latest(),
            state: self.state.get(),
            packets_lost: st.packets_lost,
        }
    }

    pub fn poll_event(&mut self) -> Option<ConnEvent> {
        self.events.pop_front()
    }

    fn push_event(&mut self, e: ConnEvent) {
        if e == ConnEvent::Readable && self.events.back() == Some(&ConnEvent::Readable) {
            return;
        }
        self.events.push_back(e);
    }

    fn stream_entry(&mut self, id: u32) -> &mut Stream {
        let (buf, credit, window) = (
            self.cfg.stream_send_buffer,
            self.peer_params.max_stream_data,
            self.cfg.params.max_stream_data,
        );
        self.streams
            .entry(id)
            .or_insert_with(|| Stream::new(StreamId(id), buf, credit, window))
    }

    // ---- application interface ----

    /// Queues data on stream `hint` (0 selects stream 1). Returns how many
    /// bytes were accepted; the rest is refused by buffer space or credit.
    pub fn send(&mut self, data: &[u8], hint: u32) -> Result<usize, TransportError> {
        let state = self.state.get();
        if !matches!(state, ConnectionState::Open) && !state.is_connecting() {
            return Err(TransportError::InvalidState(state));
        }
        let id = if hint == 0 { 1 } else { hint };
        let max = self.cfg.params.max_streams;
        if id > max as u32 {
            return Err(TransportError::StreamLimit { id, max });
        }
        let conn_window = self.conn_send_credit.saturating_sub(self.conn_admitted);
        let stream = self.stream_entry(id);
        if stream.tx.is_finished() {
            return Err(TransportError::StreamFinished(StreamId(id)));
        }
        let allowed = (data.len() as u64)
            .min(stream.send_window())
            .min(conn_window) as usize;
        let n = stream.tx.write(&data[..allowed]);
        self.conn_admitted += n as u64;
        if n < data.len() {
            self.app_blocked = true;
        }
        self.pump();
        Ok(n)
    }

    /// Marks the end of a stream after the data already written.
    pub fn finish(&mut self, hint: u32) -> Result<(), TransportError> {
        let state = self.state.get();
        if !matches!(state, ConnectionState::Open) && !state.is_connecting() {
            return Err(TransportError::InvalidState(state));
        }
        let id = if hint == 0 { 1 } else { hint };
        let max = self.cfg.params.max_streams;
        if id > max as u32 {
            return Err(TransportError::StreamLimit { id, max });
        }
        self.stream_entry(id).tx.finish();
        self.pump();
        Ok(())
    }

    /// Next block of in-order data from any stream, in arrival order.
    pub fn recv(&mut self) -> Option<(StreamId, Vec<u8>)> {
        let (id, data) = self.sock_rx.pop()?;
        let n = data.len() as u64;
        self.conn_consumed += n;
        let window = self.cfg.params.max_stream_data;
        if let Some(s) = self.streams.get_mut(&id.0) {
            s.consumed += n;
            if s.rx.final_size().is_none() && s.recv_credit - s.consumed <= window / 2 {
                s.recv_credit = s.consumed + window;
                self.pending_control.push(Frame::MaxStreamData {
                    stream_id: id,
                    maximum: s.recv_credit,
                });
            }
        }
        let window = self.cfg.params.max_data;
        if self.conn_recv_credit - self.conn_consumed <= window / 2 {
            self.conn_recv_credit = self.conn_consumed + window;
            self.pending_control.push(Frame::MaxData {
                maximum: self.conn_recv_credit,
            });
        }
        self.pump();
        Some((id, data))
    }

    /// Starts an orderly close. Repeated calls do nothing.
    pub fn close(&mut self, now: SimTime) {
        let s = self.state.get();
        if s == ConnectionState::Open || s.is_connecting() {
            self.enter_closing(now, Some(close_code::NO_ERROR));
        }
    }

    // ---- internals ----

    /// Moves admitted stream data and control frames into the socket buffer.
    fn pump(&mut self) {
        while let Some(f) = self.pending_control.first() {
            if !self.sock_tx.add(f.clone(), true) {
                break;
            }
            self.pending_control.remove(0);
        }
        let mut moved = false;
        loop {
            let mut progressed = false;
            for stream in self.streams.values_mut() {
                if !stream.tx.has_pending() {
                    continue;
                }
                let room = self.sock_tx.available();
                let Some(chunk) = stream.tx.issue(STREAM_CHUNK.min(room)) else {
                    continue;
                };
                if chunk.data.len() > self.sock_tx.available()
                    || (chunk.data.is_empty() && !chunk.fin)
                {
                    stream
                        .tx
                        .requeue(chunk)
                        .expect("chunk returned to its own offset");
                    continue;
                }
                let frame = Frame::Stream(StreamFrame {
                    stream_id: stream.id,
                    offset: chunk.offset,
                    fin: chunk.fin,
                    data: chunk.data,
                });
                let added = self.sock_tx.add(frame, false);
                debug_assert!(added);
                progressed = true;
            }
            if !progressed {
                break;
            }
            moved = true;
        }
        if moved {
            self.notify_writable();
        }
    }

    /// Wakes an application whose last write came up short, once a new
    /// write could be accepted by some open stream.
    fn notify_writable(&mut self) {
        let conn_open = self.conn_send_credit > self.conn_admitted;
        let stream_open = self
            .streams
            .values()
            .any(|s| !s.tx.is_finished() && s.send_window() > 0 && s.tx.available() > 0);
        if self.app_blocked && conn_open && stream_open {
            self.app_blocked = false;
            self.push_event(ConnEvent::Writable);
        }
    }

    fn enter_closing(&mut self, now: SimTime, close_frame: Option<u16>) {
        self.state.set(ConnectionState::Closing, now);
        self.close_frame = close_frame;
        self.drain_deadline = Some(now + self.cc.rto() * 3);
        self.hs = HandshakeState::default();
        self.push_event(ConnEvent::Closing);
    }

    fn fail(&mut self, code: u16, now: SimTime) {
        let s = self.state.get();
        if s == ConnectionState::Open || s.is_connecting() {
            self.enter_closing(now, Some(code));
        }
    }

    fn enter_closed(&mut self, now: SimTime) {
        self.state.set(ConnectionState::Closed, now);
        self.drain_deadline = None;
        self.rto_base = None;
        self.hs = HandshakeState::default();
        self.push_event(ConnEvent::Closed);
    }

    fn touch_idle(&mut self, now: SimTime) {
        self.idle_deadline = now + self.cfg.params.idle_timeout;
    }

    fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_base.map(|b| b + self.cc.rto())
    }

    fn debug_check(&self) {
        debug_assert_eq!(
            self.sock_tx.bytes_in_flight(),
            self.cc.state().bytes_in_flight
        );
        debug_assert_eq!(
            self.sock_tx.bytes_in_flight(),
            self.sock_tx.recount_in_flight()
        );
        debug_assert!(self.sock_tx.buffered() <= self.sock_tx.capacity());
    }

    // ---- receive path ----

    /// Processes one datagram payload addressed to this connection.
    pub fn handle_packet(&mut self, bytes: &[u8], now: SimTime) {
        if self.state.get() == ConnectionState::Closed {
            return;
        }
        let pkt = match QuicPacket::decode(bytes) {
            Ok(p) => p,
            Err(_) => {
                self.stats.parse_errors += 1;
                return;
            }
        };
        self.stats.packets_received += 1;
        self.touch_idle(now);
        let state = self.state.get();
        match (self.role, pkt.header) {
            (
                Role::Client,
                QuicHeader::Long {
                    long_type: LongType::VersionNegotiation,
                    ..
                },
            ) => {
                self.on_version_negotiation(&pkt.frames, now);
                return;
            }
            (
                Role::Client,
                QuicHeader::Long {
                    long_type: LongType::Handshake,
                    connection_id,
                    ..
                },
            ) => match state {
                ConnectionState::Connecting1Rtt => {
                    self.cid = connection_id;
                    self.state.set(ConnectionState::Open, now);
                    self.hs.need_initial = false;
                    self.hs.retry_at = None;
                    self.hs.need_finished = true;
                    self.push_event(ConnEvent::Connected);
                }
                ConnectionState::Connecting2Rtt => return,
                _ => {}
            },
            (Role::Client, QuicHeader::Short { .. }) if state.is_connecting() => return,
            (Role::Client, QuicHeader::Long { .. }) => {}
            (Role::Client, QuicHeader::Short { .. }) => {}
            (
                Role::Server,
                QuicHeader::Long {
                    long_type: LongType::ClientInitial,
                    ..
                },
            ) => {
                if state == ConnectionState::Connecting1Rtt {
                    self.hs.need_server_hello = true;
                }
            }
            (
                Role::Server,
                QuicHeader::Long {
                    long_type: LongType::VersionNegotiation,
                    ..
                },
            ) => return,
            (Role::Server, _) => {
                if state == ConnectionState::Connecting1Rtt {
                    self.state.set(ConnectionState::Open, now);
                    self.hs.need_server_hello = false;
                    self.push_event(ConnEvent::Connected);
                }
            }
        }
        if self.role == Role::Client {
            self.hs.zero_rtt_long = false;
        }
        let pn = pkt.header.packet_number();
        let eliciting = pkt.is_ack_eliciting();
        if !self
            .recv
            .on_packet(pn, eliciting, now, &self.cfg.ack_policy)
        {
            self.stats.duplicate_packets += 1;
            return;
        }
        for f in pkt.frames {
            self.on_frame(f, now);
            if self.state.get() == ConnectionState::Closed {
                break;
            }
        }
        self.debug_check();
    }

    fn on_version_negotiation(&mut self, frames: &[Frame], now: SimTime) {
        if !self.state.get().is_connecting() {
            return;
        }
        let offered: Vec<u32> = frames
            .iter()
            .filter_map(|f| match f {
                Frame::VersionNegotiation { versions } => Some(versions.clone()),
                _ => None,
            })
            .flatten()
            .collect();
        match self
            .cfg
            .supported_versions
            .iter()
            .copied()
            .find(|v| offered.contains(v))
        {
            Some(v) => {
                self.version = v;
                if self.state.get() == ConnectionState::Connecting2Rtt {
                    self.state.set(ConnectionState::Connecting1Rtt, now);
                }
                self.hs.need_initial = true;
                self.hs.retry_at = None;
                self.hs.retries = 0;
            }
            None => self.enter_closed(now),
        }
    }

    fn on_frame(&mut self, f: Frame, now: SimTime) {
        match f {
            Frame::Padding { .. } | Frame::VersionNegotiation { .. } => {}
            Frame::Ack(a) => self.on_ack_frame(&a, now),
            Frame::Stream(s) if s.stream_id == StreamId::CONTROL => {
                self.on_handshake_frame(&s, now)
            }
            Frame::Stream(s) => self.on_stream_frame(s, now),
            Frame::MaxData { maximum } => {
                if maximum > self.conn_send_credit {
                    self.conn_send_credit = maximum;
                    self.notify_writable();
                }
            }
            Frame::MaxStreamData { stream_id, maximum } => {
                if stream_id.0 == 0 || stream_id.0 > self.cfg.params.max_streams as u32 {
                    self.fail(close_code::STREAM_LIMIT_ERROR, now);
                    return;
                }
                let s = self.stream_entry(stream_id.0);
                if maximum > s.send_credit {
                    s.send_credit = maximum;
                    self.notify_writable();
                }
            }
            Frame::ConnectionClose { .. } => {
                let s = self.state.get();
                if s == ConnectionState::Open || s.is_connecting() {
                    self.enter_closing(now, Some(close_code::NO_ERROR));
                }
            }
        }
    }

    fn on_handshake_frame(&mut self, s: &StreamFrame, now: SimTime) {
        let Ok(msg) = HandshakeMessage::decode(&s.data) else {
            self.fail(close_code::PROTOCOL_VIOLATION, now);
            return;
        };
        let adopt = matches!(
            (self.role, msg.kind),
            (Role::Client, HandshakeKind::ServerHello)
                | (
                    Role::Server,
                    HandshakeKind::ClientHello | HandshakeKind::ZeroRttHello
                )
        );
        if adopt {
            self.peer_params = msg.params;
            self.conn_send_credit = self.conn_send_credit.max(msg.params.max_data);
            for st in self.streams.values_mut() {
                st.send_credit = st.send_credit.max(msg.params.max_stream_data);
            }
        }
    }

    fn on_stream_frame(&mut self, s: StreamFrame, now: SimTime) {
        let id = s.stream_id.0;
        if id > self.cfg.params.max_streams as u32 {
            self.fail(close_code::STREAM_LIMIT_ERROR, now);
            return;
        }
        let end = s.end();
        let stream = self.stream_entry(id);
        if end > stream.recv_credit {
            self.fail(close_code::FLOW_CONTROL_ERROR, now);
            return;
        }
        let grew = end.saturating_sub(stream.rx.highest_received());
        if self.conn_received + grew > self.conn_recv_credit {
            self.fail(close_code::FLOW_CONTROL_ERROR, now);
            return;
        }
        let stream = self.streams.get_mut(&id).unwrap();
        let released = match stream.rx.insert(s.offset, &s.data, s.fin) {
            Ok(r) => r,
            Err(_) => {
                self.fail(close_code::FINAL_SIZE_ERROR, now);
                return;
            }
        };
        self.conn_received += grew;
        let finished = !stream.fin_received && stream.rx.is_complete();
        if finished {
            stream.fin_received = true;
        }
        if !released.is_empty() {
            self.stats.stream_bytes_received += released.len() as u64;
            self.sock_rx
                .push(StreamId(id), released)
                .expect("flow control bounds the receive buffer");
            self.push_event(ConnEvent::Readable);
        }
        if finished {
            self.push_event(ConnEvent::StreamFinished(StreamId(id)));
        }
    }

    fn on_ack_frame(&mut self, a: &crate::wire::AckFrame, now: SimTime) {
        let rule = self.cc.loss_rule();
        let out = match self.sock_tx.on_ack(a, &rule, now) {
            Ok(o) => o,
            Err(_) => {
                self.fail(close_code::PROTOCOL_VIOLATION, now);
                return;
            }
        };
        if let Some(p) = out.largest_newly_acked {
            self.rtt_log.push((now, now.saturating_since(p.sent_at)));
        }
        let delay = Duration::from_micros(a.ack_delay_us as u64);
        self.cc.on_ack(&out, a.largest_acked, delay, now);
        if out.acked.iter().any(|p| p.in_flight) {
            self.rto_base = self.sock_tx.has_in_flight().then_some(now);
        } else if !self.sock_tx.has_in_flight() {
            self.rto_base = None;
        }
        self.stats.packets_lost += out.lost.iter().filter(|p| p.in_flight).count() as u64;
        self.stats.retransmissions += self.sock_tx.prepare_retransmissions() as u64;
        if !out.acked.is_empty() {
            self.pump();
        }
    }

    // ---- timers ----

    pub fn next_timeout(&self) -> Option<SimTime> {
        let state = self.state.get();
        match state {
            ConnectionState::Closed | ConnectionState::Idle | ConnectionState::Listening => None,
            ConnectionState::Closing => {
                let ack = self.recv.ack_deadline();
                [self.drain_deadline, ack].into_iter().flatten().min()
            }
            _ => {
                let mut t = vec![Some(self.idle_deadline), self.hs.retry_at];
                if state == ConnectionState::Open {
                    t.push(self.recv.ack_deadline());
                    t.push(self.sock_tx.loss_time(&self.cc.loss_rule()));
                    t.push(self.rto_deadline());
                }
                t.into_iter().flatten().min()
            }
        }
    }

    pub fn on_timeout(&mut self, now: SimTime) {
        match self.state.get() {
            ConnectionState::Closed | ConnectionState::Idle | ConnectionState::Listening => return,
            ConnectionState::Closing => {
                if self.drain_deadline.is_some_and(|d| d <= now) {
                    self.enter_closed(now);
                }
                return;
            }
            _ => {}
        }
        if self.idle_deadline <= now {
            self.enter_closing(now, None);
            return;
        }
        if self.hs.retry_at.is_some_and(|t| t <= now) {
            self.hs.retry_at = None;
            self.hs.need_initial = true;
        }
        if self.state.get() != ConnectionState::Open {
            return;
        }
        let rule = self.cc.loss_rule();
        if self.sock_tx.loss_time(&rule).is_some_and(|t| t <= now) {
            let lost = self.sock_tx.detect_losses(&rule, now);
            self.stats.packets_lost += lost.iter().filter(|p| p.in_flight).count() as u64;
            self.cc.on_losses(&lost, now);
            self.stats.retransmissions += self.sock_tx.prepare_retransmissions() as u64;
        }
        if self.rto_deadline().is_some_and(|t| t <= now) {
            self.rto_base = None;
            if self.sock_tx.has_in_flight() {
                let lost = self.sock_tx.mark_all_lost();
                self.stats.packets_lost += lost.iter().filter(|p| p.in_flight).count() as u64;
                self.stats.rto_count += 1;
                self.cc.on_rto(&lost, now);
                self.stats.retransmissions += self.sock_tx.prepare_retransmissions() as u64;
            }
        }
        self.debug_check();
    }

    // ---- transmit path ----

    /// Builds the next packet to send, if any.
    pub fn poll_transmit(&mut self, now: SimTime) -> Option<Vec<u8>> {
        match self.state.get() {
            ConnectionState::Closed | ConnectionState::Idle | ConnectionState::Listening => None,
            ConnectionState::Closing => self.transmit_closing(now),
            s => {
                if self.hs.need_initial {
                    return Some(self.transmit_initial(now));
                }
                if self.hs.need_server_hello {
                    return Some(self.transmit_server_hello(now));
                }
                if s.is_connecting() {
                    return None;
                }
                self.transmit_open(now)
            }
        }
    }

    fn handshake_frame(&self, kind: HandshakeKind, offset: u64) -> Frame {
        let msg = HandshakeMessage {
            kind,
            params: self.cfg.params,
        };
        Frame::Stream(StreamFrame {
            stream_id: StreamId::CONTROL,
            offset,
            fin: false,
            data: msg.encode(),
        })
    }

    fn long_header(&self, long_type: LongType) -> QuicHeader {
        QuicHeader::Long {
            long_type,
            connection_id: self.cid,
            version: self.version,
            packet_number: self.next_pn,
        }
    }

    fn short_header(&self) -> QuicHeader {
        let cid = (!self.cfg.params.omit_connection_id).then_some(self.cid);
        QuicHeader::Short {
            connection_id: cid,
            packet_number: self.next_pn,
        }
    }

    fn transmit_initial(&mut self, now: SimTime) -> Vec<u8> {
        self.hs.need_initial = false;
        let backoff = INITIAL_RTO * (1u32 << self.hs.retries.min(6));
        self.hs.retry_at = Some(now + backoff);
        self.hs.retries += 1;
        let header = self.long_header(LongType::ClientInitial);
        let frames = vec![self.handshake_frame(HandshakeKind::ClientHello, 0)];
        self.finish_packet(header, frames, Vec::new(), false, now)
    }

    fn transmit_server_hello(&mut self, now: SimTime) -> Vec<u8> {
        self.hs.need_server_hello = false;
        let header = self.long_header(LongType::Handshake);
        let mut frames = Vec::new();
        if let Some(ack) = self.recv.build_ack(now) {
            frames.push(Frame::Ack(ack));
        }
        frames.push(self.handshake_frame(HandshakeKind::ServerHello, 0));
        self.finish_packet(header, frames, Vec::new(), false, now)
    }

    fn transmit_closing(&mut self, now: SimTime) -> Option<Vec<u8>> {
        let mut frames = Vec::new();
        let code = self.close_frame.take();
        if code.is_none() && !self.recv.ack_due(now) {
            return None;
        }
        if self.recv.has_unacked() {
            frames.push(Frame::Ack(self.recv.build_ack(now)?));
        }
        if let Some(error_code) = code {
            frames.push(Frame::ConnectionClose {
                error_code,
                reason: Vec::new(),
            });
        }
        if frames.is_empty() {
            return None;
        }
        let header = self.short_header();
        Some(self.finish_packet(header, frames, Vec::new(), false, now))
    }

    fn transmit_open(&mut self, now: SimTime) -> Option<Vec<u8>> {
        let header = if self.hs.need_finished {
            self.long_header(LongType::Handshake)
        } else if self.hs.zero_rtt_long {
            self.long_header(LongType::ZeroRttProtected)
        } else {
            self.short_header()
        };
        let mut frames = Vec::new();
        if self.recv.has_unacked() {
            if let Some(ack) = self.recv.build_ack(now) {
                frames.push(Frame::Ack(ack));
            }
        }
        let ack_only_due = self.recv.ack_due(now);
        if self.hs.need_finished {
            frames.push(self.handshake_frame(
                HandshakeKind::ClientFinished,
                HandshakeMessage::ENCODED_LEN as u64,
            ));
        } else if self.hs.zero_rtt_long && !self.hs.zero_rtt_hello_sent {
            frames.push(self.handshake_frame(HandshakeKind::ZeroRttHello, 0));
        }
        let overhead = header.encoded_len().expect("packet numbers fit 32 bits")
            + frames.iter().map(Frame::encoded_len).sum::<usize>();
        let data = self.take_data(overhead);
        let handshake =
            self.hs.need_finished || (self.hs.zero_rtt_long && !self.hs.zero_rtt_hello_sent);
        if data.is_empty() && !handshake && !ack_only_due {
            return None;
        }
        if frames.is_empty() && data.is_empty() {
            return None;
        }
        if self.hs.zero_rtt_long {
            self.hs.zero_rtt_hello_sent = true;
        }
        self.hs.need_finished = false;
        let in_flight = !data.is_empty();
        frames.extend(data.iter().cloned());
        Some(self.finish_packet(header, frames, data, in_flight, now))
    }

    /// Frames from the socket buffer that fit the packet and the window.
    fn take_data(&mut self, overhead: usize) -> Vec<Frame> {
        if !self.sock_tx.has_unsent() {
            return Vec::new();
        }
        let max = self.cfg.max_packet_size.saturating_sub(overhead);
        let st = self.cc.state();
        let allowance = st.cwnd.saturating_sub(st.bytes_in_flight);
        if allowance <= overhead {
            return Vec::new();
        }
        let room = (allowance - overhead).min(max);
        if room < max && self.sock_tx.unsent_encoded_len() > room {
            // wait until a full-size packet fits the window
            return Vec::new();
        }
        self.sock_tx.next_packet(room).unwrap_or_default()
    }

    fn finish_packet(
        &mut self,
        header: QuicHeader,
        frames: Vec<Frame>,
        retransmittable: Vec<Frame>,
        in_flight: bool,
        now: SimTime,
    ) -> Vec<u8> {
        let has_ack = frames.iter().any(|f| matches!(f, Frame::Ack(_)));
        let kinds: Vec<FrameKind> = if self.cfg.record_packets {
            frames.iter().map(Frame::kind).collect()
        } else {
            Vec::new()
        };
        let pkt = QuicPacket::new(header, frames);
        let bytes = pkt.encode().expect("assembled packet within size limits");
        let pn = self.next_pn;
        self.next_pn += 1;
        if has_ack {
            self.recv.on_ack_sent();
        }
        self.sock_tx
            .on_sent(pn, retransmittable, bytes.len(), now, in_flight)
            .expect("packet numbers increase");
        self.cc.on_packet_sent(pn, bytes.len(), in_flight, now);
        if in_flight && self.rto_base.is_none() {
            self.rto_base = Some(now);
        }
        self.touch_idle(now);
        self.stats.packets_sent += 1;
        self.stats.bytes_sent += bytes.len() as u64;
        if self.cfg.record_packets {
            self.packet_log.push(PacketRecord {
                packet_number: pn,
                at: now,
                state: self.state.get(),
                long_type: header.long_type(),
                size: bytes.len(),
                frames: kinds,
                in_flight,
            });
        }
        self.debug_check();
        bytes
    }
}
