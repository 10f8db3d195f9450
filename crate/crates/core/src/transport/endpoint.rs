use std::collections::{BTreeMap, VecDeque};

use super::connection::{ConnEvent, Connection, ConnectionConfig, Role, TransportError};
use super::state::{ConnectionState, StateMachine};
use crate::error::ConfigError;
use crate::sim::{Addr, SimTime};
use crate::wire::{
    ConnectionId, Frame, LongType, QuicHeader, QuicPacket, QUIC_VERSION_NEGOTIATION,
};

/// Remotes this node has completed a handshake with, keyed by address, with
/// the connection id to resume under.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EndpointRegistry {
    known: BTreeMap<Addr, ConnectionId>,
    pub force_0rtt: bool,
}

impl EndpointRegistry {
    pub fn contains(&self, remote: Addr) -> bool {
        self.known.contains_key(&remote)
    }

    pub fn get(&self, remote: Addr) -> Option<ConnectionId> {
        self.known.get(&remote).copied()
    }

    pub fn insert(&mut self, remote: Addr, cid: ConnectionId) {
        self.known.insert(remote, cid);
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EndpointStats {
    pub version_negotiations_sent: u64,
    pub forks: u64,
    /// Datagrams with no matching connection that could not open one.
    pub dropped: u64,
}

/// The QUIC layer of one node: a UDP binding holding client connections,
/// an optional listener and the sockets it forks, one per remote address.
#[derive(Debug)]
pub struct QuicEndpoint {
    local: Addr,
    cfg: ConnectionConfig,
    listener: StateMachine,
    conns: BTreeMap<Addr, Connection>,
    finished: Vec<(Addr, Connection)>,
    pub registry: EndpointRegistry,
    outgoing: VecDeque<(Addr, Vec<u8>)>,
    udp_open: bool,
    stats: EndpointStats,
}

impl QuicEndpoint {
    pub fn new(local: Addr, cfg: ConnectionConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(QuicEndpoint {
            local,
            cfg,
            listener: StateMachine::default(),
            conns: BTreeMap::new(),
            finished: Vec::new(),
            registry: EndpointRegistry::default(),
            outgoing: VecDeque::new(),
            udp_open: true,
            stats: EndpointStats::default(),
        })
    }

    pub fn local(&self) -> Addr {
        self.local
    }

    pub fn config(&self) -> &ConnectionConfig {
        &self.cfg
    }

    pub fn stats(&self) -> EndpointStats {
        self.stats
    }

    pub fn is_listening(&self) -> bool {
        self.listener.get() == ConnectionState::Listening
    }

    pub fn udp_open(&self) -> bool {
        self.udp_open
    }

    pub fn listen(&mut self, now: SimTime) -> Result<(), TransportError> {
        if self.listener.get() != ConnectionState::Idle {
            return Err(TransportError::InvalidState(self.listener.get()));
        }
        self.listener.set(ConnectionState::Listening, now);
        self.udp_open = true;
        Ok(())
    }

    /// Opens a client connection. A known (or forced) remote gets a 0-RTT
    /// start; `cid` is used unless the registry remembers one.
    pub fn connect(
        &mut self,
        remote: Addr,
        cid: ConnectionId,
        now: SimTime,
    ) -> Result<(), TransportError> {
        if let Some(c) = self.conns.get(&remote) {
            return Err(TransportError::InvalidState(c.state()));
        }
        let zero_rtt = self.registry.force_0rtt || self.registry.contains(remote);
        let cid = self.registry.get(remote).unwrap_or(cid);
        let mut conn = Connection::client(self.cfg.clone(), cid, now)
            .expect("config validated at construction");
        conn.connect(now, zero_rtt)?;
        self.conns.insert(remote, conn);
        self.udp_open = true;
        Ok(())
    }

    pub fn connection(&self, remote: Addr) -> Option<&Connection> {
        self.conns.get(&remote)
    }

    pub fn connection_mut(&mut self, remote: Addr) -> Option<&mut Connection> {
        self.conns.get_mut(&remote)
    }

    pub fn connections(&self) -> impl Iterator<Item = (&Addr, &Connection)> {
        self.conns.iter()
    }

    /// Connections removed after reaching CLOSED, in removal order.
    pub fn finished(&self) -> &[(Addr, Connection)] {
        &self.finished
    }

    /// Delivers a datagram payload from `src`. `new_cid` supplies the
    /// connection id for a forked socket.
    pub fn on_datagram(
        &mut self,
        src: Addr,
        payload: &[u8],
        now: SimTime,
        new_cid: &mut dyn FnMut() -> ConnectionId,
    ) {
        if let Some(conn) = self.conns.get_mut(&src) {
            conn.handle_packet(payload, now);
            return;
        }
        if !self.is_listening() {
            self.stats.dropped += 1;
            return;
        }
        let Ok((header, _)) = QuicHeader::parse(payload) else {
            self.stats.dropped += 1;
            return;
        };
        let QuicHeader::Long {
            long_type,
            connection_id,
            version,
            ..
        } = header
        else {
            self.stats.dropped += 1;
            return;
        };
        let zero_rtt = match long_type {
            LongType::ClientInitial => false,
            LongType::ZeroRttProtected => true,
            _ => {
                self.stats.dropped += 1;
                return;
            }
        };
        if !self.cfg.supported_versions.contains(&version) {
            self.reply_version_negotiation(src, connection_id);
            return;
        }
        if QuicPacket::decode(payload).is_err() {
            self.stats.dropped += 1;
            return;
        }
        let cid = if zero_rtt { connection_id } else { new_cid() };
        let mut conn = Connection::server(self.cfg.clone(), cid, version, zero_rtt, now)
            .expect("config validated at construction");
        conn.handle_packet(payload, now);
        self.stats.forks += 1;
        self.conns.insert(src, conn);
    }

    fn reply_version_negotiation(&mut self, to: Addr, cid: ConnectionId) {
        let header = QuicHeader::Long {
            long_type: LongType::VersionNegotiation,
            connection_id: cid,
            version: QUIC_VERSION_NEGOTIATION,
            packet_number: 0,
        };
        let frames = vec![Frame::VersionNegotiation {
            versions: self.cfg.supported_versions.clone(),
        }];
        let bytes = QuicPacket::new(header, frames)
            .encode()
            .expect("version list fits a packet");
        self.stats.version_negotiations_sent += 1;
        self.outgoing.push_back((to, bytes));
    }

    /// Next datagram to send as `(destination, payload)`.
    pub fn poll_transmit(&mut self, now: SimTime) -> Option<(Addr, Vec<u8>)> {
        if let Some(out) = self.outgoing.pop_front() {
            return Some(out);
        }
        for (remote, conn) in self.conns.iter_mut() {
            if let Some(bytes) = conn.poll_transmit(now) {
                return Some((*remote, bytes));
            }
        }
        None
    }

    pub fn next_timeout(&self) -> Option<SimTime> {
        self.conns
            .values()
            .filter_map(Connection::next_timeout)
            .min()
    }

    pub fn on_timeout(&mut self, now: SimTime) {
        for conn in self.conns.values_mut() {
            if conn.next_timeout().is_some_and(|t| t <= now) {
                conn.on_timeout(now);
            }
        }
    }

    /// Drains connection events. Closed connections are removed afterwards.
    pub fn poll_events(&mut self) -> Vec<(Addr, ConnEvent)> {
        let mut out = Vec::new();
        let mut closed = Vec::new();
        for (remote, conn) in self.conns.iter_mut() {
            while let Some(e) = conn.poll_event() {
                match e {
                    ConnEvent::Connected if conn.role() == Role::Client => {
                        self.registry.insert(*remote, conn.connection_id());
                    }
                    ConnEvent::Closed => closed.push(*remote),
                    _ => {}
                }
                out.push((*remote, e));
            }
        }
        for remote in closed {
            let conn = self
                .conns
                .remove(&remote)
                .expect("closed connection present");
            self.finished.push((remote, conn));
        }
        if self.conns.is_empty() && !self.is_listening() {
            self.udp_open = false;
        }
        out
    }

    pub fn close(&mut self, remote: Addr, now: SimTime) {
        if let Some(c) = self.conns.get_mut(&remote) {
            c.close(now);
        }
    }

    /// Closes the listener and every connection it forked.
    pub fn close_listener(&mut self, now: SimTime) {
        if self.is_listening() {
            self.listener.set(ConnectionState::Closed, now);
        }
        for conn in self.conns.values_mut().filter(|c| c.role() == Role::Server) {
            conn.close(now);
        }
    }
}
