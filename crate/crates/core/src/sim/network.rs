//! Point-to-point links with drop-tail queues and static routing.
//!
//! A link serializes one datagram at a time at its configured rate, then
//! propagates it for `one_way_delay`. Datagrams waiting behind the one in
//! service sit in a FIFO bounded by `queue_capacity`; arrivals that find it
//! full are dropped. Scripted losses are applied at the far end of a link,
//! after the datagram has consumed its serialization slot.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::time::Duration;

use thiserror::Error;

use super::scheduler::Scheduler;
use super::time::SimTime;

/// Largest datagram payload a link will carry.
pub const MTU_PAYLOAD: usize = 1500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u32);

/// A UDP-style endpoint address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Addr {
    pub node: NodeId,
    pub port: u16,
}

impl Addr {
    pub const fn new(node: NodeId, port: u16) -> Self {
        Addr { node, port }
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node.0, self.port)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Datagram {
    pub id: u64,
    pub src: Addr,
    pub dst: Addr,
    pub payload: Vec<u8>,
}

impl Datagram {
    pub fn bits(&self) -> u64 {
        self.payload.len() as u64 * 8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkConfig {
    pub rate_bps: u64,
    pub one_way_delay: Duration,
    pub queue_capacity: usize,
}

impl LinkConfig {
    pub fn new(rate_bps: u64, one_way_delay: Duration, queue_capacity: usize) -> Self {
        LinkConfig {
            rate_bps,
            one_way_delay,
            queue_capacity,
        }
    }

    /// Serialization time of `bytes` on this link, rounded to the nearest tick.
    pub fn serialization_time(&self, bytes: usize) -> Duration {
        serialization_time(bytes, self.rate_bps)
    }
}

pub fn serialization_time(bytes: usize, rate_bps: u64) -> Duration {
    let bits = bytes as u128 * 8;
    let rate = rate_bps as u128;
    let us = (bits * 1_000_000 + rate / 2) / rate;
    Duration::from_micros(us as u64)
}

/// Decides from the egress index and datagram whether to drop it.
pub type LossPredicate = Box<dyn FnMut(u64, &Datagram) -> bool + Send>;

/// Losses injected at the egress of a link.
pub enum LossScript {
    None,
    /// Drop the datagrams whose 0-based egress index is in the set.
    Indices(BTreeSet<u64>),
    /// Drop whenever the predicate, given the egress index and datagram, says so.
    Predicate(LossPredicate),
}

impl fmt::Debug for LossScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossScript::None => write!(f, "None"),
            LossScript::Indices(set) => write!(f, "Indices({} entries)", set.len()),
            LossScript::Predicate(_) => write!(f, "Predicate(..)"),
        }
    }
}

impl LossScript {
    fn should_drop(&mut self, index: u64, d: &Datagram) -> bool {
        match self {
            LossScript::None => false,
            LossScript::Indices(set) => set.contains(&index),
            LossScript::Predicate(p) => p(index, d),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub offered: u64,
    pub queue_drops: u64,
    pub scripted_losses: u64,
    pub departed: u64,
    pub bytes_departed: u64,
    pub arrived: u64,
    pub max_queue: usize,
}

#[derive(Debug)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    pub config: LinkConfig,
    queue: VecDeque<(SimTime, Datagram)>,
    in_service: Option<(HopTimes, Datagram)>,
    propagating: usize,
    egress_index: u64,
    loss: LossScript,
    stats: LinkStats,
}

impl Link {
    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_busy(&self) -> bool {
        self.in_service.is_some()
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    /// Datagrams currently owned by this link (queued, in service, propagating).
    pub fn occupancy(&self) -> usize {
        self.queue.len() + usize::from(self.in_service.is_some()) + self.propagating
    }
}

/// When a datagram entered a link and when its serialization began.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HopTimes {
    pub enqueued_at: SimTime,
    pub service_start: SimTime,
}

/// Scheduler events owned by the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NetEvent {
    /// The datagram in service on the link has been fully serialized.
    TxComplete(LinkId),
    /// A datagram reaches the far end of the link.
    Arrive(LinkId, Datagram, HopTimes),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NetCounters {
    pub injected: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub queue_drops: u64,
    pub scripted_losses: u64,
    pub unroutable: u64,
}

impl NetCounters {
    pub fn in_flight(&self) -> u64 {
        self.injected - self.delivered - self.dropped
    }
}

/// One completed hop, recorded when traversal logging is enabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Traversal {
    pub datagram: u64,
    pub link: LinkId,
    pub bytes: usize,
    pub enqueued_at: SimTime,
    pub service_start: SimTime,
    pub arrived_at: SimTime,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("datagram payload of {0} bytes exceeds the {MTU_PAYLOAD}-byte MTU")]
    Oversize(usize),
}

#[derive(Debug, Default)]
pub struct Network {
    names: Vec<String>,
    links: Vec<Link>,
    routes: BTreeMap<(NodeId, NodeId), LinkId>,
    counters: NetCounters,
    next_id: u64,
    traversals: Option<Vec<Traversal>>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>) -> NodeId {
        self.names.push(name.into());
        NodeId(self.names.len() as u32 - 1)
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.names[id.0 as usize]
    }

    /// Adds a unidirectional link.
    pub fn add_link(&mut self, from: NodeId, to: NodeId, config: LinkConfig) -> LinkId {
        assert!(config.rate_bps > 0, "link rate must be positive");
        self.links.push(Link {
            from,
            to,
            config,
            queue: VecDeque::new(),
            in_service: None,
            propagating: 0,
            egress_index: 0,
            loss: LossScript::None,
            stats: LinkStats::default(),
        });
        LinkId(self.links.len() as u32 - 1)
    }

    /// Adds a pair of links, `a -> b` then `b -> a`.
    pub fn add_duplex(&mut self, a: NodeId, b: NodeId, config: LinkConfig) -> (LinkId, LinkId) {
        (self.add_link(a, b, config), self.add_link(b, a, config))
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0 as usize]
    }

    pub fn links(&self) -> impl Iterator<Item = (LinkId, &Link)> {
        self.links
            .iter()
            .enumerate()
            .map(|(i, l)| (LinkId(i as u32), l))
    }

    pub fn set_loss(&mut self, id: LinkId, loss: LossScript) {
        self.links[id.0 as usize].loss = loss;
    }

    pub fn set_route(&mut self, at: NodeId, dst: NodeId, via: LinkId) {
        self.routes.insert((at, dst), via);
    }

    pub fn route(&self, at: NodeId, dst: NodeId) -> Option<LinkId> {
        self.routes.get(&(at, dst)).copied()
    }

    /// Fills the routing table with minimum-hop routes between all node pairs.
    /// Ties are broken by link id.
    pub fn compute_routes(&mut self) {
        let n = self.names.len();
        for dst in 0..n {
            // reverse BFS from dst
            let mut dist = vec![usize::MAX; n];
            dist[dst] = 0;
            let mut frontier = VecDeque::from([dst]);
            while let Some(v) = frontier.pop_front() {
                for (i, link) in self.links.iter().enumerate() {
                    let u = link.from.0 as usize;
                    if link.to.0 as usize == v && dist[u] == usize::MAX {
                        dist[u] = dist[v] + 1;
                        frontier.push_back(u);
                        self.routes
                            .entry((link.from, NodeId(dst as u32)))
                            .or_insert(LinkId(i as u32));
                    }
                }
            }
        }
    }

    pub fn counters(&self) -> NetCounters {
        self.counters
    }

    pub fn record_traversals(&mut self, on: bool) {
        self.traversals = on.then(Vec::new);
    }

    pub fn traversals(&self) -> &[Traversal] {
        self.traversals.as_deref().unwrap_or(&[])
    }

    /// Injects a datagram at `src.node`, returning its id.
    pub fn send<E: From<NetEvent>>(
        &mut self,
        sched: &mut Scheduler<E>,
        src: Addr,
        dst: Addr,
        payload: Vec<u8>,
    ) -> Result<u64, NetError> {
        if payload.len() > MTU_PAYLOAD {
            return Err(NetError::Oversize(payload.len()));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.counters.injected += 1;
        self.forward(
            sched,
            src.node,
            Datagram {
                id,
                src,
                dst,
                payload,
            },
        );
        Ok(id)
    }

    fn forward<E: From<NetEvent>>(&mut self, sched: &mut Scheduler<E>, at: NodeId, d: Datagram) {
        match self.route(at, d.dst.node) {
            Some(link) => self.link_transmit(sched, link, d),
            None => {
                self.counters.unroutable += 1;
                self.counters.dropped += 1;
            }
        }
    }

    /// Offers a datagram to a link: start service if idle, queue it, or drop it.
    pub fn link_transmit<E: From<NetEvent>>(
        &mut self,
        sched: &mut Scheduler<E>,
        id: LinkId,
        d: Datagram,
    ) {
        let now = sched.now();
        let link = &mut self.links[id.0 as usize];
        link.stats.offered += 1;
        if link.in_service.is_none() {
            debug_assert!(link.queue.is_empty());
            let done = now + link.config.serialization_time(d.payload.len());
            let hop = HopTimes {
                enqueued_at: now,
                service_start: now,
            };
            link.in_service = Some((hop, d));
            sched.schedule(done, NetEvent::TxComplete(id).into());
        } else if link.queue.len() < link.config.queue_capacity {
            link.queue.push_back((now, d));
            link.stats.max_queue = link.stats.max_queue.max(link.queue.len());
        } else {
            link.stats.queue_drops += 1;
            self.counters.queue_drops += 1;
            self.counters.dropped += 1;
        }
    }

    /// Handles a network event. Returns the datagram if it reached its
    /// destination node.
    pub fn handle<E: From<NetEvent>>(
        &mut self,
        sched: &mut Scheduler<E>,
        event: NetEvent,
    ) -> Option<Datagram> {
        let now = sched.now();
        match event {
            NetEvent::TxComplete(id) => {
                let link = &mut self.links[id.0 as usize];
                let (hop, d) = link.in_service.take().expect("TxComplete on an idle link");
                link.stats.departed += 1;
                link.stats.bytes_departed += d.payload.len() as u64;
                link.propagating += 1;
                let arrive = now + link.config.one_way_delay;
                sched.schedule(arrive, NetEvent::Arrive(id, d, hop).into());
                if let Some((enqueued_at, next)) = link.queue.pop_front() {
                    let done = now + link.config.serialization_time(next.payload.len());
                    let hop = HopTimes {
                        enqueued_at,
                        service_start: now,
                    };
                    link.in_service = Some((hop, next));
                    sched.schedule(done, NetEvent::TxComplete(id).into());
                }
                None
            }
            NetEvent::Arrive(id, d, hop) => {
                let link = &mut self.links[id.0 as usize];
                link.propagating -= 1;
                let index = link.egress_index;
                link.egress_index += 1;
                let to = link.to;
                if let Some(log) = self.traversals.as_mut() {
                    log.push(Traversal {
                        datagram: d.id,
                        link: id,
                        bytes: d.payload.len(),
                        enqueued_at: hop.enqueued_at,
                        service_start: hop.service_start,
                        arrived_at: now,
                    });
                }
                let link = &mut self.links[id.0 as usize];
                if link.loss.should_drop(index, &d) {
                    link.stats.scripted_losses += 1;
                    self.counters.scripted_losses += 1;
                    self.counters.dropped += 1;
                    return None;
                }
                link.stats.arrived += 1;
                if d.dst.node == to {
                    self.counters.delivered += 1;
                    Some(d)
                } else {
                    self.forward(sched, to, d);
                    None
                }
            }
        }
    }

    /// Datagrams held by links right now, counted independently of the
    /// injection/delivery/drop counters.
    pub fn datagrams_in_links(&self) -> u64 {
        self.links.iter().map(|l| l.occupancy() as u64).sum()
    }

    /// `injected = delivered + dropped + in_flight`, with in-flight counted
    /// from the links themselves.
    pub fn conservation_holds(&self) -> bool {
        let c = self.counters;
        c.injected == c.delivered + c.dropped + self.datagrams_in_links()
    }

    /// Every queue is within its capacity.
    pub fn queues_within_capacity(&self) -> bool {
        self.links
            .iter()
            .all(|l| l.queue.len() <= l.config.queue_capacity)
    }
}
