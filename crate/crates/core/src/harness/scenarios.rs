//! Small canned setups shared by the test suites and the acceptance run.

use std::collections::BTreeMap;
use std::time::Duration;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::apps::{ClientApp, Delivery, SinkApp, Workload};
use super::config::ExperimentConfig;
use super::experiment::{run_experiment, HarnessError};
use super::world::World;
use crate::sim::{point_to_point, Addr, Datagram, LinkConfig, LinkId, LossScript, SimTime};
use crate::transport::{ConnectionConfig, ConnectionState};
use crate::wire::{Frame, QuicHeader, QuicPacket, StreamId, QUIC_VERSION_NEGOTIATION};

/// A client and a listening server joined by one duplex link.
#[derive(Debug)]
pub struct TwoNodes {
    pub world: World,
    pub client: usize,
    pub server: usize,
    pub client_addr: Addr,
    pub server_addr: Addr,
    pub uplink: LinkId,
    pub downlink: LinkId,
}

pub fn two_nodes(
    link: LinkConfig,
    client_cfg: ConnectionConfig,
    server_cfg: ConnectionConfig,
    seed: u64,
) -> TwoNodes {
    let (net, a, b, uplink, downlink) = point_to_point(link);
    let mut world = World::new(net, seed);
    let client_addr = Addr::new(a, 49152);
    let server_addr = Addr::new(b, 443);
    let server = world
        .add_endpoint(server_addr, server_cfg)
        .expect("valid server config");
    world.listen(server);
    world.add_sink(SinkApp::new(server));
    let client = world
        .add_endpoint(client_addr, client_cfg)
        .expect("valid client config");
    TwoNodes {
        world,
        client,
        server,
        client_addr,
        server_addr,
        uplink,
        downlink,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HandshakeMode {
    ZeroRtt,
    OneRtt,
    /// Starts with the negotiation version, forcing a version negotiation round.
    TwoRtt,
}

/// Fast enough that serialization of any packet rounds to zero ticks.
pub const FAST_LINK_BPS: u64 = 100_000_000_000;

/// Time from connect to the first application byte reaching the server
/// application, on a symmetric path with one-way delay `d`.
pub fn first_byte_latency(d: Duration, mode: HandshakeMode) -> Option<Duration> {
    let mut client_cfg = ConnectionConfig::default();
    if mode == HandshakeMode::TwoRtt {
        client_cfg.params.initial_version = QUIC_VERSION_NEGOTIATION;
    }
    let mut t = two_nodes(
        LinkConfig::new(FAST_LINK_BPS, d, 1000),
        client_cfg,
        ConnectionConfig::default(),
        1,
    );
    t.world.endpoint_mut(t.client).registry.force_0rtt = mode == HandshakeMode::ZeroRtt;
    let app = ClientApp::new(
        t.client,
        t.server_addr,
        SimTime::ZERO,
        1,
        Workload::Scripted(vec![(Duration::ZERO, 1, 100)]),
    );
    t.world.add_client(app);
    t.world.run_until(SimTime::ZERO + d * 20);
    t.world.sinks[0].first_byte_at.map(|at| at - SimTime::ZERO)
}

fn stream_ids(p: &QuicPacket) -> Vec<StreamId> {
    p.frames
        .iter()
        .filter_map(|f| match f {
            Frame::Stream(s) if s.stream_id != StreamId::CONTROL => Some(s.stream_id),
            _ => None,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HolRun {
    pub stream1: Vec<Delivery>,
    pub stream2: Vec<Delivery>,
    pub dropped: u64,
    pub violations: Vec<String>,
}

/// Two streams carrying 300 B messages every 100 ms, stream 2 offset by
/// 25 ms so each packet carries one stream. With `drop`, the first
/// short-header packet carrying stream 1 data is lost on the way.
pub fn hol_run(drop: bool) -> HolRun {
    let mut t = two_nodes(
        LinkConfig::new(100_000_000, Duration::from_millis(20), 1000),
        ConnectionConfig::default(),
        ConnectionConfig::default(),
        7,
    );
    if drop {
        let mut done = false;
        let script = move |_idx: u64, d: &Datagram| {
            if done {
                return false;
            }
            let Ok(p) = QuicPacket::decode(&d.payload) else {
                return false;
            };
            let hit = matches!(p.header, QuicHeader::Short { .. }) && {
                let ids = stream_ids(&p);
                !ids.is_empty() && ids.iter().all(|s| s.0 == 1)
            };
            done = hit;
            hit
        };
        t.world
            .net
            .set_loss(t.uplink, LossScript::Predicate(Box::new(script)));
    }
    let mut writes = Vec::new();
    for i in 0..20u64 {
        writes.push((Duration::from_millis(100 * i), 1, 300));
        writes.push((Duration::from_millis(100 * i + 25), 2, 300));
    }
    t.world.add_client(ClientApp::new(
        t.client,
        t.server_addr,
        SimTime::ZERO,
        2,
        Workload::Scripted(writes),
    ));
    t.world.run_until(SimTime::from_secs(5));
    let sink = &t.world.sinks[0];
    let by_stream = |s: u32| {
        sink.deliveries
            .iter()
            .filter(|d| d.stream == s)
            .copied()
            .collect::<Vec<_>>()
    };
    HolRun {
        stream1: by_stream(1),
        stream2: by_stream(2),
        dropped: t.world.link_stats(t.uplink).scripted_losses,
        violations: t.world.finish_checks(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReliabilityCase {
    pub seed: u64,
    pub loss_rate: f64,
    pub streams: u32,
    pub bytes_per_stream: u64,
}

impl ReliabilityCase {
    /// Loss in [0, 0.2], 1 to 4 streams, up to 1 MB per stream.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = |r: &mut ChaCha8Rng| (r.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let loss_rate = 0.2 * unit(&mut rng);
        let streams = 1 + (rng.next_u64() % 4) as u32;
        let bytes_per_stream = 1 + rng.next_u64() % 1_000_000;
        ReliabilityCase {
            seed,
            loss_rate,
            streams,
            bytes_per_stream,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReliabilityOutcome {
    pub sent: BTreeMap<u32, u64>,
    pub received: BTreeMap<u32, u64>,
    pub mismatches: u64,
    pub all_finished: bool,
    pub scripted_losses: u64,
    pub finished_at: Option<SimTime>,
    pub violations: Vec<String>,
}

impl ReliabilityOutcome {
    pub fn intact(&self) -> bool {
        self.violations.is_empty()
            && self.mismatches == 0
            && self.all_finished
            && self.sent == self.received
    }
}

/// Transfers the case's bytes over a lossy 10 Mbps, 20 ms path, dropping
/// each datagram in either direction with probability `loss_rate`.
pub fn run_reliability(case: &ReliabilityCase) -> ReliabilityOutcome {
    let mut t = two_nodes(
        LinkConfig::new(10_000_000, Duration::from_millis(20), 100),
        ConnectionConfig::default(),
        ConnectionConfig::default(),
        case.seed,
    );
    for (k, link) in [t.uplink, t.downlink].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(case.seed.wrapping_mul(31).wrapping_add(k as u64));
        let threshold = (case.loss_rate * u64::MAX as f64) as u64;
        let script = move |_: u64, _: &Datagram| rng.next_u64() < threshold;
        t.world
            .net
            .set_loss(link, LossScript::Predicate(Box::new(script)));
    }
    let total = case.bytes_per_stream * case.streams as u64;
    let workload = Workload::Bulk {
        total: Some(total),
        packet_size: 1000,
    };
    let mut app = ClientApp::new(
        t.client,
        t.server_addr,
        SimTime::ZERO,
        case.streams,
        workload,
    );
    app.finish_streams = true;
    t.world.add_client(app);
    let cap = SimTime::from_secs(3600);
    let mut finished_at = None;
    while t.world.now() < cap {
        let next = t.world.now() + Duration::from_secs(1);
        t.world.run_until(next);
        let sink = &t.world.sinks[0];
        let sent = t.world.clients[0].stream_bytes();
        let done = sent.values().sum::<u64>() == total
            && sent.keys().all(|s| {
                sink.streams
                    .get(&(t.client_addr, *s))
                    .is_some_and(|x| x.finished)
            });
        if done {
            finished_at = Some(t.world.now());
            break;
        }
    }
    let sink = &t.world.sinks[0];
    let received: BTreeMap<u32, u64> = sink
        .streams
        .iter()
        .map(|((_, s), x)| (*s, x.received))
        .collect();
    let mut violations = t.world.finish_checks();
    for (i, name) in [(t.client, "client"), (t.server, "server")] {
        if let Some((_, c)) = t.world.endpoint(i).connections().next() {
            if c.state() != ConnectionState::Open {
                violations.push(format!("{name} connection ended in {}", c.state()));
            }
        }
    }
    ReliabilityOutcome {
        sent: t.world.clients[0].stream_bytes().clone(),
        received,
        mismatches: sink.total_mismatches(),
        all_finished: finished_at.is_some(),
        scripted_losses: t.world.link_stats(t.uplink).scripted_losses
            + t.world.link_stats(t.downlink).scripted_losses,
        finished_at,
        violations,
    }
}

/// Single flow, deep queue, no loss, ACK every second packet, starting
/// in congestion avoidance at `ssthresh`.
pub fn ramp_config(cc: &str, ssthresh: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        cc: cc.into(),
        duration: Duration::from_secs(20),
        ..Default::default()
    };
    cfg.topology.flows = 1;
    cfg.topology.queue_packets = Some(1000);
    cfg.initial_ssthresh = Some(ssthresh);
    cfg.ack_policy.packet_threshold = 2;
    cfg.ack_policy.max_delay = Duration::from_millis(25);
    cfg
}

/// Time for the congestion window to grow from `ssthresh` to twice that.
pub fn ramp_time(cc: &str, ssthresh: usize) -> Result<Option<Duration>, HarnessError> {
    let r = run_experiment(&ramp_config(cc, ssthresh))?;
    let trace = &r.traces[0];
    let (Some(a), Some(b)) = (
        trace.first_cwnd_at_least(ssthresh),
        trace.first_cwnd_at_least(2 * ssthresh),
    ) else {
        return Ok(None);
    };
    Ok(Some(b - a))
}
