use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use super::apps::{ClientApp, SinkApp};
use super::config::ExperimentConfig;
use super::trace::{cwnd_csv, rtt_csv, FlowTrace};
use super::world::World;
use crate::error::ConfigError;
use crate::sim::{build_dumbbell, Addr, SimTime};

pub const CLIENT_PORT: u16 = 49152;
pub const SERVER_PORT: u16 = 443;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot write results: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowSummary {
    pub flow: usize,
    pub start_s: f64,
    pub bytes_sent: u64,
    pub bytes_delivered: u64,
    pub goodput_bps: f64,
    pub mean_rtt_ms: f64,
    pub median_rtt_ms: f64,
    pub min_rtt_ms: f64,
    pub rtt_samples: usize,
    pub packets_sent: u64,
    pub packets_lost: u64,
    pub retransmissions: u64,
    pub rto_count: u64,
    /// Time-weighted mean cwnd over the final third of the run.
    pub steady_cwnd_bytes: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryReport {
    pub cc: String,
    pub seed: u64,
    pub duration_s: f64,
    pub bottleneck_bps: u64,
    pub min_rtt_ms: f64,
    pub bdp_bytes: u64,
    pub queue_packets: usize,
    pub flows: Vec<FlowSummary>,
    pub total_goodput_bps: f64,
    pub bottleneck_utilization: f64,
    pub jain_index: f64,
    pub bottleneck_queue_drops: u64,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub summary: SummaryReport,
    pub traces: Vec<FlowTrace>,
}

fn ms(d: Duration) -> f64 {
    d.as_micros() as f64 / 1000.0
}

pub fn jain_index(xs: &[f64]) -> f64 {
    let sum: f64 = xs.iter().sum();
    let sq: f64 = xs.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return 1.0;
    }
    sum * sum / (xs.len() as f64 * sq)
}

/// Builds the dumb-bell world for `cfg`: one client/server endpoint pair
/// per flow, servers listening with a sink, clients scheduled to start.
pub fn build_world(cfg: &ExperimentConfig) -> Result<World, ConfigError> {
    cfg.validate()?;
    let db = build_dumbbell(&cfg.topology)?;
    let mut world = World::new(db.net, cfg.seed);
    let conn_cfg = cfg.connection_config();
    for k in 0..cfg.topology.flows {
        let server = Addr::new(db.servers[k], SERVER_PORT);
        let client = Addr::new(db.clients[k], CLIENT_PORT);
        let s = world.add_endpoint(server, conn_cfg.clone())?;
        world.listen(s);
        world.add_sink(SinkApp::new(s));
        let c = world.add_endpoint(client, conn_cfg.clone())?;
        world.endpoint_mut(c).registry.force_0rtt = cfg.force_0rtt;
        let start = SimTime::ZERO + cfg.flow_start(k);
        world.add_client(ClientApp::new(
            c,
            server,
            start,
            cfg.streams,
            cfg.workload.clone(),
        ));
    }
    world.enable_tracing(cfg.sample_interval);
    Ok(world)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    let mut world = build_world(cfg)?;
    let end = SimTime::ZERO + cfg.duration;
    world.run_until(end);
    let violations = world.finish_checks();
    Ok(summarize(cfg, &world, violations))
}

fn summarize(cfg: &ExperimentConfig, world: &World, violations: Vec<String>) -> ExperimentResult {
    let end = SimTime::ZERO + cfg.duration;
    let steady_from = SimTime::ZERO + cfg.duration * 2 / 3;
    let mut flows = Vec::new();
    for (k, app) in world.clients.iter().enumerate() {
        let trace = &world.traces()[k];
        let delivered: u64 = world
            .sinks
            .iter()
            .map(|s| {
                s.bytes_from(Addr::new(
                    world.endpoint(app.endpoint).local().node,
                    CLIENT_PORT,
                ))
            })
            .sum();
        let active = end.saturating_since(app.start);
        let mut rtts: Vec<Duration> = trace.rtt_samples.iter().map(|&(_, d)| d).collect();
        rtts.sort();
        let mean = if rtts.is_empty() {
            0.0
        } else {
            rtts.iter().map(|d| ms(*d)).sum::<f64>() / rtts.len() as f64
        };
        let median = rtts.get(rtts.len() / 2).map_or(0.0, |d| ms(*d));
        let ep = world.endpoint(app.endpoint);
        let stats = ep
            .connection(app.remote)
            .or_else(|| {
                ep.finished()
                    .iter()
                    .rev()
                    .find(|(r, _)| *r == app.remote)
                    .map(|(_, c)| c)
            })
            .map(|c| *c.stats())
            .unwrap_or_default();
        flows.push(FlowSummary {
            flow: k + 1,
            start_s: app.start.as_secs_f64(),
            bytes_sent: app.bytes_sent(),
            bytes_delivered: delivered,
            goodput_bps: if active.is_zero() {
                0.0
            } else {
                delivered as f64 * 8.0 / active.as_secs_f64()
            },
            mean_rtt_ms: mean,
            median_rtt_ms: median,
            min_rtt_ms: rtts.first().map_or(0.0, |d| ms(*d)),
            rtt_samples: rtts.len(),
            packets_sent: stats.packets_sent,
            packets_lost: stats.packets_lost,
            retransmissions: stats.retransmissions,
            rto_count: stats.rto_count,
            steady_cwnd_bytes: trace.mean_cwnd(steady_from, end).unwrap_or(0.0),
        });
    }
    let total: f64 = flows.iter().map(|f| f.goodput_bps).sum();
    let first_start = world
        .clients
        .iter()
        .map(|c| c.start)
        .min()
        .unwrap_or(SimTime::ZERO);
    let window = end.saturating_since(first_start).as_secs_f64();
    let delivered_bits: f64 = flows.iter().map(|f| f.bytes_delivered as f64 * 8.0).sum();
    let rate = cfg.topology.bottleneck_rate_bps as f64;
    let goodputs: Vec<f64> = flows.iter().map(|f| f.goodput_bps).collect();
    let bottleneck = world
        .net
        .links()
        .find(|(_, l)| l.config.rate_bps == cfg.topology.bottleneck_rate_bps);
    let summary = SummaryReport {
        cc: cfg.cc.to_ascii_lowercase(),
        seed: cfg.seed,
        duration_s: cfg.duration.as_secs_f64(),
        bottleneck_bps: cfg.topology.bottleneck_rate_bps,
        min_rtt_ms: ms(cfg.topology.min_rtt()),
        bdp_bytes: cfg.topology.bdp_bytes(),
        queue_packets: cfg.topology.bottleneck_queue(),
        flows,
        total_goodput_bps: total,
        bottleneck_utilization: if window > 0.0 {
            delivered_bits / (rate * window)
        } else {
            0.0
        },
        jain_index: jain_index(&goodputs),
        bottleneck_queue_drops: bottleneck.map_or(0, |(_, l)| l.stats().queue_drops),
        violations,
    };
    ExperimentResult {
        summary,
        traces: world.traces().to_vec(),
    }
}

/// Writes `cwnd-flow<k>.csv`, `rtt-flow<k>.csv` and `summary.json`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    for t in &result.traces {
        fs::write(dir.join(format!("cwnd-flow{}.csv", t.flow)), cwnd_csv(t))?;
        fs::write(dir.join(format!("rtt-flow{}.csv", t.flow)), rtt_csv(t))?;
    }
    let mut json = serde_json::to_string_pretty(&result.summary).expect("summary serializes");
    json.push('\n');
    fs::write(dir.join("summary.json"), json)?;
    Ok(())
}
