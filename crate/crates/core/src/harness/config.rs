use std::path::PathBuf;
use std::time::Duration;

use super::apps::Workload;
use crate::congestion::algorithm_by_name;
use crate::error::ConfigError;
use crate::sim::TopologyConfig;
use crate::transport::{AckPolicy, ConnectionConfig, TransportParameters};
use crate::wire::MAX_PACKET_SIZE;

/// One dumb-bell experiment. Defaults reproduce the two-flow comparison:
/// 2 Mbps bottleneck, 100 ms minimum RTT, 18 s.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub topology: TopologyConfig,
    pub cc: String,
    pub duration: Duration,
    pub seed: u64,
    /// Flow k starts at (k-1) times this, unless `flow_starts` is set.
    pub flow_start_offset: Duration,
    pub flow_starts: Option<Vec<Duration>>,
    pub streams: u32,
    pub workload: Workload,
    pub sample_interval: Duration,
    pub output_dir: Option<PathBuf>,
    pub ack_policy: AckPolicy,
    /// `None` starts in slow start with no threshold.
    pub initial_ssthresh: Option<usize>,
    pub params: TransportParameters,
    pub socket_buffer: usize,
    pub stream_buffer: usize,
    pub force_0rtt: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            topology: TopologyConfig::default(),
            cc: "newreno".into(),
            duration: Duration::from_secs(18),
            seed: 1,
            flow_start_offset: Duration::from_millis(100),
            flow_starts: None,
            streams: 1,
            workload: Workload::Bulk {
                total: None,
                packet_size: 1024,
            },
            sample_interval: Duration::from_millis(10),
            output_dir: None,
            ack_policy: AckPolicy::default(),
            initial_ssthresh: None,
            params: TransportParameters::default(),
            socket_buffer: crate::buffers::DEFAULT_SOCKET_BUFFER,
            stream_buffer: crate::buffers::DEFAULT_STREAM_BUFFER,
            force_0rtt: false,
        }
    }
}

/// Parses `10ms`, `1.5s`, `250us`; a bare number is milliseconds.
pub fn parse_duration(v: &str) -> Option<Duration> {
    let v = v.trim();
    let (num, scale) = if let Some(n) = v.strip_suffix("us") {
        (n, 1e-6)
    } else if let Some(n) = v.strip_suffix("ms") {
        (n, 1e-3)
    } else if let Some(n) = v.strip_suffix('s') {
        (n, 1.0)
    } else {
        (v, 1e-3)
    };
    let x: f64 = num.trim().parse().ok()?;
    (x.is_finite() && x >= 0.0).then(|| Duration::from_micros((x * scale * 1e6).round() as u64))
}

/// Parses `2Mbps`, `100kbps`, `1Gbps`, `500bps`; a bare number is bit/s.
pub fn parse_rate(v: &str) -> Option<u64> {
    let v = v.trim();
    let lower = v.to_ascii_lowercase();
    let (num, scale) = if let Some(n) = lower.strip_suffix("gbps") {
        (n.to_string(), 1e9)
    } else if let Some(n) = lower.strip_suffix("mbps") {
        (n.to_string(), 1e6)
    } else if let Some(n) = lower.strip_suffix("kbps") {
        (n.to_string(), 1e3)
    } else if let Some(n) = lower.strip_suffix("bps") {
        (n.to_string(), 1.0)
    } else {
        (lower.clone(), 1.0)
    };
    let x: f64 = num.trim().parse().ok()?;
    (x.is_finite() && x >= 0.0).then(|| (x * scale).round() as u64)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| ConfigError::invalid(key, format!("cannot parse '{v}'")))
}

fn dur(key: &str, v: &str) -> Result<Duration, ConfigError> {
    parse_duration(v).ok_or_else(|| ConfigError::invalid(key, format!("bad duration '{v}'")))
}

fn flag(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(ConfigError::invalid(
            key,
            format!("expected a boolean, got '{v}'"),
        )),
    }
}

pub const KEYS: &[&str] = &[
    "flows",
    "bottleneck_rate",
    "bottleneck_delay",
    "edge_rate",
    "edge_delay",
    "queue_packets",
    "edge_queue_packets",
    "cc",
    "duration",
    "seed",
    "flow_start_offset",
    "flow_starts",
    "streams",
    "app",
    "app_bytes",
    "packet_size",
    "interval",
    "packet_count",
    "sample_interval",
    "output_dir",
    "ack_delay",
    "ack_threshold",
    "initial_ssthresh",
    "max_data",
    "max_stream_data",
    "max_streams",
    "idle_timeout",
    "initial_version",
    "socket_buffer",
    "stream_buffer",
    "force_0rtt",
];

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let t = &mut self.topology;
        match key {
            "flows" => t.flows = num(key, v)?,
            "bottleneck_rate" => {
                t.bottleneck_rate_bps =
                    parse_rate(v).ok_or_else(|| ConfigError::invalid(key, "bad rate"))?
            }
            "edge_rate" => {
                t.edge_rate_bps =
                    parse_rate(v).ok_or_else(|| ConfigError::invalid(key, "bad rate"))?
            }
            "bottleneck_delay" => t.bottleneck_delay = dur(key, v)?,
            "edge_delay" => t.edge_delay = dur(key, v)?,
            "queue_packets" => t.queue_packets = if v == "bdp" { None } else { Some(num(key, v)?) },
            "edge_queue_packets" => t.edge_queue_packets = num(key, v)?,
            "cc" => self.cc = v.to_string(),
            "duration" => self.duration = dur(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "flow_start_offset" => self.flow_start_offset = dur(key, v)?,
            "flow_starts" => {
                self.flow_starts = Some(
                    v.split(',')
                        .map(|s| dur(key, s))
                        .collect::<Result<_, _>>()?,
                )
            }
            "streams" => self.streams = num(key, v)?,
            "app" => {
                let packet_size = self.packet_size();
                self.workload = match v {
                    "bulk" => Workload::Bulk {
                        total: None,
                        packet_size,
                    },
                    "periodic" => Workload::Periodic {
                        packet_size,
                        interval: Duration::from_millis(10),
                        count: None,
                    },
                    _ => return Err(ConfigError::invalid(key, "expected 'bulk' or 'periodic'")),
                }
            }
            "app_bytes" => {
                let n: u64 = num(key, v)?;
                match &mut self.workload {
                    Workload::Bulk { total, .. } => *total = (n > 0).then_some(n),
                    _ => return Err(ConfigError::invalid(key, "only applies to app = bulk")),
                }
            }
            "packet_size" => {
                let n: usize = num(key, v)?;
                match &mut self.workload {
                    Workload::Bulk { packet_size, .. } | Workload::Periodic { packet_size, .. } => {
                        *packet_size = n
                    }
                    Workload::Scripted(_) => {}
                }
            }
            "interval" => match &mut self.workload {
                Workload::Periodic { interval, .. } => *interval = dur(key, v)?,
                _ => return Err(ConfigError::invalid(key, "only applies to app = periodic")),
            },
            "packet_count" => match &mut self.workload {
                Workload::Periodic { count, .. } => {
                    let n: u64 = num(key, v)?;
                    *count = (n > 0).then_some(n);
                }
                _ => return Err(ConfigError::invalid(key, "only applies to app = periodic")),
            },
            "sample_interval" => self.sample_interval = dur(key, v)?,
            "output_dir" => self.output_dir = Some(PathBuf::from(v)),
            "ack_delay" => self.ack_policy.max_delay = dur(key, v)?,
            "ack_threshold" => self.ack_policy.packet_threshold = num(key, v)?,
            "initial_ssthresh" => {
                let n: usize = num(key, v)?;
                self.initial_ssthresh = (n > 0).then_some(n);
            }
            "max_data" => self.params.max_data = num(key, v)?,
            "max_stream_data" => self.params.max_stream_data = num(key, v)?,
            "max_streams" => self.params.max_streams = num(key, v)?,
            "idle_timeout" => self.params.idle_timeout = dur(key, v)?,
            "initial_version" => {
                let s = v.trim_start_matches("0x");
                self.params.initial_version =
                    u32::from_str_radix(s, if v.starts_with("0x") { 16 } else { 10 })
                        .map_err(|_| ConfigError::invalid(key, format!("cannot parse '{v}'")))?;
            }
            "socket_buffer" => self.socket_buffer = num(key, v)?,
            "stream_buffer" => self.stream_buffer = num(key, v)?,
            "force_0rtt" => self.force_0rtt = flag(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    fn packet_size(&self) -> usize {
        match &self.workload {
            Workload::Bulk { packet_size, .. } | Workload::Periodic { packet_size, .. } => {
                *packet_size
            }
            Workload::Scripted(_) => 1024,
        }
    }

    /// Reads a flat `key = value` file; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: n + 1,
                    reason: "expected 'key = value'".into(),
                });
            };
            cfg.set(k.trim(), v).map_err(|e| match e {
                ConfigError::Invalid { field, reason } => ConfigError::Syntax {
                    line: n + 1,
                    reason: format!("{field}: {reason}"),
                },
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.topology.validate()?;
        algorithm_by_name(&self.cc)?;
        if self.duration.is_zero() {
            return Err(ConfigError::invalid("duration", "must be positive"));
        }
        if self.sample_interval.is_zero() {
            return Err(ConfigError::invalid("sample_interval", "must be positive"));
        }
        if self.streams == 0 || self.streams > self.params.max_streams as u32 {
            return Err(ConfigError::invalid(
                "streams",
                "must be within [1, max_streams]",
            ));
        }
        match &self.workload {
            Workload::Bulk { packet_size, .. } | Workload::Periodic { packet_size, .. }
                if *packet_size == 0 =>
            {
                return Err(ConfigError::invalid("packet_size", "must be positive"));
            }
            Workload::Periodic { interval, .. } if interval.is_zero() => {
                return Err(ConfigError::invalid("interval", "must be positive"));
            }
            _ => {}
        }
        if let Some(s) = &self.flow_starts {
            if s.len() != self.topology.flows {
                return Err(ConfigError::invalid(
                    "flow_starts",
                    "needs one start time per flow",
                ));
            }
        }
        if self.topology.max_packet_size > MAX_PACKET_SIZE {
            return Err(ConfigError::invalid("max_packet_size", "exceeds 1460"));
        }
        self.connection_config().validate()
    }

    pub fn flow_start(&self, k: usize) -> Duration {
        match &self.flow_starts {
            Some(s) => s[k],
            None => self.flow_start_offset * k as u32,
        }
    }

    pub fn connection_config(&self) -> ConnectionConfig {
        ConnectionConfig {
            params: self.params,
            congestion: self.cc.clone(),
            initial_ssthresh: self.initial_ssthresh.unwrap_or(usize::MAX),
            ack_policy: self.ack_policy,
            socket_send_buffer: self.socket_buffer,
            stream_send_buffer: self.stream_buffer,
            max_packet_size: self.topology.max_packet_size,
            ..ConnectionConfig::default()
        }
    }
}
