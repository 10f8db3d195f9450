use std::time::Duration;

use crate::error::ConfigError;

use super::network::{LinkConfig, LinkId, Network, NodeId};

/// Dumb-bell topology parameters: `flows` client/server pairs joined by one
/// shared bottleneck between two routers.
#[derive(Clone, Debug, PartialEq)]
pub struct TopologyConfig {
    pub flows: usize,
    pub bottleneck_rate_bps: u64,
    pub bottleneck_delay: Duration,
    pub edge_rate_bps: u64,
    pub edge_delay: Duration,
    /// Bottleneck queue in packets; `None` means one BDP of max-size packets.
    pub queue_packets: Option<usize>,
    pub edge_queue_packets: usize,
    pub max_packet_size: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            flows: 2,
            bottleneck_rate_bps: 2_000_000,
            bottleneck_delay: Duration::from_millis(40),
            edge_rate_bps: 100_000_000,
            edge_delay: Duration::from_millis(5),
            queue_packets: None,
            edge_queue_packets: 1000,
            max_packet_size: crate::wire::MAX_PACKET_SIZE,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.flows == 0 {
            return Err(ConfigError::invalid(
                "flows",
                "at least one client/server pair is required",
            ));
        }
        if self.bottleneck_rate_bps == 0 {
            return Err(ConfigError::invalid(
                "bottleneck_rate",
                "rate must be positive",
            ));
        }
        if self.edge_rate_bps == 0 {
            return Err(ConfigError::invalid("edge_rate", "rate must be positive"));
        }
        if self.queue_packets == Some(0) {
            return Err(ConfigError::invalid(
                "queue_packets",
                "queue must hold at least one packet",
            ));
        }
        if self.max_packet_size == 0 {
            return Err(ConfigError::invalid("max_packet_size", "must be positive"));
        }
        Ok(())
    }

    /// Propagation-only round trip: twice the sum of one-way delays on a path.
    pub fn min_rtt(&self) -> Duration {
        2 * (self.edge_delay + self.bottleneck_delay + self.edge_delay)
    }

    pub fn bdp_bytes(&self) -> u64 {
        (self.bottleneck_rate_bps as u128 * self.min_rtt().as_micros() / 8_000_000) as u64
    }

    pub fn bottleneck_queue(&self) -> usize {
        self.queue_packets.unwrap_or_else(|| {
            (self.bdp_bytes() as usize)
                .div_ceil(self.max_packet_size)
                .max(1)
        })
    }
}

#[derive(Debug)]
pub struct Dumbbell {
    pub net: Network,
    pub clients: Vec<NodeId>,
    pub servers: Vec<NodeId>,
    pub left: NodeId,
    pub right: NodeId,
    /// Left-to-right (data direction) bottleneck link.
    pub bottleneck: LinkId,
    pub bottleneck_reverse: LinkId,
    pub client_uplinks: Vec<LinkId>,
    pub server_downlinks: Vec<LinkId>,
}

pub fn build_dumbbell(cfg: &TopologyConfig) -> Result<Dumbbell, ConfigError> {
    cfg.validate()?;
    let mut net = Network::new();
    let left = net.add_node("left-router");
    let right = net.add_node("right-router");
    let edge = LinkConfig::new(cfg.edge_rate_bps, cfg.edge_delay, cfg.edge_queue_packets);
    let (bottleneck, bottleneck_reverse) = net.add_duplex(
        left,
        right,
        LinkConfig::new(
            cfg.bottleneck_rate_bps,
            cfg.bottleneck_delay,
            cfg.bottleneck_queue(),
        ),
    );
    let mut clients = Vec::new();
    let mut servers = Vec::new();
    let mut client_uplinks = Vec::new();
    let mut server_downlinks = Vec::new();
    for k in 0..cfg.flows {
        let c = net.add_node(format!("client-{}", k + 1));
        let (up, _) = net.add_duplex(c, left, edge);
        clients.push(c);
        client_uplinks.push(up);
    }
    for k in 0..cfg.flows {
        let s = net.add_node(format!("server-{}", k + 1));
        let (down, _) = net.add_duplex(right, s, edge);
        servers.push(s);
        server_downlinks.push(down);
    }
    net.compute_routes();
    Ok(Dumbbell {
        net,
        clients,
        servers,
        left,
        right,
        bottleneck,
        bottleneck_reverse,
        client_uplinks,
        server_downlinks,
    })
}

/// Two nodes joined by a duplex link. Returns `(network, a, b, a->b, b->a)`.
pub fn point_to_point(link: LinkConfig) -> (Network, NodeId, NodeId, LinkId, LinkId) {
    let mut net = Network::new();
    let a = net.add_node("a");
    let b = net.add_node("b");
    let (ab, ba) = net.add_duplex(a, b, link);
    net.compute_routes();
    (net, a, b, ab, ba)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::network::{Addr, NetEvent};
    use crate::sim::{Scheduler, SimTime};

    #[derive(Debug)]
    struct Ev(NetEvent);

    impl From<NetEvent> for Ev {
        fn from(e: NetEvent) -> Self {
            Ev(e)
        }
    }

    #[test]
    fn default_mirrors_experiment_parameters() {
        let cfg = TopologyConfig::default();
        assert_eq!(cfg.min_rtt(), Duration::from_millis(100));
        assert_eq!(cfg.bdp_bytes(), 25_000);
        // ceil(25000 / 1460)
        assert_eq!(cfg.bottleneck_queue(), 18);
    }

    #[test]
    fn symmetric_delays() {
        let cfg = TopologyConfig {
            flows: 1,
            edge_delay: Duration::from_millis(3),
            bottleneck_delay: Duration::from_millis(7),
            ..TopologyConfig::default()
        };
        assert_eq!(cfg.min_rtt(), Duration::from_millis(2 * (3 + 7 + 3)));
    }

    #[test]
    fn rejects_bad_configs() {
        let zero_rate = TopologyConfig {
            bottleneck_rate_bps: 0,
            ..TopologyConfig::default()
        };
        assert!(build_dumbbell(&zero_rate).is_err());
        let no_flows = TopologyConfig {
            flows: 0,
            ..TopologyConfig::default()
        };
        assert!(build_dumbbell(&no_flows).is_err());
    }

    #[test]
    fn ping_measures_min_rtt_plus_probe_serialization() {
        let cfg = TopologyConfig::default();
        let mut d = build_dumbbell(&cfg).unwrap();
        let mut sched = Scheduler::new();
        let c = Addr::new(d.clients[0], 9);
        let s = Addr::new(d.servers[0], 9);
        d.net.send(&mut sched, c, s, vec![0]).unwrap();
        let mut echoed = None;
        while let Some((t, Ev(e))) = sched.pop_until(SimTime::MAX) {
            if let Some(dg) = d.net.handle(&mut sched, e) {
                if dg.dst == s {
                    d.net.send(&mut sched, s, c, dg.payload).unwrap();
                } else {
                    echoed = Some(t);
                }
            }
        }
        // hand sum: 2 * (5 + 40 + 5) ms of propagation, plus 8 bits on each
        // hop: 0.08 us on 100 Mb/s edges rounds to 0, 4 us on the 2 Mb/s
        // bottleneck, once per direction.
        assert_eq!(echoed, Some(SimTime::from_micros(100_000 + 2 * 4)));
    }
}
