//! Deterministic discrete-event substrate: virtual clock, event queue and
//! the simulated point-to-point network.

pub mod network;
pub mod scheduler;
pub mod time;
pub mod topology;

pub use network::{
    Addr, Datagram, LinkConfig, LinkId, LossPredicate, LossScript, NetEvent, Network, NodeId,
};
pub use scheduler::{EventHandle, Scheduler};
pub use time::SimTime;
pub use topology::{build_dumbbell, point_to_point, Dumbbell, TopologyConfig};
