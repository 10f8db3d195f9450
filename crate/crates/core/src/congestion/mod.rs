//! Congestion control: window algorithms, RTT estimation and loss detection.

mod algorithm;
mod controller;
mod loss;
mod rtt;
mod state;

pub use algorithm::{
    AckEvent, CongestionEvent, CongestionOps, NewReno, QuicCongestionOps, QuicNewReno, QuicShim,
    Vegas, VEGAS_ALPHA, VEGAS_BETA, VEGAS_GAMMA,
};
pub use controller::{algorithm_by_name, CongestionController, ALGORITHMS};
pub use loss::{LossRule, DEFAULT_REORDER_THRESHOLD};
pub use rtt::{RttEstimator, INITIAL_RTO, MAX_RTO, MIN_RTO};
pub use state::{CongestionState, INITIAL_WINDOW, MIN_WINDOW, MSS};
