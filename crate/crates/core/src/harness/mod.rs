//! Applications, the dumb-bell experiment, traces and batch execution.

pub mod apps;
pub mod batch;
pub mod config;
pub mod experiment;
pub mod scenarios;
pub mod trace;
pub mod world;

pub use apps::{
    pattern, pattern_byte, ClientApp, Delivery, SinkApp, StreamSink, Workload, WriteRecord,
};
pub use batch::{map_runs, map_runs_sequential, run_batch, run_batch_sequential};
pub use config::{parse_duration, parse_rate, ExperimentConfig};
pub use experiment::{
    build_world, jain_index, run_experiment, write_outputs, ExperimentResult, FlowSummary,
    HarnessError, SummaryReport, CLIENT_PORT, SERVER_PORT,
};
pub use trace::{cwnd_csv, rtt_csv, FlowTrace, TraceRecord};
pub use world::{World, WorldEvent};
