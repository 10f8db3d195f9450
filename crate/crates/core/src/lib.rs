pub mod buffers;
pub mod congestion;
pub mod error;
pub mod harness;
pub mod sim;
pub mod transport;
pub mod wire;

pub use error::ConfigError;
