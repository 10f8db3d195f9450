//! Connections, streams, handshakes and the per-node endpoint.

pub mod ack;
pub mod connection;
pub mod endpoint;
pub mod params;
pub mod state;
pub mod stream;

pub use ack::{AckPolicy, RecvTracker};
pub use connection::{
    close_code, ConnEvent, ConnSnapshot, Connection, ConnectionConfig, ConnectionStats,
    PacketRecord, Role, TransportError,
};
pub use endpoint::{EndpointRegistry, EndpointStats, QuicEndpoint};
pub use params::{
    HandshakeKind, HandshakeMessage, TransportParameters, CRYPTO_BLOB_LEN, DEFAULT_IDLE_TIMEOUT,
    DEFAULT_MAX_STREAMS,
};
pub use state::{is_valid_path, ConnectionState, StateMachine, Transition};
pub use stream::Stream;
