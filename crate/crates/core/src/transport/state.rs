use std::fmt;

use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConnectionState {
    Idle,
    Listening,
    Connecting1Rtt,
    Connecting2Rtt,
    Open,
    Closing,
    Closed,
}

impl ConnectionState {
    pub fn as_str(self) -> &'static str {
        match self {
            ConnectionState::Idle => "IDLE",
            ConnectionState::Listening => "LISTENING",
            ConnectionState::Connecting1Rtt => "CONNECTING_1RTT",
            ConnectionState::Connecting2Rtt => "CONNECTING_2RTT",
            ConnectionState::Open => "OPEN",
            ConnectionState::Closing => "CLOSING",
            ConnectionState::Closed => "CLOSED",
        }
    }

    pub fn is_connecting(self) -> bool {
        matches!(
            self,
            ConnectionState::Connecting1Rtt | ConnectionState::Connecting2Rtt
        )
    }
}

impl fmt::Display for ConnectionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Allowed edges, reconstructed from the handshake, negotiation and close
/// flows. Direct moves to CLOSED without CLOSING are reserved for
/// fatal errors during setup and for listeners.
pub fn is_valid_transition(from: ConnectionState, to: ConnectionState) -> bool {
    use ConnectionState::*;
    matches!(
        (from, to),
        (Idle, Connecting1Rtt)
            | (Idle, Connecting2Rtt)
            | (Idle, Open)
            | (Idle, Listening)
            | (Connecting2Rtt, Connecting1Rtt)
            | (Connecting1Rtt, Open)
            | (Connecting1Rtt | Connecting2Rtt | Open, Closing)
            | (Connecting1Rtt | Connecting2Rtt | Listening, Closed)
            | (Closing, Closed)
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub at: SimTime,
    pub from: ConnectionState,
    pub to: ConnectionState,
}

/// Current state plus the history of every transition taken.
#[derive(Clone, Debug)]
pub struct StateMachine {
    state: ConnectionState,
    log: Vec<Transition>,
}

impl Default for StateMachine {
    fn default() -> Self {
        StateMachine {
            state: ConnectionState::Idle,
            log: Vec::new(),
        }
    }
}

impl StateMachine {
    pub fn get(&self) -> ConnectionState {
        self.state
    }

    pub fn log(&self) -> &[Transition] {
        &self.log
    }

    /// Panics on an edge outside the table: that is a bug in the caller.
    pub fn set(&mut self, to: ConnectionState, at: SimTime) {
        let from = self.state;
        assert!(
            is_valid_transition(from, to),
            "invalid transition {from} -> {to}"
        );
        self.log.push(Transition { at, from, to });
        self.state = to;
    }
}

/// Whether a transition log is a walk through the table starting at IDLE.
pub fn is_valid_path(log: &[Transition]) -> bool {
    let mut cur = ConnectionState::Idle;
    for t in log {
        if t.from != cur || !is_valid_transition(t.from, t.to) {
            return false;
        }
        cur = t.to;
    }
    log.windows(2).all(|w| w[0].at <= w[1].at)
}
