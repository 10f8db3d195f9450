use crate::buffers::{StreamRxBuffer, StreamTxBuffer};
use crate::wire::StreamId;

/// One bidirectional stream with its buffers and flow-control counters.
#[derive(Debug)]
pub struct Stream {
    pub id: StreamId,
    pub tx: StreamTxBuffer,
    pub rx: StreamRxBuffer,
    /// Highest offset the peer allows us to send.
    pub send_credit: u64,
    /// Highest offset we allow the peer to send.
    pub recv_credit: u64,
    /// Bytes the application has read.
    pub consumed: u64,
    pub fin_received: bool,
}

impl Stream {
    pub fn new(id: StreamId, send_buffer: usize, send_credit: u64, recv_window: u64) -> Self {
        Stream {
            id,
            tx: StreamTxBuffer::new(send_buffer),
            rx: StreamRxBuffer::new(recv_window as usize),
            send_credit,
            recv_credit: recv_window,
            consumed: 0,
            fin_received: false,
        }
    }

    /// Bytes the peer still allows us to write.
    pub fn send_window(&self) -> u64 {
        self.send_credit.saturating_sub(self.tx.written())
    }
}
