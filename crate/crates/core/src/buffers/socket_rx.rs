use std::collections::VecDeque;

use super::BufferError;
use crate::wire::StreamId;

/// In-order data released by streams, waiting for the application.
#[derive(Debug)]
pub struct SocketRxBuffer {
    queue: VecDeque<(StreamId, Vec<u8>)>,
    capacity: usize,
    occupancy: usize,
}

impl SocketRxBuffer {
    pub fn new(capacity: usize) -> Self {
        SocketRxBuffer {
            queue: VecDeque::new(),
            capacity,
            occupancy: 0,
        }
    }

    pub fn occupancy(&self) -> usize {
        self.occupancy
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn push(&mut self, stream: StreamId, data: Vec<u8>) -> Result<(), BufferError> {
        if self.occupancy + data.len() > self.capacity {
            return Err(BufferError::Capacity {
                needed: data.len(),
                available: self.capacity - self.occupancy,
            });
        }
        if !data.is_empty() {
            self.occupancy += data.len();
            self.queue.push_back((stream, data));
        }
        Ok(())
    }

    pub fn pop(&mut self) -> Option<(StreamId, Vec<u8>)> {
        let item = self.queue.pop_front()?;
        self.occupancy -= item.1.len();
        Some(item)
    }
}
