use std::collections::VecDeque;

use brushwork::audio::{AudioClip, CLIP_SAMPLES, SAMPLE_RATE};

/// The most recent `capacity` mono 16 kHz samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingBuffer {
    capacity: usize,
    samples: VecDeque<f32>,
    total_pushed: u64,
}

impl Default for RollingBuffer {
    fn default() -> Self {
        RollingBuffer::new(CLIP_SAMPLES)
    }
}

impl RollingBuffer {
    pub fn new(capacity: usize) -> Self {
        RollingBuffer { capacity, samples: VecDeque::with_capacity(capacity), total_pushed: 0 }
    }

    pub fn push(&mut self, block: &[f32]) {
        self.total_pushed += block.len() as u64;
        let keep = &block[block.len().saturating_sub(self.capacity)..];
        let overflow = (self.samples.len() + keep.len()).saturating_sub(self.capacity);
        self.samples.drain(..overflow);
        self.samples.extend(keep);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_pushed(&self) -> u64 {
        self.total_pushed
    }

    pub fn samples(&self) -> Vec<f32> {
        self.samples.iter().copied().collect()
    }

    pub fn snapshot(&self) -> AudioClip {
        AudioClip { samples: self.samples(), sample_rate: SAMPLE_RATE }
    }

    pub fn clear(&mut self) {
        self.samples.clear();
        self.total_pushed = 0;
    }
}
