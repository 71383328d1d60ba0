use std::collections::VecDeque;

/// Fixed-capacity sample history for one electrode; old samples fall off the front.
#[derive(Debug, Clone)]
pub struct SampleRing {
    buf: VecDeque<f64>,
    capacity: usize,
}

impl SampleRing {
    pub fn new(capacity: usize) -> Self {
        Self { buf: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn extend(&mut self, samples: &[f64]) {
        let skip = samples.len().saturating_sub(self.capacity);
        for &s in &samples[skip..] {
            if self.buf.len() == self.capacity {
                self.buf.pop_front();
            }
            self.buf.push_back(s);
        }
    }

    /// The most recent `n` samples, oldest first, or `None` if fewer are held.
    pub fn latest(&self, n: usize) -> Option<Vec<f64>> {
        if n > self.buf.len() {
            return None;
        }
        Some(self.buf.range(self.buf.len() - n..).copied().collect())
    }
}
