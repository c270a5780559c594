use std::sync::Arc;

use rand::Rng;

use super::Observation;
use crate::error::{Error, Result};

/// One agent's experience between two consecutive decisions.
///
/// `obs` and `next_obs` hold every intersection's observation at the two decisions; the
/// acting intersection and its neighbors are read from them.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub intersection: usize,
    pub obs: Arc<[Observation]>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Arc<[Observation]>,
    /// Set only on the transition that ends at the episode horizon.
    pub terminal: bool,
}

/// Fixed-capacity FIFO ring with uniform sampling with replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    /// Slot of the oldest item once full.
    head: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity: capacity.max(1), items: Vec::new(), head: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.head] = item;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items[self.head..].iter().chain(&self.items[..self.head])
    }

    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Result<Vec<&T>> {
        if self.items.len() < batch || self.items.is_empty() {
            return Err(Error::UnderfilledBuffer { size: self.items.len(), batch });
        }
        Ok((0..batch)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect())
    }
}
