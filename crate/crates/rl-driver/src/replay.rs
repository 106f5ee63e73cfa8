use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupled::Transition;
use crate::{DriverError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub capacity: usize,
    /// Prioritization exponent.
    pub alpha: f64,
    /// Importance-sampling exponent.
    pub beta: f64,
    /// Added to every priority before exponentiation.
    pub offset: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig { capacity: 100_000, alpha: 0.6, beta: 0.4, offset: 0.01 }
    }
}

/// One replayed transition with its slot and normalized importance weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplaySample {
    pub slot: usize,
    pub transition: Transition,
    pub weight: f64,
}

/// Proportional prioritized replay over a ring buffer. Sampling mass is
/// kept in a sum tree whose internal nodes are recomputed from their
/// children on every update, so totals never drift.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    config: ReplayConfig,
    data: Vec<Transition>,
    priorities: Vec<f64>,
    tree: Vec<f64>,
    leaves: usize,
    next: usize,
    max_priority: f64,
}

impl ReplayBuffer {
    pub fn new(config: ReplayConfig) -> Result<Self> {
        if config.capacity == 0 || !(config.alpha >= 0.0 && config.beta >= 0.0 && config.offset > 0.0) {
            return Err(DriverError::Usage(format!("invalid replay configuration {config:?}")));
        }
        let leaves = config.capacity.next_power_of_two();
        Ok(ReplayBuffer {
            config,
            data: Vec::new(),
            priorities: Vec::new(),
            tree: vec![0.0; 2 * leaves],
            leaves,
            next: 0,
            max_priority: 1.0,
        })
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, slot: usize) -> Option<(&Transition, f64)> {
        self.data.get(slot).map(|t| (t, self.priorities[slot]))
    }

    /// Stores `t` with the largest priority seen so far, evicting the oldest
    /// entry at capacity. Returns the slot used.
    pub fn push(&mut self, t: Transition) -> usize {
        self.push_with_priority(t, self.max_priority)
    }

    pub fn push_with_priority(&mut self, t: Transition, priority: f64) -> usize {
        let slot = self.next;
        if slot == self.data.len() {
            self.data.push(t);
            self.priorities.push(0.0);
        } else {
            self.data[slot] = t;
        }
        self.next = (self.next + 1) % self.config.capacity;
        self.update_priority(slot, priority);
        slot
    }

    pub fn update_priority(&mut self, slot: usize, priority: f64) {
        let p = if priority.is_finite() { priority.abs() } else { self.max_priority };
        self.priorities[slot] = p;
        self.max_priority = self.max_priority.max(p);
        let mut node = self.leaves + slot;
        self.tree[node] = (p + self.config.offset).powf(self.config.alpha);
        while node > 1 {
            node /= 2;
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1];
        }
    }

    /// Sampling probability of `slot`.
    pub fn probability(&self, slot: usize) -> f64 {
        self.tree[self.leaves + slot] / self.tree[1]
    }

    fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = self.tree[2 * node];
            if mass < left || self.tree[2 * node + 1] <= 0.0 {
                node *= 2;
            } else {
                mass -= left;
                node = 2 * node + 1;
            }
        }
        (node - self.leaves).min(self.data.len() - 1)
    }

    /// Draws `n` entries with replacement. Weights are `(N P)^-beta`
    /// divided by the largest weight in the batch.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<ReplaySample>> {
        if self.data.is_empty() {
            return Err(DriverError::Usage("cannot sample from an empty replay buffer".into()));
        }
        if n > self.data.len() {
            return Err(DriverError::Usage(format!("requested {n} samples from {} entries", self.data.len())));
        }
        let total = self.tree[1];
        let size = self.data.len() as f64;
        let mut batch: Vec<ReplaySample> = (0..n)
            .map(|_| {
                let slot = self.find(rng.gen::<f64>() * total);
                let weight = (size * self.probability(slot)).powf(-self.config.beta);
                ReplaySample { slot, transition: self.data[slot], weight }
            })
            .collect();
        let top = batch.iter().map(|b| b.weight).fold(0.0, f64::max);
        for b in &mut batch {
            b.weight /= top;
        }
        Ok(batch)
    }
}
