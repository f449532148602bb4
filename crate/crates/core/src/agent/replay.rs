use std::collections::VecDeque;

use rand::Rng;

use crate::env::{Action, EnvState};
use crate::error::{Error, Result};

/// One `(s, a, r, s′, terminal)` experience.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub action: Action,
    pub reward: f64,
    pub next_state: EnvState,
    pub terminal: bool,
}

/// Bounded FIFO experience store with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buffer: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(Self {
            buffer: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        })
    }

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, t: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }

    /// Uniform minibatch of `size` transitions: distinct indices when the
    /// memory holds at least `size`, otherwise drawn with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<&Transition> {
        if self.buffer.is_empty() || size == 0 {
            return Vec::new();
        }
        if self.buffer.len() >= size {
            rand::seq::index::sample(rng, self.buffer.len(), size)
                .into_iter()
                .map(|i| &self.buffer[i])
                .collect()
        } else {
            (0..size)
                .map(|_| &self.buffer[rng.gen_range(0..self.buffer.len())])
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use proptest::prelude::*;

    fn t(reward: f64) -> Transition {
        let s = EnvState {
            mu: 0.0,
            sigma: 0.0,
            rho_tp: 0.0,
            rho_tn: 1.0,
            rho_fp: 0.0,
            rho_fn: 0.0,
        };
        Transition {
            state: s,
            action: Action::Passive,
            reward,
            next_state: s,
            terminal: false,
        }
    }

    #[test]
    fn sampling_small_memory_uses_replacement() {
        let mut m = ReplayMemory::new(10).unwrap();
        assert!(m.sample(4, &mut seeded_rng(0)).is_empty());
        m.push(t(1.0));
        m.push(t(2.0));
        assert_eq!(m.sample(5, &mut seeded_rng(0)).len(), 5);
    }

    #[test]
    fn sampling_large_memory_is_distinct() {
        let mut m = ReplayMemory::new(100).unwrap();
        for i in 0..50 {
            m.push(t(i as f64));
        }
        let mut rewards: Vec<i64> = m
            .sample(20, &mut seeded_rng(1))
            .iter()
            .map(|t| t.reward as i64)
            .collect();
        rewards.sort();
        rewards.dedup();
        assert_eq!(rewards.len(), 20);
    }

    proptest! {
        #[test]
        fn bounded_fifo(capacity in 1usize..40, extra in 0usize..40) {
            let mut m = ReplayMemory::new(capacity).unwrap();
            for i in 0..capacity + extra {
                m.push(t(i as f64));
                prop_assert!(m.len() <= capacity);
            }
            let first = m.iter().next().unwrap().reward;
            prop_assert_eq!(first, extra as f64);
        }
    }
}
