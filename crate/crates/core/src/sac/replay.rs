use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::dynamics::KnnGraph;
use crate::math::Vec2;

use super::SacError;

/// One environment step for the whole team.
///
/// Observations and actions are stored row per robot so a minibatch can be
/// stacked straight into network inputs. Graphs and positions are kept for
/// both endpoints because the neighborhood structure may differ between them.
#[derive(Debug, Clone)]
pub struct TeamTransition {
    pub obs: Tensor,
    pub actions: Tensor,
    pub rewards: Vec<f64>,
    pub next_obs: Tensor,
    pub graph: KnnGraph,
    pub positions: Vec<Vec2>,
    pub next_graph: KnnGraph,
    pub next_positions: Vec<Vec2>,
    /// True when the successor state must not be bootstrapped.
    pub done: bool,
}

impl TeamTransition {
    pub fn n_robots(&self) -> usize {
        self.rewards.len()
    }
}

/// FIFO store of team transitions with uniform resampling.
#[derive(Debug)]
pub struct ReplayBuffer {
    items: VecDeque<TeamTransition>,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a transition, evicting the oldest one once full.
    pub fn push(&mut self, transition: TeamTransition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(transition);
    }

    pub fn get(&self, index: usize) -> &TeamTransition {
        &self.items[index]
    }

    /// Draws `batch` transitions uniformly with replacement.
    ///
    /// Fails rather than sampling from an under-filled buffer so a
    /// misconfigured warmup surfaces immediately.
    pub fn sample(&mut self, batch: usize) -> Result<Vec<&TeamTransition>, SacError> {
        if self.items.len() < batch {
            return Err(SacError::UnderFilled {
                have: self.items.len(),
                need: batch,
            });
        }
        let indices: Vec<usize> =
            (0..batch).map(|_| self.rng.gen_range(0..self.items.len())).collect();
        Ok(indices.into_iter().map(|i| &self.items[i]).collect())
    }
}
