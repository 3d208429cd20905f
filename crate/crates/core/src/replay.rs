//! Proportional prioritized experience replay on a sum tree.

use std::cell::Cell;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary sum tree over `capacity` leaves (rounded up to a power of two).
///
/// Heap layout: node 1 is the root, node `k` has children `2k` and `2k+1`,
/// leaves occupy `capacity..2*capacity`.
#[derive(Debug, Clone)]
pub struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
    touches: Cell<u64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1).next_power_of_two();
        Self {
            capacity,
            nodes: vec![0.0; 2 * capacity],
            touches: Cell::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[1.min(self.nodes.len() - 1)]
    }

    pub fn leaf(&self, idx: usize) -> f64 {
        self.nodes[self.capacity + idx]
    }

    /// Node visits since construction.
    pub fn touches(&self) -> u64 {
        self.touches.get()
    }

    fn touch(&self) {
        self.touches.set(self.touches.get() + 1);
    }

    pub fn set(&mut self, idx: usize, value: f64) {
        debug_assert!(value >= 0.0);
        let mut k = self.capacity + idx;
        self.nodes[k] = value;
        self.touch();
        // Recompute from children rather than adding deltas so rounding
        // errors cannot accumulate.
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
            self.touch();
        }
        if self.capacity == 1 {
            self.nodes[0] = self.nodes[1];
        }
    }

    /// Leaf whose cumulative interval contains `mass`, skipping zero-mass
    /// subtrees.
    pub fn find(&self, mass: f64) -> usize {
        let mut k = 1;
        let mut mass = mass;
        while k < self.capacity {
            self.touch();
            let left = self.nodes[2 * k];
            let right = self.nodes[2 * k + 1];
            if (mass < left || right <= 0.0) && left > 0.0 {
                k *= 2;
            } else {
                mass -= left;
                k = 2 * k + 1;
            }
        }
        self.touch();
        k - self.capacity
    }

    /// Largest deviation between an internal node and the sum of its children.
    pub fn max_inconsistency(&self) -> f64 {
        (1..self.capacity)
            .map(|k| (self.nodes[k] - (self.nodes[2 * k] + self.nodes[2 * k + 1])).abs())
            .fold(0.0, f64::max)
    }

    /// Internal nodes rebuilt bottom-up from the leaves.
    pub fn rebuilt(&self) -> Vec<f64> {
        let mut n = self.nodes.clone();
        for k in (1..self.capacity).rev() {
            n[k] = n[2 * k] + n[2 * k + 1];
        }
        n
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

/// One joint multi-agent transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observations: Vec<Vec<f64>>,
    /// Raw (pre-mapping) actions in `[-1, 1]^3`.
    pub actions: Vec<[f64; 3]>,
    pub rewards: Vec<f64>,
    pub next_observations: Vec<Vec<f64>>,
    pub done: bool,
    pub global_state: Vec<f64>,
    pub next_global_state: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub capacity: usize,
    /// Priority exponent.
    pub alpha: f64,
    /// Added to `|td|` before exponentiation.
    pub priority_eps: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 1 << 17,
            alpha: 0.6,
            priority_eps: 1e-6,
        }
    }
}

#[derive(Debug)]
pub struct SampledBatch<'a, T> {
    pub items: Vec<&'a T>,
    pub indices: Vec<usize>,
    /// Importance-sampling weights normalized by the batch maximum.
    pub weights: Vec<f64>,
}

/// Ring buffer with proportional sampling. Leaves store `p^alpha`.
#[derive(Debug, Clone)]
pub struct PrioritizedReplay<T> {
    config: ReplayConfig,
    tree: SumTree,
    items: Vec<T>,
    cursor: usize,
    max_priority: f64,
}

impl<T> PrioritizedReplay<T> {
    pub fn new(config: ReplayConfig) -> Self {
        let tree = SumTree::new(config.capacity);
        Self {
            config,
            items: Vec::new(),
            tree,
            cursor: 0,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.tree.capacity()
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    pub fn get(&self, idx: usize) -> Option<&T> {
        self.items.get(idx)
    }

    /// Inserts at the cursor with the largest priority seen so far,
    /// overwriting the oldest entry when full. Returns the slot.
    pub fn push(&mut self, item: T) -> usize {
        let slot = self.cursor;
        if slot < self.items.len() {
            self.items[slot] = item;
        } else {
            self.items.push(item);
        }
        self.tree.set(slot, self.max_priority);
        self.cursor = (self.cursor + 1) % self.tree.capacity();
        slot
    }

    fn check_index(&self, idx: usize) -> Result<()> {
        if idx >= self.items.len() {
            return Err(Error::OutOfRange {
                what: "replay index",
                value: idx,
                limit: self.items.len(),
            });
        }
        Ok(())
    }

    /// Sets a leaf to `priority^alpha` directly.
    pub fn set_priority(&mut self, idx: usize, priority: f64) -> Result<()> {
        self.check_index(idx)?;
        if !(priority >= 0.0 && priority.is_finite()) {
            return Err(Error::InvalidValue {
                what: "priority",
                value: priority,
            });
        }
        let p = priority.powf(self.config.alpha);
        self.tree.set(idx, p);
        self.max_priority = self.max_priority.max(p);
        Ok(())
    }

    /// Leaf `i` becomes `(|td_i| + eps)^alpha`.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) -> Result<()> {
        if indices.len() != td_errors.len() {
            return Err(Error::Shape {
                context: "priority update",
                expected: indices.len(),
                got: td_errors.len(),
            });
        }
        for &idx in indices {
            self.check_index(idx)?;
        }
        for (&idx, &td) in indices.iter().zip(td_errors) {
            let p = (td.abs() + self.config.priority_eps).powf(self.config.alpha);
            if !p.is_finite() {
                return Err(Error::InvalidValue {
                    what: "td error",
                    value: td,
                });
            }
            self.tree.set(idx, p);
            self.max_priority = self.max_priority.max(p);
        }
        Ok(())
    }

    /// Sampling probability of slot `idx`.
    pub fn probability(&self, idx: usize) -> f64 {
        self.tree.leaf(idx) / self.tree.total()
    }

    /// Stratified proportional sample: the total mass is cut into
    /// `batch_size` equal segments with one uniform draw in each.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, beta: f64, rng: &mut R) -> Result<SampledBatch<'_, T>> {
        if batch_size == 0 || self.items.len() < batch_size {
            return Err(Error::Underfull {
                len: self.items.len(),
                batch: batch_size,
            });
        }
        let total = self.tree.total();
        if !(total > 0.0) {
            return Err(Error::InvalidValue {
                what: "priority mass",
                value: total,
            });
        }
        let segment = total / batch_size as f64;
        let mut indices = Vec::with_capacity(batch_size);
        for k in 0..batch_size {
            let u: f64 = rng.random();
            let mass = ((k as f64 + u) * segment).min(total);
            let mut idx = self.tree.find(mass);
            if idx >= self.items.len() || self.tree.leaf(idx) <= 0.0 {
                // Rounding at the top edge can overshoot into empty leaves.
                idx = self
                    .tree
                    .find(total * (1.0 - 1e-12) * (k as f64 + 0.5) / batch_size as f64);
            }
            indices.push(idx);
        }
        let n = self.items.len() as f64;
        let raw: Vec<f64> = indices.iter().map(|&i| (n * self.probability(i)).powf(-beta)).collect();
        let w_max = raw.iter().copied().fold(0.0, f64::max);
        let weights = raw.iter().map(|w| w / w_max).collect();
        Ok(SampledBatch {
            items: indices.iter().map(|&i| &self.items[i]).collect(),
            indices,
            weights,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::rng_stream;

    fn buf(cap: usize, alpha: f64) -> PrioritizedReplay<usize> {
        PrioritizedReplay::new(ReplayConfig {
            capacity: cap,
            alpha,
            priority_eps: 1e-6,
        })
    }

    #[test]
    fn first_push_takes_initial_max() {
        let mut b = buf(8, 0.6);
        b.push(0);
        assert_eq!(b.len(), 1);
        assert_eq!(b.tree().total(), 1.0);
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = buf(4, 1.0);
        for i in 0..5 {
            b.push(i);
        }
        assert_eq!(b.len(), 4);
        assert_eq!(b.get(0), Some(&4));
        assert_eq!(b.get(1), Some(&1));
    }

    #[test]
    fn explicit_priorities_sum() {
        let mut b = buf(4, 1.0);
        for i in 0..4 {
            b.push(i);
        }
        for (i, p) in [1.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
            b.set_priority(i, p).unwrap();
        }
        assert_eq!(b.tree().total(), 10.0);
    }

    #[test]
    fn zero_td_never_starves() {
        let mut b = buf(4, 0.6);
        b.push(0);
        b.update_priorities(&[0], &[0.0]).unwrap();
        let want = 1e-6f64.powf(0.6);
        assert_eq!(b.tree().leaf(0), want);
        assert!(want > 0.0);
    }

    #[test]
    fn single_update_moves_root_by_leaf_delta() {
        let mut b = buf(8, 1.0);
        for i in 0..8 {
            b.push(i);
        }
        let before = b.tree().total();
        let old = b.tree().leaf(5);
        b.update_priorities(&[5], &[3.0]).unwrap();
        let new = b.tree().leaf(5);
        assert!((b.tree().total() - before - (new - old)).abs() < 1e-12);
    }

    #[test]
    fn invalid_index_rejected() {
        let mut b = buf(8, 1.0);
        b.push(0);
        assert!(b.update_priorities(&[1], &[1.0]).is_err());
        assert!(b.set_priority(3, 1.0).is_err());
    }

    #[test]
    fn underfull_sample_rejected() {
        let mut b = buf(8, 1.0);
        b.push(0);
        let mut rng = rng_stream(0, 0);
        assert!(matches!(b.sample(2, 0.4, &mut rng), Err(Error::Underfull { .. })));
    }

    #[test]
    fn single_nonzero_priority_dominates() {
        let mut b = buf(4, 1.0);
        for i in 0..4 {
            b.push(i);
        }
        for (i, p) in [1.0, 0.0, 0.0, 0.0].into_iter().enumerate() {
            b.set_priority(i, p).unwrap();
        }
        let mut rng = rng_stream(1, 0);
        for _ in 0..200 {
            let s = b.sample(4, 0.4, &mut rng).unwrap();
            assert!(s.indices.iter().all(|&i| i == 0));
        }
    }

    #[test]
    fn weights_in_unit_interval() {
        let mut b = buf(16, 0.6);
        for i in 0..16 {
            b.push(i);
        }
        b.update_priorities(
            &(0..16).collect::<Vec<_>>(),
            &(0..16).map(|i| i as f64).collect::<Vec<_>>(),
        )
        .unwrap();
        let mut rng = rng_stream(2, 0);
        let s = b.sample(8, 0.5, &mut rng).unwrap();
        assert!(s.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
        assert!(s.weights.contains(&1.0));
    }

    #[test]
    fn log_touches() {
        let mut b = buf(1024, 0.6);
        for i in 0..1024 {
            b.push(i);
        }
        let before = b.tree().touches();
        b.update_priorities(&[17], &[2.0]).unwrap();
        assert_eq!(b.tree().touches() - before, 11);
        let before = b.tree().touches();
        b.tree().find(0.5 * b.tree().total());
        assert_eq!(b.tree().touches() - before, 11);
    }
}
