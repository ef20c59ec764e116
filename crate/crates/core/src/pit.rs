//! Trailing window of uncalibrated PITs and its empirical CDF.
//!
//! The window keeps the most recent `B` PIT values and evaluates the
//! *strict* empirical CDF `F(alpha) = #{beta_j < alpha} / n`, so that the
//! window-average of the error indicator at rate `alpha` equals
//! `F(alpha)` exactly. The same CDF is reused for every forecast horizon.

use std::collections::VecDeque;

use crate::error::{BciError, Result};
use crate::intervals::Pit;

/// FIFO buffer of at most `capacity` PIT values, most recent last.
#[derive(Debug, Clone)]
pub struct PitWindow {
    capacity: usize,
    buffer: VecDeque<f64>,
}

impl PitWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(BciError::param("pit window capacity", "must be at least 1"));
        }
        Ok(Self {
            capacity,
            buffer: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buffer.len() == self.capacity
    }

    /// Append a PIT, evicting the oldest value once over capacity.
    pub fn push(&mut self, beta: Pit) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(beta.value());
    }

    /// Strict empirical CDF `#{beta_j < alpha} / n`.
    pub fn cdf(&self, alpha: f64) -> Result<f64> {
        if self.buffer.is_empty() {
            return Err(BciError::NotReady("pit window"));
        }
        let below = self.buffer.iter().filter(|&&b| b < alpha).count();
        Ok(below as f64 / self.buffer.len() as f64)
    }

    /// Sorted stored values with duplicates removed; the candidate action
    /// grid on which the control problem is solved exactly.
    pub fn atoms(&self) -> Result<Vec<f64>> {
        if self.buffer.is_empty() {
            return Err(BciError::NotReady("pit window"));
        }
        let mut vals: Vec<f64> = self.buffer.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).expect("PITs are never NaN"));
        vals.dedup();
        Ok(vals)
    }

    /// Immutable sorted snapshot for repeated CDF queries.
    pub fn snapshot(&self) -> Result<EcdfSnapshot> {
        if self.buffer.is_empty() {
            return Err(BciError::NotReady("pit window"));
        }
        let mut vals: Vec<f64> = self.buffer.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).expect("PITs are never NaN"));
        Ok(EcdfSnapshot { sorted: vals })
    }
}

/// Sorted copy of a window supporting `O(log n)` strict-CDF queries.
#[derive(Debug, Clone)]
pub struct EcdfSnapshot {
    sorted: Vec<f64>,
}

impl EcdfSnapshot {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(BciError::NotReady("ecdf sample"));
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("values are never NaN"));
        Ok(Self { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Strict empirical CDF `#{x < alpha} / n`.
    pub fn cdf(&self, alpha: f64) -> f64 {
        let below = self.sorted.partition_point(|&x| x < alpha);
        below as f64 / self.sorted.len() as f64
    }
}
