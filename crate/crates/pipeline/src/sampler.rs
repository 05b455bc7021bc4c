//! Class-balanced training batches.

use corads_core::ordinal::NUM_GRADES;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::{substream, Stream};

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("no training scans for CO-RADS {0:?}")]
    EmptyClasses(Vec<i32>),
    #[error("grade {0} is outside 1..=5")]
    BadGrade(i32),
    #[error("no training scans")]
    Empty,
    #[error("batch size must be positive")]
    ZeroBatch,
}

/// Infinite deterministic stream of index batches.
///
/// Balanced: each draw picks a grade uniformly from 1..=5, then a scan
/// uniformly within it. Otherwise scans are drawn uniformly.
pub struct BatchSampler {
    by_class: Vec<Vec<usize>>,
    n: usize,
    balanced: bool,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(grades: &[i32], batch_size: usize, seed: u64, balanced: bool) -> Result<Self, SamplerError> {
        if batch_size == 0 {
            return Err(SamplerError::ZeroBatch);
        }
        if grades.is_empty() {
            return Err(SamplerError::Empty);
        }
        let mut by_class = vec![Vec::new(); NUM_GRADES];
        for (i, &g) in grades.iter().enumerate() {
            if !(1..=NUM_GRADES as i32).contains(&g) {
                return Err(SamplerError::BadGrade(g));
            }
            by_class[(g - 1) as usize].push(i);
        }
        if balanced {
            let empty: Vec<i32> = (1..=NUM_GRADES as i32)
                .filter(|g| by_class[(*g - 1) as usize].is_empty())
                .collect();
            if !empty.is_empty() {
                return Err(SamplerError::EmptyClasses(empty));
            }
        }
        Ok(Self {
            by_class,
            n: grades.len(),
            balanced,
            batch_size,
            rng: substream(seed, Stream::Sampling),
        })
    }

    pub fn next_index(&mut self) -> usize {
        if self.balanced {
            let class = &self.by_class[self.rng.random_range(0..NUM_GRADES)];
            class[self.rng.random_range(0..class.len())]
        } else {
            self.rng.random_range(0..self.n)
        }
    }
}

impl Iterator for BatchSampler {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        Some((0..self.batch_size).map(|_| self.next_index()).collect())
    }
}

pub fn balanced_batch_stream(grades: &[i32], batch_size: usize, seed: u64) -> Result<BatchSampler, SamplerError> {
    BatchSampler::new(grades, batch_size, seed, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_are_uniform_over_classes() {
        // heavily imbalanced: 354/105/123/65/135 as in the internal set
        let mut grades = Vec::new();
        for (g, n) in [(1, 354), (2, 105), (3, 123), (4, 65), (5, 135)] {
            grades.extend(std::iter::repeat_n(g, n));
        }
        let mut counts = [0usize; 5];
        for batch in balanced_batch_stream(&grades, 2, 7).unwrap().take(5000) {
            for i in batch {
                counts[(grades[i] - 1) as usize] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / 10_000.0;
            assert!((f - 0.2).abs() <= 0.02, "{counts:?}");
        }
    }

    #[test]
    fn same_seed_same_batches() {
        let grades: Vec<i32> = (0..40).map(|i| 1 + i % 5).collect();
        let a: Vec<_> = balanced_batch_stream(&grades, 2, 3).unwrap().take(100).collect();
        let b: Vec<_> = balanced_batch_stream(&grades, 2, 3).unwrap().take(100).collect();
        assert_eq!(a, b);
        let c: Vec<_> = balanced_batch_stream(&grades, 2, 4).unwrap().take(100).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn singleton_class_recurs() {
        let grades = [1, 1, 1, 2, 2, 3, 3, 4, 4, 5];
        let hits = balanced_batch_stream(&grades, 1, 0)
            .unwrap()
            .take(1000)
            .filter(|b| b[0] == 9)
            .count();
        assert!(hits > 150 && hits < 250);
    }

    #[test]
    fn empty_class_is_an_error() {
        assert_eq!(
            balanced_batch_stream(&[1, 2, 2, 5], 2, 0).err(),
            Some(SamplerError::EmptyClasses(vec![3, 4]))
        );
        assert!(BatchSampler::new(&[1, 2, 2, 5], 2, 0, false).is_ok());
        assert_eq!(balanced_batch_stream(&[1, 6], 2, 0).err(), Some(SamplerError::BadGrade(6)));
    }
}
