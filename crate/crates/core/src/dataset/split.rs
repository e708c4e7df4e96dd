use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

use super::Table;

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const DEFAULT_FOLD_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assignment {
    Test,
    Fold(usize),
}

/// Random hold-out test set plus a k-fold partition of the remaining rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub test_fraction: f64,
    pub fold_count: usize,
    pub assignment: Vec<Assignment>,
}

impl SplitPlan {
    pub fn new(row_count: usize, seed: u64) -> Result<Self> {
        Self::with_shape(row_count, seed, DEFAULT_TEST_FRACTION, DEFAULT_FOLD_COUNT)
    }

    /// Shuffles row indices once, takes the head as the test set and deals
    /// the remainder round-robin into folds.
    pub fn with_shape(row_count: usize, seed: u64, test_fraction: f64, fold_count: usize) -> Result<Self> {
        if fold_count < 2 {
            return Err(Error::Parameter("fold count must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Parameter("test fraction must lie in [0, 1)".into()));
        }
        let required = fold_count * 2;
        if row_count < required {
            return Err(Error::TooFewRows {
                rows: row_count,
                required,
            });
        }
        let test_count = (row_count as f64 * test_fraction).round() as usize;
        if row_count - test_count < fold_count {
            return Err(Error::TooFewRows {
                rows: row_count,
                required,
            });
        }
        let mut order: Vec<usize> = (0..row_count).collect();
        order.shuffle(&mut rng_from(derive_seed(seed, &[0x5911])));
        let mut assignment = alloc::vec![Assignment::Test; row_count];
        for (pos, &row) in order.iter().enumerate().skip(test_count) {
            assignment[row] = Assignment::Fold((pos - test_count) % fold_count);
        }
        Ok(Self {
            seed,
            test_fraction,
            fold_count,
            assignment,
        })
    }

    pub fn row_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn test_rows(&self) -> Vec<usize> {
        self.rows_where(|a| a == Assignment::Test)
    }

    pub fn fold_rows(&self, fold: usize) -> Vec<usize> {
        self.rows_where(|a| a == Assignment::Fold(fold))
    }

    pub fn training_rows(&self) -> Vec<usize> {
        self.rows_where(|a| a != Assignment::Test)
    }

    /// Training rows of every fold except `held_out`.
    pub fn leave_one_out(&self, held_out: usize) -> Vec<usize> {
        self.rows_where(|a| matches!(a, Assignment::Fold(f) if f != held_out))
    }

    fn rows_where(&self, pred: impl Fn(Assignment) -> bool) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, a)| pred(**a))
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn make_split(table: &Table, seed: u64) -> Result<SplitPlan> {
    SplitPlan::new(table.row_count(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hundred_rows() {
        let p = SplitPlan::new(100, 7).unwrap();
        assert_eq!(p.test_rows().len(), 20);
        for f in 0..5 {
            assert_eq!(p.fold_rows(f).len(), 16);
            assert_eq!(p.leave_one_out(f).len(), 64);
        }
        assert_eq!(p, SplitPlan::new(100, 7).unwrap());
        assert_ne!(p.assignment, SplitPlan::new(100, 8).unwrap().assignment);
    }

    #[test]
    fn hundred_and_one_rows() {
        let p = SplitPlan::new(101, 7).unwrap();
        let t = p.test_rows().len();
        assert!(t == 20 || t == 21);
        let sizes: Vec<usize> = (0..5).map(|f| p.fold_rows(f).len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn too_few_rows() {
        assert_eq!(
            SplitPlan::new(9, 1).unwrap_err(),
            Error::TooFewRows {
                rows: 9,
                required: 10
            }
        );
    }

    proptest! {
        #[test]
        fn split_is_a_balanced_partition(n in 10usize..600, seed in any::<u64>()) {
            let p = SplitPlan::new(n, seed).unwrap();
            let test = p.test_rows();
            let target = n as f64 * 0.2;
            prop_assert!((test.len() as f64 - target).abs() <= 1.0);
            let mut seen = alloc::vec![0u8; n];
            for &r in &test { seen[r] += 1; }
            let mut sizes = alloc::vec::Vec::new();
            for f in 0..5 {
                let rows = p.fold_rows(f);
                sizes.push(rows.len());
                for r in rows { seen[r] += 1; }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
