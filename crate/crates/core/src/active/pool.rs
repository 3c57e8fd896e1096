//! Index bookkeeping for the labeled set, unlabeled pool, and held-out splits.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint index sets over `0..n`. `unlabeled` is kept in ascending order;
/// `labeled` keeps acquisition order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    n: usize,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
    unused: Vec<usize>,
}

impl PoolState {
    pub fn new(n: usize, mut unlabeled: Vec<usize>, val: Vec<usize>, test: Vec<usize>, unused: Vec<usize>) -> Result<Self> {
        unlabeled.sort_unstable();
        let pool = Self {
            n,
            labeled: Vec::new(),
            unlabeled,
            val,
            test,
            unused,
        };
        pool.check_invariants()?;
        Ok(pool)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn val(&self) -> &[usize] {
        &self.val
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn unused(&self) -> &[usize] {
        &self.unused
    }

    /// Move dataset indices from the pool into the labeled set, in the given order.
    pub fn label(&mut self, indices: &[usize]) -> Result<()> {
        let picked: HashSet<usize> = indices.iter().copied().collect();
        if picked.len() != indices.len() {
            return Err(Error::InvalidArgument("duplicate index in acquisition batch".into()));
        }
        if let Some(i) = indices.iter().find(|i| self.unlabeled.binary_search(i).is_err()) {
            return Err(Error::InvalidArgument(format!("index {i} is not in the unlabeled pool")));
        }
        self.unlabeled.retain(|i| !picked.contains(i));
        self.labeled.extend_from_slice(indices);
        Ok(())
    }

    /// Pairwise disjoint, in range, and exhaustive over `0..n`.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = vec![false; self.n];
        let sets: [(&str, &[usize]); 5] = [
            ("labeled", &self.labeled),
            ("unlabeled", &self.unlabeled),
            ("val", &self.val),
            ("test", &self.test),
            ("unused", &self.unused),
        ];
        for (name, set) in sets {
            for &i in set {
                let slot = seen
                    .get_mut(i)
                    .ok_or_else(|| Error::InvalidArgument(format!("{name} index {i} out of range 0..{}", self.n)))?;
                if *slot {
                    return Err(Error::InvalidArgument(format!("index {i} appears twice (second time in {name})")));
                }
                *slot = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("index {i} belongs to no split")));
        }
        Ok(())
    }
}
