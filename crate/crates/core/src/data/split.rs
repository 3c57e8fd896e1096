use serde::{Deserialize, Serialize};

use crate::active::PoolState;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let f = Self { train, val, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} fraction {v} outside [0, 1]")));
            }
        }
        if self.train <= 0.0 {
            return Err(Error::InvalidArgument("train fraction must be positive".into()));
        }
        let total = self.train + self.val + self.test;
        if total > 1.0 + 1e-9 {
            return Err(Error::InvalidArgument(format!("fractions sum to {total} > 1")));
        }
        Ok(())
    }

    /// `(train, val, test)` counts for `n` items; each is `⌊f·n⌋`.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let count = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = count(self.train);
        let val = count(self.val).min(n - train);
        let test = count(self.test).min(n - train - val);
        (train, val, test)
    }
}

/// Shuffle `0..n` and cut it into pool, validation, test, and unused ranges.
pub fn split(n: usize, fractions: SplitFractions, stream: &mut RngStream) -> Result<PoolState> {
    fractions.validate()?;
    let (tr, va, te) = fractions.sizes(n);
    let mut order: Vec<usize> = (0..n).collect();
    stream.shuffle(&mut order);
    let mut rest = order.split_off(tr);
    let unlabeled = order;
    let mut rest2 = rest.split_off(va);
    let val = rest;
    let unused = rest2.split_off(te);
    let test = rest2;
    PoolState::new(n, unlabeled, val, test, unused)
}

/// Split `0..n_train` into pool and validation ranges and use the fixed range
/// `n_train..n_total` as the test set; the test fraction is ignored.
pub fn split_with_test_range(n_train: usize, n_total: usize, fractions: SplitFractions, stream: &mut RngStream) -> Result<PoolState> {
    let fractions = SplitFractions { test: 0.0, ..fractions };
    fractions.validate()?;
    if n_total < n_train {
        return Err(Error::InvalidArgument(format!("test range {n_train}..{n_total} is empty or reversed")));
    }
    let (tr, va, _) = fractions.sizes(n_train);
    let mut order: Vec<usize> = (0..n_train).collect();
    stream.shuffle(&mut order);
    let mut rest = order.split_off(tr);
    let unused = rest.split_off(va);
    PoolState::new(n_total, order, rest, (n_train..n_total).collect(), unused)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sizes_and_determinism() {
        let f = SplitFractions::new(0.9, 0.05, 0.05).unwrap();
        let p = split(1000, f, &mut RngStream::derive(1, 1)).unwrap();
        assert_eq!((p.unlabeled().len(), p.val().len(), p.test().len(), p.unused().len()), (900, 50, 50, 0));
        assert_eq!(p, split(1000, f, &mut RngStream::derive(1, 1)).unwrap());
        assert_ne!(p, split(1000, f, &mut RngStream::derive(1, 2)).unwrap());
    }

    #[test]
    fn partial_fractions_leave_unused() {
        let f = SplitFractions::new(0.3, 0.1, 0.1).unwrap();
        let p = split(100, f, &mut RngStream::derive(2, 0)).unwrap();
        assert_eq!(p.unused().len(), 50);
        p.check_invariants().unwrap();
    }

    #[test]
    fn over_one_is_rejected() {
        assert!(SplitFractions::new(0.9, 0.1, 0.1).is_err());
        assert!(SplitFractions::new(-0.1, 0.1, 0.1).is_err());
    }

    #[test]
    fn fixed_test_range() {
        let f = SplitFractions {
            train: 0.9,
            val: 0.05,
            test: 0.5,
        };
        let p = split_with_test_range(100, 130, f, &mut RngStream::derive(3, 0)).unwrap();
        assert_eq!(p.test(), (100..130).collect::<Vec<_>>().as_slice());
        assert_eq!((p.unlabeled().len(), p.val().len(), p.unused().len()), (90, 5, 5));
    }

    proptest! {
        #[test]
        fn always_a_partition(n in 0usize..300, a in 0.01f64..0.6, b in 0.0f64..0.2, c in 0.0f64..0.2, seed: u64) {
            let p = split(n, SplitFractions::new(a, b, c).unwrap(), &mut RngStream::derive(seed, 0)).unwrap();
            prop_assert!(p.check_invariants().is_ok());
        }
    }
}
