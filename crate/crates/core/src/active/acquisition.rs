//! Seed sampling and top-k / random selection from the pool.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::active::PoolState;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Acquisition {
    #[serde(rename = "entropy")]
    Entropy,
    #[serde(rename = "varratio")]
    VarRatio,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "aue-entropy")]
    AueEntropy,
    #[serde(rename = "aue-varratio")]
    AueVarRatio,
}

impl Acquisition {
    pub const ALL: [Acquisition; 5] = [
        Acquisition::Entropy,
        Acquisition::VarRatio,
        Acquisition::Random,
        Acquisition::AueEntropy,
        Acquisition::AueVarRatio,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Acquisition::Entropy => "entropy",
            Acquisition::VarRatio => "varratio",
            Acquisition::Random => "random",
            Acquisition::AueEntropy => "aue-entropy",
            Acquisition::AueVarRatio => "aue-varratio",
        }
    }

    pub fn uses_aue(self) -> bool {
        matches!(self, Acquisition::AueEntropy | Acquisition::AueVarRatio)
    }
}

impl std::str::FromStr for Acquisition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        Acquisition::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown acquisition '{s}' (expected one of entropy, varratio, random, aue-entropy, aue-varratio)")))
    }
}

/// Move `seed_size` random pool indices into the labeled set.
///
/// With `strata` (the dataset's labels) the draw is balanced: each class gets
/// `seed_size / C` picks where it has enough pool members, and the remainder is
/// filled uniformly from what is left.
pub fn draw_seed(pool: &mut PoolState, seed_size: usize, stream: &mut RngStream, strata: Option<&[usize]>) -> Result<Vec<usize>> {
    let avail = pool.unlabeled().len();
    if seed_size > avail {
        return Err(Error::InvalidArgument(format!(
            "seed of {seed_size} requested from a pool of {avail}"
        )));
    }
    let mut order = pool.unlabeled().to_vec();
    stream.shuffle(&mut order);
    let picks = match strata {
        None => order[..seed_size].to_vec(),
        Some(labels) => {
            let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for &i in &order {
                let y = *labels
                    .get(i)
                    .ok_or_else(|| Error::InvalidArgument(format!("no label for pool index {i}")))?;
                by_class.entry(y).or_default().push(i);
            }
            let per_class = seed_size / by_class.len().max(1);
            let mut picks = Vec::with_capacity(seed_size);
            for members in by_class.values() {
                picks.extend(members.iter().take(per_class));
            }
            let chosen: std::collections::HashSet<usize> = picks.iter().copied().collect();
            let need = seed_size - picks.len();
            picks.extend(order.iter().filter(|i| !chosen.contains(i)).take(need));
            picks
        }
    };
    pool.label(&picks)?;
    Ok(picks)
}

/// The `k` entries of `pool` with the largest `scores`, highest first; equal
/// scores go to the smaller dataset index.
pub fn acquire(scores: &[f64], pool: &[usize], k: usize) -> Result<Vec<usize>> {
    if scores.len() != pool.len() {
        return Err(Error::Shape(format!("{} scores for a pool of {}", scores.len(), pool.len())));
    }
    if k > pool.len() {
        return Err(Error::InvalidArgument(format!("cannot acquire {k} from a pool of {}", pool.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite acquisition score {s}")));
    }
    let mut pos: Vec<usize> = (0..pool.len()).collect();
    pos.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(pool[a].cmp(&pool[b])));
    Ok(pos[..k].iter().map(|&p| pool[p]).collect())
}

/// `k` pool entries uniformly without replacement.
pub fn random_acquire(pool: &[usize], k: usize, stream: &mut RngStream) -> Result<Vec<usize>> {
    if k > pool.len() {
        return Err(Error::InvalidArgument(format!("cannot acquire {k} from a pool of {}", pool.len())));
    }
    let mut items = pool.to_vec();
    // partial Fisher–Yates: only the first k slots are needed
    for i in 0..k {
        let j = i + stream.below(items.len() - i);
        items.swap(i, j);
    }
    items.truncate(k);
    Ok(items)
}
