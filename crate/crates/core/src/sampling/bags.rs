use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng;

/// B bags made of B/2 independent random halvings of {0, …, n−1};
/// bags 2j and 2j+1 partition the index set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagPlan {
    pub n: usize,
    pub b: usize,
    pub bags: Vec<Vec<usize>>,
    pub seed: u64,
}

pub fn complementary_bags(n: usize, b: usize, seed: u64) -> Result<BagPlan> {
    if n == 0 || n % 2 != 0 {
        return Err(invalid(format!("number of observations must be even and positive, got {n}")));
    }
    if b < 2 || b % 2 != 0 {
        return Err(invalid(format!("number of bags must be even and at least 2, got {b}")));
    }
    let mut g = rng::seeded(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut bags = Vec::with_capacity(b);
    for _ in 0..b / 2 {
        perm.shuffle(&mut g);
        let mut first = perm[..n / 2].to_vec();
        let mut second = perm[n / 2..].to_vec();
        first.sort_unstable();
        second.sort_unstable();
        bags.push(first);
        bags.push(second);
    }
    Ok(BagPlan { n, b, bags, seed })
}

impl BagPlan {
    /// Pairs (2j, 2j+1) among the listed surviving bag indices; bags whose
    /// partner did not survive are left out.
    pub fn complete_pairs(surviving: &[usize]) -> Vec<(usize, usize)> {
        let set: std::collections::BTreeSet<usize> = surviving.iter().copied().collect();
        set.iter()
            .filter(|&&i| i % 2 == 0 && set.contains(&(i + 1)))
            .map(|&i| (i, i + 1))
            .collect()
    }
}
