use std::collections::BTreeMap;

use super::split::DatasetSplit;
use crate::error::{Error, Result};

/// Users grouped by training-interaction count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketMap {
    /// Bucket members in ascending interaction order; bucket 0 has the fewest.
    pub buckets: Vec<Vec<usize>>,
    pub by_user: BTreeMap<usize, usize>,
}

impl BucketMap {
    pub fn bucket_of(&self, user: usize) -> Option<usize> {
        self.by_user.get(&user).copied()
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }
}

/// Sorts users by training positives (ties by user id) and cuts them into
/// `n` contiguous groups whose sizes differ by at most one; the larger
/// groups come last.
pub fn interaction_buckets(split: &DatasetSplit, n: usize) -> Result<BucketMap> {
    if n == 0 {
        return Err(Error::Argument("bucket count must be >= 1".into()));
    }
    let mut users: Vec<(usize, usize)> = split
        .clients
        .iter()
        .map(|c| (c.positives.len(), c.user))
        .collect();
    users.sort_unstable();
    let base = users.len() / n;
    let extra = users.len() % n;
    let mut buckets = Vec::with_capacity(n);
    let mut by_user = BTreeMap::new();
    let mut start = 0;
    for b in 0..n {
        let size = base + usize::from(b >= n - extra);
        let members: Vec<usize> = users[start..start + size].iter().map(|&(_, u)| u).collect();
        for &u in &members {
            by_user.insert(u, b);
        }
        buckets.push(members);
        start += size;
    }
    Ok(BucketMap { buckets, by_user })
}
