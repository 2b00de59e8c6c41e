use serde::{Deserialize, Serialize};

use super::ingest::{Catalog, Dataset, Interaction};
use crate::numerics::RngStream;

/// Minimum interactions for a user to survive leave-one-out.
pub const MIN_INTERACTIONS: usize = 3;

/// One client's local data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub user: usize,
    /// Training positives, ascending.
    pub positives: Vec<usize>,
    pub test_item: usize,
    pub val_item: usize,
    /// Negatives for the current round, ascending.
    pub negatives: Vec<usize>,
}

impl ClientDataset {
    /// Positives and negatives merged, ascending: the items a round touches.
    pub fn touched_items(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.positives.iter().chain(&self.negatives).copied().collect();
        all.sort_unstable();
        all
    }

    pub fn is_positive(&self, item: usize) -> bool {
        self.positives.binary_search(&item).is_ok()
    }

    /// Items the user interacted with in any partition.
    pub fn interacted(&self, item: usize) -> bool {
        item == self.test_item || item == self.val_item || self.is_positive(item)
    }
}

/// A user removed by the split and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedUser {
    pub user: usize,
    pub interactions: usize,
    pub reason: String,
}

/// Leave-one-out partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    /// Retained clients, ascending by user id.
    pub clients: Vec<ClientDataset>,
    /// Catalog whose popularity counts cover training positives only.
    pub catalog: Catalog,
    pub excluded: Vec<ExcludedUser>,
    pub duplicates_removed: usize,
}

impl DatasetSplit {
    pub fn item_count(&self) -> usize {
        self.catalog.item_count()
    }

    pub fn users(&self) -> Vec<usize> {
        self.clients.iter().map(|c| c.user).collect()
    }

    /// Position of `user` in [`DatasetSplit::clients`].
    pub fn client_index(&self, user: usize) -> Option<usize> {
        self.clients.binary_search_by_key(&user, |c| c.user).ok()
    }

    pub fn client(&self, user: usize) -> Option<&ClientDataset> {
        self.client_index(user).map(|i| &self.clients[i])
    }

    pub fn training_interactions(&self) -> usize {
        self.clients.iter().map(|c| c.positives.len()).sum()
    }

    /// Counts in the layout of the usual dataset statistics table.
    pub fn stats(&self) -> SplitStats {
        let users = self.clients.len();
        let items = self.item_count();
        let interactions = self.training_interactions() + 2 * users;
        SplitStats {
            users,
            items,
            interactions,
            avg_interactions: if users == 0 { 0.0 } else { interactions as f64 / users as f64 },
            density: if users == 0 || items == 0 {
                0.0
            } else {
                interactions as f64 / (users as f64 * items as f64)
            },
            training_interactions: self.training_interactions(),
            excluded_users: self.excluded.len(),
            duplicates_removed: self.duplicates_removed,
        }
    }
}

/// Summary counts of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub avg_interactions: f64,
    pub density: f64,
    pub training_interactions: usize,
    pub excluded_users: usize,
    pub duplicates_removed: usize,
}

/// Holds out each user's latest interaction for test and second latest for
/// validation. Interactions without a timestamp use their file position;
/// equal timestamps are ordered by a random key drawn from `rng`.
pub fn leave_one_out_split(dataset: &Dataset, rng: &mut RngStream) -> DatasetSplit {
    let n_users = dataset.catalog.user_count();
    let mut per_user: Vec<Vec<(i64, u64, usize)>> = vec![Vec::new(); n_users];
    for (pos, Interaction { user, item, timestamp, .. }) in dataset.interactions.iter().enumerate() {
        let ts = timestamp.unwrap_or(pos as i64);
        per_user[*user].push((ts, rng.next_u64(), *item));
    }

    let mut clients = Vec::new();
    let mut excluded = Vec::new();
    for (user, mut rows) in per_user.into_iter().enumerate() {
        if rows.len() < MIN_INTERACTIONS {
            excluded.push(ExcludedUser {
                user,
                interactions: rows.len(),
                reason: format!("fewer than {MIN_INTERACTIONS} interactions"),
            });
            continue;
        }
        // Most recent first.
        rows.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)));
        let test_item = rows[0].2;
        let val_item = rows[1].2;
        let mut positives: Vec<usize> = rows[2..].iter().map(|r| r.2).collect();
        positives.sort_unstable();
        clients.push(ClientDataset {
            user,
            positives,
            test_item,
            val_item,
            negatives: Vec::new(),
        });
    }
    if !excluded.is_empty() {
        log::info!("leave-one-out excluded {} users", excluded.len());
    }

    let mut catalog = dataset.catalog.clone();
    catalog.popularity = vec![0; catalog.item_count()];
    for c in &clients {
        for &i in &c.positives {
            catalog.popularity[i] += 1;
        }
    }
    DatasetSplit {
        clients,
        catalog,
        excluded,
        duplicates_removed: dataset.duplicates_removed,
    }
}
