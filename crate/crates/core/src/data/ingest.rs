use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One binarized user-item interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub label: u8,
    pub timestamp: Option<i64>,
}

/// Where the fields of a delimited interaction file live.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    pub delimiter: char,
    #[serde(default)]
    pub has_header: bool,
    pub user_col: usize,
    pub item_col: usize,
    #[serde(default)]
    pub rating_col: Option<usize>,
    #[serde(default)]
    pub timestamp_col: Option<usize>,
}

impl ColumnMapping {
    /// Tab-separated `user item rating timestamp` as in MovieLens-100K `u.data`.
    pub fn movielens_100k() -> Self {
        ColumnMapping {
            delimiter: '\t',
            has_header: false,
            user_col: 0,
            item_col: 1,
            rating_col: Some(2),
            timestamp_col: Some(3),
        }
    }

    /// Comma-separated `user,item[,rating[,timestamp]]` with a header row.
    pub fn csv(rating: bool, timestamp: bool) -> Self {
        ColumnMapping {
            delimiter: ',',
            has_header: true,
            user_col: 0,
            item_col: 1,
            rating_col: rating.then_some(2),
            timestamp_col: timestamp.then_some(2 + rating as usize),
        }
    }

    fn split_line<'a>(&self, line: &'a str) -> Vec<&'a str> {
        if self.delimiter.is_whitespace() && self.delimiter != '\t' {
            line.split_whitespace().collect()
        } else {
            line.split(self.delimiter).map(str::trim).collect()
        }
    }
}

/// Dense id assignment for users and items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Catalog {
    user_keys: Vec<String>,
    item_keys: Vec<String>,
    /// Interaction count per item; after splitting it counts training positives only.
    pub popularity: Vec<u64>,
}

impl Catalog {
    pub fn user_count(&self) -> usize {
        self.user_keys.len()
    }

    pub fn item_count(&self) -> usize {
        self.item_keys.len()
    }

    pub fn user_key(&self, user: usize) -> &str {
        &self.user_keys[user]
    }

    pub fn item_key(&self, item: usize) -> &str {
        &self.item_keys[item]
    }

    pub fn user_id(&self, key: &str) -> Option<usize> {
        self.user_keys.iter().position(|k| k == key)
    }

    pub fn item_id(&self, key: &str) -> Option<usize> {
        self.item_keys.iter().position(|k| k == key)
    }

    /// The `fraction` most popular items (at least one when the catalog is
    /// non-empty), ties broken by ascending id.
    pub fn top_popular(&self, fraction: f64) -> Vec<usize> {
        let n = self.item_count();
        if n == 0 {
            return Vec::new();
        }
        let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
        let mut ids: Vec<usize> = (0..n).collect();
        ids.sort_by(|&a, &b| self.popularity[b].cmp(&self.popularity[a]).then(a.cmp(&b)));
        ids.truncate(k);
        ids.sort_unstable();
        ids
    }
}

/// Parsed interactions plus their catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub interactions: Vec<Interaction>,
    pub catalog: Catalog,
    pub duplicates_removed: usize,
}

impl Dataset {
    /// Keeps only the `n` users with the smallest raw keys (numeric order when
    /// every key is an integer, lexicographic otherwise). Item ids and the
    /// item catalog are left untouched; users are re-indexed densely.
    pub fn first_users(&self, n: usize) -> Dataset {
        let keys = &self.catalog.user_keys;
        let mut order: Vec<usize> = (0..keys.len()).collect();
        let numeric: Option<Vec<i64>> = keys.iter().map(|k| k.parse().ok()).collect();
        match numeric {
            Some(nums) => order.sort_by_key(|&u| (nums[u], u)),
            None => order.sort_by(|&a, &b| keys[a].cmp(&keys[b])),
        }
        let mut keep: Vec<usize> = order.into_iter().take(n).collect();
        keep.sort_unstable();
        let mut remap = vec![usize::MAX; keys.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let interactions: Vec<Interaction> = self
            .interactions
            .iter()
            .filter(|it| remap[it.user] != usize::MAX)
            .map(|it| Interaction {
                user: remap[it.user],
                ..*it
            })
            .collect();
        let mut popularity = vec![0u64; self.catalog.item_count()];
        for it in &interactions {
            popularity[it.item] += 1;
        }
        Dataset {
            interactions,
            catalog: Catalog {
                user_keys: keep.iter().map(|&u| keys[u].clone()).collect(),
                item_keys: self.catalog.item_keys.clone(),
                popularity,
            },
            duplicates_removed: self.duplicates_removed,
        }
    }
}

/// Reads and binarizes an interaction file.
pub fn load_dataset(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_dataset(BufReader::new(file), path, mapping)
}

/// Parses interactions from any reader; `origin` only labels errors.
pub fn parse_dataset<R: Read>(reader: R, origin: &Path, mapping: &ColumnMapping) -> Result<Dataset> {
    let reader = BufReader::new(reader);
    let mut user_keys = Vec::new();
    let mut item_keys = Vec::new();
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut interactions = Vec::new();
    let mut duplicates = 0usize;

    let needed = [
        Some(mapping.user_col),
        Some(mapping.item_col),
        mapping.rating_col,
        mapping.timestamp_col,
    ]
    .into_iter()
    .flatten()
    .max()
    .unwrap_or(0);

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if lineno == 1 && mapping.has_header {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno,
            message,
        };
        let fields = mapping.split_line(&line);
        if fields.len() <= needed {
            return Err(parse_err(format!(
                "expected at least {} fields, found {}",
                needed + 1,
                fields.len()
            )));
        }
        let user_key = fields[mapping.user_col];
        let item_key = fields[mapping.item_col];
        if user_key.is_empty() || item_key.is_empty() {
            return Err(parse_err("empty user or item field".into()));
        }
        if let Some(c) = mapping.rating_col {
            fields[c]
                .parse::<f64>()
                .map_err(|_| parse_err(format!("rating {:?} is not a number", fields[c])))?;
        }
        let timestamp = match mapping.timestamp_col {
            Some(c) => Some(
                fields[c]
                    .parse::<i64>()
                    .map_err(|_| parse_err(format!("timestamp {:?} is not an integer", fields[c])))?,
            ),
            None => None,
        };

        let user = *user_index.entry(user_key.to_string()).or_insert_with(|| {
            user_keys.push(user_key.to_string());
            user_keys.len() - 1
        });
        let item = *item_index.entry(item_key.to_string()).or_insert_with(|| {
            item_keys.push(item_key.to_string());
            item_keys.len() - 1
        });
        if !seen.insert((user, item)) {
            duplicates += 1;
            continue;
        }
        interactions.push(Interaction {
            user,
            item,
            label: 1,
            timestamp,
        });
    }
    if duplicates > 0 {
        log::info!("{}: dropped {duplicates} duplicate (user, item) rows", origin.display());
    }

    let mut popularity = vec![0u64; item_keys.len()];
    for it in &interactions {
        popularity[it.item] += 1;
    }
    Ok(Dataset {
        interactions,
        catalog: Catalog {
            user_keys,
            item_keys,
            popularity,
        },
        duplicates_removed: duplicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, mapping: &ColumnMapping) -> Result<Dataset> {
        parse_dataset(text.as_bytes(), Path::new("fixture"), mapping)
    }

    #[test]
    fn empty_input_gives_empty_catalog() {
        let d = parse("", &ColumnMapping::movielens_100k()).unwrap();
        assert!(d.interactions.is_empty());
        assert_eq!(d.catalog.user_count(), 0);
        assert_eq!(d.catalog.item_count(), 0);
    }

    #[test]
    fn three_row_csv() {
        let text = "user,item,rating,ts\nalice,m1,4,100\nbob,m2,1,50\nalice,m2,5,70\n";
        let d = parse(text, &ColumnMapping::csv(true, true)).unwrap();
        let got: Vec<(usize, usize, u8, Option<i64>)> = d
            .interactions
            .iter()
            .map(|i| (i.user, i.item, i.label, i.timestamp))
            .collect();
        assert_eq!(got, vec![(0, 0, 1, Some(100)), (1, 1, 1, Some(50)), (0, 1, 1, Some(70))]);
        assert_eq!(d.catalog.user_key(1), "bob");
        assert_eq!(d.catalog.item_key(1), "m2");
        assert_eq!(d.catalog.popularity, vec![1, 2]);
    }

    #[test]
    fn bad_row_reports_line_number() {
        let text = "1\t2\t3\t100\n1\t3\tx\t100\n";
        match parse(text, &ColumnMapping::movielens_100k()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse("1\t2\n", &ColumnMapping::movielens_100k()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let text = "1\t2\t3\t100\n1\t2\t5\t200\n2\t2\t1\t5\n";
        let d = parse(text, &ColumnMapping::movielens_100k()).unwrap();
        assert_eq!(d.interactions.len(), 2);
        assert_eq!(d.duplicates_removed, 1);
        assert_eq!(d.interactions[0].timestamp, Some(100));
    }

    #[test]
    fn ingestion_is_deterministic() {
        let text = "u3,a\nu1,b\nu3,c\nu2,a\n";
        let m = ColumnMapping {
            delimiter: ',',
            has_header: false,
            user_col: 0,
            item_col: 1,
            rating_col: None,
            timestamp_col: None,
        };
        assert_eq!(parse(text, &m).unwrap(), parse(text, &m).unwrap());
    }

    #[test]
    fn first_users_orders_numerically() {
        let text = "10\ta\t1\t1\n2\tb\t1\t1\n1\tc\t1\t1\n10\tc\t1\t2\n";
        let d = parse(text, &ColumnMapping::movielens_100k()).unwrap();
        let sub = d.first_users(2);
        assert_eq!(sub.catalog.user_count(), 2);
        assert_eq!(sub.catalog.item_count(), 3);
        let keys: Vec<&str> = (0..2).map(|u| sub.catalog.user_key(u)).collect();
        assert_eq!(keys, vec!["2", "1"]);
        assert_eq!(sub.interactions.len(), 2);
        assert_eq!(sub.catalog.popularity, vec![0, 1, 1]);
    }

    #[test]
    fn top_popular_breaks_ties_by_id() {
        let cat = Catalog {
            user_keys: vec![],
            item_keys: (0..5).map(|i| i.to_string()).collect(),
            popularity: vec![3, 7, 3, 1, 7],
        };
        assert_eq!(cat.top_popular(0.4), vec![1, 4]);
        assert_eq!(cat.top_popular(0.6), vec![0, 1, 4]);
        assert_eq!(cat.top_popular(0.01), vec![1]);
    }
}
