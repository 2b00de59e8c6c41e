use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::split::ClientDataset;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Positive-to-negative sampling ratio, written `"1:4"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NegativeRatio {
    pub positives: u32,
    pub negatives: u32,
}

impl NegativeRatio {
    pub const DEFAULT: NegativeRatio = NegativeRatio {
        positives: 1,
        negatives: 4,
    };

    /// Share of positives among touched items: `1:4` gives 0.2.
    pub fn positive_fraction(&self) -> f64 {
        self.positives as f64 / (self.positives + self.negatives) as f64
    }

    /// Negatives drawn for `n_positives` training positives.
    pub fn negatives_for(&self, n_positives: usize) -> usize {
        n_positives * self.negatives as usize / self.positives as usize
    }
}

impl Default for NegativeRatio {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl fmt::Display for NegativeRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.positives, self.negatives)
    }
}

impl FromStr for NegativeRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("negative ratio must look like \"1:4\", got {s:?}"));
        let (p, n) = s.split_once(':').ok_or_else(bad)?;
        let positives: u32 = p.trim().parse().map_err(|_| bad())?;
        let negatives: u32 = n.trim().parse().map_err(|_| bad())?;
        if positives == 0 || negatives == 0 {
            return Err(bad());
        }
        Ok(NegativeRatio {
            positives,
            negatives,
        })
    }
}

impl TryFrom<String> for NegativeRatio {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NegativeRatio> for String {
    fn from(r: NegativeRatio) -> String {
        r.to_string()
    }
}

/// What to do when a user has fewer candidate items than requested negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shortfall {
    /// Fail with [`Error::InsufficientCandidates`].
    #[default]
    Error,
    /// Take every candidate.
    Cap,
}

/// Draws fresh negatives for `client` uniformly without replacement from
/// items outside its positives, validation and test item. The result is
/// ascending.
pub fn sample_negatives(
    client: &ClientDataset,
    item_count: usize,
    ratio: NegativeRatio,
    shortfall: Shortfall,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let needed = ratio.negatives_for(client.positives.len());
    let mut excluded = vec![false; item_count];
    for &i in &client.positives {
        excluded[i] = true;
    }
    excluded[client.test_item] = true;
    excluded[client.val_item] = true;
    let candidates: Vec<usize> = (0..item_count).filter(|&i| !excluded[i]).collect();

    let take = if candidates.len() >= needed {
        needed
    } else {
        match shortfall {
            Shortfall::Error => {
                return Err(Error::InsufficientCandidates {
                    user: client.user,
                    needed,
                    available: candidates.len(),
                })
            }
            Shortfall::Cap => candidates.len(),
        }
    };
    let mut out = rng.choose(&candidates, take);
    out.sort_unstable();
    Ok(out)
}

/// Replaces `client.negatives` with a fresh draw.
pub fn resample_negatives(
    client: &mut ClientDataset,
    item_count: usize,
    ratio: NegativeRatio,
    shortfall: Shortfall,
    rng: &mut RngStream,
) -> Result<()> {
    client.negatives = sample_negatives(client, item_count, ratio, shortfall, rng)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn client(n_pos: usize) -> ClientDataset {
        ClientDataset {
            user: 3,
            positives: (0..n_pos).collect(),
            test_item: n_pos,
            val_item: n_pos + 1,
            negatives: vec![],
        }
    }

    #[test]
    fn ratio_parsing() {
        let r: NegativeRatio = "1:4".parse().unwrap();
        assert_eq!(r, NegativeRatio::DEFAULT);
        assert!((r.positive_fraction() - 0.2).abs() < 1e-15);
        assert!("1-4".parse::<NegativeRatio>().is_err());
        assert!("0:4".parse::<NegativeRatio>().is_err());
        assert_eq!(r.to_string(), "1:4");
    }

    #[test]
    fn ten_positives_give_forty_negatives() {
        let c = client(10);
        let neg = sample_negatives(&c, 200, NegativeRatio::DEFAULT, Shortfall::Error, &mut RngStream::new(1, "n")).unwrap();
        assert_eq!(neg.len(), 40);
    }

    #[test]
    fn negatives_never_hit_interacted_items() {
        let c = client(10);
        let mut rng = RngStream::new(2, "n");
        for _ in 0..1000 {
            let neg = sample_negatives(&c, 60, NegativeRatio::DEFAULT, Shortfall::Error, &mut rng).unwrap();
            assert!(neg.iter().all(|&i| !c.interacted(i)));
            assert!(neg.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn shortfall_policies() {
        let c = client(10);
        let err = sample_negatives(&c, 30, NegativeRatio::DEFAULT, Shortfall::Error, &mut RngStream::new(1, "n")).unwrap_err();
        assert!(matches!(err, Error::InsufficientCandidates { user: 3, needed: 40, available: 18 }));
        let capped = sample_negatives(&c, 30, NegativeRatio::DEFAULT, Shortfall::Cap, &mut RngStream::new(1, "n")).unwrap();
        assert_eq!(capped, (12..30).collect::<Vec<_>>());
    }

    #[test]
    fn inclusion_frequency_is_uniform() {
        // 2 positives -> 8 negatives from 30 candidates; p = 8/30 per candidate.
        let c = client(2);
        let items = 34;
        let reps = 10_000;
        let mut counts = vec![0usize; items];
        let mut rng = RngStream::new(5, "uniform");
        for _ in 0..reps {
            for i in sample_negatives(&c, items, NegativeRatio::DEFAULT, Shortfall::Error, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let p = 8.0 / 30.0;
        let mean = reps as f64 * p;
        let sd = (reps as f64 * p * (1.0 - p)).sqrt();
        for (i, &k) in counts.iter().enumerate() {
            if c.interacted(i) {
                assert_eq!(k, 0);
            } else {
                assert!((k as f64 - mean).abs() < 3.0 * sd + 1.0, "item {i}: {k} vs {mean}");
            }
        }
    }
}
