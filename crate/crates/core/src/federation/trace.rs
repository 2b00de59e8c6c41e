use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::protocol::UploadRecord;
use crate::container::{read_container, write_container};
use crate::error::{Error, Result};
use crate::models::{ModelConfig, PublicParams};
use crate::numerics::Matrix;

pub const TRACE_MAGIC: &[u8; 8] = b"FEDLTRCE";

/// Everything the server saw in one round: the broadcast parameters, the
/// uploads it received, and the parameters it produced from them.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub round: usize,
    pub model: ModelConfig,
    pub before: PublicParams,
    pub uploads: Vec<UploadRecord>,
    pub after: PublicParams,
}

/// Which rounds to keep in the archive.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchivePolicy {
    None,
    #[default]
    Last,
    All,
    Rounds(Vec<usize>),
}

impl ArchivePolicy {
    pub fn keeps(&self, round: usize, last: usize) -> bool {
        match self {
            ArchivePolicy::None => false,
            ArchivePolicy::Last => round == last,
            ArchivePolicy::All => true,
            ArchivePolicy::Rounds(r) => r.contains(&round),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TraceHeader {
    round: usize,
    model: ModelConfig,
    uploads: Vec<UploadHeader>,
}

#[derive(Serialize, Deserialize)]
struct UploadHeader {
    user: usize,
    round: usize,
    post_ldp: bool,
    item_ids: Vec<usize>,
}

fn public_blocks<'a>(prefix: &str, names: &[String], p: &'a PublicParams, out: &mut Vec<(String, &'a Matrix)>) {
    out.push((format!("{prefix}.items"), &p.items));
    for (n, m) in names.iter().zip(&p.dense) {
        out.push((format!("{prefix}.{n}"), m));
    }
}

fn read_public(c: &crate::container::Container, prefix: &str, names: &[String]) -> Result<PublicParams> {
    Ok(PublicParams {
        items: c.block(&format!("{prefix}.items"))?.clone(),
        dense: names
            .iter()
            .map(|n| c.block(&format!("{prefix}.{n}")).cloned())
            .collect::<Result<_>>()?,
    })
}

impl RoundTrace {
    /// Container layout: JSON header with the round, model config and
    /// per-upload metadata (user, item ids, LDP flag); blocks `before.*`,
    /// `after.*`, then `u<user>.rows` and `u<user>.<dense name>` per upload.
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let names = self.model.dense_names();
        let header = TraceHeader {
            round: self.round,
            model: self.model.clone(),
            uploads: self
                .uploads
                .iter()
                .map(|u| UploadHeader {
                    user: u.user,
                    round: u.round,
                    post_ldp: u.post_ldp,
                    item_ids: u.item_ids.clone(),
                })
                .collect(),
        };
        let mut blocks = Vec::new();
        public_blocks("before", &names, &self.before, &mut blocks);
        public_blocks("after", &names, &self.after, &mut blocks);
        for u in &self.uploads {
            if u.dense.len() != names.len() {
                return Err(Error::shape("trace upload dense blocks", names.len(), u.dense.len()));
            }
            blocks.push((format!("u{}.rows", u.user), &u.rows));
            for (n, m) in names.iter().zip(&u.dense) {
                blocks.push((format!("u{}.{n}", u.user), m));
            }
        }
        write_container(w, TRACE_MAGIC, &serde_json::to_value(&header)?, &blocks)
    }

    pub fn read_from<R: Read>(r: R) -> Result<RoundTrace> {
        let c = read_container(r, TRACE_MAGIC)?;
        let header: TraceHeader = serde_json::from_value(c.header.clone())?;
        let names = header.model.dense_names();
        let before = read_public(&c, "before", &names)?;
        let after = read_public(&c, "after", &names)?;
        let mut uploads = Vec::with_capacity(header.uploads.len());
        for u in header.uploads {
            let rows = c.block(&format!("u{}.rows", u.user))?.clone();
            if rows.rows() != u.item_ids.len() {
                return Err(Error::format("trace", format!("user {} row count mismatch", u.user)));
            }
            let dense = names
                .iter()
                .map(|n| c.block(&format!("u{}.{n}", u.user)).cloned())
                .collect::<Result<_>>()?;
            uploads.push(UploadRecord {
                round: u.round,
                user: u.user,
                item_ids: u.item_ids,
                rows,
                dense,
                post_ldp: u.post_ldp,
            });
        }
        Ok(RoundTrace {
            round: header.round,
            model: header.model,
            before,
            uploads,
            after,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RoundTrace> {
        RoundTrace::read_from(BufReader::new(File::open(path)?))
    }

    pub fn upload(&self, user: usize) -> Option<&UploadRecord> {
        self.uploads.iter().find(|u| u.user == user)
    }

    /// File name used when archiving this round to a directory.
    pub fn file_name(round: usize) -> String {
        format!("round-{round:05}.trace")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;
    use crate::numerics::RngStream;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ModelConfig::tiny(ModelKind::Ncf, 3, 2);
        let mut rng = RngStream::new(5, "trace");
        let before = PublicParams::init(&cfg, 5, &mut rng).unwrap();
        let after = PublicParams::init(&cfg, 5, &mut rng).unwrap();
        let upload = UploadRecord {
            round: 4,
            user: 17,
            item_ids: vec![0, 3],
            rows: before.items.select_rows(&[0, 3]),
            dense: after.dense.clone(),
            post_ldp: true,
        };
        let t = RoundTrace {
            round: 4,
            model: cfg,
            before,
            uploads: vec![upload],
            after,
        };
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = RoundTrace::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn policy() {
        assert!(ArchivePolicy::Last.keeps(9, 9));
        assert!(!ArchivePolicy::Last.keeps(8, 9));
        assert!(ArchivePolicy::Rounds(vec![2]).keeps(2, 9));
        assert!(!ArchivePolicy::None.keeps(9, 9));
    }
}
