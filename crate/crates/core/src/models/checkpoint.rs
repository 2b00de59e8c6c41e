use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, PrivateParams, PublicParams};
use crate::container::{read_container, write_container};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FEDLCKPT";

/// Model state at a round boundary.
///
/// Blocks: `items`, then one per dense parameter named as in
/// [`ModelConfig::dense_names`], then optionally `users` (one row per client,
/// in the order of `header.users`).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub public: PublicParams,
    pub private: Option<Vec<PrivateParams>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub round: usize,
    /// User ids for the rows of the `users` block.
    #[serde(default)]
    pub users: Vec<usize>,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let names = self.header.model.dense_names();
        if names.len() != self.public.dense.len() {
            return Err(Error::shape("checkpoint dense blocks", names.len(), self.public.dense.len()));
        }
        let mut blocks: Vec<(String, &Matrix)> = vec![("items".to_string(), &self.public.items)];
        blocks.extend(names.into_iter().zip(&self.public.dense));
        let users;
        if let Some(private) = &self.private {
            if private.len() != self.header.users.len() {
                return Err(Error::shape("checkpoint users", self.header.users.len(), private.len()));
            }
            let d = self.public.dim();
            let mut m = Matrix::zeros(private.len(), d);
            for (r, p) in private.iter().enumerate() {
                if p.user.len() != d {
                    return Err(Error::shape("checkpoint user row", d, p.user.len()));
                }
                m.row_mut(r).copy_from_slice(&p.user);
            }
            users = m;
            blocks.push(("users".to_string(), &users));
        }
        write_container(w, CHECKPOINT_MAGIC, &serde_json::to_value(&self.header)?, &blocks)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Checkpoint> {
        let c = read_container(r, CHECKPOINT_MAGIC)?;
        let header: CheckpointHeader = serde_json::from_value(c.header.clone())?;
        let items = c.block("items")?.clone();
        let dense = header
            .model
            .dense_names()
            .iter()
            .map(|n| c.block(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        let public = PublicParams { items, dense };
        public.check_dense(&header.model)?;
        let private = match c.blocks.iter().find(|(n, _)| n == "users") {
            Some((_, m)) => {
                if m.rows() != header.users.len() {
                    return Err(Error::format("checkpoint", "users block does not match header"));
                }
                Some((0..m.rows()).map(|r| PrivateParams { user: m.row(r).to_vec() }).collect())
            }
            None => None,
        };
        Ok(Checkpoint {
            header,
            public,
            private,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        Checkpoint::read_from(BufReader::new(File::open(path)?))
    }
}
