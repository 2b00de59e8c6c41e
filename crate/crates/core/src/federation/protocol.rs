use serde::{Deserialize, Serialize};

use super::hyper::Aggregation;
use crate::error::{Error, Result};
use crate::models::{PublicParams, Upload};
use crate::numerics::{gaussian_noise, Matrix, RngStream};

/// Upload as the server receives it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadRecord {
    pub round: usize,
    pub user: usize,
    /// Ascending; row `k` of `rows` belongs to `item_ids[k]`.
    pub item_ids: Vec<usize>,
    pub rows: Matrix,
    pub dense: Vec<Matrix>,
    pub post_ldp: bool,
}

impl UploadRecord {
    pub fn new(round: usize, user: usize, upload: Upload) -> Self {
        UploadRecord {
            round,
            user,
            item_ids: upload.item_ids,
            rows: upload.rows,
            dense: upload.dense,
            post_ldp: false,
        }
    }

    fn check(&self, global: &PublicParams) -> Result<()> {
        if self.rows.rows() != self.item_ids.len() {
            return Err(Error::shape(
                format!("upload rows of user {}", self.user),
                self.item_ids.len(),
                self.rows.rows(),
            ));
        }
        if !self.item_ids.is_empty() && self.rows.cols() != global.dim() {
            return Err(Error::shape(format!("upload dim of user {}", self.user), global.dim(), self.rows.cols()));
        }
        if self.item_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(format!("upload item ids of user {} not strictly ascending", self.user)));
        }
        if let Some(&bad) = self.item_ids.last().filter(|&&i| i >= global.item_count()) {
            return Err(Error::shape(format!("upload item id of user {}", self.user), format!("< {}", global.item_count()), bad));
        }
        if self.dense.len() != global.dense.len() {
            return Err(Error::shape(format!("upload dense blocks of user {}", self.user), global.dense.len(), self.dense.len()));
        }
        for (k, (a, b)) in self.dense.iter().zip(&global.dense).enumerate() {
            a.check_same_shape(b, &format!("upload dense block {k} of user {}", self.user))?;
        }
        Ok(())
    }
}

/// Gaussian perturbation of uploads before they leave the client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpConfig {
    pub lambda: f64,
    #[serde(default = "yes")]
    pub enabled: bool,
}

fn yes() -> bool {
    true
}

impl LdpConfig {
    pub const OFF: LdpConfig = LdpConfig {
        lambda: 0.0,
        enabled: false,
    };

    pub fn new(lambda: f64) -> Self {
        LdpConfig { lambda, enabled: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Argument(format!("λ must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.enabled && self.lambda > 0.0
    }
}

impl Default for LdpConfig {
    fn default() -> Self {
        LdpConfig::OFF
    }
}

/// Adds N(0, λ²) noise to every transmitted entry: the touched rows and the
/// dense blocks. Untouched rows are not sent and so are not perturbed.
pub fn apply_ldp(mut upload: UploadRecord, cfg: &LdpConfig, rng: &mut RngStream) -> Result<UploadRecord> {
    cfg.validate()?;
    if !cfg.enabled {
        return Ok(upload);
    }
    upload.post_ldp = true;
    if cfg.lambda == 0.0 {
        return Ok(upload);
    }
    let noise = gaussian_noise(upload.rows.rows(), upload.rows.cols(), cfg.lambda, rng)?;
    upload.rows.add_scaled(1.0, &noise)?;
    for block in &mut upload.dense {
        let noise = gaussian_noise(block.rows(), block.cols(), cfg.lambda, rng)?;
        block.add_scaled(1.0, &noise)?;
    }
    Ok(upload)
}

/// Uniform sample of `m` participants without replacement, ascending.
pub fn sample_participants(users: &[usize], m: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if m == 0 || m > users.len() {
        return Err(Error::Argument(format!("participants {m} outside 1..={}", users.len())));
    }
    let mut picked = if m == users.len() {
        users.to_vec()
    } else {
        rng.choose(users, m)
    };
    picked.sort_unstable();
    Ok(picked)
}

/// Folds the `n`-th value into a running mean (or sum). The first value is
/// copied, so one upload, or several identical ones, pass through exactly.
fn accumulate(acc: &mut [f64], x: &[f64], n: u32, mode: Aggregation) {
    if n == 1 {
        acc.copy_from_slice(x);
        return;
    }
    match mode {
        Aggregation::Mean => {
            let nf = f64::from(n);
            for (a, v) in acc.iter_mut().zip(x) {
                *a += (v - *a) / nf;
            }
        }
        Aggregation::Sum => {
            for (a, v) in acc.iter_mut().zip(x) {
                *a += v;
            }
        }
    }
}

/// Server update from one round of uploads.
///
/// Each item row becomes the mean (or sum) of the uploaded rows from clients
/// that touched it; rows nobody touched are carried over. Dense blocks are
/// combined over all uploads. Uploads are reduced in ascending user order, so
/// the result does not depend on the order of `uploads`.
pub fn aggregate(uploads: &[UploadRecord], global: &PublicParams, mode: Aggregation) -> Result<PublicParams> {
    if uploads.is_empty() {
        return Err(Error::Argument("aggregate needs at least one upload".into()));
    }
    for u in uploads {
        u.check(global)?;
    }
    let mut order: Vec<&UploadRecord> = uploads.iter().collect();
    order.sort_by_key(|u| u.user);
    if let Some(w) = order.windows(2).find(|w| w[0].user == w[1].user) {
        return Err(Error::Argument(format!("duplicate upload from user {}", w[0].user)));
    }

    let mut items = global.items.clone();
    let mut counts = vec![0u32; global.item_count()];
    for u in &order {
        for (k, &item) in u.item_ids.iter().enumerate() {
            counts[item] += 1;
            accumulate(items.row_mut(item), u.rows.row(k), counts[item], mode);
        }
    }
    let mut dense = global.dense.clone();
    for (n, u) in order.iter().enumerate() {
        for (acc, m) in dense.iter_mut().zip(&u.dense) {
            accumulate(acc.as_mut_slice(), m.as_slice(), n as u32 + 1, mode);
        }
    }
    Ok(PublicParams { items, dense })
}
