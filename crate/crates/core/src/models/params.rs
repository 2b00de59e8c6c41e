use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Standard deviation of every initial embedding and weight.
pub const INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ncf,
    #[serde(alias = "lightgcn")]
    LightGcn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    /// Input width followed by hidden widths; the output vector `h` maps the
    /// last width to a scalar.
    #[serde(default = "default_ffn")]
    pub ffn_dims: Vec<usize>,
    /// Propagation depth, used by LightGCN only.
    #[serde(default = "default_layers")]
    pub propagation_layers: usize,
}

fn default_dim() -> usize {
    64
}
fn default_ffn() -> Vec<usize> {
    vec![128, 64, 32]
}
fn default_layers() -> usize {
    2
}

impl ModelConfig {
    pub fn ncf() -> Self {
        ModelConfig {
            kind: ModelKind::Ncf,
            embedding_dim: default_dim(),
            ffn_dims: default_ffn(),
            propagation_layers: default_layers(),
        }
    }

    pub fn lightgcn() -> Self {
        ModelConfig {
            kind: ModelKind::LightGcn,
            ..Self::ncf()
        }
    }

    /// A small architecture for tests: `dim`-wide embeddings and one hidden layer.
    pub fn tiny(kind: ModelKind, dim: usize, hidden: usize) -> Self {
        ModelConfig {
            kind,
            embedding_dim: dim,
            ffn_dims: vec![2 * dim, hidden],
            propagation_layers: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::Argument("embedding_dim must be >= 1".into()));
        }
        match self.ffn_dims.first() {
            Some(&d) if d == 2 * self.embedding_dim => {}
            Some(&d) => {
                return Err(Error::Argument(format!(
                    "first ffn width must be 2 * embedding_dim = {}, got {d}",
                    2 * self.embedding_dim
                )))
            }
            None => return Err(Error::Argument("ffn_dims must not be empty".into())),
        }
        if self.ffn_dims.contains(&0) {
            return Err(Error::Argument("ffn widths must be >= 1".into()));
        }
        if self.kind == ModelKind::LightGcn && self.propagation_layers == 0 {
            return Err(Error::Argument("LightGCN needs propagation_layers >= 1".into()));
        }
        Ok(())
    }

    /// Shapes of the shared dense blocks: per layer `(weight, bias)`, then `h`.
    pub fn dense_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        for w in self.ffn_dims.windows(2) {
            shapes.push((w[1], w[0]));
            shapes.push((1, w[1]));
        }
        shapes.push((1, *self.ffn_dims.last().unwrap_or(&0)));
        shapes
    }

    pub fn dense_names(&self) -> Vec<String> {
        let layers = self.ffn_dims.len() - 1;
        let mut names = Vec::new();
        for l in 0..layers {
            names.push(format!("ffn.{l}.weight"));
            names.push(format!("ffn.{l}.bias"));
        }
        names.push("h".to_string());
        names
    }
}

/// Parameters shared through the server: item embeddings plus the scoring
/// network (per layer weight and bias, then the output vector `h`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicParams {
    pub items: Matrix,
    pub dense: Vec<Matrix>,
}

impl PublicParams {
    /// Gaussian item embeddings and weights, zero biases.
    pub fn init(cfg: &ModelConfig, item_count: usize, rng: &mut RngStream) -> Result<Self> {
        cfg.validate()?;
        let mut items = Matrix::zeros(item_count, cfg.embedding_dim);
        for x in items.as_mut_slice() {
            *x = INIT_STD * rng.normal();
        }
        let shapes = cfg.dense_shapes();
        let n_layers = cfg.ffn_dims.len() - 1;
        let dense = shapes
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| {
                let mut m = Matrix::zeros(r, c);
                let is_bias = i < 2 * n_layers && i % 2 == 1;
                if !is_bias {
                    for x in m.as_mut_slice() {
                        *x = INIT_STD * rng.normal();
                    }
                }
                m
            })
            .collect();
        Ok(PublicParams { items, dense })
    }

    pub fn item_count(&self) -> usize {
        self.items.rows()
    }

    pub fn dim(&self) -> usize {
        self.items.cols()
    }

    /// Checks that the shapes agree with `cfg` and `item_count`.
    pub fn check_shape(&self, cfg: &ModelConfig, item_count: usize) -> Result<()> {
        if self.items.shape() != (item_count, cfg.embedding_dim) {
            return Err(Error::shape(
                "public item embeddings",
                format!("{item_count}x{}", cfg.embedding_dim),
                format!("{}x{}", self.items.rows(), self.items.cols()),
            ));
        }
        self.check_dense(cfg)
    }

    pub fn check_dense(&self, cfg: &ModelConfig) -> Result<()> {
        let shapes = cfg.dense_shapes();
        if shapes.len() != self.dense.len() {
            return Err(Error::shape("dense block count", shapes.len(), self.dense.len()));
        }
        for (i, (m, s)) in self.dense.iter().zip(shapes).enumerate() {
            if m.shape() != s {
                return Err(Error::shape(
                    format!("dense block {i}"),
                    format!("{}x{}", s.0, s.1),
                    format!("{}x{}", m.rows(), m.cols()),
                ));
            }
        }
        Ok(())
    }

    /// The rows of `item_ids` together with the dense blocks.
    pub fn restrict(&self, item_ids: &[usize]) -> PublicParams {
        PublicParams {
            items: self.items.select_rows(item_ids),
            dense: self.dense.clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.items.all_finite() && self.dense.iter().all(Matrix::all_finite)
    }
}

/// A client's private user embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateParams {
    pub user: Vec<f64>,
}

impl PrivateParams {
    pub fn init(cfg: &ModelConfig, rng: &mut RngStream) -> Self {
        PrivateParams {
            user: (0..cfg.embedding_dim).map(|_| INIT_STD * rng.normal()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture() {
        let cfg = ModelConfig::ncf();
        cfg.validate().unwrap();
        assert_eq!(cfg.dense_shapes(), vec![(64, 128), (1, 64), (32, 64), (1, 32), (1, 32)]);
        assert_eq!(cfg.dense_names().len(), 5);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let mut cfg = ModelConfig::ncf();
        cfg.ffn_dims[0] = 100;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_is_seeded_and_biases_zero() {
        let cfg = ModelConfig::tiny(ModelKind::Ncf, 3, 4);
        let a = PublicParams::init(&cfg, 5, &mut RngStream::new(1, "global-init")).unwrap();
        let b = PublicParams::init(&cfg, 5, &mut RngStream::new(1, "global-init")).unwrap();
        assert_eq!(a, b);
        assert!(a.dense[1].as_slice().iter().all(|&x| x == 0.0));
        assert!(a.items.as_slice().iter().all(|x| x.abs() < 0.1));
        a.check_shape(&cfg, 5).unwrap();
        assert!(a.check_shape(&cfg, 6).is_err());
    }
}
