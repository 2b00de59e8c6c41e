//! Propagation on a client's local bipartite graph.
//!
//! Locally the graph is a star: one user node joined to the items it
//! interacted with. Each edge carries the symmetric weight
//! `1 / (sqrt(|N_u|) * sqrt(|N_v|))`, and the final embedding of every node
//! is the sum of its layer-0 through layer-L embeddings. The propagation
//! operator is symmetric, so the same routine maps output gradients back to
//! layer-0 gradients.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A user node and its edges to local item rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalGraph {
    item_rows: usize,
    /// Local row indices adjacent to the user, ascending.
    edges: Vec<usize>,
    item_degree: Vec<usize>,
}

impl LocalGraph {
    /// `edges` lists local item rows connected to the user node.
    pub fn star(item_rows: usize, edges: &[usize]) -> Result<Self> {
        let mut e = edges.to_vec();
        e.sort_unstable();
        e.dedup();
        let mut item_degree = vec![0; item_rows];
        for &j in &e {
            if j >= item_rows {
                return Err(Error::shape("LocalGraph edge", format!("< {item_rows}"), j));
            }
            item_degree[j] = 1;
        }
        Ok(LocalGraph {
            item_rows,
            edges: e,
            item_degree,
        })
    }

    pub fn user_degree(&self) -> usize {
        self.edges.len()
    }

    pub fn item_degree(&self, row: usize) -> usize {
        self.item_degree[row]
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn item_rows(&self) -> usize {
        self.item_rows
    }

    fn weight(&self, row: usize) -> f64 {
        let du = self.user_degree();
        let dv = self.item_degree[row];
        if du == 0 || dv == 0 {
            0.0
        } else {
            1.0 / ((du as f64).sqrt() * (dv as f64).sqrt())
        }
    }
}

/// Final `(user, items)` embeddings after `layers` rounds of propagation.
pub fn lightgcn_embed(user: &[f64], items: &Matrix, graph: &LocalGraph, layers: usize) -> Result<(Vec<f64>, Matrix)> {
    if layers == 0 {
        return Err(Error::Argument("propagation needs at least one layer".into()));
    }
    if items.rows() != graph.item_rows() {
        return Err(Error::shape("lightgcn item rows", graph.item_rows(), items.rows()));
    }
    if items.cols() != user.len() {
        return Err(Error::shape("lightgcn embedding width", user.len(), items.cols()));
    }
    Ok(propagate(user, items, graph, layers))
}

pub(crate) fn propagate(user: &[f64], items: &Matrix, graph: &LocalGraph, layers: usize) -> (Vec<f64>, Matrix) {
    let d = user.len();
    let mut final_user = user.to_vec();
    let mut final_items = items.clone();
    let mut cur_user = user.to_vec();
    // Only edge rows are non-zero beyond layer 0.
    let mut cur_edge_rows: Vec<Vec<f64>> = graph.edges.iter().map(|&j| items.row(j).to_vec()).collect();
    let weights: Vec<f64> = graph.edges.iter().map(|&j| graph.weight(j)).collect();

    for _ in 0..layers {
        let mut next_user = vec![0.0; d];
        for (row, &w) in cur_edge_rows.iter().zip(&weights) {
            for (n, x) in next_user.iter_mut().zip(row) {
                *n += w * x;
            }
        }
        let next_rows: Vec<Vec<f64>> = weights
            .iter()
            .map(|&w| cur_user.iter().map(|x| w * x).collect())
            .collect();
        for (f, n) in final_user.iter_mut().zip(&next_user) {
            *f += n;
        }
        for (k, &j) in graph.edges.iter().enumerate() {
            for (f, n) in final_items.row_mut(j).iter_mut().zip(&next_rows[k]) {
                *f += n;
            }
        }
        cur_user = next_user;
        cur_edge_rows = next_rows;
    }
    (final_user, final_items)
}
