//! Federated recommendation with interaction-level membership inference.
//!
//! Clients train Fed-NCF or Fed-LightGCN models on private implicit feedback
//! and upload public parameters; a curious server can attack those uploads
//! (IMIA and baselines) and clients can defend with LDP noise or a proximal
//! penalty on their public parameters.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod attacks;
pub mod container;
pub mod data;
mod error;
pub mod exec;
pub mod federation;
pub mod models;
pub mod numerics;

pub use error::{Error, Result};
