//! Dense linear algebra, labeled randomness, Adam and a gradient checker.

mod adam;
mod gradcheck;
mod matrix;
mod rng;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use gradcheck::{finite_diff_check, ABS_FLOOR};
pub use matrix::{euclidean_dist, gemm, Matrix, Op};
pub(crate) use matrix::sq_euclidean;
pub use rng::{gaussian_noise, RngStream};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
