use super::Matrix;
use crate::error::{Error, Result};

/// Denominator floor for the relative error.
pub const ABS_FLOOR: f64 = 1e-8;

/// Compares `analytic` against central differences of `loss` with step `h`.
///
/// Returns the largest `|analytic - numeric| / max(|numeric|, 1e-8)` seen
/// over every entry of every parameter.
pub fn finite_diff_check<F>(mut loss: F, params: &[Matrix], analytic: &[Matrix], h: f64) -> Result<f64>
where
    F: FnMut(&[Matrix]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Argument(format!("step must be > 0, got {h}")));
    }
    if params.len() != analytic.len() {
        return Err(Error::shape("finite_diff_check", params.len(), analytic.len()));
    }
    for (p, g) in params.iter().zip(analytic) {
        p.check_same_shape(g, "finite_diff_check")?;
    }

    let mut work: Vec<Matrix> = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        for j in 0..params[i].len() {
            let orig = work[i].as_slice()[j];
            work[i].as_mut_slice()[j] = orig + h;
            let up = loss(&work)?;
            work[i].as_mut_slice()[j] = orig - h;
            let down = loss(&work)?;
            work[i].as_mut_slice()[j] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("loss while perturbing param[{i}][{j}]"),
                });
            }
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[i].as_slice()[j];
            let rel = (a - numeric).abs() / numeric.abs().max(ABS_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_square(ps: &[Matrix]) -> Result<f64> {
        Ok(0.5 * ps.iter().map(Matrix::sq_norm).sum::<f64>())
    }

    #[test]
    fn exact_for_quadratics() {
        let p = vec![Matrix::from_vec(1, 3, vec![0.5, -1.25, 2.0]).unwrap()];
        let err = finite_diff_check(half_square, &p, &p, 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn detects_doubled_gradient() {
        let p = vec![Matrix::from_vec(1, 3, vec![0.5, -1.25, 2.0]).unwrap()];
        let mut g = p.clone();
        g[0].scale(2.0);
        let err = finite_diff_check(half_square, &p, &g, 1e-5).unwrap();
        assert!((err - 1.0).abs() < 1e-6, "{err}");
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let p = vec![Matrix::row_vector(vec![1.0])];
        let r = finite_diff_check(|_| Ok(f64::NAN), &p, &p, 1e-5);
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }
}
