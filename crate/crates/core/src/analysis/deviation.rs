use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::PrivateParams;
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationPoint {
    pub round: usize,
    /// Mean over users of ||u_t - u_0||².
    pub user: f64,
    /// Mean over items of ||v_t - v_0||².
    pub item: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub rounds: Vec<DeviationPoint>,
}

impl DeviationReport {
    pub fn last(&self) -> Option<&DeviationPoint> {
        self.rounds.last()
    }
}

/// Mean squared row distance. Row order does not matter as long as both
/// sides use the same one.
pub fn mean_row_sq_dist(now: &Matrix, initial: &Matrix) -> Result<f64> {
    now.check_same_shape(initial, "deviation")?;
    if now.rows() == 0 {
        return Ok(0.0);
    }
    Ok(now.sq_dist(initial)? / now.rows() as f64)
}

fn mean_user_sq_dist(now: &[PrivateParams], initial: &[PrivateParams]) -> Result<f64> {
    if now.len() != initial.len() {
        return Err(Error::shape("deviation users", initial.len(), now.len()));
    }
    if now.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (a, b) in now.iter().zip(initial) {
        if a.user.len() != b.user.len() {
            return Err(Error::shape("deviation user dim", b.user.len(), a.user.len()));
        }
        total += a.user.iter().zip(&b.user).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(total / now.len() as f64)
}

pub fn deviation_point(
    round: usize,
    users: &[PrivateParams],
    items: &Matrix,
    initial_users: &[PrivateParams],
    initial_items: &Matrix,
) -> Result<DeviationPoint> {
    Ok(DeviationPoint {
        round,
        user: mean_user_sq_dist(users, initial_users)?,
        item: mean_row_sq_dist(items, initial_items)?,
    })
}

/// Deviation from the initial embeddings for each `(round, users, items)`
/// snapshot.
pub fn deviation_report(
    snapshots: &[(usize, &[PrivateParams], &Matrix)],
    initial_users: &[PrivateParams],
    initial_items: &Matrix,
) -> Result<DeviationReport> {
    let rounds = snapshots
        .iter()
        .map(|(t, u, v)| deviation_point(*t, u, v, initial_users, initial_items))
        .collect::<Result<_>>()?;
    Ok(DeviationReport { rounds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn users(xs: &[f64]) -> Vec<PrivateParams> {
        xs.iter().map(|&x| PrivateParams { user: vec![x] }).collect()
    }

    #[test]
    fn round_zero_is_zero_and_formula_holds() {
        let u0 = users(&[0.0]);
        let v0 = Matrix::row_vector(vec![0.0]);
        let p = deviation_point(0, &u0, &v0, &u0, &v0).unwrap();
        assert_eq!((p.user, p.item), (0.0, 0.0));
        let p = deviation_point(1, &users(&[2.0]), &Matrix::row_vector(vec![2.0]), &u0, &v0).unwrap();
        assert_eq!((p.user, p.item), (4.0, 4.0));
    }

    #[test]
    fn independent_of_enumeration_order() {
        let init = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 2.0], vec![5.0, -1.0]]).unwrap();
        let now = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 0.0], vec![4.0, 3.0]]).unwrap();
        let perm = [2, 0, 1];
        let a = mean_row_sq_dist(&now, &init).unwrap();
        let b = mean_row_sq_dist(&now.select_rows(&perm), &init.select_rows(&perm)).unwrap();
        assert_eq!(a, b);
        let r = deviation_report(&[(0, &users(&[1.0, 3.0])[..], &now)], &users(&[0.0, 0.0]), &init).unwrap();
        assert_eq!(r.rounds[0].user, 5.0);
    }
}
