use super::Matrix;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment estimates for a fixed list of parameter matrices.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    names: Vec<String>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`, with the default constants.
    pub fn for_params(params: &[Matrix]) -> Self {
        let zeros = |p: &Matrix| Matrix::zeros(p.rows(), p.cols());
        AdamState {
            first: params.iter().map(zeros).collect(),
            second: params.iter().map(zeros).collect(),
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
            names: (0..params.len()).map(|i| format!("param[{i}]")).collect(),
        }
    }

    /// Names used in error messages, one per parameter.
    pub fn with_names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() == self.first.len() {
            self.names = names;
        }
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.second
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut [Matrix], grads: &[Matrix], lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Argument(format!("learning rate must be > 0, got {lr}")));
    }
    if params.len() != state.first.len() || grads.len() != params.len() {
        return Err(Error::shape(
            "adam_step parameter count",
            state.first.len(),
            format!("{} params / {} grads", params.len(), grads.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        p.check_same_shape(g, &format!("adam_step grad for {}", state.names[i]))?;
        p.check_same_shape(&state.first[i], &format!("adam_step moments for {}", state.names[i]))?;
        if !g.all_finite() {
            return Err(Error::NonFinite {
                what: format!("gradient of {}", state.names[i]),
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let p = params[i].as_mut_slice();
        let g = grads[i].as_slice();
        let m = state.first[i].as_mut_slice();
        let v = state.second[i].as_mut_slice();
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Matrix {
        Matrix::row_vector(vec![x])
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut params = vec![Matrix::from_vec(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap()];
        let before = params.clone();
        let mut st = AdamState::for_params(&params);
        let grads = vec![Matrix::zeros(2, 2)];
        adam_step(&mut st, &mut params, &grads, 0.001).unwrap();
        assert_eq!(params, before);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t = 1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut params = vec![scalar(1.0)];
        let mut st = AdamState::for_params(&params);
        adam_step(&mut st, &mut params, &[scalar(1.0)], 0.001).unwrap();
        let expected = 1.0 - 0.001 * 1.0 / (1.0 + 1e-8);
        assert!((params[0].get(0, 0) - expected).abs() < 1e-15);
        assert!((params[0].get(0, 0) - 0.999).abs() < 1e-9);
    }

    #[test]
    fn constant_positive_gradient_decreases_monotonically() {
        let mut params = vec![scalar(1.0)];
        let mut st = AdamState::for_params(&params);
        let mut last = 1.0;
        for _ in 0..5 {
            adam_step(&mut st, &mut params, &[scalar(0.3)], 0.01).unwrap();
            let now = params[0].get(0, 0);
            assert!(now < last);
            last = now;
        }
        assert_eq!(st.step_count(), 5);
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let mut params = vec![Matrix::zeros(2, 2)];
        let mut st = AdamState::for_params(&params);
        let err = adam_step(&mut st, &mut params, &[Matrix::zeros(2, 3)], 0.1).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut params = vec![scalar(0.0), scalar(0.0)];
        let mut st = AdamState::for_params(&params).with_names(["user", "items"]);
        let err = adam_step(&mut st, &mut params, &[scalar(0.0), scalar(f64::NAN)], 0.1).unwrap_err();
        match err {
            Error::NonFinite { what } => assert!(what.contains("items")),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn rejects_non_positive_lr() {
        let mut params = vec![scalar(0.0)];
        let mut st = AdamState::for_params(&params);
        assert!(adam_step(&mut st, &mut params, &[scalar(1.0)], 0.0).is_err());
    }
}
