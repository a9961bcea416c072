use super::param::Parameter;
use super::tensor::Tensor;

/// Per-parameter Adam state with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(shape: &[usize], learning_rate: f64) -> Self {
        AdamState {
            first_moment: Tensor::zeros(shape),
            second_moment: Tensor::zeros(shape),
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update from `param.gradient`. The gradient is left untouched;
/// the caller resets it between batches.
pub fn adam_step(param: &mut Parameter, state: &mut AdamState) {
    assert_eq!(param.value.shape(), state.first_moment.shape());
    assert!(state.beta1 > 0.0 && state.beta1 < 1.0);
    assert!(state.beta2 > 0.0 && state.beta2 < 1.0);
    assert!(state.epsilon > 0.0);

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    let m = state.first_moment.data_mut();
    let v = state.second_moment.data_mut();
    let g = param.gradient.data();
    let p = param.value.data_mut();
    for i in 0..p.len() {
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
        v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
}
