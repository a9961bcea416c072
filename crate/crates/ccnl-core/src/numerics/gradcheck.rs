use super::param::Parameter;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Central-difference check of analytic gradients.
///
/// `params` must already hold the analytic gradients for the loss `f`
/// evaluates at the current values. `f` is called with perturbed copies
/// and must be deterministic. Returns the max relative error over every
/// coordinate, with denominator max(|analytic|, |numeric|, 1e-8).
pub fn grad_check<F>(mut f: F, params: &mut [Parameter], h: f64) -> f64
where
    F: FnMut(&[Parameter]) -> f64,
{
    assert!(h > 0.0);
    let mut worst = 0.0f64;
    for pi in 0..params.len() {
        for ci in 0..params[pi].value.len() {
            let orig = params[pi].value.data()[ci];
            params[pi].value.data_mut()[ci] = orig + h;
            let fp = f(params);
            params[pi].value.data_mut()[ci] = orig - h;
            let fm = f(params);
            params[pi].value.data_mut()[ci] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = params[pi].gradient.data()[ci];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::Tensor;

    #[test]
    fn quadratic_gradient() {
        let mut p = Parameter::new("theta", Tensor::scalar(3.0));
        p.gradient.data_mut()[0] = 6.0; // d theta^2 / d theta at 3
        let err = grad_check(|ps| ps[0].value.data()[0].powi(2), std::slice::from_mut(&mut p), 1e-5);
        assert!(err < 1e-8, "err = {err}");
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut p = Parameter::new("theta", Tensor::scalar(3.0));
        p.gradient.data_mut()[0] = 5.0; // wrong on purpose
        let err = grad_check(|ps| ps[0].value.data()[0].powi(2), std::slice::from_mut(&mut p), 1e-5);
        assert!(err > 0.1);
    }

    #[test]
    fn squash_sum_gradient() {
        use crate::numerics::tape::Tape;
        // f = sum of squash(s) components at s = (3, 4)
        let mut p = Parameter::new("s", Tensor::from_rows(&[vec![3.0, 4.0]]));
        let loss = |values: &Tensor| -> (f64, Tensor) {
            let mut tape = Tape::new();
            let s = tape.leaf(values.clone());
            let v = tape.squash_rows(s);
            let ones = tape.leaf(Tensor::from_rows(&[vec![1.0], vec![1.0]]));
            let total = tape.matmul(v, ones);
            let total = tape.reshape(total, vec![1]);
            tape.backward(total);
            (tape.value(total).data()[0], tape.grad(s).clone())
        };
        let (_, analytic) = loss(&p.value);
        p.gradient = analytic;
        let err = grad_check(|ps| loss(&ps[0].value).0, std::slice::from_mut(&mut p), 1e-5);
        assert!(err < 1e-6, "err = {err}");
    }
}
