//! Central finite-difference verification of analytic gradients.
//!
//! Used by the test suite as an independent oracle: the closure under
//! test rebuilds its computation from plain tensors, so the comparison
//! never reuses the tape machinery it is checking.

use super::{Scalar, Tensor};

/// Infinity-norm relative error between an analytic and a numeric
/// gradient: max |a-n| / max(max|a|, max|n|, 1e-12).
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0f64, f64::max);
    let scale_a = analytic.iter().map(|a| a.abs()).fold(0.0f64, f64::max);
    let scale_n = numeric.iter().map(|n| n.abs()).fold(0.0f64, f64::max);
    diff / scale_a.max(scale_n).max(1e-12)
}

/// Central finite differences of `eval` with respect to every element of
/// every input, step `h`.
pub fn central_differences<S: Scalar>(
    inputs: &[Tensor<S>],
    h: f64,
    mut eval: impl FnMut(&[Tensor<S>]) -> f64,
) -> Vec<Vec<f64>> {
    let mut work: Vec<Tensor<S>> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut grads = Vec::with_capacity(inputs[i].len());
        for j in 0..inputs[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = S::from_f64(orig.to_f64() + h);
            let plus = eval(&work);
            work[i].data_mut()[j] = S::from_f64(orig.to_f64() - h);
            let minus = eval(&work);
            work[i].data_mut()[j] = orig;
            grads.push((plus - minus) / (2.0 * h));
        }
        out.push(grads);
    }
    out
}

/// Worst relative error across inputs between `analytic` gradients and
/// the central-difference estimate of `eval`.
pub fn max_relative_error<S: Scalar>(
    inputs: &[Tensor<S>],
    analytic: &[Vec<f64>],
    h: f64,
    eval: impl FnMut(&[Tensor<S>]) -> f64,
) -> f64 {
    assert_eq!(inputs.len(), analytic.len());
    let numeric = central_differences(inputs, h, eval);
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(a, n))
        .fold(0.0f64, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_recovered() {
        // f(x) = sum x^2, df/dx = 2x.
        let x = Tensor::<f64>::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let eval = |vals: &[Tensor<f64>]| vals[0].data().iter().map(|v| v * v).sum();
        let analytic = vec![vec![1.0, -2.0, 4.0]];
        let err = max_relative_error(&[x], &analytic, 1e-6, eval);
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn relative_error_uses_infinity_norm_scale() {
        assert!(relative_error(&[0.0, 0.0], &[0.0, 0.0]) < 1e-12);
        let e = relative_error(&[10.0, 0.0], &[10.0, 0.01]);
        assert!((e - 0.001).abs() < 1e-12);
    }
}
