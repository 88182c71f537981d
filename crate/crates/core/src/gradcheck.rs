//! Numerical gradient oracles for validating backward passes.
//!
//! Everything here evaluates the differentiated function as a black box, so
//! agreement with `Graph::backward` is evidence and not circularity: the
//! oracle only ever calls forward code.

use alloc::vec::Vec;

use crate::math;

/// Central finite difference of a scalar function at one point.
pub fn central_diff<F: FnMut(f64) -> f64>(mut f: F, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

/// Elementwise central-difference gradient of `f` with respect to every entry
/// of every parameter block.
pub fn fd_gradients<F>(f: &mut F, params: &[Vec<f64>], eps: f64) -> Vec<Vec<f64>>
where
    F: FnMut(&[Vec<f64>]) -> f64,
{
    let mut work: Vec<Vec<f64>> = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = Vec::with_capacity(params[p].len());
        for k in 0..params[p].len() {
            let orig = work[p][k];
            work[p][k] = orig + eps;
            let hi = f(&work);
            work[p][k] = orig - eps;
            let lo = f(&work);
            work[p][k] = orig;
            g.push((hi - lo) / (2.0 * eps));
        }
        grads.push(g);
    }
    grads
}

/// Central difference of `f` along a fixed direction: approximates the inner
/// product of the gradient with `dir`.
pub fn fd_directional<F>(f: &mut F, params: &[Vec<f64>], dir: &[Vec<f64>], eps: f64) -> f64
where
    F: FnMut(&[Vec<f64>]) -> f64,
{
    let shift = |sign: f64| -> Vec<Vec<f64>> {
        params
            .iter()
            .zip(dir)
            .map(|(p, d)| p.iter().zip(d).map(|(&v, &w)| v + sign * eps * w).collect())
            .collect()
    };
    let hi = f(&shift(1.0));
    let lo = f(&shift(-1.0));
    (hi - lo) / (2.0 * eps)
}

/// Relative error with an absolute floor of 1, so tiny gradients are compared
/// absolutely and large ones proportionally.
pub fn rel_err(a: f64, b: f64) -> f64 {
    math::abs(a - b) / f64::max(1.0, f64::max(math::abs(a), math::abs(b)))
}

/// Largest [`rel_err`] across paired gradient blocks.
pub fn max_rel_err(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0_f64;
    for (a, n) in analytic.iter().zip(numeric) {
        for (&x, &y) in a.iter().zip(n) {
            worst = worst.max(rel_err(x, y));
        }
    }
    worst
}
