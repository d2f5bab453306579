//! Minimal CPU layer engine with hand-derived backward passes.
//!
//! Activations use `[batch, channel, height, width]` layout throughout. Every
//! layer has a caching training forward, a cache-free inference forward and a
//! backward that accumulates parameter gradients and returns the input
//! gradient.

mod adam;
mod conv;
mod norm;
mod param;

pub use adam::Adam;
pub use conv::{col2im, im2col, Conv2d};
pub use norm::{BatchNorm, BnCache, BN_EPS, BN_MOMENTUM};
pub use param::{Module, Param};
pub(crate) use param::child;

use crate::real::Real;

pub const LEAKY_SLOPE: f64 = 0.01;

/// Whether batch normalization uses batch statistics (and caches for
/// backward) or running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Normalizes `[n, c, l]` data according to `mode`; the cache is only
/// produced in training mode.
pub fn batch_norm<F: Real>(bn: &BatchNorm<F>, x: &[F], n: usize, l: usize, mode: Mode) -> (Vec<F>, Option<BnCache<F>>) {
    match mode {
        Mode::Train => {
            let (y, c) = bn.forward_train(x, n, l);
            (y, Some(c))
        }
        Mode::Eval => (bn.forward_eval(x, n, l), None),
    }
}

#[inline]
pub fn leaky<F: Real>(v: F) -> F {
    if v > F::zero() {
        v
    } else {
        v * F::lit(LEAKY_SLOPE)
    }
}

#[inline]
pub fn leaky_grad<F: Real>(pre: F) -> F {
    if pre > F::zero() {
        F::one()
    } else {
        F::lit(LEAKY_SLOPE)
    }
}

#[inline]
pub fn sigmoid<F: Real>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

/// Numerically stable softmax in place.
pub fn softmax_inplace<F: Real>(v: &mut [F]) {
    let max = v.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum = sum + *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

/// Backward of softmax: `dx = s ⊙ (ds − ⟨s, ds⟩)`.
pub fn softmax_backward<F: Real>(s: &[F], ds: &[F], dx: &mut [F]) {
    let dot: F = s.iter().zip(ds).map(|(&a, &b)| a * b).sum();
    for ((o, &si), &dsi) in dx.iter_mut().zip(s).zip(ds) {
        *o = si * (dsi - dot);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant() {
        let mut a = vec![1.0f64, 2.0, 3.0];
        let mut b = vec![101.0f64, 102.0, 103.0];
        softmax_inplace(&mut a);
        softmax_inplace(&mut b);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!(sigmoid(800.0f64) <= 1.0);
        assert!((sigmoid(2.0f64) + sigmoid(-2.0f64) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_backward_matches_finite_difference() {
        let x = [0.3f64, -1.2, 0.7, 0.1];
        let w = [0.5f64, -0.25, 2.0, 1.0];
        let f = |x: &[f64]| {
            let mut s = x.to_vec();
            softmax_inplace(&mut s);
            s.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut s = x.to_vec();
        softmax_inplace(&mut s);
        let mut dx = [0.0; 4];
        softmax_backward(&s, &w, &mut dx);
        for i in 0..4 {
            let mut p = x;
            let mut m = x;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-8);
        }
    }
}
