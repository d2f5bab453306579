use ndarray::{Array1, ArrayD, IxDyn};

use super::param::{child, Module, Param};
use crate::real::Real;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over a `[batch, channel, positions]`
/// buffer, used for both spatial maps and plain feature vectors.
#[derive(Debug, Clone)]
pub struct BatchNorm<F> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: ArrayD<F>,
    pub running_var: ArrayD<F>,
}

#[derive(Debug, Clone)]
pub struct BnCache<F> {
    /// Normalized input, same layout as the forward input.
    pub x_hat: Vec<F>,
    pub inv_std: Vec<F>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl<F: Real> BatchNorm<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::filled(&[channels], F::one()),
            beta: Param::zeros(&[channels]),
            running_mean: ArrayD::zeros(IxDyn(&[channels])),
            running_var: ArrayD::ones(IxDyn(&[channels])),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Training-mode forward using batch statistics. `x` is `[n, c, l]`
    /// flattened in standard order. Running statistics are left untouched
    /// until [`BatchNorm::commit`] is called with the returned cache.
    pub fn forward_train(&self, x: &[F], n: usize, l: usize) -> (Vec<F>, BnCache<F>) {
        let c = self.channels();
        debug_assert_eq!(x.len(), n * c * l);
        let m = (n * l) as f64;
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        for b in 0..n {
            for ch in 0..c {
                let s = &x[(b * c + ch) * l..(b * c + ch + 1) * l];
                mean[ch] += s.iter().map(|v| v.as_f64()).sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        for b in 0..n {
            for ch in 0..c {
                let s = &x[(b * c + ch) * l..(b * c + ch + 1) * l];
                let mu = mean[ch];
                var[ch] += s.iter().map(|v| (v.as_f64() - mu).powi(2)).sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= m);

        let inv_std: Vec<F> = var.iter().map(|v| F::lit(1.0 / (v + BN_EPS).sqrt())).collect();
        let gamma = self.gamma.value.as_slice().expect("contiguous");
        let beta = self.beta.value.as_slice().expect("contiguous");
        let mut x_hat = vec![F::zero(); x.len()];
        let mut y = vec![F::zero(); x.len()];
        for b in 0..n {
            for ch in 0..c {
                let r = (b * c + ch) * l..(b * c + ch + 1) * l;
                let mu = F::lit(mean[ch]);
                for ((xh, yo), &xi) in x_hat[r.clone()].iter_mut().zip(&mut y[r.clone()]).zip(&x[r]) {
                    *xh = (xi - mu) * inv_std[ch];
                    *yo = gamma[ch] * *xh + beta[ch];
                }
            }
        }

        (y, BnCache { x_hat, inv_std, mean, var, count: m })
    }

    /// Folds a training batch's statistics into the running estimates.
    pub fn commit(&mut self, cache: &BnCache<F>) {
        let mom = BN_MOMENTUM;
        let m = cache.count;
        let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
        for ch in 0..self.channels() {
            let rm = &mut self.running_mean[ch];
            *rm = F::lit((1.0 - mom) * rm.as_f64() + mom * cache.mean[ch]);
            let rv = &mut self.running_var[ch];
            *rv = F::lit((1.0 - mom) * rv.as_f64() + mom * cache.var[ch] * unbias);
        }
    }

    /// Inference-mode forward with running statistics.
    pub fn forward_eval(&self, x: &[F], n: usize, l: usize) -> Vec<F> {
        let c = self.channels();
        let (scale, shift) = self.eval_affine();
        let mut y = vec![F::zero(); x.len()];
        for b in 0..n {
            for ch in 0..c {
                let r = (b * c + ch) * l..(b * c + ch + 1) * l;
                for (yo, &xi) in y[r.clone()].iter_mut().zip(&x[r]) {
                    *yo = xi * scale[ch] + shift[ch];
                }
            }
        }
        y
    }

    /// Folded per-channel `(scale, shift)` of the inference transform.
    pub fn eval_affine(&self) -> (Array1<F>, Array1<F>) {
        let c = self.channels();
        let mut scale = Array1::zeros(c);
        let mut shift = Array1::zeros(c);
        for ch in 0..c {
            let inv = F::lit(1.0 / (self.running_var[ch].as_f64() + BN_EPS).sqrt());
            scale[ch] = self.gamma.value[ch] * inv;
            shift[ch] = self.beta.value[ch] - self.running_mean[ch] * scale[ch];
        }
        (scale, shift)
    }

    /// Output of the training forward recomputed from the cache.
    #[inline]
    pub fn affine(&self, ch: usize, x_hat: F) -> F {
        self.gamma.value[ch] * x_hat + self.beta.value[ch]
    }

    /// Accumulates gamma/beta gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &BnCache<F>, dy: &[F], n: usize, l: usize) -> Vec<F> {
        let c = self.channels();
        let m = (n * l) as f64;
        let mut dgamma = vec![0.0f64; c];
        let mut dbeta = vec![0.0f64; c];
        for b in 0..n {
            for ch in 0..c {
                let r = (b * c + ch) * l..(b * c + ch + 1) * l;
                for (&g, &xh) in dy[r.clone()].iter().zip(&cache.x_hat[r]) {
                    dbeta[ch] += g.as_f64();
                    dgamma[ch] += (g * xh).as_f64();
                }
            }
        }
        let mut dx = vec![F::zero(); dy.len()];
        for b in 0..n {
            for ch in 0..c {
                let r = (b * c + ch) * l..(b * c + ch + 1) * l;
                let k = self.gamma.value[ch] * cache.inv_std[ch] / F::lit(m);
                let sb = F::lit(dbeta[ch]);
                let sg = F::lit(dgamma[ch]);
                let mf = F::lit(m);
                for ((o, &g), &xh) in dx[r.clone()].iter_mut().zip(&dy[r.clone()]).zip(&cache.x_hat[r]) {
                    *o = k * (mf * g - sb - xh * sg);
                }
            }
        }
        for ch in 0..c {
            self.gamma.grad[ch] = self.gamma.grad[ch] + F::lit(dgamma[ch]);
            self.beta.grad[ch] = self.beta.grad[ch] + F::lit(dbeta[ch]);
        }
        dx
    }
}

impl<F: Real> Module<F> for BatchNorm<F> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        out.push((child(prefix, "gamma"), &self.gamma));
        out.push((child(prefix, "beta"), &self.beta));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        out.push((child(prefix, "gamma"), &mut self.gamma));
        out.push((child(prefix, "beta"), &mut self.beta));
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a ArrayD<F>)>) {
        out.push((child(prefix, "running_mean"), &self.running_mean));
        out.push((child(prefix, "running_var"), &self.running_var));
    }

    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut ArrayD<F>)>) {
        out.push((child(prefix, "running_mean"), &mut self.running_mean));
        out.push((child(prefix, "running_var"), &mut self.running_var));
    }
}
