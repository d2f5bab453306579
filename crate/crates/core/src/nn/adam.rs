use ndarray::ArrayD;

use super::param::Param;
use crate::real::Real;

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<ArrayD<F>>,
    second: Vec<ArrayD<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter and clears its gradient. The
    /// parameter list must be presented in the same order on every call.
    pub fn step(&mut self, params: Vec<(String, &mut Param<F>)>) {
        if self.first.is_empty() {
            self.first = params.iter().map(|(_, p)| ArrayD::zeros(p.value.raw_dim())).collect();
            self.second = self.first.clone();
        }
        assert_eq!(self.first.len(), params.len(), "parameter set changed between steps");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (F::lit(self.beta1), F::lit(self.beta2));
        let (ob1, ob2) = (F::lit(1.0 - self.beta1), F::lit(1.0 - self.beta2));
        let step_size = F::lit(self.lr / c1);
        let c2_sqrt = F::lit(c2.sqrt());
        let eps = F::lit(self.eps);
        for ((_, p), (m, v)) in params.into_iter().zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            ndarray::Zip::from(&mut p.value).and(&mut p.grad).and(m).and(v).for_each(|w, g, m, v| {
                *m = b1 * *m + ob1 * *g;
                *v = b2 * *v + ob2 * *g * *g;
                *w = *w - step_size * *m / ((*v).sqrt() / c2_sqrt + eps);
                *g = F::zero();
            });
        }
    }
}
