use ndarray::{ArrayD, IxDyn};

use crate::real::Real;

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    pub value: ArrayD<F>,
    pub grad: ArrayD<F>,
}

impl<F: Real> Param<F> {
    pub fn new(value: ArrayD<F>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(ArrayD::zeros(IxDyn(shape)))
    }

    pub fn filled(shape: &[usize], v: F) -> Self {
        Self::new(ArrayD::from_elem(IxDyn(shape), v))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Enumerates trainable parameters and non-trainable state under stable,
/// dot-separated names.
pub trait Module<F: Real> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>);
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>);

    fn buffers<'a>(&'a self, _prefix: &str, _out: &mut Vec<(String, &'a ArrayD<F>)>) {}
    fn buffers_mut<'a>(&'a mut self, _prefix: &str, _out: &mut Vec<(String, &'a mut ArrayD<F>)>) {}

    fn named_params(&self) -> Vec<(String, &Param<F>)> {
        let mut out = Vec::new();
        self.params("", &mut out);
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param<F>)> {
        let mut out = Vec::new();
        self.params_mut("", &mut out);
        out
    }

    fn parameter_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }
}

pub(crate) fn child(prefix: &str, name: &str) -> String {
    join(prefix, name)
}
