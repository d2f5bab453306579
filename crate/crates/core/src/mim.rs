//! Maximum information modulation: a feature-recalibration block placed on
//! every encoder→decoder skip connection.
//!
//! For an input `X` of shape `C×H×W` the block computes
//!
//! * `Y  = leaky(BN(pw_spatial(X)))`, a `1×H×W` map;
//! * `V1[c] = Σ_p X[c,p] · softmax_p(Y)[p]`, a softmax-weighted spatial pool;
//! * `V2 = sigmoid(max_p X[c,p])`, global max pooling;
//! * `M2 = softmax_c(pw_excite(leaky(BN(pw_squeeze([V1; V2])))))`;
//! * `M3[p] = sigmoid(max_c X[c,p])`, cross-channel max pooling;
//! * `Z = M2 ⊙ X + M3 ⊙ X` with `M2` broadcast over space and `M3` over
//!   channels.
//!
//! Max operations pick the first maximal index and route gradient to it.

use ndarray::{Array1, Array2, Array3, Array4, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::nn::{batch_norm, leaky, leaky_grad, sigmoid, softmax_backward, softmax_inplace};
use crate::nn::{child, BatchNorm, BnCache, Conv2d, Mode, Module, Param};
use crate::real::Real;

/// A `C×H×W` activation tensor for a single image.
pub type FeatureMap<F> = Array3<F>;

/// Squeeze ratio relative to the concatenated `2C` descriptor.
pub const SQUEEZE_RATIO: usize = 4;

/// Parameters of one modulation block sized for `channels` input channels.
#[derive(Debug, Clone)]
pub struct MimBlock<F> {
    pub channels: usize,
    pub pw_spatial: Conv2d<F>,
    pub bn_spatial: BatchNorm<F>,
    pub pw_squeeze: Conv2d<F>,
    pub bn_squeeze: BatchNorm<F>,
    pub pw_excite: Conv2d<F>,
}

/// Intermediate attention tensors for a batch, `[n, ·]` layout.
#[derive(Debug, Clone)]
pub struct MimTrace<F> {
    /// Softmax spatial weights `[n, hw]`.
    pub spatial_weights: Array2<F>,
    pub v1: Array2<F>,
    pub v2: Array2<F>,
    pub m2: Array2<F>,
    /// `[n, hw]`
    pub m3: Array2<F>,
}

#[derive(Debug, Clone)]
pub struct MimCache<F> {
    x: Array4<F>,
    trace: MimTrace<F>,
    spatial_pre: Vec<F>,
    spatial_bn: Option<BnCache<F>>,
    gmp_idx: Vec<usize>,
    cmax_idx: Vec<usize>,
    m1: Array4<F>,
    squeeze_pre: Vec<F>,
    squeeze_bn: Option<BnCache<F>>,
    hidden: Array4<F>,
}

/// Dimensions `(n, c, hw)` of a batch.
fn dims<F>(x: &Array4<F>) -> (usize, usize, usize) {
    let (n, c, h, w) = x.dim();
    (n, c, h * w)
}

impl<F: Real> MimBlock<F> {
    pub fn hidden_channels(channels: usize) -> usize {
        (2 * channels / SQUEEZE_RATIO).max(1)
    }

    /// All weights zero; BN at identity.
    pub fn zeroed(channels: usize) -> Self {
        let hidden = Self::hidden_channels(channels);
        Self {
            channels,
            pw_spatial: Conv2d::new(channels, 1, 1, 1, false),
            bn_spatial: BatchNorm::new(1),
            pw_squeeze: Conv2d::new(2 * channels, hidden, 1, 1, false),
            bn_squeeze: BatchNorm::new(hidden),
            pw_excite: Conv2d::new(hidden, channels, 1, 1, true),
        }
    }

    /// Gaussian fan-in scaled initialization.
    pub fn random(channels: usize, rng: &mut impl Rng) -> Self {
        let mut block = Self::zeroed(channels);
        for conv in [&mut block.pw_spatial, &mut block.pw_squeeze, &mut block.pw_excite] {
            let fan_in = conv.in_channels() as f64;
            let normal = Normal::new(0.0, (1.0 / fan_in).sqrt()).expect("valid std");
            conv.weight.value.mapv_inplace(|_| F::lit(normal.sample(rng)));
        }
        block
    }

    /// Batch forward; the cache is required for [`MimBlock::backward`].
    pub fn forward(&self, x: &Array4<F>, mode: Mode) -> (Array4<F>, MimCache<F>) {
        let (n, c, hw) = dims(x);
        assert_eq!(c, self.channels, "MIM channel mismatch");
        let x = x.as_standard_layout().into_owned();
        let xs = x.as_slice().expect("standard layout");

        // spatial descriptor
        let y_lin = self.pw_spatial.forward(&x);
        let (spatial_pre, spatial_bn) = batch_norm(&self.bn_spatial, y_lin.as_slice().expect("contiguous"), n, hw, mode);
        let mut s = Array2::from_shape_fn((n, hw), |(b, p)| leaky(spatial_pre[b * hw + p]));
        for mut row in s.axis_iter_mut(Axis(0)) {
            softmax_inplace(row.as_slice_mut().expect("contiguous"));
        }
        let mut v1 = Array2::<F>::zeros((n, c));
        let mut v2 = Array2::<F>::zeros((n, c));
        let mut gmp_idx = vec![0usize; n * c];
        for b in 0..n {
            let sw = s.row(b);
            for ch in 0..c {
                let plane = &xs[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                v1[[b, ch]] = plane.iter().zip(sw.iter()).map(|(&a, &w)| a * w).sum();
                let (idx, mx) = argmax(plane.iter().copied());
                gmp_idx[b * c + ch] = idx;
                v2[[b, ch]] = sigmoid(mx);
            }
        }

        // channel gate
        let m1 = Array4::from_shape_fn((n, 2 * c, 1, 1), |(b, i, _, _)| if i < c { v1[[b, i]] } else { v2[[b, i - c]] });
        let (m2, squeeze_pre, squeeze_bn, hidden) = self.channel_gate_batch(&m1, mode);

        // spatial gate
        let mut m3 = Array2::<F>::zeros((n, hw));
        let mut cmax_idx = vec![0usize; n * hw];
        for b in 0..n {
            for p in 0..hw {
                let (idx, mx) = argmax((0..c).map(|ch| xs[(b * c + ch) * hw + p]));
                cmax_idx[b * hw + p] = idx;
                m3[[b, p]] = sigmoid(mx);
            }
        }

        let mut z = Array4::<F>::zeros(x.raw_dim());
        {
            let zs = z.as_slice_mut().expect("contiguous");
            for b in 0..n {
                for ch in 0..c {
                    let g = m2[[b, ch]];
                    let off = (b * c + ch) * hw;
                    for p in 0..hw {
                        zs[off + p] = (g + m3[[b, p]]) * xs[off + p];
                    }
                }
            }
        }
        let trace = MimTrace { spatial_weights: s, v1, v2, m2, m3 };
        let cache = MimCache { x, trace, spatial_pre, spatial_bn, gmp_idx, cmax_idx, m1, squeeze_pre, squeeze_bn, hidden };
        (z, cache)
    }

    #[allow(clippy::type_complexity)]
    fn channel_gate_batch(&self, m1: &Array4<F>, mode: Mode) -> (Array2<F>, Vec<F>, Option<BnCache<F>>, Array4<F>) {
        let n = m1.dim().0;
        let c = self.channels;
        let hid = self.pw_squeeze.out_channels();
        let q = self.pw_squeeze.forward(m1);
        let (pre, bn_cache) = batch_norm(&self.bn_squeeze, q.as_slice().expect("contiguous"), n, 1, mode);
        let hidden = Array4::from_shape_fn((n, hid, 1, 1), |(b, i, _, _)| leaky(pre[b * hid + i]));
        let a = self.pw_excite.forward(&hidden);
        let mut m2 = Array2::from_shape_fn((n, c), |(b, i)| a[[b, i, 0, 0]]);
        for mut row in m2.axis_iter_mut(Axis(0)) {
            softmax_inplace(row.as_slice_mut().expect("contiguous"));
        }
        (m2, pre, bn_cache, hidden)
    }

    /// Commits training-mode batch statistics held in `cache`.
    pub fn commit(&mut self, cache: &MimCache<F>) {
        if let Some(c) = &cache.spatial_bn {
            self.bn_spatial.commit(c);
        }
        if let Some(c) = &cache.squeeze_bn {
            self.bn_squeeze.commit(c);
        }
    }

    /// Accumulates parameter gradients and returns `∂L/∂X`. The cache must
    /// come from a training-mode forward.
    pub fn backward(&mut self, cache: &MimCache<F>, dz: &Array4<F>) -> Array4<F> {
        let x = &cache.x;
        let (n, c, hw) = dims(x);
        let xs = x.as_slice().expect("contiguous");
        let dz = dz.as_standard_layout();
        let dzs = dz.as_slice().expect("contiguous");
        let t = &cache.trace;

        let mut dx = Array4::<F>::zeros(x.raw_dim());
        let mut dm2 = Array2::<F>::zeros((n, c));
        let mut dm3 = Array2::<F>::zeros((n, hw));
        {
            let dxs = dx.as_slice_mut().expect("contiguous");
            for b in 0..n {
                for ch in 0..c {
                    let off = (b * c + ch) * hw;
                    let g = t.m2[[b, ch]];
                    let mut acc = F::zero();
                    for p in 0..hw {
                        let d = dzs[off + p];
                        dxs[off + p] = d * (g + t.m3[[b, p]]);
                        let dx_term = d * xs[off + p];
                        acc = acc + dx_term;
                        dm3[[b, p]] = dm3[[b, p]] + dx_term;
                    }
                    dm2[[b, ch]] = acc;
                }
            }
            // spatial gate through cross-channel max
            for b in 0..n {
                for p in 0..hw {
                    let m = t.m3[[b, p]];
                    let ch = cache.cmax_idx[b * hw + p];
                    let i = (b * c + ch) * hw + p;
                    dxs[i] = dxs[i] + dm3[[b, p]] * m * (F::one() - m);
                }
            }
        }

        // channel gate: softmax -> excite -> leaky -> BN -> squeeze
        let mut da = Array4::<F>::zeros((n, c, 1, 1));
        for b in 0..n {
            let mut out = vec![F::zero(); c];
            softmax_backward(t.m2.row(b).as_slice().expect("contiguous"), dm2.row(b).as_slice().expect("contiguous"), &mut out);
            for (i, v) in out.into_iter().enumerate() {
                da[[b, i, 0, 0]] = v;
            }
        }
        let dh = self.pw_excite.backward(&cache.hidden, &da, true).expect("input grad");
        let hid = self.pw_squeeze.out_channels();
        let dpre: Vec<F> = (0..n * hid).map(|i| dh.as_slice().expect("contiguous")[i] * leaky_grad(cache.squeeze_pre[i])).collect();
        let bn_cache = cache.squeeze_bn.as_ref().expect("backward requires a training-mode forward");
        let dq = self.bn_squeeze.backward(bn_cache, &dpre, n, 1);
        let dq = Array4::from_shape_vec((n, hid, 1, 1), dq).expect("shape");
        let dm1 = self.pw_squeeze.backward(&cache.m1, &dq, true).expect("input grad");

        let mut ds = Array2::<F>::zeros((n, hw));
        {
            let dxs = dx.as_slice_mut().expect("contiguous");
            for b in 0..n {
                for ch in 0..c {
                    let dv1 = dm1[[b, ch, 0, 0]];
                    let dv2 = dm1[[b, c + ch, 0, 0]];
                    let off = (b * c + ch) * hw;
                    // global max pooling
                    let v2 = t.v2[[b, ch]];
                    let i = off + cache.gmp_idx[b * c + ch];
                    dxs[i] = dxs[i] + dv2 * v2 * (F::one() - v2);
                    // softmax-weighted pooling
                    for p in 0..hw {
                        dxs[off + p] = dxs[off + p] + dv1 * t.spatial_weights[[b, p]];
                        ds[[b, p]] = ds[[b, p]] + dv1 * xs[off + p];
                    }
                }
            }
        }
        let mut dy = vec![F::zero(); n * hw];
        for b in 0..n {
            softmax_backward(
                t.spatial_weights.row(b).as_slice().expect("contiguous"),
                ds.row(b).as_slice().expect("contiguous"),
                &mut dy[b * hw..(b + 1) * hw],
            );
        }
        for (d, &pre) in dy.iter_mut().zip(&cache.spatial_pre) {
            *d = *d * leaky_grad(pre);
        }
        let bn_cache = cache.spatial_bn.as_ref().expect("backward requires a training-mode forward");
        let dlin = self.bn_spatial.backward(bn_cache, &dy, n, hw);
        let (_, _, h, w) = x.dim();
        let dlin = Array4::from_shape_vec((n, 1, h, w), dlin).expect("shape");
        let dx_spatial = self.pw_spatial.backward(x, &dlin, true).expect("input grad");
        dx += &dx_spatial;
        dx
    }
}

impl<F: Real> Module<F> for MimBlock<F> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        self.pw_spatial.params(&child(prefix, "pw_spatial"), out);
        self.bn_spatial.params(&child(prefix, "bn_spatial"), out);
        self.pw_squeeze.params(&child(prefix, "pw_squeeze"), out);
        self.bn_squeeze.params(&child(prefix, "bn_squeeze"), out);
        self.pw_excite.params(&child(prefix, "pw_excite"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        self.pw_spatial.params_mut(&child(prefix, "pw_spatial"), out);
        self.bn_spatial.params_mut(&child(prefix, "bn_spatial"), out);
        self.pw_squeeze.params_mut(&child(prefix, "pw_squeeze"), out);
        self.bn_squeeze.params_mut(&child(prefix, "bn_squeeze"), out);
        self.pw_excite.params_mut(&child(prefix, "pw_excite"), out);
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a ndarray::ArrayD<F>)>) {
        self.bn_spatial.buffers(&child(prefix, "bn_spatial"), out);
        self.bn_squeeze.buffers(&child(prefix, "bn_squeeze"), out);
    }

    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut ndarray::ArrayD<F>)>) {
        self.bn_spatial.buffers_mut(&child(prefix, "bn_spatial"), out);
        self.bn_squeeze.buffers_mut(&child(prefix, "bn_squeeze"), out);
    }
}

/// First index of the maximum; NaN never wins.
fn argmax<F: Real>(it: impl Iterator<Item = F>) -> (usize, F) {
    let mut best = (0, F::neg_infinity());
    for (i, v) in it.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

fn single<F: Real>(x: &FeatureMap<F>) -> Array4<F> {
    x.clone().insert_axis(Axis(0))
}

/// Softmax-weighted spatial pooling `V1` (inference statistics).
pub fn spatial_channel_attention<F: Real>(x: &FeatureMap<F>, p: &MimBlock<F>) -> Array1<F> {
    let (_, cache) = p.forward(&single(x), Mode::Eval);
    cache.trace.v1.row(0).to_owned()
}

/// Sigmoid of the per-channel spatial maximum, `V2`.
pub fn gmp_attention<F: Real>(x: &FeatureMap<F>) -> Array1<F> {
    x.axis_iter(Axis(0))
        .map(|plane| sigmoid(argmax(plane.iter().copied()).1))
        .collect()
}

/// Channel gate `M2` from the two descriptors (inference statistics).
pub fn channel_gate<F: Real>(v1: &Array1<F>, v2: &Array1<F>, p: &MimBlock<F>) -> Array1<F> {
    let c = v1.len();
    assert_eq!(v2.len(), c);
    let m1 = Array4::from_shape_fn((1, 2 * c, 1, 1), |(_, i, _, _)| if i < c { v1[i] } else { v2[i - c] });
    let (m2, ..) = p.channel_gate_batch(&m1, Mode::Eval);
    m2.row(0).to_owned()
}

/// Spatial gate `M3`: sigmoid of the cross-channel maximum at each pixel.
pub fn spatial_gate<F: Real>(x: &FeatureMap<F>) -> Array2<F> {
    let (c, h, w) = x.dim();
    Array2::from_shape_fn((h, w), |(y, xx)| sigmoid(argmax((0..c).map(|ch| x[[ch, y, xx]])).1))
}

/// Full modulation of a single feature map (inference statistics).
pub fn mim_forward<F: Real>(x: &FeatureMap<F>, p: &MimBlock<F>) -> FeatureMap<F> {
    let (z, _) = p.forward(&single(x), Mode::Eval);
    z.index_axis_move(Axis(0), 0)
}

/// Gates of a single feature map, for visualization dumps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateDump {
    pub m2: Vec<f64>,
    pub m3: Vec<f64>,
    pub height: usize,
    pub width: usize,
}

impl<F: Real> MimTrace<F> {
    pub fn gates(&self, b: usize, height: usize, width: usize) -> GateDump {
        GateDump {
            m2: self.m2.row(b).iter().map(|v| v.as_f64()).collect(),
            m3: self.m3.row(b).iter().map(|v| v.as_f64()).collect(),
            height,
            width,
        }
    }
}

impl<F: Real> MimCache<F> {
    pub fn trace(&self) -> &MimTrace<F> {
        &self.trace
    }
}
