//! Fully dilated convolution networks: constant-resolution encoder–decoder
//! stacks of 3×3 dilated convolutions with additive equal-dilation skips.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array3, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, ProbabilityMap};
use crate::mim::{MimBlock, MimCache};
use crate::nn::{batch_norm, child, leaky, leaky_grad, sigmoid, BatchNorm, BnCache, Conv2d, Mode, Module, Param};
use crate::real::Real;

pub use crate::mim::FeatureMap;

pub const KERNEL: usize = 3;
/// Noise added on top of the identity initialization; also the scale of the
/// small random init of the first layer and the head.
pub const INIT_NOISE_STD: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fdcn9,
    Fdcn13,
}

impl Variant {
    pub fn default_channels(self) -> usize {
        match self {
            Variant::Fdcn9 => 128,
            Variant::Fdcn13 => 64,
        }
    }

    pub fn dilations(self) -> Vec<usize> {
        match self {
            Variant::Fdcn9 => vec![1, 2, 4, 8, 16, 8, 4, 2, 1],
            Variant::Fdcn13 => vec![1, 2, 4, 8, 16, 32, 64, 32, 16, 8, 4, 2, 1],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Fdcn9 => "fdcn9",
            Variant::Fdcn13 => "fdcn13",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fdcn9" => Ok(Variant::Fdcn9),
            "fdcn13" => Ok(Variant::Fdcn13),
            other => Err(Error::Config(format!("unknown network variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kernel: usize,
    pub dilation: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// BN and leaky rectifier follow the convolution.
    pub normalized_activated: bool,
}

impl LayerSpec {
    /// "Same" padding for a dilated kernel.
    pub fn padding(&self) -> usize {
        self.dilation * (self.kernel - 1) / 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FdcnSpec {
    pub layers: Vec<LayerSpec>,
    pub channels: usize,
    /// `(encoder layer, decoder layer)`, zero-based, outermost pair last.
    pub skip_pairs: Vec<(usize, usize)>,
}

impl FdcnSpec {
    pub fn fdcn9() -> Self {
        Self::for_variant(Variant::Fdcn9, Variant::Fdcn9.default_channels())
    }

    pub fn fdcn13() -> Self {
        Self::for_variant(Variant::Fdcn13, Variant::Fdcn13.default_channels())
    }

    pub fn for_variant(variant: Variant, channels: usize) -> Self {
        Self::custom(&variant.dilations(), channels).expect("built-in dilation table is valid")
    }

    /// Builds a stack of `2n+1` layers from a palindromic dilation list.
    pub fn custom(dilations: &[usize], channels: usize) -> Result<Self> {
        let len = dilations.len();
        if len == 0 || len % 2 == 0 {
            return Err(Error::Config(format!("layer count must be odd, got {len}")));
        }
        if channels == 0 {
            return Err(Error::Config("channel count must be positive".into()));
        }
        if dilations.iter().any(|&d| d == 0) {
            return Err(Error::Config("dilations must be positive".into()));
        }
        if dilations.iter().ne(dilations.iter().rev()) {
            return Err(Error::Config(format!("dilation list {dilations:?} is not palindromic")));
        }
        let layers = dilations
            .iter()
            .enumerate()
            .map(|(i, &dilation)| LayerSpec {
                kernel: KERNEL,
                dilation,
                in_channels: if i == 0 { 1 } else { channels },
                out_channels: channels,
                normalized_activated: true,
            })
            .collect();
        let n = len / 2;
        // encoder x_k is layer k-1, decoder z_k is layer 2n+1-k
        let skip_pairs = (2..=n).map(|k| (k - 1, len - k)).collect();
        Ok(Self { layers, channels, skip_pairs })
    }

    pub fn dilations(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.dilation).collect()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Trainable scalars implied by the layer table: convolution kernels, BN
    /// affine pairs, the head (weights and bias) and, optionally, one
    /// modulation block per skip.
    pub fn parameter_count(&self, use_mim: bool) -> usize {
        let conv: usize = self.layers.iter().map(|l| l.kernel * l.kernel * l.in_channels * l.out_channels).sum();
        let bn: usize = self.layers.iter().map(|l| 2 * l.out_channels).sum();
        let head = self.channels + 1;
        let mim = if use_mim { self.skip_pairs.len() * mim_parameter_count(self.channels) } else { 0 };
        conv + bn + head + mim
    }
}

/// Trainable scalars of one modulation block on `c` channels.
pub fn mim_parameter_count(c: usize) -> usize {
    let hidden = MimBlock::<f64>::hidden_channels(c);
    c + 2 + 2 * c * hidden + 2 * hidden + hidden * c + c
}

/// `1 + Σ dilation·(kernel − 1)` over all convolutions.
pub fn receptive_field(spec: &FdcnSpec) -> usize {
    1 + spec.layers.iter().map(|l| l.dilation * (l.kernel - 1)).sum::<usize>()
}

#[derive(Debug, Clone)]
pub struct ConvLayer<F> {
    pub conv: Conv2d<F>,
    pub bn: BatchNorm<F>,
}

/// One trainable player.
#[derive(Debug, Clone)]
pub struct PlayerNetwork<F> {
    pub spec: FdcnSpec,
    pub variant: Option<Variant>,
    pub use_mim: bool,
    pub seed: u64,
    pub layers: Vec<ConvLayer<F>>,
    pub head: Conv2d<F>,
    /// One block per skip pair when modulation is enabled.
    pub mims: Vec<MimBlock<F>>,
}

/// Everything the backward pass needs from a training forward.
#[derive(Debug)]
pub struct NetCache<F> {
    /// Input of each layer followed by the head input.
    inputs: Vec<Array4<F>>,
    bn: Vec<BnCache<F>>,
    mims: Vec<MimCache<F>>,
    pub probs: Array4<F>,
}

impl<F> NetCache<F> {
    pub fn mim_caches(&self) -> &[MimCache<F>] {
        &self.mims
    }
}

/// Builds a player with the standard channel width of its variant.
pub fn build_fdcn<F: Real>(variant: Variant, use_mim: bool, seed: u64) -> PlayerNetwork<F> {
    PlayerNetwork::new(variant, variant.default_channels(), use_mim, seed)
}

fn normal_sample<F: Real>(dist: &Normal<f64>, rng: &mut ChaCha8Rng) -> F {
    F::lit(dist.sample(rng))
}

impl<F: Real> PlayerNetwork<F> {
    pub fn new(variant: Variant, channels: usize, use_mim: bool, seed: u64) -> Self {
        let mut net = Self::from_spec(FdcnSpec::for_variant(variant, channels), use_mim, seed);
        net.variant = Some(variant);
        net
    }

    /// Deterministic identity-style initialization from `seed`.
    pub fn from_spec(spec: FdcnSpec, use_mim: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, INIT_NOISE_STD).expect("valid std");
        let mut layers = Vec::with_capacity(spec.depth());
        for l in &spec.layers {
            let mut conv = Conv2d::new(l.in_channels, l.out_channels, l.kernel, l.dilation, false);
            if l.in_channels == l.out_channels {
                conv.weight.value.mapv_inplace(|_| normal_sample(&noise, &mut rng));
                let mid = l.kernel / 2;
                for c in 0..l.out_channels {
                    conv.weight.value[[c, c, mid, mid]] += F::one();
                }
            } else {
                conv.weight.value.mapv_inplace(|_| normal_sample(&noise, &mut rng));
            }
            layers.push(ConvLayer { conv, bn: BatchNorm::new(l.out_channels) });
        }
        let mut head = Conv2d::new(spec.channels, 1, 1, 1, true);
        head.weight.value.mapv_inplace(|_| normal_sample(&noise, &mut rng));
        let mims = if use_mim {
            spec.skip_pairs.iter().map(|_| MimBlock::random(spec.channels, &mut rng)).collect()
        } else {
            Vec::new()
        };
        Self { spec, variant: None, use_mim, seed, layers, head, mims }
    }

    /// Index of the skip pair whose decoder side is `layer`.
    fn skip_into(&self, layer: usize) -> Option<(usize, usize)> {
        self.spec.skip_pairs.iter().enumerate().find(|(_, p)| p.1 == layer).map(|(j, p)| (j, p.0))
    }

    /// Batch forward on `[n, 1, h, w]`. Returns probabilities, the output of
    /// every layer (after skip aggregation) and, in training mode, a cache.
    pub fn forward_batch(&self, x: &Array4<F>, mode: Mode, keep_features: bool) -> (Array4<F>, Vec<Array4<F>>, Option<NetCache<F>>) {
        let (n, c_in, h, w) = x.dim();
        assert_eq!(c_in, 1, "players take single-channel input");
        let hw = h * w;
        let train = mode == Mode::Train;
        let mut inputs = Vec::new();
        let mut bn_caches = Vec::new();
        let mut mim_caches = Vec::new();
        let mut features = Vec::new();
        let mut outputs: Vec<Option<Array4<F>>> = vec![None; self.spec.depth()];
        let encoders: Vec<usize> = self.spec.skip_pairs.iter().map(|p| p.0).collect();

        let mut a = x.as_standard_layout().into_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let lin = layer.conv.forward(&a);
            let co = layer.conv.out_channels();
            let (y, cache) = batch_norm(&layer.bn, lin.as_slice().expect("contiguous"), n, hw, mode);
            let mut hmap = Array4::from_shape_vec((n, co, h, w), y).expect("shape");
            hmap.mapv_inplace(leaky);
            if let Some((j, e)) = self.skip_into(i) {
                let enc = outputs[e].take().expect("encoder output retained");
                if self.use_mim {
                    let (z, mc) = self.mims[j].forward(&enc, mode);
                    hmap += &z;
                    if train {
                        mim_caches.push(mc);
                    }
                } else {
                    hmap += &enc;
                }
            }
            if encoders.contains(&i) {
                outputs[i] = Some(hmap.clone());
            }
            if train {
                inputs.push(a);
                bn_caches.push(cache.expect("training cache"));
            }
            if keep_features {
                features.push(hmap.clone());
            }
            a = hmap;
        }
        let mut logits = self.head.forward(&a);
        logits.mapv_inplace(sigmoid);
        let cache = train.then(|| {
            inputs.push(a);
            NetCache { inputs, bn: bn_caches, mims: mim_caches, probs: logits.clone() }
        });
        (logits, features, cache)
    }

    /// Accumulates gradients given `∂L/∂o` for the probabilities produced by
    /// the training forward that filled `cache`.
    pub fn backward(&mut self, cache: &NetCache<F>, d_probs: &Array4<F>) {
        let d = d_probs * &cache.probs.mapv(|o| o * (F::one() - o));
        let depth = self.spec.depth();
        let mut da = self.head.backward(&cache.inputs[depth], &d, true).expect("input grad");
        let mut skip_grad: Vec<Option<Array4<F>>> = vec![None; depth];
        // training forward pushes one modulation cache per skip, in decoder order
        let decoder_order: Vec<usize> = {
            let mut v: Vec<usize> = self.spec.skip_pairs.iter().map(|p| p.1).collect();
            v.sort_unstable();
            v
        };
        for i in (0..depth).rev() {
            let mut dh = da;
            if let Some((j, e)) = self.skip_into(i) {
                let g = if self.use_mim {
                    let pos = decoder_order.iter().position(|&dl| dl == i).expect("decoder layer");
                    self.mims[j].backward(&cache.mims[pos], &dh)
                } else {
                    dh.clone()
                };
                skip_grad[e] = Some(g);
            }
            if let Some(g) = skip_grad[i].take() {
                dh += &g;
            }
            let layer = &mut self.layers[i];
            let bc = &cache.bn[i];
            let (n, c, h, w) = dh.dim();
            let l = h * w;
            let mut dpre = dh.into_raw_vec_and_offset().0;
            for (k, v) in dpre.iter_mut().enumerate() {
                let ch = (k / l) % c;
                *v *= leaky_grad(layer.bn.affine(ch, bc.x_hat[k]));
            }
            let dlin = layer.bn.backward(bc, &dpre, n, l);
            let dlin = Array4::from_shape_vec((n, c, h, w), dlin).expect("shape");
            da = layer.conv.backward(&cache.inputs[i], &dlin, i > 0).unwrap_or_default();
        }
    }

    /// Folds batch statistics of a training forward into the running ones.
    pub fn commit(&mut self, cache: &NetCache<F>) {
        for (layer, bc) in self.layers.iter_mut().zip(&cache.bn) {
            layer.bn.commit(bc);
        }
        let mut decoder_order: Vec<(usize, usize)> = self.spec.skip_pairs.iter().enumerate().map(|(j, p)| (p.1, j)).collect();
        decoder_order.sort_unstable();
        for ((_, j), mc) in decoder_order.into_iter().zip(&cache.mims) {
            self.mims[j].commit(mc);
        }
    }

    /// Inference on a single image with running BN statistics.
    pub fn forward(&self, image: &GrayImage) -> (ProbabilityMap, Vec<FeatureMap<F>>) {
        let x = image_tensor::<F>(&[image]);
        let (probs, feats, _) = self.forward_batch(&x, Mode::Eval, true);
        let map = probs_to_map(&probs, 0);
        let feats = feats.into_iter().map(|f| f.index_axis_move(Axis(0), 0)).collect();
        (map, feats)
    }

    /// Inference without feature retention.
    pub fn predict(&self, image: &GrayImage) -> ProbabilityMap {
        let x = image_tensor::<F>(&[image]);
        let (probs, _, _) = self.forward_batch(&x, Mode::Eval, false);
        probs_to_map(&probs, 0)
    }

    pub fn parameter_count(&self) -> usize {
        Module::parameter_count(self)
    }
}

/// Stacks images into a `[n, 1, h, w]` tensor; all shapes must agree.
pub fn image_tensor<F: Real>(images: &[&GrayImage]) -> Array4<F> {
    let (h, w) = images[0].shape();
    let mut t = Array4::<F>::zeros((images.len(), 1, h, w));
    for (b, img) in images.iter().enumerate() {
        assert_eq!(img.shape(), (h, w), "batch images must share a shape");
        for ((y, x), &v) in img.pixels().indexed_iter() {
            t[[b, 0, y, x]] = F::lit(v);
        }
    }
    t
}

/// Extracts image `b` of a `[n, 1, h, w]` probability tensor.
pub fn probs_to_map<F: Real>(probs: &Array4<F>, b: usize) -> ProbabilityMap {
    let plane = probs.index_axis(Axis(0), b).index_axis(Axis(0), 0).mapv(|v| v.as_f64().clamp(0.0, 1.0));
    ProbabilityMap::new(plane).expect("sigmoid output lies in [0,1]")
}

impl<F: Real> Module<F> for PlayerNetwork<F> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.conv.params(&child(prefix, &format!("layers.{i}.conv")), out);
            l.bn.params(&child(prefix, &format!("layers.{i}.bn")), out);
        }
        self.head.params(&child(prefix, "head"), out);
        for (j, m) in self.mims.iter().enumerate() {
            m.params(&child(prefix, &format!("mim.{j}")), out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.conv.params_mut(&child(prefix, &format!("layers.{i}.conv")), out);
            l.bn.params_mut(&child(prefix, &format!("layers.{i}.bn")), out);
        }
        self.head.params_mut(&child(prefix, "head"), out);
        for (j, m) in self.mims.iter_mut().enumerate() {
            m.params_mut(&child(prefix, &format!("mim.{j}")), out);
        }
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a ndarray::ArrayD<F>)>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.bn.buffers(&child(prefix, &format!("layers.{i}.bn")), out);
        }
        for (j, m) in self.mims.iter().enumerate() {
            m.buffers(&child(prefix, &format!("mim.{j}")), out);
        }
    }

    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut ndarray::ArrayD<F>)>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.bn.buffers_mut(&child(prefix, &format!("layers.{i}.bn")), out);
        }
        for (j, m) in self.mims.iter_mut().enumerate() {
            m.buffers_mut(&child(prefix, &format!("mim.{j}")), out);
        }
    }
}

/// Copies every parameter and buffer of `src` into a network of another
/// precision with identical structure.
pub fn convert<A: Real, B: Real>(src: &PlayerNetwork<A>) -> PlayerNetwork<B> {
    let mut dst = PlayerNetwork::<B>::from_spec(src.spec.clone(), src.use_mim, src.seed);
    dst.variant = src.variant;
    for ((_, d), (_, s)) in dst.named_params_mut().into_iter().zip(src.named_params()) {
        d.value = s.value.mapv(|v| B::lit(v.as_f64()));
    }
    let mut bufs = Vec::new();
    src.buffers("", &mut bufs);
    let mut dbufs = Vec::new();
    dst.buffers_mut("", &mut dbufs);
    for ((_, d), (_, s)) in dbufs.into_iter().zip(bufs) {
        *d = s.mapv(|v| B::lit(v.as_f64()));
    }
    dst
}

/// Per-layer features as plain `C×H×W` arrays in double precision.
pub fn features_f64<F: Real>(features: &[FeatureMap<F>]) -> Vec<Array3<f64>> {
    features.iter().map(|f| f.mapv(|v| v.as_f64())).collect()
}
