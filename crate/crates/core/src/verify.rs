//! Self-checks run by `pixelgame verify`: each compares a library routine
//! against an independent oracle (brute force, hand-evaluated values, finite
//! differences or closed-form counts).

use std::fmt;

use ndarray::{Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::{image_tensor, receptive_field, FdcnSpec, PlayerNetwork, Variant};
use crate::gradcheck::{gradient_check, max_relative_error, REL_FLOOR};
use crate::image::{BinaryMask, GrayImage, ProbabilityMap};
use crate::metrics::{confusion_counts, metrics, soft_confusion_counts};
use crate::mim::{channel_gate, gmp_attention, mim_forward, spatial_channel_attention, spatial_gate, MimBlock};
use crate::nn::{Mode, Module, BN_EPS, LEAKY_SLOPE};
use crate::utility::{
    area_grad, dice_loss_grad, fns_utility_grad, fps_utility_grad, game_gradients, game_utility_grad, iou_loss_grad, ss_loss_grad,
    Objective, UtilityComponents, DEFAULT_SS_LAMBDA,
};

/// Finite-difference step for the utility checks.
pub const UTILITY_STEP: f64 = 1e-5;
/// Maximum relative error accepted for utility gradients.
pub const UTILITY_TOLERANCE: f64 = 1e-4;
/// Finite-difference step and accepted relative error for network weights.
pub const NETWORK_STEP: f64 = 1e-6;
pub const NETWORK_TOLERANCE: f64 = 1e-3;
pub const PARAMETER_BAND: (usize, usize) = (1_500_000, 1_900_000);

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub fn run_all() -> Vec<Check> {
    vec![
        metric_oracle(),
        mim_hand_oracle(),
        mim_loop_oracle(),
        mim_normalization(),
        utility_gradients(),
        mim_gradients(),
        stub_gradients(),
        network_gradients(),
        receptive_fields(),
        parameter_count(),
    ]
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

fn mask3(bits: u32) -> BinaryMask {
    BinaryMask::from_fn((3, 3), |y, x| bits >> (y * 3 + x) & 1 == 1)
}

/// Every pair of 3×3 binary masks: hard counts, soft counts and the four
/// metrics against direct counting.
pub fn metric_oracle() -> Check {
    let masks: Vec<BinaryMask> = (0..512).map(mask3).collect();
    let mut bad = 0usize;
    for (pi, pred) in masks.iter().enumerate() {
        let prob = ProbabilityMap::from_mask(pred);
        for (gi, gt) in masks.iter().enumerate() {
            let (mut tp, mut fp, mut tn, mut fneg) = (0u32, 0u32, 0u32, 0u32);
            for k in 0..9 {
                match (pi >> k & 1, gi >> k & 1) {
                    (1, 1) => tp += 1,
                    (1, 0) => fp += 1,
                    (0, 0) => tn += 1,
                    _ => fneg += 1,
                }
            }
            let c = confusion_counts(pred, gt).expect("same shape");
            let s = soft_confusion_counts(&prob, gt).expect("same shape");
            let expect = [tp, fp, tn, fneg].map(f64::from);
            let hard_ok = [c.tps, c.fps, c.tns, c.fns] == expect && c.n == 9.0;
            let soft_ok = [s.tps, s.fps, s.tns, s.fns] == expect;
            let (tp, fp, fneg) = (f64::from(tp), f64::from(fp), f64::from(fneg));
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
            let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            let iou = if tp + fp + fneg > 0.0 { tp / (tp + fp + fneg) } else { 0.0 };
            let m = metrics(&c);
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
            let metric_ok = close(m.precision, p) && close(m.recall, r) && close(m.f1, f1) && close(m.iou, iou);
            if !(hard_ok && soft_ok && metric_ok) {
                bad += 1;
            }
        }
    }
    Check::new("metric brute force", bad == 0, format!("{} mask pairs, {bad} mismatches", 512 * 512))
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// A fixed 2-channel 2×2 map through a block with zero weights: uniform
/// spatial and channel softmax, so every stage has a closed form.
pub fn mim_hand_oracle() -> Check {
    let x = Array3::from_shape_vec((2, 2, 2), vec![1.0, 2.0, 3.0, 4.0, 0.0, -1.0, 2.0, 0.5]).expect("shape");
    let p = MimBlock::<f64>::zeroed(2);
    let v1 = spatial_channel_attention(&x, &p);
    let v2 = gmp_attention(&x);
    let m2 = channel_gate(&v1, &v2, &p);
    let m3 = spatial_gate(&x);
    let z = mim_forward(&x, &p);
    // channel means, sigmoid of channel maxima, 1/C, sigmoid of pixel maxima
    let v1_hand = [2.5, 0.375];
    let v2_hand = [0.9820137900379085, 0.8807970779778823];
    let m3_hand = [0.7310585786300049, 0.8807970779778823, 0.9525741268224334, 0.9820137900379085];
    let z_hand = [
        1.2310585786300049,
        2.7615941559557646,
        4.3577223804673,
        5.928055160151634,
        0.0,
        -1.3807970779778823,
        2.905148253644867,
        0.7410068950189543,
    ];
    let mut err = 0.0f64;
    for (a, b) in v1.iter().zip(v1_hand) {
        err = err.max((a - b).abs());
    }
    for (a, b) in v2.iter().zip(v2_hand) {
        err = err.max((a - b).abs());
    }
    for a in &m2 {
        err = err.max((a - 0.5).abs());
    }
    for (a, b) in m3.iter().zip(m3_hand) {
        err = err.max((a - b).abs());
    }
    for (a, b) in z.iter().zip(z_hand) {
        err = err.max((a - b).abs());
    }
    Check::new("modulation hand oracle", err < 1e-12, format!("2x2x2 input, max abs error {err:.3e}"))
}

fn bn_eval(v: f64, bn: &crate::nn::BatchNorm<f64>, c: usize) -> f64 {
    (v - bn.running_mean[c]) / (bn.running_var[c] + BN_EPS).sqrt() * bn.gamma.value[c] + bn.beta.value[c]
}

fn lrelu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Straight-line inference of a modulation block with explicit loops.
fn mim_by_loops(x: &Array3<f64>, p: &MimBlock<f64>) -> Array3<f64> {
    let (c, h, w) = x.dim();
    let hid = p.pw_squeeze.out_channels();
    let ws = &p.pw_spatial.weight.value;
    let mut y = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for k in 0..c {
                acc += ws[[0, k, 0, 0]] * x[[k, i, j]];
            }
            y.push(lrelu(bn_eval(acc, &p.bn_spatial, 0)));
        }
    }
    let s = softmax(&y);
    let mut m1 = vec![0.0; 2 * c];
    for k in 0..c {
        let mut pooled = 0.0;
        let mut mx = f64::NEG_INFINITY;
        for i in 0..h {
            for j in 0..w {
                pooled += x[[k, i, j]] * s[i * w + j];
                mx = mx.max(x[[k, i, j]]);
            }
        }
        m1[k] = pooled;
        m1[c + k] = sig(mx);
    }
    let wq = &p.pw_squeeze.weight.value;
    let hidden: Vec<f64> = (0..hid)
        .map(|q| lrelu(bn_eval((0..2 * c).map(|k| wq[[q, k, 0, 0]] * m1[k]).sum(), &p.bn_squeeze, q)))
        .collect();
    let we = &p.pw_excite.weight.value;
    let be = &p.pw_excite.bias.as_ref().expect("excite bias").value;
    let logits: Vec<f64> = (0..c).map(|k| be[k] + (0..hid).map(|q| we[[k, q, 0, 0]] * hidden[q]).sum::<f64>()).collect();
    let m2 = softmax(&logits);
    Array3::from_shape_fn((c, h, w), |(k, i, j)| {
        let cmax = (0..c).map(|q| x[[q, i, j]]).fold(f64::NEG_INFINITY, f64::max);
        (m2[k] + sig(cmax)) * x[[k, i, j]]
    })
}

fn randomize_bn(bn: &mut crate::nn::BatchNorm<f64>, rng: &mut ChaCha8Rng) {
    bn.gamma.value.mapv_inplace(|_| rng.random_range(0.5..1.5));
    bn.beta.value.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    bn.running_mean.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    bn.running_var.mapv_inplace(|_| rng.random_range(0.5..2.0));
}

/// Random blocks with non-trivial normalization state against loops.
pub fn mim_loop_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut err = 0.0f64;
    for trial in 0..20 {
        let c = 2 + trial % 7;
        let (h, w) = (rng.random_range(1..7), rng.random_range(1..7));
        let mut p = MimBlock::<f64>::random(c, &mut rng);
        randomize_bn(&mut p.bn_spatial, &mut rng);
        randomize_bn(&mut p.bn_squeeze, &mut rng);
        if let Some(b) = p.pw_excite.bias.as_mut() {
            b.value.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let x = Array3::from_shape_fn((c, h, w), |_| rng.random_range(-2.0..2.0));
        let got = mim_forward(&x, &p);
        let want = mim_by_loops(&x, &p);
        for (a, b) in got.iter().zip(&want) {
            err = err.max((a - b).abs());
        }
    }
    Check::new("modulation loop oracle", err < 1e-10, format!("20 random blocks, max abs error {err:.3e}"))
}

/// Gate ranges over 1000 random feature maps.
pub fn mim_normalization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst_sum = 0.0f64;
    let mut in_range = true;
    for _ in 0..1000 {
        let c = rng.random_range(1..9);
        let (h, w) = (rng.random_range(1..6), rng.random_range(1..6));
        let p = MimBlock::<f64>::random(c, &mut rng);
        let x = Array3::from_shape_fn((c, h, w), |_| rng.random_range(-3.0..3.0));
        let v1 = spatial_channel_attention(&x, &p);
        let v2 = gmp_attention(&x);
        let m2 = channel_gate(&v1, &v2, &p);
        let m3 = spatial_gate(&x);
        worst_sum = worst_sum.max((m2.sum() - 1.0).abs());
        in_range &= m2.iter().all(|&v| v >= 0.0);
        in_range &= v2.iter().chain(m3.iter()).all(|&v| v > 0.0 && v < 1.0);
    }
    Check::new(
        "modulation gate ranges",
        in_range && worst_sum < 1e-9,
        format!("1000 inputs, max |sum(m2) - 1| {worst_sum:.3e}, sigmoid outputs in (0,1): {in_range}"),
    )
}

fn random_maps(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let o1 = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
    let o2 = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
    let g = (0..n).map(|_| if rng.random_bool(0.2) { 1.0 } else { 0.0 }).collect();
    (o1, o2, g)
}

/// Finite differences of every objective on random 8×8 maps.
pub fn utility_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut worst = 0.0f64;
    let h = UTILITY_STEP;
    for _ in 0..5 {
        let (o1, o2, g) = random_maps(&mut rng, 64);
        worst = worst.max(gradient_check(&o1, h, |o| fns_utility_grad(o, &g)));
        worst = worst.max(gradient_check(&o2, h, |o| fps_utility_grad(o, &g)));
        worst = worst.max(gradient_check(&o1, h, |o| {
            let (v, d1, _) = game_utility_grad(o, &o2, &g);
            (v, d1)
        }));
        worst = worst.max(gradient_check(&o2, h, |o| {
            let (v, _, d2) = game_utility_grad(&o1, o, &g);
            (v, d2)
        }));
        worst = worst.max(gradient_check(&o1, h, area_grad));
        worst = worst.max(gradient_check(&o1, h, |o| dice_loss_grad(o, &g)));
        worst = worst.max(gradient_check(&o1, h, |o| iou_loss_grad(o, &g)));
        worst = worst.max(gradient_check(&o1, h, |o| ss_loss_grad(o, &g, DEFAULT_SS_LAMBDA)));
        for objective in [Objective::PerPlayer, Objective::Shared] {
            let r = game_gradients(&o1, &o2, &g, UtilityComponents::ALL, objective);
            worst = worst.max(max_relative_error(&o1, &r.d_o1, None, h, |o| {
                game_gradients(o, &o2, &g, UtilityComponents::ALL, objective).bundle.phi1
            }));
            worst = worst.max(max_relative_error(&o2, &r.d_o2, None, h, |o| {
                game_gradients(&o1, o, &g, UtilityComponents::ALL, objective).bundle.phi2
            }));
        }
    }
    Check::new(
        "utility gradients",
        worst < UTILITY_TOLERANCE,
        format!("finite differences on 8x8 maps, max relative error {worst:.3e}"),
    )
}

/// Largest error between the analytic gradient and central differences of
/// `loss` on every coordinate of `x`, with differences below the roundoff
/// resolution of the quotient compared on an absolute scale.
fn resolved_error(x: &[f64], analytic: &[f64], h: f64, tol: f64, mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut work = x.to_vec();
    let resolution = 4.0 * f64::EPSILON * loss(x).abs().max(1.0) / h / tol;
    (0..x.len())
        .map(|i| {
            let numeric = crate::gradcheck::central_difference(&mut work, i, h, &mut loss);
            (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(resolution).max(REL_FLOOR)
        })
        .fold(0.0, f64::max)
}

/// Input and parameter gradients of a skip modulation block on a random
/// 8×8 batch against a random projection of its output.
pub fn mim_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let c = 8;
    let mut block = MimBlock::<f64>::random(c, &mut rng);
    if let Some(b) = block.pw_excite.bias.as_mut() {
        b.value.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    }
    let x = Array4::from_shape_fn((2, c, 8, 8), |_| rng.random_range(-1.0..1.0));
    let proj = Array4::from_shape_fn(x.raw_dim(), |_| rng.random_range(-1.0..1.0));
    let loss = |b: &MimBlock<f64>, x: &Array4<f64>| (&b.forward(x, Mode::Train).0 * &proj).sum();
    let mut work = block.clone();
    let (_, cache) = work.forward(&x, Mode::Train);
    let dx = work.backward(&cache, &proj);
    let h = UTILITY_STEP;
    let xs: Vec<f64> = x.iter().copied().collect();
    let mut worst = resolved_error(&xs, &dx.iter().copied().collect::<Vec<_>>(), h, UTILITY_TOLERANCE, |v| {
        loss(&block, &Array4::from_shape_vec(x.raw_dim(), v.to_vec()).expect("same shape"))
    });
    let params = work.named_params();
    for (t, (_, p)) in params.iter().enumerate() {
        let base: Vec<f64> = block.named_params()[t].1.value.iter().copied().collect();
        let grad: Vec<f64> = p.grad.iter().copied().collect();
        worst = worst.max(resolved_error(&base, &grad, h, UTILITY_TOLERANCE, |v| {
            let mut probe = block.clone();
            probe.named_params_mut()[t].1.value.iter_mut().zip(v).for_each(|(d, &s)| *d = s);
            loss(&probe, &x)
        }));
    }
    Check::new(
        "modulation gradients",
        worst < UTILITY_TOLERANCE,
        format!("input and all parameters on 2x{c}x8x8, max relative error {worst:.3e}"),
    )
}

/// Every parameter of a three-layer dilated stack (dilations 1, 2, 1) on an
/// 8×8 batch against a random projection of its output.
pub fn stub_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let spec = FdcnSpec::custom(&[1, 2, 1], 4).expect("valid stub");
    let mut net = PlayerNetwork::<f64>::from_spec(spec, true, 9);
    // move the head off its near-zero init so every path carries signal
    for (_, p) in net.named_params_mut() {
        p.value.mapv_inplace(|v| v + rng.random_range(-0.2..0.2));
    }
    let images: Vec<GrayImage> = (0..2)
        .map(|_| GrayImage::new(Array2::from_shape_fn((8, 8), |_| rng.random_range(0.0..1.0))).expect("in range"))
        .collect();
    let refs: Vec<&GrayImage> = images.iter().collect();
    let x: Array4<f64> = image_tensor(&refs);
    let proj = Array4::from_shape_fn((2, 1, 8, 8), |_| rng.random_range(-1.0..1.0));
    let loss = |n: &PlayerNetwork<f64>| (&n.forward_batch(&x, Mode::Train, false).0 * &proj).sum();
    let mut work = net.clone();
    let (_, _, cache) = work.forward_batch(&x, Mode::Train, false);
    work.backward(&cache.expect("training cache"), &proj);
    let h = UTILITY_STEP;
    let mut worst = 0.0f64;
    let mut count = 0;
    for (t, (_, p)) in work.named_params().iter().enumerate() {
        let base: Vec<f64> = net.named_params()[t].1.value.iter().copied().collect();
        let grad: Vec<f64> = p.grad.iter().copied().collect();
        count += base.len();
        worst = worst.max(resolved_error(&base, &grad, h, UTILITY_TOLERANCE, |v| {
            let mut probe = net.clone();
            probe.named_params_mut()[t].1.value.iter_mut().zip(v).for_each(|(d, &s)| *d = s);
            loss(&probe)
        }));
    }
    Check::new(
        "three-layer stack gradients",
        worst < UTILITY_TOLERANCE,
        format!("all {count} parameters on 2x1x8x8, max relative error {worst:.3e}"),
    )
}

/// Sum of the output against ten randomly drawn weights per variant on a
/// 16×16 batch of two, at reduced width.
pub fn network_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst = 0.0f64;
    for variant in [Variant::Fdcn9, Variant::Fdcn13] {
        let net = PlayerNetwork::<f64>::new(variant, 4, true, 7);
        let images: Vec<GrayImage> = (0..2)
            .map(|_| GrayImage::new(Array2::from_shape_fn((16, 16), |_| rng.random_range(0.0..1.0))).expect("in range"))
            .collect();
        let refs: Vec<&GrayImage> = images.iter().collect();
        let x: Array4<f64> = image_tensor(&refs);
        let mut work = net.clone();
        let (probs, _, cache) = work.forward_batch(&x, Mode::Train, false);
        work.backward(&cache.expect("training cache"), &Array4::ones(probs.raw_dim()));
        let flat: Vec<(usize, usize)> = net.named_params().iter().enumerate().flat_map(|(t, (_, p))| (0..p.len()).map(move |i| (t, i))).collect();
        for _ in 0..10 {
            let (t, i) = flat[rng.random_range(0..flat.len())];
            let analytic = work.named_params()[t].1.grad.iter().nth(i).copied().expect("index in range");
            let base = net.named_params()[t].1.value.iter().nth(i).copied().expect("index in range");
            let loss = |v: f64| {
                let mut probe = net.clone();
                if let Some(w) = probe.named_params_mut()[t].1.value.iter_mut().nth(i) {
                    *w = v;
                }
                probe.forward_batch(&x, Mode::Train, false).0.sum()
            };
            let numeric = (loss(base + NETWORK_STEP) - loss(base - NETWORK_STEP)) / (2.0 * NETWORK_STEP);
            // gradients below the roundoff resolution of the difference
            // quotient are compared on an absolute scale
            let resolution = 4.0 * f64::EPSILON * loss(base).abs() / NETWORK_STEP / NETWORK_TOLERANCE;
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(resolution).max(REL_FLOOR);
            worst = worst.max(err);
        }
    }
    Check::new(
        "network gradients",
        worst < NETWORK_TOLERANCE,
        format!("ten random weights per variant, max relative error {worst:.3e}"),
    )
}

/// Support of a chain of dilated 3-tap filters, grown one layer at a time.
fn support_width(dilations: &[usize]) -> usize {
    let mut lo = 0i64;
    let mut hi = 0i64;
    let mut reach = vec![true];
    for &d in dilations {
        let d = d as i64;
        let mut next = vec![false; reach.len() + 2 * d as usize];
        for (i, &on) in reach.iter().enumerate() {
            if on {
                for k in [-d, 0, d] {
                    next[(i as i64 + k + d) as usize] = true;
                }
            }
        }
        lo -= d;
        hi += d;
        reach = next;
    }
    debug_assert_eq!(reach.len() as i64, hi - lo + 1);
    reach.iter().filter(|&&v| v).count()
}

pub fn receptive_fields() -> Check {
    let r9 = receptive_field(&FdcnSpec::fdcn9());
    let r13 = receptive_field(&FdcnSpec::fdcn13());
    let s9 = support_width(&Variant::Fdcn9.dilations());
    let s13 = support_width(&Variant::Fdcn13.dilations());
    Check::new(
        "receptive fields",
        r9 == s9 && r13 == s13 && r9 == 93 && r13 == 381,
        format!("fdcn9 {r9} (support {s9}), fdcn13 {r13} (support {s13})"),
    )
}

/// Closed-form count of one player: convolutions, BN pairs, head and
/// modulation blocks.
fn closed_form_count(c: usize, depth: usize, skips: usize) -> usize {
    let conv = 9 * c + (depth - 1) * 9 * c * c;
    let bn = 2 * c * depth;
    let head = c + 1;
    let hidden = (c / 2).max(1);
    let mim = c + 2 + (2 * c * hidden + 2 * hidden) + (hidden * c + c);
    conv + bn + head + skips * mim
}

pub fn parameter_count() -> Check {
    let p1 = PlayerNetwork::<f32>::new(Variant::Fdcn9, Variant::Fdcn9.default_channels(), true, 0);
    let p2 = PlayerNetwork::<f32>::new(Variant::Fdcn13, Variant::Fdcn13.default_channels(), true, 0);
    let counted = p1.parameter_count() + p2.parameter_count();
    let closed = closed_form_count(128, 9, 3) + closed_form_count(64, 13, 5);
    let declared = p1.spec.parameter_count(true) + p2.spec.parameter_count(true);
    let ok = counted == closed && counted == declared && (PARAMETER_BAND.0..=PARAMETER_BAND.1).contains(&counted);
    Check::new(
        "parameter count",
        ok,
        format!(
            "{counted} trainable scalars (fdcn9 {}, fdcn13 {}), expected band [{}, {}], reference 1.69M",
            p1.parameter_count(),
            p2.parameter_count(),
            PARAMETER_BAND.0,
            PARAMETER_BAND.1
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        for c in run_all() {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn support_width_of_plain_stack() {
        assert_eq!(support_width(&[1, 1, 1]), 7);
        assert_eq!(support_width(&[1, 2]), 7);
    }

    #[test]
    fn closed_form_matches_known_totals() {
        assert_eq!(closed_form_count(128, 9, 3) + closed_form_count(64, 13, 5), 1_734_482);
    }
}
