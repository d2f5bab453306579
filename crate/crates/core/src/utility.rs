//! Player objectives: the two antagonistic player utilities, the shared game
//! term, the small-target area constraint, and standard overlap losses used
//! as alternative objectives.
//!
//! Every objective has a value-and-gradient form on flat pixel slices (used
//! by the trainer and the gradient checker) and a typed wrapper on maps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::image::{BinaryMask, ProbabilityMap};

/// Smoothing added to every denominator that can vanish.
pub const EPS: f64 = 1e-6;
pub const DEFAULT_SS_LAMBDA: f64 = 0.5;

/// Value and gradient with respect to each pixel probability.
pub type ValueGrad = (f64, Vec<f64>);

/// Missed-target fraction `FN / (TN + FN)` on soft counts.
pub fn fns_utility_grad(o: &[f64], g: &[f64]) -> ValueGrad {
    let n = o.len() as f64;
    let so: f64 = o.iter().sum();
    let fns: f64 = o.iter().zip(g).map(|(o, g)| (1.0 - o) * g).sum();
    let d = n - so + EPS;
    let grad = g.iter().map(|&gi| (fns - gi * d) / (d * d)).collect();
    (fns / d, grad)
}

/// False-discovery fraction `FP / (TP + FP)` on soft counts.
pub fn fps_utility_grad(o: &[f64], g: &[f64]) -> ValueGrad {
    let so: f64 = o.iter().sum();
    let fps: f64 = o.iter().zip(g).map(|(o, g)| o * (1.0 - g)).sum();
    let d = so + EPS;
    let grad = g.iter().map(|&gi| ((1.0 - gi) * d - fps) / (d * d)).collect();
    (fps / d, grad)
}

/// `‖(o1 − g) ⊙ (o2 − g)‖₂ / √N` with gradients for both maps.
pub fn game_utility_grad(o1: &[f64], o2: &[f64], g: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let n = o1.len() as f64;
    let e: Vec<f64> = o1.iter().zip(o2).zip(g).map(|((a, b), t)| (a - t) * (b - t)).collect();
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return (0.0, vec![0.0; o1.len()], vec![0.0; o1.len()]);
    }
    let scale = 1.0 / (norm * n.sqrt());
    let d1 = e.iter().zip(o2).zip(g).map(|((ei, b), t)| ei * (b - t) * scale).collect();
    let d2 = e.iter().zip(o1).zip(g).map(|((ei, a), t)| ei * (a - t) * scale).collect();
    (norm / n.sqrt(), d1, d2)
}

/// Mean predicted foreground mass.
pub fn area_grad(o: &[f64]) -> ValueGrad {
    let n = o.len() as f64;
    (o.iter().sum::<f64>() / n, vec![1.0 / n; o.len()])
}

pub fn dice_loss_grad(o: &[f64], g: &[f64]) -> ValueGrad {
    let s: f64 = o.iter().zip(g).map(|(a, b)| a * b).sum();
    let d = o.iter().sum::<f64>() + g.iter().sum::<f64>() + EPS;
    let grad = g.iter().map(|&gi| -2.0 * (gi * d - s) / (d * d)).collect();
    (1.0 - 2.0 * s / d, grad)
}

pub fn iou_loss_grad(o: &[f64], g: &[f64]) -> ValueGrad {
    let s: f64 = o.iter().zip(g).map(|(a, b)| a * b).sum();
    let u = o.iter().sum::<f64>() + g.iter().sum::<f64>() - s + EPS;
    let grad = g.iter().map(|&gi| -(gi * u - s * (1.0 - gi)) / (u * u)).collect();
    (1.0 - s / u, grad)
}

/// Squared-error sensitivity/specificity loss weighted by `lambda`.
pub fn ss_loss_grad(o: &[f64], g: &[f64], lambda: f64) -> ValueGrad {
    let pos = g.iter().sum::<f64>() + EPS;
    let neg = g.iter().map(|v| 1.0 - v).sum::<f64>() + EPS;
    let mut sens = 0.0;
    let mut spec = 0.0;
    let mut grad = Vec::with_capacity(o.len());
    for (&oi, &gi) in o.iter().zip(g) {
        let r = oi - gi;
        sens += r * r * gi;
        spec += r * r * (1.0 - gi);
        grad.push(2.0 * r * (lambda * gi / pos + (1.0 - lambda) * (1.0 - gi) / neg));
    }
    (lambda * sens / pos + (1.0 - lambda) * spec / neg, grad)
}

fn flat(o: &ProbabilityMap) -> Vec<f64> {
    o.pixels().iter().copied().collect()
}

fn flat_mask(g: &BinaryMask) -> Vec<f64> {
    g.pixels().iter().map(|&v| f64::from(v)).collect()
}

pub fn fns_player_utility(o1: &ProbabilityMap, g: &BinaryMask) -> Result<f64> {
    check_shape(g.shape(), o1.shape())?;
    Ok(fns_utility_grad(&flat(o1), &flat_mask(g)).0)
}

pub fn fps_player_utility(o2: &ProbabilityMap, g: &BinaryMask) -> Result<f64> {
    check_shape(g.shape(), o2.shape())?;
    Ok(fps_utility_grad(&flat(o2), &flat_mask(g)).0)
}

pub fn game_utility(o1: &ProbabilityMap, o2: &ProbabilityMap, g: &BinaryMask) -> Result<f64> {
    check_shape(g.shape(), o1.shape())?;
    check_shape(g.shape(), o2.shape())?;
    Ok(game_utility_grad(&flat(o1), &flat(o2), &flat_mask(g)).0)
}

pub fn area_constraint(o: &ProbabilityMap) -> f64 {
    area_grad(&flat(o)).0
}

/// Which utility terms enter the totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilityComponents {
    pub player: bool,
    pub game: bool,
    pub area: bool,
}

impl UtilityComponents {
    pub const ALL: Self = Self { player: true, game: true, area: true };
}

impl Default for UtilityComponents {
    fn default() -> Self {
        Self::ALL
    }
}

impl fmt::Display for UtilityComponents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [(self.player, "U"), (self.area, "A"), (self.game, "G")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, s)| *s)
            .collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for UtilityComponents {
    type Err = Error;

    /// Accepts `U`, `U+A`, `U+G`, `U+A+G` and so on (also `,` separated).
    fn from_str(s: &str) -> Result<Self> {
        let mut c = Self { player: false, game: false, area: false };
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_uppercase().as_str() {
                "U" => c.player = true,
                "G" => c.game = true,
                "A" => c.area = true,
                other => return Err(Error::Config(format!("unknown utility component `{other}`"))),
            }
        }
        if !(c.player || c.game || c.area) {
            return Err(Error::Config(format!("empty utility component set `{s}`")));
        }
        Ok(c)
    }
}

/// Whether each player minimizes its own total or both minimize one
/// shared sum of every term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    PerPlayer,
    Shared,
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "per-player" | "per_player" | "perplayer" => Ok(Objective::PerPlayer),
            "shared" => Ok(Objective::Shared),
            other => Err(Error::Config(format!("unknown objective `{other}`"))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::PerPlayer => "per-player",
            Objective::Shared => "shared",
        })
    }
}

/// Utility values for one image (or a mean over images). Disabled
/// components are recorded as 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UtilityBundle {
    pub u1: f64,
    pub u2: f64,
    pub g: f64,
    pub a1: f64,
    pub a2: f64,
    pub phi1: f64,
    pub phi2: f64,
}

impl UtilityBundle {
    pub fn mean(items: &[UtilityBundle]) -> UtilityBundle {
        if items.is_empty() {
            return UtilityBundle::default();
        }
        let k = items.len() as f64;
        let mut m = UtilityBundle::default();
        for b in items {
            m.u1 += b.u1;
            m.u2 += b.u2;
            m.g += b.g;
            m.a1 += b.a1;
            m.a2 += b.a2;
            m.phi1 += b.phi1;
            m.phi2 += b.phi2;
        }
        m.u1 /= k;
        m.u2 /= k;
        m.g /= k;
        m.a1 /= k;
        m.a2 /= k;
        m.phi1 /= k;
        m.phi2 /= k;
        m
    }

    pub fn is_finite(&self) -> bool {
        [self.u1, self.u2, self.g, self.a1, self.a2, self.phi1, self.phi2].iter().all(|v| v.is_finite())
    }
}

/// Values and per-pixel gradients of both players' totals for one image.
#[derive(Debug, Clone)]
pub struct GameGradients {
    pub bundle: UtilityBundle,
    /// `∂phi1/∂o1`
    pub d_o1: Vec<f64>,
    /// `∂phi2/∂o2`
    pub d_o2: Vec<f64>,
}

fn axpy(acc: &mut [f64], k: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += k * v;
    }
}

/// Totals on flat slices. Each player receives the gradient of its own
/// total with respect to its own map; the game term couples both.
pub fn game_gradients(o1: &[f64], o2: &[f64], g: &[f64], comps: UtilityComponents, objective: Objective) -> GameGradients {
    let n = o1.len();
    let w = |on: bool| if on { 1.0 } else { 0.0 };
    let (wu, wg, wa) = (w(comps.player), w(comps.game), w(comps.area));
    let (u1, du1) = fns_utility_grad(o1, g);
    let (u2, du2) = fps_utility_grad(o2, g);
    let (gv, dg1, dg2) = game_utility_grad(o1, o2, g);
    let (a1, da1) = area_grad(o1);
    let (a2, da2) = area_grad(o2);
    let bundle = {
        let (u1, u2, gv, a1, a2) = (wu * u1, wu * u2, wg * gv, wa * a1, wa * a2);
        let (phi1, phi2) = match objective {
            Objective::PerPlayer => (u1 + gv + a1, u2 + gv + a2),
            Objective::Shared => {
                let total = u1 + u2 + gv + a1 + a2;
                (total, total)
            }
        };
        UtilityBundle { u1, u2, g: gv, a1, a2, phi1, phi2 }
    };
    // the terms of the other player do not depend on this player's map, so
    // both objectives yield the same per-player gradients
    let mut d_o1 = vec![0.0; n];
    axpy(&mut d_o1, wu, &du1);
    axpy(&mut d_o1, wg, &dg1);
    axpy(&mut d_o1, wa, &da1);
    let mut d_o2 = vec![0.0; n];
    axpy(&mut d_o2, wu, &du2);
    axpy(&mut d_o2, wg, &dg2);
    axpy(&mut d_o2, wa, &da2);
    GameGradients { bundle, d_o1, d_o2 }
}

/// All components with per-player totals.
pub fn total_utility(o1: &ProbabilityMap, o2: &ProbabilityMap, g: &BinaryMask) -> Result<UtilityBundle> {
    total_utility_with(o1, o2, g, UtilityComponents::ALL, Objective::PerPlayer)
}

pub fn total_utility_with(
    o1: &ProbabilityMap,
    o2: &ProbabilityMap,
    g: &BinaryMask,
    comps: UtilityComponents,
    objective: Objective,
) -> Result<UtilityBundle> {
    check_shape(g.shape(), o1.shape())?;
    check_shape(g.shape(), o2.shape())?;
    Ok(game_gradients(&flat(o1), &flat(o2), &flat_mask(g), comps, objective).bundle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Game,
    Dice,
    Iou,
    Ss,
}

/// Objective of one player: the game utilities, or a standalone overlap
/// loss on its own map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub ss_lambda: f64,
}

impl LossSpec {
    pub const GAME: Self = Self { kind: LossKind::Game, ss_lambda: DEFAULT_SS_LAMBDA };

    pub fn new(kind: LossKind) -> Self {
        Self { kind, ss_lambda: DEFAULT_SS_LAMBDA }
    }
}

impl Default for LossSpec {
    fn default() -> Self {
        Self::GAME
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LossKind::Game => f.write_str("game"),
            LossKind::Dice => f.write_str("dice"),
            LossKind::Iou => f.write_str("iou"),
            LossKind::Ss if self.ss_lambda == DEFAULT_SS_LAMBDA => f.write_str("ss"),
            LossKind::Ss => write!(f, "ss:{}", self.ss_lambda),
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    /// `game`, `dice`, `iou`, `ss` or `ss:<lambda>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.to_string(), Some(a.to_string())),
            None => (s.clone(), None),
        };
        let kind = match head.as_str() {
            "game" => LossKind::Game,
            "dice" => LossKind::Dice,
            "iou" => LossKind::Iou,
            "ss" => LossKind::Ss,
            other => return Err(Error::Config(format!("unknown loss kind `{other}`"))),
        };
        let mut spec = LossSpec::new(kind);
        if let Some(a) = arg {
            if kind != LossKind::Ss {
                return Err(Error::Config(format!("loss `{head}` takes no parameter")));
            }
            let lambda: f64 = a.parse().map_err(|_| Error::Config(format!("invalid ss lambda `{a}`")))?;
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::Config(format!("ss lambda {lambda} outside [0,1]")));
            }
            spec.ss_lambda = lambda;
        }
        Ok(spec)
    }
}

/// Overlap-loss value and gradient on flat slices. The game kind is not a
/// standalone loss and yields a config error.
pub fn combined_loss_grad(spec: LossSpec, o: &[f64], g: &[f64]) -> Result<ValueGrad> {
    match spec.kind {
        LossKind::Dice => Ok(dice_loss_grad(o, g)),
        LossKind::Iou => Ok(iou_loss_grad(o, g)),
        LossKind::Ss => Ok(ss_loss_grad(o, g, spec.ss_lambda)),
        LossKind::Game => Err(Error::Config("the game objective needs both players' maps".into())),
    }
}

pub fn combined_loss(spec: LossSpec, o: &ProbabilityMap, g: &BinaryMask) -> Result<f64> {
    check_shape(g.shape(), o.shape())?;
    Ok(combined_loss_grad(spec, &flat(o), &flat_mask(g))?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::gradient_check;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pm(a: Array2<f64>) -> ProbabilityMap {
        ProbabilityMap::new(a).unwrap()
    }

    fn bm(a: Array2<u8>) -> BinaryMask {
        BinaryMask::new(a).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    #[test]
    fn fns_examples() {
        let g = bm(array![[1, 0], [0, 1]]);
        assert_eq!(fns_player_utility(&ProbabilityMap::from_mask(&g), &g).unwrap(), 0.0);
        let zeros = ProbabilityMap::filled((2, 2), 0.0).unwrap();
        assert!(close(fns_player_utility(&zeros, &g).unwrap(), 0.5, 1e-6));
        let u = fns_player_utility(&pm(array![[0.9, 0.2]]), &bm(array![[1, 0]])).unwrap();
        assert!(close(u, 0.1 / 0.9, 1e-6));
    }

    #[test]
    fn fps_examples() {
        let g = bm(array![[1, 0], [0, 0]]);
        assert_eq!(fps_player_utility(&ProbabilityMap::from_mask(&g), &g).unwrap(), 0.0);
        let ones = ProbabilityMap::filled((2, 2), 1.0).unwrap();
        assert!(close(fps_player_utility(&ones, &g).unwrap(), 0.75, 1e-6));
        let u = fps_player_utility(&pm(array![[0.9, 0.2]]), &bm(array![[1, 0]])).unwrap();
        assert!(close(u, 0.2 / 1.1, 1e-6));
    }

    #[test]
    fn game_examples() {
        let g = bm(array![[1, 0], [0, 0]]);
        let o2 = pm(array![[0.3, 0.8], [0.1, 0.5]]);
        assert_eq!(game_utility(&ProbabilityMap::from_mask(&g), &o2, &g).unwrap(), 0.0);
        let a = pm(array![[1.0, 1.0], [0.0, 0.0]]);
        let b = pm(array![[1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(game_utility(&a, &b, &g).unwrap(), 0.0);
        let o = pm(array![[0.5, 0.0]]);
        let v = game_utility(&o, &o, &bm(array![[0, 0]])).unwrap();
        assert!(close(v, 0.25 / 2f64.sqrt(), 1e-12));
    }

    #[test]
    fn area_examples() {
        assert_eq!(area_constraint(&ProbabilityMap::filled((3, 3), 1.0).unwrap()), 1.0);
        assert_eq!(area_constraint(&ProbabilityMap::filled((3, 3), 0.0).unwrap()), 0.0);
        assert!(close(area_constraint(&pm(array![[0.2, 0.6], [0.0, 0.2]])), 0.25, 1e-15));
    }

    #[test]
    fn totals_at_truth_keep_only_area() {
        let g = bm(array![[1, 0, 0], [0, 0, 1]]);
        let o = ProbabilityMap::from_mask(&g);
        let b = total_utility(&o, &o, &g).unwrap();
        let a = 2.0 / 6.0;
        assert_eq!((b.u1, b.u2, b.g), (0.0, 0.0, 0.0));
        assert!(close(b.phi1, a, 1e-15) && close(b.phi2, a, 1e-15));
    }

    fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (Array2<f64>, Array2<f64>, Array2<u8>) {
        let o1 = Array2::from_shape_fn((n, n), |_| rng.random_range(0.05..0.95));
        let o2 = Array2::from_shape_fn((n, n), |_| rng.random_range(0.05..0.95));
        let g = Array2::from_shape_fn((n, n), |_| u8::from(rng.random_bool(0.2)));
        (o1, o2, g)
    }

    /// Single-pass re-implementation of all four terms.
    fn monolithic(o1: &Array2<f64>, o2: &Array2<f64>, g: &Array2<u8>) -> (f64, f64) {
        let (mut fn1, mut tn1) = (0.0, 0.0);
        let (mut tp2, mut fp2) = (0.0, 0.0);
        let (mut e2, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let mut n = 0.0;
        for ((&a, &b), &t) in o1.iter().zip(o2.iter()).zip(g.iter()) {
            let t = t as f64;
            fn1 += (1.0 - a) * t;
            tn1 += (1.0 - a) * (1.0 - t);
            tp2 += b * t;
            fp2 += b * (1.0 - t);
            e2 += ((a - t) * (b - t)).powi(2);
            s1 += a;
            s2 += b;
            n += 1.0;
        }
        let gv = e2.sqrt() / f64::sqrt(n);
        (fn1 / (tn1 + fn1 + EPS) + gv + s1 / n, fp2 / (tp2 + fp2 + EPS) + gv + s2 / n)
    }

    #[test]
    fn totals_match_monolithic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let (o1, o2, g) = random_pair(&mut rng, 8);
            let b = total_utility(&pm(o1.clone()), &pm(o2.clone()), &bm(g.clone())).unwrap();
            let (p1, p2) = monolithic(&o1, &o2, &g);
            assert!(close(b.phi1, p1, 1e-12) && close(b.phi2, p2, 1e-12));
            assert!(close(b.phi1, b.u1 + b.g + b.a1, 1e-15));
        }
    }

    #[test]
    fn gating_and_shared_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let (o1, o2, g) = random_pair(&mut rng, 6);
        let (o1, o2, g) = (pm(o1), pm(o2), bm(g));
        let only_u = total_utility_with(&o1, &o2, &g, "U".parse().unwrap(), Objective::PerPlayer).unwrap();
        assert_eq!((only_u.g, only_u.a1, only_u.a2), (0.0, 0.0, 0.0));
        assert_eq!(only_u.phi1, only_u.u1);
        let full = total_utility(&o1, &o2, &g).unwrap();
        let shared = total_utility_with(&o1, &o2, &g, UtilityComponents::ALL, Objective::Shared).unwrap();
        assert!(close(shared.phi1, full.u1 + full.u2 + full.g + full.a1 + full.a2, 1e-15));
        assert_eq!(shared.phi1, shared.phi2);
    }

    #[test]
    fn component_strings() {
        for s in ["U", "U+A", "U+G", "U+A+G"] {
            assert_eq!(s.parse::<UtilityComponents>().unwrap().to_string(), s);
        }
        assert_eq!("g,u".parse::<UtilityComponents>().unwrap().to_string(), "U+G");
        assert!("U+X".parse::<UtilityComponents>().is_err());
        assert!("".parse::<UtilityComponents>().is_err());
    }

    #[test]
    fn loss_examples() {
        let g = bm(array![[1, 0], [0, 1]]);
        let o = ProbabilityMap::from_mask(&g);
        for kind in [LossKind::Dice, LossKind::Iou, LossKind::Ss] {
            assert!(combined_loss(LossSpec::new(kind), &o, &g).unwrap().abs() < 1e-6);
        }
        let zeros = ProbabilityMap::filled((2, 2), 0.0).unwrap();
        assert!(close(combined_loss(LossSpec::new(LossKind::Dice), &zeros, &g).unwrap(), 1.0, 1e-12));
        assert!(close(combined_loss(LossSpec::new(LossKind::Iou), &zeros, &g).unwrap(), 1.0, 1e-12));
        let ss = combined_loss(LossSpec::new(LossKind::Ss), &pm(array![[0.5, 0.5]]), &bm(array![[1, 0]])).unwrap();
        assert!(close(ss, 0.25, 1e-6));
        assert!(combined_loss(LossSpec::GAME, &zeros, &g).is_err());
    }

    #[test]
    fn loss_spec_strings() {
        assert_eq!("dice".parse::<LossSpec>().unwrap().kind, LossKind::Dice);
        assert_eq!("ss:0.3".parse::<LossSpec>().unwrap().ss_lambda, 0.3);
        assert_eq!("ss".parse::<LossSpec>().unwrap().to_string(), "ss");
        assert!("focal".parse::<LossSpec>().is_err());
        assert!("dice:0.2".parse::<LossSpec>().is_err());
        assert!("ss:2".parse::<LossSpec>().is_err());
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (o1, o2, g) = random_pair(&mut rng, 8);
        let o1: Vec<f64> = o1.iter().copied().collect();
        let o2: Vec<f64> = o2.iter().copied().collect();
        let g: Vec<f64> = g.iter().map(|&v| v as f64).collect();
        let h = 1e-5;
        assert!(gradient_check(&o1, h, |o| fns_utility_grad(o, &g)) < 1e-4);
        assert!(gradient_check(&o2, h, |o| fps_utility_grad(o, &g)) < 1e-4);
        assert!(gradient_check(&o1, h, area_grad) < 1e-4);
        assert!(gradient_check(&o1, h, |o| { let (v, d, _) = game_utility_grad(o, &o2, &g); (v, d) }) < 1e-4);
        assert!(gradient_check(&o2, h, |o| { let (v, _, d) = game_utility_grad(&o1, o, &g); (v, d) }) < 1e-4);
        assert!(gradient_check(&o1, h, |o| dice_loss_grad(o, &g)) < 1e-4);
        assert!(gradient_check(&o1, h, |o| iou_loss_grad(o, &g)) < 1e-4);
        assert!(gradient_check(&o1, h, |o| ss_loss_grad(o, &g, 0.5)) < 1e-4);
        let comps = UtilityComponents::ALL;
        assert!(gradient_check(&o1, h, |o| {
            let r = game_gradients(o, &o2, &g, comps, Objective::PerPlayer);
            (r.bundle.phi1, r.d_o1)
        }) < 1e-4);
        assert!(gradient_check(&o2, h, |o| {
            let r = game_gradients(&o1, o, &g, comps, Objective::Shared);
            (r.bundle.phi2, r.d_o2)
        }) < 1e-4);
    }

    fn map_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<u8>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(0.0f64..=1.0, n),
                prop::collection::vec(0.0f64..=1.0, n),
                prop::collection::vec(0u8..=1, n),
            )
        })
    }

    proptest! {
        #[test]
        fn components_stay_in_unit_range((o1, o2, g) in map_strategy()) {
            let n = o1.len();
            let shape = (1, n);
            let b = total_utility(
                &pm(Array2::from_shape_vec(shape, o1).unwrap()),
                &pm(Array2::from_shape_vec(shape, o2).unwrap()),
                &bm(Array2::from_shape_vec(shape, g).unwrap()),
            ).unwrap();
            for v in [b.u1, b.u2, b.g, b.a1, b.a2] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn game_term_is_symmetric((o1, o2, g) in map_strategy()) {
            let gf: Vec<f64> = g.iter().map(|&v| v as f64).collect();
            prop_assert_eq!(game_utility_grad(&o1, &o2, &gf).0, game_utility_grad(&o2, &o1, &gf).0);
        }

        #[test]
        fn antagonism_along_constant_maps(k in 1usize..10, extra in 0usize..20, t0 in 0.0f64..1.0, dt in 0.0f64..1.0) {
            let n = k + extra;
            let g: Vec<f64> = (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect();
            let t1 = (t0 + dt).min(1.0);
            let u1 = |t: f64| fns_utility_grad(&vec![t; n], &g).0;
            let u2 = |t: f64| fps_utility_grad(&vec![t; n], &g).0;
            prop_assert!(u1(t1) <= u1(t0) + 1e-9);
            prop_assert!(u2(t1) >= u2(t0) - 1e-9);
        }
    }
}
