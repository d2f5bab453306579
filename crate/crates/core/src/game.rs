//! Simultaneous training of the missed-target player (FDCN9) and the
//! false-alarm player (FDCN13), fusion of their maps, and plateau detection.

use std::fmt::Write as _;

use ndarray::Array4;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{image_tensor, probs_to_map, PlayerNetwork, Variant};
use crate::data::{augment, resize_pair, Dataset};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};
use crate::metrics::{score, MetricReport, DEFAULT_THRESHOLD};
use crate::nn::{Adam, Mode, Module};
use crate::real::Real;
use crate::utility::{combined_loss_grad, game_gradients, LossKind, LossSpec, Objective, UtilityBundle, UtilityComponents};

pub use crate::image::fuse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub crop: usize,
    pub resize: usize,
    pub threshold: f64,
    pub seed: u64,
    pub use_mim: bool,
    /// Objective of player 1 and player 2.
    pub loss_mode: [LossSpec; 2],
    pub utility_components: UtilityComponents,
    pub objective: Objective,
    /// Feature width of the FDCN9 player.
    pub channels1: usize,
    /// Feature width of the FDCN13 player.
    pub channels2: usize,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 8,
            epochs: 70,
            crop: 480,
            resize: 512,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            use_mim: true,
            loss_mode: [LossSpec::GAME; 2],
            utility_components: UtilityComponents::ALL,
            objective: Objective::PerPlayer,
            channels1: Variant::Fdcn9.default_channels(),
            channels2: Variant::Fdcn13.default_channels(),
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.crop == 0 || self.crop > self.resize {
            return bad(format!("crop {} must be in [1, resize = {}]", self.crop, self.resize));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0,1)", self.threshold));
        }
        if self.channels1 == 0 || self.channels2 == 0 {
            return bad("channel widths must be positive".into());
        }
        Ok(())
    }

    /// Initialization seeds of both players and the data-order seed.
    fn derived_seeds(&self) -> (u64, u64, u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (rng.next_u64(), rng.next_u64(), rng.next_u64())
    }
}

/// Per-source metrics of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SourceReports {
    pub player1: MetricReport,
    pub player2: MetricReport,
    pub fused: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the training images of the values seen during the epoch.
    pub utilities: UtilityBundle,
    pub validation: Option<SourceReports>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

pub const HISTORY_HEADER: &str = "epoch,u1,u2,g,a1,a2,phi1,phi2,\
p1_precision,p1_recall,p1_f1,p1_iou,\
p2_precision,p2_recall,p2_f1,p2_iou,\
fused_precision,fused_recall,fused_f1,fused_iou";

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn phi1(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.utilities.phi1).collect()
    }

    pub fn phi2(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.utilities.phi2).collect()
    }

    pub fn last_validation(&self) -> Option<SourceReports> {
        self.epochs.last().and_then(|e| e.validation)
    }

    /// Fixed-precision CSV; metrics are empty when no validation ran.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(HISTORY_HEADER);
        s.push('\n');
        for e in &self.epochs {
            let u = &e.utilities;
            let _ = write!(s, "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}", e.epoch, u.u1, u.u2, u.g, u.a1, u.a2, u.phi1, u.phi2);
            match &e.validation {
                Some(v) => {
                    for r in [&v.player1, &v.player2, &v.fused] {
                        let _ = write!(s, ",{:.6},{:.6},{:.6},{:.6}", r.precision, r.recall, r.f1, r.iou);
                    }
                }
                None => s.push_str(&",".repeat(12)),
            }
            s.push('\n');
        }
        s
    }
}

/// True iff over the trailing `max(2, ceil(window·len))` epochs (capped at
/// the history length) the relative range `(max − min) / mean` of both
/// totals is below `tol`.
pub fn equilibrium_reached(history: &TrainHistory, window: f64, tol: f64) -> bool {
    let len = history.len();
    if len == 0 || !(window > 0.0 && window <= 1.0) || !(tol > 0.0) {
        return false;
    }
    let k = ((window * len as f64).ceil() as usize).max(2).min(len);
    let stable = |series: Vec<f64>| {
        let tail = &series[len - k..];
        let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = tail.iter().sum::<f64>() / k as f64;
        if max == min {
            return true;
        }
        mean.abs() > 0.0 && (max - min) / mean.abs() < tol
    };
    stable(history.phi1()) && stable(history.phi2())
}

#[derive(Debug, Clone)]
pub struct TrainedGame<F = f32> {
    pub player1: PlayerNetwork<F>,
    pub player2: PlayerNetwork<F>,
    pub config: GameConfig,
    pub history: TrainHistory,
}

impl<F: Real> TrainedGame<F> {
    /// Untrained players built from `config`.
    pub fn initial(config: &GameConfig) -> Result<Self> {
        config.validate()?;
        let (s1, s2, _) = config.derived_seeds();
        Ok(Self {
            player1: PlayerNetwork::new(Variant::Fdcn9, config.channels1, config.use_mim, s1),
            player2: PlayerNetwork::new(Variant::Fdcn13, config.channels2, config.use_mim, s2),
            config: config.clone(),
            history: TrainHistory::default(),
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.player1.parameter_count() + self.player2.parameter_count()
    }
}

/// A batch ready for the players: `[n, 1, h, w]` input and flat masks.
struct Batch<F> {
    x: Array4<F>,
    masks: Vec<Vec<f64>>,
}

fn make_batch<F: Real>(pairs: &[(GrayImage, BinaryMask)]) -> Batch<F> {
    let refs: Vec<&GrayImage> = pairs.iter().map(|p| &p.0).collect();
    Batch { x: image_tensor(&refs), masks: pairs.iter().map(|p| p.1.pixels().iter().map(|&v| f64::from(v)).collect()).collect() }
}

fn plane<F: Real>(probs: &Array4<F>, b: usize) -> Vec<f64> {
    probs.index_axis(ndarray::Axis(0), b).iter().map(|v| v.as_f64()).collect()
}

/// Utilities and per-pixel gradients for one image under the configured
/// objectives. A player with an overlap loss optimizes that loss alone and
/// its total records the loss value.
fn image_objective(config: &GameConfig, o1: &[f64], o2: &[f64], g: &[f64]) -> Result<(UtilityBundle, Vec<f64>, Vec<f64>)> {
    let r = game_gradients(o1, o2, g, config.utility_components, config.objective);
    let mut bundle = r.bundle;
    let (mut d1, mut d2) = (r.d_o1, r.d_o2);
    if config.loss_mode[0].kind != LossKind::Game {
        let (v, d) = combined_loss_grad(config.loss_mode[0], o1, g)?;
        bundle.phi1 = v;
        d1 = d;
    }
    if config.loss_mode[1].kind != LossKind::Game {
        let (v, d) = combined_loss_grad(config.loss_mode[1], o2, g)?;
        bundle.phi2 = v;
        d2 = d;
    }
    Ok((bundle, d1, d2))
}

fn grad_tensor<F: Real>(shape: (usize, usize, usize, usize), grads: &[Vec<f64>], scale: f64) -> Array4<F> {
    let (n, _, h, w) = shape;
    let mut t = Array4::<F>::zeros(shape);
    for b in 0..n {
        for (i, &v) in grads[b].iter().enumerate() {
            t[[b, 0, i / w, i % w]] = F::lit(v * scale);
        }
    }
    debug_assert_eq!(grads[0].len(), h * w);
    t
}

/// Stateful trainer: one call to [`GameTrainer::run_epoch`] per epoch.
pub struct GameTrainer<F: Real = f32> {
    pub game: TrainedGame<F>,
    opt1: Adam<F>,
    opt2: Adam<F>,
    rng: ChaCha8Rng,
    train_set: Dataset,
}

impl<F: Real> GameTrainer<F> {
    pub fn new(config: &GameConfig, train_set: &Dataset) -> Result<Self> {
        if train_set.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let game = TrainedGame::initial(config)?;
        let (_, _, data_seed) = config.derived_seeds();
        Ok(Self {
            game,
            opt1: Adam::new(config.learning_rate),
            opt2: Adam::new(config.learning_rate),
            rng: ChaCha8Rng::seed_from_u64(data_seed),
            train_set: train_set.clone(),
        })
    }

    /// One pass over the shuffled training set followed by validation.
    pub fn run_epoch(&mut self, val_set: &Dataset) -> Result<&EpochRecord> {
        let epoch = self.game.history.len() + 1;
        let cfg = self.game.config.clone();
        let mut order: Vec<usize> = (0..self.train_set.len()).collect();
        order.shuffle(&mut self.rng);
        let mut bundles = Vec::with_capacity(order.len());
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let pairs = chunk
                .iter()
                .map(|&i| {
                    let s = &self.train_set.items[i];
                    augment(&s.image, &s.mask, cfg.resize, cfg.crop, &mut self.rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = make_batch::<F>(&pairs);
            let (p1, _, c1) = self.game.player1.forward_batch(&batch.x, Mode::Train, false);
            let (p2, _, c2) = self.game.player2.forward_batch(&batch.x, Mode::Train, false);
            let n = chunk.len();
            let mut g1 = Vec::with_capacity(n);
            let mut g2 = Vec::with_capacity(n);
            for b in 0..n {
                let (bundle, d1, d2) = image_objective(&cfg, &plane(&p1, b), &plane(&p2, b), &batch.masks[b])?;
                if !bundle.is_finite() {
                    return Err(Error::Divergence { epoch, batch: bi + 1, detail: format!("non-finite utilities {bundle:?}") });
                }
                bundles.push(bundle);
                g1.push(d1);
                g2.push(d2);
            }
            let scale = 1.0 / n as f64;
            let (c1, c2) = (c1.expect("training cache"), c2.expect("training cache"));
            self.game.player1.backward(&c1, &grad_tensor(p1.dim(), &g1, scale));
            self.game.player2.backward(&c2, &grad_tensor(p2.dim(), &g2, scale));
            self.opt1.step(self.game.player1.named_params_mut());
            self.opt2.step(self.game.player2.named_params_mut());
            self.game.player1.commit(&c1);
            self.game.player2.commit(&c2);
        }
        let validation = if val_set.is_empty() { None } else { Some(evaluate(&self.game, val_set)?) };
        self.game.history.epochs.push(EpochRecord { epoch, utilities: UtilityBundle::mean(&bundles), validation });
        Ok(self.game.history.epochs.last().expect("just pushed"))
    }

    pub fn into_game(self) -> TrainedGame<F> {
        self.game
    }
}

/// Trains for `config.epochs` epochs.
pub fn train<F: Real>(config: &GameConfig, train_set: &Dataset, val_set: &Dataset) -> Result<TrainedGame<F>> {
    let mut t = GameTrainer::<F>::new(config, train_set)?;
    for _ in 0..config.epochs {
        t.run_epoch(val_set)?;
    }
    Ok(t.into_game())
}

fn eval_pairs(dataset: &Dataset, resize: usize) -> Vec<(GrayImage, BinaryMask)> {
    dataset.items.iter().map(|s| resize_pair(&s.image, &s.mask, resize)).collect()
}

/// Probability maps of both players at the evaluation resolution.
fn predict_pairs<F: Real>(
    game: &TrainedGame<F>,
    pairs: &[(GrayImage, BinaryMask)],
) -> Vec<(crate::image::ProbabilityMap, crate::image::ProbabilityMap)> {
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(game.config.batch_size.max(1)) {
        let batch = make_batch::<F>(chunk);
        let (p1, _, _) = game.player1.forward_batch(&batch.x, Mode::Eval, false);
        let (p2, _, _) = game.player2.forward_batch(&batch.x, Mode::Eval, false);
        for b in 0..chunk.len() {
            out.push((probs_to_map(&p1, b), probs_to_map(&p2, b)));
        }
    }
    out
}

/// Per-image metrics at the configured threshold, averaged over the set,
/// for each player and for the fused map (fused before thresholding).
pub fn evaluate<F: Real>(game: &TrainedGame<F>, test_set: &Dataset) -> Result<SourceReports> {
    if test_set.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let pairs = eval_pairs(test_set, game.config.resize);
    let preds = predict_pairs(game, &pairs);
    let t = game.config.threshold;
    let (mut r1, mut r2, mut rf) = (Vec::new(), Vec::new(), Vec::new());
    for ((_, gt), (o1, o2)) in pairs.iter().zip(&preds) {
        r1.push(score(o1, gt, t)?);
        r2.push(score(o2, gt, t)?);
        rf.push(score(&fuse(o1, o2)?, gt, t)?);
    }
    Ok(SourceReports { player1: MetricReport::mean(&r1), player2: MetricReport::mean(&r2), fused: MetricReport::mean(&rf) })
}

/// Mean utilities of the current players over `dataset` at the evaluation
/// resolution. `Mode::Train` normalizes with batch statistics without
/// touching running estimates.
pub fn mean_utilities<F: Real>(game: &TrainedGame<F>, dataset: &Dataset, mode: Mode) -> Result<UtilityBundle> {
    if dataset.is_empty() {
        return Err(Error::Data("dataset is empty".into()));
    }
    let pairs = eval_pairs(dataset, game.config.resize);
    let mut bundles = Vec::new();
    for chunk in pairs.chunks(game.config.batch_size.max(1)) {
        let batch = make_batch::<F>(chunk);
        let (p1, _, _) = game.player1.forward_batch(&batch.x, mode, false);
        let (p2, _, _) = game.player2.forward_batch(&batch.x, mode, false);
        for b in 0..chunk.len() {
            bundles.push(image_objective(&game.config, &plane(&p1, b), &plane(&p2, b), &batch.masks[b])?.0);
        }
    }
    Ok(UtilityBundle::mean(&bundles))
}
