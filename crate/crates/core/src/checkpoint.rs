//! Versioned JSON checkpoints and raw feature dumps.
//!
//! A checkpoint holds, per player, a descriptor (variant, dilations, width,
//! use_mim, seed) and every parameter and running statistic keyed by its
//! module path (`layers.3.conv.weight`, `mim.0.bn_spatial.running_var`, ...).
//! Tensors are stored row-major as `{ "shape": [...], "data": [...] }`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{ArrayD, Axis, IxDyn};
use serde::{Deserialize, Serialize};

use crate::backbone::{image_tensor, FdcnSpec, PlayerNetwork, Variant};
use crate::error::{Error, Result};
use crate::game::{GameConfig, TrainHistory, TrainedGame};
use crate::image::GrayImage;
use crate::nn::{Mode, Module};
use crate::real::Real;

pub const FORMAT: &str = "pixelgame-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn from_array<F: Real>(a: &ArrayD<F>) -> Self {
        Self { shape: a.shape().to_vec(), data: a.iter().map(|v| v.as_f64()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerDescriptor {
    pub variant: Option<Variant>,
    pub dilations: Vec<usize>,
    pub channels: usize,
    pub use_mim: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerRecord {
    pub descriptor: PlayerDescriptor,
    pub tensors: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub epoch: usize,
    pub config: GameConfig,
    pub players: Vec<PlayerRecord>,
    pub history: TrainHistory,
}

pub fn player_record<F: Real>(net: &PlayerNetwork<F>) -> PlayerRecord {
    let mut tensors = BTreeMap::new();
    for (name, p) in net.named_params() {
        tensors.insert(name, Tensor::from_array(&p.value));
    }
    let mut bufs = Vec::new();
    net.buffers("", &mut bufs);
    for (name, b) in bufs {
        tensors.insert(name, Tensor::from_array(b));
    }
    PlayerRecord {
        descriptor: PlayerDescriptor {
            variant: net.variant,
            dilations: net.spec.dilations(),
            channels: net.spec.channels,
            use_mim: net.use_mim,
            seed: net.seed,
        },
        tensors,
    }
}

fn fill<F: Real>(name: &str, dst: &mut ArrayD<F>, tensors: &mut BTreeMap<String, Tensor>) -> Result<()> {
    let t = tensors.remove(name).ok_or_else(|| Error::Version(format!("tensor `{name}` missing")))?;
    if t.shape != dst.shape() {
        return Err(Error::Version(format!("tensor `{name}` has shape {:?}, network expects {:?}", t.shape, dst.shape())));
    }
    if t.data.len() != dst.len() {
        return Err(Error::Version(format!("tensor `{name}` holds {} values for shape {:?}", t.data.len(), t.shape)));
    }
    *dst = ArrayD::from_shape_vec(IxDyn(&t.shape), t.data.into_iter().map(F::lit).collect()).expect("length checked");
    Ok(())
}

/// Rebuilds a player; every stored tensor must match the network exactly.
pub fn restore_player<F: Real>(record: &PlayerRecord) -> Result<PlayerNetwork<F>> {
    let d = &record.descriptor;
    let spec = FdcnSpec::custom(&d.dilations, d.channels).map_err(|e| Error::Version(e.to_string()))?;
    if let Some(v) = d.variant {
        if v.dilations() != d.dilations {
            return Err(Error::Version(format!("descriptor says {v} but lists dilations {:?}", d.dilations)));
        }
    }
    let mut net = PlayerNetwork::<F>::from_spec(spec, d.use_mim, d.seed);
    net.variant = d.variant;
    let mut tensors = record.tensors.clone();
    for (name, p) in net.named_params_mut() {
        fill(&name, &mut p.value, &mut tensors)?;
    }
    let mut bufs = Vec::new();
    net.buffers_mut("", &mut bufs);
    for (name, b) in bufs {
        fill(&name, b, &mut tensors)?;
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Version(format!("unexpected tensor `{extra}`")));
    }
    Ok(net)
}

impl Checkpoint {
    pub fn from_game<F: Real>(game: &TrainedGame<F>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            epoch: game.history.len(),
            config: game.config.clone(),
            players: vec![player_record(&game.player1), player_record(&game.player2)],
            history: game.history.clone(),
        }
    }

    pub fn into_game<F: Real>(self) -> Result<TrainedGame<F>> {
        if self.format != FORMAT {
            return Err(Error::Version(format!("not a checkpoint (format `{}`)", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Version(format!("checkpoint version {} is not supported (expected {VERSION})", self.version)));
        }
        if self.players.len() != 2 {
            return Err(Error::Version(format!("expected 2 players, found {}", self.players.len())));
        }
        let player1 = restore_player(&self.players[0])?;
        let player2 = restore_player(&self.players[1])?;
        if player1.variant != Some(Variant::Fdcn9) || player2.variant != Some(Variant::Fdcn13) {
            return Err(Error::Version("player 1 must be fdcn9 and player 2 fdcn13".into()));
        }
        Ok(TrainedGame { player1, player2, config: self.config, history: self.history })
    }
}

pub fn save_game<F: Real>(game: &TrainedGame<F>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_vec(&Checkpoint::from_game(game))?)?;
    Ok(())
}

pub fn load_game<F: Real>(path: &Path) -> Result<TrainedGame<F>> {
    let bytes = fs::read(path)?;
    let ck: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| Error::Version(format!("{}: {e}", path.display())))?;
    ck.into_game()
}

/// Encoder feature, gates and modulated output at one skip connection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipDump {
    pub encoder_layer: usize,
    pub decoder_layer: usize,
    /// `x` and `z` are `C×H×W`, `m2` is `C`, `m3` is `H×W`.
    pub x: Tensor,
    pub m2: Tensor,
    pub m3: Tensor,
    pub z: Tensor,
}

/// Inference-mode modulation tensors at every skip of `net` for one image.
/// Empty when the player has no modulation blocks.
pub fn skip_dumps<F: Real>(net: &PlayerNetwork<F>, image: &GrayImage) -> Vec<SkipDump> {
    if !net.use_mim {
        return Vec::new();
    }
    let (h, w) = image.shape();
    let (_, features, _) = net.forward_batch(&image_tensor::<F>(&[image]), Mode::Eval, true);
    net.spec
        .skip_pairs
        .iter()
        .enumerate()
        .map(|(j, &(e, d))| {
            let x = &features[e];
            let (z, cache) = net.mims[j].forward(x, Mode::Eval);
            let t = cache.trace();
            SkipDump {
                encoder_layer: e,
                decoder_layer: d,
                x: Tensor::from_array(&x.index_axis(Axis(0), 0).to_owned().into_dyn()),
                m2: Tensor::from_array(&t.m2.row(0).to_owned().into_dyn()),
                m3: Tensor { shape: vec![h, w], data: t.m3.row(0).iter().map(|v| v.as_f64()).collect() },
                z: Tensor::from_array(&z.index_axis(Axis(0), 0).to_owned().into_dyn()),
            }
        })
        .collect()
}

/// Writes `<tag>_skip<j>.json` per skip connection; returns the file count.
pub fn write_skip_dumps<F: Real>(net: &PlayerNetwork<F>, image: &GrayImage, dir: &Path, tag: &str) -> Result<usize> {
    let dumps = skip_dumps(net, image);
    fs::create_dir_all(dir)?;
    for (j, d) in dumps.iter().enumerate() {
        fs::write(dir.join(format!("{tag}_skip{j}.json")), serde_json::to_vec(d)?)?;
    }
    Ok(dumps.len())
}
