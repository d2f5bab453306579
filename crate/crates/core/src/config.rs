//! Flat `key = value` run configuration shared by the command-line tools.
//!
//! ```text
//! # comment
//! epochs = 60
//! data = synth:200
//! utility_components = U+A+G
//! scene.clutter_strength = 0.5
//! ```

use std::path::{Path, PathBuf};

use crate::data::SceneParams;
use crate::error::{Error, Result};
use crate::game::GameConfig;

/// Environment variable that overrides the output root of every command.
pub const OUT_ENV: &str = "PIXELGAME_OUT";
pub const DEFAULT_VAL_FRACTION: f64 = 0.2;

/// Every configuration key with its default, in the file syntax. Shown by
/// `pixelgame train --help`.
pub const CONFIG_KEYS: &str = "\
Configuration keys (config file, `--set key=value`, or the flags above):
  learning_rate = 1e-5            # alias lr
  batch_size = 8
  epochs = 70
  crop = 480                      # random crop edge after resizing
  resize = 512                    # training and evaluation resize edge
  threshold = 0.5
  seed = 0
  use_mim = true
  loss_mode = game                # game, dice, iou, ss, ss:<lambda>; loss1/loss2 per player
  loss1 = game
  loss2 = game
  utility_components = U+A+G
  objective = per-player          # or shared
  channels1 = 128                 # first player width
  channels2 = 64                  # second player width
  val_fraction = 0.2              # held out when no split lists or val_data; 0 trains on all
  checkpoint_every = 0            # 0 saves only final.json
  dump_features = false
  scene.image_size = 64           # scene.* keys shape synth:N data
  scene.target_count_pmf = 0.8,0.12,0.05,0.03
  scene.area_median = 20
  scene.area_log_sigma = 0.9
  scene.area_min = 3
  scene.area_max = 150
  scene.scr_min = 1
  scene.scr_max = 10
  scene.clutter_strength = 1
  scene.backgrounds = sky,cloud,ground,sea
  scene.scr_tolerance = 0.15
  scene.max_attempts = 50
  # data, val_data: dataset directory or synth:N (no default)
  # out: output directory (default runs/train; PIXELGAME_OUT and --out take precedence)
";

/// `(key, value, line number)` triples in file order.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("line {}: expected `key = value`, found `{line}`", i + 1)))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Usage(format!("line {}: missing key", i + 1)));
        }
        out.push((key.to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

/// Where training and evaluation images come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Dataset directory in the documented layout.
    Dir(PathBuf),
    /// `synth:N`: N freshly generated scenes.
    Synth(usize),
}

impl std::str::FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.strip_prefix("synth:") {
            Some(n) => {
                let n: usize = parse_value("data", n)?;
                if n == 0 {
                    return Err(Error::Config("synth:N needs N ≥ 1".into()));
                }
                Ok(DataSource::Synth(n))
            }
            None if s.is_empty() => Err(Error::Config("empty data source".into())),
            None => Ok(DataSource::Dir(PathBuf::from(s))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub game: GameConfig,
    pub data: Option<DataSource>,
    /// Separate validation directory; otherwise a split of `data`.
    pub val_data: Option<DataSource>,
    /// Held-out fraction when validation comes from `data`; 0 trains on all.
    pub val_fraction: f64,
    pub out: Option<PathBuf>,
    /// Save a checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
    /// Export modulation tensors for one validation image after training.
    pub dump_features: bool,
    pub scene: SceneParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            game: GameConfig::default(),
            data: None,
            val_data: None,
            val_fraction: DEFAULT_VAL_FRACTION,
            out: None,
            checkpoint_every: 0,
            dump_features: false,
            scene: SceneParams::default(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let g = &mut self.game;
        match key {
            "learning_rate" | "lr" => g.learning_rate = parse_value(key, value)?,
            "batch_size" => g.batch_size = parse_value(key, value)?,
            "epochs" => g.epochs = parse_value(key, value)?,
            "crop" => g.crop = parse_value(key, value)?,
            "resize" => g.resize = parse_value(key, value)?,
            "threshold" => g.threshold = parse_value(key, value)?,
            "seed" => g.seed = parse_value(key, value)?,
            "use_mim" => g.use_mim = parse_bool(key, value)?,
            "loss_mode" => {
                let spec = value.parse()?;
                g.loss_mode = [spec, spec];
            }
            "loss1" => g.loss_mode[0] = value.parse()?,
            "loss2" => g.loss_mode[1] = value.parse()?,
            "utility_components" => g.utility_components = value.parse()?,
            "objective" => g.objective = value.parse()?,
            "channels1" => g.channels1 = parse_value(key, value)?,
            "channels2" => g.channels2 = parse_value(key, value)?,
            "data" => self.data = Some(value.parse()?),
            "val_data" => self.val_data = Some(value.parse()?),
            "val_fraction" => {
                let f: f64 = parse_value(key, value)?;
                if !(0.0..1.0).contains(&f) {
                    return Err(Error::Config(format!("val_fraction {f} outside [0, 1)")));
                }
                self.val_fraction = f;
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "checkpoint_every" => self.checkpoint_every = parse_value(key, value)?,
            "dump_features" => self.dump_features = parse_bool(key, value)?,
            _ => match key.strip_prefix("scene.") {
                Some(param) => self.scene.set(param, value).map_err(|e| match e {
                    Error::Config(m) if m.starts_with("unknown") => Error::Usage(format!("unknown config key `{key}`")),
                    other => other,
                })?,
                None => return Err(Error::Usage(format!("unknown config key `{key}`"))),
            },
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v, line) in parse_pairs(text)? {
            self.set(&k, &v).map_err(|e| match e {
                Error::Usage(m) => Error::Usage(format!("line {line}: {m}")),
                Error::Config(m) => Error::Config(format!("line {line}: {m}")),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut c = Self::default();
        c.apply_text(&text)?;
        Ok(c)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Usage(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.game.validate()?;
        self.scene.validate()
    }
}

/// Output root: explicit flag, then the environment, then the config, then
/// `fallback`.
pub fn output_root(flag: Option<&Path>, config: Option<&Path>, fallback: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(env) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    config.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(fallback))
}
