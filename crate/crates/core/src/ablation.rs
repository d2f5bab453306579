//! One seeded training per level of a single ablation axis.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{parse_pairs, RunConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::game::{train, GameConfig, TrainHistory};
use crate::utility::LossSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationAxis {
    /// Subsets of the utility terms.
    Utility,
    /// Objective of both players (`game`, `dice`, `iou`, `ss`), or
    /// `first/second` for one per player.
    Loss,
    /// With and without skip modulation.
    Mim,
}

impl AblationAxis {
    pub fn default_levels(self) -> Vec<String> {
        let v: &[&str] = match self {
            AblationAxis::Utility => &["U", "U+A", "U+G", "U+A+G"],
            AblationAxis::Loss => &["game", "dice", "iou", "ss"],
            AblationAxis::Mim => &["with", "without"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Configuration for one level on top of `base`.
    pub fn apply(self, base: &GameConfig, level: &str) -> Result<GameConfig> {
        let mut c = base.clone();
        match self {
            AblationAxis::Utility => c.utility_components = level.parse()?,
            AblationAxis::Loss => {
                c.loss_mode = match level.split_once('/') {
                    Some((a, b)) => [a.parse()?, b.parse()?],
                    None => {
                        let s: LossSpec = level.parse()?;
                        [s, s]
                    }
                }
            }
            AblationAxis::Mim => {
                c.use_mim = match level.trim() {
                    "with" => true,
                    "without" => false,
                    other => return Err(Error::Config(format!("mim level must be `with` or `without`, got `{other}`"))),
                }
            }
        }
        Ok(c)
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationAxis::Utility => "utility",
            AblationAxis::Loss => "loss",
            AblationAxis::Mim => "mim",
        })
    }
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "utility" => Ok(AblationAxis::Utility),
            "loss" => Ok(AblationAxis::Loss),
            "mim" => Ok(AblationAxis::Mim),
            other => Err(Error::Config(format!("unknown ablation axis `{other}`"))),
        }
    }
}

/// A run configuration plus `axis` and optional `levels` (`;` separated).
#[derive(Debug, Clone, PartialEq)]
pub struct AblationPlan {
    pub axis: AblationAxis,
    pub levels: Vec<String>,
    pub run: RunConfig,
}

impl AblationPlan {
    pub fn parse(text: &str) -> Result<Self> {
        let mut axis = None;
        let mut levels = None;
        let mut run = RunConfig::default();
        for (k, v, line) in parse_pairs(text)? {
            let tag = |e: Error| match e {
                Error::Usage(m) => Error::Usage(format!("line {line}: {m}")),
                Error::Config(m) => Error::Config(format!("line {line}: {m}")),
                other => other,
            };
            match k.as_str() {
                "axis" => axis = Some(v.parse::<AblationAxis>().map_err(tag)?),
                "levels" => levels = Some(v.split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect::<Vec<_>>()),
                _ => run.set(&k, &v).map_err(tag)?,
            }
        }
        let axis = axis.ok_or_else(|| Error::Usage("plan has no `axis` key".into()))?;
        let levels = levels.unwrap_or_else(|| axis.default_levels());
        if levels.is_empty() {
            return Err(Error::Usage("plan lists no levels".into()));
        }
        Ok(Self { axis, levels, run })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub level: String,
    /// Fused F1 and IoU on the validation set after the final epoch.
    pub f1: Option<f64>,
    pub iou: Option<f64>,
    pub status: String,
}

pub const ABLATION_HEADER: &str = "level,f1,iou,status";

pub fn rows_to_csv(rows: &[AblationRow]) -> String {
    let mut s = format!("{ABLATION_HEADER}\n");
    for r in rows {
        let num = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let status = r.status.replace([',', '\n'], ";");
        let _ = writeln!(s, "{},{},{},{}", r.level, num(r.f1), num(r.iou), status);
    }
    s
}

/// File-name-safe form of a level label.
pub fn level_slug(level: &str) -> String {
    level.chars().map(|c| if c.is_ascii_alphanumeric() || "+-.".contains(c) { c } else { '_' }).collect()
}

/// Trains every level in order; a failing level is recorded and the plan
/// continues. `progress` sees each row and, when training finished, its
/// history.
pub fn run_plan(
    plan: &AblationPlan,
    train_set: &Dataset,
    val_set: &Dataset,
    mut progress: impl FnMut(&AblationRow, Option<&TrainHistory>),
) -> Vec<AblationRow> {
    let mut rows = Vec::with_capacity(plan.levels.len());
    for level in &plan.levels {
        let trained = plan.axis.apply(&plan.run.game, level).and_then(|cfg| train::<f32>(&cfg, train_set, val_set));
        let history = trained.as_ref().ok().map(|g| &g.history);
        let scored = match &trained {
            Ok(g) => g.history.last_validation().ok_or_else(|| "no validation set to score the level".to_string()),
            Err(e) => Err(e.to_string()),
        };
        let row = match scored {
            Ok(v) => AblationRow { level: level.clone(), f1: Some(v.fused.f1), iou: Some(v.fused.iou), status: "ok".into() },
            Err(e) => AblationRow { level: level.clone(), f1: None, iou: None, status: format!("failed: {e}") },
        };
        progress(&row, history);
        rows.push(row);
    }
    rows
}
