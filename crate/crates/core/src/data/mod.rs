//! Datasets: calibrated synthetic scenes, on-disk ingestion, augmentation
//! and target statistics.

mod augment;
mod components;
mod io;
mod stats;
mod synth;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use augment::{augment, resize_bilinear, resize_nearest, resize_pair};
pub use components::{label_components, Component};
pub use io::{load_dataset, write_dataset, Layout};
pub use stats::{dataset_stats, StatsReport, SCR_BIN_COUNT};
pub use synth::{synth_dataset, synth_scene, BackgroundKind, SceneMeta, SceneParams, TargetMeta};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub stem: String,
    pub image: GrayImage,
    pub mask: BinaryMask,
    pub meta: Option<SceneMeta>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub items: Vec<Sample>,
    pub split: Option<Split>,
}

impl Dataset {
    pub fn new(items: Vec<Sample>, split: Option<Split>) -> Result<Self> {
        for s in &items {
            if s.image.shape() != s.mask.shape() {
                return Err(Error::Dimension { expected: s.image.shape(), found: s.mask.shape() });
            }
        }
        Ok(Self { items, split })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = Some(split);
        self
    }
}

/// Seeded shuffle followed by a `round(n·train_fraction)` cut.
pub fn resplit(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside (0,1)")));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((dataset.len() as f64) * train_fraction).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| dataset.items[i].clone()).collect::<Vec<_>>();
    Ok((
        Dataset { items: pick(&order[..cut]), split: Some(Split::Train) },
        Dataset { items: pick(&order[cut..]), split: Some(Split::Val) },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize) -> Dataset {
        let items = (0..n)
            .map(|i| Sample {
                stem: format!("s{i}"),
                image: GrayImage::new(ndarray::Array2::from_elem((2, 2), i as f64 / n as f64)).unwrap(),
                mask: BinaryMask::zeros((2, 2)),
                meta: None,
            })
            .collect();
        Dataset::new(items, None).unwrap()
    }

    #[test]
    fn resplit_sizes_and_cover() {
        let d = tiny(10);
        let (a, b) = resplit(&d, 0.8, 1).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let mut stems: Vec<String> = a.items.iter().chain(&b.items).map(|s| s.stem.clone()).collect();
        stems.sort();
        let mut orig: Vec<String> = d.items.iter().map(|s| s.stem.clone()).collect();
        orig.sort();
        assert_eq!(stems, orig);
        let (a2, _) = resplit(&d, 0.8, 1).unwrap();
        assert_eq!(a, a2);
        assert!(resplit(&d, 1.0, 1).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let s = Sample {
            stem: "x".into(),
            image: GrayImage::new(ndarray::Array2::zeros((2, 3))).unwrap(),
            mask: BinaryMask::zeros((3, 2)),
            meta: None,
        };
        assert!(Dataset::new(vec![s], None).is_err());
    }
}
