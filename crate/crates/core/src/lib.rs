//! Infrared small-target segmentation trained as a two-player game.
//!
//! Two fully dilated convolutional players are optimized simultaneously: one
//! penalizes missed target pixels, the other penalizes false alarms, and a
//! shared game term pushes their mistakes onto disjoint pixels. The fused
//! output is the per-pixel mean of both probability maps.

pub mod ablation;
pub mod backbone;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod game;
pub mod gradcheck;
pub mod image;
pub mod metrics;
pub mod mim;
pub mod nn;
pub mod plot;
pub mod real;
pub mod scr;
pub mod utility;
pub mod verify;

pub use error::{Error, Result};
pub use image::{fuse, BinaryMask, GrayImage, ProbabilityMap};
pub use metrics::{binarize, confusion_counts, metrics, soft_confusion_counts, ConfusionCounts, MetricReport};
pub use scr::{scr, ScrStats};
