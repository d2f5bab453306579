//! Signal-to-clutter ratio of a single target against its local neighborhood.
//!
//! The neighborhood is the target's bounding box grown by a factor of about
//! √3 per axis (so roughly three times the target's box area), clipped to the
//! image, with the target's own pixels removed. Per axis the box of extent
//! `s` grows by `ceil((ceil(s·√3) − s) / 2)` pixels on each side, which keeps
//! it centered; a 1×1 target gets the surrounding 3×3 ring.

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::image::{BinaryMask, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrStats {
    pub mu_t: f64,
    pub mu_c: f64,
    pub sigma_c: f64,
    pub scr: f64,
}

/// Inclusive pixel bounds `(y0, x0, y1, x1)`.
pub type BBox = (usize, usize, usize, usize);

pub fn bounding_box(mask: &BinaryMask) -> Option<BBox> {
    let mut bb: Option<BBox> = None;
    for ((y, x), &v) in mask.pixels().indexed_iter() {
        if v == 1 {
            bb = Some(match bb {
                None => (y, x, y, x),
                Some((y0, x0, y1, x1)) => (y0.min(y), x0.min(x), y1.max(y), x1.max(x)),
            });
        }
    }
    bb
}

fn margin(extent: usize) -> usize {
    let grown = (extent as f64 * 3f64.sqrt()).ceil() as usize;
    (grown - extent).div_ceil(2)
}

/// Neighborhood window around a bounding box, clipped to `shape`.
pub fn neighborhood_window(bb: BBox, shape: (usize, usize)) -> BBox {
    let (y0, x0, y1, x1) = bb;
    let my = margin(y1 - y0 + 1);
    let mx = margin(x1 - x0 + 1);
    (
        y0.saturating_sub(my),
        x0.saturating_sub(mx),
        (y1 + my).min(shape.0 - 1),
        (x1 + mx).min(shape.1 - 1),
    )
}

pub fn scr(image: &GrayImage, target: &BinaryMask) -> Result<ScrStats> {
    check_shape(image.shape(), target.shape())?;
    let bb = bounding_box(target).ok_or(Error::EmptyTarget)?;
    let px = image.pixels();

    let (mut t_sum, mut t_n) = (0.0, 0usize);
    for ((y, x), &v) in target.pixels().indexed_iter() {
        if v == 1 {
            t_sum += px[[y, x]];
            t_n += 1;
        }
    }
    let mu_t = t_sum / t_n as f64;

    let (wy0, wx0, wy1, wx1) = neighborhood_window(bb, image.shape());
    let mut ring = Vec::new();
    for y in wy0..=wy1 {
        for x in wx0..=wx1 {
            if !target.get(y, x) {
                ring.push(px[[y, x]]);
            }
        }
    }
    if ring.is_empty() {
        return Err(Error::Data("target neighborhood contains no background pixels".into()));
    }
    let n = ring.len() as f64;
    let mu_c = ring.iter().sum::<f64>() / n;
    let sigma_c = (ring.iter().map(|v| (v - mu_c).powi(2)).sum::<f64>() / n).sqrt();
    if sigma_c <= 1e-12 {
        return Err(Error::DegenerateBackground { mu_t, mu_c });
    }
    Ok(ScrStats { mu_t, mu_c, sigma_c, scr: (mu_t - mu_c).abs() / sigma_c })
}
