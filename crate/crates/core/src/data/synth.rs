//! Procedural infrared scenes: a smooth background preset plus clutter
//! noise, with small bright targets whose contrast is solved so the
//! measured SCR matches a sampled request.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};
use crate::scr::{bounding_box, neighborhood_window, scr, BBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundKind {
    Sky,
    Cloud,
    Ground,
    Sea,
}

impl BackgroundKind {
    pub const ALL: [BackgroundKind; 4] = [BackgroundKind::Sky, BackgroundKind::Cloud, BackgroundKind::Ground, BackgroundKind::Sea];
}

impl fmt::Display for BackgroundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackgroundKind::Sky => "sky",
            BackgroundKind::Cloud => "cloud",
            BackgroundKind::Ground => "ground",
            BackgroundKind::Sea => "sea",
        })
    }
}

impl FromStr for BackgroundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sky" => Ok(BackgroundKind::Sky),
            "cloud" => Ok(BackgroundKind::Cloud),
            "ground" => Ok(BackgroundKind::Ground),
            "sea" => Ok(BackgroundKind::Sea),
            other => Err(Error::Config(format!("unknown background kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub image_size: usize,
    /// Probability of 1, 2, 3, … targets.
    pub target_count_pmf: Vec<f64>,
    /// Median of the log-normal area distribution, px².
    pub area_median: f64,
    pub area_log_sigma: f64,
    /// Inclusive clip range for sampled areas.
    pub target_area_range: (usize, usize),
    /// SCR is sampled log-uniformly on this range.
    pub scr_range: (f64, f64),
    pub clutter_strength: f64,
    pub background_kinds: Vec<BackgroundKind>,
    /// Accepted relative deviation of the measured SCR.
    pub scr_tolerance: f64,
    pub max_attempts: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            image_size: 64,
            target_count_pmf: vec![0.8, 0.12, 0.05, 0.03],
            area_median: 20.0,
            area_log_sigma: 0.9,
            target_area_range: (3, 150),
            scr_range: (1.0, 10.0),
            clutter_strength: 1.0,
            background_kinds: BackgroundKind::ALL.to_vec(),
            scr_tolerance: 0.15,
            max_attempts: 50,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.image_size < 8 {
            return bad(format!("image_size {} is below 8", self.image_size));
        }
        if self.target_count_pmf.is_empty() || self.target_count_pmf.iter().any(|&p| !(p >= 0.0)) {
            return bad("target_count_pmf must be a non-empty list of non-negative weights".into());
        }
        let total: f64 = self.target_count_pmf.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return bad(format!("target_count_pmf sums to {total}, expected 1"));
        }
        let (lo, hi) = self.target_area_range;
        if lo == 0 || lo > hi {
            return bad(format!("invalid area range [{lo}, {hi}]"));
        }
        let (slo, shi) = self.scr_range;
        if !(slo > 0.0 && slo <= shi && shi.is_finite()) {
            return bad(format!("invalid scr range [{slo}, {shi}]"));
        }
        if !(self.area_median > 0.0 && self.area_log_sigma >= 0.0) {
            return bad("area distribution parameters must be positive".into());
        }
        if !(self.clutter_strength >= 0.0 && self.clutter_strength.is_finite()) {
            return bad("clutter_strength must be non-negative".into());
        }
        if self.background_kinds.is_empty() {
            return bad("at least one background kind is required".into());
        }
        if !(self.scr_tolerance > 0.0) || self.max_attempts == 0 {
            return bad("scr_tolerance and max_attempts must be positive".into());
        }
        Ok(())
    }

    /// Applies `key = value` overrides; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let list = |v: &str| -> Vec<String> { v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect() };
        match key {
            "image_size" => self.image_size = parse_num(key, value)?,
            "target_count_pmf" => {
                self.target_count_pmf = list(value).iter().map(|v| parse_num(key, v)).collect::<Result<_>>()?;
            }
            "area_median" => self.area_median = parse_num(key, value)?,
            "area_log_sigma" => self.area_log_sigma = parse_num(key, value)?,
            "area_min" => self.target_area_range.0 = parse_num(key, value)?,
            "area_max" => self.target_area_range.1 = parse_num(key, value)?,
            "scr_min" => self.scr_range.0 = parse_num(key, value)?,
            "scr_max" => self.scr_range.1 = parse_num(key, value)?,
            "clutter_strength" => self.clutter_strength = parse_num(key, value)?,
            "backgrounds" => {
                self.background_kinds = list(value).iter().map(|v| v.parse()).collect::<Result<_>>()?;
            }
            "scr_tolerance" => self.scr_tolerance = parse_num(key, value)?,
            "max_attempts" => self.max_attempts = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown scene parameter `{other}`"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMeta {
    /// `(row, column)` of the mask centroid.
    pub centroid: (f64, f64),
    pub area: usize,
    pub requested_scr: f64,
    pub achieved_scr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub background: BackgroundKind,
    pub clutter_seed: u64,
    pub targets: Vec<TargetMeta>,
}

/// Bilinear upsampling of a coarse Gaussian grid into a smooth field.
fn smooth_field(rng: &mut impl Rng, rows: usize, cols: usize, h: usize, w: usize) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let grid = Array2::from_shape_fn((rows, cols), |_| normal.sample(rng));
    Array2::from_shape_fn((h, w), |(y, x)| {
        let fy = y as f64 / (h - 1).max(1) as f64 * (rows - 1) as f64;
        let fx = x as f64 / (w - 1).max(1) as f64 * (cols - 1) as f64;
        let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(rows - 1), (x0 + 1).min(cols - 1));
        let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
        let top = grid[[y0, x0]] * (1.0 - tx) + grid[[y0, x1]] * tx;
        let bot = grid[[y1, x0]] * (1.0 - tx) + grid[[y1, x1]] * tx;
        top * (1.0 - ty) + bot * ty
    })
}

fn background(kind: BackgroundKind, size: usize, clutter: f64, clutter_seed: u64, rng: &mut impl Rng) -> Array2<f64> {
    let s = size;
    let mut bg = match kind {
        BackgroundKind::Sky => {
            let f = smooth_field(rng, 4, 4, s, s);
            Array2::from_shape_fn((s, s), |(y, x)| 0.2 + 0.08 * y as f64 / s as f64 + 0.02 * f[[y, x]])
        }
        BackgroundKind::Cloud => {
            let f = smooth_field(rng, 6, 6, s, s);
            f.mapv(|v| 0.3 + 0.07 * v)
        }
        BackgroundKind::Ground => {
            let f = smooth_field(rng, 5, 5, s, s);
            let t = smooth_field(rng, 14, 14, s, s);
            Array2::from_shape_fn((s, s), |(y, x)| 0.36 + 0.05 * f[[y, x]] + 0.02 * t[[y, x]])
        }
        BackgroundKind::Sea => {
            let f = smooth_field(rng, 4, 4, s, s);
            let streaks = smooth_field(rng, 18, 3, s, s);
            Array2::from_shape_fn((s, s), |(y, x)| 0.27 + 0.03 * f[[y, x]] + 0.03 * streaks[[y, x]])
        }
    };
    if clutter > 0.0 {
        let mut crng = ChaCha8Rng::seed_from_u64(clutter_seed);
        let noise = Normal::new(0.0, 0.015 * clutter).expect("valid std");
        bg.mapv_inplace(|v| v + noise.sample(&mut crng));
    }
    bg.mapv_inplace(|v| v.clamp(0.0, 1.0));
    bg
}

struct Blob {
    pixels: Vec<(usize, usize)>,
    /// Gaussian profile in `(0, 1]` for each pixel.
    profile: Vec<f64>,
    bbox: BBox,
    window: BBox,
}

/// The `area` pixels of highest density of an oriented Gaussian centered at
/// `(cy, cx)`, or `None` when the blob does not fit inside the frame.
fn place_blob(size: usize, area: usize, cy: f64, cx: f64, aspect: f64, angle: f64) -> Option<Blob> {
    let minor = (area as f64 / (std::f64::consts::PI * aspect)).sqrt().max(0.5);
    let major = minor * aspect;
    let r = (3.0 * major).ceil() as i64 + 1;
    let (sin, cos) = angle.sin_cos();
    let mut cand = Vec::new();
    for y in (cy.round() as i64 - r)..=(cy.round() as i64 + r) {
        for x in (cx.round() as i64 - r)..=(cx.round() as i64 + r) {
            if y < 0 || x < 0 || y >= size as i64 || x >= size as i64 {
                continue;
            }
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let u = (dx * cos + dy * sin) / major;
            let v = (-dx * sin + dy * cos) / minor;
            cand.push((u * u + v * v, y as usize, x as usize));
        }
    }
    if cand.len() < area {
        return None;
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    cand.truncate(area);
    let pixels: Vec<(usize, usize)> = cand.iter().map(|c| (c.1, c.2)).collect();
    let profile = cand.iter().map(|c| (-0.5 * c.0).exp()).collect();
    let y0 = pixels.iter().map(|p| p.0).min()?;
    let y1 = pixels.iter().map(|p| p.0).max()?;
    let x0 = pixels.iter().map(|p| p.1).min()?;
    let x1 = pixels.iter().map(|p| p.1).max()?;
    // keep a background ring on every side
    if y0 == 0 || x0 == 0 || y1 + 1 >= size || x1 + 1 >= size {
        return None;
    }
    let bbox = (y0, x0, y1, x1);
    let window = neighborhood_window(bbox, (size, size));
    Some(Blob { pixels, profile, bbox, window })
}

fn overlaps(a: BBox, b: BBox) -> bool {
    a.0 <= b.2 && b.0 <= a.2 && a.1 <= b.3 && b.1 <= a.3
}

fn blob_mask(blob: &Blob, size: usize) -> BinaryMask {
    let mut m = BinaryMask::zeros((size, size));
    for &(y, x) in &blob.pixels {
        m.set(y, x, true);
    }
    m
}

const PLACEMENT_TRIES: usize = 200;

/// One scene attempt; `Ok(None)` means the draw should be resampled.
fn try_scene(params: &SceneParams, rng: &mut ChaCha8Rng) -> Result<Option<(GrayImage, BinaryMask, SceneMeta)>> {
    let s = params.image_size;
    let count = 1 + WeightedIndex::new(&params.target_count_pmf).map_err(|e| Error::Config(e.to_string()))?.sample(rng);
    let kind = params.background_kinds[rng.random_range(0..params.background_kinds.len())];
    let clutter_seed = rng.next_u64();
    let bg = background(kind, s, params.clutter_strength, clutter_seed, rng);
    let area_dist = LogNormal::new(params.area_median.ln(), params.area_log_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let (amin, amax) = params.target_area_range;
    let (slo, shi) = params.scr_range;

    let mut blobs: Vec<Blob> = Vec::new();
    let mut requests = Vec::new();
    for _ in 0..count {
        let area = (area_dist.sample(rng).round() as usize).clamp(amin, amax);
        let requested = (rng.random_range(slo.ln()..=shi.ln())).exp();
        let aspect = rng.random_range(1.0..2.5);
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            let cy = rng.random_range(1.0..(s as f64 - 2.0));
            let cx = rng.random_range(1.0..(s as f64 - 2.0));
            if let Some(b) = place_blob(s, area, cy, cx, aspect, angle) {
                if blobs.iter().all(|o| !overlaps(o.window, b.window)) {
                    placed = Some(b);
                    break;
                }
            }
        }
        match placed {
            Some(b) => {
                blobs.push(b);
                requests.push(requested);
            }
            None => return Ok(None),
        }
    }

    let bg_img = GrayImage::new(bg.clone())?;
    let mut img = bg;
    let mut gt = BinaryMask::zeros((s, s));
    let mut masks = Vec::new();
    for (blob, &requested) in blobs.iter().zip(&requests) {
        let m = blob_mask(blob, s);
        let base = match scr(&bg_img, &m) {
            Ok(st) => st,
            Err(Error::DegenerateBackground { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let mean_profile = blob.profile.iter().sum::<f64>() / blob.profile.len() as f64;
        let amp = (base.mu_c + requested * base.sigma_c - base.mu_t) / mean_profile;
        if amp <= 0.0 {
            return Ok(None);
        }
        for (&(y, x), &p) in blob.pixels.iter().zip(&blob.profile) {
            let v = img[[y, x]] + amp * p;
            if v > 1.0 {
                return Ok(None);
            }
            img[[y, x]] = v;
            gt.set(y, x, true);
        }
        debug_assert!(bounding_box(&m) == Some(blob.bbox));
        masks.push(m);
    }
    let image = GrayImage::new(img)?;
    let mut targets = Vec::new();
    for (m, &requested) in masks.iter().zip(&requests) {
        let achieved = scr(&image, m)?.scr;
        if (achieved - requested).abs() > params.scr_tolerance * requested {
            return Ok(None);
        }
        let n = m.count_ones() as f64;
        let (sy, sx) = m.pixels().indexed_iter().filter(|(_, &v)| v == 1).fold((0.0, 0.0), |(a, b), ((y, x), _)| (a + y as f64, b + x as f64));
        targets.push(TargetMeta { centroid: (sy / n, sx / n), area: m.count_ones(), requested_scr: requested, achieved_scr: achieved });
    }
    Ok(Some((image, gt, SceneMeta { background: kind, clutter_seed, targets })))
}

/// Generates one scene; identical seeds give identical output.
pub fn synth_scene(params: &SceneParams, rng_seed: u64) -> Result<(GrayImage, BinaryMask, SceneMeta)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..params.max_attempts {
        if let Some(scene) = try_scene(params, &mut rng)? {
            return Ok(scene);
        }
    }
    Err(Error::Generation(format!(
        "no valid scene after {} attempts (scr range {:?}, area range {:?})",
        params.max_attempts, params.scr_range, params.target_area_range
    )))
}

/// `n` scenes with per-scene seeds drawn from `seed`; stems are
/// `scene_00000`, `scene_00001`, ….
pub fn synth_dataset(params: &SceneParams, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("scene count must be at least 1".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let scene_seed = master.next_u64();
        let (image, mask, meta) =
            synth_scene(params, scene_seed).map_err(|e| Error::Generation(format!("scene {i}: {e}")))?;
        items.push(Sample { stem: format!("scene_{i:05}"), image, mask, meta: Some(meta) });
    }
    Dataset::new(items, None)
}
