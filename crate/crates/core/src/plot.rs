//! Static bar charts written as PNG. Values are also emitted as CSV by the
//! callers, so the charts carry no text.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

pub const WIDTH: u32 = 640;
pub const HEIGHT: u32 = 400;
const MARGIN: u32 = 32;

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
/// Series colors, cycled.
pub const PALETTE: [Rgb<u8>; 6] = [
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([44, 160, 44]),
    Rgb([214, 39, 40]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
];

fn fill_rect(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, color: Rgb<u8>) {
    for y in y0.min(y1)..=y0.max(y1).min(img.height() - 1) {
        for x in x0.min(x1)..=x0.max(x1).min(img.width() - 1) {
            img.put_pixel(x, y, color);
        }
    }
}

/// Grouped bars: `groups[g][s]` is series `s` in group `g`. Bar heights are
/// scaled to the largest value (or 1 when all are zero); negative and
/// non-finite values are drawn as zero.
pub fn grouped_bars(groups: &[Vec<f64>]) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BACKGROUND);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let plot_h = (bottom - top) as f64;
    for k in 1..=4 {
        let y = bottom - (plot_h * k as f64 / 4.0) as u32;
        fill_rect(&mut img, left, y, right, y, GRID);
    }
    let clean = |v: f64| if v.is_finite() && v > 0.0 { v } else { 0.0 };
    let max = groups.iter().flatten().copied().map(clean).fold(0.0, f64::max);
    let scale = if max > 0.0 { max } else { 1.0 };
    let n_groups = groups.len().max(1) as u32;
    let slot = (right - left) / n_groups;
    for (g, series) in groups.iter().enumerate() {
        let n = series.len().max(1) as u32;
        let inner = slot.saturating_sub(slot / 5).max(n);
        let bar = (inner / n).max(1);
        let x_start = left + g as u32 * slot + (slot - bar * n) / 2;
        for (s, &v) in series.iter().enumerate() {
            let h = (clean(v) / scale * plot_h).round() as u32;
            if h == 0 {
                continue;
            }
            let x0 = x_start + s as u32 * bar;
            fill_rect(&mut img, x0, bottom - h, x0 + bar.saturating_sub(2), bottom - 1, PALETTE[s % PALETTE.len()]);
        }
    }
    fill_rect(&mut img, left, top, left, bottom, AXIS);
    fill_rect(&mut img, left, bottom, right, bottom, AXIS);
    img
}

/// Single-series histogram.
pub fn histogram(counts: &[f64]) -> RgbImage {
    let groups: Vec<Vec<f64>> = counts.iter().map(|&c| vec![c]).collect();
    grouped_bars(&groups)
}

pub fn save(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    img.save_with_format(path, image::ImageFormat::Png).map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taller_value_gets_taller_bar() {
        let img = histogram(&[1.0, 3.0]);
        let column_height = |x: u32| (0..HEIGHT).filter(|&y| *img.get_pixel(x, y) == PALETTE[0]).count();
        let slot = (WIDTH - 2 * MARGIN) / 2;
        let a = column_height(MARGIN + slot / 2);
        let b = column_height(MARGIN + slot + slot / 2);
        assert!(a > 0 && b > 2 * a, "{a} {b}");
    }

    #[test]
    fn empty_and_degenerate_inputs_render() {
        assert_eq!(grouped_bars(&[]).dimensions(), (WIDTH, HEIGHT));
        assert_eq!(histogram(&[0.0, f64::NAN, -1.0]).dimensions(), (WIDTH, HEIGHT));
    }

    #[test]
    fn writes_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.png");
        save(&grouped_bars(&[vec![0.2, 0.5], vec![0.4, 0.1]]), &path).unwrap();
        assert_eq!(image::open(&path).unwrap().to_rgb8().dimensions(), (WIDTH, HEIGHT));
    }
}
