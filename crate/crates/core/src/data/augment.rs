use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};

/// Half-pixel-centered source coordinate for output index `i`.
fn source_coord(i: usize, from: usize, to: usize) -> f64 {
    ((i as f64 + 0.5) * from as f64 / to as f64 - 0.5).clamp(0.0, (from - 1) as f64)
}

pub fn resize_bilinear(image: &GrayImage, h: usize, w: usize) -> GrayImage {
    let (sh, sw) = image.shape();
    if (sh, sw) == (h, w) {
        return image.clone();
    }
    let src = image.pixels();
    let out = Array2::from_shape_fn((h, w), |(y, x)| {
        let fy = source_coord(y, sh, h);
        let fx = source_coord(x, sw, w);
        let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(sh - 1), (x0 + 1).min(sw - 1));
        let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
        let top = src[[y0, x0]] * (1.0 - tx) + src[[y0, x1]] * tx;
        let bot = src[[y1, x0]] * (1.0 - tx) + src[[y1, x1]] * tx;
        top * (1.0 - ty) + bot * ty
    });
    GrayImage::from_clamped(out).expect("non-empty output")
}

pub fn resize_nearest(mask: &BinaryMask, h: usize, w: usize) -> BinaryMask {
    let (sh, sw) = mask.shape();
    if (sh, sw) == (h, w) {
        return mask.clone();
    }
    BinaryMask::from_fn((h, w), |y, x| {
        let sy = ((y as f64 + 0.5) * sh as f64 / h as f64).floor() as usize;
        let sx = ((x as f64 + 0.5) * sw as f64 / w as f64).floor() as usize;
        mask.get(sy.min(sh - 1), sx.min(sw - 1))
    })
}

/// Square resize of an image/mask pair.
pub fn resize_pair(image: &GrayImage, mask: &BinaryMask, edge: usize) -> (GrayImage, BinaryMask) {
    (resize_bilinear(image, edge, edge), resize_nearest(mask, edge, edge))
}

/// Resizes to `resize × resize` and cuts the same random `crop × crop`
/// window from image and mask.
pub fn augment(image: &GrayImage, mask: &BinaryMask, resize: usize, crop: usize, rng: &mut impl Rng) -> Result<(GrayImage, BinaryMask)> {
    if crop == 0 || crop > resize {
        return Err(Error::Config(format!("crop {crop} must be in [1, resize = {resize}]")));
    }
    if image.shape() != mask.shape() {
        return Err(Error::Dimension { expected: image.shape(), found: mask.shape() });
    }
    let (img, m) = resize_pair(image, mask, resize);
    if crop == resize {
        return Ok((img, m));
    }
    let oy = rng.random_range(0..=resize - crop);
    let ox = rng.random_range(0..=resize - crop);
    let pix = img.pixels().slice(ndarray::s![oy..oy + crop, ox..ox + crop]).to_owned();
    let mpix = m.pixels().slice(ndarray::s![oy..oy + crop, ox..ox + crop]).to_owned();
    Ok((GrayImage::new(pix)?, BinaryMask::new(mpix)?))
}
