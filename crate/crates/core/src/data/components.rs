use ndarray::Array2;

use crate::image::BinaryMask;

/// One 8-connected foreground component, pixels in raster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub pixels: Vec<(usize, usize)>,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let (sy, sx) = self.pixels.iter().fold((0.0, 0.0), |(a, b), &(y, x)| (a + y as f64, b + x as f64));
        (sy / n, sx / n)
    }

    pub fn to_mask(&self, shape: (usize, usize)) -> BinaryMask {
        let mut m = BinaryMask::zeros(shape);
        for &(y, x) in &self.pixels {
            m.set(y, x, true);
        }
        m
    }
}

/// Labels 8-connected components; the label map holds 0 for background and
/// `k + 1` for component `k`. Components are ordered by their first pixel in
/// raster order.
pub fn label_components(mask: &BinaryMask) -> (Array2<usize>, Vec<Component>) {
    let (h, w) = mask.shape();
    let mut labels = Array2::<usize>::zeros((h, w));
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for y0 in 0..h {
        for x0 in 0..w {
            if !mask.get(y0, x0) || labels[[y0, x0]] != 0 {
                continue;
            }
            let id = comps.len() + 1;
            labels[[y0, x0]] = id;
            stack.push((y0, x0));
            let mut pixels = Vec::new();
            while let Some((y, x)) = stack.pop() {
                pixels.push((y, x));
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        if mask.get(ny, nx) && labels[[ny, nx]] == 0 {
                            labels[[ny, nx]] = id;
                            stack.push((ny, nx));
                        }
                    }
                }
            }
            pixels.sort_unstable();
            comps.push(Component { pixels });
        }
    }
    (labels, comps)
}
