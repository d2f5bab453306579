use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array4, ArrayView2, ArrayViewMut2, Axis};

use super::param::{child, Module, Param};
use crate::real::Real;

/// Square-kernel 2-D convolution with dilation and "same" zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d<F> {
    /// `[out, in, k, k]`
    pub weight: Param<F>,
    pub bias: Option<Param<F>>,
    pub kernel: usize,
    pub dilation: usize,
}

/// Unfolds one `[c, h, w]` image (contiguous) into `[c·k·k, h·w]` columns.
pub fn im2col<F: Real>(x: &[F], c: usize, h: usize, w: usize, k: usize, d: usize, cols: &mut [F]) {
    let hw = h * w;
    let pad = (d * (k - 1) / 2) as isize;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            let oy = (ky * d) as isize - pad;
            for kx in 0..k {
                let ox = (kx * d) as isize - pad;
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let x_lo = (-ox).clamp(0, w as isize) as usize;
                let x_hi = (w as isize - ox).clamp(0, w as isize) as usize;
                for y in 0..h {
                    let drow = &mut dst[y * w..(y + 1) * w];
                    let sy = y as isize + oy;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        drow.fill(F::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    drow[..x_lo].fill(F::zero());
                    drow[x_hi..].fill(F::zero());
                    let s0 = (x_lo as isize + ox) as usize;
                    drow[x_lo..x_hi].copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
pub fn col2im<F: Real>(cols: &[F], c: usize, h: usize, w: usize, k: usize, d: usize, dx: &mut [F]) {
    let hw = h * w;
    let pad = (d * (k - 1) / 2) as isize;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            let oy = (ky * d) as isize - pad;
            for kx in 0..k {
                let ox = (kx * d) as isize - pad;
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let x_lo = (-ox).clamp(0, w as isize) as usize;
                let x_hi = (w as isize - ox).clamp(0, w as isize) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + oy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s0 = (x_lo as isize + ox) as usize;
                    let dst = &mut plane[sy as usize * w + s0..sy as usize * w + s0 + (x_hi - x_lo)];
                    for (o, &g) in dst.iter_mut().zip(&src[y * w + x_lo..y * w + x_hi]) {
                        *o = *o + g;
                    }
                }
            }
        }
    }
}

impl<F: Real> Conv2d<F> {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, dilation: usize, bias: bool) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        Self {
            weight: Param::zeros(&[out_ch, in_ch, kernel, kernel]),
            bias: bias.then(|| Param::zeros(&[out_ch])),
            kernel,
            dilation,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    fn weight_2d(&self) -> ArrayView2<'_, F> {
        let (o, i, k) = (self.out_channels(), self.in_channels(), self.kernel);
        self.weight
            .value
            .view()
            .into_shape_with_order((o, i * k * k))
            .expect("conv weight is contiguous")
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1
    }

    pub fn forward(&self, x: &Array4<F>) -> Array4<F> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels(), "conv input channels");
        let co = self.out_channels();
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let wmat = self.weight_2d();
        let mut out = Array4::<F>::zeros((n, co, h, w));
        let mut cols = if self.is_pointwise() { Array2::zeros((0, 0)) } else { Array2::zeros((c * self.kernel * self.kernel, h * w)) };
        for (b, mut ob) in out.axis_iter_mut(Axis(0)).enumerate() {
            let img = &xs[b * c * h * w..(b + 1) * c * h * w];
            let mut ob: ArrayViewMut2<F> = ob.view_mut().into_shape_with_order((co, h * w)).expect("contiguous output");
            if self.is_pointwise() {
                let xin = ArrayView2::from_shape((c, h * w), img).expect("shape");
                general_mat_mul(F::one(), &wmat, &xin, F::zero(), &mut ob);
            } else {
                im2col(img, c, h, w, self.kernel, self.dilation, cols.as_slice_mut().expect("contiguous"));
                general_mat_mul(F::one(), &wmat, &cols, F::zero(), &mut ob);
            }
            if let Some(bias) = &self.bias {
                for (mut row, &bv) in ob.axis_iter_mut(Axis(0)).zip(bias.value.iter()) {
                    row.mapv_inplace(|v| v + bv);
                }
            }
        }
        out
    }

    /// Accumulates weight/bias gradients; returns the input gradient when
    /// `need_input_grad` is set.
    pub fn backward(&mut self, x: &Array4<F>, dy: &Array4<F>, need_input_grad: bool) -> Option<Array4<F>> {
        let (n, c, h, w) = x.dim();
        let co = self.out_channels();
        let k = self.kernel;
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let dy = dy.as_standard_layout();
        let dys = dy.as_slice().expect("standard layout");

        let mut dw = Array2::<F>::zeros((co, c * k * k));
        let mut db = Array1::<F>::zeros(co);
        let mut dx = need_input_grad.then(|| Array4::<F>::zeros((n, c, h, w)));
        let mut cols = if self.is_pointwise() { Array2::zeros((0, 0)) } else { Array2::zeros((c * k * k, h * w)) };
        let mut dcols = Array2::<F>::zeros((c * k * k, h * w));
        let wmat = self.weight_2d().to_owned();

        for b in 0..n {
            let img = &xs[b * c * h * w..(b + 1) * c * h * w];
            let g = ArrayView2::from_shape((co, h * w), &dys[b * co * h * w..(b + 1) * co * h * w]).expect("shape");
            if self.bias.is_some() {
                db += &g.sum_axis(Axis(1));
            }
            if self.is_pointwise() {
                let xin = ArrayView2::from_shape((c, h * w), img).expect("shape");
                general_mat_mul(F::one(), &g, &xin.t(), F::one(), &mut dw);
            } else {
                im2col(img, c, h, w, k, self.dilation, cols.as_slice_mut().expect("contiguous"));
                general_mat_mul(F::one(), &g, &cols.t(), F::one(), &mut dw);
            }
            if let Some(dx) = dx.as_mut() {
                general_mat_mul(F::one(), &wmat.t(), &g, F::zero(), &mut dcols);
                let mut dxb = dx.index_axis_mut(Axis(0), b);
                let dxs = dxb.as_slice_mut().expect("contiguous");
                if self.is_pointwise() {
                    dxs.copy_from_slice(dcols.as_slice().expect("contiguous"));
                } else {
                    col2im(dcols.as_slice().expect("contiguous"), c, h, w, k, self.dilation, dxs);
                }
            }
        }
        let dw = dw.into_shape_with_order(self.weight.value.raw_dim()).expect("weight shape");
        self.weight.grad += &dw;
        if let Some(bias) = self.bias.as_mut() {
            bias.grad += &db.into_dyn();
        }
        dx
    }
}

impl<F: Real> Module<F> for Conv2d<F> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        out.push((child(prefix, "weight"), &self.weight));
        if let Some(b) = &self.bias {
            out.push((child(prefix, "bias"), b));
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        out.push((child(prefix, "weight"), &mut self.weight));
        if let Some(b) = &mut self.bias {
            out.push((child(prefix, "bias"), b));
        }
    }
}
