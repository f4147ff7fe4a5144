use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{accumulate_column_sums, truncated_normal, Layer, Mode, Param, CONV_INIT_STD};
use crate::gemm::gemm;
use crate::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

/// Sliding-window geometry between a "large" spatial grid and the "small"
/// grid of window positions. A convolution maps large to small; a transposed
/// convolution maps small to large through the same geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub large_h: usize,
    pub large_w: usize,
    pub small_h: usize,
    pub small_w: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

fn pad_before(large: usize, small: usize, k: usize, s: usize) -> usize {
    ((small.saturating_sub(1)) * s + k).saturating_sub(large) / 2
}

impl ConvGeometry {
    /// Geometry of a convolution over a `h x w` input; `None` if the kernel
    /// does not fit under VALID padding.
    pub fn conv(h: usize, w: usize, kh: usize, kw: usize, stride: usize, padding: Padding) -> Option<Self> {
        let (oh, ow) = match padding {
            Padding::Same => (h.div_ceil(stride), w.div_ceil(stride)),
            Padding::Valid => {
                if kh > h || kw > w {
                    return None;
                }
                ((h - kh) / stride + 1, (w - kw) / stride + 1)
            }
        };
        Some(Self::with(h, w, oh, ow, kh, kw, stride, padding))
    }

    /// Geometry of a transposed convolution from a `h x w` input.
    pub fn transpose(h: usize, w: usize, kh: usize, kw: usize, stride: usize, padding: Padding) -> Self {
        let (oh, ow) = match padding {
            Padding::Same => (h * stride, w * stride),
            Padding::Valid => ((h - 1) * stride + kh, (w - 1) * stride + kw),
        };
        Self::with(oh, ow, h, w, kh, kw, stride, padding)
    }

    #[allow(clippy::too_many_arguments)]
    fn with(
        large_h: usize,
        large_w: usize,
        small_h: usize,
        small_w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: Padding,
    ) -> Self {
        let (pad_top, pad_left) = match padding {
            Padding::Same => (
                pad_before(large_h, small_h, kh, stride),
                pad_before(large_w, small_w, kw, stride),
            ),
            Padding::Valid => (0, 0),
        };
        Self {
            large_h,
            large_w,
            small_h,
            small_w,
            kernel_h: kh,
            kernel_w: kw,
            stride,
            pad_top,
            pad_left,
        }
    }

    fn positions(&self) -> usize {
        self.small_h * self.small_w
    }

    /// Unfolds `n` images of `large_h x large_w x c` into rows of
    /// `kh * kw * c` values, one row per window position.
    fn im2col(&self, x: &[f32], n: usize, c: usize, cols: &mut [f32]) {
        let k = self.kernel_h * self.kernel_w * c;
        let img = self.large_h * self.large_w * c;
        let mut row = 0;
        for b in 0..n {
            let src = &x[b * img..(b + 1) * img];
            for oy in 0..self.small_h {
                for ox in 0..self.small_w {
                    let dst = &mut cols[row * k..(row + 1) * k];
                    let mut off = 0;
                    for ky in 0..self.kernel_h {
                        let iy = (oy * self.stride + ky) as isize - self.pad_top as isize;
                        for kx in 0..self.kernel_w {
                            let ix = (ox * self.stride + kx) as isize - self.pad_left as isize;
                            let seg = &mut dst[off..off + c];
                            if iy >= 0 && ix >= 0 && (iy as usize) < self.large_h && (ix as usize) < self.large_w {
                                let s = (iy as usize * self.large_w + ix as usize) * c;
                                seg.copy_from_slice(&src[s..s + c]);
                            } else {
                                seg.fill(0.0);
                            }
                            off += c;
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters rows back, summing overlaps.
    fn col2im(&self, cols: &[f32], n: usize, c: usize, x: &mut [f32]) {
        let k = self.kernel_h * self.kernel_w * c;
        let img = self.large_h * self.large_w * c;
        let mut row = 0;
        for b in 0..n {
            let dst = &mut x[b * img..(b + 1) * img];
            for oy in 0..self.small_h {
                for ox in 0..self.small_w {
                    let src = &cols[row * k..(row + 1) * k];
                    let mut off = 0;
                    for ky in 0..self.kernel_h {
                        let iy = (oy * self.stride + ky) as isize - self.pad_top as isize;
                        for kx in 0..self.kernel_w {
                            let ix = (ox * self.stride + kx) as isize - self.pad_left as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < self.large_h && (ix as usize) < self.large_w {
                                let d = (iy as usize * self.large_w + ix as usize) * c;
                                for (a, v) in dst[d..d + c].iter_mut().zip(&src[off..off + c]) {
                                    *a += v;
                                }
                            }
                            off += c;
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

const COL_BUDGET: usize = 1 << 22;

fn chunk_size(per_item: usize, n: usize) -> usize {
    (COL_BUDGET / per_item.max(1)).clamp(1, n.max(1))
}

/// 2-D convolution over NHWC input with weights `[kh, kw, cin, cout]`.
#[derive(Debug)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    stride: usize,
    padding: Padding,
    input: Tensor,
    geom: Option<ConvGeometry>,
}

impl Conv2d {
    pub fn new(rng: &mut impl Rng, filter: [usize; 4], stride: usize, padding: Padding) -> Self {
        let n = filter.iter().product();
        Self {
            weight: Param::new(&filter, truncated_normal(rng, n, CONV_INIT_STD)),
            bias: Param::zeros(&[filter[3]]),
            stride,
            padding,
            input: Tensor::default(),
            geom: None,
        }
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = &self.weight.shape;
        (s[0], s[1], s[2], s[3])
    }
}

impl Layer for Conv2d {
    fn kind(&self) -> &'static str {
        "conv"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        let (kh, kw, cin, cout) = self.dims();
        let [n, h, w, c] = x.shape() else { panic!("conv expects NHWC input, got {:?}", x.shape()) };
        assert_eq!(*c, cin, "conv input channels");
        let g = ConvGeometry::conv(*h, *w, kh, kw, self.stride, self.padding).expect("kernel larger than input");
        let (n, k, pos) = (*n, kh * kw * cin, g.positions());
        let mut y = vec![0.0; n * pos * cout];
        let chunk = chunk_size(pos * k, n);
        let mut cols = vec![0.0; chunk * pos * k];
        let img = h * w * cin;
        for b0 in (0..n).step_by(chunk) {
            let nb = chunk.min(n - b0);
            let rows = nb * pos;
            g.im2col(&x.data()[b0 * img..(b0 + nb) * img], nb, cin, &mut cols);
            let out = &mut y[b0 * pos * cout..(b0 + nb) * pos * cout];
            for r in out.chunks_exact_mut(cout) {
                r.copy_from_slice(&self.bias.value);
            }
            gemm(rows, k, cout, &cols, false, &self.weight.value, false, out, 1.0);
        }
        self.input = x.clone();
        self.geom = Some(g);
        Tensor::from_vec(&[n, g.small_h, g.small_w, cout], y)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (kh, kw, cin, cout) = self.dims();
        let g = self.geom.expect("backward before forward");
        let n = self.input.batch();
        let (k, pos) = (kh * kw * cin, g.positions());
        let img = g.large_h * g.large_w * cin;
        let mut dx = vec![0.0; n * img];
        let chunk = chunk_size(pos * k, n);
        let mut cols = vec![0.0; chunk * pos * k];
        let mut dcols = vec![0.0; chunk * pos * k];
        accumulate_column_sums(&mut self.bias.grad, grad.data(), cout);
        for b0 in (0..n).step_by(chunk) {
            let nb = chunk.min(n - b0);
            let rows = nb * pos;
            let dy = &grad.data()[b0 * pos * cout..(b0 + nb) * pos * cout];
            g.im2col(&self.input.data()[b0 * img..(b0 + nb) * img], nb, cin, &mut cols);
            gemm(k, rows, cout, &cols, true, dy, false, &mut self.weight.grad, 1.0);
            gemm(rows, cout, k, dy, false, &self.weight.value, true, &mut dcols, 0.0);
            g.col2im(&dcols[..rows * k], nb, cin, &mut dx[b0 * img..(b0 + nb) * img]);
        }
        Tensor::from_vec(self.input.shape(), dx)
    }

    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}

/// Transposed convolution over NHWC input. The filter is given as
/// `[kh, kw, cin, cout]` and stored as `[kh, kw, cout, cin]`.
#[derive(Debug)]
pub struct ConvTranspose2d {
    pub weight: Param,
    pub bias: Param,
    stride: usize,
    padding: Padding,
    input: Tensor,
    geom: Option<ConvGeometry>,
}

impl ConvTranspose2d {
    pub fn new(rng: &mut impl Rng, filter: [usize; 4], stride: usize, padding: Padding) -> Self {
        let [kh, kw, cin, cout] = filter;
        Self {
            weight: Param::new(&[kh, kw, cout, cin], truncated_normal(rng, kh * kw * cin * cout, CONV_INIT_STD)),
            bias: Param::zeros(&[cout]),
            stride,
            padding,
            input: Tensor::default(),
            geom: None,
        }
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = &self.weight.shape;
        (s[0], s[1], s[3], s[2])
    }
}

impl Layer for ConvTranspose2d {
    fn kind(&self) -> &'static str {
        "conv-transpose"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        let (kh, kw, cin, cout) = self.dims();
        let [n, h, w, c] = x.shape() else { panic!("conv-transpose expects NHWC input, got {:?}", x.shape()) };
        assert_eq!(*c, cin, "conv-transpose input channels");
        let g = ConvGeometry::transpose(*h, *w, kh, kw, self.stride, self.padding);
        let (n, k, pos) = (*n, kh * kw * cout, g.positions());
        let out_img = g.large_h * g.large_w * cout;
        let mut y = vec![0.0; n * out_img];
        let chunk = chunk_size(pos * k, n);
        let mut cols = vec![0.0; chunk * pos * k];
        for b0 in (0..n).step_by(chunk) {
            let nb = chunk.min(n - b0);
            let rows = nb * pos;
            let xin = &x.data()[b0 * pos * cin..(b0 + nb) * pos * cin];
            gemm(rows, cin, k, xin, false, &self.weight.value, true, &mut cols, 0.0);
            g.col2im(&cols[..rows * k], nb, cout, &mut y[b0 * out_img..(b0 + nb) * out_img]);
        }
        for px in y.chunks_exact_mut(cout) {
            for (v, b) in px.iter_mut().zip(&self.bias.value) {
                *v += b;
            }
        }
        self.input = x.clone();
        self.geom = Some(g);
        Tensor::from_vec(&[n, g.large_h, g.large_w, cout], y)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (kh, kw, cin, cout) = self.dims();
        let g = self.geom.expect("backward before forward");
        let n = self.input.batch();
        let (k, pos) = (kh * kw * cout, g.positions());
        let out_img = g.large_h * g.large_w * cout;
        let mut dx = vec![0.0; n * pos * cin];
        let chunk = chunk_size(pos * k, n);
        let mut cols = vec![0.0; chunk * pos * k];
        accumulate_column_sums(&mut self.bias.grad, grad.data(), cout);
        for b0 in (0..n).step_by(chunk) {
            let nb = chunk.min(n - b0);
            let rows = nb * pos;
            g.im2col(&grad.data()[b0 * out_img..(b0 + nb) * out_img], nb, cout, &mut cols);
            let xin = &self.input.data()[b0 * pos * cin..(b0 + nb) * pos * cin];
            gemm(rows, k, cin, &cols, false, &self.weight.value, false, &mut dx[b0 * pos * cin..(b0 + nb) * pos * cin], 0.0);
            gemm(k, rows, cin, &cols, true, xin, false, &mut self.weight.grad, 1.0);
        }
        Tensor::from_vec(self.input.shape(), dx)
    }

    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}
