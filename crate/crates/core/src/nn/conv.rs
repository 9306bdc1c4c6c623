use rand::Rng;

use super::{Param, Real, Tensor4};
use crate::error::{Error, Result};

/// Same-padded 2-D cross-correlation with bias, kernel size 1 or 3.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    /// `(out_ch, in_ch, kernel, kernel)`
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor4<T>>,
}

impl<T: Real> Conv2d<T> {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng>(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel != 1 && kernel != 3 {
            return Err(Error::InvalidArgument(format!(
                "kernel size {kernel} unsupported (1 or 3)"
            )));
        }
        if in_ch == 0 || out_ch == 0 {
            return Err(Error::InvalidArgument("channel counts must be positive".into()));
        }
        let taps = kernel * kernel;
        let limit = (6.0 / ((in_ch + out_ch) * taps) as f64).sqrt();
        let w = (0..out_ch * in_ch * taps)
            .map(|_| T::lit(rng.gen_range(-limit..limit)))
            .collect();
        Ok(Self::from_parts(name, in_ch, out_ch, kernel, w, vec![T::zero(); out_ch]))
    }

    pub fn from_parts(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        weight: Vec<T>,
        bias: Vec<T>,
    ) -> Self {
        Conv2d {
            in_ch,
            out_ch,
            kernel,
            weight: Param::new(
                format!("{name}.weight"),
                vec![out_ch, in_ch, kernel, kernel],
                weight,
            ),
            bias: Param::new(format!("{name}.bias"), vec![out_ch], bias),
            input: None,
        }
    }

    fn col_rows(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    /// Time rows per patch-column tile, sized so a tile stays cache resident.
    fn tile_rows(&self, channels: usize, h: usize, w: usize) -> usize {
        const TILE_ELEMS: usize = 1 << 16;
        let rows = channels * self.kernel * self.kernel;
        (TILE_ELEMS / (rows * w).max(1)).clamp(1, h.max(1))
    }

    pub fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Like [`Conv2d::forward`], keeping `x` itself for backward.
    pub fn forward_owned(&mut self, x: Tensor4<T>) -> Result<Tensor4<T>> {
        let y = self.infer(&x)?;
        self.input = Some(x);
        Ok(y)
    }

    /// Forward pass without caching the input for backward.
    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let [b, c, h, w] = x.dims;
        if c != self.in_ch {
            return Err(Error::Shape(format!(
                "{}: expected {} input channels, got {c}",
                self.weight.name, self.in_ch
            )));
        }
        let hw = h * w;
        let rows = self.col_rows();
        let mut data = Vec::with_capacity(b * self.out_ch * hw);
        for _ in 0..b {
            for &bias in &self.bias.value {
                data.extend(std::iter::repeat(bias).take(hw));
            }
        }
        let mut y = Tensor4 { dims: [b, self.out_ch, h, w], data };
        let tile = self.tile_rows(c, h, w);
        let mut col = vec![T::zero(); if self.kernel == 1 { 0 } else { rows * tile * w }];
        for bi in 0..b {
            let xs = x.sample(bi);
            let ys = y.sample_mut(bi);
            for t0 in (0..h).step_by(tile) {
                let t1 = (t0 + tile).min(h);
                let n = (t1 - t0) * w;
                let (src, src_stride): (&[T], usize) = if self.kernel == 1 {
                    (&xs[t0 * w..], hw)
                } else {
                    im2col(xs, c, h, w, self.kernel, t0, t1, &mut col[..rows * n]);
                    (&col[..rows * n], n)
                };
                T::gemm(
                    self.out_ch,
                    rows,
                    n,
                    &self.weight.value,
                    (rows as isize, 1),
                    src,
                    (src_stride as isize, 1),
                    T::one(),
                    &mut ys[t0 * w..],
                    (hw as isize, 1),
                );
            }
        }
        Ok(y)
    }

    /// Accumulates weight and bias gradients; returns the input gradient.
    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::InvalidArgument("conv backward before forward".into()))?;
        let [b, c, h, w] = x.dims;
        if dy.dims != [b, self.out_ch, h, w] {
            return Err(Error::Shape(format!(
                "{}: upstream gradient dims {:?}",
                self.weight.name, dy.dims
            )));
        }
        let hw = h * w;
        let k = self.kernel;
        let rows = self.col_rows();
        let tile = self.tile_rows(c, h, w);
        let mut col = vec![T::zero(); if k == 1 { 0 } else { rows * tile * w }];
        for bi in 0..b {
            let dys = dy.sample(bi);
            for (o, plane) in dys.chunks(hw).enumerate() {
                let s: T = plane.iter().copied().sum();
                self.bias.grad[o] += s;
            }
            let xs = x.sample(bi);
            for t0 in (0..h).step_by(tile) {
                let t1 = (t0 + tile).min(h);
                let n = (t1 - t0) * w;
                let (src, src_stride): (&[T], usize) = if k == 1 {
                    (&xs[t0 * w..], hw)
                } else {
                    im2col(xs, c, h, w, k, t0, t1, &mut col[..rows * n]);
                    (&col[..rows * n], n)
                };
                // dW += dY · colᵀ
                T::gemm(
                    self.out_ch,
                    n,
                    rows,
                    &dys[t0 * w..],
                    (hw as isize, 1),
                    src,
                    (1, src_stride as isize),
                    T::one(),
                    &mut self.weight.grad,
                    (rows as isize, 1),
                );
            }
        }

        // dX is the same-padded correlation of dY with the flipped,
        // channel-transposed kernel: W'[c, o, i, j] = W[o, c, k-1-i, k-1-j].
        let taps = k * k;
        let drows = self.out_ch * taps;
        let mut wt = vec![T::zero(); c * drows];
        for o in 0..self.out_ch {
            for ci in 0..c {
                for tap in 0..taps {
                    wt[ci * drows + o * taps + (taps - 1 - tap)] =
                        self.weight.value[(o * c + ci) * taps + tap];
                }
            }
        }
        let mut dx = Tensor4::zeros(x.dims);
        let dtile = self.tile_rows(self.out_ch, h, w);
        let mut dcol = vec![T::zero(); if k == 1 { 0 } else { drows * dtile * w }];
        for bi in 0..b {
            let dys = dy.sample(bi);
            let dxs = dx.sample_mut(bi);
            for t0 in (0..h).step_by(dtile) {
                let t1 = (t0 + dtile).min(h);
                let n = (t1 - t0) * w;
                let (src, src_stride): (&[T], usize) = if k == 1 {
                    (&dys[t0 * w..], hw)
                } else {
                    im2col(dys, self.out_ch, h, w, k, t0, t1, &mut dcol[..drows * n]);
                    (&dcol[..drows * n], n)
                };
                T::gemm(
                    c,
                    drows,
                    n,
                    &wt,
                    (drows as isize, 1),
                    src,
                    (src_stride as isize, 1),
                    T::zero(),
                    &mut dxs[t0 * w..],
                    (hw as isize, 1),
                );
            }
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Unfolds time rows `t0..t1` of one `(c, h, w)` sample into
/// `(c*k*k, (t1-t0)*w)` patch columns with zero padding.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    t0: usize,
    t1: usize,
    col: &mut [T],
) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let n = (t1 - t0) * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut col[row * n..(row + 1) * n];
                let di = ki as isize - pad;
                let dj = kj as isize - pad;
                for t in t0..t1 {
                    let out = &mut dst[(t - t0) * w..(t - t0 + 1) * w];
                    let st = t as isize + di;
                    if st < 0 || st >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[st as usize * w..(st as usize + 1) * w];
                    shift_copy(src, out, dj);
                }
            }
        }
    }
}

/// `out[f] = src[f + shift]`, zero where out of range.
fn shift_copy<T: Real>(src: &[T], out: &mut [T], shift: isize) {
    let w = src.len();
    match shift {
        0 => out.copy_from_slice(src),
        s if s > 0 => {
            let s = s as usize;
            out[..w - s].copy_from_slice(&src[s..]);
            out[w - s..].fill(T::zero());
        }
        s => {
            let s = (-s) as usize;
            out[..s].fill(T::zero());
            out[s..].copy_from_slice(&src[..w - s]);
        }
    }
}
