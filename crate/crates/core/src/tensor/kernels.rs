//! Raw forward/backward kernels. Shapes are validated by the callers in `tape`.

use rayon::prelude::*;

use super::gemm::{gemm, MatMut, MatRef};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Upper bound on the number of elements in one patch-matrix band.
const COLS_BUDGET: usize = 1 << 21;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    pub fn new<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>) -> Result<Self> {
        let [batch, cin, height, width] = input.dims4()?;
        let [cout, wcin, kh, kw] = match weight.shape() {
            &[a, b, c, d] => [a, b, c, d],
            s => {
                return Err(Error::shape(
                    "conv2d",
                    format!("weight must be 4-D [Cout, Cin, kh, kw], got {s:?}"),
                ))
            }
        };
        if wcin != cin {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "input {:?} has {cin} channels but weight {:?} expects {wcin}",
                    input.shape(),
                    weight.shape()
                ),
            ));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::shape(
                "conv2d",
                format!("same padding needs odd kernel sizes, weight is {:?}", weight.shape()),
            ));
        }
        Ok(ConvGeom {
            batch,
            cin,
            cout,
            height,
            width,
            kh,
            kw,
        })
    }

    fn patch_len(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }

    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }

    /// Row bands `[r0, r1)` whose patch matrices fit the column budget.
    fn bands(&self) -> impl Iterator<Item = (usize, usize)> {
        let rows = (COLS_BUDGET / (self.patch_len() * self.width).max(1)).clamp(1, self.height);
        let h = self.height;
        (0..h).step_by(rows).map(move |r0| (r0, (r0 + rows).min(h)))
    }
}

/// Fills `cols` (`patch_len x (r1 - r0) * width`) with zero-padded patches of one image.
fn im2col<T: Scalar>(image: &[T], g: &ConvGeom, r0: usize, r1: usize, cols: &mut [T]) {
    let (h, w) = (g.height as isize, g.width);
    let (ph, pw) = ((g.kh / 2) as isize, (g.kw / 2) as isize);
    let span = (r1 - r0) * w;
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &image[ci * g.plane()..(ci + 1) * g.plane()];
        for dy in 0..g.kh as isize {
            for dx in 0..g.kw as isize {
                let dst = &mut cols[row * span..(row + 1) * span];
                let shift = dx - pw;
                let x_lo = (-shift).max(0) as usize;
                let x_hi = ((w as isize) - shift).min(w as isize).max(0) as usize;
                for y in r0..r1 {
                    let seg = &mut dst[(y - r0) * w..(y - r0 + 1) * w];
                    let sy = y as isize + dy - ph;
                    if sy < 0 || sy >= h || x_lo >= x_hi {
                        seg.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    seg[..x_lo].fill(T::zero());
                    seg[x_hi..].fill(T::zero());
                    let s0 = (x_lo as isize + shift) as usize;
                    seg[x_lo..x_hi].copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                }
                row += 1;
            }
        }
    }
}

/// Same-padded stride-1 cross-correlation plus optional per-channel bias.
pub(crate) fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let g = ConvGeom::new(input, weight)?;
    if let Some(b) = bias {
        if b.shape() != [g.cout] {
            return Err(Error::shape(
                "conv2d",
                format!("bias {:?} does not match {} output channels", b.shape(), g.cout),
            ));
        }
    }
    let plane = g.plane();
    let k = g.patch_len();
    let wmat = MatRef::row_major(weight.data(), g.cout, k);
    let mut out = vec![T::zero(); g.batch * g.cout * plane];
    out.par_chunks_mut(g.cout * plane)
        .zip(input.data().par_chunks(g.cin * plane))
        .for_each(|(out_b, in_b)| {
            if g.pointwise() {
                gemm(
                    T::one(),
                    wmat,
                    MatRef::row_major(in_b, g.cin, plane),
                    T::zero(),
                    MatMut::row_major(out_b, g.cout, plane),
                );
            } else {
                let mut cols = Vec::new();
                for (r0, r1) in g.bands() {
                    let span = (r1 - r0) * g.width;
                    cols.resize(k * span, T::zero());
                    im2col(in_b, &g, r0, r1, &mut cols);
                    gemm(
                        T::one(),
                        wmat,
                        MatRef::row_major(&cols, k, span),
                        T::zero(),
                        MatMut {
                            data: &mut out_b[r0 * g.width..],
                            rows: g.cout,
                            cols: span,
                            row_stride: plane,
                            col_stride: 1,
                        },
                    );
                }
            }
            if let Some(b) = bias {
                for (chan, &bv) in out_b.chunks_mut(plane).zip(b.data()) {
                    if bv != T::zero() {
                        chan.iter_mut().for_each(|v| *v += bv);
                    }
                }
            }
        });
    Tensor::new(vec![g.batch, g.cout, g.height, g.width], out)
}

/// Gradient w.r.t. the convolution input: correlation of the output gradient
/// with the spatially flipped, channel-transposed kernel.
pub(crate) fn conv2d_backward_input<T: Scalar>(
    grad_out: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [cout, cin, kh, kw] = match weight.shape() {
        &[a, b, c, d] => [a, b, c, d],
        s => return Err(Error::shape("conv2d_backward", format!("weight {s:?}"))),
    };
    let w = weight.data();
    let flipped = Tensor::from_fn(vec![cin, cout, kh, kw], |idx| {
        let dx = idx % kw;
        let dy = (idx / kw) % kh;
        let co = (idx / (kw * kh)) % cout;
        let ci = idx / (kw * kh * cout);
        w[((co * cin + ci) * kh + (kh - 1 - dy)) * kw + (kw - 1 - dx)]
    });
    conv2d_forward(grad_out, &flipped, None)
}

/// Gradients w.r.t. weight and bias.
pub(crate) fn conv2d_backward_params<T: Scalar>(
    input: &Tensor<T>,
    weight_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let weight_like = Tensor::<T>::zeros(weight_shape.to_vec());
    let g = ConvGeom::new(input, &weight_like)?;
    let plane = g.plane();
    let k = g.patch_len();
    let partial = |b: usize| -> Vec<T> {
        let in_b = &input.data()[b * g.cin * plane..(b + 1) * g.cin * plane];
        let go_b = &grad_out.data()[b * g.cout * plane..(b + 1) * g.cout * plane];
        let mut dw = vec![T::zero(); g.cout * k];
        if g.pointwise() {
            gemm(
                T::one(),
                MatRef::row_major(go_b, g.cout, plane),
                MatRef::row_major(in_b, g.cin, plane).t(),
                T::zero(),
                MatMut::row_major(&mut dw, g.cout, k),
            );
            return dw;
        }
        let mut cols = Vec::new();
        for (r0, r1) in g.bands() {
            let span = (r1 - r0) * g.width;
            cols.resize(k * span, T::zero());
            im2col(in_b, &g, r0, r1, &mut cols);
            gemm(
                T::one(),
                MatRef {
                    data: &go_b[r0 * g.width..],
                    rows: g.cout,
                    cols: span,
                    row_stride: plane,
                    col_stride: 1,
                },
                MatRef::row_major(&cols, k, span).t(),
                T::one(),
                MatMut::row_major(&mut dw, g.cout, k),
            );
        }
        dw
    };
    let dw = (0..g.batch)
        .into_par_iter()
        .map(partial)
        .reduce_with(|mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        })
        .unwrap_or_else(|| vec![T::zero(); g.cout * k]);
    let mut db = vec![T::zero(); g.cout];
    for (i, chan) in grad_out.data().chunks(plane).enumerate() {
        db[i % g.cout] += chan.iter().copied().sum::<T>();
    }
    Ok((
        Tensor::new(weight_shape.to_vec(), dw)?,
        Tensor::new(vec![g.cout], db)?,
    ))
}

/// 2x2 max pooling. Returns the pooled tensor and, per output cell, the
/// offset (0..4, row-major) of the winning input inside its window.
pub(crate) fn maxpool2x2_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u8>)> {
    let [b, c, h, w] = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(
            "maxpool2x2",
            format!("spatial dims must be even, got {:?}", input.shape()),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut arg = Vec::with_capacity(b * c * oh * ow);
    for plane in input.data().chunks(h * w) {
        for y in 0..oh {
            let top = &plane[2 * y * w..(2 * y + 1) * w];
            let bottom = &plane[(2 * y + 1) * w..(2 * y + 2) * w];
            for x in 0..ow {
                let cand = [top[2 * x], top[2 * x + 1], bottom[2 * x], bottom[2 * x + 1]];
                let mut best = 0u8;
                for (i, &v) in cand.iter().enumerate().skip(1) {
                    // strict comparison keeps the first index on ties
                    if v > cand[best as usize] {
                        best = i as u8;
                    }
                }
                out.push(cand[best as usize]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![b, c, oh, ow], out)?, arg))
}

pub(crate) fn maxpool2x2_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    argmax: &[u8],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    let mut grad = Tensor::<T>::zeros(input_shape.to_vec());
    let [_, _, h, w] = grad.dims4()?;
    let (oh, ow) = (h / 2, w / 2);
    let go = grad_out.data();
    for (p, plane) in grad.data_mut().chunks_mut(h * w).enumerate() {
        for y in 0..oh {
            for x in 0..ow {
                let o = (p * oh + y) * ow + x;
                let a = argmax[o] as usize;
                plane[(2 * y + a / 2) * w + 2 * x + a % 2] += go[o];
            }
        }
    }
    Ok(grad)
}

pub(crate) fn upsample2x_forward<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = input.dims4()?;
    let ow = 2 * w;
    let mut out = Vec::with_capacity(b * c * 4 * h * w);
    let mut line = vec![T::zero(); ow];
    for plane in input.data().chunks(h * w) {
        for y in 0..h {
            for (x, &v) in plane[y * w..(y + 1) * w].iter().enumerate() {
                line[2 * x] = v;
                line[2 * x + 1] = v;
            }
            out.extend_from_slice(&line);
            out.extend_from_slice(&line);
        }
    }
    Tensor::new(vec![b, c, 2 * h, ow], out)
}

pub(crate) fn upsample2x_backward<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h2, w2] = grad_out.dims4()?;
    let (h, w) = (h2 / 2, w2 / 2);
    let mut grad = Vec::with_capacity(b * c * h * w);
    for plane in grad_out.data().chunks(h2 * w2) {
        for y in 0..h {
            let r0 = &plane[2 * y * w2..(2 * y + 1) * w2];
            let r1 = &plane[(2 * y + 1) * w2..(2 * y + 2) * w2];
            for x in 0..w {
                grad.push(r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
            }
        }
    }
    Tensor::new(vec![b, c, h, w], grad)
}
