//! Layer primitives with their backward passes. Convolutions use "same" padding:
//! `(k - 1) / 2` zeros before and the rest after, so a 2x2 kernel reads the
//! pixel and its right/lower neighbours.

use alloc::vec::Vec;

use super::tensor::{Scalar, Tensor};

#[inline]
fn valid_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    (lo, hi.max(lo))
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let (ra, rb) = (chunks_a.remainder(), chunks_b.remainder());
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for l in 0..4 {
            acc[l] = acc[l] + ca[l] * cb[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o = *o + alpha * v;
    }
}

/// `weight` is `[out_c][in_c][k][k]`.
pub fn conv_forward<T: Scalar>(input: &Tensor<T>, weight: &[T], bias: &[T], out_c: usize, k: usize) -> Tensor<T> {
    let (in_c, h, w) = (input.channels, input.height, input.width);
    debug_assert_eq!(weight.len(), out_c * in_c * k * k);
    let pad = ((k - 1) / 2) as isize;
    let mut out = Tensor::zeros(out_c, h, w);
    for co in 0..out_c {
        let plane = out.plane_mut(co);
        plane.fill(bias[co]);
        for ci in 0..in_c {
            let src = input.plane(ci);
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(w, dx);
                    let wv = weight[((co * in_c + ci) * k + ky) * k + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        axpy(
                            wv,
                            &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)],
                            &mut plane[y * w + x0..y * w + x1],
                        );
                    }
                }
            }
        }
    }
    out
}

/// Accumulates kernel and bias gradients into `grad_w`/`grad_b` and returns the
/// gradient with respect to the input when `want_input` is set.
pub fn conv_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &[T],
    grad_out: &Tensor<T>,
    k: usize,
    grad_w: &mut [T],
    grad_b: &mut [T],
    want_input: bool,
) -> Option<Tensor<T>> {
    let (in_c, h, w) = (input.channels, input.height, input.width);
    let out_c = grad_out.channels;
    let pad = ((k - 1) / 2) as isize;
    let mut grad_in = want_input.then(|| Tensor::zeros(in_c, h, w));
    for co in 0..out_c {
        let g = grad_out.plane(co);
        grad_b[co] = grad_b[co] + g.iter().fold(T::zero(), |a, &v| a + v);
        for ci in 0..in_c {
            let src = input.plane(ci);
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(w, dx);
                    let wi = ((co * in_c + ci) * k + ky) * k + kx;
                    let run = x1 - x0;
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let grow = &g[y * w + x0..y * w + x1];
                        acc = acc + dot(grow, &src[sy * w + sx0..sy * w + sx0 + run]);
                        if let Some(gi) = grad_in.as_mut() {
                            let gp = gi.plane_mut(ci);
                            axpy(weight[wi], grow, &mut gp[sy * w + sx0..sy * w + sx0 + run]);
                        }
                    }
                    grad_w[wi] = grad_w[wi] + acc;
                }
            }
        }
    }
    grad_in
}

pub fn relu_in_place<T: Scalar>(t: &mut Tensor<T>) {
    for v in t.data.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zero the gradient wherever the (post-activation) output was not positive.
pub fn relu_backward_in_place<T: Scalar>(grad: &mut Tensor<T>, output: &Tensor<T>) {
    for (g, &o) in grad.data.iter_mut().zip(&output.data) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2x2 max pooling; returns the pooled tensor and the winning position (0..4)
/// of each output pixel. Ties go to the first position in row-major order.
pub fn maxpool2_forward<T: Scalar>(input: &Tensor<T>) -> (Tensor<T>, Vec<u8>) {
    let (c, h, w) = (input.channels, input.height / 2, input.width / 2);
    let mut out = Tensor::zeros(c, h, w);
    let mut arg = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let cand = [
                    input.at(ch, 2 * y, 2 * x),
                    input.at(ch, 2 * y, 2 * x + 1),
                    input.at(ch, 2 * y + 1, 2 * x),
                    input.at(ch, 2 * y + 1, 2 * x + 1),
                ];
                let mut best = 0u8;
                for (i, &v) in cand.iter().enumerate().skip(1) {
                    if v > cand[best as usize] {
                        best = i as u8;
                    }
                }
                out.data[(ch * h + y) * w + x] = cand[best as usize];
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub fn maxpool2_backward<T: Scalar>(grad_out: &Tensor<T>, arg: &[u8]) -> Tensor<T> {
    let (c, h, w) = (grad_out.channels, grad_out.height, grad_out.width);
    let mut grad_in = Tensor::zeros(c, 2 * h, 2 * w);
    let iw = 2 * w;
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let i = (ch * h + y) * w + x;
                let a = arg[i] as usize;
                let (sy, sx) = (2 * y + a / 2, 2 * x + a % 2);
                grad_in.data[(ch * 2 * h + sy) * iw + sx] = grad_out.data[i];
            }
        }
    }
    grad_in
}

pub fn upsample2_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = (input.channels, input.height, input.width);
    let mut out = Tensor::zeros(c, 2 * h, 2 * w);
    let ow = 2 * w;
    for ch in 0..c {
        for y in 0..2 * h {
            for x in 0..ow {
                out.data[(ch * 2 * h + y) * ow + x] = input.at(ch, y / 2, x / 2);
            }
        }
    }
    out
}

pub fn upsample2_backward<T: Scalar>(grad_out: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = (grad_out.channels, grad_out.height / 2, grad_out.width / 2);
    let mut grad_in = Tensor::zeros(c, h, w);
    for ch in 0..c {
        for y in 0..2 * h {
            for x in 0..2 * w {
                let i = (ch * h + y / 2) * w + x / 2;
                grad_in.data[i] = grad_in.data[i] + grad_out.at(ch, y, x);
            }
        }
    }
    grad_in
}

/// Channel concatenation `[a, b]`.
pub fn concat<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor {
        channels: a.channels + b.channels,
        height: a.height,
        width: a.width,
        data,
    }
}

/// Inverse of [`concat`] for gradients: the first `first` channels and the rest.
pub fn split<T: Scalar>(t: Tensor<T>, first: usize) -> (Tensor<T>, Tensor<T>) {
    let n = first * t.plane_len();
    let mut head = t.data;
    let tail = head.split_off(n);
    (
        Tensor {
            channels: first,
            height: t.height,
            width: t.width,
            data: head,
        },
        Tensor {
            channels: t.channels - first,
            height: t.height,
            width: t.width,
            data: tail,
        },
    )
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}
