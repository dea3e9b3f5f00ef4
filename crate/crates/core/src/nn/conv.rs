//! 3×3 convolution, stride 1, zero padding 1.
//!
//! Implemented as im2col followed by a single GEMM per batch element. Every
//! output pixel is accumulated in the same (channel, ky, kx) order no matter
//! where it sits in the image, so results depend only on the pixel's own
//! receptive field.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::tensor::Tensor;

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `out_ch × in_ch × 3 × 3`.
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub activation: Activation,
}

/// Gradient buffers matching a [`Conv2d`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv2d {
    pub fn zeros(in_ch: usize, out_ch: usize, activation: Activation) -> Self {
        Conv2d {
            in_ch,
            out_ch,
            weight: vec![0.0; out_ch * in_ch * TAPS],
            bias: vec![0.0; out_ch],
            activation,
        }
    }

    /// He-normal weights scaled by `gain`, zero bias.
    pub fn init<R: Rng>(in_ch: usize, out_ch: usize, activation: Activation, gain: f32, rng: &mut R) -> Self {
        let std = gain * (2.0 / (in_ch * TAPS) as f32).sqrt();
        let normal = Normal::new(0.0f32, std).expect("positive std");
        let mut layer = Self::zeros(in_ch, out_ch, activation);
        for w in &mut layer.weight {
            *w = normal.sample(rng);
        }
        layer
    }

    #[inline]
    pub fn weight_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_ch + i) * KERNEL + ky) * KERNEL + kx
    }

    pub fn zero_grads(&self) -> ConvGrads {
        ConvGrads {
            weight: vec![0.0; self.weight.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        conv2d_forward(input, self)
    }

    /// Backpropagates `grad_out` (gradient w.r.t. this layer's output).
    ///
    /// `output` is the forward result, used for the ReLU mask. Parameter
    /// gradients are accumulated into `grads`. Returns the input gradient
    /// when `need_input_grad` is set.
    pub fn backward(
        &self,
        input: &Tensor,
        output: &Tensor,
        grad_out: &Tensor,
        grads: &mut ConvGrads,
        need_input_grad: bool,
    ) -> Option<Tensor> {
        let [n, _, h, w] = input.shape();
        let p = h * w;
        let k = self.in_ch * TAPS;
        let mut g = grad_out.clone();
        if self.activation == Activation::Relu {
            for (gv, &o) in g.data_mut().iter_mut().zip(output.data()) {
                if o <= 0.0 {
                    *gv = 0.0;
                }
            }
        }
        let mut col = vec![0.0f32; k * p];
        let mut dcol = vec![0.0f32; if need_input_grad { k * p } else { 0 }];
        let mut grad_in = need_input_grad.then(|| Tensor::zeros(input.shape()));
        for b in 0..n {
            let gb = g.item(b);
            for (o, db) in grads.bias.iter_mut().enumerate() {
                *db += gb[o * p..(o + 1) * p].iter().sum::<f32>();
            }
            im2col(input.item(b), self.in_ch, h, w, &mut col);
            // dW (out × k) += g (out × p) · colᵀ (p × k)
            unsafe {
                matrixmultiply::sgemm(
                    self.out_ch,
                    p,
                    k,
                    1.0,
                    gb.as_ptr(),
                    p as isize,
                    1,
                    col.as_ptr(),
                    1,
                    p as isize,
                    1.0,
                    grads.weight.as_mut_ptr(),
                    k as isize,
                    1,
                );
            }
            if let Some(gi) = grad_in.as_mut() {
                // dcol (k × p) = Wᵀ (k × out) · g (out × p)
                unsafe {
                    matrixmultiply::sgemm(
                        k,
                        self.out_ch,
                        p,
                        1.0,
                        self.weight.as_ptr(),
                        1,
                        k as isize,
                        gb.as_ptr(),
                        p as isize,
                        1,
                        0.0,
                        dcol.as_mut_ptr(),
                        p as isize,
                        1,
                    );
                }
                col2im(&dcol, self.in_ch, h, w, gi.item_mut(b));
            }
        }
        grad_in
    }
}

/// Unfolds a `(c, h, w)` image into a `(c·9) × (h·w)` patch matrix with
/// zeros outside the image.
fn im2col(img: &[f32], c: usize, h: usize, w: usize, col: &mut [f32]) {
    let p = h * w;
    for ch in 0..c {
        let plane = &img[ch * p..(ch + 1) * p];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut col[((ch * KERNEL + ky) * KERNEL + kx) * p..][..p];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match dx {
                        -1 => {
                            dst[0] = 0.0;
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        0 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds patch gradients back onto the image.
fn col2im(col: &[f32], c: usize, h: usize, w: usize, img: &mut [f32]) {
    let p = h * w;
    for ch in 0..c {
        let plane = &mut img[ch * p..(ch + 1) * p];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &col[((ch * KERNEL + ky) * KERNEL + kx) * p..][..p];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match dx {
                        -1 => {
                            for (d, s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                                *d += s;
                            }
                        }
                        0 => {
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                        _ => {
                            for (d, s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Zero-padded 3×3 cross-correlation plus bias, then the layer activation.
pub fn conv2d_forward(input: &Tensor, layer: &Conv2d) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    if c != layer.in_ch {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {}",
            layer.in_ch, c
        )));
    }
    let p = h * w;
    let k = c * TAPS;
    let mut out = Tensor::zeros([n, layer.out_ch, h, w]);
    let mut col = vec![0.0f32; k * p];
    for b in 0..n {
        im2col(input.item(b), c, h, w, &mut col);
        let ob = out.item_mut(b);
        unsafe {
            matrixmultiply::sgemm(
                layer.out_ch,
                k,
                p,
                1.0,
                layer.weight.as_ptr(),
                k as isize,
                1,
                col.as_ptr(),
                p as isize,
                1,
                0.0,
                ob.as_mut_ptr(),
                p as isize,
                1,
            );
        }
        for (o, &bias) in layer.bias.iter().enumerate() {
            let row = &mut ob[o * p..(o + 1) * p];
            for v in row.iter_mut() {
                *v += bias;
            }
            if layer.activation == Activation::Relu {
                for v in row.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
    }
    Ok(out)
}
