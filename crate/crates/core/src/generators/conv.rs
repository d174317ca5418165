//! Small 1-D convolutional generator.
//!
//! Layout: input `[2 × in_len]` (real and imaginary channels) followed by
//! `L` blocks of `(optional nearest ×2 upsample → conv(K, zero "same" pad) → ReLU)`
//! and a linear `1×1` head producing two channels `(re, im)`.
//!
//! Flat weight order: for each block `W[out][in][tap]` then `b[out]`, then the
//! head `H[2][hidden]` and `b[2]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub in_len: usize,
    pub hidden: usize,
    pub kernel: usize,
    /// One entry per block; `true` doubles the length before the convolution.
    pub upsample: Vec<bool>,
}

pub const IN_CHANNELS: usize = 2;
pub const OUT_CHANNELS: usize = 2;

impl ConvShape {
    pub fn validate(&self) -> Result<()> {
        if self.in_len == 0 || self.hidden == 0 || self.upsample.is_empty() {
            return Err(Error::Invalid("conv generator needs a positive size and at least one block".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Invalid(format!("conv kernel {} must be odd", self.kernel)));
        }
        Ok(())
    }

    pub fn out_len(&self) -> usize {
        self.upsample
            .iter()
            .fold(self.in_len, |len, &up| if up { 2 * len } else { len })
    }

    fn block_in_channels(&self, b: usize) -> usize {
        if b == 0 {
            IN_CHANNELS
        } else {
            self.hidden
        }
    }

    /// `(weight_offset, bias_offset)` for each block and the head.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.upsample.len() + 1);
        let mut at = 0;
        for b in 0..self.upsample.len() {
            let w = self.hidden * self.block_in_channels(b) * self.kernel;
            out.push((at, at + w));
            at += w + self.hidden;
        }
        out.push((at, at + OUT_CHANNELS * self.hidden));
        out
    }

    pub fn num_weights(&self) -> usize {
        let mut total = 0;
        for b in 0..self.upsample.len() {
            total += self.hidden * self.block_in_channels(b) * self.kernel + self.hidden;
        }
        total + OUT_CHANNELS * self.hidden + OUT_CHANNELS
    }
}

/// Channels-first activations `[channel][position]` stored flat.
#[derive(Clone, Debug)]
struct Act<T> {
    channels: usize,
    len: usize,
    data: Vec<T>,
}

impl<T: Scalar> Act<T> {
    fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![T::zero(); channels * len],
        }
    }

    #[inline]
    fn at(&self, c: usize, i: usize) -> T {
        self.data[c * self.len + i]
    }

    #[inline]
    fn at_mut(&mut self, c: usize, i: usize) -> &mut T {
        &mut self.data[c * self.len + i]
    }

    fn upsample(&self) -> Self {
        let mut out = Self::zeros(self.channels, 2 * self.len);
        for c in 0..self.channels {
            for i in 0..self.len {
                let x = self.at(c, i);
                *out.at_mut(c, 2 * i) = x;
                *out.at_mut(c, 2 * i + 1) = x;
            }
        }
        out
    }

    /// Adjoint of nearest upsampling: sum adjacent pairs.
    fn downsample_sum(&self) -> Self {
        let mut out = Self::zeros(self.channels, self.len / 2);
        for c in 0..self.channels {
            for i in 0..self.len / 2 {
                *out.at_mut(c, i) = self.at(c, 2 * i) + self.at(c, 2 * i + 1);
            }
        }
        out
    }
}

struct Tape<T> {
    /// Input to each block's convolution (after upsampling).
    conv_in: Vec<Act<T>>,
    /// Pre-activation output of each block.
    pre: Vec<Act<T>>,
    /// Input to the head.
    head_in: Act<T>,
}

fn conv_forward<T: Scalar>(x: &Act<T>, w: &[T], b: &[T], out_ch: usize, kernel: usize) -> Act<T> {
    let half = kernel / 2;
    let len = x.len;
    let mut y = Act::zeros(out_ch, len);
    for o in 0..out_ch {
        for i in 0..len {
            let mut acc = b[o];
            for c in 0..x.channels {
                let wrow = &w[(o * x.channels + c) * kernel..(o * x.channels + c + 1) * kernel];
                for (t, &wt) in wrow.iter().enumerate() {
                    let pos = i + t;
                    if pos < half || pos - half >= len {
                        continue;
                    }
                    acc += wt * x.at(c, pos - half);
                }
            }
            *y.at_mut(o, i) = acc;
        }
    }
    y
}

/// Accumulates `dW`, `db` and returns `dx` for a same-padded convolution.
fn conv_backward<T: Scalar>(
    x: &Act<T>,
    w: &[T],
    dy: &Act<T>,
    kernel: usize,
    dw: &mut [T],
    db: &mut [T],
) -> Act<T> {
    let half = kernel / 2;
    let len = x.len;
    let mut dx = Act::zeros(x.channels, len);
    for o in 0..dy.channels {
        for i in 0..len {
            let g = dy.at(o, i);
            if g == T::zero() {
                continue;
            }
            db[o] += g;
            for c in 0..x.channels {
                let base = (o * x.channels + c) * kernel;
                for t in 0..kernel {
                    let pos = i + t;
                    if pos < half || pos - half >= len {
                        continue;
                    }
                    let src = pos - half;
                    dw[base + t] += g * x.at(c, src);
                    *dx.at_mut(c, src) += g * w[base + t];
                }
            }
        }
    }
    dx
}

impl ConvShape {
    fn run<T: Scalar>(&self, weights: &[T], re: &[T], im: &[T]) -> (Act<T>, Tape<T>) {
        let offs = self.offsets();
        let mut x = Act {
            channels: IN_CHANNELS,
            len: self.in_len,
            data: re.iter().chain(im).copied().collect(),
        };
        let mut conv_in = Vec::with_capacity(self.upsample.len());
        let mut pre = Vec::with_capacity(self.upsample.len());
        for (b, &up) in self.upsample.iter().enumerate() {
            if up {
                x = x.upsample();
            }
            let (wo, bo) = offs[b];
            let h = conv_forward(&x, &weights[wo..bo], &weights[bo..bo + self.hidden], self.hidden, self.kernel);
            let mut a = h.clone();
            for v in &mut a.data {
                *v = v.max(T::zero());
            }
            conv_in.push(x);
            pre.push(h);
            x = a;
        }
        let (ho, hb) = offs[self.upsample.len()];
        let out = conv_forward(&x, &weights[ho..hb], &weights[hb..hb + OUT_CHANNELS], OUT_CHANNELS, 1);
        (
            out,
            Tape {
                conv_in,
                pre,
                head_in: x,
            },
        )
    }

    pub fn forward<T: Scalar>(&self, weights: &[T], re: &[T], im: &[T]) -> (Vec<T>, Vec<T>) {
        let (out, _) = self.run(weights, re, im);
        let n = out.len;
        (out.data[..n].to_vec(), out.data[n..].to_vec())
    }

    /// Returns `(∂L/∂weights, ∂L/∂input_re, ∂L/∂input_im)`.
    pub fn backward<T: Scalar>(
        &self,
        weights: &[T],
        re: &[T],
        im: &[T],
        g_re: &[T],
        g_im: &[T],
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        let (_, tape) = self.run(weights, re, im);
        let offs = self.offsets();
        let mut dw = vec![T::zero(); self.num_weights()];

        let dout = Act {
            channels: OUT_CHANNELS,
            len: g_re.len(),
            data: g_re.iter().chain(g_im).copied().collect(),
        };
        let (ho, hb) = offs[self.upsample.len()];
        let (dw_head, db_head) = dw[ho..].split_at_mut(hb - ho);
        let mut dx = conv_backward(&tape.head_in, &weights[ho..hb], &dout, 1, dw_head, &mut db_head[..OUT_CHANNELS]);

        for b in (0..self.upsample.len()).rev() {
            let pre = &tape.pre[b];
            for (d, &h) in dx.data.iter_mut().zip(&pre.data) {
                if h <= T::zero() {
                    *d = T::zero();
                }
            }
            let (wo, bo) = offs[b];
            let (dw_b, db_b) = dw[wo..].split_at_mut(bo - wo);
            let mut dprev = conv_backward(
                &tape.conv_in[b],
                &weights[wo..bo],
                &dx,
                self.kernel,
                dw_b,
                &mut db_b[..self.hidden],
            );
            if self.upsample[b] {
                dprev = dprev.downsample_sum();
            }
            dx = dprev;
        }
        let n = self.in_len;
        (dw, dx.data[..n].to_vec(), dx.data[n..].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_length_and_weight_count() {
        let s = ConvShape {
            in_len: 8,
            hidden: 4,
            kernel: 3,
            upsample: vec![true, true, true],
        };
        assert_eq!(s.out_len(), 64);
        // (4·2·3 + 4) + 2·(4·4·3 + 4) + (2·4 + 2)
        assert_eq!(s.num_weights(), 28 + 104 + 10);
    }

    #[test]
    fn even_kernel_rejected() {
        let s = ConvShape {
            in_len: 4,
            hidden: 2,
            kernel: 2,
            upsample: vec![false],
        };
        assert!(s.validate().is_err());
    }
}
