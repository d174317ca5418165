//! Differentiable generators with hand-written forward and reverse passes.
//!
//! Networks are real-valued end to end. Two-channel outputs are read as the
//! real and imaginary parts of a complex image. Single-channel networks
//! produce a real image (`im = 0`) and expose only their real outputs to the
//! NTK.

pub mod adam;
pub mod conv;
pub mod decoder;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use adam::{gd_step, AdamState};
pub use conv::ConvShape;
pub use decoder::{fixed_last_layer, Decoder};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream, Scalar, Signal};

/// Architecture description; also the JSON header of a weight checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "kebab-case")]
pub enum ShapeMeta {
    TwoLayerDecoder {
        n: usize,
        k: usize,
        /// First column of the circulant convolution `U`.
        filter: Vec<f64>,
    },
    ConvGenerator(ConvShape),
    /// `out = M · input` applied to real and imaginary parts; `M` is `out_len × in_len`.
    Linear {
        in_len: usize,
        out_len: usize,
        channels: usize,
    },
}

#[derive(Clone, Debug)]
enum Body<T> {
    Decoder(Decoder<T>),
    Conv(ConvShape),
    Linear { in_len: usize, out_len: usize, channels: usize },
}

/// A generator `f_θ` together with its current weights `θ`.
#[derive(Clone, Debug)]
pub struct Generator<T> {
    meta: ShapeMeta,
    body: Body<T>,
    weights: Vec<T>,
}

/// Reverse-mode result aligned with the weights (and optionally the input).
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient<T> {
    pub weights: Vec<T>,
    pub input: Option<Signal<T>>,
}

fn finite<T: Scalar>(re: &[T], im: &[T], what: &'static str) -> Result<Signal<T>> {
    if re.iter().chain(im).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { iter: 0, what });
    }
    Signal::new(re, im)
}

impl<T: Scalar> Generator<T> {
    pub fn from_meta(meta: ShapeMeta) -> Result<Self> {
        let body = match &meta {
            ShapeMeta::TwoLayerDecoder { n, k, filter } => {
                if filter.len() != *n {
                    return Err(Error::Dimension {
                        expected: *n,
                        got: filter.len(),
                        context: "decoder filter length",
                    });
                }
                let col: Vec<T> = filter.iter().map(|&x| T::lit(x)).collect();
                let u = Matrix::circulant(&col);
                if (0..*n).any(|i| u.row(i).iter().all(|&x| x == T::zero())) {
                    return Err(Error::DegenerateRow(0));
                }
                Body::Decoder(Decoder::new(u, *k)?)
            }
            ShapeMeta::ConvGenerator(shape) => {
                shape.validate()?;
                Body::Conv(shape.clone())
            }
            ShapeMeta::Linear {
                in_len,
                out_len,
                channels,
            } => {
                if !(1..=2).contains(channels) {
                    return Err(Error::Invalid(format!("linear net channels must be 1 or 2, got {channels}")));
                }
                Body::Linear {
                    in_len: *in_len,
                    out_len: *out_len,
                    channels: *channels,
                }
            }
        };
        let mut g = Self {
            meta,
            body,
            weights: Vec::new(),
        };
        g.weights = vec![T::zero(); g.num_weights()];
        Ok(g)
    }

    /// Deep decoder with a circulant `U` built from `filter_len` Gaussian taps drawn from `rng`.
    pub fn decoder(n: usize, k: usize, filter_len: usize, rng: &mut RngStream) -> Result<Self> {
        if filter_len == 0 || filter_len > n {
            return Err(Error::Invalid(format!("filter length {filter_len} not in 1..={n}")));
        }
        let mut filter = vec![0.0; n];
        for tap in filter.iter_mut().take(filter_len) {
            *tap = rng.normal();
        }
        Self::from_meta(ShapeMeta::TwoLayerDecoder { n, k, filter })
    }

    /// Deep decoder with an explicit circulant filter.
    pub fn decoder_with_filter(filter: Vec<f64>, k: usize) -> Result<Self> {
        Self::from_meta(ShapeMeta::TwoLayerDecoder {
            n: filter.len(),
            k,
            filter,
        })
    }

    pub fn conv(shape: ConvShape) -> Result<Self> {
        Self::from_meta(ShapeMeta::ConvGenerator(shape))
    }

    /// Standard upsampling generator: three ×2 blocks from `q/8` to `q`.
    pub fn conv_upsampling(q: usize, hidden: usize) -> Result<Self> {
        if q % 8 != 0 {
            return Err(Error::Invalid(format!("length {q} not divisible by 8")));
        }
        Self::conv(ConvShape {
            in_len: q / 8,
            hidden,
            kernel: 3,
            upsample: vec![true; 3],
        })
    }

    /// Image-to-image generator: three blocks without upsampling, input length = output length.
    pub fn conv_same(q: usize, hidden: usize) -> Result<Self> {
        Self::conv(ConvShape {
            in_len: q,
            hidden,
            kernel: 3,
            upsample: vec![false; 3],
        })
    }

    pub fn linear(in_len: usize, out_len: usize, channels: usize) -> Result<Self> {
        Self::from_meta(ShapeMeta::Linear {
            in_len,
            out_len,
            channels,
        })
    }

    pub fn meta(&self) -> &ShapeMeta {
        &self.meta
    }

    pub fn num_weights(&self) -> usize {
        match &self.body {
            Body::Decoder(d) => d.num_weights(),
            Body::Conv(s) => s.num_weights(),
            Body::Linear { in_len, out_len, .. } => in_len * out_len,
        }
    }

    pub fn input_len(&self) -> usize {
        match &self.body {
            Body::Decoder(d) => d.n,
            Body::Conv(s) => s.in_len,
            Body::Linear { in_len, .. } => *in_len,
        }
    }

    pub fn output_len(&self) -> usize {
        match &self.body {
            Body::Decoder(d) => d.n,
            Body::Conv(s) => s.out_len(),
            Body::Linear { out_len, .. } => *out_len,
        }
    }

    /// 1 for real-output networks, 2 for `(re, im)` outputs.
    pub fn output_channels(&self) -> usize {
        match &self.body {
            Body::Decoder(_) => 1,
            Body::Conv(_) => 2,
            Body::Linear { channels, .. } => *channels,
        }
    }

    /// Input channels the network reads: 1 (real part only) or 2.
    pub fn input_channels(&self) -> usize {
        match &self.body {
            Body::Decoder(_) => 1,
            Body::Conv(_) => 2,
            Body::Linear { channels, .. } => *channels,
        }
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn set_weights(&mut self, w: Vec<T>) -> Result<()> {
        if w.len() != self.num_weights() {
            return Err(Error::Dimension {
                expected: self.num_weights(),
                got: w.len(),
                context: "weight vector",
            });
        }
        self.weights = w;
        Ok(())
    }

    /// Fixed last layer `v` of the decoder.
    pub fn fixed_last_layer(&self) -> Option<&[T]> {
        match &self.body {
            Body::Decoder(d) => Some(&d.v),
            _ => None,
        }
    }

    /// Circulant convolution `U` of the decoder.
    pub fn convolution(&self) -> Option<&Matrix<T>> {
        match &self.body {
            Body::Decoder(d) => Some(&d.u),
            _ => None,
        }
    }

    /// i.i.d. `N(0, ω)` weights drawn in flat order; the decoder's `v` is untouched.
    pub fn init_weights(mut self, omega: f64, rng: &mut RngStream) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(Error::Invalid(format!("init variance must be positive, got {omega}")));
        }
        let std = T::lit(omega.sqrt());
        for w in &mut self.weights {
            *w = rng.normal_scaled(std);
        }
        Ok(self)
    }

    fn check_input(&self, input: &Signal<T>) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::Dimension {
                expected: self.input_len(),
                got: input.len(),
                context: "generator input",
            });
        }
        Ok(())
    }

    /// Fails with [`Error::NonFinite`] when the weights have blown up.
    pub fn forward(&self, input: &Signal<T>) -> Result<Signal<T>> {
        self.check_input(input)?;
        match &self.body {
            Body::Decoder(d) => {
                let re = d.forward(&self.weights, input.re());
                finite(&re, &vec![T::zero(); re.len()], "generator output")
            }
            Body::Conv(s) => {
                let (re, im) = s.forward(&self.weights, input.re(), input.im());
                finite(&re, &im, "generator output")
            }
            Body::Linear {
                in_len,
                out_len,
                channels,
            } => {
                let m = Matrix::from_vec(*out_len, *in_len, self.weights.clone())?;
                let re = m.matvec(input.re());
                let im = if *channels == 2 {
                    m.matvec(input.im())
                } else {
                    vec![T::zero(); *out_len]
                };
                finite(&re, &im, "generator output")
            }
        }
    }

    /// Exact reverse-mode gradient of `⟨cotangent, f(input)⟩` (real inner product on `[re; im]`).
    ///
    /// Imaginary cotangent entries are ignored by single-channel networks.
    pub fn backward(&self, input: &Signal<T>, cotangent: &Signal<T>, want_input: bool) -> Result<Gradient<T>> {
        self.check_input(input)?;
        if cotangent.len() != self.output_len() {
            return Err(Error::Dimension {
                expected: self.output_len(),
                got: cotangent.len(),
                context: "output cotangent",
            });
        }
        let (weights, input_grad) = match &self.body {
            Body::Decoder(d) => {
                let (dc, dz) = d.backward(&self.weights, input.re(), cotangent.re());
                (dc, Signal::from_real(&dz))
            }
            Body::Conv(s) => {
                let (dw, dre, dim) = s.backward(&self.weights, input.re(), input.im(), cotangent.re(), cotangent.im());
                (dw, finite(&dre, &dim, "input gradient")?)
            }
            Body::Linear {
                in_len,
                out_len,
                channels,
            } => {
                let m = Matrix::from_vec(*out_len, *in_len, self.weights.clone())?;
                let mut dw = vec![T::zero(); in_len * out_len];
                let mut din = Signal::zeros(*in_len);
                for i in 0..*out_len {
                    let (gr, gi) = (cotangent.re()[i], cotangent.im()[i]);
                    for j in 0..*in_len {
                        dw[i * in_len + j] += gr * input.re()[j];
                        din.re_mut()[j] += gr * m[(i, j)];
                        if *channels == 2 {
                            dw[i * in_len + j] += gi * input.im()[j];
                            din.im_mut()[j] += gi * m[(i, j)];
                        }
                    }
                }
                (dw, din)
            }
        };
        Ok(Gradient {
            weights,
            input: want_input.then_some(input_grad),
        })
    }

    /// Writes a checkpoint: one JSON header line, then the weights as little-endian `f64`.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Checkpoint {
            schema: 1,
            num_weights: self.weights.len(),
            shape: self.meta.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for x in &self.weights {
            w.write_all(&x.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: Checkpoint = serde_json::from_str(line.trim_end())?;
        if header.schema != 1 {
            return Err(Error::Parse(format!("unsupported checkpoint schema {}", header.schema)));
        }
        let mut g = Self::from_meta(header.shape)?;
        if header.num_weights != g.num_weights() {
            return Err(Error::Dimension {
                expected: g.num_weights(),
                got: header.num_weights,
                context: "checkpoint weight count",
            });
        }
        let mut buf = [0u8; 8];
        for w in g.weights.iter_mut() {
            r.read_exact(&mut buf)?;
            *w = T::lit(f64::from_le_bytes(buf));
        }
        Ok(g)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    schema: u32,
    num_weights: usize,
    shape: ShapeMeta,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decoder(n: usize, k: usize, seed: u64) -> Generator<f64> {
        let mut rng = RngStream::new(seed, 0);
        Generator::decoder(n, k, 3, &mut rng)
            .unwrap()
            .init_weights(1.0, &mut rng)
            .unwrap()
    }

    #[test]
    fn decoder_with_zero_weights_outputs_zero() {
        let g = Generator::<f64>::decoder(8, 4, 3, &mut RngStream::new(1, 0)).unwrap();
        let out = g.forward(&Signal::from_real(&[1.0; 8])).unwrap();
        assert_eq!(out, Signal::zeros(8));
    }

    #[test]
    fn decoder_is_positively_homogeneous_in_input() {
        let g = decoder(8, 6, 2);
        let z = Signal::from_real(&[0.3, -1.0, 2.0, 0.5, 0.0, 1.5, -0.7, 0.9]);
        let base = g.forward(&z).unwrap();
        for alpha in [0.0, 0.5, 3.0] {
            let scaled = g.forward(&z.scale(alpha)).unwrap();
            assert!(scaled.max_abs_diff(&base.scale(alpha)) < 1e-12);
        }
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let g = decoder(8, 4, 3);
        let z = Signal::from_real(&[1.0; 8]);
        let grad = g.backward(&z, &Signal::zeros(8), true).unwrap();
        assert!(grad.weights.iter().all(|&x| x == 0.0));
        assert!(grad.input.unwrap().norm() == 0.0);
    }

    #[test]
    fn init_leaves_last_layer_and_is_deterministic() {
        let a = decoder(8, 4, 9);
        let b = decoder(8, 4, 9);
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.fixed_last_layer().unwrap(), &fixed_last_layer::<f64>(4)[..]);
    }

    #[test]
    fn tiny_omega_gives_near_zero_output() {
        let mut rng = RngStream::new(4, 0);
        let g = Generator::<f64>::conv_upsampling(16, 4)
            .unwrap()
            .init_weights(1e-30, &mut rng)
            .unwrap();
        let out = g.forward(&Signal::from_real(&[1.0; 2])).unwrap();
        assert!(out.norm() < 1e-10);
        assert!(Generator::<f64>::linear(2, 2, 1).unwrap().init_weights(0.0, &mut rng).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = decoder(8, 4, 1);
        assert!(g.forward(&Signal::zeros(7)).is_err());
        assert!(g.backward(&Signal::zeros(8), &Signal::zeros(9), false).is_err());
    }

    #[test]
    fn linear_gradient_matches_outer_product() {
        let mut g = Generator::<f64>::linear(3, 2, 2).unwrap();
        g.set_weights(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let z = Signal::new(&[1.0, -1.0, 2.0], &[0.5, 0.0, 1.0]).unwrap();
        let cot = Signal::new(&[1.0, 2.0], &[-1.0, 0.5]).unwrap();
        let grad = g.backward(&z, &cot, false).unwrap();
        // dW_ij = g_re_i z_re_j + g_im_i z_im_j
        let expected: Vec<f64> = (0..2)
            .flat_map(|i| {
                let z = z.clone();
                let cot = cot.clone();
                (0..3).map(move |j| cot.re()[i] * z.re()[j] + cot.im()[i] * z.im()[j])
            })
            .collect();
        assert_eq!(grad.weights, expected);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let g = decoder(8, 4, 5);
        let mut buf = Vec::new();
        g.save(&mut buf).unwrap();
        let back = Generator::<f64>::load(buf.as_slice()).unwrap();
        assert_eq!(back.weights(), g.weights());
        assert_eq!(back.meta(), g.meta());
        assert!(Generator::<f64>::load(&buf[..buf.len() - 3]).is_err());
    }
}
