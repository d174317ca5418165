//! Forward operators for the supported inverse problems.
//!
//! Single-coil Fourier sampling is the coil-composite operator with one
//! identity coil map, so multi-coil MRI, single-coil MRI and the real
//! embedding used by the kernel analysis share one code path.

use std::io::{BufRead, Write};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::numerics::fft::{self, signed_frequency};
use crate::numerics::linalg::pinv;
use crate::numerics::{Matrix, RngStream, Scalar, Signal};

/// Tolerance on `Σ_c S_cᴴ S_c = I` for coil maps.
pub const COIL_NORMALIZATION_TOL: f64 = 1e-10;
/// Largest input dimension for which [`LinearOp::materialize_real`] builds a dense matrix.
pub const MAX_MATERIALIZE_DIM: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub enum OpKind<T> {
    /// `M𝓕` with a unitary DFT.
    MaskedFourier,
    /// Concatenation of `M𝓕S_c` over coils.
    CoilComposite { coils: Vec<Signal<T>> },
    /// Pixel selection.
    Inpainting,
    /// Real matrix applied to real and imaginary parts separately.
    Dense { matrix: Matrix<T> },
}

/// A linear measurement operator `A: ℂ^q → ℂ^P`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOp<T> {
    kind: OpKind<T>,
    in_dim: usize,
    mask: Vec<bool>,
    sampled: Vec<usize>,
}

impl<T: Scalar> LinearOp<T> {
    pub fn masked_fourier(mask: Vec<bool>) -> Result<Self> {
        Self::with_mask(OpKind::MaskedFourier, mask, true)
    }

    pub fn single_coil(mask: Vec<bool>) -> Result<Self> {
        Self::masked_fourier(mask)
    }

    pub fn inpainting(mask: Vec<bool>) -> Result<Self> {
        Self::with_mask(OpKind::Inpainting, mask, false)
    }

    pub fn coil_composite(mask: Vec<bool>, coils: Vec<Signal<T>>) -> Result<Self> {
        let q = mask.len();
        if coils.is_empty() {
            return Err(Error::Invalid("coil-composite operator needs at least one coil".into()));
        }
        for c in &coils {
            if c.len() != q {
                return Err(Error::Dimension {
                    expected: q,
                    got: c.len(),
                    context: "coil map length",
                });
            }
        }
        let worst = (0..q)
            .map(|j| {
                let s: T = coils.iter().map(|c| c.get(j).norm_sqr()).sum();
                (s - T::one()).abs()
            })
            .fold(T::zero(), T::max);
        if worst > T::lit(COIL_NORMALIZATION_TOL) {
            return Err(Error::Invalid(format!(
                "coil maps are not normalized (max |Σ|S_c|² − 1| = {:e})",
                worst.as_f64()
            )));
        }
        Self::with_mask(OpKind::CoilComposite { coils }, mask, true)
    }

    pub fn dense(matrix: Matrix<T>) -> Self {
        let in_dim = matrix.cols();
        Self {
            kind: OpKind::Dense { matrix },
            in_dim,
            mask: Vec::new(),
            sampled: Vec::new(),
        }
    }

    fn with_mask(kind: OpKind<T>, mask: Vec<bool>, needs_fft: bool) -> Result<Self> {
        let q = mask.len();
        if q == 0 {
            return Err(Error::Size("empty mask".into()));
        }
        if needs_fft && !q.is_power_of_two() {
            return Err(Error::Size(format!("Fourier operator length {q} is not a power of two")));
        }
        let sampled: Vec<usize> = (0..q).filter(|&i| mask[i]).collect();
        Ok(Self {
            kind,
            in_dim: q,
            mask,
            sampled,
        })
    }

    pub fn kind(&self) -> &OpKind<T> {
        &self.kind
    }

    /// `q`
    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    /// Samples per coil (`p`).
    pub fn samples_per_coil(&self) -> usize {
        match &self.kind {
            OpKind::Dense { matrix } => matrix.rows(),
            _ => self.sampled.len(),
        }
    }

    pub fn n_coils(&self) -> usize {
        match &self.kind {
            OpKind::CoilComposite { coils } => coils.len(),
            _ => 1,
        }
    }

    /// Total measurement length `p · N_c`.
    pub fn out_dim(&self) -> usize {
        self.samples_per_coil() * self.n_coils()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn sampled_indices(&self) -> &[usize] {
        &self.sampled
    }

    pub fn is_fourier(&self) -> bool {
        matches!(self.kind, OpKind::MaskedFourier | OpKind::CoilComposite { .. })
    }

    /// Coil maps, with the identity map for single-coil and non-Fourier operators.
    pub fn coil_maps(&self) -> Vec<Signal<T>> {
        match &self.kind {
            OpKind::CoilComposite { coils } => coils.clone(),
            _ => vec![Signal::from_real(&vec![T::one(); self.in_dim])],
        }
    }

    fn check_len(&self, got: usize, expected: usize, context: &'static str) -> Result<()> {
        if got != expected {
            return Err(Error::Dimension {
                expected,
                got,
                context,
            });
        }
        Ok(())
    }

    /// Full (unmasked) k-space per coil: `𝓕 S_c v`.
    pub fn full_kspace(&self, v: &Signal<T>) -> Result<Vec<Signal<T>>> {
        self.check_len(v.len(), self.in_dim, "operator input")?;
        match &self.kind {
            OpKind::CoilComposite { coils } => coils.iter().map(|s| fft::fft(&s.mul_elem(v))).collect(),
            _ => Ok(vec![fft::fft(v)?]),
        }
    }

    pub fn apply(&self, v: &Signal<T>) -> Result<Signal<T>> {
        self.check_len(v.len(), self.in_dim, "operator input")?;
        match &self.kind {
            OpKind::Inpainting => Ok(self.select(v)),
            OpKind::Dense { matrix } => {
                Signal::new(&matrix.matvec(v.re()), &matrix.matvec(v.im()))
            }
            OpKind::MaskedFourier | OpKind::CoilComposite { .. } => {
                let p = self.sampled.len();
                let kspace = self.full_kspace(v)?;
                let mut out = Signal::zeros(p * kspace.len());
                for (c, k) in kspace.iter().enumerate() {
                    for (r, &idx) in self.sampled.iter().enumerate() {
                        out.set(c * p + r, k.get(idx));
                    }
                }
                Ok(out)
            }
        }
    }

    fn select(&self, v: &Signal<T>) -> Signal<T> {
        let mut out = Signal::zeros(self.sampled.len());
        for (r, &idx) in self.sampled.iter().enumerate() {
            out.set(r, v.get(idx));
        }
        out
    }

    /// Zero-filled placement of per-coil samples into a length-`q` buffer.
    fn zero_fill(&self, w: &Signal<T>, coil: usize) -> Signal<T> {
        let p = self.sampled.len();
        let mut full = Signal::zeros(self.in_dim);
        for (r, &idx) in self.sampled.iter().enumerate() {
            full.set(idx, w.get(coil * p + r));
        }
        full
    }

    pub fn adjoint(&self, w: &Signal<T>) -> Result<Signal<T>> {
        self.check_len(w.len(), self.out_dim(), "adjoint input")?;
        match &self.kind {
            OpKind::Inpainting => Ok(self.zero_fill(w, 0)),
            OpKind::Dense { matrix } => {
                Signal::new(&matrix.tr_matvec(w.re()), &matrix.tr_matvec(w.im()))
            }
            OpKind::MaskedFourier => fft::ifft(&self.zero_fill(w, 0)),
            OpKind::CoilComposite { coils } => {
                let mut acc = Signal::zeros(self.in_dim);
                for (c, s) in coils.iter().enumerate() {
                    let img = fft::ifft(&self.zero_fill(w, c))?;
                    acc = acc.add(&s.conj().mul_elem(&img));
                }
                Ok(acc)
            }
        }
    }

    /// `AᴴA v`
    pub fn normal(&self, v: &Signal<T>) -> Result<Signal<T>> {
        self.adjoint(&self.apply(v)?)
    }

    /// Complex matrix entries `a_{rj}` of the operator, built from closed forms.
    fn complex_entry(&self, row: usize, col: usize) -> Complex<T> {
        let q = self.in_dim;
        match &self.kind {
            OpKind::Inpainting => {
                if self.sampled[row] == col {
                    Complex::new(T::one(), T::zero())
                } else {
                    Complex::new(T::zero(), T::zero())
                }
            }
            OpKind::Dense { matrix } => Complex::new(matrix[(row, col)], T::zero()),
            OpKind::MaskedFourier | OpKind::CoilComposite { .. } => {
                let p = self.sampled.len();
                let coil = row / p;
                let k = self.sampled[row % p];
                let phase = -T::lit(2.0) * T::PI() * T::from_usize_lossy((k * col) % q)
                    / T::from_usize_lossy(q);
                let f = Complex::new(phase.cos(), phase.sin()) / T::from_usize_lossy(q).sqrt();
                match &self.kind {
                    OpKind::CoilComposite { coils } => f * coils[coil].get(col),
                    _ => f,
                }
            }
        }
    }

    /// Real `2P × 2q` matrix acting on stacked `[v_R; v_I]`.
    pub fn materialize_real(&self) -> Result<RealEmbedding<T>> {
        if self.in_dim > MAX_MATERIALIZE_DIM {
            return Err(Error::Size(format!(
                "refusing to materialize a dense embedding for q = {} > {MAX_MATERIALIZE_DIM}",
                self.in_dim
            )));
        }
        let (p, q) = (self.out_dim(), self.in_dim);
        let mut m = Matrix::zeros(2 * p, 2 * q);
        for r in 0..p {
            for j in 0..q {
                let a = self.complex_entry(r, j);
                m[(r, j)] = a.re;
                m[(r, q + j)] = -a.im;
                m[(p + r, j)] = a.im;
                m[(p + r, q + j)] = a.re;
            }
        }
        Ok(RealEmbedding { matrix: m })
    }

    /// Projects a reconstruction onto the measurement-consistent set.
    ///
    /// Fourier operators replace sampled k-space per coil with `y` and combine
    /// coils with `Σ_c S_cᴴ 𝓕ᴴ`. Inpainting overwrites sampled pixels. Dense
    /// operators use the least-squares projection `x̂ + A†(y − Ax̂)`.
    ///
    /// The result reproduces `y` exactly whenever `AAᴴ = I` (single coil,
    /// inpainting). With several coils the data residual is multiplied by
    /// `I − AAᴴ`, so it shrinks but need not vanish.
    pub fn data_correction(&self, y: &Signal<T>, xhat: &Signal<T>) -> Result<Signal<T>> {
        self.check_len(xhat.len(), self.in_dim, "reconstruction length")?;
        self.check_len(y.len(), self.out_dim(), "measurement length")?;
        match &self.kind {
            OpKind::Inpainting => {
                let mut out = xhat.clone();
                for (r, &idx) in self.sampled.iter().enumerate() {
                    out.set(idx, y.get(r));
                }
                Ok(out)
            }
            OpKind::Dense { matrix } => {
                let residual = y.sub(&self.apply(xhat)?);
                let ap = pinv(matrix);
                let fix = Signal::new(&ap.matvec(residual.re()), &ap.matvec(residual.im()))?;
                Ok(xhat.add(&fix))
            }
            OpKind::MaskedFourier | OpKind::CoilComposite { .. } => {
                let p = self.sampled.len();
                let maps = self.coil_maps();
                let mut acc = Signal::zeros(self.in_dim);
                for (c, s) in maps.iter().enumerate() {
                    let mut k = fft::fft(&s.mul_elem(xhat))?;
                    for (r, &idx) in self.sampled.iter().enumerate() {
                        k.set(idx, y.get(c * p + r));
                    }
                    acc = acc.add(&s.conj().mul_elem(&fft::ifft(&k)?));
                }
                Ok(acc)
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> LinearOp<U> {
        let kind = match &self.kind {
            OpKind::MaskedFourier => OpKind::MaskedFourier,
            OpKind::Inpainting => OpKind::Inpainting,
            OpKind::CoilComposite { coils } => OpKind::CoilComposite {
                coils: coils.iter().map(Signal::cast).collect(),
            },
            OpKind::Dense { matrix } => OpKind::Dense {
                matrix: matrix.cast(),
            },
        };
        LinearOp {
            kind,
            in_dim: self.in_dim,
            mask: self.mask.clone(),
            sampled: self.sampled.clone(),
        }
    }
}

/// Dense real form `Ã` of a complex operator: `Ã·[v_R; v_I] = [Re(Av); Im(Av)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealEmbedding<T> {
    pub matrix: Matrix<T>,
}

impl<T: Scalar> RealEmbedding<T> {
    pub fn apply(&self, v: &Signal<T>) -> Result<Signal<T>> {
        if v.as_stacked().len() != self.matrix.cols() {
            return Err(Error::Dimension {
                expected: self.matrix.cols() / 2,
                got: v.len(),
                context: "embedding input",
            });
        }
        Signal::from_stacked(self.matrix.matvec(v.as_stacked()))
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.matrix
    }
}

/// Default number of fully sampled center lines for a given length.
pub fn default_center_lines(q: usize) -> usize {
    if q <= 64 {
        4
    } else {
        q / 16
    }
}

/// Exponent of the inverse-polynomial sampling density.
pub const DENSITY_EXPONENT: i32 = 3;

/// Variable-density 1-D Cartesian mask with exactly `q / acceleration` samples.
///
/// The lowest `center_lines` frequencies are always sampled; the remainder are
/// drawn without replacement with weight `(1 + |f| / (q/16))^{-3}`.
pub fn variable_density_mask(q: usize, acceleration: usize, rng: &mut RngStream) -> Result<Vec<bool>> {
    if acceleration == 0 || q % acceleration != 0 {
        return Err(Error::Invalid(format!(
            "acceleration {acceleration} does not divide length {q}"
        )));
    }
    let p = q / acceleration;
    let center = default_center_lines(q).min(p);
    let mut order = frequency_order(q);
    let mut mask = vec![false; q];
    for &k in order.iter().take(center) {
        mask[k] = true;
    }
    let scale = (q as f64 / 16.0).max(1.0);
    let mut pool: Vec<(usize, f64)> = order
        .drain(center..)
        .map(|k| {
            let f = signed_frequency(k, q).unsigned_abs() as f64;
            (k, (1.0 + f / scale).powi(-DENSITY_EXPONENT))
        })
        .collect();
    for _ in center..p {
        let total: f64 = pool.iter().map(|&(_, w)| w).sum();
        let mut target = rng.uniform() * total;
        let mut pick = pool.len() - 1;
        for (i, &(_, w)) in pool.iter().enumerate() {
            if target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        let (k, _) = pool.remove(pick);
        mask[k] = true;
    }
    Ok(mask)
}

/// Mask sampling the `p` lowest frequencies.
pub fn lowpass_mask(q: usize, p: usize) -> Vec<bool> {
    let mut mask = vec![false; q];
    for k in frequency_order(q).into_iter().take(p) {
        mask[k] = true;
    }
    mask
}

/// FFT bins sorted by `|f|`, positive before negative at equal magnitude.
fn frequency_order(q: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by_key(|&k| {
        let f = signed_frequency(k, q);
        (f.unsigned_abs(), f < 0)
    });
    order
}

/// Smooth complex coil profiles normalized so that `Σ_c |S_c|² = 1` at every pixel.
pub fn smooth_coil_maps<T: Scalar>(q: usize, n_coils: usize, rng: &mut RngStream) -> Vec<Signal<T>> {
    let qf = q as f64;
    let width = qf / (n_coils as f64).max(1.0);
    let raw: Vec<Vec<Complex<f64>>> = (0..n_coils)
        .map(|c| {
            let center = (c as f64 + 0.5) * qf / n_coils as f64 + (rng.uniform() - 0.5) * 0.1 * qf;
            let phase0 = rng.uniform() * 2.0 * std::f64::consts::PI;
            let ramp = (rng.uniform() - 0.5) * 2.0 * std::f64::consts::PI / qf;
            (0..q)
                .map(|j| {
                    let mut d = (j as f64 - center).abs() % qf;
                    d = d.min(qf - d);
                    let mag = (-0.5 * (d / width).powi(2)).exp() + 0.05;
                    Complex::from_polar(mag, phase0 + ramp * j as f64)
                })
                .collect()
        })
        .collect();
    let norms: Vec<f64> = (0..q)
        .map(|j| raw.iter().map(|c| c[j].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    raw.into_iter()
        .map(|c| {
            let vals: Vec<Complex<T>> = c
                .iter()
                .zip(&norms)
                .map(|(v, &n)| {
                    let z = v / n;
                    Complex::new(T::lit(z.re), T::lit(z.im))
                })
                .collect();
            Signal::from_complex(&vals)
        })
        .collect()
}

/// Reads a mask file: one `0` or `1` per line, blank lines ignored.
pub fn read_mask<R: BufRead>(reader: R) -> Result<Vec<bool>> {
    let mut mask = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        match line.trim() {
            "" => continue,
            "0" => mask.push(false),
            "1" => mask.push(true),
            other => {
                return Err(Error::Parse(format!("mask line {}: expected 0 or 1, got {other:?}", n + 1)))
            }
        }
    }
    Ok(mask)
}

pub fn write_mask<W: Write>(mut writer: W, mask: &[bool]) -> Result<()> {
    for &m in mask {
        writeln!(writer, "{}", u8::from(m))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inpainting_apply_and_adjoint() {
        let a = LinearOp::<f64>::inpainting(vec![true, false, true, false]).unwrap();
        let v = Signal::from_real(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.apply(&v).unwrap(), Signal::from_real(&[1.0, 3.0]));
        let w = Signal::from_real(&[5.0, 6.0]);
        assert_eq!(a.adjoint(&w).unwrap(), Signal::from_real(&[5.0, 0.0, 6.0, 0.0]));
    }

    #[test]
    fn full_mask_fourier_is_fft_and_adjoint_is_ifft() {
        let a = LinearOp::<f64>::masked_fourier(vec![true; 8]).unwrap();
        let v = Signal::new(&[1.0, 0.0, -1.0, 2.0, 0.5, 0.0, 0.0, 3.0], &[0.0, 1.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0])
            .unwrap();
        assert!(a.apply(&v).unwrap().max_abs_diff(&fft::fft(&v).unwrap()) < 1e-15);
        assert!(a.adjoint(&v).unwrap().max_abs_diff(&fft::ifft(&v).unwrap()) < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = LinearOp::<f64>::inpainting(vec![true, false]).unwrap();
        assert!(matches!(a.apply(&Signal::zeros(3)), Err(Error::Dimension { .. })));
        assert!(matches!(a.adjoint(&Signal::zeros(2)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn inpainting_embedding_is_block_selector() {
        let a = LinearOp::<f64>::inpainting(vec![false, true, true]).unwrap();
        let m = a.materialize_real().unwrap().into_matrix();
        let sel = Matrix::from_vec(2, 3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let expected = Matrix::from_fn(4, 6, |i, j| match (i < 2, j < 3) {
            (true, true) => sel[(i, j)],
            (false, false) => sel[(i - 2, j - 3)],
            _ => 0.0,
        });
        assert_eq!(m, expected);
    }

    #[test]
    fn materialize_guard() {
        let a = LinearOp::<f64>::masked_fourier(vec![true; 128]).unwrap();
        assert!(matches!(a.materialize_real(), Err(Error::Size(_))));
    }

    #[test]
    fn unnormalized_coils_rejected() {
        let coils = vec![Signal::from_real(&[1.0; 4]), Signal::from_real(&[1.0; 4])];
        assert!(LinearOp::coil_composite(vec![true; 4], coils).is_err());
    }

    #[test]
    fn variable_density_mask_has_exact_count_and_center() {
        for accel in [2, 4, 8] {
            let mut rng = RngStream::new(11, 0);
            let m = variable_density_mask(64, accel, &mut rng).unwrap();
            assert_eq!(m.iter().filter(|&&b| b).count(), 64 / accel);
            for k in [0, 1, 63, 2] {
                assert!(m[k], "center line {k} missing at {accel}x");
            }
        }
        assert!(variable_density_mask(64, 3, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn lowpass_mask_is_symmetric_for_odd_count() {
        let m = lowpass_mask(16, 7);
        let on: Vec<usize> = (0..16).filter(|&k| m[k]).collect();
        assert_eq!(on, vec![0, 1, 2, 3, 13, 14, 15]);
    }

    #[test]
    fn mask_file_roundtrip() {
        let mask = vec![true, false, false, true];
        let mut buf = Vec::new();
        write_mask(&mut buf, &mask).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "1\n0\n0\n1\n");
        assert_eq!(read_mask(buf.as_slice()).unwrap(), mask);
        assert!(read_mask("1\n2\n".as_bytes()).is_err());
    }

    #[test]
    fn coil_maps_are_normalized() {
        let maps: Vec<Signal<f64>> = smooth_coil_maps(16, 3, &mut RngStream::new(5, 0));
        for j in 0..16 {
            let s: f64 = maps.iter().map(|c| c.get(j).norm_sqr()).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }
}
