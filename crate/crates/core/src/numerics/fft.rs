//! Unitary radix-2 FFT over split real/imaginary buffers.
//!
//! Forward transform: `X_k = n^{-1/2} Σ_j x_j e^{-2πi jk/n}`. The inverse uses
//! the conjugate kernel with the same scale, so both directions are unitary.

use super::scalar::Scalar;
use super::signal::Signal;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

pub fn fft<T: Scalar>(s: &Signal<T>) -> Result<Signal<T>> {
    transform(s, Direction::Forward)
}

pub fn ifft<T: Scalar>(s: &Signal<T>) -> Result<Signal<T>> {
    transform(s, Direction::Inverse)
}

pub fn transform<T: Scalar>(s: &Signal<T>, dir: Direction) -> Result<Signal<T>> {
    let mut out = s.clone();
    let (re, im) = out.parts_mut();
    transform_in_place(re, im, dir)?;
    Ok(out)
}

pub fn transform_in_place<T: Scalar>(re: &mut [T], im: &mut [T], dir: Direction) -> Result<()> {
    let n = re.len();
    if im.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: im.len(),
            context: "fft imaginary buffer",
        });
    }
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Size(format!("fft length {n} is not a power of two")));
    }
    bit_reverse(re, im);

    let sign = match dir {
        Direction::Forward => -T::one(),
        Direction::Inverse => T::one(),
    };
    let mut half = 1;
    while half < n {
        let span = half * 2;
        let theta = sign * T::PI() / T::from_usize_lossy(half);
        for k in 0..half {
            let angle = theta * T::from_usize_lossy(k);
            let (w_im, w_re) = angle.sin_cos();
            let mut start = k;
            while start < n {
                let a = start;
                let b = start + half;
                let t_re = re[b] * w_re - im[b] * w_im;
                let t_im = re[b] * w_im + im[b] * w_re;
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
                start += span;
            }
        }
        half = span;
    }

    let scale = T::one() / T::from_usize_lossy(n).sqrt();
    for v in re.iter_mut().chain(im.iter_mut()) {
        *v *= scale;
    }
    Ok(())
}

fn bit_reverse<T>(re: &mut [T], im: &mut [T]) {
    let n = re.len();
    let bits = n.trailing_zeros();
    if bits == 0 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
}

/// Signed frequency of FFT bin `k` for length `n`: `0, 1, .., n/2, -(n/2 - 1), .., -1`.
pub fn signed_frequency(k: usize, n: usize) -> isize {
    if k <= n / 2 {
        k as isize
    } else {
        k as isize - n as isize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    fn naive_dft(x: &Signal<f64>) -> Signal<f64> {
        let n = x.len();
        let scale = 1.0 / (n as f64).sqrt();
        let vals: Vec<Complex<f64>> = (0..n)
            .map(|k| {
                (0..n)
                    .map(|j| {
                        let ang = -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                        x.get(j) * Complex::new(ang.cos(), ang.sin())
                    })
                    .sum::<Complex<f64>>()
                    * scale
            })
            .collect();
        Signal::from_complex(&vals)
    }

    #[test]
    fn delta_maps_to_constant_half() {
        let s = Signal::from_real(&[1.0, 0.0, 0.0, 0.0]);
        let f = fft(&s).unwrap();
        assert_eq!(f.re(), &[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(f.im(), &[0.0; 4]);
    }

    #[test]
    fn constant_maps_to_scaled_dc() {
        let f = fft(&Signal::from_real(&[1.0; 4])).unwrap();
        assert!(f.max_abs_diff(&Signal::from_real(&[2.0, 0.0, 0.0, 0.0])) < 1e-15);
    }

    #[test]
    fn matches_naive_dft() {
        let x = Signal::new(
            &(0..16).map(|i| ((i * 7) % 5) as f64 - 2.0).collect::<Vec<_>>(),
            &(0..16).map(|i| ((i * 3) % 4) as f64 * 0.5).collect::<Vec<_>>(),
        )
        .unwrap();
        assert!(fft(&x).unwrap().max_abs_diff(&naive_dft(&x)) < 1e-13);
    }

    #[test]
    fn non_power_of_two_is_a_size_error() {
        assert!(matches!(
            fft(&Signal::<f64>::zeros(12)),
            Err(Error::Size(_))
        ));
        assert!(fft(&Signal::<f64>::zeros(0)).is_err());
    }

    #[test]
    fn length_one_is_identity() {
        let s = Signal::new(&[3.0], &[-1.0]).unwrap();
        assert_eq!(fft(&s).unwrap(), s);
    }

    #[test]
    fn signed_frequency_layout() {
        let f: Vec<isize> = (0..8).map(|k| signed_frequency(k, 8)).collect();
        assert_eq!(f, vec![0, 1, 2, 3, 4, -3, -2, -1]);
    }

    #[test]
    fn works_in_single_precision() {
        let s = Signal::<f32>::from_real(&[1.0, 2.0, 3.0, 4.0, 0.0, -1.0, 0.5, 2.0]);
        let back = ifft(&fft(&s).unwrap()).unwrap();
        assert!(back.max_abs_diff(&s) < 1e-5);
    }
}
