//! Two-layer deep decoder `G(z) = ReLU(U · diag(z) · C) · v`.
//!
//! `U` is a fixed circulant convolution, `C ∈ ℝ^{n×k}` is trainable and `v`
//! is the fixed last layer with half its entries `+1/√k` and half `−1/√k`.
//! With `z = 1` this is exactly `ReLU(UC)v`; a general input rescales the
//! columns of `U`, keeping the map positively homogeneous in `z`.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

#[derive(Clone, Debug)]
pub struct Decoder<T> {
    pub(crate) n: usize,
    pub(crate) k: usize,
    pub(crate) u: Matrix<T>,
    pub(crate) v: Vec<T>,
}

/// Fixed last layer: first half `+1/√k`, second half `−1/√k`.
pub fn fixed_last_layer<T: Scalar>(k: usize) -> Vec<T> {
    let a = T::one() / T::from_usize_lossy(k).sqrt();
    (0..k).map(|l| if l < k / 2 { a } else { -a }).collect()
}

impl<T: Scalar> Decoder<T> {
    pub fn new(u: Matrix<T>, k: usize) -> Result<Self> {
        if !u.is_square() {
            return Err(Error::Dimension {
                expected: u.rows(),
                got: u.cols(),
                context: "decoder convolution must be square",
            });
        }
        if k == 0 || k % 2 != 0 {
            return Err(Error::Invalid(format!("decoder width k = {k} must be even and positive")));
        }
        Ok(Self {
            n: u.rows(),
            k,
            u,
            v: fixed_last_layer(k),
        })
    }

    pub fn num_weights(&self) -> usize {
        self.n * self.k
    }

    /// Pre-activations `H = U · diag(z) · C`.
    fn preactivations(&self, c: &[T], z: &[T]) -> Matrix<T> {
        let (n, k) = (self.n, self.k);
        let scaled = Matrix::from_fn(n, k, |j, l| z[j] * c[j * k + l]);
        self.u.matmul(&scaled)
    }

    pub fn forward(&self, c: &[T], z: &[T]) -> Vec<T> {
        let h = self.preactivations(c, z);
        (0..self.n)
            .map(|i| {
                h.row(i)
                    .iter()
                    .zip(&self.v)
                    .map(|(&x, &vl)| x.max(T::zero()) * vl)
                    .sum()
            })
            .collect()
    }

    /// Returns `(∂L/∂C, ∂L/∂z)` for output cotangent `g`.
    pub fn backward(&self, c: &[T], z: &[T], g: &[T]) -> (Vec<T>, Vec<T>) {
        let (n, k) = (self.n, self.k);
        let h = self.preactivations(c, z);
        let dh = Matrix::from_fn(n, k, |i, l| {
            if h[(i, l)] > T::zero() {
                g[i] * self.v[l]
            } else {
                T::zero()
            }
        });
        // dP = Uᵀ dH with P = diag(z) C
        let dp = self.u.tr_matmul(&dh);
        let mut dc = vec![T::zero(); n * k];
        let mut dz = vec![T::zero(); n];
        for j in 0..n {
            for l in 0..k {
                dc[j * k + l] = z[j] * dp[(j, l)];
                dz[j] += c[j * k + l] * dp[(j, l)];
            }
        }
        (dc, dz)
    }
}
