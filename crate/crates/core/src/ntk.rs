//! Neural tangent kernels: the exact empirical kernel of a [`Generator`] and
//! the closed-form expected kernel of the two-layer decoder.
//!
//! Kernels live in output space. For a network with flattened output `f ∈ ℝ^P`
//! and Jacobian `J = ∂f/∂θ ∈ ℝ^{P×N}` the kernel is `W = J Jᵀ` (`P × P`).
//! Two-channel networks flatten as `[re; im]`, matching the stacked real view
//! of a complex signal.

use std::io::Write;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::{fixed_last_layer, Generator};
use crate::numerics::linalg::{checked_psd_eigen, SymEigen, PSD_TOL, SYMMETRY_TOL};
use crate::numerics::{fft, Matrix, RngStream, Scalar, Signal};

/// Largest flattened network output for which a dense Jacobian is formed.
pub const MAX_NTK_OUTPUTS: usize = 256;

/// Symmetric positive semidefinite kernel matrix with a lazily cached eigendecomposition.
#[derive(Clone, Debug)]
pub struct Kernel<T> {
    data: Matrix<T>,
    eig: OnceLock<SymEigen<T>>,
}

impl<T: Scalar> Kernel<T> {
    /// Validates symmetry and positive semidefiniteness, caching the eigendecomposition.
    pub fn new(data: Matrix<T>) -> Result<Self> {
        let eig = checked_psd_eigen(&data)?;
        let cell = OnceLock::new();
        let _ = cell.set(eig);
        Ok(Self { data, eig: cell })
    }

    /// Wraps a Gram matrix `G Gᵀ`, PSD by construction. Rounding asymmetry is removed.
    pub fn from_gram(data: Matrix<T>) -> Result<Self> {
        let scale = T::one().max(data.max_abs());
        if !data.is_square() || data.asymmetry() > T::lit(SYMMETRY_TOL) * scale {
            return Err(Error::NotSymmetric(data.asymmetry().as_f64()));
        }
        Ok(Self {
            data: data.symmetrized(),
            eig: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.data.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.data
    }

    /// Eigenvalues in descending order with orthonormal eigenvector columns.
    pub fn eigen(&self) -> &SymEigen<T> {
        self.eig.get_or_init(|| {
            crate::numerics::symmetric_eigen(&self.data).expect("kernel matrix is square")
        })
    }

    /// Most negative eigenvalue relative to `max(1, λ_max)`; non-positive means PSD within tolerance.
    pub fn psd_violation(&self) -> T {
        let e = self.eigen();
        -e.min_eigenvalue() / T::one().max(e.max_eigenvalue()) - T::lit(PSD_TOL)
    }

    /// Writes the matrix as CSV: one row per line, no header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_matrix_csv(&self.data, w)
    }

    pub fn cast<U: Scalar>(&self) -> Kernel<U> {
        Kernel {
            data: self.data.cast(),
            eig: OnceLock::new(),
        }
    }
}

pub fn write_matrix_csv<T: Scalar, W: Write>(m: &Matrix<T>, w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.rows() {
        out.write_record(m.row(i).iter().map(|x| format!("{:e}", x.as_f64())))?;
    }
    out.flush()?;
    Ok(())
}

/// Flattened output dimension: `q` for real-output networks, `2q` for two-channel ones.
pub fn flat_output_dim<T: Scalar>(net: &Generator<T>) -> usize {
    net.output_len() * net.output_channels()
}

/// Exact Jacobian `∂f/∂θ` (`P × N`), one reverse pass per output coordinate.
///
/// Rows are computed in parallel; each is an independent backward pass, so
/// the result does not depend on scheduling.
pub fn jacobian<T: Scalar>(net: &Generator<T>, input: &Signal<T>) -> Result<Matrix<T>> {
    let p = flat_output_dim(net);
    if p > MAX_NTK_OUTPUTS {
        return Err(Error::Size(format!(
            "network has {p} outputs; dense NTK is limited to {MAX_NTK_OUTPUTS}"
        )));
    }
    let q = net.output_len();
    let rows: Vec<Vec<T>> = (0..p)
        .into_par_iter()
        .map(|r| {
            let mut cot = Signal::zeros(q);
            cot.as_stacked_mut()[r] = T::one();
            net.backward(input, &cot, false).map(|g| g.weights)
        })
        .collect::<Result<_>>()?;
    let n = net.num_weights();
    Matrix::from_vec(p, n, rows.into_iter().flatten().collect())
}

/// Empirical NTK `J Jᵀ` at the network's current weights.
pub fn empirical_ntk<T: Scalar>(net: &Generator<T>, input: &Signal<T>) -> Result<Kernel<T>> {
    let j = jacobian(net, input)?;
    Kernel::from_gram(j.matmul(&j.transpose()))
}

fn row_norms<T: Scalar>(u: &Matrix<T>) -> Result<Vec<T>> {
    (0..u.rows())
        .map(|i| {
            let n = crate::numerics::scalar::norm2(u.row(i));
            if n == T::zero() {
                Err(Error::DegenerateRow(i))
            } else {
                Ok(n)
            }
        })
        .collect()
}

/// Angular factor `½(1 − arccos(⟨u_i, u_j⟩ / ‖u_i‖‖u_j‖)/π)` of the expected decoder kernel.
pub fn decoder_angular_kernel<T: Scalar>(u: &Matrix<T>) -> Result<Matrix<T>> {
    let norms = row_norms(u)?;
    let g = u.matmul(&u.transpose());
    let half = T::lit(0.5);
    let mut out = Matrix::from_fn(u.rows(), u.rows(), |i, j| {
        let c = (g[(i, j)] / (norms[i] * norms[j])).max(-T::one()).min(T::one());
        half * (T::one() - c.acos() / T::PI())
    });
    for i in 0..u.rows() {
        out[(i, i)] = half;
    }
    Ok(out.symmetrized())
}

/// Expected NTK of the two-layer decoder over Gaussian `C`: angular factor ⊙ `UUᵀ`.
///
/// The fixed last layer satisfies `Σ v_l² = 1`, so no further scaling appears.
pub fn expected_decoder_ntk<T: Scalar>(u: &Matrix<T>) -> Result<Kernel<T>> {
    let ang = decoder_angular_kernel(u)?;
    let g = u.matmul(&u.transpose()).symmetrized();
    Kernel::from_gram(ang.hadamard(&g))
}

/// Monte-Carlo average of `Σ_l v_l² σ′(Uc_l) σ′(Uc_l)ᵀ ⊙ UUᵀ` over i.i.d. standard Gaussian `C`.
pub fn monte_carlo_decoder_ntk<T: Scalar>(
    u: &Matrix<T>,
    k: usize,
    trials: usize,
    rng: &mut RngStream,
) -> Result<Kernel<T>> {
    if trials == 0 {
        return Err(Error::Invalid("monte-carlo NTK needs at least one trial".into()));
    }
    let n = u.rows();
    let v: Vec<T> = fixed_last_layer(k);
    let mut acc = Matrix::zeros(n, n);
    for _ in 0..trials {
        let c = Matrix::from_vec(u.cols(), k, rng.normals(u.cols() * k, T::one()))?;
        let h = u.matmul(&c);
        for l in 0..k {
            let w = v[l] * v[l];
            let active: Vec<usize> = (0..n).filter(|&i| h[(i, l)] > T::zero()).collect();
            for &i in &active {
                for &j in &active {
                    acc[(i, j)] += w;
                }
            }
        }
    }
    let g = u.matmul(&u.transpose()).symmetrized();
    let avg = acc.scale(T::one() / T::from_usize_lossy(trials));
    Kernel::from_gram(avg.hadamard(&g))
}

/// Mean Fourier peak concentration of the leading eigenvectors of a real `q × q` kernel.
///
/// Each unit eigenvector `e` contributes `max_f (|ê(f)|² + |ê(−f)|²)`; folding
/// `±f` makes a real cosine or sine mode score 1. The average runs over the top
/// `max(1, q/4)` eigenvectors.
pub fn fourier_coherence<T: Scalar>(kernel: &Kernel<T>) -> Result<T> {
    let q = kernel.dim();
    let eig = kernel.eigen();
    let top = (q / 4).max(1);
    let mut total = T::zero();
    for c in 0..top {
        let spec = fft::fft(&Signal::from_real(&eig.vectors.column(c)))?;
        let power: Vec<T> = (0..q).map(|f| spec.get(f).norm_sqr()).collect();
        let peak = (0..=q / 2)
            .map(|f| {
                let mirror = (q - f) % q;
                if mirror == f {
                    power[f]
                } else {
                    power[f] + power[mirror]
                }
            })
            .fold(T::zero(), T::max);
        total += peak;
    }
    Ok(total / T::from_usize_lossy(top))
}

/// Top-left `q × q` block of a kernel: the real-output part of a two-channel kernel.
pub fn real_block<T: Scalar>(kernel: &Kernel<T>, q: usize) -> Result<Kernel<T>> {
    if q > kernel.dim() {
        return Err(Error::Dimension {
            expected: kernel.dim(),
            got: q,
            context: "kernel block size",
        });
    }
    let m = kernel.matrix();
    Kernel::from_gram(Matrix::from_fn(q, q, |i, j| m[(i, j)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angular_factor_special_angles() {
        let u = Matrix::from_vec(2, 2, vec![1.0f64, 0.0, 0.0, 2.0]).unwrap();
        let a = decoder_angular_kernel(&u).unwrap();
        assert!((a[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((a[(0, 1)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_row_is_degenerate() {
        let u = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(expected_decoder_ntk(&u), Err(Error::DegenerateRow(1))));
    }

    #[test]
    fn kernel_rejects_asymmetric_and_indefinite() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(Kernel::new(a).is_err());
        let b = Matrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(Kernel::new(b), Err(Error::NotPsd(_))));
    }

    #[test]
    fn circulant_kernel_is_fourier_coherent() {
        let q = 16;
        let lam: Vec<f64> = (0..q).map(|f| 1.0 / (1.0 + f as f64)).collect();
        // Circulant with a real symmetric first column has Fourier eigenvectors.
        let col: Vec<f64> = (0..q)
            .map(|j| {
                (0..q)
                    .map(|f| lam[f.min(q - f)] * (2.0 * std::f64::consts::PI * (f * j) as f64 / q as f64).cos())
                    .sum::<f64>()
                    / q as f64
            })
            .collect();
        let w = Kernel::new(Matrix::circulant(&col)).unwrap();
        assert!(fourier_coherence(&w).unwrap() > 0.99);
    }
}
