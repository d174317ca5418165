//! Seeded random problem instances for the kernel-regime experiments.

use crate::dynamics::DynamicsProblem;
use crate::error::Result;
use crate::ntk::Kernel;
use crate::numerics::{linalg, Matrix, RngStream, Scalar, Signal};
use crate::operators::{variable_density_mask, LinearOp};

/// i.i.d. `N(0, std²)` matrix.
pub fn gaussian_matrix<T: Scalar>(rows: usize, cols: usize, std: T, rng: &mut RngStream) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| rng.normal_scaled(std))
}

/// Full-rank PSD kernel `GᵀG/n + shift·I`.
pub fn random_psd<T: Scalar>(n: usize, shift: T, rng: &mut RngStream) -> Result<Kernel<T>> {
    let g = gaussian_matrix(n, n, T::one(), rng);
    let w = g
        .tr_matmul(&g)
        .scale(T::one() / T::from_usize_lossy(n))
        .add(&Matrix::identity(n).scale(shift));
    Kernel::new(w.symmetrized())
}

/// Rank-`r` PSD kernel `VVᵀ` from an `n × r` basis.
pub fn psd_from_basis<T: Scalar>(v: &Matrix<T>) -> Result<Kernel<T>> {
    Kernel::new(v.matmul(&v.transpose()).symmetrized())
}

/// Rank-`r` PSD kernel with a Gaussian basis scaled by `1/√r`.
pub fn low_rank_psd<T: Scalar>(n: usize, r: usize, rng: &mut RngStream) -> Result<Kernel<T>> {
    let s = T::one() / T::from_usize_lossy(r.max(1)).sqrt();
    psd_from_basis(&gaussian_matrix(n, r, s, rng))
}

/// PSD kernel with eigenvalues log-spaced from `1` down to `1/condition` in a random basis.
pub fn conditioned_psd<T: Scalar>(n: usize, condition: T, rng: &mut RngStream) -> Result<Kernel<T>> {
    let q = random_orthogonal(n, rng);
    let denom = T::from_usize_lossy(n.saturating_sub(1).max(1));
    let lam: Vec<T> = (0..n)
        .map(|i| condition.powf(-T::from_usize_lossy(i) / denom))
        .collect();
    let w = q.matmul(&Matrix::from_diag(&lam)).matmul(&q.transpose());
    Kernel::new(w.symmetrized())
}

/// Haar-distributed orthogonal matrix (eigenvectors of a Gaussian orthogonal ensemble draw).
pub fn random_orthogonal<T: Scalar>(n: usize, rng: &mut RngStream) -> Matrix<T> {
    let g = gaussian_matrix(n, n, T::one(), rng);
    linalg::symmetric_eigen(&g.add(&g.transpose()))
        .expect("square matrix")
        .vectors
}

/// Dense `p × q` Gaussian operator scaled by `1/√q`.
pub fn gaussian_operator<T: Scalar>(p: usize, q: usize, rng: &mut RngStream) -> Matrix<T> {
    gaussian_matrix(p, q, T::one() / T::from_usize_lossy(q).sqrt(), rng)
}

/// Real embedding of a single-coil variable-density Fourier operator, `2p × 2q`.
pub fn fourier_operator<T: Scalar>(q: usize, acceleration: usize, rng: &mut RngStream) -> Result<Matrix<T>> {
    let mask = variable_density_mask(q, acceleration, rng)?;
    Ok(LinearOp::<T>::masked_fourier(mask)?.materialize_real()?.into_matrix())
}

/// Random problem with a full-rank kernel and `η = 1/(2‖B‖)`.
///
/// Even draws use a dense Gaussian operator on `ℝ^q`; odd draws the embedded
/// masked Fourier operator on `ℂ^{q/2}` (so both act on `ℝ^q`).
pub fn oracle_problem<T: Scalar>(q: usize, sigma: T, rng: &mut RngStream, fourier: bool) -> Result<DynamicsProblem<T>> {
    let a = if fourier {
        fourier_operator(q / 2, 2, rng)?
    } else {
        gaussian_operator(q / 2, q, rng)
    };
    let w = random_psd(q, T::lit(0.1), rng)?;
    let x = rng.normals(q, T::one());
    DynamicsProblem::with_relative_step(a, w, x, sigma, T::lit(0.5))
}

/// Full-rank kernel, dense `p × q` operator, `η = 1/‖B‖`, noise-free.
pub fn nonsingular_problem<T: Scalar>(q: usize, p: usize, rng: &mut RngStream) -> Result<DynamicsProblem<T>> {
    let a = gaussian_operator(p, q, rng);
    let w = random_psd(q, T::lit(0.5), rng)?;
    let x = rng.normals(q, T::one());
    DynamicsProblem::with_relative_step(a, w, x, T::zero(), T::one())
}

/// Rank-`rank` kernel with a generic basis and `x ∈ R(W)`.
///
/// With `rank ≤ p` the intersection `N(A) ∩ R(W)` is trivial almost surely.
pub fn exact_recovery_problem<T: Scalar>(q: usize, p: usize, rank: usize, rng: &mut RngStream) -> Result<DynamicsProblem<T>> {
    let a = gaussian_operator(p, q, rng);
    let w = low_rank_psd(q, rank, rng)?;
    let x = w.matrix().matvec(&rng.normals(q, T::one()));
    DynamicsProblem::with_relative_step(a, w, x, T::zero(), T::one())
}

/// Rank-`rank` kernel with a generic basis and generic `x` (so `P_{N(W)}x ≠ 0`).
pub fn singular_problem<T: Scalar>(q: usize, p: usize, rank: usize, rng: &mut RngStream) -> Result<DynamicsProblem<T>> {
    let a = gaussian_operator(p, q, rng);
    let w = low_rank_psd(q, rank, rng)?;
    let x = rng.normals(q, T::one());
    DynamicsProblem::with_relative_step(a, w, x, T::zero(), T::one())
}

/// Rank-`rank` kernel whose range contains a unit direction `d ∈ N(A)`, and `x ⊥ d`.
///
/// Here `N(A) ∩ R(W) = span{d}` is non-trivial while `P_{N(A)∩R(W)}x = 0`.
pub fn planted_intersection_problem<T: Scalar>(
    q: usize,
    p: usize,
    rank: usize,
    rng: &mut RngStream,
) -> Result<DynamicsProblem<T>> {
    let a = gaussian_operator(p, q, rng);
    let null_a = linalg::projector_onto_null_space(&a, linalg::RankTol::Machine);
    let mut d = null_a.matvec(&rng.normals(q, T::one()));
    let dn = crate::numerics::scalar::norm2(&d);
    d.iter_mut().for_each(|v| *v /= dn);
    let s = T::one() / T::from_usize_lossy(rank).sqrt();
    let mut basis = gaussian_matrix(q, rank, s, rng);
    basis.set_column(0, &d);
    let w = psd_from_basis(&basis)?;
    let mut x = rng.normals(q, T::one());
    let along = crate::numerics::scalar::dot(&x, &d);
    crate::numerics::scalar::axpy(&mut x, -along, &d);
    DynamicsProblem::with_relative_step(a, w, x, T::zero(), T::one())
}

/// Unit-height centered square of width `q/4`.
pub fn square_signal<T: Scalar>(q: usize) -> Signal<T> {
    let w = q / 4;
    let start = (q - w) / 2;
    let re: Vec<T> = (0..q)
        .map(|i| if i >= start && i < start + w { T::one() } else { T::zero() })
        .collect();
    Signal::from_real(&re)
}
