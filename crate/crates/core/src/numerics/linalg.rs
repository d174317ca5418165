//! Dense decompositions and the derived operators built on them.
//!
//! Symmetric eigenproblems use cyclic Jacobi rotations and general matrices
//! use one-sided (Hestenes) Jacobi SVD. Both are accurate to a few ulps of
//! `‖M‖` for the matrix sizes this crate handles (≤ 256).
//!
//! Every rank decision goes through [`RankTol`]. The default cutoff is
//! `max(rows, cols) · ε · σ_max`.

use super::matrix::Matrix;
use super::scalar::{self, Scalar};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Threshold below which a singular value (or PSD eigenvalue) counts as zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RankTol {
    /// `max(rows, cols) · ε · σ_max`
    Machine,
    /// `rel · σ_max`
    Relative(f64),
    Absolute(f64),
}

impl RankTol {
    pub fn cutoff<T: Scalar>(self, rows: usize, cols: usize, smax: T) -> T {
        match self {
            RankTol::Machine => T::from_usize_lossy(rows.max(cols)) * T::epsilon() * smax,
            RankTol::Relative(r) => T::lit(r) * smax,
            RankTol::Absolute(a) => T::lit(a),
        }
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    /// Orthonormal eigenvectors stored as columns.
    pub vectors: Matrix<T>,
}

impl<T: Scalar> SymEigen<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max_eigenvalue(&self) -> T {
        self.values.first().copied().unwrap_or_else(T::zero)
    }

    pub fn min_eigenvalue(&self) -> T {
        self.values.last().copied().unwrap_or_else(T::zero)
    }

    /// `V · diag(f(λ)) · Vᵀ`
    pub fn map_spectrum(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let n = self.dim();
        let fv: Vec<T> = self.values.iter().map(|&l| f(l)).collect();
        let mut scaled = self.vectors.clone();
        for i in 0..n {
            for (j, &s) in fv.iter().enumerate() {
                scaled[(i, j)] *= s;
            }
        }
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = T::zero();
                for k in 0..n {
                    acc += scaled[(i, k)] * self.vectors[(j, k)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        self.map_spectrum(|l| l)
    }

    /// Number of eigenvalues above the cutoff (taken relative to `max |λ|`).
    pub fn rank(&self, tol: RankTol) -> usize {
        let smax = self.values.iter().fold(T::zero(), |m, &l| m.max(l.abs()));
        let cut = tol.cutoff(self.dim(), self.dim(), smax);
        self.values.iter().filter(|&&l| l.abs() > cut).count()
    }
}

/// Cyclic Jacobi eigendecomposition. The input is symmetrized before rotation.
pub fn symmetric_eigen<T: Scalar>(m: &Matrix<T>) -> Result<SymEigen<T>> {
    if !m.is_square() {
        return Err(Error::Dimension {
            expected: m.rows(),
            got: m.cols(),
            context: "symmetric_eigen needs a square matrix",
        });
    }
    let n = m.rows();
    let mut a = m.symmetrized();
    let mut v = Matrix::identity(n);
    let total = a.frobenius_norm();
    if total == T::zero() {
        return Ok(SymEigen {
            values: vec![T::zero(); n],
            vectors: v,
        });
    }
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= eps * total * T::lit(1e-2) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Skip rotations that cannot change the diagonal at working precision.
                if apq.abs() < eps * T::lit(1e-3) * (app.abs() + aqq.abs()) {
                    a[(p, q)] = T::zero();
                    a[(q, p)] = T::zero();
                    continue;
                }
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = if theta.abs() > T::lit(1e150) {
                    T::one() / (T::lit(2.0) * theta)
                } else {
                    let sgn = if theta >= T::zero() { T::one() } else { -T::one() };
                    sgn / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    let new_rp = c * arp - s * arq;
                    let new_rq = s * arp + c * arq;
                    a[(r, p)] = new_rp;
                    a[(p, r)] = new_rp;
                    a[(r, q)] = new_rq;
                    a[(q, r)] = new_rq;
                }
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = v.permute_columns(&order);
    Ok(SymEigen { values, vectors })
}

/// Thin SVD `M = U · diag(s) · Vᵀ` with `k = min(rows, cols)` columns.
///
/// Columns of `U` belonging to zero singular values are left as zero vectors.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Scalar> Svd<T> {
    pub fn max_singular(&self) -> T {
        self.s.first().copied().unwrap_or_else(T::zero)
    }

    pub fn cutoff(&self, tol: RankTol) -> T {
        tol.cutoff(self.u.rows(), self.v.rows(), self.max_singular())
    }

    pub fn rank(&self, tol: RankTol) -> usize {
        let cut = self.cutoff(tol);
        self.s.iter().filter(|&&x| x > cut).count()
    }
}

pub fn svd<T: Scalar>(m: &Matrix<T>) -> Svd<T> {
    if m.rows() < m.cols() {
        let t = svd_tall(&m.transpose());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    svd_tall(m)
}

fn svd_tall<T: Scalar>(m: &Matrix<T>) -> Svd<T> {
    let (rows, cols) = m.shape();
    // Work on columns stored contiguously.
    let mut work: Vec<Vec<T>> = (0..cols).map(|j| m.column(j)).collect();
    let mut vcols: Vec<Vec<T>> = (0..cols)
        .map(|j| {
            let mut e = vec![T::zero(); cols];
            e[j] = T::one();
            e
        })
        .collect();
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let alpha = scalar::norm2_sq(&work[i]);
                let beta = scalar::norm2_sq(&work[j]);
                let gamma = scalar::dot(&work[i], &work[j]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = if zeta.abs() > T::lit(1e150) {
                    T::one() / (T::lit(2.0) * zeta)
                } else {
                    let sgn = if zeta >= T::zero() { T::one() } else { -T::one() };
                    sgn / (zeta.abs() + (T::one() + zeta * zeta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut work, i, j, c, s);
                rotate_pair(&mut vcols, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = work.iter().map(|c| scalar::norm2(c)).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).expect("finite singular values"));

    let smax = order.first().map_or(T::zero(), |&i| norms[i]);
    let mut u = Matrix::zeros(rows, cols);
    let mut v = Matrix::zeros(cols, cols);
    let mut s = Vec::with_capacity(cols);
    for (k, &idx) in order.iter().enumerate() {
        let sigma = norms[idx];
        s.push(sigma);
        if sigma > smax * eps * T::lit(1e-3) && sigma > T::zero() {
            let inv = T::one() / sigma;
            for r in 0..rows {
                u[(r, k)] = work[idx][r] * inv;
            }
        }
        v.set_column(k, &vcols[idx]);
    }
    Svd { u, s, v }
}

fn rotate_pair<T: Scalar>(cols: &mut [Vec<T>], i: usize, j: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(j);
    let ci = &mut left[i];
    let cj = &mut right[0];
    for (a, b) in ci.iter_mut().zip(cj.iter_mut()) {
        let x = *a;
        let y = *b;
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Moore–Penrose pseudo-inverse with the default cutoff.
pub fn pinv<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    pinv_with(m, RankTol::Machine)
}

pub fn pinv_with<T: Scalar>(m: &Matrix<T>, tol: RankTol) -> Matrix<T> {
    let d = svd(m);
    let cut = d.cutoff(tol);
    let (rows, cols) = m.shape();
    let mut out = Matrix::zeros(cols, rows);
    for (k, &sigma) in d.s.iter().enumerate() {
        if sigma <= cut {
            continue;
        }
        let inv = T::one() / sigma;
        for i in 0..cols {
            let vi = d.v[(i, k)] * inv;
            if vi == T::zero() {
                continue;
            }
            for j in 0..rows {
                out[(i, j)] += vi * d.u[(j, k)];
            }
        }
    }
    out
}

pub fn rank<T: Scalar>(m: &Matrix<T>, tol: RankTol) -> usize {
    svd(m).rank(tol)
}

/// Orthogonal projector onto the column space of `m`.
pub fn projector_onto_range<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    projector_onto_range_with(m, RankTol::Machine)
}

pub fn projector_onto_range_with<T: Scalar>(m: &Matrix<T>, tol: RankTol) -> Matrix<T> {
    let d = svd(m);
    let r = d.rank(tol);
    outer_of_columns(&d.u, r)
}

/// Orthogonal projector onto the null space of `m`.
pub fn projector_onto_null_space<T: Scalar>(m: &Matrix<T>, tol: RankTol) -> Matrix<T> {
    let d = svd(m);
    let r = d.rank(tol);
    let n = m.cols();
    Matrix::identity(n).sub(&outer_of_columns(&d.v, r))
}

/// Projector onto the intersection of the subspaces behind two orthogonal projectors.
///
/// The intersection is the null space of the PSD matrix `(I − P₁) + (I − P₂)`,
/// so this never iterates alternating projections.
pub fn intersection_projector<T: Scalar>(p1: &Matrix<T>, p2: &Matrix<T>, tol: RankTol) -> Result<Matrix<T>> {
    let n = p1.rows();
    let two_i = Matrix::identity(n).scale(T::lit(2.0));
    let gap = two_i.sub(p1).sub(p2);
    let eig = symmetric_eigen(&gap)?;
    // Eigenvalues of the gap lie in [0, 2]; use an absolute scale of 2.
    let cut = tol.cutoff(n, n, T::lit(2.0));
    let null: Vec<usize> = (0..n).filter(|&k| eig.values[k] <= cut).collect();
    let basis = eig.vectors.permute_columns(&null);
    Ok(outer_of_columns(&basis, null.len()))
}

/// `Σ_{k<r} c_k c_kᵀ` over the first `r` columns.
fn outer_of_columns<T: Scalar>(basis: &Matrix<T>, r: usize) -> Matrix<T> {
    let n = basis.rows();
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = T::zero();
            for k in 0..r {
                acc += basis[(i, k)] * basis[(j, k)];
            }
            p[(i, j)] = acc;
            p[(j, i)] = acc;
        }
    }
    p
}

/// Square root of a PSD matrix together with the pseudo-inverse of that root.
#[derive(Clone, Debug)]
pub struct PsdRoot<T> {
    pub sqrt: Matrix<T>,
    pub pinv_sqrt: Matrix<T>,
    pub rank: usize,
}

/// Symmetry tolerance for PSD inputs, scaled by `max(1, max |m_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated, scaled by `max(1, λ_max)`.
pub const PSD_TOL: f64 = 1e-8;

pub fn psd_sqrt<T: Scalar>(m: &Matrix<T>) -> Result<PsdRoot<T>> {
    let eig = checked_psd_eigen(m)?;
    Ok(psd_root_from_eigen(&eig))
}

/// Eigendecomposition of a matrix that must be symmetric PSD within the crate tolerances.
pub fn checked_psd_eigen<T: Scalar>(m: &Matrix<T>) -> Result<SymEigen<T>> {
    if !m.is_square() {
        return Err(Error::Dimension {
            expected: m.rows(),
            got: m.cols(),
            context: "PSD matrix must be square",
        });
    }
    let scale = T::one().max(m.max_abs());
    let asym = m.asymmetry();
    if asym > T::lit(SYMMETRY_TOL) * scale {
        return Err(Error::NotSymmetric(asym.as_f64()));
    }
    let eig = symmetric_eigen(m)?;
    let floor = -T::lit(PSD_TOL) * T::one().max(eig.max_eigenvalue());
    if eig.min_eigenvalue() < floor {
        return Err(Error::NotPsd(eig.min_eigenvalue().as_f64()));
    }
    Ok(eig)
}

pub fn psd_root_from_eigen<T: Scalar>(eig: &SymEigen<T>) -> PsdRoot<T> {
    let n = eig.dim();
    let cut = RankTol::Machine.cutoff(n, n, eig.max_eigenvalue().max(T::zero()));
    let rank = eig.values.iter().filter(|&&l| l > cut).count();
    let sqrt = eig.map_spectrum(|l| l.max(T::zero()).sqrt());
    let pinv_sqrt = eig.map_spectrum(|l| if l > cut { T::one() / l.sqrt() } else { T::zero() });
    PsdRoot {
        sqrt,
        pinv_sqrt,
        rank,
    }
}

/// Largest singular value.
pub fn spectral_norm<T: Scalar>(m: &Matrix<T>) -> T {
    svd(m).max_singular()
}
