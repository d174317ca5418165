//! Kernel-regime training dynamics `z_{t+1} = z_t + ηW(Aᵀy − AᵀAz_t)`, `z_0 = 0`.
//!
//! Everything here works in a real vector space. Complex problems enter through
//! the stacked embedding `[v_R; v_I]` (see [`DynamicsProblem::from_map`]), and
//! the noise level `sigma` is always the standard deviation of each real
//! noise component.
//!
//! Notation: `S = W^{1/2}`, `B = S AᵀA S`, `M = I − ηWAᵀA` (the iteration matrix).

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ntk::Kernel;
use crate::numerics::linalg::{intersection_projector, pinv, pinv_with, symmetric_eigen, svd, RankTol, SymEigen};
use crate::numerics::scalar::{self, norm2, norm2_sq};
use crate::numerics::{Matrix, Scalar, Signal};
use crate::operators::LinearOp;

/// Largest `t` evaluated by repeated squaring; larger powers use the spectral form.
pub const SQUARING_MAX_T: u64 = 1 << 12;
/// Default long-run iteration budget.
pub const LONG_RUN_ITERS: u64 = 100_000;
/// Default long-run stopping threshold on `‖z_{t+1} − z_t‖`.
pub const LONG_RUN_STEP_TOL: f64 = 1e-12;
/// Relative tolerance for the Theorem 1 preconditions (`P_{N(A)∩R(W)}x = 0`, `x ∈ R(W)`).
pub const PRECONDITION_TOL: f64 = 1e-8;

/// A linear inverse problem together with a fixed kernel and step size.
#[derive(Clone, Debug)]
pub struct DynamicsProblem<T> {
    a: Matrix<T>,
    w: Kernel<T>,
    x: Vec<T>,
    sigma: T,
    eta: T,
    tol: RankTol,
    ata: Matrix<T>,
    a_pinv: Matrix<T>,
    a_rank: usize,
    w_rank: usize,
    sqrt_w: Matrix<T>,
    pinv_sqrt_w: Matrix<T>,
    range_w: Matrix<T>,
    b: Matrix<T>,
    b_eig: SymEigen<T>,
    b_cut: T,
    b_norm: T,
}

impl<T: Scalar> DynamicsProblem<T> {
    /// Rank decisions on derived matrices use `Relative(1e-10)`; see [`Self::with_rank_tol`].
    pub fn new(a: Matrix<T>, w: Kernel<T>, x: Vec<T>, sigma: T, eta: T) -> Result<Self> {
        Self::with_rank_tol(a, w, x, sigma, eta, RankTol::Relative(1e-10))
    }

    pub fn with_rank_tol(a: Matrix<T>, w: Kernel<T>, x: Vec<T>, sigma: T, eta: T, tol: RankTol) -> Result<Self> {
        Self::assemble(a, w, x, sigma, Step::Absolute(eta), tol)
    }

    /// Sets `η = fraction / ‖B‖`.
    pub fn with_relative_step(a: Matrix<T>, w: Kernel<T>, x: Vec<T>, sigma: T, fraction: T) -> Result<Self> {
        Self::assemble(a, w, x, sigma, Step::Relative(fraction), RankTol::Relative(1e-10))
    }

    fn assemble(a: Matrix<T>, w: Kernel<T>, x: Vec<T>, sigma: T, step: Step<T>, tol: RankTol) -> Result<Self> {
        let n = a.cols();
        if w.dim() != n {
            return Err(Error::Dimension {
                expected: n,
                got: w.dim(),
                context: "kernel dimension vs operator columns",
            });
        }
        if x.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: x.len(),
                context: "ground truth length",
            });
        }
        if !(sigma >= T::zero()) || !sigma.is_finite() {
            return Err(Error::Invalid(format!("noise level must be non-negative, got {sigma}")));
        }
        let raw_step = match step {
            Step::Absolute(e) | Step::Relative(e) => e,
        };
        if !(raw_step > T::zero()) || !raw_step.is_finite() {
            return Err(Error::Invalid(format!("step size must be positive, got {raw_step}")));
        }
        if !a.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("operator and ground truth must be finite".into()));
        }

        let w_eig = w.eigen().clone();
        let floor = -T::lit(crate::numerics::linalg::PSD_TOL) * T::one().max(w_eig.max_eigenvalue());
        if w_eig.min_eigenvalue() < floor {
            return Err(Error::NotPsd(w_eig.min_eigenvalue().as_f64()));
        }
        let w_cut = tol.cutoff(n, n, w_eig.max_eigenvalue().max(T::zero()));
        let kept = |l: T| l > w_cut;
        let w_rank = w_eig.values.iter().filter(|&&l| kept(l)).count();
        let sqrt_w = w_eig.map_spectrum(|l| if kept(l) { l.sqrt() } else { T::zero() });
        let pinv_sqrt_w = w_eig.map_spectrum(|l| if kept(l) { T::one() / l.sqrt() } else { T::zero() });
        let range_w = w_eig.map_spectrum(|l| if kept(l) { T::one() } else { T::zero() });

        let ata = a.tr_matmul(&a);
        let b = sqrt_w.matmul(&ata).matmul(&sqrt_w).symmetrized();
        let b_eig = symmetric_eigen(&b)?;
        let b_norm = b_eig.max_eigenvalue().max(T::zero());
        let b_cut = tol.cutoff(n, n, b_norm);
        let eta = match step {
            Step::Absolute(e) => e,
            Step::Relative(f) if b_norm > T::zero() => f / b_norm,
            Step::Relative(f) => f,
        };
        if b_norm > T::zero() && !(eta < T::lit(2.0) / b_norm) {
            return Err(Error::StepSize {
                eta: eta.as_f64(),
                bound: 2.0 / b_norm.as_f64(),
            });
        }
        let a_svd = svd(&a);
        let a_rank = a_svd.rank(RankTol::Machine);
        let a_pinv = pinv(&a);
        Ok(Self {
            a,
            w,
            x,
            sigma,
            eta,
            tol,
            ata,
            a_pinv,
            a_rank,
            w_rank,
            sqrt_w,
            pinv_sqrt_w,
            range_w,
            b,
            b_eig,
            b_cut,
            b_norm,
        })
    }

    /// Builds the real-embedded problem for a complex operator.
    ///
    /// `w` acts on stacked `[re; im]` vectors (`2q × 2q`). `sigma` is the complex
    /// noise level `E|n_i|² = σ²`, so each real component gets `σ/√2`.
    pub fn from_map(map: &LinearOp<T>, w: Kernel<T>, x: &Signal<T>, sigma: T, eta: T) -> Result<Self> {
        let a = map.materialize_real()?.into_matrix();
        Self::new(a, w, x.as_stacked().to_vec(), sigma / T::lit(2.0).sqrt(), eta)
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn measurements(&self) -> usize {
        self.a.rows()
    }

    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn w(&self) -> &Kernel<T> {
        &self.w
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    /// `‖B‖`
    pub fn b_norm(&self) -> T {
        self.b_norm
    }

    pub fn b(&self) -> &Matrix<T> {
        &self.b
    }

    pub fn w_rank(&self) -> usize {
        self.w_rank
    }

    pub fn is_w_singular(&self) -> bool {
        self.w_rank < self.dim()
    }

    /// `λ_max(W) / λ_min(W)`; infinite for singular `W`.
    pub fn w_condition_number(&self) -> T {
        if self.is_w_singular() {
            return T::infinity();
        }
        let e = self.w.eigen();
        e.max_eigenvalue() / e.min_eigenvalue()
    }

    pub fn sqrt_w(&self) -> &Matrix<T> {
        &self.sqrt_w
    }

    pub fn pinv_sqrt_w(&self) -> &Matrix<T> {
        &self.pinv_sqrt_w
    }

    /// `A†`
    pub fn a_pinv(&self) -> &Matrix<T> {
        &self.a_pinv
    }

    /// `y = Ax + noise`
    pub fn measure(&self, noise: &[T]) -> Result<Vec<T>> {
        self.check_noise(noise)?;
        Ok(scalar::add(&self.a.matvec(&self.x), noise))
    }

    fn check_noise(&self, noise: &[T]) -> Result<()> {
        if noise.len() != self.measurements() {
            return Err(Error::Dimension {
                expected: self.measurements(),
                got: noise.len(),
                context: "noise length",
            });
        }
        Ok(())
    }

    fn require_full_row_rank(&self) -> Result<()> {
        if self.a_rank < self.measurements() {
            return Err(Error::RankDeficient {
                rank: self.a_rank,
                required: self.measurements(),
            });
        }
        Ok(())
    }

    /// `M = I − ηWAᵀA`
    pub fn iteration_matrix(&self) -> Matrix<T> {
        let n = self.dim();
        Matrix::identity(n).sub(&self.w.matrix().matmul(&self.ata).scale(self.eta))
    }

    /// `z_t` by running the update `t` times from zero.
    pub fn iterate(&self, noise: &[T], t: u64) -> Result<Vec<T>> {
        Ok(self.iterate_until(noise, t, T::zero())?.0)
    }

    /// Runs at most `max_iter` updates, stopping early once `‖z_{t+1} − z_t‖ ≤ step_tol`.
    /// Returns `(z, iterations_run)`.
    pub fn iterate_until(&self, noise: &[T], max_iter: u64, step_tol: T) -> Result<(Vec<T>, u64)> {
        let y = self.measure(noise)?;
        let w = self.w.matrix();
        let aty = self.a.tr_matvec(&y);
        let n = self.dim();
        let mut z = vec![T::zero(); n];
        for it in 0..max_iter {
            let grad = scalar::sub(&aty, &self.ata.matvec(&z));
            let step = scalar::scale(&w.matvec(&grad), self.eta);
            scalar::axpy(&mut z, T::one(), &step);
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    iter: (it + 1) as usize,
                    what: "kernel-regime iterate",
                });
            }
            if norm2(&step) <= step_tol {
                return Ok((z, it + 1));
            }
        }
        Ok((z, max_iter))
    }

    /// The long run used for limit checks.
    pub fn iterate_long_run(&self, noise: &[T]) -> Result<(Vec<T>, u64)> {
        self.iterate_until(noise, LONG_RUN_ITERS, T::lit(LONG_RUN_STEP_TOL))
    }

    /// `(I − ηB)^t` and `B†(I − (I − ηB)^t)` from the eigendecomposition of `B`.
    fn b_functions(&self, t: u64) -> (Matrix<T>, Matrix<T>) {
        let eta = self.eta;
        let cut = self.b_cut;
        let power = |l: T| {
            if l > cut {
                pow_u64(T::one() - eta * l, t)
            } else {
                T::one()
            }
        };
        let decay = self.b_eig.map_spectrum(power);
        let gain = self
            .b_eig
            .map_spectrum(|l| if l > cut { (T::one() - power(l)) / l } else { T::zero() });
        (decay, gain)
    }

    /// `M^t` through the similarity `M S = S(I − ηB)`:
    /// `M^t = S(I−ηB)^t S† + P_{N(W)} − S B†(I − (I−ηB)^t) S AᵀA P_{N(W)}`.
    pub fn spectral_power(&self, t: u64) -> Matrix<T> {
        let n = self.dim();
        let (decay, gain) = self.b_functions(t);
        let s = &self.sqrt_w;
        let null_w = Matrix::identity(n).sub(&self.range_w);
        let main = s.matmul(&decay).matmul(&self.pinv_sqrt_w);
        let leak = s.matmul(&gain).matmul(s).matmul(&self.ata).matmul(&null_w);
        main.add(&null_w).sub(&leak)
    }

    /// `M^t`: repeated squaring for `t ≤ SQUARING_MAX_T`, spectral form beyond.
    pub fn power(&self, t: u64) -> Matrix<T> {
        if t <= SQUARING_MAX_T {
            self.iteration_matrix().pow(t)
        } else {
            self.spectral_power(t)
        }
    }

    /// `R_t = I − M^t` and `Q_t = R_t A†`.
    pub fn transfer(&self, t: u64) -> Result<Transfer<T>> {
        self.require_full_row_rank()?;
        let r = Matrix::identity(self.dim()).sub(&self.power(t));
        let q = r.matmul(&self.a_pinv);
        Ok(Transfer { r, q })
    }

    /// `z_t = (I − M^t)(x + A†·noise)`.
    pub fn closed_form_zt(&self, noise: &[T], t: u64) -> Result<Vec<T>> {
        self.check_noise(noise)?;
        let tr = self.transfer(t)?;
        Ok(tr.zt(&self.x, noise))
    }

    /// Noise-free limit prediction.
    pub fn predict_limit(&self) -> Result<LimitPrediction<T>> {
        let n = self.dim();
        let x = &self.x;
        let xnorm = norm2(x).max(T::min_positive_value());
        let null_w = Matrix::identity(n).sub(&self.range_w);
        let x_perp = null_w.matvec(x);

        let null_a = crate::numerics::linalg::projector_onto_null_space(&self.a, self.tol);
        let cap = intersection_projector(&null_a, &self.range_w, self.tol)?;
        let precondition_residual = norm2(&cap.matvec(x)) / xnorm;
        let precondition_holds = precondition_residual <= T::lit(PRECONDITION_TOL);
        let x_in_range = norm2(&x_perp) / xnorm <= T::lit(PRECONDITION_TOL);

        let s = &self.sqrt_w;
        let null_b = self.b_eig.map_spectrum(|l| if l > self.b_cut { T::zero() } else { T::one() });
        // −S P_{N(B)} S† x
        let trapped = scalar::scale(&s.matmul(&null_b).matmul(&self.pinv_sqrt_w).matvec(x), -T::one());
        // −x⊥ + S (AS)† A x⊥
        let as_pinv = pinv_with(&self.a.matmul(s), self.tol);
        let leaked = scalar::sub(&s.matmul(&as_pinv).matvec(&self.a.matvec(&x_perp)), &x_perp);
        let exact_limit_error = scalar::add(&trapped, &leaked);

        let (case, limit_error) = if !self.is_w_singular() {
            (LimitCase::Nonsingular, trapped)
        } else if precondition_holds && x_in_range {
            (LimitCase::SingularExact, vec![T::zero(); n])
        } else {
            (LimitCase::SingularGeneral, leaked)
        };
        Ok(LimitPrediction {
            case,
            limit_error,
            exact_limit_error,
            precondition_residual,
            precondition_holds,
            w_rank: self.w_rank,
            w_condition_number: self.w_condition_number(),
        })
    }

    /// Bias, variance and MSE at a single iteration.
    pub fn theorem2_at(&self, t: u64) -> Result<MsePoint<T>> {
        self.require_full_row_rank()?;
        let mt = self.power(t);
        let bias = norm2_sq(&mt.matvec(&self.x));
        let q = Matrix::identity(self.dim()).sub(&mt).matmul(&self.a_pinv);
        let variance = self.sigma * self.sigma * q.frobenius_norm().powi(2);
        Ok(MsePoint {
            t,
            bias,
            variance,
            mse: bias + variance,
        })
    }

    /// Bias, variance and MSE for `t = 0..=t_max`, advancing `M^t x` and `M^t A†` one step at a time.
    pub fn theorem2_curve(&self, t_max: u64) -> Result<MseCurve<T>> {
        self.require_full_row_rank()?;
        let m = self.iteration_matrix();
        let s2 = self.sigma * self.sigma;
        let mut u = self.x.clone();
        let mut p = self.a_pinv.clone();
        let mut points = Vec::with_capacity(t_max as usize + 1);
        for t in 0..=t_max {
            let bias = norm2_sq(&u);
            let variance = s2 * self.a_pinv.sub(&p).frobenius_norm().powi(2);
            points.push(MsePoint {
                t,
                bias,
                variance,
                mse: bias + variance,
            });
            if t < t_max {
                u = m.matvec(&u);
                p = m.matmul(&p);
            }
        }
        Ok(MseCurve { points })
    }

    /// Residuals of the three matrix identities behind the singular-kernel limit.
    ///
    /// Needs `t ≥ 1`: at `t = 0` the power `(P_{B⊥} P_W P_{B⊥})^0 = I` breaks the decomposition.
    pub fn appendix_residuals(&self, t: u64) -> Result<AppendixResiduals<T>> {
        if t == 0 {
            return Err(Error::Invalid("appendix identities are stated for t ≥ 1".into()));
        }
        let n = self.dim();
        let eta = self.eta;
        let s = &self.sqrt_w;
        let s_pinv = &self.pinv_sqrt_w;
        let step = Matrix::identity(n).sub(&self.b.scale(eta));
        let step_t = step.pow(t);
        let b_pinv = pinv_with(&self.b, self.tol);

        // (i) geometric series applied to v = S AᵀA x⊥
        let x_perp = Matrix::identity(n).sub(&self.range_w).matvec(&self.x);
        let v = s.matvec(&self.ata.matvec(&x_perp));
        let mut term = v.clone();
        let mut acc = vec![T::zero(); n];
        for _ in 0..t {
            scalar::axpy(&mut acc, T::one(), &term);
            term = step.matvec(&term);
        }
        let lhs = scalar::scale(&acc, eta);
        let rhs = b_pinv.matvec(&scalar::sub(&v, &step_t.matvec(&v)));
        let geometric = norm2(&scalar::sub(&lhs, &rhs)) / T::one().max(norm2(&lhs).max(norm2(&rhs)));

        // (ii) split of S(I − ηB)^t S† along R(B) and N(B)
        let p_b = crate::numerics::linalg::projector_onto_range_with(&self.b, self.tol);
        let p_b_perp = Matrix::identity(n).sub(&p_b);
        let lhs = s.matmul(&step_t).matmul(s_pinv);
        let along = s.matmul(&p_b).matmul(&step_t).matmul(&p_b).matmul(s_pinv);
        let sandwich = p_b_perp.matmul(&self.range_w).matmul(&p_b_perp);
        let across = s.matmul(&sandwich.pow(t)).matmul(s_pinv);
        let rhs = along.add(&across);
        let decomposition = lhs.max_abs_diff(&rhs) / T::one().max(lhs.max_abs());

        // (iii) alternating-projection limit against an independently built intersection projector
        let limit = sandwich.pow(200);
        let cap = intersection_projector(&p_b_perp, &self.range_w, self.tol)?;
        let projection_limit = limit.max_abs_diff(&cap);

        Ok(AppendixResiduals {
            geometric,
            decomposition,
            projection_limit,
        })
    }
}

#[derive(Clone, Copy)]
enum Step<T> {
    Absolute(T),
    Relative(T),
}

fn pow_u64<T: Scalar>(base: T, mut t: u64) -> T {
    let mut result = T::one();
    let mut b = base;
    while t > 0 {
        if t & 1 == 1 {
            result *= b;
        }
        t >>= 1;
        b = b * b;
    }
    result
}

/// `R_t = I − M^t` and `Q_t = R_t A†`, so that `z_t = R_t x + Q_t n`.
#[derive(Clone, Debug)]
pub struct Transfer<T> {
    pub r: Matrix<T>,
    pub q: Matrix<T>,
}

impl<T: Scalar> Transfer<T> {
    pub fn zt(&self, x: &[T], noise: &[T]) -> Vec<T> {
        scalar::add(&self.r.matvec(x), &self.q.matvec(noise))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitCase {
    Nonsingular,
    SingularGeneral,
    SingularExact,
}

/// Predicted `z_∞ − x` for noise-free measurements.
#[derive(Clone, Debug)]
pub struct LimitPrediction<T> {
    pub case: LimitCase,
    /// The case formula: `−S P_{N(B)} S⁻¹ x`, `−P_{N(W)}x + S(AS)†AP_{N(W)}x`, or zero.
    pub limit_error: Vec<T>,
    /// The full limit `−S P_{N(B)} S† x − P_{N(W)}x + S(AS)†AP_{N(W)}x`, valid in every case.
    pub exact_limit_error: Vec<T>,
    /// `‖P_{N(A)∩R(W)} x‖ / ‖x‖`
    pub precondition_residual: T,
    pub precondition_holds: bool,
    pub w_rank: usize,
    pub w_condition_number: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MsePoint<T> {
    pub t: u64,
    pub bias: T,
    pub variance: T,
    pub mse: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MseCurve<T> {
    pub points: Vec<MsePoint<T>>,
}

impl<T: Scalar> MseCurve<T> {
    /// Index of the smallest MSE (first one on ties).
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.points.iter().enumerate() {
            if p.mse < self.points[best].mse {
                best = i;
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AppendixResiduals<T> {
    pub geometric: T,
    pub decomposition: T,
    pub projection_limit: T,
}

impl<T: Scalar> AppendixResiduals<T> {
    pub fn max(&self) -> T {
        self.geometric.max(self.decomposition).max(self.projection_limit)
    }
}

/// One row of a curve CSV.
#[derive(Clone, Debug, Serialize)]
pub struct CurveRow {
    pub t: u64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub empirical_mse: Option<f64>,
    pub stderr: Option<f64>,
}

/// Writes `t,bias,variance,mse,empirical_mse,stderr`; missing empirical values are left blank.
pub fn write_curve_csv<W: Write>(rows: &[CurveRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Per-frequency `(bias_i, variance_i)` of the single-coil Fourier MSE.
///
/// `sigma` is the complex noise level. Term `i` is
/// `((1−ηλ_i m_i)^{2t} |(𝓕x)_i|², σ²(1 − (1−ηλ_i m_i)^t)²)`.
pub fn corollary1_terms<T: Scalar>(
    lambdas: &[T],
    mask: &[bool],
    fx: &Signal<T>,
    sigma: T,
    eta: T,
    t: u64,
) -> Result<Vec<(T, T)>> {
    let q = lambdas.len();
    if mask.len() != q || fx.len() != q {
        return Err(Error::Dimension {
            expected: q,
            got: if mask.len() != q { mask.len() } else { fx.len() },
            context: "per-frequency arrays",
        });
    }
    Ok((0..q)
        .map(|i| {
            let m = if mask[i] { T::one() } else { T::zero() };
            let r = pow_u64(T::one() - eta * lambdas[i] * m, t);
            let bias = r * r * fx.get(i).norm_sqr();
            let g = T::one() - r;
            (bias, sigma * sigma * g * g)
        })
        .collect())
}

pub fn corollary1_mse<T: Scalar>(
    lambdas: &[T],
    mask: &[bool],
    fx: &Signal<T>,
    sigma: T,
    eta: T,
    t: u64,
) -> Result<T> {
    let terms = corollary1_terms(lambdas, mask, fx, sigma, eta, t)?;
    let flat: Vec<T> = terms.iter().flat_map(|&(b, v)| [b, v]).collect();
    Ok(scalar::pairwise_sum(&flat))
}

/// Real embedding of the circulant kernel `𝓕ᴴ diag(λ) 𝓕` acting on `[re; im]`.
pub fn circulant_kernel_embedding<T: Scalar>(lambdas: &[T]) -> Result<Kernel<T>> {
    let q = lambdas.len();
    let f = LinearOp::<T>::masked_fourier(vec![true; q])?.materialize_real()?.into_matrix();
    let diag: Vec<T> = lambdas.iter().chain(lambdas).copied().collect();
    let scaled = Matrix::from_diag(&diag).matmul(&f);
    Kernel::new(f.tr_matmul(&scaled).symmetrized())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_problem(x: Vec<f64>, eta: f64, sigma: f64) -> DynamicsProblem<f64> {
        let n = x.len();
        let w = Kernel::new(Matrix::identity(n)).unwrap();
        DynamicsProblem::new(Matrix::identity(n), w, x, sigma, eta).unwrap()
    }

    #[test]
    fn identity_problem_contracts_geometrically() {
        let p = identity_problem(vec![1.0, -2.0, 4.0], 0.5, 0.0);
        let z = p.iterate(&[0.0; 3], 3).unwrap();
        for (zi, xi) in z.iter().zip(p.x()) {
            assert!((zi - 0.875 * xi).abs() < 1e-15);
        }
        assert_eq!(p.iterate(&[0.0; 3], 0).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn step_size_bound_enforced() {
        let w = Kernel::new(Matrix::identity(2)).unwrap();
        let err = DynamicsProblem::new(Matrix::identity(2), w, vec![1.0, 1.0], 0.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::StepSize { .. }));
    }

    #[test]
    fn theorem2_unit_step_on_identity() {
        let p = identity_problem(vec![1.0, 2.0, 3.0, 4.0], 1.0 - 1e-12, 0.3);
        let at0 = p.theorem2_at(0).unwrap();
        assert!((at0.bias - 30.0).abs() < 1e-12 && at0.variance == 0.0);
        let at3 = p.theorem2_at(3).unwrap();
        assert!(at3.bias < 1e-20);
        assert!((at3.variance - 0.09 * 4.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_power_matches_squaring_on_identity() {
        let p = identity_problem(vec![1.0, 0.0], 0.3, 0.0);
        assert!(p.spectral_power(7).max_abs_diff(&p.iteration_matrix().pow(7)) < 1e-14);
    }

    #[test]
    fn corollary_constant_at_unsampled_frequency() {
        let fx = Signal::<f64>::new(&[1.0, 2.0], &[0.5, -1.0]).unwrap();
        for t in [0, 1, 10, 1000] {
            let terms = corollary1_terms(&[0.7, 0.9], &[true, false], &fx, 0.1, 0.5, t).unwrap();
            assert!((terms[1].0 - 5.0).abs() < 1e-14);
            assert_eq!(terms[1].1, 0.0);
        }
    }

    #[test]
    fn appendix_rejects_t_zero() {
        let p = identity_problem(vec![1.0, 0.0], 0.3, 0.0);
        assert!(p.appendix_residuals(0).is_err());
    }
}
