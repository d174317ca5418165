//! Reconstruction metrics: PSNR, frequency-band NMSE, and Monte-Carlo bias/variance.

use serde::Serialize;

use crate::dynamics::DynamicsProblem;
use crate::error::{Error, Result};
use crate::numerics::fft::signed_frequency;
use crate::numerics::scalar::{self, pairwise_sum};
use crate::numerics::{RngStream, Scalar, Signal};
use crate::operators::LinearOp;

/// Reported when the reconstruction equals the truth exactly.
pub const PSNR_SENTINEL_DB: f64 = 300.0;

/// `20·log10(max|truth| / rmse(|recon| − |truth|))` on magnitudes.
pub fn psnr<T: Scalar>(recon: &Signal<T>, truth: &Signal<T>) -> Result<T> {
    if recon.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: recon.len(),
            context: "psnr inputs",
        });
    }
    let mt = truth.magnitudes();
    let peak = scalar::max_abs(&mt);
    if peak == T::zero() {
        return Err(Error::UndefinedMetric("psnr of an all-zero reference"));
    }
    let diff: Vec<T> = recon
        .magnitudes()
        .iter()
        .zip(&mt)
        .map(|(&r, &t)| (r - t) * (r - t))
        .collect();
    let mse = pairwise_sum(&diff) / T::from_usize_lossy(diff.len());
    if mse == T::zero() {
        return Ok(T::lit(PSNR_SENTINEL_DB));
    }
    Ok((T::lit(20.0) * (peak / mse.sqrt()).log10()).min(T::lit(PSNR_SENTINEL_DB)))
}

/// Low/mid/high frequency masks over FFT bins.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BandMasks {
    pub low: Vec<bool>,
    pub mid: Vec<bool>,
    pub high: Vec<bool>,
}

/// Default band edges as fractions of the Nyquist frequency.
pub const DEFAULT_LOW_CUT: f64 = 0.1;
pub const DEFAULT_MID_CUT: f64 = 0.4;

impl BandMasks {
    /// `low = |f| ≤ low_cut·f_N`, `mid = (low_cut, mid_cut]·f_N`, `high` the rest, with `f_N = q/2`.
    pub fn radial(q: usize, low_cut: f64, mid_cut: f64) -> Result<Self> {
        if !(0.0 <= low_cut && low_cut <= mid_cut && mid_cut <= 1.0) {
            return Err(Error::Invalid(format!(
                "band cuts must satisfy 0 ≤ low ≤ mid ≤ 1, got {low_cut}, {mid_cut}"
            )));
        }
        let nyq = q as f64 / 2.0;
        let mut m = Self {
            low: vec![false; q],
            mid: vec![false; q],
            high: vec![false; q],
        };
        for k in 0..q {
            let r = signed_frequency(k, q).unsigned_abs() as f64 / nyq;
            if r <= low_cut {
                m.low[k] = true;
            } else if r <= mid_cut {
                m.mid[k] = true;
            } else {
                m.high[k] = true;
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn default_for(q: usize) -> Result<Self> {
        Self::radial(q, DEFAULT_LOW_CUT, DEFAULT_MID_CUT)
    }

    pub fn from_masks(low: Vec<bool>, mid: Vec<bool>, high: Vec<bool>) -> Result<Self> {
        let m = Self { low, mid, high };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low.is_empty()
    }

    /// Disjoint, covering, and symmetric under `f ↦ −f`.
    pub fn validate(&self) -> Result<()> {
        let q = self.low.len();
        if self.mid.len() != q || self.high.len() != q {
            return Err(Error::Invalid("band masks differ in length".into()));
        }
        for k in 0..q {
            let count = [self.low[k], self.mid[k], self.high[k]].iter().filter(|&&b| b).count();
            if count != 1 {
                return Err(Error::Invalid(format!("frequency bin {k} belongs to {count} bands")));
            }
            let mirror = (q - k) % q;
            for band in [&self.low, &self.mid, &self.high] {
                if band[k] != band[mirror] {
                    return Err(Error::Invalid(format!("band masks not symmetric at bin {k}")));
                }
            }
        }
        Ok(())
    }

    fn bands(&self) -> [&[bool]; 3] {
        [&self.low, &self.mid, &self.high]
    }
}

/// Per-band NMSE; `None` where the truth has no energy in the band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BandNmse<T> {
    pub low: Option<T>,
    pub mid: Option<T>,
    pub high: Option<T>,
}

/// `Σ_c ‖M_b 𝓕 S_c recon − M_b y_c‖² / Σ_c ‖M_b y_c‖²` per band, with `y_c` fully sampled truth k-space.
pub fn band_nmse<T: Scalar>(
    recon: &Signal<T>,
    truth_kspace: &[Signal<T>],
    map: &LinearOp<T>,
    bands: &BandMasks,
) -> Result<BandNmse<T>> {
    let kspace = map.full_kspace(recon)?;
    if kspace.len() != truth_kspace.len() {
        return Err(Error::Dimension {
            expected: kspace.len(),
            got: truth_kspace.len(),
            context: "coil count of truth k-space",
        });
    }
    if bands.len() != recon.len() {
        return Err(Error::Dimension {
            expected: recon.len(),
            got: bands.len(),
            context: "band mask length",
        });
    }
    let mut out = [None; 3];
    for (slot, band) in out.iter_mut().zip(bands.bands()) {
        let mut num = Vec::new();
        let mut den = Vec::new();
        for (k, y) in kspace.iter().zip(truth_kspace) {
            if y.len() != recon.len() {
                return Err(Error::Dimension {
                    expected: recon.len(),
                    got: y.len(),
                    context: "truth k-space length",
                });
            }
            for f in (0..band.len()).filter(|&f| band[f]) {
                num.push((k.get(f) - y.get(f)).norm_sqr());
                den.push(y.get(f).norm_sqr());
            }
        }
        let d = pairwise_sum(&den);
        if d > T::zero() {
            *slot = Some(pairwise_sum(&num) / d);
        }
    }
    Ok(BandNmse {
        low: out[0],
        mid: out[1],
        high: out[2],
    })
}

/// Monte-Carlo estimate of the kernel-regime error decomposition at iteration `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BiasVariance<T> {
    /// `‖mean(z_t) − x‖²`
    pub bias_sq: T,
    /// Unbiased total variance `Σ_i ‖z_t^{(i)} − mean‖² / (N − 1)`.
    pub variance: T,
    /// Mean of `‖z_t^{(i)} − x‖²`.
    pub mse: T,
    /// Standard error of `mse`.
    pub stderr: T,
}

/// Draws `trials` noise vectors (i.i.d. `N(0, σ²)` per real component) and evaluates `z_t` in closed form.
pub fn empirical_bias_variance<T: Scalar>(
    problem: &DynamicsProblem<T>,
    t: u64,
    trials: usize,
    rng: &mut RngStream,
) -> Result<BiasVariance<T>> {
    if trials < 2 {
        return Err(Error::Invalid("bias/variance estimate needs at least two trials".into()));
    }
    let tr = problem.transfer(t)?;
    let x = problem.x();
    let n = x.len();
    let m = problem.measurements();
    let sigma = problem.sigma();
    let draws: Vec<Vec<T>> = (0..trials)
        .map(|_| tr.zt(x, &rng.normals(m, sigma)))
        .collect();
    let nt = T::from_usize_lossy(trials);
    let mean: Vec<T> = (0..n)
        .map(|j| pairwise_sum(&draws.iter().map(|z| z[j]).collect::<Vec<_>>()) / nt)
        .collect();
    let bias_sq = scalar::norm2_sq(&scalar::sub(&mean, x));
    let spread: Vec<T> = draws.iter().map(|z| scalar::norm2_sq(&scalar::sub(z, &mean))).collect();
    let variance = pairwise_sum(&spread) / (nt - T::one());
    let errs: Vec<T> = draws.iter().map(|z| scalar::norm2_sq(&scalar::sub(z, x))).collect();
    let mse = pairwise_sum(&errs) / nt;
    let dev: Vec<T> = errs.iter().map(|&e| (e - mse) * (e - mse)).collect();
    let stderr = (pairwise_sum(&dev) / (nt - T::one()) / nt).sqrt();
    Ok(BiasVariance {
        bias_sq,
        variance,
        mse,
        stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_formula_and_sentinel() {
        let truth = Signal::<f64>::from_real(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(psnr(&truth, &truth).unwrap(), PSNR_SENTINEL_DB);
        let recon = Signal::from_real(&[1.1, 0.1, -0.1, 0.1]);
        assert!((psnr(&recon, &truth).unwrap() - 20.0).abs() < 1e-10);
        assert!(psnr(&truth, &Signal::zeros(4)).is_err());
    }

    #[test]
    fn default_bands_partition_and_are_symmetric() {
        let b = BandMasks::default_for(64).unwrap();
        assert!(b.low[0] && b.low[3] && b.low[61]);
        assert!(b.mid[4] && b.mid[12] && b.high[13] && b.high[32]);
        let asym = BandMasks::from_masks(vec![true, true, false, false], vec![false; 4], vec![false, false, true, true]);
        assert!(asym.is_err());
    }
}
