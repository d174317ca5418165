//! Deep-image-prior training: vanilla, reference-guided and self-guided fits,
//! plus the data-correction post-pass.
//!
//! All losses use the squared complex norm, which equals the squared norm of
//! the stacked `[re; im]` vectors, so generator cotangents are the stacked
//! gradients directly.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{gd_step, AdamState, Generator};
use crate::metrics::{band_nmse, psnr, BandMasks, BandNmse};
use crate::numerics::scalar::{norm2_sq, pairwise_sum};
use crate::numerics::{RngStream, Scalar, Signal};
use crate::operators::LinearOp;

/// Stream used for evaluation-only draws so logging never perturbs training.
const EVAL_STREAM: u64 = 0x5e1f;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Vanilla,
    ReferenceGuided,
    SelfGuided,
}

/// Update rule for the network weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    #[default]
    Adam,
    /// Plain gradient descent, the setting of the kernel-regime analysis.
    Gd,
}

/// Fixed network input for vanilla runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputInit {
    /// i.i.d. `N(0, std²)` in every input channel the network reads.
    Normal { std: f64 },
    /// Every real entry equal to `value`, imaginary parts zero.
    Constant { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DipConfig {
    pub variant: Variant,
    pub iters: usize,
    pub optimizer: Optimizer,
    pub theta_lr: f64,
    /// Self-guided only.
    pub input_lr: f64,
    pub alpha: f64,
    pub eta_draws: usize,
    /// `m = noise_scale_frac · max|z|`, recomputed every iteration.
    pub noise_scale_frac: f64,
    /// Draws averaged for the final self-guided reconstruction.
    pub final_draws: usize,
    /// Draws averaged for logged self-guided reconstructions.
    pub eval_draws: usize,
    pub seed: u64,
    pub stream: u64,
    pub eval_every: usize,
    pub input_init: InputInit,
    /// Iterations `[start, end)` over which the input drift variance is measured.
    pub drift_window: (usize, usize),
}

impl Default for DipConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Vanilla,
            iters: 1000,
            optimizer: Optimizer::Adam,
            theta_lr: 3e-4,
            input_lr: 1e-1,
            alpha: 1.0,
            eta_draws: 4,
            noise_scale_frac: 0.5,
            final_draws: 64,
            eval_draws: 16,
            seed: 0,
            stream: 0,
            eval_every: 10,
            input_init: InputInit::Normal { std: 1.0 },
            drift_window: (1000, 2000),
        }
    }
}

impl DipConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.iters == 0 {
            return bad("iters must be positive".into());
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if self.eta_draws == 0 || self.final_draws == 0 || self.eval_draws == 0 {
            return bad("draw counts must be positive".into());
        }
        if self.variant == Variant::SelfGuided && self.optimizer != Optimizer::Adam {
            return bad("self-guided training uses Adam".into());
        }
        if self.eval_every == 0 {
            return bad("eval-every must be positive".into());
        }
        for (name, v) in [("theta-lr", self.theta_lr), ("input-lr", self.input_lr)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.noise_scale_frac >= 0.0) || !self.noise_scale_frac.is_finite() {
            return bad(format!("noise-scale-frac must be non-negative, got {}", self.noise_scale_frac));
        }
        if let InputInit::Normal { std } = self.input_init {
            if !(std > 0.0) {
                return bad(format!("input std must be positive, got {std}"));
            }
        }
        Ok(())
    }

    pub fn rng(&self) -> RngStream {
        RngStream::new(self.seed, self.stream)
    }

    /// `α = 0` removes the input regularizer, which leaves the self-guided input unanchored.
    pub fn regularizer_disabled(&self) -> bool {
        self.variant == Variant::SelfGuided && self.alpha == 0.0
    }
}

/// Ground truth used to score logged iterates.
#[derive(Clone, Debug)]
pub struct Evaluator<T> {
    truth: Signal<T>,
    truth_kspace: Vec<Signal<T>>,
    map: LinearOp<T>,
    bands: BandMasks,
}

impl<T: Scalar> Evaluator<T> {
    pub fn new(truth: Signal<T>, map: &LinearOp<T>, bands: BandMasks) -> Result<Self> {
        let truth_kspace = map.full_kspace(&truth)?;
        Ok(Self {
            truth,
            truth_kspace,
            map: map.clone(),
            bands,
        })
    }

    pub fn truth(&self) -> &Signal<T> {
        &self.truth
    }

    pub fn psnr(&self, recon: &Signal<T>) -> Result<T> {
        psnr(recon, &self.truth)
    }

    pub fn band_nmse(&self, recon: &Signal<T>) -> Result<BandNmse<T>> {
        band_nmse(recon, &self.truth_kspace, &self.map, &self.bands)
    }
}

/// One logged iteration. Loss terms are evaluated before that iteration's update.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterRecord<T> {
    pub iter: usize,
    pub loss: T,
    pub fidelity: T,
    pub regularizer: T,
    pub psnr: Option<T>,
    pub bands: Option<BandNmse<T>>,
}

#[derive(Clone, Debug)]
pub struct RunReport<T> {
    pub config: DipConfig,
    pub records: Vec<IterRecord<T>>,
    /// Reconstruction after the last update.
    pub final_recon: Signal<T>,
    pub final_psnr: Option<T>,
    /// Best logged iterate, including the final reconstruction.
    pub best: Option<BestIterate<T>>,
    pub corrected_recon: Option<Signal<T>>,
    /// Network input at the end of training (moves only for self-guided runs).
    pub final_input: Signal<T>,
    /// `mean_t ‖z_t − z̄‖²` over the drift window, when the run covered it.
    pub input_drift_variance: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestIterate<T> {
    pub iter: usize,
    pub psnr: T,
    pub recon: Signal<T>,
}

/// Training stopped on a non-finite loss; `partial` holds everything logged so far.
#[derive(Debug)]
pub enum TrainError<T> {
    Aborted { iter: usize, partial: Box<RunReport<T>> },
    Setup(Error),
}

impl<T> From<Error> for TrainError<T> {
    fn from(e: Error) -> Self {
        TrainError::Setup(e)
    }
}

impl<T> std::fmt::Display for TrainError<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainError::Aborted { iter, .. } => write!(f, "non-finite loss at iteration {iter}"),
            TrainError::Setup(e) => write!(f, "{e}"),
        }
    }
}

impl<T: Scalar> std::error::Error for TrainError<T> {}

pub type TrainResult<T> = std::result::Result<RunReport<T>, TrainError<T>>;

fn check_problem<T: Scalar>(net: &Generator<T>, map: &LinearOp<T>, y: &Signal<T>) -> Result<()> {
    if net.output_len() != map.in_dim() {
        return Err(Error::Dimension {
            expected: map.in_dim(),
            got: net.output_len(),
            context: "generator output vs operator input",
        });
    }
    if y.len() != map.out_dim() {
        return Err(Error::Dimension {
            expected: map.out_dim(),
            got: y.len(),
            context: "measurements vs operator output",
        });
    }
    Ok(())
}

/// `(‖Au − y‖², stacked 2Aᴴ(Au − y))`
fn fidelity_and_grad<T: Scalar>(map: &LinearOp<T>, y: &Signal<T>, u: &Signal<T>) -> Result<(T, Signal<T>)> {
    let r = map.apply(u)?.sub(y);
    let g = map.adjoint(&r)?.scale(T::lit(2.0));
    Ok((norm2_sq(r.as_stacked()), g))
}

/// Running `Σ_t ‖z_t − z̄‖² / n` over a window (Welford per coordinate).
struct DriftTracker<T> {
    window: (usize, usize),
    count: usize,
    mean: Vec<T>,
    m2: Vec<T>,
}

impl<T: Scalar> DriftTracker<T> {
    fn new(window: (usize, usize), dim: usize) -> Self {
        Self {
            window,
            count: 0,
            mean: vec![T::zero(); dim],
            m2: vec![T::zero(); dim],
        }
    }

    fn observe(&mut self, iter: usize, z: &[T]) {
        if iter < self.window.0 || iter >= self.window.1 {
            return;
        }
        self.count += 1;
        let n = T::from_usize_lossy(self.count);
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(z) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    fn variance(&self) -> Option<T> {
        let full = self.window.1.saturating_sub(self.window.0);
        (full > 0 && self.count == full).then(|| pairwise_sum(&self.m2) / T::from_usize_lossy(self.count))
    }
}

struct Log<T> {
    records: Vec<IterRecord<T>>,
    best: Option<BestIterate<T>>,
}

impl<T: Scalar> Log<T> {
    fn new() -> Self {
        Self {
            records: Vec::new(),
            best: None,
        }
    }

    fn score(&mut self, iter: usize, recon: &Signal<T>, eval: Option<&Evaluator<T>>) -> Result<(Option<T>, Option<BandNmse<T>>)> {
        let Some(ev) = eval else {
            return Ok((None, None));
        };
        let p = ev.psnr(recon)?;
        if self.best.as_ref().is_none_or(|b| p > b.psnr) {
            self.best = Some(BestIterate {
                iter,
                psnr: p,
                recon: recon.clone(),
            });
        }
        Ok((Some(p), Some(ev.band_nmse(recon)?)))
    }
}

/// Unwraps a step result, turning a non-finite failure into an abort that keeps the log so far.
macro_rules! step {
    ($e:expr, $log:ident, $cfg:expr, $input:expr, $out_len:expr, $it:expr) => {
        match $e {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => {
                let log = std::mem::replace(&mut $log, Log::new());
                return Err(log.abort($cfg, Signal::zeros($out_len), $input.clone(), $it));
            }
            Err(e) => return Err(e.into()),
        }
    };
}

impl<T: Scalar> Log<T> {
    /// Ends the run at `iter`. The partial report carries no final PSNR.
    fn abort(self, cfg: &DipConfig, recon: Signal<T>, input: Signal<T>, iter: usize) -> TrainError<T> {
        let finish = Finish {
            cfg: cfg.clone(),
            log: self,
            final_recon: recon,
            final_input: input,
            drift: None,
        };
        match finish.into_report(iter, None) {
            Ok(r) => TrainError::Aborted {
                iter,
                partial: Box::new(r),
            },
            Err(e) => e.into(),
        }
    }
}

struct Finish<T> {
    cfg: DipConfig,
    log: Log<T>,
    final_recon: Signal<T>,
    final_input: Signal<T>,
    drift: Option<T>,
}

impl<T: Scalar> Finish<T> {
    fn into_report(self, iters: usize, eval: Option<&Evaluator<T>>) -> Result<RunReport<T>> {
        let mut log = self.log;
        let final_psnr = if self.final_recon.is_finite() {
            log.score(iters, &self.final_recon, eval)?.0
        } else {
            None
        };
        Ok(RunReport {
            config: self.cfg,
            records: log.records,
            final_recon: self.final_recon,
            final_psnr,
            best: log.best,
            corrected_recon: None,
            final_input: self.final_input,
            input_drift_variance: self.drift,
        })
    }
}

fn fixed_input<T: Scalar>(net: &Generator<T>, init: InputInit, rng: &mut RngStream) -> Signal<T> {
    let n = net.input_len();
    match init {
        InputInit::Constant { value } => Signal::from_real(&vec![T::lit(value); n]),
        InputInit::Normal { std } => {
            let re = rng.normals(n, T::lit(std));
            if net.input_channels() == 2 {
                Signal::new(&re, &rng.normals(n, T::lit(std))).expect("equal lengths")
            } else {
                Signal::from_real(&re)
            }
        }
    }
}

/// The fixed input [`train_vanilla`] draws for `net` under `cfg`.
pub fn vanilla_input<T: Scalar>(net: &Generator<T>, cfg: &DipConfig) -> Signal<T> {
    fixed_input(net, cfg.input_init, &mut cfg.rng())
}

/// Vanilla DIP: Adam (or GD) on `θ` for `‖A f_θ(z) − y‖²` with a fixed random input drawn from the config stream.
pub fn train_vanilla<T: Scalar>(
    net: &mut Generator<T>,
    map: &LinearOp<T>,
    y: &Signal<T>,
    cfg: &DipConfig,
    eval: Option<&Evaluator<T>>,
) -> TrainResult<T> {
    cfg.validate()?;
    let mut rng = cfg.rng();
    let z = fixed_input(net, cfg.input_init, &mut rng);
    fit_fixed_input(net, map, y, z, cfg, eval)
}

/// Reference-guided DIP: vanilla with the input fixed to `reference`.
pub fn train_reference_guided<T: Scalar>(
    net: &mut Generator<T>,
    map: &LinearOp<T>,
    y: &Signal<T>,
    reference: &Signal<T>,
    cfg: &DipConfig,
    eval: Option<&Evaluator<T>>,
) -> TrainResult<T> {
    cfg.validate()?;
    if reference.len() != net.input_len() {
        return Err(Error::Dimension {
            expected: net.input_len(),
            got: reference.len(),
            context: "reference length vs generator input",
        }
        .into());
    }
    fit_fixed_input(net, map, y, reference.clone(), cfg, eval)
}

fn fit_fixed_input<T: Scalar>(
    net: &mut Generator<T>,
    map: &LinearOp<T>,
    y: &Signal<T>,
    z: Signal<T>,
    cfg: &DipConfig,
    eval: Option<&Evaluator<T>>,
) -> TrainResult<T> {
    check_problem(net, map, y)?;
    let mut adam = AdamState::new(net.num_weights(), T::lit(cfg.theta_lr));
    let mut log = Log::new();
    let out_len = net.output_len();
    for it in 0..cfg.iters {
        let u = step!(net.forward(&z), log, cfg, z, out_len, it);
        let (fid, g) = fidelity_and_grad(map, y, &u)?;
        if !fid.is_finite() {
            return Err(log.abort(cfg, u, z, it));
        }
        if it % cfg.eval_every == 0 {
            let (p, b) = log.score(it, &u, eval)?;
            log.records.push(IterRecord {
                iter: it,
                loss: fid,
                fidelity: fid,
                regularizer: T::zero(),
                psnr: p,
                bands: b,
            });
        }
        let grad = step!(net.backward(&z, &g, false), log, cfg, z, out_len, it).weights;
        match cfg.optimizer {
            Optimizer::Adam => adam.step(net.weights_mut(), &grad),
            Optimizer::Gd => gd_step(net.weights_mut(), &grad, T::lit(cfg.theta_lr)),
        }
    }
    let final_recon = step!(net.forward(&z), log, cfg, z, out_len, cfg.iters);
    Finish {
        cfg: cfg.clone(),
        log,
        final_recon,
        final_input: z,
        drift: None,
    }
    .into_report(cfg.iters, eval)
    .map_err(Into::into)
}

/// Per-entry `U(0, m)` perturbations of every stacked input component, `m = frac·max|z|`.
fn draw_perturbations<T: Scalar>(z: &Signal<T>, frac: f64, draws: usize, rng: &mut RngStream) -> Vec<Signal<T>> {
    let m = T::lit(frac) * crate::numerics::scalar::max_abs(&z.magnitudes());
    (0..draws)
        .map(|_| {
            let data: Vec<T> = z.as_stacked().iter().map(|&v| v + rng.uniform_in(T::zero(), m)).collect();
            Signal::from_stacked(data).expect("even length")
        })
        .collect()
}

/// Mean of `f(z + η_d)` over the supplied perturbed inputs, reduced in draw order.
fn averaged_output<T: Scalar>(net: &Generator<T>, inputs: &[Signal<T>]) -> Result<Signal<T>> {
    let outs: Vec<Signal<T>> = inputs.par_iter().map(|x| net.forward(x)).collect::<Result<_>>()?;
    Ok(mean_signal(&outs))
}

fn mean_signal<T: Scalar>(xs: &[Signal<T>]) -> Signal<T> {
    let n = xs[0].as_stacked().len();
    let inv = T::one() / T::from_usize_lossy(xs.len());
    let data: Vec<T> = (0..n)
        .map(|j| pairwise_sum(&xs.iter().map(|s| s.as_stacked()[j]).collect::<Vec<_>>()) * inv)
        .collect();
    Signal::from_stacked(data).expect("even length")
}

/// Self-guided reconstruction `Ê[f_θ(z + η)]` with `draws` fresh perturbations.
pub fn self_guided_estimate<T: Scalar>(
    net: &Generator<T>,
    z: &Signal<T>,
    frac: f64,
    draws: usize,
    rng: &mut RngStream,
) -> Result<Signal<T>> {
    averaged_output(net, &draw_perturbations(z, frac, draws, rng))
}

/// Self-guided DIP: joint Adam on `θ` and `z` for `‖A·Ê[f_θ(z+η)] − y‖² + α‖Ê[f_θ(z+η)] − z‖²`.
///
/// The input starts at the adjoint reconstruction `Aᴴy`. Each iteration draws
/// all perturbations before updating. The noise scale `m` is treated as a
/// constant when differentiating with respect to `z`.
pub fn train_self_guided<T: Scalar>(
    net: &mut Generator<T>,
    map: &LinearOp<T>,
    y: &Signal<T>,
    cfg: &DipConfig,
    eval: Option<&Evaluator<T>>,
) -> TrainResult<T> {
    cfg.validate()?;
    check_problem(net, map, y)?;
    let mut z = map.adjoint(y)?;
    if z.len() != net.input_len() {
        return Err(Error::Dimension {
            expected: net.input_len(),
            got: z.len(),
            context: "self-guided input must match the image size",
        }
        .into());
    }
    let mut rng = cfg.rng();
    let mut eval_rng = rng.substream(cfg.stream ^ EVAL_STREAM);
    let alpha = T::lit(cfg.alpha);
    let two = T::lit(2.0);
    let inv_draws = T::one() / T::from_usize_lossy(cfg.eta_draws);
    let mut theta_opt = AdamState::new(net.num_weights(), T::lit(cfg.theta_lr));
    let mut z_opt = AdamState::new(2 * z.len(), T::lit(cfg.input_lr));
    let mut drift = DriftTracker::new(cfg.drift_window, 2 * z.len());
    let mut log = Log::new();
    let out_len = net.output_len();

    for it in 0..cfg.iters {
        drift.observe(it, z.as_stacked());
        let inputs = draw_perturbations(&z, cfg.noise_scale_frac, cfg.eta_draws, &mut rng);
        let u = step!(averaged_output(net, &inputs), log, cfg, z, out_len, it);
        let (fid, g_fid) = fidelity_and_grad(map, y, &u)?;
        let diff = u.sub(&z);
        let reg = norm2_sq(diff.as_stacked());
        let loss = fid + alpha * reg;
        if !loss.is_finite() {
            return Err(log.abort(cfg, u, z, it));
        }
        if it % cfg.eval_every == 0 {
            let (p, b) = match eval {
                Some(_) => {
                    let recon = step!(
                        self_guided_estimate(net, &z, cfg.noise_scale_frac, cfg.eval_draws, &mut eval_rng),
                        log,
                        cfg,
                        z,
                        out_len,
                        it
                    );
                    log.score(it, &recon, eval)?
                }
                None => (None, None),
            };
            log.records.push(IterRecord {
                iter: it,
                loss,
                fidelity: fid,
                regularizer: reg,
                psnr: p,
                bands: b,
            });
        }

        // dL/du, shared by every draw; each draw's pullback carries the 1/D factor.
        let g_u = g_fid.add(&diff.scale(two * alpha)).scale(inv_draws);
        let grads: Result<Vec<_>> = inputs.par_iter().map(|x| net.backward(x, &g_u, true)).collect();
        let grads = step!(grads, log, cfg, z, out_len, it);
        let n_w = net.num_weights();
        let g_theta: Vec<T> = (0..n_w)
            .map(|j| pairwise_sum(&grads.iter().map(|g| g.weights[j]).collect::<Vec<_>>()))
            .collect();
        let n_z = 2 * z.len();
        let g_z: Vec<T> = (0..n_z)
            .map(|j| {
                let through_net = pairwise_sum(
                    &grads
                        .iter()
                        .map(|g| g.input.as_ref().expect("input gradient requested").as_stacked()[j])
                        .collect::<Vec<_>>(),
                );
                through_net - two * alpha * diff.as_stacked()[j]
            })
            .collect();
        theta_opt.step(net.weights_mut(), &g_theta);
        z_opt.step(z.as_stacked_mut(), &g_z);
    }

    let final_recon = step!(
        self_guided_estimate(net, &z, cfg.noise_scale_frac, cfg.final_draws, &mut rng),
        log,
        cfg,
        z,
        out_len,
        cfg.iters
    );
    Finish {
        cfg: cfg.clone(),
        log,
        final_recon,
        final_input: z,
        drift: drift.variance(),
    }
    .into_report(cfg.iters, eval)
    .map_err(Into::into)
}

/// Projects the final reconstruction onto the measurement-consistent set.
pub fn finalize_with_correction<T: Scalar>(map: &LinearOp<T>, y: &Signal<T>, mut report: RunReport<T>) -> Result<RunReport<T>> {
    report.corrected_recon = Some(map.data_correction(y, &report.final_recon)?);
    Ok(report)
}

#[derive(Serialize)]
struct CsvRow {
    iter: usize,
    loss: f64,
    fidelity: f64,
    regularizer: f64,
    psnr: Option<f64>,
    nmse_low: Option<f64>,
    nmse_mid: Option<f64>,
    nmse_high: Option<f64>,
}

/// JSON summary of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema: u32,
    pub config: DipConfig,
    pub iters_logged: usize,
    pub best_iter: Option<usize>,
    pub best_psnr: Option<f64>,
    pub final_psnr: Option<f64>,
    pub final_loss: Option<f64>,
    pub input_drift_variance: Option<f64>,
}

impl<T: Scalar> RunReport<T> {
    /// Columns: `iter,loss,fidelity,regularizer,psnr,nmse_low,nmse_mid,nmse_high`; missing values are empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            let band = |f: fn(&BandNmse<T>) -> Option<T>| r.bands.as_ref().and_then(f).map(T::as_f64);
            out.serialize(CsvRow {
                iter: r.iter,
                loss: r.loss.as_f64(),
                fidelity: r.fidelity.as_f64(),
                regularizer: r.regularizer.as_f64(),
                psnr: r.psnr.map(T::as_f64),
                nmse_low: band(|b| b.low),
                nmse_mid: band(|b| b.mid),
                nmse_high: band(|b| b.high),
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            schema: 1,
            config: self.config.clone(),
            iters_logged: self.records.len(),
            best_iter: self.best.as_ref().map(|b| b.iter),
            best_psnr: self.best.as_ref().map(|b| b.psnr.as_f64()),
            final_psnr: self.final_psnr.map(T::as_f64),
            final_loss: self.records.last().map(|r| r.loss.as_f64()),
            input_drift_variance: self.input_drift_variance.map(T::as_f64),
        }
    }

    pub fn best_psnr(&self) -> Option<T> {
        self.best.as_ref().map(|b| b.psnr)
    }

    /// First logged iteration whose band NMSE drops below `threshold`.
    pub fn first_crossing(&self, band: fn(&BandNmse<T>) -> Option<T>, threshold: T) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.bands.as_ref().and_then(band).is_some_and(|v| v < threshold))
            .map(|r| r.iter)
    }
}
