//! Toy reconstruction problems and the DIP arms that run on them.
//!
//! Stream layout for a seed `s`: stream 1 draws the mask and the noise, stream 2
//! the network weights, and the DIP config carries stream 3 for training draws.

use ntkdip_core::generators::Generator;
use ntkdip_core::metrics::{psnr, BandMasks};
use ntkdip_core::numerics::{RngStream, Signal};
use ntkdip_core::operators::{variable_density_mask, LinearOp};
use ntkdip_core::train::{self, DipConfig, Evaluator, RunReport, Variant};

use crate::config::Resolved;
use crate::error::CliError;

pub const PROBLEM_STREAM: u64 = 1;
pub const WEIGHT_STREAM: u64 = 2;

/// Piecewise-constant plateau with a raised step and a smooth bump, all real.
pub fn toy_signal(q: usize) -> Signal<f64> {
    let re: Vec<f64> = (0..q)
        .map(|i| {
            let x = i as f64 / q as f64;
            let mut v = 0.0;
            if (0.2..0.8).contains(&x) {
                v += 0.6;
            }
            if (0.35..0.5).contains(&x) {
                v += 0.4;
            }
            v + 0.3 * (-((x - 0.65) / 0.05f64).powi(2)).exp()
        })
        .collect();
    Signal::from_real(&re)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    Fourier,
    Pixels,
}

pub struct ToyProblem {
    pub map: LinearOp<f64>,
    pub truth: Signal<f64>,
    pub y: Signal<f64>,
    pub eval: Evaluator<f64>,
}

/// Uniformly random pixel mask keeping `q / acceleration` entries.
pub fn random_pixel_mask(q: usize, acceleration: usize, rng: &mut RngStream) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..q).collect();
    for i in (1..q).rev() {
        idx.swap(i, rng.index(i + 1));
    }
    let mut mask = vec![false; q];
    for &i in &idx[..q / acceleration] {
        mask[i] = true;
    }
    mask
}

impl ToyProblem {
    /// Complex noise of level `sigma` (each real component has std `sigma/√2`).
    pub fn new(q: usize, acceleration: usize, sigma: f64, seed: u64, sampling: Sampling) -> Result<Self, CliError> {
        let mut rng = RngStream::new(seed, PROBLEM_STREAM);
        let map = match sampling {
            Sampling::Fourier => LinearOp::masked_fourier(variable_density_mask(q, acceleration, &mut rng)?)?,
            Sampling::Pixels => LinearOp::inpainting(random_pixel_mask(q, acceleration, &mut rng))?,
        };
        let truth = toy_signal(q);
        let clean = map.apply(&truth)?;
        let s = sigma / 2f64.sqrt();
        let noise = Signal::new(&rng.normals(clean.len(), s), &rng.normals(clean.len(), s))?;
        let y = clean.add(&noise);
        let eval = Evaluator::new(truth.clone(), &map, BandMasks::default_for(q)?)?;
        Ok(Self { map, truth, y, eval })
    }

    pub fn from_config(cfg: &Resolved, sampling: Sampling) -> Result<Self, CliError> {
        Self::new(cfg.problem_size, cfg.acceleration, cfg.sigma.unwrap_or(0.0), cfg.seed, sampling)
    }

    /// PSNR of the zero-filled reconstruction `Aᴴy`.
    pub fn zero_filled_psnr(&self) -> Result<f64, CliError> {
        Ok(psnr(&self.map.adjoint(&self.y)?, &self.truth)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Arm {
    /// Upsampling conv generator from a fixed random input.
    Vanilla,
    /// Image-to-image conv generator with a learned input and weight `alpha`.
    SelfGuided { alpha: f64 },
}

impl Arm {
    pub fn label(self) -> String {
        match self {
            Arm::Vanilla => "vanilla".into(),
            Arm::SelfGuided { alpha } => format!("self-guided-alpha-{alpha}"),
        }
    }
}

/// Trains one arm on the toy problem and applies the data correction.
pub fn run_arm(cfg: &Resolved, toy: &ToyProblem, arm: Arm) -> Result<RunReport<f64>, CliError> {
    let q = cfg.problem_size;
    let mut wrng = RngStream::new(cfg.seed, WEIGHT_STREAM);
    let report = match arm {
        Arm::Vanilla => {
            let mut net = Generator::conv_upsampling(q, cfg.hidden)?.init_weights(cfg.init_variance, &mut wrng)?;
            let dip = DipConfig {
                variant: Variant::Vanilla,
                ..cfg.dip.clone()
            };
            train::train_vanilla(&mut net, &toy.map, &toy.y, &dip, Some(&toy.eval))
        }
        Arm::SelfGuided { alpha } => {
            let mut net = Generator::conv_same(q, cfg.hidden)?.init_weights(cfg.init_variance, &mut wrng)?;
            let dip = DipConfig {
                variant: Variant::SelfGuided,
                alpha,
                ..cfg.dip.clone()
            };
            train::train_self_guided(&mut net, &toy.map, &toy.y, &dip, Some(&toy.eval))
        }
    }
    .map_err(|e| CliError::from_train(&arm.label(), e))?;
    Ok(train::finalize_with_correction(&toy.map, &toy.y, report)?)
}

/// PSNR of the corrected reconstruction of a finalized report.
pub fn corrected_psnr(toy: &ToyProblem, report: &RunReport<f64>) -> Result<Option<f64>, CliError> {
    match &report.corrected_recon {
        Some(c) => Ok(Some(psnr(c, &toy.truth)?)),
        None => Ok(None),
    }
}
