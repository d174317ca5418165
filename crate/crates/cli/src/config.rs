//! Experiment configuration: the JSON file format, per-experiment defaults and validation.

use std::path::{Path, PathBuf};

use ntkdip_core::train::{DipConfig, InputInit};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "freq-recovery-1d")]
    FreqRecovery1d,
    #[serde(rename = "spectral-bias")]
    SpectralBias,
    #[serde(rename = "theorem1-verify")]
    Theorem1Verify,
    #[serde(rename = "theorem2-verify")]
    Theorem2Verify,
    #[serde(rename = "corollary1-verify")]
    Corollary1Verify,
    #[serde(rename = "appendix-identities")]
    AppendixIdentities,
    #[serde(rename = "selfguided-vs-vanilla")]
    SelfguidedVsVanilla,
    #[serde(rename = "regularizer-ablation")]
    RegularizerAblation,
    #[serde(rename = "inpainting-toy")]
    InpaintingToy,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::FreqRecovery1d,
        Experiment::SpectralBias,
        Experiment::Theorem1Verify,
        Experiment::Theorem2Verify,
        Experiment::Corollary1Verify,
        Experiment::AppendixIdentities,
        Experiment::SelfguidedVsVanilla,
        Experiment::RegularizerAblation,
        Experiment::InpaintingToy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::FreqRecovery1d => "freq-recovery-1d",
            Experiment::SpectralBias => "spectral-bias",
            Experiment::Theorem1Verify => "theorem1-verify",
            Experiment::Theorem2Verify => "theorem2-verify",
            Experiment::Corollary1Verify => "corollary1-verify",
            Experiment::AppendixIdentities => "appendix-identities",
            Experiment::SelfguidedVsVanilla => "selfguided-vs-vanilla",
            Experiment::RegularizerAblation => "regularizer-ablation",
            Experiment::InpaintingToy => "inpainting-toy",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::FreqRecovery1d => "fit a 1-D square with a deep decoder and a conv generator; RMSE curves and NTK Fourier coherence",
            Experiment::SpectralBias => "vanilla DIP on the undersampled toy problem; band NMSE and PSNR per iteration",
            Experiment::Theorem1Verify => "noise-free kernel-regime limits against the predicted limit errors",
            Experiment::Theorem2Verify => "Monte-Carlo MSE of the kernel-regime iterate against the bias/variance prediction",
            Experiment::Corollary1Verify => "per-frequency MSE for circulant kernels against the general prediction",
            Experiment::AppendixIdentities => "residuals of the matrix identities behind the singular-kernel limit",
            Experiment::SelfguidedVsVanilla => "PSNR curves of vanilla and self-guided DIP on matched seeds",
            Experiment::RegularizerAblation => "self-guided DIP with and without the input regularizer; input drift",
            Experiment::InpaintingToy => "vanilla and self-guided DIP on random-pixel inpainting, with data correction",
        }
    }

    /// Experiments whose operator is a Fourier or pixel mask on a power-of-two grid.
    pub fn uses_fourier_grid(self) -> bool {
        !matches!(
            self,
            Experiment::Theorem1Verify | Experiment::Theorem2Verify | Experiment::AppendixIdentities
        )
    }

    pub fn is_dip(self) -> bool {
        matches!(
            self,
            Experiment::FreqRecovery1d
                | Experiment::SpectralBias
                | Experiment::SelfguidedVsVanilla
                | Experiment::RegularizerAblation
                | Experiment::InpaintingToy
        )
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// DIP settings a config file may override. Variant, seed and stream belong to the experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DipOverrides {
    pub iters: Option<usize>,
    pub theta_lr: Option<f64>,
    pub input_lr: Option<f64>,
    pub alpha: Option<f64>,
    pub eta_draws: Option<usize>,
    pub noise_scale_frac: Option<f64>,
    pub final_draws: Option<usize>,
    pub eval_draws: Option<usize>,
    pub eval_every: Option<usize>,
    pub input_init: Option<InputInit>,
    pub drift_window: Option<(usize, usize)>,
}

impl DipOverrides {
    fn apply(&self, base: &mut DipConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { base.$f = v; })*};
        }
        set!(iters, theta_lr, input_lr, alpha, eta_draws, noise_scale_frac, final_draws, eval_draws, eval_every, input_init, drift_window);
    }
}

/// The config file as written by the user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Independent seeds `seed, seed+1, ...`, each in its own output subdirectory.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub problem_size: Option<usize>,
    #[serde(default)]
    pub acceleration: Option<usize>,
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Conv-generator channel count.
    #[serde(default)]
    pub hidden: Option<usize>,
    /// Weight init variance ω of the conv generator.
    #[serde(default)]
    pub init_variance: Option<f64>,
    /// Monte-Carlo draws or random instances, depending on the experiment.
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub dip: DipOverrides,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_seed() -> u64 {
    1
}

fn default_replicates() -> usize {
    1
}

/// Fully resolved settings for one run. Echoed into every summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Resolved {
    pub experiment: Experiment,
    pub seed: u64,
    pub problem_size: usize,
    pub acceleration: usize,
    /// Unset for theorem2-verify means the default pair `0.05, 0.2`.
    pub sigma: Option<f64>,
    pub hidden: usize,
    pub init_variance: f64,
    pub trials: usize,
    pub dip: DipConfig,
}

/// Environment overrides (`NTKDIP_SEED`, `NTKDIP_OUTPUT_DIR`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnvOverrides {
    pub seed: Option<String>,
    pub output_dir: Option<String>,
}

impl EnvOverrides {
    pub fn from_env() -> Self {
        Self {
            seed: std::env::var("NTKDIP_SEED").ok(),
            output_dir: std::env::var("NTKDIP_OUTPUT_DIR").ok(),
        }
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if let Some(s) = &self.seed {
            cfg.seed = s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(vec![format!("NTKDIP_SEED: not an unsigned integer: {s:?}")]))?;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = Some(PathBuf::from(d));
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: default_seed(),
            replicates: default_replicates(),
            problem_size: None,
            acceleration: None,
            sigma: None,
            hidden: None,
            init_variance: None,
            trials: None,
            dip: DipOverrides::default(),
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_json(&text)
    }

    pub fn default_output_dir(&self) -> PathBuf {
        PathBuf::from("ntkdip-out").join(self.experiment.name())
    }

    /// Seeds covered by the replicates.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replicates as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    /// Fills in experiment defaults and checks every field, collecting all problems.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        self.resolve_seed(self.seed)
    }

    pub fn resolve_seed(&self, seed: u64) -> Result<Resolved, CliError> {
        let e = self.experiment;
        let d = defaults(e);
        let mut dip = d.dip;
        self.dip.apply(&mut dip);
        dip.seed = seed;
        let r = Resolved {
            experiment: e,
            seed,
            problem_size: self.problem_size.unwrap_or(d.q),
            acceleration: self.acceleration.unwrap_or(d.acceleration),
            sigma: self.sigma.or(d.sigma),
            hidden: self.hidden.unwrap_or(16),
            init_variance: self.init_variance.unwrap_or(0.02),
            trials: self.trials.unwrap_or(d.trials),
            dip,
        };
        let mut errs = Vec::new();
        if self.replicates == 0 || self.replicates > 64 {
            errs.push(format!("replicates: must be in 1..=64, got {}", self.replicates));
        }
        validate(&r, &mut errs);
        if errs.is_empty() {
            Ok(r)
        } else {
            Err(CliError::Config(errs))
        }
    }
}

struct Defaults {
    q: usize,
    acceleration: usize,
    sigma: Option<f64>,
    trials: usize,
    dip: DipConfig,
}

fn defaults(e: Experiment) -> Defaults {
    let toy_dip = DipConfig {
        iters: 3000,
        eval_every: 10,
        eval_draws: 64,
        stream: 3,
        ..DipConfig::default()
    };
    let (q, acceleration, sigma, trials) = match e {
        Experiment::FreqRecovery1d => (64, 1, Some(0.0), 1),
        Experiment::SpectralBias | Experiment::SelfguidedVsVanilla | Experiment::RegularizerAblation => (64, 4, Some(0.2), 1),
        Experiment::InpaintingToy => (64, 2, Some(0.05), 1),
        Experiment::Theorem1Verify => (16, 2, Some(0.0), 20),
        Experiment::Theorem2Verify => (16, 2, None, 2000),
        Experiment::Corollary1Verify => (16, 2, Some(0.2), 1),
        Experiment::AppendixIdentities => (12, 2, None, 50),
    };
    let dip = if e == Experiment::FreqRecovery1d {
        DipConfig {
            iters: 5000,
            ..toy_dip
        }
    } else {
        toy_dip
    };
    Defaults {
        q,
        acceleration,
        sigma,
        trials,
        dip,
    }
}

fn validate(r: &Resolved, errs: &mut Vec<String>) {
    let q = r.problem_size;
    let e = r.experiment;
    if e.uses_fourier_grid() {
        if !q.is_power_of_two() || !(8..=256).contains(&q) {
            errs.push(format!("problem-size: {e} needs a power of two in 8..=256, got {q}"));
        }
    } else if q % 2 != 0 || !(4..=64).contains(&q) {
        errs.push(format!("problem-size: {e} needs an even size in 4..=64, got {q}"));
    }
    let acc_ok = match e {
        Experiment::FreqRecovery1d => r.acceleration == 1,
        _ => matches!(r.acceleration, 2 | 4 | 8),
    };
    if !acc_ok {
        let allowed = if e == Experiment::FreqRecovery1d { "1 (full sampling)" } else { "one of 2, 4, 8" };
        errs.push(format!("acceleration: must be {allowed}, got {}", r.acceleration));
    } else if q % r.acceleration != 0 {
        errs.push(format!("acceleration: {} does not divide problem-size {q}", r.acceleration));
    }
    if let Some(s) = r.sigma {
        if !(s >= 0.0) || !s.is_finite() {
            errs.push(format!("sigma: must be finite and non-negative, got {s}"));
        }
    }
    if r.hidden == 0 || r.hidden > 128 {
        errs.push(format!("hidden: must be in 1..=128, got {}", r.hidden));
    }
    if !(r.init_variance > 0.0) || !r.init_variance.is_finite() {
        errs.push(format!("init-variance: must be positive, got {}", r.init_variance));
    }
    let min_trials = if e == Experiment::Theorem2Verify { 2 } else { 1 };
    if r.trials < min_trials || r.trials > 100_000 {
        errs.push(format!("trials: must be in {min_trials}..=100000, got {}", r.trials));
    }
    if let Err(err) = r.dip.validate() {
        errs.push(format!("dip: {err}"));
    }
    if e == Experiment::RegularizerAblation && r.dip.drift_window.1 > r.dip.iters {
        errs.push(format!(
            "dip.drift-window: ends at {} but only {} iterations run",
            r.dip.drift_window.1, r.dip.iters
        ));
    }
    if e == Experiment::FreqRecovery1d && r.dip.iters < 500 {
        errs.push(format!("dip.iters: freq-recovery-1d compares iteration 500 with the end; got {}", r.dip.iters));
    }
}
