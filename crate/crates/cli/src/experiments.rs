//! The experiments. Each returns a typed summary, pass/fail checks and the files to write.

use ntkdip_core::dynamics::{circulant_kernel_embedding, corollary1_mse, corollary1_terms, write_curve_csv, CurveRow, LimitCase};
use ntkdip_core::generators::Generator;
use ntkdip_core::instances::{
    exact_recovery_problem, nonsingular_problem, oracle_problem, planted_intersection_problem, singular_problem,
    square_signal,
};
use ntkdip_core::metrics::{empirical_bias_variance, psnr, BandMasks};
use ntkdip_core::ntk::{empirical_ntk, fourier_coherence, real_block};
use ntkdip_core::numerics::scalar::{norm2, sub};
use ntkdip_core::numerics::{fft, RngStream, Signal};
use ntkdip_core::operators::{variable_density_mask, LinearOp};
use ntkdip_core::train::{self, DipConfig, Evaluator, Optimizer, RunReport};
use ntkdip_core::DynamicsProblem;
use serde::Serialize;

use crate::config::{Experiment, Resolved};
use crate::error::CliError;
use crate::problems::{corrected_psnr, run_arm, Arm, Sampling, ToyProblem, WEIGHT_STREAM};
use crate::svg::{Plot, Series};

/// Hidden width of the deep decoder in freq-recovery-1d.
pub const DECODER_WIDTH: usize = 64;
/// GD step as a fraction of `1/λ_max` of the initial NTK.
pub const GD_STEP_FRACTION: f64 = 0.5;
/// Band NMSE level whose first crossing is reported.
pub const CROSSING_LEVEL: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            pass,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn svg(name: &str, plot: Plot) -> Self {
        Self {
            name: name.into(),
            bytes: plot.render().into_bytes(),
        }
    }

    fn run_csv(name: &str, report: &RunReport<f64>) -> Result<Self, CliError> {
        let mut bytes = Vec::new();
        report.write_csv(&mut bytes)?;
        Ok(Self { name: name.into(), bytes })
    }

    fn rows<S: Serialize>(name: &str, rows: &[S]) -> Result<Self, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| ntkdip_core::Error::Parse(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| ntkdip_core::Error::Io(e.to_string()))?;
        Ok(Self { name: name.into(), bytes })
    }
}

/// Result of one experiment run.
pub struct Run<S> {
    pub summary: S,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

/// Type-erased result used by the runner.
pub struct Output {
    pub results: serde_json::Value,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

impl<S: Serialize> Run<S> {
    fn erase(self) -> Output {
        Output {
            results: serde_json::to_value(&self.summary).expect("summaries serialize"),
            checks: self.checks,
            artifacts: self.artifacts,
        }
    }
}

pub fn execute(cfg: &Resolved) -> Result<Output, CliError> {
    Ok(match cfg.experiment {
        Experiment::FreqRecovery1d => freq_recovery_1d(cfg)?.erase(),
        Experiment::SpectralBias => spectral_bias(cfg)?.erase(),
        Experiment::Theorem1Verify => theorem1_verify(cfg)?.erase(),
        Experiment::Theorem2Verify => theorem2_verify(cfg)?.erase(),
        Experiment::Corollary1Verify => corollary1_verify(cfg)?.erase(),
        Experiment::AppendixIdentities => appendix_identities(cfg)?.erase(),
        Experiment::SelfguidedVsVanilla => selfguided_vs_vanilla(cfg)?.erase(),
        Experiment::RegularizerAblation => regularizer_ablation(cfg)?.erase(),
        Experiment::InpaintingToy => inpainting_toy(cfg)?.erase(),
    })
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    norm2(&sub(a, b)) / norm2(b).max(1e-300)
}

fn psnr_series(label: &str, r: &RunReport<f64>) -> Series {
    Series::new(label, r.records.iter().filter_map(|x| x.psnr.map(|p| (x.iter as f64, p))).collect())
}

fn psnr_plot(title: &str, series: Vec<Series>) -> Plot {
    Plot {
        title: title.into(),
        x_label: "iteration".into(),
        y_label: "PSNR (dB)".into(),
        log_y: false,
        series,
    }
}

/// Mean Fourier peak concentration of the leading eigenvectors of a generator's NTK at `input`.
///
/// Two-channel generators are scored on the real-output block.
pub fn ntk_coherence(net: &Generator<f64>, input: &Signal<f64>) -> Result<f64, CliError> {
    let w = empirical_ntk(net, input)?;
    let w = if net.output_channels() == 2 {
        real_block(&w, net.output_len())?
    } else {
        w
    };
    Ok(fourier_coherence(&w)?)
}

/// Circulant Gaussian smoothing filter of width `width` samples.
pub fn gaussian_filter(q: usize, width: f64) -> Vec<f64> {
    (0..q)
        .map(|i| {
            let d = i.min(q - i) as f64;
            (-0.5 * (d / width).powi(2)).exp()
        })
        .collect()
}

// ---------------------------------------------------------------- freq-recovery-1d

#[derive(Clone, Debug, Serialize)]
pub struct ArchFit {
    pub coherence: f64,
    pub step_size: f64,
    pub rmse_500: f64,
    pub rmse_final: f64,
    /// `rmse_final / rmse_500`
    pub ratio: f64,
    pub final_nmse_low: Option<f64>,
    pub final_nmse_high: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FreqRecovery {
    pub decoder_filter_width: f64,
    pub decoder: ArchFit,
    pub conv: ArchFit,
}

#[derive(Serialize)]
struct RmseRow {
    iter: usize,
    decoder_rmse: f64,
    conv_rmse: f64,
}

/// Magnitude RMSE recovered from PSNR against a truth with peak `peak`.
fn rmse_from_psnr(peak: f64, p: f64) -> f64 {
    peak * 10f64.powf(-p / 20.0)
}

pub fn freq_recovery_1d(cfg: &Resolved) -> Result<Run<FreqRecovery>, CliError> {
    let q = cfg.problem_size;
    let x = square_signal::<f64>(q);
    let map = LinearOp::inpainting(vec![true; q])?;
    let eval = Evaluator::new(x.clone(), &map, BandMasks::default_for(q)?)?;
    let mut wrng = RngStream::new(cfg.seed, WEIGHT_STREAM);
    let width = q as f64 / 8.0;
    let decoder = Generator::decoder_with_filter(gaussian_filter(q, width), DECODER_WIDTH)?.init_weights(1.0, &mut wrng)?;
    let conv = Generator::conv_upsampling(q, cfg.hidden)?.init_weights(cfg.init_variance, &mut wrng)?;

    let mut fits = Vec::new();
    let mut reports = Vec::new();
    for (label, net) in [("decoder", decoder), ("conv", conv)] {
        let base = DipConfig {
            optimizer: Optimizer::Gd,
            ..cfg.dip.clone()
        };
        let z = train::vanilla_input(&net, &base);
        let coherence = ntk_coherence(&net, &z)?;
        let lmax = empirical_ntk(&net, &z)?.eigen().max_eigenvalue();
        let dip = DipConfig {
            theta_lr: GD_STEP_FRACTION / lmax,
            ..base
        };
        let report = train::train_vanilla(&mut net.clone(), &map, &x, &dip, Some(&eval))
            .map_err(|e| CliError::from_train(label, e))?;
        let at_500 = report
            .records
            .iter()
            .rev()
            .find(|r| r.iter <= 500)
            .and_then(|r| r.psnr)
            .expect("iteration 0 is always logged");
        let rmse_500 = rmse_from_psnr(1.0, at_500);
        let rmse_final = rmse_from_psnr(1.0, report.final_psnr.expect("evaluator present"));
        let bands = eval.band_nmse(&report.final_recon)?;
        fits.push(ArchFit {
            coherence,
            step_size: dip.theta_lr,
            rmse_500,
            rmse_final,
            ratio: rmse_final / rmse_500,
            final_nmse_low: bands.low,
            final_nmse_high: bands.high,
        });
        reports.push(report);
    }
    let conv_fit = fits.pop().expect("two fits");
    let dec_fit = fits.pop().expect("two fits");

    let checks = vec![
        Check::new(
            "decoder RMSE plateaus",
            dec_fit.ratio >= 0.9,
            format!("RMSE(end)/RMSE(500) = {:.4}, need >= 0.9", dec_fit.ratio),
        ),
        Check::new(
            "conv generator keeps improving",
            conv_fit.ratio <= 0.5,
            format!("RMSE(end)/RMSE(500) = {:.4}, need <= 0.5", conv_fit.ratio),
        ),
        Check::new(
            "decoder NTK more Fourier-coherent than conv",
            dec_fit.coherence > conv_fit.coherence,
            format!("{:.4} vs {:.4}", dec_fit.coherence, conv_fit.coherence),
        ),
    ];

    let rows: Vec<RmseRow> = reports[0]
        .records
        .iter()
        .zip(&reports[1].records)
        .map(|(d, c)| RmseRow {
            iter: d.iter,
            decoder_rmse: rmse_from_psnr(1.0, d.psnr.unwrap_or(f64::NAN)),
            conv_rmse: rmse_from_psnr(1.0, c.psnr.unwrap_or(f64::NAN)),
        })
        .chain(std::iter::once(RmseRow {
            iter: cfg.dip.iters,
            decoder_rmse: dec_fit.rmse_final,
            conv_rmse: conv_fit.rmse_final,
        }))
        .collect();
    let plot = Plot {
        title: "square-signal fit".into(),
        x_label: "iteration".into(),
        y_label: "RMSE".into(),
        log_y: true,
        series: vec![
            Series::new("deep decoder", rows.iter().map(|r| (r.iter as f64, r.decoder_rmse)).collect()),
            Series::new("conv generator", rows.iter().map(|r| (r.iter as f64, r.conv_rmse)).collect()),
        ],
    };
    let artifacts = vec![
        Artifact::rows("rmse.csv", &rows)?,
        Artifact::svg("rmse.svg", plot),
        Artifact::run_csv("decoder.csv", &reports[0])?,
        Artifact::run_csv("conv.csv", &reports[1])?,
    ];
    Ok(Run {
        summary: FreqRecovery {
            decoder_filter_width: width,
            decoder: dec_fit,
            conv: conv_fit,
        },
        checks,
        artifacts,
    })
}

// ---------------------------------------------------------------- shared DIP summaries

#[derive(Clone, Debug, Serialize)]
pub struct ArmSummary {
    pub best_iter: Option<usize>,
    pub best_psnr: Option<f64>,
    pub final_psnr: Option<f64>,
    /// `best − final` in dB.
    pub overfit_gap_db: Option<f64>,
    pub corrected_psnr: Option<f64>,
    pub input_drift_variance: Option<f64>,
}

impl ArmSummary {
    pub fn from_report(toy: &ToyProblem, r: &RunReport<f64>) -> Result<Self, CliError> {
        let best = r.best.as_ref();
        Ok(Self {
            best_iter: best.map(|b| b.iter),
            best_psnr: best.map(|b| b.psnr),
            final_psnr: r.final_psnr,
            overfit_gap_db: best.zip(r.final_psnr).map(|(b, f)| b.psnr - f),
            corrected_psnr: corrected_psnr(toy, r)?,
            input_drift_variance: r.input_drift_variance,
        })
    }
}

// ---------------------------------------------------------------- spectral-bias

#[derive(Clone, Debug, Serialize)]
pub struct SpectralBias {
    pub zero_filled_psnr: f64,
    pub low_crossing: Option<usize>,
    pub mid_crossing: Option<usize>,
    pub high_crossing: Option<usize>,
    pub vanilla: ArmSummary,
}

/// Low band strictly earlier than high; a band that never crosses counts as crossing after the run.
pub fn low_before_high(low: Option<usize>, high: Option<usize>) -> bool {
    match (low, high) {
        (Some(l), Some(h)) => l < h,
        (Some(_), None) => true,
        (None, _) => false,
    }
}

pub fn crossing_check(low: Option<usize>, high: Option<usize>, iters: usize) -> Check {
    let show = |c: Option<usize>| c.map_or(format!("never within {iters} iterations"), |i| format!("iteration {i}"));
    Check::new(
        "low band crosses NMSE 0.1 before high band",
        low_before_high(low, high),
        format!("low: {}, high: {}", show(low), show(high)),
    )
}

pub fn overfit_check(gap: Option<f64>) -> Check {
    Check::new(
        "vanilla best PSNR exceeds final by >= 1 dB",
        gap.is_some_and(|g| g >= 1.0),
        format!("gap {:.3} dB", gap.unwrap_or(f64::NAN)),
    )
}

pub fn spectral_bias(cfg: &Resolved) -> Result<Run<SpectralBias>, CliError> {
    let toy = ToyProblem::from_config(cfg, Sampling::Fourier)?;
    let r = run_arm(cfg, &toy, Arm::Vanilla)?;
    let summary = SpectralBias {
        zero_filled_psnr: toy.zero_filled_psnr()?,
        low_crossing: r.first_crossing(|b| b.low, CROSSING_LEVEL),
        mid_crossing: r.first_crossing(|b| b.mid, CROSSING_LEVEL),
        high_crossing: r.first_crossing(|b| b.high, CROSSING_LEVEL),
        vanilla: ArmSummary::from_report(&toy, &r)?,
    };
    let checks = vec![
        crossing_check(summary.low_crossing, summary.high_crossing, cfg.dip.iters),
        overfit_check(summary.vanilla.overfit_gap_db),
    ];
    let band = |name: &str, f: fn(&ntkdip_core::metrics::BandNmse<f64>) -> Option<f64>| {
        Series::new(
            name,
            r.records
                .iter()
                .filter_map(|x| x.bands.as_ref().and_then(f).map(|v| (x.iter as f64, v)))
                .collect(),
        )
    };
    let bands = Plot {
        title: "band NMSE, vanilla DIP".into(),
        x_label: "iteration".into(),
        y_label: "NMSE".into(),
        log_y: true,
        series: vec![band("low", |b| b.low), band("mid", |b| b.mid), band("high", |b| b.high)],
    };
    let artifacts = vec![
        Artifact::run_csv("vanilla.csv", &r)?,
        Artifact::svg("bands.svg", bands),
        Artifact::svg("psnr.svg", psnr_plot("PSNR, vanilla DIP", vec![psnr_series("vanilla", &r)])),
    ];
    Ok(Run {
        summary,
        checks,
        artifacts,
    })
}

// ---------------------------------------------------------------- theorem1-verify

#[derive(Clone, Debug, Serialize)]
pub struct Theorem1 {
    pub measurements: usize,
    pub nonsingular_instances: usize,
    /// Max `‖A(z_∞ − x)‖/‖x‖`.
    pub nonsingular_max_residual: f64,
    pub nonsingular_within_tol: usize,
    pub exact_instances: usize,
    /// Max `‖z_∞ − x‖/‖x‖`.
    pub exact_max_error: f64,
    pub exact_within_tol: usize,
    pub general_instances: usize,
    /// Max relative gap between predicted and iterated limit error.
    pub general_max_mismatch: f64,
    pub general_within_tol: usize,
    pub planted_instances: usize,
    /// Same gap for the case formula on planted `N(A) ∩ R(W)` instances.
    pub planted_case_formula_mismatch: f64,
    /// Same gap for the full limit expression.
    pub planted_exact_formula_mismatch: f64,
    pub max_iterations: u64,
}

#[derive(Serialize)]
struct LimitRow {
    family: &'static str,
    instance: usize,
    case: LimitCase,
    iterations: u64,
    metric: f64,
}

pub const THEOREM1_TOL: f64 = 1e-6;

pub fn theorem1_verify(cfg: &Resolved) -> Result<Run<Theorem1>, CliError> {
    let q = cfg.problem_size;
    let p = q / cfg.acceleration;
    let rank = (q / 4).max(1);
    let mut rng = RngStream::new(cfg.seed, 0);
    let mut rows = Vec::new();
    let mut max_iters = 0;
    let mut run = |family: &'static str, i: usize, prob: &DynamicsProblem<f64>| -> Result<(Vec<f64>, LimitCase, _), CliError> {
        let (z, n) = prob.iterate_long_run(&vec![0.0; prob.measurements()])?;
        max_iters = max_iters.max(n);
        let pred = prob.predict_limit()?;
        let err = sub(&z, prob.x());
        Ok((err, pred.case, (pred, n, family, i)))
    };

    let (mut ns_max, mut ns_ok) = (0.0f64, 0);
    for i in 0..cfg.trials {
        let prob = nonsingular_problem::<f64>(q, p, &mut rng)?;
        let (err, case, (_, n, fam, _)) = run("nonsingular", i, &prob)?;
        let m = norm2(&prob.a().matvec(&err)) / norm2(prob.x());
        ns_max = ns_max.max(m);
        ns_ok += usize::from(m <= THEOREM1_TOL);
        rows.push(LimitRow { family: fam, instance: i, case, iterations: n, metric: m });
    }
    let exact_n = 10;
    let (mut ex_max, mut ex_ok) = (0.0f64, 0);
    for i in 0..exact_n {
        let prob = exact_recovery_problem::<f64>(q, p, rank, &mut rng)?;
        let (err, case, (_, n, fam, _)) = run("exact", i, &prob)?;
        let m = norm2(&err) / norm2(prob.x());
        ex_max = ex_max.max(m);
        ex_ok += usize::from(m <= THEOREM1_TOL && case == LimitCase::SingularExact);
        rows.push(LimitRow { family: fam, instance: i, case, iterations: n, metric: m });
    }
    let general_n = 10;
    let (mut ge_max, mut ge_ok) = (0.0f64, 0);
    for i in 0..general_n {
        let prob = singular_problem::<f64>(q, p, rank, &mut rng)?;
        let (err, case, (pred, n, fam, _)) = run("general", i, &prob)?;
        let m = rel(&err, &pred.limit_error);
        ge_max = ge_max.max(m);
        ge_ok += usize::from(m <= THEOREM1_TOL && pred.precondition_holds);
        rows.push(LimitRow { family: fam, instance: i, case, iterations: n, metric: m });
    }
    let planted_n = 5;
    let (mut pl_case, mut pl_exact) = (0.0f64, 0.0f64);
    for i in 0..planted_n {
        let prob = planted_intersection_problem::<f64>(q, p, rank.max(2), &mut rng)?;
        let (err, case, (pred, n, fam, _)) = run("planted", i, &prob)?;
        pl_case = pl_case.max(rel(&err, &pred.limit_error));
        let m = rel(&err, &pred.exact_limit_error);
        pl_exact = pl_exact.max(m);
        rows.push(LimitRow { family: fam, instance: i, case, iterations: n, metric: m });
    }

    let summary = Theorem1 {
        measurements: p,
        nonsingular_instances: cfg.trials,
        nonsingular_max_residual: ns_max,
        nonsingular_within_tol: ns_ok,
        exact_instances: exact_n,
        exact_max_error: ex_max,
        exact_within_tol: ex_ok,
        general_instances: general_n,
        general_max_mismatch: ge_max,
        general_within_tol: ge_ok,
        planted_instances: planted_n,
        planted_case_formula_mismatch: pl_case,
        planted_exact_formula_mismatch: pl_exact,
        max_iterations: max_iters,
    };
    let checks = vec![
        Check::new(
            "nonsingular limit error lies in N(A)",
            ns_ok == cfg.trials,
            format!("{ns_ok}/{} within {THEOREM1_TOL:e}, max {ns_max:.3e}", cfg.trials),
        ),
        Check::new(
            "exact recovery for x in R(W)",
            ex_ok == exact_n,
            format!("{ex_ok}/{exact_n} within {THEOREM1_TOL:e}, max {ex_max:.3e}"),
        ),
        Check::new(
            "singular-general limit matches prediction",
            ge_ok == general_n,
            format!("{ge_ok}/{general_n} within {THEOREM1_TOL:e}, max {ge_max:.3e}"),
        ),
        Check::new(
            "full limit expression on planted instances",
            pl_exact <= THEOREM1_TOL,
            format!("max {pl_exact:.3e}; case formula alone misses by {pl_case:.3e}"),
        ),
    ];
    Ok(Run {
        summary,
        checks,
        artifacts: vec![Artifact::rows("limits.csv", &rows)?],
    })
}

// ---------------------------------------------------------------- theorem2-verify

pub const THEOREM2_TIMES: [u64; 4] = [1, 5, 20, 100];
const THEOREM2_CURVE_MAX_T: u64 = 200;

#[derive(Clone, Debug, Serialize)]
pub struct Theorem2Point {
    pub sigma: f64,
    pub t: u64,
    pub predicted_mse: f64,
    pub empirical_mse: f64,
    pub stderr: f64,
    /// `|empirical − predicted| / stderr`
    pub z_score: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Theorem2 {
    pub trials: usize,
    pub points: Vec<Theorem2Point>,
    pub max_z_score: f64,
    /// Iteration minimizing the predicted MSE on `0..=200`, per sigma.
    pub optimal_t: Vec<(f64, usize)>,
}

pub fn theorem2_verify(cfg: &Resolved) -> Result<Run<Theorem2>, CliError> {
    let sigmas = cfg.sigma.map_or(vec![0.05, 0.2], |s| vec![s]);
    let mut points = Vec::new();
    let mut optimal_t = Vec::new();
    let mut artifacts = Vec::new();
    let mut series = Vec::new();
    for (k, &sigma) in sigmas.iter().enumerate() {
        let mut rng = RngStream::new(cfg.seed, k as u64);
        let prob = oracle_problem::<f64>(cfg.problem_size, sigma, &mut rng, false)?;
        let curve = prob.theorem2_curve(THEOREM2_CURVE_MAX_T)?;
        let mut rows: Vec<CurveRow> = curve
            .points
            .iter()
            .map(|p| CurveRow {
                t: p.t,
                bias: p.bias,
                variance: p.variance,
                mse: p.mse,
                empirical_mse: None,
                stderr: None,
            })
            .collect();
        for &t in &THEOREM2_TIMES {
            let bv = empirical_bias_variance(&prob, t, cfg.trials, &mut rng)?;
            let th = prob.theorem2_at(t)?;
            let z = (bv.mse - th.mse).abs() / bv.stderr.max(f64::MIN_POSITIVE);
            points.push(Theorem2Point {
                sigma,
                t,
                predicted_mse: th.mse,
                empirical_mse: bv.mse,
                stderr: bv.stderr,
                z_score: z,
            });
            if let Some(row) = rows.get_mut(t as usize) {
                row.empirical_mse = Some(bv.mse);
                row.stderr = Some(bv.stderr);
            }
        }
        optimal_t.push((sigma, curve.argmin()));
        let mut bytes = Vec::new();
        write_curve_csv(&rows, &mut bytes)?;
        artifacts.push(Artifact {
            name: format!("mse-sigma-{sigma}.csv"),
            bytes,
        });
        series.push(Series::new(
            format!("sigma {sigma}"),
            rows.iter().map(|r| (r.t as f64, r.mse)).collect(),
        ));
    }
    artifacts.push(Artifact::svg(
        "mse.svg",
        Plot {
            title: "predicted MSE of the kernel-regime iterate".into(),
            x_label: "iteration t".into(),
            y_label: "MSE".into(),
            log_y: true,
            series,
        },
    ));
    let max_z = points.iter().map(|p| p.z_score).fold(0.0, f64::max);
    let checks = vec![Check::new(
        "empirical MSE within 3 standard errors",
        points.iter().all(|p| p.z_score <= 3.0),
        format!("max |z| = {max_z:.3} over {} (sigma, t) pairs", points.len()),
    )];
    Ok(Run {
        summary: Theorem2 {
            trials: cfg.trials,
            points,
            max_z_score: max_z,
            optimal_t,
        },
        checks,
        artifacts,
    })
}

// ---------------------------------------------------------------- corollary1-verify

pub const COROLLARY_TIMES: [u64; 7] = [0, 1, 3, 10, 50, 200, 1000];
pub const COROLLARY_LONG_T: u64 = 10_000;

#[derive(Clone, Debug, Serialize)]
pub struct Corollary1 {
    pub sigma: f64,
    pub step_size: f64,
    /// Max `|theorem − corollary| / max(corollary, 1)` over the checked times.
    pub max_relative_gap: f64,
    /// Max change of an unsampled-frequency bias term across time.
    pub unsampled_bias_drift: f64,
    /// Max `|variance_i(10⁴) − σ²|` over sampled frequencies.
    pub sampled_variance_gap: f64,
}

#[derive(Serialize)]
struct CorollaryRow {
    t: u64,
    theorem_mse: f64,
    corollary_mse: f64,
}

pub fn corollary1_verify(cfg: &Resolved) -> Result<Run<Corollary1>, CliError> {
    let q = cfg.problem_size;
    let sigma = cfg.sigma.unwrap_or(0.2);
    let mut rng = RngStream::new(cfg.seed, 0);
    let lambdas: Vec<f64> = (0..q).map(|_| 0.2 + rng.uniform()).collect();
    let mask = variable_density_mask(q, cfg.acceleration, &mut rng)?;
    let x = Signal::new(&rng.normals(q, 1.0), &rng.normals(q, 1.0))?;
    let map = LinearOp::masked_fourier(mask.clone())?;
    let w = circulant_kernel_embedding(&lambdas)?;
    let lmax = lambdas
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(l, _)| *l)
        .fold(0.0, f64::max);
    let eta = 1.0 / lmax;
    let prob = DynamicsProblem::from_map(&map, w, &x, sigma, eta)?;
    let fx = fft::fft(&x)?;

    let mut rows = Vec::new();
    let mut gap = 0.0f64;
    for &t in &COROLLARY_TIMES {
        let thm = prob.theorem2_at(t)?.mse;
        let cor = corollary1_mse(&lambdas, &mask, &fx, sigma, eta, t)?;
        gap = gap.max((thm - cor).abs() / cor.max(1.0));
        rows.push(CorollaryRow {
            t,
            theorem_mse: thm,
            corollary_mse: cor,
        });
    }
    let start = corollary1_terms(&lambdas, &mask, &fx, sigma, eta, 0)?;
    let mut drift = 0.0f64;
    for &t in COROLLARY_TIMES.iter().chain(&[COROLLARY_LONG_T]) {
        let terms = corollary1_terms(&lambdas, &mask, &fx, sigma, eta, t)?;
        for i in (0..q).filter(|&i| !mask[i]) {
            drift = drift.max((terms[i].0 - start[i].0).abs());
        }
    }
    let long = corollary1_terms(&lambdas, &mask, &fx, sigma, eta, COROLLARY_LONG_T)?;
    let var_gap = (0..q)
        .filter(|&i| mask[i])
        .map(|i| (long[i].1 - sigma * sigma).abs())
        .fold(0.0, f64::max);

    let checks = vec![
        Check::new(
            "per-frequency formula equals the embedded prediction",
            gap <= 1e-8,
            format!("max relative gap {gap:.3e}"),
        ),
        Check::new(
            "unsampled bias constant in t",
            drift <= 1e-12,
            format!("max drift {drift:.3e}"),
        ),
        Check::new(
            "sampled variance reaches sigma^2",
            var_gap <= 1e-6,
            format!("max gap at t = {COROLLARY_LONG_T}: {var_gap:.3e}"),
        ),
    ];
    Ok(Run {
        summary: Corollary1 {
            sigma,
            step_size: eta,
            max_relative_gap: gap,
            unsampled_bias_drift: drift,
            sampled_variance_gap: var_gap,
        },
        checks,
        artifacts: vec![Artifact::rows("corollary.csv", &rows)?],
    })
}

// ---------------------------------------------------------------- appendix-identities

pub const APPENDIX_MAX_T: u64 = 64;
pub const APPENDIX_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct Appendix {
    pub instances: usize,
    pub rank: usize,
    pub max_geometric: f64,
    pub max_decomposition: f64,
    pub max_projection_limit: f64,
    pub max_residual: f64,
}

#[derive(Serialize)]
struct AppendixRow {
    instance: usize,
    t: u64,
    geometric: f64,
    decomposition: f64,
    projection_limit: f64,
}

pub fn appendix_identities(cfg: &Resolved) -> Result<Run<Appendix>, CliError> {
    let q = cfg.problem_size;
    let p = q / cfg.acceleration;
    let rank = q / 2;
    let mut rng = RngStream::new(cfg.seed, 0);
    let mut rows = Vec::new();
    let (mut g, mut d, mut l) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..cfg.trials {
        // Alternate generic instances with planted N(A) ∩ R(W) ones.
        let prob = if i % 2 == 0 {
            singular_problem::<f64>(q, p, rank, &mut rng)?
        } else {
            planted_intersection_problem::<f64>(q, p, rank, &mut rng)?
        };
        for t in 1..=APPENDIX_MAX_T {
            let r = prob.appendix_residuals(t)?;
            g = g.max(r.geometric);
            d = d.max(r.decomposition);
            l = l.max(r.projection_limit);
            rows.push(AppendixRow {
                instance: i,
                t,
                geometric: r.geometric,
                decomposition: r.decomposition,
                projection_limit: r.projection_limit,
            });
        }
    }
    let max = g.max(d).max(l);
    Ok(Run {
        summary: Appendix {
            instances: cfg.trials,
            rank,
            max_geometric: g,
            max_decomposition: d,
            max_projection_limit: l,
            max_residual: max,
        },
        checks: vec![Check::new(
            "appendix identities hold",
            max <= APPENDIX_TOL,
            format!("max residual {max:.3e} over t = 1..={APPENDIX_MAX_T}"),
        )],
        artifacts: vec![Artifact::rows("residuals.csv", &rows)?],
    })
}

// ---------------------------------------------------------------- selfguided-vs-vanilla

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub zero_filled_psnr: f64,
    pub vanilla: ArmSummary,
    pub self_guided: ArmSummary,
}

pub fn self_beats_vanilla_check(s: &ArmSummary, v: &ArmSummary) -> Check {
    let (sb, vb) = (s.best_psnr.unwrap_or(f64::NAN), v.best_psnr.unwrap_or(f64::NAN));
    Check::new(
        "self-guided best PSNR >= vanilla best PSNR",
        sb >= vb,
        format!("{sb:.3} vs {vb:.3} dB"),
    )
}

pub fn no_overfit_check(s: &ArmSummary) -> Check {
    let gap = s.overfit_gap_db.unwrap_or(f64::NAN);
    Check::new(
        "self-guided final PSNR within 0.5 dB of its best",
        gap <= 0.5,
        format!("gap {gap:.3} dB"),
    )
}

pub fn selfguided_vs_vanilla(cfg: &Resolved) -> Result<Run<Comparison>, CliError> {
    let toy = ToyProblem::from_config(cfg, Sampling::Fourier)?;
    let van = run_arm(cfg, &toy, Arm::Vanilla)?;
    let sg = run_arm(cfg, &toy, Arm::SelfGuided { alpha: cfg.dip.alpha })?;
    let summary = Comparison {
        zero_filled_psnr: toy.zero_filled_psnr()?,
        vanilla: ArmSummary::from_report(&toy, &van)?,
        self_guided: ArmSummary::from_report(&toy, &sg)?,
    };
    let checks = vec![
        self_beats_vanilla_check(&summary.self_guided, &summary.vanilla),
        no_overfit_check(&summary.self_guided),
    ];
    let artifacts = vec![
        Artifact::run_csv("vanilla.csv", &van)?,
        Artifact::run_csv("self-guided.csv", &sg)?,
        Artifact::svg(
            "psnr.svg",
            psnr_plot(
                "PSNR over iterations",
                vec![psnr_series("vanilla", &van), psnr_series("self-guided", &sg)],
            ),
        ),
    ];
    Ok(Run {
        summary,
        checks,
        artifacts,
    })
}

// ---------------------------------------------------------------- regularizer-ablation

#[derive(Clone, Debug, Serialize)]
pub struct Ablation {
    pub alpha: f64,
    pub regularized: ArmSummary,
    pub unregularized: ArmSummary,
    /// Drift variance with `α = 0` over drift variance with `α`.
    pub drift_ratio: Option<f64>,
}

pub fn drift_check(ratio: Option<f64>) -> Check {
    Check::new(
        "alpha = 0 input drift >= 2x regularized drift",
        ratio.is_some_and(|r| r >= 2.0),
        format!("ratio {:.3}", ratio.unwrap_or(f64::NAN)),
    )
}

pub fn regularizer_ablation(cfg: &Resolved) -> Result<Run<Ablation>, CliError> {
    let toy = ToyProblem::from_config(cfg, Sampling::Fourier)?;
    let alpha = cfg.dip.alpha;
    let reg = run_arm(cfg, &toy, Arm::SelfGuided { alpha })?;
    let unreg = run_arm(cfg, &toy, Arm::SelfGuided { alpha: 0.0 })?;
    let ratio = reg
        .input_drift_variance
        .zip(unreg.input_drift_variance)
        .map(|(a, b)| b / a);
    let summary = Ablation {
        alpha,
        regularized: ArmSummary::from_report(&toy, &reg)?,
        unregularized: ArmSummary::from_report(&toy, &unreg)?,
        drift_ratio: ratio,
    };
    let artifacts = vec![
        Artifact::run_csv("regularized.csv", &reg)?,
        Artifact::run_csv("unregularized.csv", &unreg)?,
        Artifact::svg(
            "psnr.svg",
            psnr_plot(
                "self-guided PSNR with and without the input regularizer",
                vec![psnr_series(&format!("alpha {alpha}"), &reg), psnr_series("alpha 0", &unreg)],
            ),
        ),
    ];
    Ok(Run {
        summary,
        checks: vec![drift_check(ratio)],
        artifacts,
    })
}

// ---------------------------------------------------------------- inpainting-toy

#[derive(Clone, Debug, Serialize)]
pub struct Inpainting {
    pub zero_filled_psnr: f64,
    pub vanilla: ArmSummary,
    pub self_guided: ArmSummary,
    /// Max `|A·corrected − y|` over both arms.
    pub correction_residual: f64,
    /// Max change from correcting a corrected reconstruction again.
    pub correction_idempotence: f64,
}

pub fn inpainting_toy(cfg: &Resolved) -> Result<Run<Inpainting>, CliError> {
    let toy = ToyProblem::from_config(cfg, Sampling::Pixels)?;
    let van = run_arm(cfg, &toy, Arm::Vanilla)?;
    let sg = run_arm(cfg, &toy, Arm::SelfGuided { alpha: cfg.dip.alpha })?;
    let (mut resid, mut idem) = (0.0f64, 0.0f64);
    for r in [&van, &sg] {
        let c = r.corrected_recon.as_ref().expect("finalized");
        resid = resid.max(toy.map.apply(c)?.max_abs_diff(&toy.y));
        idem = idem.max(toy.map.data_correction(&toy.y, c)?.max_abs_diff(c));
    }
    let summary = Inpainting {
        zero_filled_psnr: psnr(&toy.map.adjoint(&toy.y)?, &toy.truth)?,
        vanilla: ArmSummary::from_report(&toy, &van)?,
        self_guided: ArmSummary::from_report(&toy, &sg)?,
        correction_residual: resid,
        correction_idempotence: idem,
    };
    let checks = vec![
        Check::new(
            "corrected reconstructions match the measurements",
            resid <= 1e-10,
            format!("max residual {resid:.3e}"),
        ),
        Check::new(
            "correction is idempotent",
            idem <= 1e-10,
            format!("max change {idem:.3e}"),
        ),
    ];
    let artifacts = vec![
        Artifact::run_csv("vanilla.csv", &van)?,
        Artifact::run_csv("self-guided.csv", &sg)?,
        Artifact::svg(
            "psnr.svg",
            psnr_plot(
                "inpainting PSNR over iterations",
                vec![psnr_series("vanilla", &van), psnr_series("self-guided", &sg)],
            ),
        ),
    ];
    Ok(Run {
        summary,
        checks,
        artifacts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_order_treats_never_as_later() {
        assert!(low_before_high(Some(10), Some(20)));
        assert!(!low_before_high(Some(20), Some(20)));
        assert!(low_before_high(Some(10), None));
        assert!(!low_before_high(None, Some(5)));
        assert!(!low_before_high(None, None));
    }

    #[test]
    fn gaussian_filter_is_symmetric_and_peaked_at_zero() {
        let f = gaussian_filter(16, 2.0);
        assert_eq!(f[0], 1.0);
        for i in 1..16 {
            assert_eq!(f[i], f[16 - i]);
            assert!(f[i] < 1.0);
        }
    }

    #[test]
    fn rmse_inverts_psnr() {
        let p = 20.0 * (1.0f64 / 0.03).log10();
        assert!((rmse_from_psnr(1.0, p) - 0.03).abs() < 1e-15);
    }

    #[test]
    fn coherence_helper_returns_a_fraction() {
        let net = Generator::<f64>::decoder_with_filter(gaussian_filter(16, 2.0), 8).unwrap();
        let net = net.init_weights(1.0, &mut RngStream::new(1, 0)).unwrap();
        let c = ntk_coherence(&net, &Signal::from_real(&[1.0; 16])).unwrap();
        assert!((0.0..=1.0 + 1e-12).contains(&c));
    }
}
