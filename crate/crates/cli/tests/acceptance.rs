//! Acceptance run: one PASS/FAIL line per criterion, then a tally.
//!
//! Failing criteria are reported, not hidden; the process exits 0 either way so the
//! rest of the test suite still runs. Set `NTKDIP_ACCEPT_SEEDS` to shorten the DIP part.

use std::time::{Duration, Instant};

use ntkdip::config::{Experiment, ExperimentConfig, Resolved};
use ntkdip::experiments::{self, ArmSummary};
use ntkdip::problems::{run_arm, Arm, Sampling, ToyProblem};
use ntkdip_core::generators::{ConvShape, Generator};
use ntkdip_core::instances::oracle_problem;
use ntkdip_core::metrics::psnr;
use ntkdip_core::ntk::{empirical_ntk, expected_decoder_ntk, fourier_coherence, real_block};
use ntkdip_core::numerics::scalar::{norm2, sub};
use ntkdip_core::numerics::{Matrix, RngStream, Signal};

struct Line {
    id: u32,
    pass: bool,
    detail: String,
    took: Duration,
}

fn timed<F: FnOnce() -> (bool, String)>(id: u32, f: F) -> Line {
    let start = Instant::now();
    let (pass, detail) = f();
    let line = Line {
        id,
        pass,
        detail,
        took: start.elapsed(),
    };
    println!(
        "criterion {:>2}: {} {} [{:.1} s]",
        line.id,
        if line.pass { "PASS" } else { "FAIL" },
        line.detail,
        line.took.as_secs_f64()
    );
    line
}

fn resolved(e: Experiment) -> Resolved {
    ExperimentConfig::new(e).resolve().expect("defaults are valid")
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    norm2(&sub(a, b)) / norm2(b).max(1e-300)
}

fn kernel_regime_oracle() -> (bool, String) {
    let start = Instant::now();
    let mut rng = RngStream::new(2024, 0);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let fourier = case % 2 == 1;
        let q = if fourier { [8, 16][(case / 2) % 2] } else { 4 + 2 * (case % 7) };
        let p = oracle_problem::<f64>(q, 0.1, &mut rng, fourier).unwrap();
        let noise = rng.normals(p.measurements(), 0.1);
        for t in 1..=64 {
            let it = p.iterate(&noise, t).unwrap();
            let cf = p.closed_form_zt(&noise, t).unwrap();
            worst = worst.max(rel(&cf, &it));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst <= 1e-9 && secs < 30.0,
        format!("200 problems, t = 1..=64: max relative gap {worst:.2e} (tol 1e-9), {secs:.1} s (limit 30 s)"),
    )
}

fn pairing(a: &Signal<f64>, b: &Signal<f64>) -> f64 {
    a.as_stacked().iter().zip(b.as_stacked()).map(|(x, y)| x * y).sum()
}

/// Max relative error of weight and input gradients against central differences.
fn fd_error(net: &Generator<f64>, input: &Signal<f64>, cot: &Signal<f64>, h: f64) -> f64 {
    let g = net.backward(input, cot, true).unwrap();
    let mut probe = net.clone();
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for i in 0..g.weights.len() {
        let w0 = net.weights()[i];
        probe.weights_mut()[i] = w0 + h;
        let up = pairing(cot, &probe.forward(input).unwrap());
        probe.weights_mut()[i] = w0 - h;
        let down = pairing(cot, &probe.forward(input).unwrap());
        probe.weights_mut()[i] = w0;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((g.weights[i] - fd).abs());
        scale = scale.max(fd.abs());
    }
    let gi = g.input.unwrap();
    let n = input.len() * net.input_channels();
    for i in 0..n {
        let mut p = input.clone();
        p.as_stacked_mut()[i] += h;
        let up = pairing(cot, &net.forward(&p).unwrap());
        p.as_stacked_mut()[i] -= 2.0 * h;
        let down = pairing(cot, &net.forward(&p).unwrap());
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((gi.as_stacked()[i] - fd).abs());
        scale = scale.max(fd.abs());
    }
    worst / scale.max(1e-300)
}

fn random_signal(n: usize, rng: &mut RngStream) -> Signal<f64> {
    Signal::new(&rng.normals(n, 1.0), &rng.normals(n, 1.0)).unwrap()
}

fn gradient_checks() -> (bool, String) {
    let mut rng = RngStream::new(808, 0);
    let (mut dec, mut conv) = (0.0f64, 0.0f64);
    for trial in 0..20 {
        let net = Generator::decoder(8, 8, 3, &mut rng).unwrap().init_weights(1.0, &mut rng).unwrap();
        let input = Signal::from_real(&rng.normals(8, 1.0));
        let cot = random_signal(8, &mut rng);
        dec = dec.max(fd_error(&net, &input, &cot, 1e-6));

        let shape = ConvShape {
            in_len: 4,
            hidden: 3,
            kernel: 3,
            upsample: vec![true, trial % 2 == 0, true],
        };
        let net = Generator::conv(shape).unwrap().init_weights(0.5, &mut rng).unwrap();
        let input = random_signal(4, &mut rng);
        let cot = random_signal(net.output_len(), &mut rng);
        conv = conv.max(fd_error(&net, &input, &cot, 1e-6));
    }
    (
        dec <= 1e-5 && conv <= 1e-5,
        format!("20 triples each: decoder max rel error {dec:.2e}, conv {conv:.2e} (tol 1e-5)"),
    )
}

fn circulant_filter(n: usize, taps: usize, rng: &mut RngStream) -> Vec<f64> {
    let mut f = vec![0.0; n];
    for t in f.iter_mut().take(taps) {
        *t = rng.normal();
    }
    f
}

fn decoder_ntk_theory() -> (bool, String) {
    let (n, k) = (16, 64);
    let mut rng = RngStream::new(909, 0);
    let base = Generator::<f64>::decoder_with_filter(circulant_filter(n, 4, &mut rng), k).unwrap();
    let ones = Signal::from_real(&vec![1.0; n]);
    let mut acc = Matrix::zeros(n, n);
    let inits = 500;
    for _ in 0..inits {
        let net = base.clone().init_weights(1.0, &mut rng).unwrap();
        acc = acc.add(empirical_ntk(&net, &ones).unwrap().matrix());
    }
    let dev = acc.scale(1.0 / inits as f64).max_abs_diff(expected_decoder_ntk(base.convolution().unwrap()).unwrap().matrix());

    let q = 64;
    let u = Matrix::circulant(&circulant_filter(q, 5, &mut rng));
    let dec = fourier_coherence(&expected_decoder_ntk(&u).unwrap()).unwrap();
    let conv = Generator::<f64>::conv_upsampling(q, 16).unwrap().init_weights(0.02, &mut rng).unwrap();
    let z = random_signal(conv.input_len(), &mut rng);
    let c = fourier_coherence(&real_block(&empirical_ntk(&conv, &z).unwrap(), q).unwrap()).unwrap();
    (
        dev <= 0.14 && dec >= 0.99 && c < dec,
        format!(
            "500-init decoder NTK max deviation {dev:.3} (tol 0.14); coherence circulant decoder {dec:.4} (need >= 0.99), conv {c:.4} (need < decoder)"
        ),
    )
}

struct SeedRun {
    vanilla: ArmSummary,
    self_guided: ArmSummary,
    low: Option<usize>,
    high: Option<usize>,
    drift_ratio: Option<f64>,
    correction_resid: f64,
    correction_idem: f64,
    took: Duration,
}

fn correction_stats(toy: &ToyProblem, r: &ntkdip_core::RunReport<f64>) -> (f64, f64) {
    let c = r.corrected_recon.as_ref().unwrap();
    let resid = toy.map.apply(c).unwrap().max_abs_diff(&toy.y);
    let idem = toy.map.data_correction(&toy.y, c).unwrap().max_abs_diff(c);
    (resid, idem)
}

fn dip_seed(base: &Resolved, seed: u64) -> SeedRun {
    let start = Instant::now();
    let cfg = Resolved {
        seed,
        dip: ntkdip_core::DipConfig { seed, ..base.dip.clone() },
        ..base.clone()
    };
    let toy = ToyProblem::from_config(&cfg, Sampling::Fourier).unwrap();
    let van = run_arm(&cfg, &toy, Arm::Vanilla).unwrap();
    let sg = run_arm(&cfg, &toy, Arm::SelfGuided { alpha: 1.0 }).unwrap();
    let a0 = run_arm(&cfg, &toy, Arm::SelfGuided { alpha: 0.0 }).unwrap();
    let (mut resid, mut idem) = (0.0f64, 0.0f64);
    for r in [&van, &sg, &a0] {
        let (a, b) = correction_stats(&toy, r);
        resid = resid.max(a);
        idem = idem.max(b);
    }
    let run = SeedRun {
        vanilla: ArmSummary::from_report(&toy, &van).unwrap(),
        self_guided: ArmSummary::from_report(&toy, &sg).unwrap(),
        low: van.first_crossing(|b| b.low, experiments::CROSSING_LEVEL),
        high: van.first_crossing(|b| b.high, experiments::CROSSING_LEVEL),
        drift_ratio: sg.input_drift_variance.zip(a0.input_drift_variance).map(|(a, b)| b / a),
        correction_resid: resid,
        correction_idem: idem,
        took: start.elapsed(),
    };
    let f = |x: Option<f64>| x.unwrap_or(f64::NAN);
    println!(
        "  seed {seed}: vanilla best {:.2} final {:.2} | self-guided best {:.2} final {:.2} | low crossing {:?}, high {:?} | drift ratio {:.1} | {:.0} s",
        f(run.vanilla.best_psnr),
        f(run.vanilla.final_psnr),
        f(run.self_guided.best_psnr),
        f(run.self_guided.final_psnr),
        run.low,
        run.high,
        f(run.drift_ratio),
        run.took.as_secs_f64()
    );
    run
}

fn seeds() -> Vec<u64> {
    let n = std::env::var("NTKDIP_ACCEPT_SEEDS").ok().and_then(|s| s.parse().ok()).unwrap_or(5u64);
    (1..=n).collect()
}

fn count(runs: &[SeedRun], f: impl Fn(&SeedRun) -> bool) -> usize {
    runs.iter().filter(|r| f(r)).count()
}

fn main() {
    // libtest flags such as --nocapture are passed through; none apply here.
    let mut lines = Vec::new();

    lines.push(timed(1, kernel_regime_oracle));

    let start = Instant::now();
    let t1 = experiments::theorem1_verify(&resolved(Experiment::Theorem1Verify)).unwrap();
    let t1_secs = start.elapsed().as_secs_f64();
    let s = &t1.summary;
    lines.push(timed(2, || {
        (
            s.nonsingular_within_tol == 20 && s.nonsingular_instances == 20 && t1_secs < 120.0,
            format!(
                "{}/20 instances with ||A(z_inf - x)||/||x|| <= 1e-6 (max {:.2e}); up to {} iterations; theorem-1 sweep {t1_secs:.1} s (limit 120 s)",
                s.nonsingular_within_tol, s.nonsingular_max_residual, s.max_iterations
            ),
        )
    }));
    lines.push(timed(3, || {
        (
            s.exact_within_tol == 10,
            format!("{}/10 instances with ||z_inf - x||/||x|| <= 1e-6 (max {:.2e})", s.exact_within_tol, s.exact_max_error),
        )
    }));
    lines.push(timed(4, || {
        (
            s.general_within_tol == s.general_instances,
            format!(
                "{}/{} generic singular instances within 1e-6 (max {:.2e}); note: on {} planted N(A)∩R(W) instances the formula misses by {:.2e}, the full limit expression by {:.2e}",
                s.general_within_tol,
                s.general_instances,
                s.general_max_mismatch,
                s.planted_instances,
                s.planted_case_formula_mismatch,
                s.planted_exact_formula_mismatch
            ),
        )
    }));

    lines.push(timed(5, || {
        let start = Instant::now();
        let r = experiments::theorem2_verify(&resolved(Experiment::Theorem2Verify)).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let within = r.summary.points.iter().filter(|p| p.z_score <= 3.0).count();
        (
            within == 8 && r.summary.points.len() == 8 && secs < 60.0,
            format!(
                "{within}/8 (sigma, t) pairs within 3 SE (max |z| {:.2}); {} draws; {secs:.1} s (limit 60 s)",
                r.summary.max_z_score, r.summary.trials
            ),
        )
    }));

    lines.push(timed(6, || {
        let (mut gap, mut drift, mut var) = (0.0f64, 0.0f64, 0.0f64);
        for seed in 1..=5 {
            let mut cfg = ExperimentConfig::new(Experiment::Corollary1Verify);
            cfg.seed = seed;
            let r = experiments::corollary1_verify(&cfg.resolve().unwrap()).unwrap().summary;
            gap = gap.max(r.max_relative_gap);
            drift = drift.max(r.unsampled_bias_drift);
            var = var.max(r.sampled_variance_gap);
        }
        (
            gap <= 1e-8 && drift <= 1e-12 && var <= 1e-6,
            format!(
                "5 instances: formula vs embedded prediction {gap:.2e} (tol 1e-8); unsampled bias drift {drift:.2e}; sampled variance gap at t = 1e4 {var:.2e} (tol 1e-6)"
            ),
        )
    }));

    lines.push(timed(7, || {
        let cfg = resolved(Experiment::AppendixIdentities);
        let r = experiments::appendix_identities(&cfg).unwrap().summary;
        (
            r.max_residual <= 1e-8 && r.instances == 50 && cfg.problem_size == 12 && r.rank == 6,
            format!(
                "{} instances, q = {}, rank {}, t <= 64: max residual {:.2e} (tol 1e-8)",
                r.instances, cfg.problem_size, r.rank, r.max_residual
            ),
        )
    }));

    lines.push(timed(8, gradient_checks));
    lines.push(timed(9, decoder_ntk_theory));

    let base = resolved(Experiment::SelfguidedVsVanilla);
    println!(
        "  DIP toy problem: q = {}, {}x, sigma {}, {} iterations, seeds {:?}",
        base.problem_size,
        base.acceleration,
        base.sigma.unwrap_or(0.0),
        base.dip.iters,
        seeds()
    );
    let runs: Vec<SeedRun> = seeds().into_iter().map(|s| dip_seed(&base, s)).collect();
    let n = runs.len();

    lines.push(timed(10, || {
        let order = count(&runs, |r| experiments::low_before_high(r.low, r.high));
        let overfit = count(&runs, |r| r.vanilla.overfit_gap_db.is_some_and(|g| g >= 1.0));
        let gaps: Vec<String> = runs.iter().map(|r| format!("{:.2}", r.vanilla.overfit_gap_db.unwrap_or(f64::NAN))).collect();
        (
            order == n && overfit == n,
            format!(
                "low band before high on {order}/{n} seeds (a band that never crosses counts as later); best - final >= 1 dB on {overfit}/{n} seeds (gaps {})",
                gaps.join(", ")
            ),
        )
    }));

    lines.push(timed(11, || {
        let better = count(&runs, |r| {
            r.self_guided.best_psnr.zip(r.vanilla.best_psnr).is_some_and(|(s, v)| s >= v)
        });
        let steady = count(&runs, |r| r.self_guided.overfit_gap_db.is_some_and(|g| g <= 0.5));
        let drift = count(&runs, |r| r.drift_ratio.is_some_and(|d| d >= 2.0));
        let slow = runs.iter().map(|r| r.took.as_secs_f64()).fold(0.0, f64::max);
        let gaps: Vec<String> = runs.iter().map(|r| format!("{:.2}", r.self_guided.overfit_gap_db.unwrap_or(f64::NAN))).collect();
        (
            better == n && steady == n && drift == n && slow < 300.0,
            format!(
                "self-guided best >= vanilla best on {better}/{n}; final within 0.5 dB of best on {steady}/{n} (gaps {}); drift ratio >= 2 on {drift}/{n}; slowest seed {slow:.0} s (limit 300 s)",
                gaps.join(", ")
            ),
        )
    }));

    lines.push(timed(12, || {
        let resid = runs.iter().map(|r| r.correction_resid).fold(0.0, f64::max);
        let idem = runs.iter().map(|r| r.correction_idem).fold(0.0, f64::max);
        // Noise-free toy problems: does correction ever lower PSNR?
        let (mut drops, mut total, mut worst) = (0, 0, f64::INFINITY);
        for seed in 1..=3u64 {
            let cfg = Resolved {
                seed,
                sigma: Some(0.0),
                dip: ntkdip_core::DipConfig { seed, ..base.dip.clone() },
                ..base.clone()
            };
            for sampling in [Sampling::Fourier, Sampling::Pixels] {
                let toy = ToyProblem::from_config(&cfg, sampling).unwrap();
                let r = run_arm(&cfg, &toy, Arm::Vanilla).unwrap();
                let before = r.final_psnr.unwrap();
                let after = psnr(r.corrected_recon.as_ref().unwrap(), &toy.truth).unwrap();
                total += 1;
                drops += usize::from(after < before);
                worst = worst.min(after - before);
            }
        }
        (
            resid <= 1e-10 && idem <= 1e-10 && drops == 0,
            format!(
                "consistency {resid:.2e}, idempotence {idem:.2e} (tol 1e-10) over {} DIP outputs; noise-free runs: PSNR lowered by correction in {drops}/{total} (min change {worst:+.3} dB)",
                3 * n
            ),
        )
    }));

    let passed = lines.iter().filter(|l| l.pass).count();
    let failed: Vec<String> = lines.iter().filter(|l| !l.pass).map(|l| l.id.to_string()).collect();
    println!(
        "acceptance: {passed}/{} criteria passed{}",
        lines.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failing: {}", failed.join(", "))
        }
    );
}
