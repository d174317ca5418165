use ntkdip_core::generators::Generator;
use ntkdip_core::instances::random_orthogonal;
use ntkdip_core::ntk::*;
use ntkdip_core::numerics::{fft, Matrix, RngStream, Signal};
use num_complex::Complex;

fn circulant_filter(n: usize, taps: usize, rng: &mut RngStream) -> Vec<f64> {
    let mut f = vec![0.0; n];
    for t in f.iter_mut().take(taps) {
        *t = rng.normal();
    }
    f
}

#[test]
fn linear_net_kernel_is_scaled_identity() {
    let mut rng = RngStream::new(1, 0);
    let net = Generator::<f64>::linear(5, 4, 1).unwrap().init_weights(1.0, &mut rng).unwrap();
    let z = Signal::from_real(&rng.normals(5, 1.0));
    let w = empirical_ntk(&net, &z).unwrap();
    let expected = Matrix::identity(4).scale(z.norm_sq());
    assert!(w.matrix().max_abs_diff(&expected) < 1e-12);
}

#[test]
fn zero_input_decoder_kernel_vanishes() {
    let mut rng = RngStream::new(2, 0);
    let net = Generator::<f64>::decoder(8, 4, 3, &mut rng).unwrap().init_weights(1.0, &mut rng).unwrap();
    let w = empirical_ntk(&net, &Signal::zeros(8)).unwrap();
    assert_eq!(w.matrix().max_abs(), 0.0);
}

#[test]
fn jacobian_columns_match_finite_differences() {
    let mut rng = RngStream::new(3, 0);
    let net = Generator::<f64>::decoder(8, 16, 4, &mut rng).unwrap().init_weights(1.0, &mut rng).unwrap();
    let z = Signal::from_real(&rng.normals(8, 1.0));
    let j = jacobian(&net, &z).unwrap();
    let h = 1e-5;
    let mut probe = net.clone();
    for col in 0..net.num_weights() {
        let w0 = net.weights()[col];
        probe.weights_mut()[col] = w0 + h;
        let up = probe.forward(&z).unwrap();
        probe.weights_mut()[col] = w0 - h;
        let down = probe.forward(&z).unwrap();
        probe.weights_mut()[col] = w0;
        let fd: Vec<f64> = (0..8).map(|i| (up.re()[i] - down.re()[i]) / (2.0 * h)).collect();
        let jc = j.column(col);
        let scale = fd.iter().chain(&jc).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        let err = jc.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err / scale <= 1e-6, "column {col}: {:e}", err / scale);
    }
}

#[test]
fn empirical_kernel_is_psd_and_flattening_invariant() {
    let mut rng = RngStream::new(4, 0);
    let net = Generator::<f64>::conv_upsampling(16, 4).unwrap().init_weights(0.3, &mut rng).unwrap();
    let z = Signal::new(&rng.normals(2, 1.0), &rng.normals(2, 1.0)).unwrap();
    let j = jacobian(&net, &z).unwrap();
    let w = empirical_ntk(&net, &z).unwrap();
    assert_eq!(w.dim(), 32);
    assert!(w.eigen().min_eigenvalue() >= -1e-9 * w.eigen().max_eigenvalue().max(1.0));
    let mut perm: Vec<usize> = (0..j.cols()).collect();
    for i in (1..perm.len()).rev() {
        perm.swap(i, rng.index(i + 1));
    }
    let jp = j.permute_columns(&perm);
    let wp = jp.matmul(&jp.transpose());
    assert!(wp.max_abs_diff(w.matrix()) <= 1e-10 * w.matrix().max_abs().max(1.0));
    assert_eq!(jacobian(&net, &z).unwrap(), j);
}

#[test]
fn size_guard() {
    let net = Generator::<f64>::conv_upsampling(256, 2).unwrap();
    let z = Signal::zeros(32);
    assert!(matches!(jacobian(&net, &z), Err(ntkdip_core::Error::Size(_))));
}

#[test]
fn expected_kernel_of_circulant_is_circulant_and_fourier_diagonal() {
    let mut rng = RngStream::new(5, 0);
    let n = 8;
    let u = Matrix::circulant(&circulant_filter(n, 3, &mut rng));
    let w = expected_decoder_ntk(&u).unwrap();
    let m = w.matrix();
    for i in 0..n {
        for j in 0..n {
            assert!((m[(i, j)] - m[(0, (j + n - i) % n)]).abs() <= 1e-12);
        }
    }
    let shift = Matrix::from_fn(n, n, |i, j| if j == (i + 1) % n { 1.0 } else { 0.0 });
    assert!(shift.matmul(m).max_abs_diff(&m.matmul(&shift)) <= 1e-10);
    for f in 0..n {
        let mode: Vec<Complex<f64>> = (0..n)
            .map(|j| Complex::from_polar(1.0 / (n as f64).sqrt(), 2.0 * std::f64::consts::PI * (f * j) as f64 / n as f64))
            .collect();
        let re: Vec<f64> = mode.iter().map(|c| c.re).collect();
        let im: Vec<f64> = mode.iter().map(|c| c.im).collect();
        let (wr, wi) = (m.matvec(&re), m.matvec(&im));
        let lam: f64 = (0..n).map(|j| re[j] * wr[j] + im[j] * wi[j]).sum();
        let resid: f64 = (0..n).map(|j| (wr[j] - lam * re[j]).powi(2) + (wi[j] - lam * im[j]).powi(2)).sum::<f64>().sqrt();
        assert!(resid <= 1e-10, "mode {f}: {resid:e}");
    }
}

#[test]
fn identity_u_has_diagonal_kernel() {
    let w = expected_decoder_ntk(&Matrix::<f64>::identity(6)).unwrap();
    assert!(w.matrix().max_abs_diff(&Matrix::identity(6).scale(0.5)) < 1e-15);
    let mc = monte_carlo_decoder_ntk(&Matrix::<f64>::identity(6), 8, 3, &mut RngStream::new(0, 0)).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            if i != j {
                assert_eq!(mc.matrix()[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn monte_carlo_matches_closed_form() {
    let mut rng = RngStream::new(6, 0);
    let u = Matrix::circulant(&circulant_filter(8, 3, &mut rng));
    let mc = monte_carlo_decoder_ntk(&u, 64, 2000, &mut rng).unwrap();
    let cf = expected_decoder_ntk(&u).unwrap();
    let dev = mc.matrix().max_abs_diff(cf.matrix());
    assert!(dev <= 0.02, "max deviation {dev}");
}

#[test]
fn averaged_empirical_decoder_kernel_matches_closed_form() {
    let (n, k) = (16, 64);
    let mut rng = RngStream::new(7, 0);
    let filter = circulant_filter(n, 4, &mut rng);
    let base = Generator::<f64>::decoder_with_filter(filter, k).unwrap();
    let ones = Signal::from_real(&vec![1.0; n]);
    let mut acc = Matrix::zeros(n, n);
    let inits = 500;
    for _ in 0..inits {
        let net = base.clone().init_weights(1.0, &mut rng).unwrap();
        acc = acc.add(empirical_ntk(&net, &ones).unwrap().matrix());
    }
    let avg = acc.scale(1.0 / inits as f64);
    let cf = expected_decoder_ntk(base.convolution().unwrap()).unwrap();
    let dev = avg.max_abs_diff(cf.matrix());
    assert!(dev <= 0.14, "max deviation {dev}");
}

#[test]
fn haar_conjugated_kernels_are_not_fourier_coherent() {
    let q = 64;
    let mut rng = RngStream::new(8, 0);
    let lam: Vec<f64> = (0..q).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let mut total = 0.0;
    for _ in 0..100 {
        let o: Matrix<f64> = random_orthogonal(q, &mut rng);
        let w = o.matmul(&Matrix::from_diag(&lam)).matmul(&o.transpose()).symmetrized();
        total += fourier_coherence(&Kernel::new(w).unwrap()).unwrap();
    }
    let mean = total / 100.0;
    assert!(mean <= 0.2, "mean Haar coherence {mean}");
}

#[test]
fn decoder_kernel_more_fourier_coherent_than_conv() {
    let q = 64;
    let mut rng = RngStream::new(9, 0);
    let u = Matrix::circulant(&circulant_filter(q, 5, &mut rng));
    let dec = fourier_coherence(&expected_decoder_ntk(&u).unwrap()).unwrap();
    assert!(dec >= 0.99, "decoder coherence {dec}");
    let conv = Generator::<f64>::conv_upsampling(q, 16).unwrap().init_weights(0.1, &mut rng).unwrap();
    let z = Signal::new(&rng.normals(q / 8, 1.0), &rng.normals(q / 8, 1.0)).unwrap();
    let w = real_block(&empirical_ntk(&conv, &z).unwrap(), q).unwrap();
    let c = fourier_coherence(&w).unwrap();
    assert!(c < dec, "conv coherence {c} vs decoder {dec}");
}

#[test]
fn kernel_csv_has_one_line_per_row() {
    let w = Kernel::new(Matrix::<f64>::identity(3)).unwrap();
    let mut buf = Vec::new();
    w.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("1e0,0e0,0e0"));
}

#[test]
fn coherence_of_single_fourier_mode() {
    let q = 16;
    let mode: Vec<f64> = (0..q).map(|j| (2.0 * std::f64::consts::PI * 3.0 * j as f64 / q as f64).cos()).collect();
    let n: f64 = mode.iter().map(|v| v * v).sum::<f64>().sqrt();
    let v: Vec<f64> = mode.iter().map(|x| x / n).collect();
    let spec = fft::fft(&Signal::from_real(&v)).unwrap();
    assert!((spec.get(3).norm_sqr() + spec.get(13).norm_sqr() - 1.0).abs() < 1e-12);
}
