use ntkdip_core::generators::{ConvShape, Generator};
use ntkdip_core::numerics::{RngStream, Signal};
use proptest::prelude::*;

fn pairing(a: &Signal<f64>, b: &Signal<f64>) -> f64 {
    a.as_stacked().iter().zip(b.as_stacked()).map(|(x, y)| x * y).sum()
}

/// `max_i |g_i − fd_i| / max_i |fd_i|`, central differences with step `h`.
fn weight_fd_error(net: &Generator<f64>, input: &Signal<f64>, cot: &Signal<f64>, h: f64) -> f64 {
    let g = net.backward(input, cot, false).unwrap().weights;
    let mut probe = net.clone();
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for i in 0..g.len() {
        let w0 = net.weights()[i];
        probe.weights_mut()[i] = w0 + h;
        let up = pairing(cot, &probe.forward(input).unwrap());
        probe.weights_mut()[i] = w0 - h;
        let down = pairing(cot, &probe.forward(input).unwrap());
        probe.weights_mut()[i] = w0;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((g[i] - fd).abs());
        scale = scale.max(fd.abs());
    }
    worst / scale.max(1e-300)
}

fn input_fd_error(net: &Generator<f64>, input: &Signal<f64>, cot: &Signal<f64>, h: f64) -> f64 {
    let g = net.backward(input, cot, true).unwrap().input.unwrap();
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    let channels = net.input_channels();
    for i in 0..input.len() * channels {
        let mut p = input.clone();
        p.as_stacked_mut()[i] += h;
        let up = pairing(cot, &net.forward(&p).unwrap());
        p.as_stacked_mut()[i] -= 2.0 * h;
        let down = pairing(cot, &net.forward(&p).unwrap());
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((g.as_stacked()[i] - fd).abs());
        scale = scale.max(fd.abs());
    }
    worst / scale.max(1e-300)
}

fn random_signal(n: usize, rng: &mut RngStream) -> Signal<f64> {
    Signal::new(&rng.normals(n, 1.0), &rng.normals(n, 1.0)).unwrap()
}

#[test]
fn decoder_gradient_matches_finite_differences() {
    let mut rng = RngStream::new(100, 0);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let net = Generator::decoder(8, 8, 3, &mut rng).unwrap().init_weights(1.0, &mut rng).unwrap();
        let input = Signal::from_real(&rng.normals(8, 1.0));
        let cot = random_signal(8, &mut rng);
        worst = worst.max(weight_fd_error(&net, &input, &cot, 1e-5));
        worst = worst.max(input_fd_error(&net, &input, &cot, 1e-5));
    }
    assert!(worst <= 1e-6, "decoder finite-difference error {worst:e}");
}

#[test]
fn conv_gradient_matches_finite_differences() {
    let mut rng = RngStream::new(101, 0);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let shape = ConvShape {
            in_len: 4,
            hidden: 3,
            kernel: 3,
            upsample: vec![true, trial % 2 == 0, true],
        };
        let net = Generator::conv(shape).unwrap().init_weights(0.5, &mut rng).unwrap();
        let input = random_signal(4, &mut rng);
        let cot = random_signal(net.output_len(), &mut rng);
        worst = worst.max(weight_fd_error(&net, &input, &cot, 1e-6));
        worst = worst.max(input_fd_error(&net, &input, &cot, 1e-6));
    }
    assert!(worst <= 1e-5, "conv finite-difference error {worst:e}");
}

/// Straight-line forward pass of the upsampling conv generator, written without the crate's layer code.
fn conv_oracle(w: &[f64], hidden: usize, re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = 3;
    let mut chans: Vec<Vec<f64>> = vec![re.to_vec(), im.to_vec()];
    let mut at = 0;
    for _block in 0..3 {
        let up: Vec<Vec<f64>> = chans.iter().map(|c| c.iter().flat_map(|&v| [v, v]).collect()).collect();
        let len = up[0].len();
        let cin = up.len();
        let weights = &w[at..at + hidden * cin * k];
        let bias = &w[at + hidden * cin * k..at + hidden * cin * k + hidden];
        at += hidden * cin * k + hidden;
        let mut next = vec![vec![0.0; len]; hidden];
        for o in 0..hidden {
            for i in 0..len {
                let mut s = bias[o];
                for c in 0..cin {
                    for t in 0..k {
                        let src = i as isize + t as isize - 1;
                        if src >= 0 && (src as usize) < len {
                            s += weights[(o * cin + c) * k + t] * up[c][src as usize];
                        }
                    }
                }
                next[o][i] = if s > 0.0 { s } else { 0.0 };
            }
        }
        chans = next;
    }
    let head = &w[at..at + 2 * hidden];
    let hb = &w[at + 2 * hidden..at + 2 * hidden + 2];
    let len = chans[0].len();
    let out = |r: usize| -> Vec<f64> {
        (0..len)
            .map(|i| hb[r] + (0..hidden).map(|c| head[r * hidden + c] * chans[c][i]).sum::<f64>())
            .collect()
    };
    (out(0), out(1))
}

#[test]
fn conv_golden_vector() {
    let hidden = 4;
    let net = Generator::<f64>::conv_upsampling(64, hidden)
        .unwrap()
        .init_weights(0.1, &mut RngStream::new(7, 0))
        .unwrap();
    let ones = vec![1.0; 8];
    let out = net.forward(&Signal::new(&ones, &ones).unwrap()).unwrap();
    let (re, im) = conv_oracle(net.weights(), hidden, &ones, &ones);
    for i in 0..64 {
        assert!((out.re()[i] - re[i]).abs() <= 1e-12 * (1.0 + re[i].abs()), "re[{i}]");
        assert!((out.im()[i] - im[i]).abs() <= 1e-12 * (1.0 + im[i].abs()), "im[{i}]");
    }
    // Recorded from the oracle; guards against silent changes to init order.
    let golden = [(0, re[0]), (31, re[31]), (63, im[63])];
    let recorded = [0.27569869709443517, 0.26780584958457382, 0.07369010906608192];
    for ((i, v), r) in golden.iter().zip(recorded) {
        assert!((v - r).abs() <= 1e-12, "golden entry {i}: {v:.17}");
    }
}

#[test]
fn init_variance_within_chi_square_band() {
    let net = Generator::<f64>::decoder(100, 100, 5, &mut RngStream::new(1, 0))
        .unwrap()
        .init_weights(1.0, &mut RngStream::new(2, 0))
        .unwrap();
    let w = net.weights();
    assert_eq!(w.len(), 10_000);
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
    assert!((0.94..=1.06).contains(&var), "sample variance {var}");
}

#[test]
fn forward_and_backward_are_bit_identical() {
    let mut rng = RngStream::new(9, 0);
    let net = Generator::<f64>::conv_upsampling(32, 8).unwrap().init_weights(0.2, &mut rng).unwrap();
    let input = random_signal(4, &mut rng);
    let cot = random_signal(32, &mut rng);
    let a = net.backward(&input, &cot, true).unwrap();
    let b = net.backward(&input, &cot, true).unwrap();
    assert_eq!(a, b);
    assert_eq!(net.forward(&input).unwrap(), net.forward(&input).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decoder_positive_homogeneity(seed in 0u64..1000, alpha in 0.0f64..10.0) {
        let mut rng = RngStream::new(seed, 0);
        let net = Generator::decoder(8, 6, 3, &mut rng).unwrap().init_weights(1.0, &mut rng).unwrap();
        let z = Signal::from_real(&rng.normals(8, 1.0));
        let f = net.forward(&z).unwrap();
        let g = net.forward(&z.scale(alpha)).unwrap();
        prop_assert!(g.max_abs_diff(&f.scale(alpha)) <= 1e-12 * (1.0 + alpha) * (1.0 + f.norm()));
    }

    #[test]
    fn backward_is_linear_in_cotangent(seed in 0u64..1000, s in -3.0f64..3.0) {
        let mut rng = RngStream::new(seed, 1);
        let net = Generator::<f64>::conv_upsampling(16, 3).unwrap().init_weights(0.3, &mut rng).unwrap();
        let input = random_signal(2, &mut rng);
        let c1 = random_signal(16, &mut rng);
        let c2 = random_signal(16, &mut rng);
        let lhs = net.backward(&input, &c1.add(&c2.scale(s)), false).unwrap().weights;
        let g1 = net.backward(&input, &c1, false).unwrap().weights;
        let g2 = net.backward(&input, &c2, false).unwrap().weights;
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - g1[i] - s * g2[i]).abs() <= 1e-10 * (1.0 + g1[i].abs() + g2[i].abs()));
        }
    }
}
