use crate::numerics::Scalar;

/// Bias-corrected Adam state for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize, lr: T) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        assert_eq!(params.len(), self.m.len(), "adam parameter length");
        assert_eq!(grad.len(), self.m.len(), "adam gradient length");
        self.step += 1;
        let t = self.step as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Plain gradient descent: `p ← p − lr·g`.
pub fn gd_step<T: Scalar>(params: &mut [T], grad: &[T], lr: T) {
    for (p, &g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 3.0];
        s.step(&mut p, &[0.0; 3]);
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [1e-3f64, -5.0, 42.0] {
            let mut s = AdamState::new(1, 0.01);
            let mut p = vec![0.0];
            s.step(&mut p, &[g]);
            let expected = -0.01 * g.signum() / (1.0 + 1e-8 / g.abs());
            assert!((p[0] - expected).abs() < 1e-15, "g = {g}");
        }
    }

    /// Independent Adam reference, written from the textbook recurrences.
    fn reference_adam_on_square(p0: f64, lr: f64, steps: usize) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        let (mut p, mut m, mut v) = (p0, 0.0f64, 0.0f64);
        for t in 1..=steps {
            let g = 2.0 * p;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            p -= lr * mh / (vh.sqrt() + eps);
        }
        p
    }

    #[test]
    fn ten_steps_on_square_match_reference() {
        let mut s = AdamState::new(1, 0.1);
        let mut p = vec![1.0];
        for _ in 0..10 {
            let g = [2.0 * p[0]];
            s.step(&mut p, &g);
        }
        assert!((p[0] - reference_adam_on_square(1.0, 0.1, 10)).abs() < 1e-12);
    }

    #[test]
    fn gd_step_is_axpy() {
        let mut p = vec![1.0, 1.0];
        gd_step(&mut p, &[2.0, -4.0], 0.5);
        assert_eq!(p, vec![0.0, 3.0]);
    }
}
