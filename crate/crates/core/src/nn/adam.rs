use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// lr0 / (1 + decay * epoch).
pub fn learning_rate<S: Scalar>(lr0: S, decay: S, epoch: usize) -> S {
    lr0 / (S::one() + decay * S::lit(epoch as f64))
}

/// Bias-corrected Adam moments for a list of parameter buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<S> {
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
    step: u64,
}

impl<S: Scalar> Adam<S> {
    pub fn new(beta1: S, beta2: S, eps: S) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<S>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<S>] {
        &self.second
    }

    /// One update with learning rate `lr`; the step index advances by one.
    pub fn step(&mut self, params: Vec<&mut [S]>, grads: Vec<&[S]>, lr: S) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(&grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::domain("parameter and gradient buffers do not line up"));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![S::zero(); p.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len() || self.first.iter().zip(&params).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::State("optimizer state belongs to a different network".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bias1 = S::one() - b1.powi(t);
        let bias2 = S::one() - b2.powi(t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (S::one() - b1) * g[i];
                v[i] = b2 * v[i] + (S::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut adam = Adam::new(0.9, 0.999, 1e-8);
        let mut p = vec![1.0, -2.0];
        adam.step(vec![&mut p], vec![&[3.0, 1.0]], 1e-3).unwrap();
        let after_first = p.clone();
        let m_before = adam.first_moments()[0].clone();
        adam.step(vec![&mut p], vec![&[0.0, 0.0]], 1e-3).unwrap();
        // Moments decay and the nonzero first moment still moves p.
        assert_relative_eq!(adam.first_moments()[0][0], 0.9 * m_before[0], max_relative = 1e-15);
        let mut fresh = Adam::new(0.9, 0.999, 1e-8);
        let mut q = vec![0.5];
        fresh.step(vec![&mut q], vec![&[0.0]], 1e-3).unwrap();
        assert_eq!(q, vec![0.5]);
        assert_ne!(p, after_first);
    }

    #[test]
    fn first_step_magnitude() {
        let mut adam = Adam::new(0.9, 0.999, 1e-8);
        let mut p = vec![0.0];
        adam.step(vec![&mut p], vec![&[3.0]], 1e-4).unwrap();
        assert_relative_eq!(p[0], -1e-4 * 3.0 / (3.0 + 1e-8), max_relative = 1e-12);
        assert_relative_eq!(p[0], -9.99999997e-5, max_relative = 1e-8);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut adam = Adam::new(0.9, 0.999, 1e-8);
        let mut p = vec![0.0, 0.0];
        let mut prev = p.clone();
        for _ in 0..5 {
            adam.step(vec![&mut p], vec![&[2.0, -0.5]], 1e-2).unwrap();
            assert!(p[0] < prev[0] && p[1] > prev[1]);
            prev = p.clone();
        }
        // Constant gradients give bias-corrected steps of exactly lr * g/|g| (up to eps).
        assert_relative_eq!(p[0], -5e-2, max_relative = 1e-6);
    }

    #[test]
    fn mismatched_buffers() {
        let mut adam = Adam::new(0.9, 0.999, 1e-8);
        let mut p = vec![0.0, 1.0];
        assert!(adam.step(vec![&mut p], vec![&[1.0]], 1e-3).is_err());
    }

    #[test]
    fn schedule_is_decreasing() {
        let mut prev = f64::INFINITY;
        for epoch in 0..50 {
            let lr = learning_rate(1e-4, 1e-7, epoch);
            assert!(lr < prev);
            prev = lr;
        }
        assert_eq!(learning_rate(1e-4, 1e-7, 0), 1e-4);
    }
}
