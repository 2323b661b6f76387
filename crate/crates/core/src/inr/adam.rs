//! Bias-corrected Adam over a list of parameter tensors.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    /// First moments, one vector per parameter tensor.
    pub m: Vec<Vec<f64>>,
    /// Second moments.
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[usize], learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn shapes(&self) -> Vec<usize> {
        self.m.iter().map(Vec::len).collect()
    }

    /// One update of `params` with `grads`; tensors are matched by position.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {i}: moments hold {}, params {}, grads {}",
                    self.m[i].len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = AdamState::new(&[3], 1e-4);
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.3, -7.0, 1e-3];
        s.step(&mut [&mut p[..]], &[&g[..]]).unwrap();
        let expect = [1.0 - 1e-4, -2.0 + 1e-4, 0.5 - 1e-4];
        for (a, b) in p.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_never_moves() {
        let mut s = AdamState::new(&[2], 0.1);
        let mut p = vec![0.25, -4.0];
        for _ in 0..50 {
            s.step(&mut [&mut p[..]], &[&[0.0, 0.0][..]]).unwrap();
        }
        assert_eq!(p, vec![0.25, -4.0]);
    }

    #[test]
    fn minimizes_a_parabola() {
        let mut s = AdamState::new(&[1], 0.1);
        let mut x = vec![1.0];
        let mut reached = None;
        for k in 1..=200 {
            let g = vec![2.0 * x[0]];
            s.step(&mut [&mut x[..]], &[&g[..]]).unwrap();
            if x[0].abs() < 0.01 && reached.is_none() {
                reached = Some(k);
            }
        }
        assert!(reached.is_some(), "final x = {}", x[0]);
    }

    #[test]
    fn plain_sign_descent_limit() {
        let mut s = AdamState::new(&[4], 0.01);
        s.beta1 = 0.0;
        s.beta2 = 0.0;
        s.epsilon = 1e6;
        let mut p = vec![0.0; 4];
        let g = vec![1.5, -0.2, 3.0, -9.0];
        s.step(&mut [&mut p[..]], &[&g[..]]).unwrap();
        for (d, gj) in p.iter().zip(&g) {
            assert_eq!(d.signum(), -gj.signum());
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(&[2], 0.1);
        let mut p = vec![0.0; 3];
        assert!(s.step(&mut [&mut p[..]], &[&[0.0; 3][..]]).is_err());
        assert!(s.step(&mut [], &[]).is_err());
    }
}
