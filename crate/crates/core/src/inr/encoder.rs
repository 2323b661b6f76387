use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::Point2;

/// Random Fourier feature map `v -> [cos(2 pi kappa B v), sin(2 pi kappa B v)]`.
///
/// `B` is an `m x 2` Gaussian matrix drawn once and never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEncoder {
    b_matrix: Vec<f64>,
    kappa: f64,
}

impl FourierEncoder {
    pub fn new(b_matrix: Vec<f64>, kappa: f64) -> Result<Self> {
        if b_matrix.is_empty() || b_matrix.len() % 2 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "B must be m x 2, got {} values",
                b_matrix.len()
            )));
        }
        if !kappa.is_finite() || b_matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("encoder parameters must be finite".into()));
        }
        Ok(Self { b_matrix, kappa })
    }

    /// Number of frequencies `m`.
    pub fn features(&self) -> usize {
        self.b_matrix.len() / 2
    }

    /// Width of an encoded row, `2m`.
    pub fn output_dim(&self) -> usize {
        self.b_matrix.len()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn b_matrix(&self) -> &[f64] {
        &self.b_matrix
    }

    pub fn with_kappa(&self, kappa: f64) -> Self {
        Self {
            b_matrix: self.b_matrix.clone(),
            kappa,
        }
    }

    /// Row-major `coords.len() x 2m` feature matrix, cosine block first.
    pub fn encode(&self, coords: &[Point2]) -> Vec<f64> {
        let m = self.features();
        let mut out = vec![0.0; coords.len() * 2 * m];
        for (row, v) in out.chunks_exact_mut(2 * m).zip(coords) {
            let (cos, sin) = row.split_at_mut(m);
            for j in 0..m {
                let phase = 2.0 * PI * self.kappa
                    * (self.b_matrix[2 * j] * v[0] + self.b_matrix[2 * j + 1] * v[1]);
                let (s, c) = phase.sin_cos();
                cos[j] = c;
                sin[j] = s;
            }
        }
        out
    }
}

/// Pixel centers of an `n x n` grid mapped to `[-0.5, 0.5]^2`, row-major.
pub fn normalized_grid_coords(n: usize) -> Vec<Point2> {
    let axis: Vec<f64> = (0..n)
        .map(|i| if n > 1 { i as f64 / (n - 1) as f64 - 0.5 } else { 0.0 })
        .collect();
    let mut out = Vec::with_capacity(n * n);
    for &y in &axis {
        for &x in &axis {
            out.push([x, y]);
        }
    }
    out
}
