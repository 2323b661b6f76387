//! Four fully connected layers, ReLU after the first three and a Sigmoid on
//! the scalar output, with a hand-written reverse pass.
//!
//! Rows are processed in fixed chunks. Chunk boundaries never depend on the
//! thread count and partial gradients are summed in chunk order, so results
//! are bit-identical however many workers run.

use rayon::prelude::*;

use super::linalg::{gemm_nn, gemm_nt, gemm_tn};
use crate::error::{Error, Result};

const ROW_CHUNK: usize = 256;

/// Weights `w` are `fan_in x fan_out` row-major; `y = x w + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub fan_in: usize,
    pub fan_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            w: vec![0.0; fan_in * fan_out],
            b: vec![0.0; fan_out],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpState {
    layers: Vec<Dense>,
}

/// Activations kept from [`MlpState::forward`] for the reverse pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    rows: usize,
    /// Post-ReLU outputs of layers 1-3.
    hidden: [Vec<f64>; 3],
    /// Sigmoid outputs.
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// Parameter gradients laid out like [`MlpState::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn as_slices(&self) -> Vec<&[f64]> {
        self.tensors.iter().map(Vec::as_slice).collect()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl MlpState {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.len() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "expected 4 layers, got {}",
                layers.len()
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.w.len() != l.fan_in * l.fan_out || l.b.len() != l.fan_out {
                return Err(Error::ShapeMismatch(format!("layer {i} storage does not match its shape")));
            }
            if i > 0 && layers[i - 1].fan_out != l.fan_in {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} takes {} inputs but layer {} emits {}",
                    l.fan_in,
                    i - 1,
                    layers[i - 1].fan_out
                )));
            }
            if l.w.iter().chain(&l.b).any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("layer {i} has non-finite parameters")));
            }
        }
        if layers[3].fan_out != 1 {
            return Err(Error::ShapeMismatch("last layer must emit one value".into()));
        }
        if layers[0].fan_in == 0 || layers[0].fan_out == 0 {
            return Err(Error::ShapeMismatch("layers must be non-empty".into()));
        }
        Ok(Self { layers })
    }

    /// All-zero network for `input_dim` inputs and `hidden` units per layer.
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            layers: vec![
                Dense::zeros(input_dim, hidden),
                Dense::zeros(hidden, hidden),
                Dense::zeros(hidden, hidden),
                Dense::zeros(hidden, 1),
            ],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].fan_out
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// Parameter tensors in the order `w1, b1, w2, b2, w3, b3, w4, b4`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.as_slice(), l.b.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.w.as_mut_slice(), l.b.as_mut_slice()])
            .collect()
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensor_sizes().iter().sum()
    }

    fn check_input(&self, features: &[f64]) -> Result<usize> {
        let d = self.input_dim();
        if features.len() % d != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} feature values are not a multiple of the input width {d}",
                features.len()
            )));
        }
        Ok(features.len() / d)
    }

    /// Evaluates the network on `rows x input_dim` features.
    pub fn forward(&self, features: &[f64]) -> Result<ForwardCache> {
        let rows = self.check_input(features)?;
        let h = self.hidden();
        let d = self.input_dim();
        let mut hidden = [vec![0.0; rows * h], vec![0.0; rows * h], vec![0.0; rows * h]];
        let mut output = vec![0.0; rows];
        {
            let [h1, h2, h3] = &mut hidden;
            h1.par_chunks_mut(ROW_CHUNK * h)
                .zip(h2.par_chunks_mut(ROW_CHUNK * h))
                .zip(h3.par_chunks_mut(ROW_CHUNK * h))
                .zip(output.par_chunks_mut(ROW_CHUNK))
                .zip(features.par_chunks(ROW_CHUNK * d))
                .for_each(|((((a1, a2), a3), out), x)| {
                    let n = out.len();
                    self.dense_relu(0, n, x, a1);
                    self.dense_relu(1, n, a1, a2);
                    self.dense_relu(2, n, a2, a3);
                    let last = &self.layers[3];
                    for v in out.iter_mut() {
                        *v = last.b[0];
                    }
                    gemm_nn(n, h, 1, a3, &last.w, 1.0, out);
                    for v in out.iter_mut() {
                        *v = sigmoid(*v);
                    }
                });
        }
        Ok(ForwardCache {
            rows,
            hidden,
            output,
        })
    }

    fn dense_relu(&self, layer: usize, rows: usize, x: &[f64], out: &mut [f64]) {
        let l = &self.layers[layer];
        for row in out.chunks_exact_mut(l.fan_out) {
            row.copy_from_slice(&l.b);
        }
        gemm_nn(rows, l.fan_in, l.fan_out, x, &l.w, 1.0, out);
        for v in out.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    /// Gradients of a scalar loss given `d loss / d output` per row.
    pub fn backward(&self, features: &[f64], cache: &ForwardCache, output_grad: &[f64]) -> Result<Gradients> {
        let rows = self.check_input(features)?;
        let h = self.hidden();
        if rows != cache.rows || output_grad.len() != rows || cache.hidden.iter().any(|a| a.len() != rows * h) {
            return Err(Error::ShapeMismatch(format!(
                "backward over {rows} rows with a cache of {} rows and {} output gradients",
                cache.rows,
                output_grad.len()
            )));
        }
        let d = self.input_dim();
        let chunks = rows.div_ceil(ROW_CHUNK);
        let partials: Vec<Gradients> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let r0 = c * ROW_CHUNK;
                let r1 = (r0 + ROW_CHUNK).min(rows);
                self.backward_chunk(
                    r1 - r0,
                    &features[r0 * d..r1 * d],
                    [
                        &cache.hidden[0][r0 * h..r1 * h],
                        &cache.hidden[1][r0 * h..r1 * h],
                        &cache.hidden[2][r0 * h..r1 * h],
                    ],
                    &cache.output[r0..r1],
                    &output_grad[r0..r1],
                )
            })
            .collect();
        let mut iter = partials.into_iter();
        let mut total = iter.next().unwrap_or_else(|| Gradients {
            tensors: self.tensor_sizes().into_iter().map(|n| vec![0.0; n]).collect(),
        });
        for p in iter {
            for (t, q) in total.tensors.iter_mut().zip(p.tensors) {
                for (a, b) in t.iter_mut().zip(q) {
                    *a += b;
                }
            }
        }
        Ok(total)
    }

    fn backward_chunk(
        &self,
        n: usize,
        x: &[f64],
        acts: [&[f64]; 3],
        out: &[f64],
        dout: &[f64],
    ) -> Gradients {
        let h = self.hidden();
        let d = self.input_dim();
        let mut tensors: Vec<Vec<f64>> = self.tensor_sizes().into_iter().map(|s| vec![0.0; s]).collect();

        // sigmoid
        let dz4: Vec<f64> = out.iter().zip(dout).map(|(y, g)| g * y * (1.0 - y)).collect();
        gemm_tn(n, h, 1, acts[2], &dz4, 0.0, &mut tensors[6]);
        tensors[7][0] = dz4.iter().sum();

        let mut dz = vec![0.0; n * h];
        gemm_nt(n, 1, h, &dz4, &self.layers[3].w, 0.0, &mut dz);
        for layer in (0..3).rev() {
            // ReLU gate; the subgradient at zero is zero
            for (g, a) in dz.iter_mut().zip(acts[layer]) {
                if *a <= 0.0 {
                    *g = 0.0;
                }
            }
            let input = if layer == 0 { x } else { acts[layer - 1] };
            let fan_in = if layer == 0 { d } else { h };
            gemm_tn(n, fan_in, h, input, &dz, 0.0, &mut tensors[2 * layer]);
            let db = &mut tensors[2 * layer + 1];
            for row in dz.chunks_exact(h) {
                for (b, g) in db.iter_mut().zip(row) {
                    *b += g;
                }
            }
            if layer > 0 {
                let mut prev = vec![0.0; n * h];
                gemm_nt(n, h, h, &dz, &self.layers[layer].w, 0.0, &mut prev);
                dz = prev;
            }
        }
        Gradients { tensors }
    }
}
