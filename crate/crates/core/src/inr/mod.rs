//! Coordinate network: random Fourier features feeding a four-layer MLP,
//! trained with Adam.

mod adam;
mod encoder;
mod linalg;
mod mlp;

pub use adam::AdamState;
pub use encoder::{normalized_grid_coords, FourierEncoder};
pub use mlp::{Dense, ForwardCache, Gradients, MlpState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::Point2;

/// Draws `B` from a standard normal and layer weights from
/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` with zero biases, all from one seed.
pub fn init_seeded(
    seed: u64,
    features: usize,
    hidden: usize,
    kappa: f64,
    learning_rate: f64,
) -> Result<(FourierEncoder, MlpState, AdamState)> {
    if features == 0 || hidden == 0 {
        return Err(Error::Domain("feature count and hidden width must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b: Vec<f64> = (0..2 * features).map(|_| rng.sample(StandardNormal)).collect();
    let encoder = FourierEncoder::new(b, kappa)?;

    let mut net = MlpState::zeros(2 * features, hidden);
    for layer in net.layers_mut() {
        let bound = 1.0 / (layer.fan_in as f64).sqrt();
        for w in &mut layer.w {
            *w = rng.random_range(-bound..bound);
        }
    }
    let adam = AdamState::new(&net.tensor_sizes(), learning_rate);
    Ok((encoder, net, adam))
}

/// Network output for each coordinate.
pub fn forward(coords: &[Point2], encoder: &FourierEncoder, net: &MlpState) -> Result<Vec<f64>> {
    if encoder.output_dim() != net.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "encoder emits {} features, network takes {}",
            encoder.output_dim(),
            net.input_dim()
        )));
    }
    let features = encoder.encode(coords);
    Ok(net.forward(&features)?.output().to_vec())
}
