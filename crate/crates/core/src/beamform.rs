//! Replica correlation of every record and time-domain delay-and-sum
//! backprojection onto the scene grid.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grid_stats, ArrayGeometry, ComplexGrid};
use crate::sim::{time_of_flight, MeasurementSet};
use crate::waveform::{make_lfm, ComplexSignal, ReplicaCorrelator};

/// How the delayed sample is looked up between time samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamformOptions {
    pub interpolation: Interpolation,
    /// Band-limited upsampling of the matched-filter output before lookup.
    pub upsample: usize,
}

impl Default for BeamformOptions {
    fn default() -> Self {
        Self {
            interpolation: Interpolation::Linear,
            upsample: 4,
        }
    }
}

/// Replica-correlates every record with the transmitted pulse.
pub fn matched_filter_all(m: &MeasurementSet) -> Result<Vec<ComplexSignal>> {
    matched_filter_all_upsampled(m, 1)
}

pub fn matched_filter_all_upsampled(m: &MeasurementSet, factor: usize) -> Result<Vec<ComplexSignal>> {
    m.validate()?;
    let tx = make_lfm(&m.spec)?;
    let corr = ReplicaCorrelator::with_upsampling(&tx, m.record_len(), factor)?;
    m.signals.par_iter().map(|s| corr.correlate(s)).collect()
}

/// Delay-and-sum: each pixel sums, over transducers in index order, the
/// filtered sample at that pixel's two-way travel time. Not normalized.
pub fn backproject(
    filtered: &[ComplexSignal],
    geom: &ArrayGeometry,
    interpolation: Interpolation,
) -> Result<ComplexGrid> {
    geom.validate()?;
    if filtered.len() != geom.num_transducers {
        return Err(Error::ShapeMismatch(format!(
            "{} filtered signals for {} transducers",
            filtered.len(),
            geom.num_transducers
        )));
    }
    let n = geom.grid_size;
    let positions = geom.transducer_positions();
    let axis: Vec<f64> = (0..n).map(|i| geom.axis_coord(i)).collect();
    let zero = Complex64::new(0.0, 0.0);

    let data: Vec<Complex64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|row| {
            let y = axis[row];
            let positions = &positions;
            axis.iter().map(move |&x| {
                let mut acc = zero;
                for (s, &tx) in filtered.iter().zip(positions) {
                    let t = time_of_flight(tx, [x, y], geom.sound_speed);
                    acc += sample_at(s, t, interpolation);
                }
                acc
            })
        })
        .collect();
    ComplexGrid::from_vec(n, n, data)
}

fn sample_at(s: &ComplexSignal, t: f64, interpolation: Interpolation) -> Complex64 {
    let zero = Complex64::new(0.0, 0.0);
    let pos = (t - s.start_time) * s.sample_rate;
    if !(pos >= 0.0) {
        return zero;
    }
    let last = s.samples.len() - 1;
    match interpolation {
        Interpolation::Nearest => {
            let i = pos.round() as usize;
            if i > last {
                zero
            } else {
                s.samples[i]
            }
        }
        Interpolation::Linear => {
            let i0 = pos.floor() as usize;
            if i0 > last {
                return zero;
            }
            let frac = pos - i0 as f64;
            if i0 == last {
                return if frac == 0.0 { s.samples[last] } else { zero };
            }
            s.samples[i0] * (1.0 - frac) + s.samples[i0 + 1] * frac
        }
    }
}

/// Divides every pixel by the peak magnitude; phases are unchanged.
pub fn normalize_peak(g: &ComplexGrid) -> Result<ComplexGrid> {
    let stats = grid_stats(g)?;
    if stats.max_magnitude == 0.0 {
        return Err(Error::ZeroGrid);
    }
    let mut out = g.clone();
    out.scale(1.0 / stats.max_magnitude);
    Ok(out)
}

/// Matched filter followed by backprojection.
pub fn beamform(m: &MeasurementSet, opts: &BeamformOptions) -> Result<ComplexGrid> {
    let filtered = matched_filter_all_upsampled(m, opts.upsample)?;
    backproject(&filtered, &m.geom, opts.interpolation)
}
