//! Point-scattering forward model for a monostatic circular array.
//!
//! Every nonzero pixel is a point scatterer at its pixel center (plus an
//! optional common offset). Each transducer records the sum of pulse copies
//! delayed by the two-way travel time and weighted by the scatterer amplitude.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ArrayGeometry, Point2, Point3, RealGrid};
use crate::waveform::{RealSignal, SampledSignal, WaveformSpec};

const RECORD_MARGIN: f64 = 0.1;

/// Two-way travel time between a transducer and a scene-plane point.
pub fn time_of_flight(transducer: Point3, point: Point2, sound_speed: f64) -> f64 {
    let dx = transducer[0] - point[0];
    let dy = transducer[1] - point[1];
    let dz = transducer[2];
    2.0 * (dx * dx + dy * dy + dz * dz).sqrt() / sound_speed
}

/// Received records, one per transducer, all starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub geom: ArrayGeometry,
    pub spec: WaveformSpec,
    pub signals: Vec<RealSignal>,
    /// Record length in seconds.
    pub record_window: f64,
}

impl MeasurementSet {
    pub fn record_len(&self) -> usize {
        self.signals.first().map_or(0, |s| s.len())
    }

    pub fn validate(&self) -> Result<()> {
        self.geom.validate()?;
        self.spec.validate()?;
        if self.signals.len() != self.geom.num_transducers {
            return Err(Error::ShapeMismatch(format!(
                "{} records for {} transducers",
                self.signals.len(),
                self.geom.num_transducers
            )));
        }
        let len = self.record_len();
        if len < 2 || self.signals.iter().any(|s| s.len() != len) {
            return Err(Error::ShapeMismatch("records must share a length >= 2".into()));
        }
        if self
            .signals
            .iter()
            .any(|s| s.sample_rate != self.spec.sample_rate)
        {
            return Err(Error::SampleRateMismatch(
                self.signals[0].sample_rate,
                self.spec.sample_rate,
            ));
        }
        if self.signals.iter().flat_map(|s| &s.samples).any(|v| !v.is_finite()) {
            return Err(Error::Domain("records contain non-finite samples".into()));
        }
        Ok(())
    }

    pub fn peak_abs(&self) -> f64 {
        self.signals
            .iter()
            .flat_map(|s| &s.samples)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Adds white Gaussian noise with standard deviation `level` times the
    /// largest absolute sample. Deterministic for a given seed.
    pub fn add_noise(&mut self, level: f64, seed: u64) -> Result<()> {
        if !(level >= 0.0 && level.is_finite()) {
            return Err(Error::Domain(format!("noise level {level} must be >= 0")));
        }
        if level == 0.0 {
            return Ok(());
        }
        let std = level * self.peak_abs();
        let normal = Normal::new(0.0, std).map_err(|e| Error::Domain(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &mut self.signals {
            for v in &mut s.samples {
                *v += normal.sample(&mut rng);
            }
        }
        Ok(())
    }
}

/// Longest two-way travel time from any transducer to any point of the scene
/// square shifted by `offset`.
pub fn max_scene_tof(geom: &ArrayGeometry, offset: Point2) -> f64 {
    let h = 0.5 * geom.scene_extent;
    let corners = [[-h, -h], [h, -h], [-h, h], [h, h]];
    geom.transducer_positions()
        .iter()
        .flat_map(|&t| {
            corners
                .iter()
                .map(move |c| time_of_flight(t, [c[0] + offset[0], c[1] + offset[1]], geom.sound_speed))
        })
        .fold(0.0, f64::max)
}

/// Default record length: farthest echo plus pulse, with a 10% margin.
pub fn default_record_window(geom: &ArrayGeometry, spec: &WaveformSpec, offset: Point2) -> f64 {
    (max_scene_tof(geom, offset) + spec.duration) * (1.0 + RECORD_MARGIN)
}

/// Simulates the records for reflectivity map `sigma`, scatterers displaced by
/// `offset` from their pixel centers.
pub fn simulate(
    sigma: &RealGrid,
    geom: &ArrayGeometry,
    spec: &WaveformSpec,
    offset: Point2,
) -> Result<MeasurementSet> {
    simulate_with_window(sigma, geom, spec, offset, default_record_window(geom, spec, offset))
}

pub fn simulate_with_window(
    sigma: &RealGrid,
    geom: &ArrayGeometry,
    spec: &WaveformSpec,
    offset: Point2,
    record_window: f64,
) -> Result<MeasurementSet> {
    geom.validate()?;
    spec.validate()?;
    let n = geom.grid_size;
    if sigma.dims() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: (n, n),
            got: sigma.dims(),
        });
    }
    let spacing = geom.pixel_spacing();
    if offset[0].abs() >= spacing || offset[1].abs() >= spacing {
        return Err(Error::Domain(format!(
            "offset {offset:?} must be smaller than the pixel spacing {spacing}"
        )));
    }
    if sigma.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("scatterer map contains non-finite values".into()));
    }

    let scatterers: Vec<(Point2, f64)> = geom
        .pixel_centers()
        .into_iter()
        .zip(sigma.data())
        .filter(|(_, &a)| a != 0.0)
        .map(|(p, &a)| ([p[0] + offset[0], p[1] + offset[1]], a))
        .collect();

    let fs = spec.sample_rate;
    let len = (record_window * fs).ceil() as usize + 1;
    let support = spec.support();
    let positions = geom.transducer_positions();

    let signals = positions
        .par_iter()
        .map(|&tx| {
            let mut rec = vec![0.0; len];
            for &(p, amp) in &scatterers {
                let tof = time_of_flight(tx, p, geom.sound_speed);
                if tof + support > record_window {
                    return Err(Error::RecordWindowExceeded {
                        needed: tof + support,
                        window: record_window,
                    });
                }
                let first = (tof * fs).ceil() as usize;
                let last = (((tof + support) * fs).floor() as usize).min(len - 1);
                for (i, r) in rec.iter_mut().enumerate().take(last + 1).skip(first) {
                    *r += amp * spec.eval(i as f64 / fs - tof);
                }
            }
            Ok(SampledSignal::new(fs, 0.0, rec))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MeasurementSet {
        geom: *geom,
        spec: *spec,
        signals,
        record_window,
    })
}
