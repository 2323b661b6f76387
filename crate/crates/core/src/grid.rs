//! Scene grids and the circular array geometry.
//!
//! Grids are stored row-major with the row index increasing with `y` and the
//! column index increasing with `x`. Pixel centers span the scene extent
//! inclusively, so an odd grid has an exact center pixel at the origin.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scene-plane coordinate `(x, y)` in meters.
pub type Point2 = [f64; 2];
/// Transducer position `(x, y, z)` in meters.
pub type Point3 = [f64; 3];

/// Real-valued image, e.g. a scatterer distribution or network output.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RealGrid {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width} grid",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// True when every value lies in `[0, 1]`, as required of a reflectivity map.
    pub fn is_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn to_complex(&self) -> ComplexGrid {
        ComplexGrid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// Complex-valued image: beamformed scene, PSF or estimated reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width} grid",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("complex grid contains non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds a grid from interleaved `(re, im)` pairs.
    pub fn from_interleaved(height: usize, width: usize, pairs: &[f64]) -> Result<Self> {
        if pairs.len() != 2 * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} interleaved values for a {height}x{width} grid",
                pairs.len()
            )));
        }
        let data = pairs
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        Self::from_vec(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.width + col] = value;
    }

    pub fn magnitude(&self) -> RealGrid {
        RealGrid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|z| z.norm()).collect(),
        }
    }

    pub fn real_part(&self) -> RealGrid {
        RealGrid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|z| z.re).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for z in &mut self.data {
            *z *= factor;
        }
    }
}

/// Peak magnitude of a complex grid and where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridStats {
    pub max_magnitude: f64,
    /// First row-major `(row, col)` holding the peak.
    pub argmax: (usize, usize),
}

pub fn grid_stats(g: &ComplexGrid) -> Result<GridStats> {
    if g.data.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut best = 0;
    let mut best_mag = g.data[0].norm();
    for (i, z) in g.data.iter().enumerate().skip(1) {
        let m = z.norm();
        if m > best_mag {
            best_mag = m;
            best = i;
        }
    }
    Ok(GridStats {
        max_magnitude: best_mag,
        argmax: (best / g.width, best % g.width),
    })
}

/// Circular track of monostatic transducers around a square scene at `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayGeometry {
    pub num_transducers: usize,
    /// Track radius in meters.
    pub ring_radius: f64,
    /// Height of the track above the scene plane in meters.
    pub ring_height: f64,
    /// Side length of the square scene in meters.
    pub scene_extent: f64,
    /// Pixels per side.
    pub grid_size: usize,
    /// Meters per second.
    pub sound_speed: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self {
            num_transducers: 360,
            ring_radius: 0.85,
            ring_height: 0.2,
            scene_extent: 0.4,
            grid_size: 129,
            sound_speed: 343.0,
        }
    }
}

impl ArrayGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidGeometry(msg.to_string()));
        if self.num_transducers < 1 {
            return bad("num_transducers must be at least 1");
        }
        if !(self.ring_radius > 0.0 && self.ring_radius.is_finite()) {
            return bad("ring_radius must be positive");
        }
        if !self.ring_height.is_finite() {
            return bad("ring_height must be finite");
        }
        if !(self.scene_extent > 0.0 && self.scene_extent.is_finite()) {
            return bad("scene_extent must be positive");
        }
        if self.grid_size < 2 {
            return bad("grid_size must be at least 2");
        }
        if !(self.sound_speed > 0.0 && self.sound_speed.is_finite()) {
            return bad("sound_speed must be positive");
        }
        Ok(())
    }

    pub fn pixel_spacing(&self) -> f64 {
        self.scene_extent / (self.grid_size - 1) as f64
    }

    /// Coordinate of pixel index `i` along either axis.
    pub fn axis_coord(&self, i: usize) -> f64 {
        -0.5 * self.scene_extent + i as f64 * self.pixel_spacing()
    }

    /// The exact center pixel, if the grid size is odd.
    pub fn center_index(&self) -> Option<(usize, usize)> {
        (self.grid_size % 2 == 1).then(|| {
            let c = (self.grid_size - 1) / 2;
            (c, c)
        })
    }

    pub fn pixel_centers(&self) -> Vec<Point2> {
        let n = self.grid_size;
        let axis: Vec<f64> = (0..n).map(|i| self.axis_coord(i)).collect();
        let mut out = Vec::with_capacity(n * n);
        for &y in &axis {
            for &x in &axis {
                out.push([x, y]);
            }
        }
        out
    }

    pub fn transducer_position(&self, n: usize) -> Point3 {
        let theta = 2.0 * PI * n as f64 / self.num_transducers as f64;
        [
            self.ring_radius * theta.cos(),
            self.ring_radius * theta.sin(),
            self.ring_height,
        ]
    }

    pub fn transducer_positions(&self) -> Vec<Point3> {
        (0..self.num_transducers)
            .map(|n| self.transducer_position(n))
            .collect()
    }
}
