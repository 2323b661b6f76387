//! File formats: grids, measurement sets, checkpoints, PNG and run configs.

mod bytes;
pub mod checkpoint;
pub mod config;
pub mod grid_file;
pub mod measurements;
pub mod png_io;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use config::{RunConfig, SimulationConfig};
pub use grid_file::{read_grid, write_complex_grid, write_real_grid, GridData};
pub use measurements::{read_measurements, write_measurements};
pub use png_io::{png_export, read_png_scene, write_panel};

use std::path::Path;

use crate::error::Result;
use crate::grid::RealGrid;

/// Loads a scatterer map from a grid file or, by extension, an 8-bit PNG.
pub fn read_scene(path: impl AsRef<Path>) -> Result<RealGrid> {
    let path = path.as_ref();
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        read_png_scene(path)
    } else {
        Ok(read_grid(path)?.into_real())
    }
}
