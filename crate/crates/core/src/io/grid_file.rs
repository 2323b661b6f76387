//! `SASG` grid files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SASG"
//! 4       2     version (u16 LE, currently 1)
//! 6       1     kind: 0 = real, 1 = complex
//! 7       4     height (u32 LE)
//! 11      4     width (u32 LE)
//! 15      ...   f64 LE payload, row-major, (re, im) interleaved when complex
//! ```

use std::path::Path;

use num_complex::Complex64;

use super::bytes::{read_file, to_u32, write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, RealGrid};

pub const GRID_MAGIC: &[u8; 4] = b"SASG";
pub const GRID_VERSION: u16 = 1;
pub const GRID_HEADER_LEN: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub enum GridData {
    Real(RealGrid),
    Complex(ComplexGrid),
}

impl GridData {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            GridData::Real(g) => g.dims(),
            GridData::Complex(g) => g.dims(),
        }
    }

    pub fn into_complex(self) -> ComplexGrid {
        match self {
            GridData::Real(g) => g.to_complex(),
            GridData::Complex(g) => g,
        }
    }

    /// Real grids as-is, complex grids by magnitude.
    pub fn into_real(self) -> RealGrid {
        match self {
            GridData::Real(g) => g,
            GridData::Complex(g) => g.magnitude(),
        }
    }
}

fn header(w: &mut Writer, kind: u8, h: usize, wd: usize, path: &Path) -> Result<()> {
    w.bytes(GRID_MAGIC);
    w.u16(GRID_VERSION);
    w.u8(kind);
    w.u32(to_u32(h, path, "height")?);
    w.u32(to_u32(wd, path, "width")?);
    Ok(())
}

pub fn encode_real(g: &RealGrid) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    header(&mut w, 0, g.height(), g.width(), Path::new("<memory>"))?;
    w.f64s(g.data());
    Ok(w.buf)
}

pub fn encode_complex(g: &ComplexGrid) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    header(&mut w, 1, g.height(), g.width(), Path::new("<memory>"))?;
    w.buf.reserve(16 * g.data().len());
    for z in g.data() {
        w.f64(z.re);
        w.f64(z.im);
    }
    Ok(w.buf)
}

pub fn decode_grid(bytes: &[u8], path: &Path) -> Result<GridData> {
    let mut r = Reader::new(bytes, path);
    r.magic(GRID_MAGIC)?;
    let version = r.u16()?;
    if version != GRID_VERSION {
        return Err(Error::format(path, format!("unsupported grid version {version}")));
    }
    let kind = r.u8()?;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let cells = h
        .checked_mul(w)
        .ok_or_else(|| Error::format(path, "grid size overflow"))?;
    let out = match kind {
        0 => GridData::Real(RealGrid::from_vec(h, w, r.f64s(cells)?)?),
        1 => {
            let vals = r.f64s(2 * cells)?;
            let data = vals.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
            GridData::Complex(
                ComplexGrid::from_vec(h, w, data).map_err(|e| Error::format(r.path(), e.to_string()))?,
            )
        }
        k => return Err(Error::format(path, format!("unknown grid kind {k}"))),
    };
    r.finish()?;
    Ok(out)
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<GridData> {
    let path = path.as_ref();
    decode_grid(&read_file(path)?, path)
}

pub fn write_real_grid(path: impl AsRef<Path>, g: &RealGrid) -> Result<()> {
    write_file(path.as_ref(), &encode_real(g)?)
}

pub fn write_complex_grid(path: impl AsRef<Path>, g: &ComplexGrid) -> Result<()> {
    write_file(path.as_ref(), &encode_complex(g)?)
}
