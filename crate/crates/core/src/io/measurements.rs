//! `SASM` measurement containers: geometry, waveform and raw records.
//!
//! ```text
//! "SASM" | version u16 | num_transducers u32 | ring_radius f64 | ring_height f64
//! | scene_extent f64 | grid_size u32 | sound_speed f64 | f_start f64 | f_stop f64
//! | duration f64 | sample_rate f64 | taper_fraction f64 | record_window f64
//! | num_records u32 | record_len u32 | start_time f64 | records (f64 LE, record-major)
//! ```

use std::path::Path;

use super::bytes::{read_file, to_u32, write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::grid::ArrayGeometry;
use crate::sim::MeasurementSet;
use crate::waveform::{SampledSignal, WaveformSpec};

pub const MEASUREMENT_MAGIC: &[u8; 4] = b"SASM";
pub const MEASUREMENT_VERSION: u16 = 1;

pub fn encode_measurements(m: &MeasurementSet) -> Result<Vec<u8>> {
    let p = Path::new("<memory>");
    let mut w = Writer::default();
    w.bytes(MEASUREMENT_MAGIC);
    w.u16(MEASUREMENT_VERSION);
    let g = &m.geom;
    w.u32(to_u32(g.num_transducers, p, "num_transducers")?);
    w.f64(g.ring_radius);
    w.f64(g.ring_height);
    w.f64(g.scene_extent);
    w.u32(to_u32(g.grid_size, p, "grid_size")?);
    w.f64(g.sound_speed);
    let s = &m.spec;
    for v in [s.f_start, s.f_stop, s.duration, s.sample_rate, s.taper_fraction, m.record_window] {
        w.f64(v);
    }
    w.u32(to_u32(m.signals.len(), p, "record count")?);
    w.u32(to_u32(m.record_len(), p, "record length")?);
    w.f64(m.signals.first().map_or(0.0, |s| s.start_time));
    for sig in &m.signals {
        w.f64s(&sig.samples);
    }
    Ok(w.buf)
}

pub fn decode_measurements(bytes: &[u8], path: &Path) -> Result<MeasurementSet> {
    let mut r = Reader::new(bytes, path);
    r.magic(MEASUREMENT_MAGIC)?;
    let version = r.u16()?;
    if version != MEASUREMENT_VERSION {
        return Err(Error::format(path, format!("unsupported measurement version {version}")));
    }
    let geom = ArrayGeometry {
        num_transducers: r.u32()? as usize,
        ring_radius: r.f64()?,
        ring_height: r.f64()?,
        scene_extent: r.f64()?,
        grid_size: r.u32()? as usize,
        sound_speed: r.f64()?,
    };
    let spec = WaveformSpec {
        f_start: r.f64()?,
        f_stop: r.f64()?,
        duration: r.f64()?,
        sample_rate: r.f64()?,
        taper_fraction: r.f64()?,
    };
    let record_window = r.f64()?;
    let count = r.u32()? as usize;
    let len = r.u32()? as usize;
    let start = r.f64()?;
    let mut signals = Vec::with_capacity(count);
    for _ in 0..count {
        signals.push(SampledSignal::new(spec.sample_rate, start, r.f64s(len)?));
    }
    r.finish()?;
    let m = MeasurementSet {
        geom,
        spec,
        signals,
        record_window,
    };
    m.validate().map_err(|e| Error::format(path, e.to_string()))?;
    Ok(m)
}

pub fn read_measurements(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    let path = path.as_ref();
    decode_measurements(&read_file(path)?, path)
}

pub fn write_measurements(path: impl AsRef<Path>, m: &MeasurementSet) -> Result<()> {
    write_file(path.as_ref(), &encode_measurements(m)?)
}
