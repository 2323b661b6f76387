//! TOML run configuration shared by every CLI subcommand.
//!
//! Every key is optional and defaults to the reference setup (360-element
//! ring at 0.85 m radius and 0.2 m height, 129x129 pixels over 0.4 m, 30 to
//! 10 kHz LFM of 10 ms sampled at 100 kHz with a 0.1 cosine taper, Adam at
//! 1e-4, kappa 20). Unknown keys are rejected.
//!
//! ```toml
//! seed = 3
//! out_dir = "run"
//! scene = "scene.png"
//!
//! [geometry]
//! grid_size = 65
//! num_transducers = 90
//!
//! [simulation]
//! noise_level = 0.01
//! offset = [0.0, 0.0]
//!
//! [deconv]
//! iterations = 1500
//! kappa = 20.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::WienerConfig;
use crate::beamform::BeamformOptions;
use crate::deconv::DeconvConfig;
use crate::error::{Error, Result};
use crate::grid::ArrayGeometry;
use crate::waveform::WaveformSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Gaussian noise standard deviation as a fraction of the record peak.
    pub noise_level: f64,
    /// Common displacement of every scatterer from its pixel center, meters.
    pub offset: [f64; 2],
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            noise_level: 0.0,
            offset: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; `None` leaves the choice to the environment.
    pub threads: Option<usize>,
    /// Scatterer map, as a grid file or an 8-bit PNG.
    pub scene: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    pub lambda: Option<PathBuf>,
    pub psf: Option<PathBuf>,
    /// Ground-truth scatterer map for `metrics`.
    pub truth: Option<PathBuf>,
    /// Estimate scored by `metrics`.
    pub estimate: Option<PathBuf>,
    pub geometry: ArrayGeometry,
    pub waveform: WaveformSpec,
    pub beamform: BeamformOptions,
    pub simulation: SimulationConfig,
    pub deconv: DeconvConfig,
    pub wiener: WienerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            threads: None,
            scene: None,
            measurements: None,
            lambda: None,
            psf: None,
            truth: None,
            estimate: None,
            geometry: ArrayGeometry::default(),
            waveform: WaveformSpec::default(),
            beamform: BeamformOptions::default(),
            simulation: SimulationConfig::default(),
            deconv: DeconvConfig::default(),
            wiener: WienerConfig::default(),
        }
    }
}

fn config_err(key: &str, msg: impl ToString) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: msg.to_string(),
    }
}

/// Pulls the offending key out of a serde message like "unknown field `x`".
fn offending_key(msg: &str) -> Option<String> {
    let start = msg.find("field `")? + "field `".len();
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = offending_key(&msg).unwrap_or_else(|| "<document>".into());
            config_err(&key, msg.trim())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate().map_err(|e| config_err("geometry", e))?;
        self.waveform.validate().map_err(|e| config_err("waveform", e))?;
        self.deconv.validate()?;
        if self.beamform.upsample < 1 {
            return Err(config_err("beamform.upsample", "must be >= 1"));
        }
        let n = self.simulation.noise_level;
        if !(n >= 0.0 && n.is_finite()) {
            return Err(config_err("simulation.noise_level", "must be >= 0"));
        }
        let spacing = self.geometry.pixel_spacing();
        if self.simulation.offset.iter().any(|o| !(o.abs() < spacing)) {
            return Err(config_err(
                "simulation.offset",
                format!("components must be smaller than the pixel spacing {spacing} m"),
            ));
        }
        let k = self.wiener.noise_to_signal;
        if !(k >= 0.0 && k.is_finite()) {
            return Err(config_err("wiener.noise_to_signal", "must be >= 0"));
        }
        if self.threads == Some(0) {
            return Err(config_err("threads", "must be >= 1"));
        }
        Ok(())
    }

    pub fn deconv_config(&self) -> DeconvConfig {
        DeconvConfig {
            seed: self.seed,
            ..self.deconv.clone()
        }
    }

    fn resolve(&self, p: &Option<PathBuf>, default_name: &str) -> PathBuf {
        p.clone().unwrap_or_else(|| self.out_dir.join(default_name))
    }

    pub fn measurements_path(&self) -> PathBuf {
        self.resolve(&self.measurements, "measurements.sasm")
    }

    pub fn lambda_path(&self) -> PathBuf {
        self.resolve(&self.lambda, "lambda.sasg")
    }

    pub fn psf_path(&self) -> PathBuf {
        self.resolve(&self.psf, "psf.sasg")
    }

    pub fn estimate_path(&self) -> PathBuf {
        self.resolve(&self.estimate, "sigma_hat.sasg")
    }
}
