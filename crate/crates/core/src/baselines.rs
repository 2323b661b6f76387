//! Classical frequency-domain deconvolution baselines.
//!
//! Both filters work circularly on the image grid with the PSF rolled so its
//! peak sits at the origin, which keeps them aligned with [`crate::psf::convolve2d`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ComplexGrid;
use crate::psf::{Fft2, Psf};

/// Relative floor on `|P^|` used by the naive inverse filter.
pub const INVERSE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WienerConfig {
    /// Scalar noise-to-signal ratio `K >= 0`.
    pub noise_to_signal: f64,
}

impl Default for WienerConfig {
    fn default() -> Self {
        Self {
            noise_to_signal: 1e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InverseFilterOutput {
    pub image: ComplexGrid,
    /// Frequency bins whose PSF magnitude was raised to the floor.
    pub floored_bins: usize,
}

fn check(b: &ComplexGrid, psf: &Psf) -> Result<()> {
    if b.dims() != psf.dims() {
        return Err(Error::DimensionMismatch {
            expected: psf.dims(),
            got: b.dims(),
        });
    }
    Ok(())
}

struct Spectra {
    fft: Fft2,
    image: Vec<Complex64>,
    psf: Vec<Complex64>,
}

fn spectra(b: &ComplexGrid, psf: &Psf) -> Spectra {
    let (h, w) = b.dims();
    let fft = Fft2::new(h, w);
    let mut image = b.data().to_vec();
    fft.forward(&mut image);
    let (pr, pc) = psf.peak_index();
    let mut kernel = vec![Complex64::new(0.0, 0.0); h * w];
    for r in 0..h {
        for c in 0..w {
            let rr = (r + h - pr) % h;
            let cc = (c + w - pc) % w;
            kernel[rr * w + cc] = psf.grid().get(r, c);
        }
    }
    fft.forward(&mut kernel);
    Spectra {
        fft,
        image,
        psf: kernel,
    }
}

fn finish(fft: &Fft2, mut buf: Vec<Complex64>, dims: (usize, usize)) -> Result<ComplexGrid> {
    fft.inverse(&mut buf);
    let scale = 1.0 / buf.len() as f64;
    for z in &mut buf {
        *z *= scale;
    }
    ComplexGrid::from_vec(dims.0, dims.1, buf)
}

/// `IFFT(B / P)` with `|P|` floored at [`INVERSE_FLOOR`] times its maximum.
pub fn inverse_filter(b: &ComplexGrid, psf: &Psf) -> Result<InverseFilterOutput> {
    check(b, psf)?;
    let Spectra { fft, mut image, psf } = spectra(b, psf);
    let floor = INVERSE_FLOOR * psf.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut floored_bins = 0;
    for (z, p) in image.iter_mut().zip(&psf) {
        let mag = p.norm();
        let p = if mag < floor {
            floored_bins += 1;
            if mag > 0.0 {
                p * (floor / mag)
            } else {
                Complex64::new(floor, 0.0)
            }
        } else {
            *p
        };
        *z /= p;
    }
    Ok(InverseFilterOutput {
        image: finish(&fft, image, b.dims())?,
        floored_bins,
    })
}

/// Frequency-domain multiply by `conj(P) / (|P|^2 + K)`.
pub fn wiener_filter(b: &ComplexGrid, psf: &Psf, cfg: &WienerConfig) -> Result<ComplexGrid> {
    check(b, psf)?;
    let k = cfg.noise_to_signal;
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::Domain(format!("noise-to-signal ratio {k} must be >= 0")));
    }
    let Spectra { fft, mut image, psf } = spectra(b, psf);
    for (z, p) in image.iter_mut().zip(&psf) {
        let den = p.norm_sqr() + k;
        *z = if den > 0.0 { *z * p.conj() / den } else { Complex64::new(0.0, 0.0) };
    }
    finish(&fft, image, b.dims())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{grid_stats, RealGrid};
    use crate::psf::{convolve2d_real, Convolver};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn compact_psf(n: usize) -> Psf {
        let c = (n - 1) as f64 / 2.0;
        let mut g = ComplexGrid::zeros(n, n);
        for r in 0..n {
            for col in 0..n {
                let d2 = (r as f64 - c).powi(2) + (col as f64 - c).powi(2);
                g.set(r, col, Complex64::from_polar((-d2 / (2.0 * 1.2f64.powi(2))).exp(), 0.4 * d2.sqrt()));
            }
        }
        Psf::from_grid(g).unwrap()
    }

    fn sparse_scene(n: usize) -> RealGrid {
        let mut s = RealGrid::zeros(n, n);
        for &(r, c, a) in &[(10, 12, 1.0), (16, 16, 0.7), (20, 9, 0.5), (22, 22, 1.0)] {
            s.set(r, c, a);
        }
        s
    }

    fn rel_err(est: &ComplexGrid, truth: &RealGrid) -> f64 {
        let num: f64 = est.data().iter().zip(truth.data()).map(|(z, t)| (z - t).norm_sqr()).sum();
        let den: f64 = truth.data().iter().map(|t| t * t).sum();
        (num / den).sqrt()
    }

    #[test]
    fn noiseless_inverse_recovers_scene() {
        let psf = compact_psf(33);
        let s = sparse_scene(33);
        let b = convolve2d_real(&s, &psf).unwrap();
        let out = inverse_filter(&b, &psf).unwrap();
        assert!(rel_err(&out.image, &s) < 1e-3);
    }

    #[test]
    fn delta_psf_is_identity() {
        let mut d = ComplexGrid::zeros(9, 9);
        d.set(4, 4, Complex64::new(1.0, 0.0));
        let psf = Psf::from_grid(d).unwrap();
        let mut b = ComplexGrid::zeros(9, 9);
        b.set(1, 7, Complex64::new(0.3, -0.2));
        b.set(5, 2, Complex64::new(-1.0, 0.5));
        let out = inverse_filter(&b, &psf).unwrap();
        assert_eq!(out.floored_bins, 0);
        for (x, y) in out.image.data().iter().zip(b.data()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn wiener_beats_inverse_under_noise() {
        let psf = compact_psf(33);
        let s = sparse_scene(33);
        let mut b = convolve2d_real(&s, &psf).unwrap();
        let peak = grid_stats(&b).unwrap().max_magnitude;
        let normal = Normal::new(0.0, 0.01 * peak).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for z in b.data_mut() {
            *z += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
        let inv = rel_err(&inverse_filter(&b, &psf).unwrap().image, &s);
        let best = [1e-4, 1e-3, 1e-2, 1e-1, 1.0]
            .iter()
            .map(|&k| rel_err(&wiener_filter(&b, &psf, &WienerConfig { noise_to_signal: k }).unwrap(), &s))
            .fold(f64::INFINITY, f64::min);
        assert!(inv > best, "inverse {inv} vs wiener {best}");
    }

    #[test]
    fn zero_k_matches_inverse() {
        let psf = compact_psf(17);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let data = (0..17 * 17).map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))).collect();
        let b = ComplexGrid::from_vec(17, 17, data).unwrap();
        let inv = inverse_filter(&b, &psf).unwrap();
        assert_eq!(inv.floored_bins, 0);
        let w = wiener_filter(&b, &psf, &WienerConfig { noise_to_signal: 0.0 }).unwrap();
        let scale = grid_stats(&inv.image).unwrap().max_magnitude;
        for (x, y) in w.data().iter().zip(inv.image.data()) {
            assert!((x - y).norm() < 1e-9 * scale);
        }
    }

    #[test]
    fn huge_k_tends_to_correlation() {
        let psf = compact_psf(17);
        let mut b = ComplexGrid::zeros(17, 17);
        b.set(5, 11, Complex64::new(1.0, 0.0));
        b.set(12, 4, Complex64::new(0.0, 0.6));
        let w = wiener_filter(&b, &psf, &WienerConfig { noise_to_signal: 1e9 }).unwrap();
        // correlation with the psf: the adjoint of convolution, computed circularly
        // here only for the argmax comparison
        let corr = Convolver::for_psf(&psf).adjoint(b.data());
        let corr = ComplexGrid::from_vec(17, 17, corr).unwrap();
        assert_eq!(grid_stats(&w).unwrap().argmax, grid_stats(&corr).unwrap().argmax);
    }

    #[test]
    fn wiener_is_linear() {
        let psf = compact_psf(9);
        let mut a = ComplexGrid::zeros(9, 9);
        a.set(2, 3, Complex64::new(1.0, 2.0));
        let mut b = ComplexGrid::zeros(9, 9);
        b.set(6, 1, Complex64::new(-0.5, 0.1));
        let mut ab = a.clone();
        for (x, y) in ab.data_mut().iter_mut().zip(b.data()) {
            *x = *x * 2.0 + y * 3.0;
        }
        let cfg = WienerConfig { noise_to_signal: 0.05 };
        let wa = wiener_filter(&a, &psf, &cfg).unwrap();
        let wb = wiener_filter(&b, &psf, &cfg).unwrap();
        let wab = wiener_filter(&ab, &psf, &cfg).unwrap();
        for i in 0..81 {
            let want = wa.data()[i] * 2.0 + wb.data()[i] * 3.0;
            assert!((wab.data()[i] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn negative_k_rejected() {
        let psf = compact_psf(9);
        let b = ComplexGrid::zeros(9, 9);
        assert!(wiener_filter(&b, &psf, &WienerConfig { noise_to_signal: -1.0 }).is_err());
        assert!(inverse_filter(&ComplexGrid::zeros(5, 5), &psf).is_err());
    }
}
