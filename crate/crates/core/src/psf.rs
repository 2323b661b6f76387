//! Scene PSF construction and FFT-based linear convolution with it.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::beamform::{beamform, normalize_peak, BeamformOptions};
use crate::error::{Error, Result};
use crate::grid::{grid_stats, ArrayGeometry, ComplexGrid, RealGrid};
use crate::sim::simulate;
use crate::waveform::WaveformSpec;

/// Peak-normalized complex PSF centered on the middle pixel of the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    grid: ComplexGrid,
    peak_index: (usize, usize),
}

impl Psf {
    /// Wraps a PSF image, normalizing it to unit peak. The peak must sit on
    /// the center pixel of an odd-sized grid.
    pub fn from_grid(grid: ComplexGrid) -> Result<Self> {
        let (h, w) = grid.dims();
        if h % 2 == 0 || w % 2 == 0 {
            return Err(Error::Domain(format!(
                "psf grid {h}x{w} has no center pixel"
            )));
        }
        let grid = normalize_peak(&grid)?;
        let found = grid_stats(&grid)?.argmax;
        let center = ((h - 1) / 2, (w - 1) / 2);
        if found != center {
            return Err(Error::PsfNotCentered {
                found,
                expected: center,
            });
        }
        Ok(Self {
            grid,
            peak_index: center,
        })
    }

    pub fn grid(&self) -> &ComplexGrid {
        &self.grid
    }

    pub fn peak_index(&self) -> (usize, usize) {
        self.peak_index
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    /// Largest distance in pixels from the peak at which `|psf| >= threshold`.
    pub fn support_radius(&self, threshold: f64) -> f64 {
        let (h, w) = self.grid.dims();
        let (pr, pc) = self.peak_index;
        let mut r = 0.0f64;
        for row in 0..h {
            for col in 0..w {
                if self.grid.get(row, col).norm() >= threshold {
                    let dr = row as f64 - pr as f64;
                    let dc = col as f64 - pc as f64;
                    r = r.max(dr.hypot(dc));
                }
            }
        }
        r
    }

    /// Smallest window around the peak holding every value above
    /// `rel_threshold` times the peak; the rest is treated as zero.
    pub fn cropped_kernel(&self, rel_threshold: f64) -> Kernel {
        let (h, w) = self.grid.dims();
        let (pr, pc) = self.peak_index;
        let (mut r0, mut r1, mut c0, mut c1) = (pr, pr, pc, pc);
        for row in 0..h {
            for col in 0..w {
                if self.grid.get(row, col).norm() > rel_threshold {
                    r0 = r0.min(row);
                    r1 = r1.max(row);
                    c0 = c0.min(col);
                    c1 = c1.max(col);
                }
            }
        }
        let (kh, kw) = (r1 - r0 + 1, c1 - c0 + 1);
        let mut data = Vec::with_capacity(kh * kw);
        for row in r0..=r1 {
            for col in c0..=c1 {
                data.push(self.grid.get(row, col));
            }
        }
        Kernel {
            height: kh,
            width: kw,
            data,
            center: (pr - r0, pc - c0),
        }
    }

    pub fn kernel(&self) -> Kernel {
        Kernel {
            height: self.grid.height(),
            width: self.grid.width(),
            data: self.grid.data().to_vec(),
            center: self.peak_index,
        }
    }
}

/// Convolution kernel with the pixel that maps onto the output position.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
    pub center: (usize, usize),
}

/// Images a unit scatterer at the scene center and peak-normalizes the result.
pub fn build_psf(geom: &ArrayGeometry, spec: &WaveformSpec, opts: &BeamformOptions) -> Result<Psf> {
    geom.validate()?;
    let Some((cr, cc)) = geom.center_index() else {
        return Err(Error::InvalidGeometry(format!(
            "grid_size {} is even; the psf needs a center pixel",
            geom.grid_size
        )));
    };
    let n = geom.grid_size;
    let mut delta = RealGrid::zeros(n, n);
    delta.set(cr, cc, 1.0);
    let m = simulate(&delta, geom, spec, [0.0, 0.0])?;
    let img = beamform(&m, opts)?;
    Psf::from_grid(img)
}

/// Smallest `2^a 3^b 5^c` that is at least `n`.
pub(crate) fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

/// Separable 2D FFT on a fixed `rows x cols` buffer.
pub(crate) struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub(crate) fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    /// Unnormalized inverse transform.
    pub(crate) fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, &self.col_inv);
    }

    fn run(&self, buf: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(buf.len(), self.rows * self.cols);
        row.process(buf);
        let mut column = vec![Complex64::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = buf[r * self.cols + c];
            }
            col.process(&mut column);
            for r in 0..self.rows {
                buf[r * self.cols + c] = column[r];
            }
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.rows * self.cols
    }
}

/// Linear (zero-padded) convolution of `height x width` images with a fixed
/// kernel, output cropped to the image window so a delta at pixel `p` maps to
/// the kernel centered on `p`. Also provides the adjoint map for gradients.
pub struct Convolver {
    height: usize,
    width: usize,
    kernel_center: (usize, usize),
    fft: Fft2,
    kernel_spectrum: Vec<Complex64>,
}

impl Convolver {
    pub fn new(kernel: &Kernel, height: usize, width: usize) -> Self {
        let rows = fast_len(height + kernel.height - 1);
        let cols = fast_len(width + kernel.width - 1);
        let fft = Fft2::new(rows, cols);
        let mut spec = vec![Complex64::new(0.0, 0.0); rows * cols];
        for r in 0..kernel.height {
            for c in 0..kernel.width {
                spec[r * cols + c] = kernel.data[r * kernel.width + c];
            }
        }
        fft.forward(&mut spec);
        Self {
            height,
            width,
            kernel_center: kernel.center,
            fft,
            kernel_spectrum: spec,
        }
    }

    pub fn for_psf(psf: &Psf) -> Self {
        let (h, w) = psf.dims();
        Self::new(&psf.kernel(), h, w)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn check(&self, dims: (usize, usize)) -> Result<()> {
        if dims != (self.height, self.width) {
            return Err(Error::DimensionMismatch {
                expected: (self.height, self.width),
                got: dims,
            });
        }
        Ok(())
    }

    fn padded_cols(&self) -> usize {
        self.fft.cols
    }

    pub fn convolve(&self, input: &ComplexGrid) -> Result<ComplexGrid> {
        self.check(input.dims())?;
        Ok(self.convolve_slice(input.data()))
    }

    pub fn convolve_real(&self, input: &RealGrid) -> Result<ComplexGrid> {
        self.check(input.dims())?;
        Ok(self.convolve_values(input.data().iter().map(|&v| Complex64::new(v, 0.0))))
    }

    pub(crate) fn convolve_slice(&self, input: &[Complex64]) -> ComplexGrid {
        self.convolve_values(input.iter().copied())
    }

    fn convolve_values(&self, values: impl Iterator<Item = Complex64>) -> ComplexGrid {
        let cols = self.padded_cols();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft.len()];
        for (i, v) in values.enumerate() {
            buf[(i / self.width) * cols + i % self.width] = v;
        }
        self.fft.forward(&mut buf);
        for (z, k) in buf.iter_mut().zip(&self.kernel_spectrum) {
            *z *= k;
        }
        self.fft.inverse(&mut buf);
        let scale = 1.0 / self.fft.len() as f64;
        let (cr, cc) = self.kernel_center;
        let mut out = Vec::with_capacity(self.height * self.width);
        for r in 0..self.height {
            let base = (r + cr) * cols + cc;
            out.extend(buf[base..base + self.width].iter().map(|z| z * scale));
        }
        ComplexGrid::from_vec(self.height, self.width, out)
            .expect("convolution of finite inputs is finite")
    }

    /// Adjoint of [`Convolver::convolve`]: correlation with the conjugated kernel.
    pub fn adjoint(&self, grad: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(grad.len(), self.height * self.width);
        let cols = self.padded_cols();
        let (cr, cc) = self.kernel_center;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft.len()];
        for r in 0..self.height {
            let base = (r + cr) * cols + cc;
            buf[base..base + self.width].copy_from_slice(&grad[r * self.width..(r + 1) * self.width]);
        }
        self.fft.forward(&mut buf);
        for (z, k) in buf.iter_mut().zip(&self.kernel_spectrum) {
            *z *= k.conj();
        }
        self.fft.inverse(&mut buf);
        let scale = 1.0 / self.fft.len() as f64;
        let mut out = Vec::with_capacity(self.height * self.width);
        for r in 0..self.height {
            out.extend(buf[r * cols..r * cols + self.width].iter().map(|z| z * scale));
        }
        out
    }
}

/// Linear convolution of `input` with the PSF centered at its peak.
pub fn convolve2d(input: &ComplexGrid, psf: &Psf) -> Result<ComplexGrid> {
    if input.dims() != psf.dims() {
        return Err(Error::DimensionMismatch {
            expected: psf.dims(),
            got: input.dims(),
        });
    }
    Convolver::for_psf(psf).convolve(input)
}

/// Same as [`convolve2d`] for a real image, promoted with zero imaginary part.
pub fn convolve2d_real(input: &RealGrid, psf: &Psf) -> Result<ComplexGrid> {
    if input.dims() != psf.dims() {
        return Err(Error::DimensionMismatch {
            expected: psf.dims(),
            got: input.dims(),
        });
    }
    Convolver::for_psf(psf).convolve_real(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> ComplexGrid {
        let data = (0..n * n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexGrid::from_vec(n, n, data).unwrap()
    }

    fn random_psf(rng: &mut ChaCha8Rng, n: usize) -> Psf {
        let mut g = random_grid(rng, n);
        let c = (n - 1) / 2;
        g.set(c, c, Complex64::new(3.0, 1.0));
        Psf::from_grid(g).unwrap()
    }

    // brute-force oracle: b(q) = sum_p x(p) P(q - p + center)
    fn direct(x: &ComplexGrid, psf: &Psf) -> ComplexGrid {
        let (h, w) = x.dims();
        let (cr, cc) = psf.peak_index();
        let mut out = ComplexGrid::zeros(h, w);
        for qr in 0..h {
            for qc in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for pr in 0..h {
                    for pc in 0..w {
                        let kr = qr as isize - pr as isize + cr as isize;
                        let kc = qc as isize - pc as isize + cc as isize;
                        if kr >= 0 && kc >= 0 && (kr as usize) < h && (kc as usize) < w {
                            acc += x.get(pr, pc) * psf.grid().get(kr as usize, kc as usize);
                        }
                    }
                }
                out.set(qr, qc, acc);
            }
        }
        out
    }

    fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn fast_lengths() {
        assert_eq!(fast_len(257), 270);
        assert_eq!(fast_len(129), 135);
        assert_eq!(fast_len(17), 18);
        assert_eq!(fast_len(16), 16);
    }

    #[test]
    fn delta_reproduces_psf() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let psf = random_psf(&mut rng, 9);
        let mut d = ComplexGrid::zeros(9, 9);
        d.set(4, 4, Complex64::new(1.0, 0.0));
        let out = convolve2d(&d, &psf).unwrap();
        for (a, b) in out.data().iter().zip(psf.grid().data()) {
            assert!((a - b).norm() < 1e-9);
        }
        let zero = convolve2d(&ComplexGrid::zeros(9, 9), &psf).unwrap();
        assert!(zero.data().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let psf = random_psf(&mut rng, 9);
            let x = random_grid(&mut rng, 9);
            let fast = convolve2d(&x, &psf).unwrap();
            let slow = direct(&x, &psf);
            assert!(rel_l2(fast.data(), slow.data()) < 1e-9);
        }
    }

    #[test]
    fn adjoint_identity() {
        // <A x, y> == <x, A* y>
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psf = random_psf(&mut rng, 11);
        let conv = Convolver::for_psf(&psf);
        let x = random_grid(&mut rng, 11);
        let y = random_grid(&mut rng, 11);
        let ax = conv.convolve(&x).unwrap();
        let aty = conv.adjoint(y.data());
        let lhs: Complex64 = ax.data().iter().zip(y.data()).map(|(a, b)| a * b.conj()).sum();
        let rhs: Complex64 = x.data().iter().zip(&aty).map(|(a, b)| a * b.conj()).sum();
        assert!((lhs - rhs).norm() < 1e-9 * lhs.norm().max(1.0));
    }

    #[test]
    fn cropped_kernel_agrees() {
        let mut g = ComplexGrid::zeros(15, 15);
        for r in 0..15 {
            for c in 0..15 {
                let d2 = ((r as f64 - 7.0).powi(2) + (c as f64 - 7.0).powi(2)) / 2.0;
                g.set(r, c, Complex64::from_polar((-d2).exp(), 0.3 * d2));
            }
        }
        let psf = Psf::from_grid(g).unwrap();
        let k = psf.cropped_kernel(1e-3);
        assert!(k.height < 15);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_grid(&mut rng, 15);
        let full = convolve2d(&x, &psf).unwrap();
        let crop = Convolver::new(&k, 15, 15).convolve(&x).unwrap();
        assert!(rel_l2(crop.data(), full.data()) < 1e-3);
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psf = random_psf(&mut rng, 9);
        assert!(matches!(
            convolve2d(&ComplexGrid::zeros(7, 7), &psf),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn off_center_psf_rejected() {
        let mut g = ComplexGrid::zeros(5, 5);
        g.set(0, 0, Complex64::new(1.0, 0.0));
        assert!(matches!(Psf::from_grid(g), Err(Error::PsfNotCentered { .. })));
        assert!(Psf::from_grid(ComplexGrid::zeros(4, 4)).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn linear_and_matches_oracle(seed in 0u64..10_000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psf = random_psf(&mut rng, 7);
            let x = random_grid(&mut rng, 7);
            let y = random_grid(&mut rng, 7);
            let mix: Vec<Complex64> = x.data().iter().zip(y.data()).map(|(p, q)| p * a + q * b).collect();
            let mix = ComplexGrid::from_vec(7, 7, mix).unwrap();
            let lhs = convolve2d(&mix, &psf).unwrap();
            proptest::prop_assert!(rel_l2(lhs.data(), direct(&mix, &psf).data()) < 1e-9);
            let cx = convolve2d(&x, &psf).unwrap();
            let cy = convolve2d(&y, &psf).unwrap();
            let rhs: Vec<Complex64> = cx.data().iter().zip(cy.data()).map(|(p, q)| p * a + q * b).collect();
            let scale = rhs.iter().map(|z| z.norm()).fold(1e-12, f64::max);
            for (l, r) in lhs.data().iter().zip(&rhs) {
                proptest::prop_assert!((l - r).norm() < 1e-9 * scale);
            }
        }
    }
}
