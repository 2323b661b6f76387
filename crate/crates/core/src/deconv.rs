//! Analysis-by-synthesis deconvolution: the coordinate network's output is
//! convolved with the PSF and fit to the beamformed image under an
//! (epsilon-smoothed) complex L1 loss.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, RealGrid};
use crate::inr::{init_seeded, normalized_grid_coords, AdamState, ForwardCache, FourierEncoder, Gradients, MlpState};
use crate::psf::{Convolver, Psf};

/// Which residual the loss measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `|b - lambda|` on complex values.
    #[default]
    Complex,
    /// `||b| - |lambda||`, discarding phase.
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeconvConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Fourier feature bandwidth; 20 for simulated scenes, 12 for measured data.
    pub kappa: f64,
    /// Set from the run-level seed; not read from the `[deconv]` table.
    #[serde(skip)]
    pub seed: u64,
    pub loss_smoothing_eps: f64,
    /// Emit a snapshot every this many iterations; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Plateau window in iterations.
    pub convergence_window: usize,
    /// Stop once the mean loss of consecutive windows changes by less than
    /// this fraction.
    pub convergence_tol: f64,
    /// Number of Fourier frequencies `m`.
    pub features: usize,
    /// Hidden layer width.
    pub hidden: usize,
    pub loss: LossKind,
}

impl Default for DeconvConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 1e-4,
            kappa: 20.0,
            seed: 0,
            loss_smoothing_eps: 1e-12,
            snapshot_every: 0,
            convergence_window: 100,
            convergence_tol: 1e-5,
            features: 256,
            hidden: 256,
            loss: LossKind::Complex,
        }
    }
}

impl DeconvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: format!("deconv.{key}"),
                msg: msg.into(),
            })
        };
        if self.iterations < 1 {
            return bad("iterations", "must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be > 0");
        }
        if !self.kappa.is_finite() {
            return bad("kappa", "must be finite");
        }
        if !(self.loss_smoothing_eps > 0.0) {
            return bad("loss_smoothing_eps", "must be > 0");
        }
        if self.convergence_window < 1 {
            return bad("convergence_window", "must be >= 1");
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol", "must be > 0");
        }
        if self.features < 1 || self.hidden < 1 {
            return bad("features", "features and hidden must be >= 1");
        }
        Ok(())
    }
}

fn check_dims(a: &ComplexGrid, b: &ComplexGrid) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            got: b.dims(),
        });
    }
    Ok(())
}

/// `sum sqrt(|a - b|^2 + eps)` over all pixels.
pub fn complex_l1(a: &ComplexGrid, b: &ComplexGrid, eps: f64) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| ((x - y).norm_sqr() + eps).sqrt())
        .sum())
}

/// `sum sqrt((|a| - |b|)^2 + eps)` over all pixels.
pub fn magnitude_l1(a: &ComplexGrid, b: &ComplexGrid, eps: f64) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = (x.norm_sqr() + eps).sqrt() - y.norm();
            (d * d + eps).sqrt()
        })
        .sum())
}

/// Loss and its gradient with respect to `estimate`, packed as
/// `dL/dRe + i dL/dIm` per pixel.
pub(crate) fn loss_and_grad(
    kind: LossKind,
    estimate: &[Complex64],
    target: &[Complex64],
    eps: f64,
) -> (f64, Vec<Complex64>) {
    let mut loss = 0.0;
    let grad = estimate
        .iter()
        .zip(target)
        .map(|(b, l)| match kind {
            LossKind::Complex => {
                let d = b - l;
                let r = (d.norm_sqr() + eps).sqrt();
                loss += r;
                d / r
            }
            LossKind::Magnitude => {
                let mag = (b.norm_sqr() + eps).sqrt();
                let d = mag - l.norm();
                let r = (d * d + eps).sqrt();
                loss += r;
                b * (d / (r * mag))
            }
        })
        .collect();
    (loss, grad)
}

/// Network output reported every `snapshot_every` iterations (before that
/// iteration's update).
pub struct Snapshot<'a> {
    pub iteration: usize,
    pub loss: f64,
    pub sigma: &'a RealGrid,
}

/// Receives per-iteration progress from [`run_deconv_with`]. Closures taking
/// a [`Snapshot`] implement it and ignore the per-iteration losses.
pub trait Observer {
    /// Called with every loss, including the non-finite one that aborts a run.
    fn loss(&mut self, _iteration: usize, _loss: f64) {}
    fn snapshot(&mut self, _snap: Snapshot<'_>) {}
}

/// Observer that ignores everything.
pub struct Silent;

impl Observer for Silent {}

impl<F: FnMut(Snapshot<'_>)> Observer for F {
    fn snapshot(&mut self, snap: Snapshot<'_>) {
        self(snap)
    }
}

#[derive(Debug, Clone)]
pub struct DeconvOutput {
    pub sigma_hat: RealGrid,
    pub b_estimated: ComplexGrid,
    pub loss_history: Vec<f64>,
    pub converged: bool,
    pub encoder: FourierEncoder,
    pub net: MlpState,
    pub adam: AdamState,
}

/// The full training loss as a function of the network parameters:
/// encode the pixel grid, run the network, convolve with the PSF and compare
/// with the beamformed image.
pub struct Objective {
    features: Vec<f64>,
    conv: Convolver,
    target: Vec<Complex64>,
    kind: LossKind,
    eps: f64,
}

/// One evaluation of an [`Objective`]; feed it back to get gradients.
pub struct Evaluation {
    pub loss: f64,
    pub cache: ForwardCache,
    residual_grad: Vec<Complex64>,
}

impl Objective {
    pub fn new(
        lambda_img: &ComplexGrid,
        psf: &Psf,
        encoder: &FourierEncoder,
        kind: LossKind,
        eps: f64,
    ) -> Result<Self> {
        check_dims(psf.grid(), lambda_img)?;
        let (h, w) = lambda_img.dims();
        if h != w {
            return Err(Error::Domain(format!("scene must be square, got {h}x{w}")));
        }
        Ok(Self {
            features: encoder.encode(&normalized_grid_coords(h)),
            conv: Convolver::for_psf(psf),
            target: lambda_img.data().to_vec(),
            kind,
            eps,
        })
    }

    pub fn evaluate(&self, net: &MlpState) -> Result<Evaluation> {
        let cache = net.forward(&self.features)?;
        let sigma: Vec<Complex64> = cache.output().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let b = self.conv.convolve_slice(&sigma);
        let (loss, residual_grad) = loss_and_grad(self.kind, b.data(), &self.target, self.eps);
        Ok(Evaluation {
            loss,
            cache,
            residual_grad,
        })
    }

    pub fn loss(&self, net: &MlpState) -> Result<f64> {
        Ok(self.evaluate(net)?.loss)
    }

    /// Parameter gradients of the loss at the evaluated point.
    pub fn gradients(&self, net: &MlpState, eval: &Evaluation) -> Result<Gradients> {
        // the network output is real, so only the real part of the adjoint survives
        let grad_sigma: Vec<f64> = self.conv.adjoint(&eval.residual_grad).iter().map(|z| z.re).collect();
        net.backward(&self.features, &eval.cache, &grad_sigma)
    }
}

/// Fits the coordinate network so that its output convolved with `psf`
/// matches `lambda_img`.
pub fn run_deconv(lambda_img: &ComplexGrid, psf: &Psf, cfg: &DeconvConfig) -> Result<DeconvOutput> {
    run_deconv_with(lambda_img, psf, cfg, &mut Silent)
}

pub fn run_deconv_with(
    lambda_img: &ComplexGrid,
    psf: &Psf,
    cfg: &DeconvConfig,
    observer: &mut impl Observer,
) -> Result<DeconvOutput> {
    cfg.validate()?;
    let (h, w) = lambda_img.dims();
    let (encoder, mut net, mut adam) =
        init_seeded(cfg.seed, cfg.features, cfg.hidden, cfg.kappa, cfg.learning_rate)?;
    let objective = Objective::new(lambda_img, psf, &encoder, cfg.loss, cfg.loss_smoothing_eps)?;

    let mut history = Vec::with_capacity(cfg.iterations);
    let mut converged = false;
    for it in 0..cfg.iterations {
        let eval = objective.evaluate(&net)?;
        let loss = eval.loss;
        observer.loss(it, loss);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it, loss });
        }
        history.push(loss);

        if cfg.snapshot_every > 0 && (it + 1) % cfg.snapshot_every == 0 {
            let sigma = RealGrid::from_vec(h, w, eval.cache.output().to_vec())?;
            observer.snapshot(Snapshot {
                iteration: it + 1,
                loss,
                sigma: &sigma,
            });
        }

        let grads = objective.gradients(&net, &eval)?;
        adam.step(&mut net.tensors_mut(), &grads.as_slices())?;

        if plateaued(&history, cfg.convergence_window, cfg.convergence_tol) {
            converged = true;
            break;
        }
    }

    let out = net.forward(&objective.features)?.output().to_vec();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss {
            iteration: history.len(),
            loss: f64::NAN,
        });
    }
    let sigma_hat = RealGrid::from_vec(h, w, out)?;
    let b_estimated = objective.conv.convolve_real(&sigma_hat)?;
    Ok(DeconvOutput {
        sigma_hat,
        b_estimated,
        loss_history: history,
        converged,
        encoder,
        net,
        adam,
    })
}

/// True when the mean loss over the last `window` iterations differs from the
/// window before it by less than `tol` relative.
pub fn plateaued(history: &[f64], window: usize, tol: f64) -> bool {
    let n = history.len();
    if n < 2 * window {
        return false;
    }
    let cur: f64 = history[n - window..].iter().sum::<f64>() / window as f64;
    let prev: f64 = history[n - 2 * window..n - window].iter().sum::<f64>() / window as f64;
    prev > 0.0 && ((prev - cur).abs() / prev) < tol
}

/// PSNR reported when the estimate is exact.
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Localization {
    /// `(truth, recovered)` pixel pairs from greedy nearest matching.
    pub matches: Vec<((usize, usize), (usize, usize))>,
    /// Euclidean distance in pixels for each match.
    pub errors: Vec<f64>,
    pub mean_error: f64,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub mse: f64,
    pub psnr_db: f64,
    /// Present when the truth has at most [`MAX_SPARSE_SCATTERERS`] nonzero pixels.
    pub localization: Option<Localization>,
}

pub const MAX_SPARSE_SCATTERERS: usize = 64;

pub fn mse(a: &RealGrid, b: &RealGrid) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: b.dims(),
            got: a.dims(),
        });
    }
    let n = a.data().len().max(1);
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64)
}

/// PSNR in dB for unit peak amplitude, capped at [`PSNR_CAP_DB`].
pub fn psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (-10.0 * mse.log10()).min(PSNR_CAP_DB)
}

/// Local maxima (8-neighborhood, ties broken toward the first row-major
/// pixel) sorted by decreasing value.
pub fn local_peaks(g: &RealGrid) -> Vec<(usize, usize, f64)> {
    let (h, w) = g.dims();
    let mut peaks = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let v = g.get(r, c);
            let mut is_peak = true;
            'nb: for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    let u = g.get(rr as usize, cc as usize);
                    let earlier = (rr, cc) < (r as isize, c as isize);
                    if u > v || (u == v && earlier) {
                        is_peak = false;
                        break 'nb;
                    }
                }
            }
            if is_peak {
                peaks.push((r, c, v));
            }
        }
    }
    peaks.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    peaks
}

/// Matches the `k` strongest local maxima of `estimate` to the `k` nonzero
/// truth pixels, greedily by increasing distance.
pub fn localize(estimate: &RealGrid, truth: &RealGrid) -> Option<Localization> {
    let (_, w) = truth.dims();
    let targets: Vec<(usize, usize)> = truth
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| (i / w, i % w))
        .collect();
    if targets.is_empty() || targets.len() > MAX_SPARSE_SCATTERERS {
        return None;
    }
    let found: Vec<(usize, usize)> = local_peaks(estimate)
        .into_iter()
        .take(targets.len())
        .map(|(r, c, _)| (r, c))
        .collect();
    let dist = |a: (usize, usize), b: (usize, usize)| {
        (a.0 as f64 - b.0 as f64).hypot(a.1 as f64 - b.1 as f64)
    };
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &t) in targets.iter().enumerate() {
        for (j, &f) in found.iter().enumerate() {
            pairs.push((dist(t, f), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut used_t = vec![false; targets.len()];
    let mut used_f = vec![false; found.len()];
    let mut matches = Vec::new();
    let mut errors = Vec::new();
    for (d, i, j) in pairs {
        if used_t[i] || used_f[j] {
            continue;
        }
        used_t[i] = true;
        used_f[j] = true;
        matches.push((targets[i], found[j]));
        errors.push(d);
    }
    // fewer peaks than scatterers counts as an unbounded miss
    for _ in matches.len()..targets.len() {
        errors.push(f64::INFINITY);
    }
    let mean_error = errors.iter().sum::<f64>() / errors.len() as f64;
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    Some(Localization {
        matches,
        errors,
        mean_error,
        max_error,
    })
}

pub fn evaluate_against_truth(sigma_hat: &RealGrid, sigma_true: &RealGrid) -> Result<Metrics> {
    let mse = mse(sigma_hat, sigma_true)?;
    Ok(Metrics {
        mse,
        psnr_db: psnr(mse),
        localization: localize(sigma_hat, sigma_true),
    })
}
