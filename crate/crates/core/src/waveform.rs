//! LFM chirp synthesis, Tukey windowing and replica correlation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear FM pulse parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformSpec {
    /// Instantaneous frequency at the start of the pulse, Hz.
    pub f_start: f64,
    /// Instantaneous frequency at the end of the pulse, Hz.
    pub f_stop: f64,
    /// Pulse length, seconds.
    pub duration: f64,
    pub sample_rate: f64,
    /// Fraction of the pulse covered by the two cosine tapers.
    pub taper_fraction: f64,
}

impl Default for WaveformSpec {
    fn default() -> Self {
        Self {
            f_start: 30_000.0,
            f_stop: 10_000.0,
            duration: 0.01,
            sample_rate: 100_000.0,
            taper_fraction: 0.1,
        }
    }
}

impl WaveformSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidWaveform(msg));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be positive".into());
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return bad("sample_rate must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.taper_fraction) {
            return bad("taper_fraction must lie in [0, 1]".into());
        }
        let fmax = self.f_start.abs().max(self.f_stop.abs());
        if !(fmax < self.sample_rate / 2.0) {
            return bad(format!(
                "max frequency {fmax} Hz is not below Nyquist {} Hz",
                self.sample_rate / 2.0
            ));
        }
        if self.num_samples() < 2 {
            return bad("pulse must span at least 2 samples".into());
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    /// Chirp rate in Hz/s.
    pub fn chirp_rate(&self) -> f64 {
        (self.f_stop - self.f_start) / self.duration
    }

    pub fn bandwidth(&self) -> f64 {
        (self.f_stop - self.f_start).abs()
    }

    /// Unwindowed chirp phase in cycles.
    pub fn phase_cycles(&self, t: f64) -> f64 {
        self.f_start * t + 0.5 * self.chirp_rate() * t * t
    }

    /// Continuous-time pulse, identical to [`make_lfm`] at the sample instants
    /// and zero outside the pulse support.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.num_samples();
        let support = (n - 1) as f64 / self.sample_rate;
        if !(0.0..=support).contains(&t) {
            return 0.0;
        }
        tukey_at(t / support, self.taper_fraction) * (2.0 * PI * self.phase_cycles(t)).cos()
    }

    /// Time from the first to the last pulse sample.
    pub fn support(&self) -> f64 {
        (self.num_samples() - 1) as f64 / self.sample_rate
    }
}

/// Uniformly sampled time series; sample `i` is taken at `start_time + i / sample_rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal<T> {
    pub sample_rate: f64,
    pub start_time: f64,
    pub samples: Vec<T>,
}

pub type RealSignal = SampledSignal<f64>;
pub type ComplexSignal = SampledSignal<Complex64>;

impl<T> SampledSignal<T> {
    pub fn new(sample_rate: f64, start_time: f64, samples: Vec<T>) -> Self {
        Self {
            sample_rate,
            start_time,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_of(&self, i: usize) -> f64 {
        self.start_time + i as f64 / self.sample_rate
    }
}

impl ComplexSignal {
    /// Index and magnitude of the largest sample.
    pub fn peak(&self) -> (usize, f64) {
        let mut best = (0, 0.0);
        for (i, z) in self.samples.iter().enumerate() {
            let m = z.norm();
            if m > best.1 {
                best = (i, m);
            }
        }
        best
    }
}

/// Tukey window value at normalized position `x` in `[0, 1]`.
pub(crate) fn tukey_at(x: f64, alpha: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    if alpha <= 0.0 {
        return 1.0;
    }
    let half = alpha / 2.0;
    if x < half {
        0.5 * (1.0 + (PI * (2.0 * x / alpha - 1.0)).cos())
    } else if x > 1.0 - half {
        0.5 * (1.0 + (PI * (2.0 * x / alpha - 2.0 / alpha + 1.0)).cos())
    } else {
        1.0
    }
}

/// Tapered cosine window: cosine ramps over `taper_fraction / 2` of the length
/// on each side. `0` gives a rectangular window, `1` a Hann window.
pub fn make_tukey(n: usize, taper_fraction: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Domain(format!("tukey window needs n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&taper_fraction) {
        return Err(Error::Domain(format!(
            "taper fraction {taper_fraction} outside [0, 1]"
        )));
    }
    let last = (n - 1) as f64;
    Ok((0..n)
        .map(|i| tukey_at(i as f64 / last, taper_fraction))
        .collect())
}

/// Samples the windowed LFM pulse starting at `t = 0`.
pub fn make_lfm(spec: &WaveformSpec) -> Result<RealSignal> {
    spec.validate()?;
    let n = spec.num_samples();
    let window = make_tukey(n, spec.taper_fraction)?;
    let samples = window
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let t = i as f64 / spec.sample_rate;
            w * (2.0 * PI * spec.phase_cycles(t)).cos()
        })
        .collect();
    Ok(SampledSignal::new(spec.sample_rate, 0.0, samples))
}

/// Analytic signal via the FFT Hilbert construction: negative frequencies are
/// zeroed, positive ones doubled, DC and Nyquist kept.
pub fn analytic_signal(s: &RealSignal) -> Result<ComplexSignal> {
    let n = s.len();
    if n < 2 {
        return Err(Error::Domain("analytic signal needs at least 2 samples".into()));
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = s.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    apply_hilbert_mask(&mut buf);
    inv.process(&mut buf);
    let scale = 1.0 / n as f64;
    for z in &mut buf {
        *z *= scale;
    }
    Ok(SampledSignal::new(s.sample_rate, s.start_time, buf))
}

fn apply_hilbert_mask(spectrum: &mut [Complex64]) {
    let n = spectrum.len();
    let positive_end = if n % 2 == 0 { n / 2 } else { (n + 1) / 2 };
    for z in &mut spectrum[1..positive_end] {
        *z *= 2.0;
    }
    let negative_start = if n % 2 == 0 { n / 2 + 1 } else { (n + 1) / 2 };
    for z in &mut spectrum[negative_start..] {
        *z = Complex64::new(0.0, 0.0);
    }
}

/// Matched filter against a fixed replica for records of a fixed length.
///
/// Output lag `k` runs from `-(len(tx) - 1)` to `len(rx) - 1`, so an echo equal
/// to the replica delayed by `t_d` peaks at output time `t_d`.
pub struct ReplicaCorrelator {
    rx_len: usize,
    tx_len: usize,
    fft_len: usize,
    sample_rate: f64,
    tx_start: f64,
    fwd_rx: Arc<dyn Fft<f64>>,
    inv_rx: Arc<dyn Fft<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    factor: usize,
    replica_spectrum_conj: Vec<Complex64>,
}

impl ReplicaCorrelator {
    pub fn new(tx: &RealSignal, rx_len: usize) -> Result<Self> {
        Self::with_upsampling(tx, rx_len, 1)
    }

    /// Correlator whose output is band-limited interpolated to `factor` times
    /// the input sample rate by zero-padding the correlation spectrum.
    pub fn with_upsampling(tx: &RealSignal, rx_len: usize, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Domain("upsampling factor must be >= 1".into()));
        }
        if rx_len < 2 {
            return Err(Error::Domain("received record needs at least 2 samples".into()));
        }
        let tx_a = analytic_signal(tx)?;
        let fft_len = (rx_len + tx.len() - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(fft_len);
        let mut spec = vec![Complex64::new(0.0, 0.0); fft_len];
        spec[..tx.len()].copy_from_slice(&tx_a.samples);
        fwd.process(&mut spec);
        for z in &mut spec {
            *z = z.conj();
        }
        Ok(Self {
            rx_len,
            tx_len: tx.len(),
            fft_len,
            sample_rate: tx.sample_rate,
            tx_start: tx.start_time,
            fwd_rx: planner.plan_fft_forward(rx_len),
            inv_rx: planner.plan_fft_inverse(rx_len),
            fwd,
            inv: planner.plan_fft_inverse(fft_len * factor),
            factor,
            replica_spectrum_conj: spec,
        })
    }

    pub fn output_len(&self) -> usize {
        (self.rx_len + self.tx_len - 2) * self.factor + 1
    }

    pub fn output_rate(&self) -> f64 {
        self.sample_rate * self.factor as f64
    }

    pub fn correlate(&self, rx: &RealSignal) -> Result<ComplexSignal> {
        let factor = self.factor;
        if rx.sample_rate != self.sample_rate {
            return Err(Error::SampleRateMismatch(rx.sample_rate, self.sample_rate));
        }
        if rx.len() != self.rx_len {
            return Err(Error::ShapeMismatch(format!(
                "record has {} samples, correlator expects {}",
                rx.len(),
                self.rx_len
            )));
        }
        // analytic signal of the record over its own length
        let mut a: Vec<Complex64> = rx.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd_rx.process(&mut a);
        apply_hilbert_mask(&mut a);
        self.inv_rx.process(&mut a);
        let rx_scale = 1.0 / self.rx_len as f64;

        let l = self.fft_len;
        let mut buf = vec![Complex64::new(0.0, 0.0); l];
        for (dst, src) in buf.iter_mut().zip(&a) {
            *dst = *src * rx_scale;
        }
        self.fwd.process(&mut buf);
        for (z, r) in buf.iter_mut().zip(&self.replica_spectrum_conj) {
            *z *= r;
        }

        let big = l * factor;
        let mut up = if factor == 1 {
            buf
        } else {
            let mut up = vec![Complex64::new(0.0, 0.0); big];
            let half = l / 2;
            up[..half].copy_from_slice(&buf[..half]);
            up[big - half + 1..].copy_from_slice(&buf[half + 1..]);
            // split the Nyquist bin between the two sides
            up[half] = buf[half] * 0.5;
            up[big - half] = buf[half] * 0.5;
            up
        };
        self.inv.process(&mut up);
        let scale = 1.0 / l as f64;

        let neg = (self.tx_len - 1) * factor;
        let pos = (self.rx_len - 1) * factor + 1;
        let mut out = Vec::with_capacity(neg + pos);
        out.extend(up[big - neg..].iter().map(|z| z * scale));
        out.extend(up[..pos].iter().map(|z| z * scale));
        let start = rx.start_time - self.tx_start - (self.tx_len - 1) as f64 / self.sample_rate;
        Ok(SampledSignal::new(self.sample_rate * factor as f64, start, out))
    }
}

/// Complex matched-filter output of `rx` against replica `tx`.
pub fn replica_correlate(rx: &RealSignal, tx: &RealSignal) -> Result<ComplexSignal> {
    if rx.sample_rate != tx.sample_rate {
        return Err(Error::SampleRateMismatch(rx.sample_rate, tx.sample_rate));
    }
    ReplicaCorrelator::new(tx, rx.len())?.correlate(rx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delayed(tx: &RealSignal, delay: usize, total: usize) -> RealSignal {
        let mut s = vec![0.0; total];
        s[delay..delay + tx.len()].copy_from_slice(&tx.samples);
        SampledSignal::new(tx.sample_rate, 0.0, s)
    }

    #[test]
    fn default_pulse_length() {
        let s = make_lfm(&WaveformSpec::default()).unwrap();
        assert_eq!(s.len(), 1000);
        assert_eq!(s.samples[0], 0.0);
        assert_eq!(s.start_time, 0.0);
    }

    #[test]
    fn instantaneous_frequency_endpoints() {
        let spec = WaveformSpec::default();
        let h = 1e-7;
        let f = |t: f64| (spec.phase_cycles(t + h) - spec.phase_cycles(t - h)) / (2.0 * h);
        assert!((f(0.0) - 30_000.0).abs() < 1e-3);
        assert!((f(spec.duration) - 10_000.0).abs() < 1e-3);
    }

    #[test]
    fn eval_matches_samples() {
        let spec = WaveformSpec::default();
        let s = make_lfm(&spec).unwrap();
        for (i, v) in s.samples.iter().enumerate() {
            let t = i as f64 / spec.sample_rate;
            assert!((spec.eval(t) - v).abs() < 1e-12);
        }
        assert_eq!(spec.eval(-1e-6), 0.0);
        assert_eq!(spec.eval(spec.support() + 1e-6), 0.0);
    }

    #[test]
    fn tukey_limits_and_flat_region() {
        assert!(make_tukey(17, 0.0).unwrap().iter().all(|&v| v == 1.0));
        let w = make_tukey(1000, 0.1).unwrap();
        for v in &w[50..=949] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(w[49] < 1.0 && w[950] < 1.0);
        for i in 0..1000 {
            assert!((w[i] - w[999 - i]).abs() < 1e-12);
        }
        let hann = make_tukey(64, 1.0).unwrap();
        for (i, v) in hann.iter().enumerate() {
            let expect = 0.5 * (1.0 - (2.0 * PI * i as f64 / 63.0).cos());
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn tukey_rejects_bad_input() {
        assert!(make_tukey(1, 0.1).is_err());
        assert!(make_tukey(10, 1.5).is_err());
        assert!(make_tukey(10, -0.1).is_err());
    }

    #[test]
    fn validate_rejects_aliased_chirp() {
        let spec = WaveformSpec {
            f_start: 60_000.0,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
        let spec = WaveformSpec {
            duration: 1e-5,
            ..Default::default()
        };
        assert!(make_lfm(&spec).is_err());
    }

    #[test]
    fn analytic_signal_of_cosine() {
        let fs = 1000.0;
        let f = 50.0;
        let n = 1000;
        let s = SampledSignal::new(
            fs,
            0.0,
            (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).cos()).collect(),
        );
        let a = analytic_signal(&s).unwrap();
        for i in 100..900 {
            let expect = (2.0 * PI * f * i as f64 / fs).sin();
            assert!((a.samples[i].im - expect).abs() < 1e-6);
            assert!((a.samples[i].re - s.samples[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn analytic_envelope_follows_window() {
        let spec = WaveformSpec::default();
        let s = make_lfm(&spec).unwrap();
        let a = analytic_signal(&s).unwrap();
        for (z, r) in a.samples.iter().zip(&s.samples) {
            assert!((z.re - r).abs() < 1e-9);
        }
        let w = make_tukey(1000, 0.1).unwrap();
        let dev = (50..=949)
            .map(|i| (a.samples[i].norm() - w[i]).abs())
            .fold(0.0, f64::max);
        assert!(dev < 0.05, "envelope deviation {dev}");
    }

    #[test]
    fn autocorrelation_peaks_at_zero() {
        let tx = make_lfm(&WaveformSpec::default()).unwrap();
        let c = replica_correlate(&tx, &tx).unwrap();
        let (i, _) = c.peak();
        assert!(c.time_of(i).abs() < 1e-12);
    }

    #[test]
    fn delayed_echo_peaks_at_delay() {
        let tx = make_lfm(&WaveformSpec::default()).unwrap();
        let rx = delayed(&tx, 100, 1500);
        let c = replica_correlate(&rx, &tx).unwrap();
        let (i, peak) = c.peak();
        assert!((c.time_of(i) - 1e-3).abs() < 1e-12);

        let scaled = SampledSignal::new(rx.sample_rate, 0.0, rx.samples.iter().map(|v| 2.5 * v).collect());
        let c2 = replica_correlate(&scaled, &tx).unwrap();
        let (i2, peak2) = c2.peak();
        assert_eq!(i, i2);
        assert!((peak2 / peak - 2.5).abs() < 1e-9);
    }

    #[test]
    fn swapping_arguments_reverses_lags() {
        let tx = make_lfm(&WaveformSpec::default()).unwrap();
        let rx = delayed(&tx, 37, 1200);
        let a = replica_correlate(&rx, &tx).unwrap();
        let b = replica_correlate(&tx, &rx).unwrap();
        assert_eq!(a.len(), b.len());
        let n = a.len();
        let peak = a.peak().1;
        for k in 0..n {
            let d = (a.samples[k] - b.samples[n - 1 - k].conj()).norm();
            assert!(d < 1e-9 * peak);
        }
    }

    #[test]
    fn sample_rate_mismatch_is_an_error() {
        let tx = make_lfm(&WaveformSpec::default()).unwrap();
        let rx = SampledSignal::new(50_000.0, 0.0, vec![0.0; 100]);
        assert!(matches!(
            replica_correlate(&rx, &tx),
            Err(Error::SampleRateMismatch(..))
        ));
    }

    #[test]
    fn compressed_pulse_width_matches_bandwidth() {
        let spec = WaveformSpec::default();
        let tx = make_lfm(&spec).unwrap();
        let c = replica_correlate(&tx, &tx).unwrap();
        let mag: Vec<f64> = c.samples.iter().map(|z| z.norm()).collect();
        let (p, peak) = c.peak();
        let half = peak / 2f64.sqrt();
        // linear interpolation of the -3 dB crossing on each side
        let crossing = |dir: isize| -> f64 {
            let mut i = p as isize;
            loop {
                let j = i + dir;
                let (a, b) = (mag[i as usize], mag[j as usize]);
                if b < half {
                    return i as f64 + dir as f64 * (a - half) / (a - b);
                }
                i = j;
            }
        };
        let width = (crossing(1) - crossing(-1)) / spec.sample_rate;
        let expect = 1.0 / spec.bandwidth();
        assert!(
            (width - expect).abs() < 0.3 * expect,
            "-3 dB width {width:e} s vs {expect:e} s"
        );
    }
}
