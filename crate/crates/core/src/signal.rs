//! Signal containers, synthetic modes, noise injection and SNR arithmetic.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Uniformly sampled complex time series.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    samples: Vec<Complex64>,
    sample_rate: f64,
    t0: f64,
}

impl SampledSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64, t0: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("signal has no samples".into()));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            t0,
        })
    }

    pub fn from_real(samples: &[f64], sample_rate: f64, t0: f64) -> Result<Self> {
        Self::new(
            samples.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            sample_rate,
            t0,
        )
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Time of sample `n` in seconds.
    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.sample_rate
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.time(n)).collect()
    }

    /// True when every sample has an exactly zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.samples.iter().all(|z| z.im == 0.0)
    }

    /// Samplewise sum; both signals must share the grid length.
    pub fn add(&self, other: &SampledSignal) -> Result<SampledSignal> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a + b)
            .collect();
        SampledSignal::new(samples, self.sample_rate, self.t0)
    }

    pub fn scale(&self, c: Complex64) -> SampledSignal {
        SampledSignal {
            samples: self.samples.iter().map(|z| z * c).collect(),
            ..self.clone()
        }
    }

    /// Append zeros up to `len` samples (no-op when already that long).
    pub fn zero_pad(&self, len: usize) -> SampledSignal {
        let mut samples = self.samples.clone();
        if samples.len() < len {
            samples.resize(len, Complex64::new(0.0, 0.0));
        }
        SampledSignal { samples, ..self.clone() }
    }

    /// Standard deviation of the complex samples, sqrt(mean |x - mean|^2).
    pub fn std(&self) -> f64 {
        complex_std(&self.samples)
    }
}

pub(crate) fn complex_std(x: &[Complex64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<Complex64>() / n;
    (x.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / n).sqrt()
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// An AM-FM mode `A(t) exp(i 2 pi phi(t))` described by closed-form callbacks.
#[derive(Clone)]
pub struct ModeSpec {
    amplitude: ScalarFn,
    phase: ScalarFn,
    inst_freq: ScalarFn,
}

impl std::fmt::Debug for ModeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModeSpec").finish_non_exhaustive()
    }
}

impl ModeSpec {
    /// `inst_freq` must be the analytic derivative of `phase`.
    pub fn new<A, P, F>(amplitude: A, phase: P, inst_freq: F) -> Self
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        P: Fn(f64) -> f64 + Send + Sync + 'static,
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            amplitude: Arc::new(amplitude),
            phase: Arc::new(phase),
            inst_freq: Arc::new(inst_freq),
        }
    }

    /// Mode with `log A(t) = sum log_amp[k] t^k` and `phi(t) = sum phase[k] t^k`.
    pub fn polynomial(log_amp: &[f64], phase: &[f64]) -> Self {
        let la = Polynomial::new(log_amp.to_vec());
        let ph = Polynomial::new(phase.to_vec());
        let dph = ph.derivative();
        Self::new(
            move |t| la.eval(t).exp(),
            move |t| ph.eval(t),
            move |t| dph.eval(t),
        )
    }

    pub fn tone(freq: f64, amplitude: f64) -> Self {
        Self::new(move |_| amplitude, move |t| freq * t, move |_| freq)
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        (self.amplitude)(t)
    }

    pub fn phase(&self, t: f64) -> f64 {
        (self.phase)(t)
    }

    pub fn inst_freq(&self, t: f64) -> f64 {
        (self.inst_freq)(t)
    }

    /// Same phase, amplitude multiplied by `c`.
    pub fn scaled(&self, c: f64) -> ModeSpec {
        let amp = self.amplitude.clone();
        ModeSpec {
            amplitude: Arc::new(move |t| c * amp(t)),
            ..self.clone()
        }
    }
}

/// Dense power-basis polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial(Vec<f64>);

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }
}

/// Samples `A(t_j) exp(i 2 pi phi(t_j))` on `t_j = t0 + j / fs`.
pub fn synthesize(mode: &ModeSpec, n: usize, fs: f64, t0: f64) -> Result<SampledSignal> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let mut samples = Vec::with_capacity(n);
    let mut prev_phase = f64::NEG_INFINITY;
    for j in 0..n {
        let t = t0 + j as f64 / fs;
        let a = mode.amplitude(t);
        let p = mode.phase(t);
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidMode(format!("amplitude {a} at t = {t}")));
        }
        if !(p > prev_phase) {
            return Err(Error::InvalidMode(format!(
                "phase not increasing at t = {t}"
            )));
        }
        prev_phase = p;
        samples.push(Complex64::from_polar(a, 2.0 * PI * p));
    }
    SampledSignal::new(samples, fs, t0)
}

/// Instantaneous frequency and amplitude of one mode on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealTrack {
    pub freq: Vec<f64>,
    pub amp: Vec<f64>,
}

/// Ideal time-frequency representation: one track per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealTF {
    pub times: Vec<f64>,
    pub modes: Vec<IdealTrack>,
}

impl IdealTF {
    pub fn from_modes(modes: &[&ModeSpec], times: &[f64]) -> Self {
        Self {
            times: times.to_vec(),
            modes: modes
                .iter()
                .map(|m| IdealTrack {
                    freq: times.iter().map(|&t| m.inst_freq(t)).collect(),
                    amp: times.iter().map(|&t| m.amplitude(t)).collect(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Restrict to a single mode.
    pub fn mode(&self, k: usize) -> IdealTF {
        IdealTF {
            times: self.times.clone(),
            modes: vec![self.modes[k].clone()],
        }
    }
}

/// Polynomial chirp with quartic log-amplitude and quartic phase.
pub fn benchmark_mode_1() -> ModeSpec {
    ModeSpec::new(
        |t| (2.0 * (1.0 - t).powi(3) + t.powi(4)).exp(),
        |t| 50.0 * t + 30.0 * t.powi(3) - 20.0 * (1.0 - t).powi(4),
        |t| 50.0 + 90.0 * t * t + 80.0 * (1.0 - t).powi(3),
    )
}

/// Damped sinusoidal frequency modulation around 340 Hz.
pub fn benchmark_mode_2() -> ModeSpec {
    let w = 14.0 * PI;
    ModeSpec::new(
        |t| 1.0 + 5.0 * t * t + 7.0 * (1.0 - t).powi(6),
        move |t| {
            let s = t - 0.2;
            340.0 * t - 2.0 * (-2.0 * s).exp() * (w * s).sin()
        },
        move |t| {
            let s = t - 0.2;
            340.0 - 2.0 * (-2.0 * s).exp() * (w * (w * s).cos() - 2.0 * (w * s).sin())
        },
    )
}

/// The two-mode test signal on `[0, n / fs)` along with its ideal representation.
pub struct BenchmarkSignal {
    pub f1: SampledSignal,
    pub f2: SampledSignal,
    pub f: SampledSignal,
    pub ideal: IdealTF,
}

pub fn make_paper_signal(fs: f64, n: usize) -> Result<BenchmarkSignal> {
    let m1 = benchmark_mode_1();
    let m2 = benchmark_mode_2();
    let f1 = synthesize(&m1, n, fs, 0.0)?;
    let f2 = synthesize(&m2, n, fs, 0.0)?;
    let f = f1.add(&f2)?;
    let ideal = IdealTF::from_modes(&[&m1, &m2], &f.times());
    Ok(BenchmarkSignal { f1, f2, f, ideal })
}

/// Adds white Gaussian noise so that `20 log10(std(f) / std(noise)) = snr_db`.
///
/// Complex signals receive circular complex noise with equal variance on the
/// real and imaginary parts. `snr_db = +inf` returns the input unchanged.
pub fn add_noise(sig: &SampledSignal, snr_db: f64, seed: u64) -> Result<SampledSignal> {
    if snr_db == f64::INFINITY {
        return Ok(sig.clone());
    }
    let s = sig.std();
    if !(s > 0.0) {
        return Err(Error::UndefinedSnr);
    }
    let noise_std = s * 10f64.powf(-snr_db / 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = if sig.is_real() {
        sig.samples()
            .iter()
            .map(|z| {
                let g: f64 = StandardNormal.sample(&mut rng);
                z + noise_std * g
            })
            .collect()
    } else {
        let part = noise_std / 2f64.sqrt();
        sig.samples()
            .iter()
            .map(|z| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                z + Complex64::new(part * re, part * im)
            })
            .collect()
    };
    SampledSignal::new(samples, sig.sample_rate(), sig.t0())
}

/// Discrete analytic signal of a real input.
pub fn analytic(real_sig: &SampledSignal) -> Result<SampledSignal> {
    if !real_sig.is_real() {
        return Err(Error::InvalidParameter(
            "analytic() expects purely real samples".into(),
        ));
    }
    let n = real_sig.len();
    let mut buf = real_sig.samples().to_vec();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    for (k, z) in buf.iter_mut().enumerate() {
        let keep = k == 0 || (n % 2 == 0 && k == half);
        if keep {
            continue;
        }
        if k < n.div_ceil(2) {
            *z *= 2.0;
        } else {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    for z in &mut buf {
        *z *= scale;
    }
    SampledSignal::new(buf, real_sig.sample_rate(), real_sig.t0())
}

/// `20 log10(||f|| / ||f_r - f||)`; `+inf` when the estimate is exact.
pub fn output_snr(reference: &SampledSignal, estimate: &SampledSignal) -> Result<f64> {
    output_snr_slices(reference.samples(), estimate.samples())
}

pub fn output_snr_slices(reference: &[Complex64], estimate: &[Complex64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: estimate.len(),
        });
    }
    let signal: f64 = reference.iter().map(|z| z.norm_sqr()).sum();
    let err: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / err).log10())
}

/// Real chirp-up then ring-down waveform with known instantaneous frequency.
///
/// The inspiral frequency grows as a quartic up to the merger time, after which
/// it relaxes exponentially while the amplitude decays.
#[derive(Debug, Clone, Copy)]
pub struct ChirpRingdown {
    pub f_start: f64,
    pub f_peak: f64,
    pub f_drop: f64,
    pub t_merge: f64,
    pub tau_freq: f64,
    pub tau_amp: f64,
}

impl Default for ChirpRingdown {
    fn default() -> Self {
        Self {
            f_start: 40.0,
            f_peak: 250.0,
            f_drop: 60.0,
            t_merge: 0.6,
            tau_freq: 0.04,
            tau_amp: 0.06,
        }
    }
}

impl ChirpRingdown {
    pub fn inst_freq(&self, t: f64) -> f64 {
        if t < self.t_merge {
            let u = (t / self.t_merge).max(0.0);
            self.f_start + (self.f_peak - self.f_start) * u.powi(4)
        } else {
            let s = t - self.t_merge;
            self.f_peak - self.f_drop * (1.0 - (-s / self.tau_freq).exp())
        }
    }

    pub fn phase(&self, t: f64) -> f64 {
        let tm = self.t_merge;
        let rise = |t: f64| {
            self.f_start * t + (self.f_peak - self.f_start) * t.powi(5) / (5.0 * tm.powi(4))
        };
        if t < tm {
            rise(t)
        } else {
            let s = t - tm;
            rise(tm) + self.f_peak * s
                - self.f_drop * (s - self.tau_freq * (1.0 - (-s / self.tau_freq).exp()))
        }
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        if t < self.t_merge {
            let u = (t / self.t_merge).max(0.0);
            0.1 + 0.9 * u.powi(4)
        } else {
            (-(t - self.t_merge) / self.tau_amp).exp()
        }
    }

    /// Real strain `A(t) cos(2 pi phi(t))`.
    pub fn strain(&self, n: usize, fs: f64) -> Result<SampledSignal> {
        let x: Vec<f64> = (0..n)
            .map(|j| {
                let t = j as f64 / fs;
                self.amplitude(t) * (2.0 * PI * self.phase(t)).cos()
            })
            .collect();
        SampledSignal::from_real(&x, fs, 0.0)
    }
}
