//! Modified (window-centered) STFT engine.
//!
//! For frame center `t = t0 + c / fs` and bin `eta_k = k fs / n_fft` the engine
//! evaluates the rectangle-rule approximation
//!
//! ```text
//! V(t, eta_k) = (1/fs) * sum_m x[c + m] w(m / fs) exp(-i 2 pi eta_k m / fs)
//! ```
//!
//! with samples outside the signal taken as zero. Windows longer than `n_fft`
//! are folded modulo `n_fft`, which is exact on the DFT grid. Only the
//! non-negative half `[0, fs/2)` of the spectrum is kept.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::SampledSignal;
use crate::window::{WindowFamily, WindowKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Stft,
    Squeezed,
    Reassigned,
    Magnitude,
}

impl MatrixKind {
    pub fn name(self) -> &'static str {
        match self {
            MatrixKind::Stft => "stft",
            MatrixKind::Squeezed => "squeezed",
            MatrixKind::Reassigned => "spectrogram-reassigned",
            MatrixKind::Magnitude => "magnitude",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            MatrixKind::Stft => 0,
            MatrixKind::Squeezed => 1,
            MatrixKind::Reassigned => 2,
            MatrixKind::Magnitude => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => MatrixKind::Stft,
            1 => MatrixKind::Squeezed,
            2 => MatrixKind::Reassigned,
            3 => MatrixKind::Magnitude,
            _ => return None,
        })
    }
}

/// Uniform frame and bin axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfAxes {
    pub t_start: f64,
    pub t_step: f64,
    pub f_start: f64,
    pub f_step: f64,
}

impl TfAxes {
    pub fn frame_time(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.t_step
    }

    pub fn bin_freq(&self, k: usize) -> f64 {
        self.f_start + k as f64 * self.f_step
    }

    /// Nearest bin index for a frequency, if it rounds into `0..n_bins`.
    pub fn nearest_bin(&self, freq: f64, n_bins: usize) -> Option<usize> {
        let k = ((freq - self.f_start) / self.f_step).round();
        (k >= 0.0 && k < n_bins as f64).then_some(k as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowDescriptor {
    pub sigma: f64,
    pub kind: WindowKind,
}

/// Time-frequency matrix, rows are frames and columns are frequency bins.
#[derive(Debug, Clone, PartialEq)]
pub struct TfMatrix<T = Complex64> {
    pub values: Array2<T>,
    pub axes: TfAxes,
    pub kind: MatrixKind,
    pub window: Option<WindowDescriptor>,
}

impl<T> TfMatrix<T> {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.values.ncols()
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.n_frames()).map(|i| self.axes.frame_time(i)).collect()
    }

    pub fn bin_freqs(&self) -> Vec<f64> {
        (0..self.n_bins()).map(|k| self.axes.bin_freq(k)).collect()
    }
}

impl TfMatrix<Complex64> {
    pub fn magnitude(&self) -> Array2<f64> {
        self.values.mapv(|z| z.norm())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub hop: usize,
    /// FFT length; defaults to the signal length.
    pub n_fft: Option<usize>,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { hop: 1, n_fft: None }
    }
}

impl StftConfig {
    fn resolve(&self, sig_len: usize) -> Result<(usize, usize)> {
        if self.hop == 0 {
            return Err(Error::InvalidParameter("hop must be at least 1".into()));
        }
        let n_fft = self.n_fft.unwrap_or(sig_len);
        if n_fft < 2 {
            return Err(Error::InvalidParameter("n_fft must be at least 2".into()));
        }
        Ok((self.hop, n_fft))
    }
}

/// Per-thread buffers for [`StftEngine::frame`].
pub struct FrameScratch {
    segment: Vec<Complex64>,
    buf: Vec<Complex64>,
    fft: Vec<Complex64>,
}

/// Computes the spectra of several windows at one frame.
pub struct StftEngine<'a> {
    kinds: Vec<WindowKind>,
    taps: Vec<&'a [f64]>,
    half_len: usize,
    fft: Arc<dyn Fft<f64>>,
    n_fft: usize,
    n_bins: usize,
    hop: usize,
    axes: TfAxes,
    sigma: f64,
}

impl<'a> StftEngine<'a> {
    pub fn new(
        sig: &SampledSignal,
        fam: &'a WindowFamily,
        kinds: &[WindowKind],
        cfg: StftConfig,
    ) -> Result<Self> {
        if (fam.sample_rate() - sig.sample_rate()).abs() > 1e-9 * sig.sample_rate() {
            return Err(Error::AxisMismatch(format!(
                "window sampled at {} Hz but signal at {} Hz",
                fam.sample_rate(),
                sig.sample_rate()
            )));
        }
        let (hop, n_fft) = cfg.resolve(sig.len())?;
        let taps = kinds
            .iter()
            .map(|&k| fam.taps(k))
            .collect::<Result<Vec<_>>>()?;
        let fs = sig.sample_rate();
        Ok(Self {
            kinds: kinds.to_vec(),
            taps,
            half_len: fam.half_len(),
            fft: FftPlanner::new().plan_fft_forward(n_fft),
            n_fft,
            n_bins: n_fft / 2,
            hop,
            axes: TfAxes {
                t_start: sig.t0(),
                t_step: hop as f64 / fs,
                f_start: 0.0,
                f_step: fs / n_fft as f64,
            },
            sigma: fam.sigma(),
        })
    }

    pub fn kinds(&self) -> &[WindowKind] {
        &self.kinds
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn axes(&self) -> TfAxes {
        self.axes
    }

    pub fn n_frames(&self, sig_len: usize) -> usize {
        sig_len.div_ceil(self.hop)
    }

    pub fn scratch(&self) -> FrameScratch {
        FrameScratch {
            segment: vec![Complex64::new(0.0, 0.0); 2 * self.half_len + 1],
            buf: vec![Complex64::new(0.0, 0.0); self.n_fft],
            fft: vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()],
        }
    }

    /// Writes the spectrum of every engine window at frame `frame` into `out`.
    pub fn frame<O: AsMut<[Complex64]>>(
        &self,
        x: &[Complex64],
        frame: usize,
        scratch: &mut FrameScratch,
        out: &mut [O],
    ) {
        let center = (frame * self.hop) as isize;
        let half = self.half_len as isize;
        for (j, s) in scratch.segment.iter_mut().enumerate() {
            let idx = center + j as isize - half;
            *s = if idx >= 0 && (idx as usize) < x.len() {
                x[idx as usize]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        let scale = self.axes.t_step / self.hop as f64;
        let n = self.n_fft as isize;
        for (w, dst) in self.taps.iter().zip(out.iter_mut()) {
            scratch.buf.fill(Complex64::new(0.0, 0.0));
            for (j, (s, &wj)) in scratch.segment.iter().zip(w.iter()).enumerate() {
                let m = (j as isize - half).rem_euclid(n) as usize;
                scratch.buf[m] += s * wj;
            }
            self.fft.process_with_scratch(&mut scratch.buf, &mut scratch.fft);
            for (d, b) in dst.as_mut().iter_mut().zip(&scratch.buf[..self.n_bins]) {
                *d = b * scale;
            }
        }
    }
}

/// STFT of `sig` with the single window `kind`.
pub fn stft(
    sig: &SampledSignal,
    fam: &WindowFamily,
    kind: WindowKind,
    cfg: StftConfig,
) -> Result<TfMatrix> {
    let stack = StftStack::compute_kinds(sig, fam, &[kind], cfg)?;
    stack.matrix(kind)
}

/// Direct evaluation of `V(t_c, eta)` at an arbitrary frequency.
pub fn stft_point(
    sig: &SampledSignal,
    fam: &WindowFamily,
    kind: WindowKind,
    center: usize,
    eta: f64,
) -> Result<Complex64> {
    let w = fam.taps(kind)?;
    let fs = sig.sample_rate();
    let half = fam.half_len() as isize;
    let x = sig.samples();
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, &wj) in w.iter().enumerate() {
        let m = j as isize - half;
        let idx = center as isize + m;
        if idx < 0 || idx as usize >= x.len() {
            continue;
        }
        let phase = -2.0 * PI * eta * m as f64 / fs;
        acc += x[idx as usize] * wj * Complex64::from_polar(1.0, phase);
    }
    Ok(acc / fs)
}

/// Synthesis from one STFT column: `d_eta / conj(g(0)) * sum_eta col(eta)`.
pub fn inverse_column(col: &[Complex64], g0: Complex64, d_eta: f64) -> Result<Complex64> {
    if g0 == Complex64::new(0.0, 0.0) {
        return Err(Error::InvalidParameter("g(0) must be nonzero".into()));
    }
    Ok(col.iter().sum::<Complex64>() * d_eta / g0.conj())
}

/// Squared magnitude of an STFT.
pub fn spectrogram(tfr: &TfMatrix) -> Result<TfMatrix<f64>> {
    if tfr.kind != MatrixKind::Stft {
        return Err(Error::KindMismatch {
            expected: MatrixKind::Stft.name(),
            actual: tfr.kind.name(),
        });
    }
    Ok(TfMatrix {
        values: tfr.values.mapv(|z| z.norm_sqr()),
        axes: tfr.axes,
        kind: MatrixKind::Magnitude,
        window: tfr.window,
    })
}

/// STFTs of one signal with every window of a family, on shared axes.
#[derive(Debug, Clone)]
pub struct StftStack {
    kinds: Vec<WindowKind>,
    data: Array3<Complex64>,
    axes: TfAxes,
    sigma: f64,
}

/// Borrowed spectra of a single frame, looked up by window.
pub struct FrameFields<'a> {
    kinds: &'a [WindowKind],
    rows: Vec<&'a [Complex64]>,
}

impl<'a> FrameFields<'a> {
    pub fn new(kinds: &'a [WindowKind], rows: Vec<&'a [Complex64]>) -> Self {
        Self { kinds, rows }
    }

    pub fn get(&self, kind: WindowKind) -> Result<&'a [Complex64]> {
        self.kinds
            .iter()
            .position(|&k| k == kind)
            .map(|i| self.rows[i])
            .ok_or(Error::MissingField {
                power: kind.power,
                deriv: kind.deriv,
            })
    }

    pub fn contains(&self, kind: WindowKind) -> bool {
        self.kinds.contains(&kind)
    }

    pub fn n_bins(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }
}

impl StftStack {
    /// STFTs for every window in the family.
    pub fn compute(sig: &SampledSignal, fam: &WindowFamily, cfg: StftConfig) -> Result<Self> {
        let kinds: Vec<_> = fam.kinds().collect();
        Self::compute_kinds(sig, fam, &kinds, cfg)
    }

    pub fn compute_kinds(
        sig: &SampledSignal,
        fam: &WindowFamily,
        kinds: &[WindowKind],
        cfg: StftConfig,
    ) -> Result<Self> {
        let engine = StftEngine::new(sig, fam, kinds, cfg)?;
        let n_frames = engine.n_frames(sig.len());
        let mut data = Array3::zeros((kinds.len(), n_frames, engine.n_bins()));
        let x = sig.samples();
        data.axis_iter_mut(Axis(1))
            .into_par_iter()
            .enumerate()
            .for_each_init(
                || engine.scratch(),
                |scratch, (i, mut frame)| {
                    let mut rows: Vec<Vec<Complex64>> =
                        vec![vec![Complex64::new(0.0, 0.0); engine.n_bins()]; kinds.len()];
                    engine.frame(x, i, scratch, &mut rows);
                    for (k, row) in rows.iter().enumerate() {
                        for (d, v) in frame.row_mut(k).iter_mut().zip(row) {
                            *d = *v;
                        }
                    }
                },
            );
        Ok(Self {
            kinds: kinds.to_vec(),
            data,
            axes: engine.axes(),
            sigma: fam.sigma(),
        })
    }

    pub fn kinds(&self) -> &[WindowKind] {
        &self.kinds
    }

    pub fn axes(&self) -> TfAxes {
        self.axes
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn g0(&self) -> f64 {
        1.0 / self.sigma
    }

    pub fn n_frames(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn n_bins(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    fn slot(&self, kind: WindowKind) -> Result<usize> {
        self.kinds
            .iter()
            .position(|&k| k == kind)
            .ok_or(Error::MissingField {
                power: kind.power,
                deriv: kind.deriv,
            })
    }

    pub fn contains(&self, kind: WindowKind) -> bool {
        self.kinds.contains(&kind)
    }

    pub fn field(&self, kind: WindowKind) -> Result<ArrayView2<'_, Complex64>> {
        Ok(self.data.index_axis(Axis(0), self.slot(kind)?))
    }

    pub fn matrix(&self, kind: WindowKind) -> Result<TfMatrix> {
        Ok(TfMatrix {
            values: self.field(kind)?.to_owned(),
            axes: self.axes,
            kind: MatrixKind::Stft,
            window: Some(WindowDescriptor {
                sigma: self.sigma,
                kind,
            }),
        })
    }

    pub fn frame(&self, i: usize) -> FrameFields<'_> {
        let rows = (0..self.kinds.len())
            .map(|k| {
                self.data
                    .slice(s![k, i, ..])
                    .to_slice()
                    .expect("stack rows are contiguous")
            })
            .collect();
        FrameFields::new(&self.kinds, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synthesize, ModeSpec};
    use crate::window::build_window_family;

    fn tone(f0: f64, n: usize, fs: f64) -> SampledSignal {
        synthesize(&ModeSpec::tone(f0, 1.0), n, fs, 0.0).unwrap()
    }

    #[test]
    fn tone_magnitude_is_gaussian_lobe() {
        let (fs, n, sigma, f0) = (1024.0, 1024, 0.05, 100.0);
        let sig = tone(f0, n, fs);
        let fam = build_window_family(sigma, fs, 1, 4.0).unwrap();
        let v = stft(&sig, &fam, WindowKind::G, StftConfig::default()).unwrap();
        assert_eq!(v.n_frames(), 1024);
        assert_eq!(v.n_bins(), 512);
        let h = fam.half_len();
        for i in [h, 500, n - 1 - h] {
            for k in 70..130 {
                let eta = v.axes.bin_freq(k);
                let expected = (-PI * sigma * sigma * (eta - f0).powi(2)).exp();
                assert!((v.values[[i, k]].norm() - expected).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn tone_phase_follows_frame_center() {
        let sig = tone(100.0, 1024, 1024.0);
        let fam = build_window_family(0.05, 1024.0, 1, 4.0).unwrap();
        let v = stft(&sig, &fam, WindowKind::G, StftConfig::default()).unwrap();
        for i in [300, 301, 640] {
            let arg = v.values[[i, 100]].arg();
            let expected = sig.samples()[i].arg();
            assert!((Complex64::from_polar(1.0, arg - expected) - 1.0).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_signal_gives_zero_matrix() {
        let sig = SampledSignal::new(vec![Complex64::new(0.0, 0.0); 256], 256.0, 0.0).unwrap();
        let fam = build_window_family(0.05, 256.0, 2, 4.0).unwrap();
        let stack = StftStack::compute(&sig, &fam, StftConfig::default()).unwrap();
        for kind in fam.kinds() {
            assert!(stack.field(kind).unwrap().iter().all(|z| z.norm() == 0.0));
        }
        let spec = spectrogram(&stack.matrix(WindowKind::G).unwrap()).unwrap();
        assert!(spec.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inverse_column_recovers_tone() {
        let (fs, n) = (1024.0, 1024);
        let sig = tone(130.0, n, fs);
        let fam = build_window_family(0.04, fs, 1, 4.0).unwrap();
        let v = stft(&sig, &fam, WindowKind::G, StftConfig::default()).unwrap();
        let g0 = Complex64::new(fam.g0(), 0.0);
        for i in fam.half_len()..n - fam.half_len() {
            let row = v.values.row(i).to_vec();
            let rec = inverse_column(&row, g0, v.axes.f_step).unwrap();
            let x = sig.samples()[i];
            assert!((rec - x).norm() <= 1e-3 * x.norm());
        }
        assert_eq!(
            inverse_column(&[Complex64::new(0.0, 0.0); 8], g0, 1.0).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        assert!(inverse_column(&[Complex64::new(1.0, 0.0)], Complex64::new(0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn spectrogram_peaks_at_tone_bin() {
        let sig = tone(100.3, 1024, 1024.0);
        let fam = build_window_family(0.05, 1024.0, 1, 4.0).unwrap();
        let spec = spectrogram(&stft(&sig, &fam, WindowKind::G, StftConfig::default()).unwrap()).unwrap();
        for i in 300..700 {
            let row = spec.values.row(i);
            let kmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(kmax, 100);
        }
        assert!(spec.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn shift_covariance() {
        let fs = 512.0;
        let base: Vec<Complex64> = (0..600)
            .map(|j| {
                let t = j as f64 / fs;
                Complex64::from_polar(1.0 + t, 2.0 * PI * (60.0 * t + 40.0 * t * t))
            })
            .collect();
        let a = SampledSignal::new(base[..512].to_vec(), fs, 0.0).unwrap();
        let b = SampledSignal::new(base[7..519].to_vec(), fs, 0.0).unwrap();
        let fam = build_window_family(0.03, fs, 1, 4.0).unwrap();
        let va = stft(&a, &fam, WindowKind::G, StftConfig::default()).unwrap();
        let vb = stft(&b, &fam, WindowKind::G, StftConfig::default()).unwrap();
        for i in 100..300 {
            for k in 0..va.n_bins() {
                assert!((va.values[[i + 7, k]] - vb.values[[i, k]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn point_evaluation_matches_grid() {
        let sig = tone(77.0, 400, 400.0);
        let fam = build_window_family(0.1, 400.0, 2, 4.0).unwrap();
        let stack = StftStack::compute(&sig, &fam, StftConfig::default()).unwrap();
        for kind in fam.kinds() {
            let f = stack.field(kind).unwrap();
            for &(i, k) in &[(0usize, 3usize), (150, 77), (399, 120)] {
                let p = stft_point(&sig, &fam, kind, i, stack.axes().bin_freq(k)).unwrap();
                assert!((p - f[[i, k]]).norm() < 1e-10 * (1.0 + p.norm()));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn stft_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let fs = 128.0;
            let f = crate::signal::add_noise(&tone(20.0, 128, fs), 0.0, seed).unwrap();
            let h = tone(41.0, 128, fs);
            let mix: Vec<Complex64> = f.samples().iter().zip(h.samples()).map(|(x, y)| a * x + b * y).collect();
            let mix = SampledSignal::new(mix, fs, 0.0).unwrap();
            let fam = build_window_family(0.05, fs, 1, 4.0).unwrap();
            let cfg = StftConfig::default();
            let vf = stft(&f, &fam, WindowKind::G, cfg).unwrap();
            let vh = stft(&h, &fam, WindowKind::G, cfg).unwrap();
            let vm = stft(&mix, &fam, WindowKind::G, cfg).unwrap();
            for ((m, x), y) in vm.values.iter().zip(vf.values.iter()).zip(vh.values.iter()) {
                proptest::prop_assert!((m - (a * x + b * y)).norm() < 1e-12);
            }
        }
    }
}
