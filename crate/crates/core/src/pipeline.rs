//! End-to-end drivers: transform, ridge reconstruction and parameter sweeps.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{optimize_sigma, parse_grid};
use crate::operators::{estimate, estimate_frame, Estimator, OperatorOptions};
use crate::ridge::{extract_ridges, reconstruct_mode, RidgeConfig, RidgeSet};
use crate::signal::{analytic, output_snr, SampledSignal};
use crate::squeeze::{
    output_axes, reassign_spectrogram, squeeze_column, SqueezeDiagnostics,
};
use crate::stft::{
    FrameFields, MatrixKind, StftConfig, StftEngine, StftStack, TfMatrix, WindowDescriptor,
};
use crate::window::{build_window_family, WindowKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Stft,
    Rm,
    Fsst,
    Fsst2,
    Fsst3,
    Fsst4,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Stft,
        Method::Rm,
        Method::Fsst,
        Method::Fsst2,
        Method::Fsst3,
        Method::Fsst4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Stft => "stft",
            Method::Rm => "rm",
            Method::Fsst => "fsst",
            Method::Fsst2 => "fsst2",
            Method::Fsst3 => "fsst3",
            Method::Fsst4 => "fsst4",
        }
    }

    /// Estimator used for squeezing; `None` for the plain STFT and RM.
    pub fn squeeze_estimator(self) -> Option<Estimator> {
        match self {
            Method::Stft | Method::Rm => None,
            Method::Fsst => Some(Estimator::FirstOrder),
            Method::Fsst2 => Some(Estimator::SecondOrderEta),
            Method::Fsst3 => Some(Estimator::OrderN(3)),
            Method::Fsst4 => Some(Estimator::OrderN(4)),
        }
    }

    /// Whether modes can be reconstructed from the output.
    pub fn is_invertible(self) -> bool {
        self.squeeze_estimator().is_some()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaChoice {
    /// Minimize the Rényi entropy over the configured grid.
    Auto,
    Fixed(f64),
}

impl FromStr for SigmaChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(SigmaChoice::Auto);
        }
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("sigma must be 'auto' or a number, got '{s}'")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {v}")));
        }
        Ok(SigmaChoice::Fixed(v))
    }
}

pub const DEFAULT_SIGMA_GRID: &str = "0.01:0.01:0.2";

#[derive(Debug, Clone, PartialEq)]
pub struct TransformConfig {
    pub method: Method,
    pub sigma: SigmaChoice,
    pub sigma_grid: Vec<f64>,
    /// Rényi order for the automatic window choice.
    pub alpha: f64,
    /// Threshold relative to `max |V^g|`.
    pub gamma_rel: f64,
    pub stft: StftConfig,
    /// Window truncation in units of sigma.
    pub half_support: f64,
    pub operator: OperatorOptions,
}

impl TransformConfig {
    pub fn new(method: Method, sigma: SigmaChoice) -> Self {
        Self {
            method,
            sigma,
            sigma_grid: parse_grid(DEFAULT_SIGMA_GRID).expect("valid default grid"),
            alpha: 3.0,
            gamma_rel: 1e-3,
            stft: StftConfig::default(),
            half_support: 4.0,
            operator: OperatorOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransformOutput {
    pub method: Method,
    pub sigma: f64,
    pub gamma: f64,
    pub stft_g: TfMatrix,
    pub squeezed: Option<TfMatrix>,
    pub reassigned: Option<TfMatrix<f64>>,
    pub diagnostics: SqueezeDiagnostics,
}

impl TransformOutput {
    /// Magnitude of the representation: `|V|`, `|T|`, or the square root of
    /// the reassigned energy, so that squaring gives energy for every method.
    pub fn magnitude(&self) -> TfMatrix<f64> {
        let (values, axes) = match (&self.squeezed, &self.reassigned) {
            (Some(t), _) => (t.magnitude(), t.axes),
            (None, Some(r)) => (r.values.mapv(f64::sqrt), r.axes),
            (None, None) => (self.stft_g.magnitude(), self.stft_g.axes),
        };
        TfMatrix {
            values,
            axes,
            kind: MatrixKind::Magnitude,
            window: self.stft_g.window,
        }
    }
}

pub fn resolve_sigma(sig: &SampledSignal, cfg: &TransformConfig) -> Result<f64> {
    match cfg.sigma {
        SigmaChoice::Fixed(s) => Ok(s),
        SigmaChoice::Auto => Ok(optimize_sigma(sig, &cfg.sigma_grid, cfg.alpha, cfg.stft)?.sigma_opt),
    }
}

/// Runs the configured method on `sig`.
pub fn transform(sig: &SampledSignal, cfg: &TransformConfig) -> Result<TransformOutput> {
    if !(cfg.gamma_rel >= 0.0) {
        return Err(Error::InvalidParameter("gamma_rel must be nonnegative".into()));
    }
    let sigma = resolve_sigma(sig, cfg)?;
    let order = cfg.method.squeeze_estimator().map_or(1, Estimator::order);
    let mut fam = build_window_family(sigma, sig.sample_rate(), order, cfg.half_support)?;
    if cfg.method == Method::Rm {
        fam = fam.with_kind(WindowKind::TG);
    }
    let base = StftStack::compute_kinds(sig, &fam, &[WindowKind::G], cfg.stft)?;
    let stft_g = base.matrix(WindowKind::G)?;
    let gamma = cfg.gamma_rel * stft_g.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut out = TransformOutput {
        method: cfg.method,
        sigma,
        gamma,
        stft_g,
        squeezed: None,
        reassigned: None,
        diagnostics: SqueezeDiagnostics::default(),
    };
    match cfg.method {
        Method::Stft => {}
        Method::Rm => {
            let kinds = [WindowKind::G, WindowKind::TG, WindowKind::DG];
            let stack = StftStack::compute_kinds(sig, &fam, &kinds, cfg.stft)?;
            let ife = estimate(&stack, Estimator::FirstOrder, gamma, &cfg.operator)?;
            let (rm, diag) = reassign_spectrogram(&out.stft_g, &ife)?;
            out.reassigned = Some(rm);
            out.diagnostics = diag;
        }
        m => {
            let est = m.squeeze_estimator().expect("squeezing method");
            let (t, diag) = fused_squeeze(sig, &fam, est, gamma, cfg.stft, &cfg.operator)?;
            out.squeezed = Some(t);
            out.diagnostics = diag;
        }
    }
    Ok(out)
}

/// Squeezes frame by frame without storing the window stack.
///
/// Equivalent to `estimate` followed by `squeeze` on the full stack, with
/// memory proportional to one frame per worker.
pub fn fused_squeeze(
    sig: &SampledSignal,
    fam: &crate::window::WindowFamily,
    estimator: Estimator,
    gamma: f64,
    stft_cfg: StftConfig,
    opts: &OperatorOptions,
) -> Result<(TfMatrix, SqueezeDiagnostics)> {
    let kinds = estimator.required_kinds();
    let engine = StftEngine::new(sig, fam, &kinds, stft_cfg)?;
    let axes = engine.axes();
    let n_bins = engine.n_bins();
    let n_frames = engine.n_frames(sig.len());
    let out_axes = output_axes(axes, n_bins, n_bins);
    let scale = axes.f_step * fam.sigma();
    let x = sig.samples();
    let mut values = Array2::<Complex64>::zeros((n_frames, n_bins));
    let diags: Vec<Result<SqueezeDiagnostics>> = values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map_init(
            || (engine.scratch(), vec![vec![Complex64::new(0.0, 0.0); n_bins]; kinds.len()]),
            |(scratch, rows), (i, mut row)| {
                engine.frame(x, i, scratch, rows);
                let fields = FrameFields::new(&kinds, rows.iter().map(Vec::as_slice).collect());
                let est = estimate_frame(&fields, axes.frame_time(i), &axes, gamma, estimator, opts)?;
                let g = fields.get(WindowKind::G)?;
                let mut d = squeeze_column(
                    g,
                    &est.omega,
                    &est.valid,
                    gamma,
                    scale,
                    &out_axes,
                    row.as_slice_mut().expect("contiguous row"),
                );
                for &o in &est.order_used {
                    d.order_histogram[(o as usize).min(4)] += 1;
                }
                Ok(d)
            },
        )
        .collect();
    let mut diag = SqueezeDiagnostics::default();
    for d in diags {
        diag.merge(&d?);
    }
    let matrix = TfMatrix {
        values,
        axes: out_axes,
        kind: MatrixKind::Squeezed,
        window: Some(WindowDescriptor {
            sigma: fam.sigma(),
            kind: WindowKind::G,
        }),
    };
    Ok((matrix, diag))
}

/// Input ready for analysis plus what is needed to map results back.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    pub signal: SampledSignal,
    pub original_len: usize,
    pub real: bool,
}

/// Optionally zero-pads to the next power of two, then replaces real input
/// by its analytic signal.
pub fn prepare_input(sig: &SampledSignal, pad_pow2: bool) -> Result<PreparedInput> {
    let original_len = sig.len();
    let padded = if pad_pow2 {
        sig.zero_pad(original_len.next_power_of_two())
    } else {
        sig.clone()
    };
    let real = sig.is_real();
    let signal = if real { analytic(&padded)? } else { padded };
    Ok(PreparedInput {
        signal,
        original_len,
        real,
    })
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub ridges: RidgeSet,
    /// One estimate per ridge, in ridge order.
    pub modes: Vec<SampledSignal>,
}

impl Reconstruction {
    /// Sum of all mode estimates.
    pub fn total(&self) -> Result<SampledSignal> {
        let mut it = self.modes.iter();
        let first = it
            .next()
            .ok_or_else(|| Error::InvalidParameter("no modes reconstructed".into()))?
            .clone();
        it.try_fold(first, |acc, m| acc.add(m))
    }
}

/// Extracts ridges from the squeezed output.
pub fn ridges_of(out: &TransformOutput, cfg: &RidgeConfig) -> Result<RidgeSet> {
    let sq = squeezed_of(out)?;
    extract_ridges(sq.magnitude().view(), cfg)
}

fn squeezed_of(out: &TransformOutput) -> Result<&TfMatrix> {
    out.squeezed.as_ref().ok_or(Error::KindMismatch {
        expected: MatrixKind::Squeezed.name(),
        actual: match out.method {
            Method::Rm => MatrixKind::Reassigned.name(),
            _ => MatrixKind::Stft.name(),
        },
    })
}

/// Mode estimates for given ridges with band half width `d`.
///
/// `len` truncates the estimates (undoing padding); `real` keeps only the
/// real part, matching a real input converted to its analytic signal.
pub fn modes_from_ridges(
    out: &TransformOutput,
    ridges: &RidgeSet,
    d: usize,
    len: usize,
    real: bool,
) -> Result<Vec<SampledSignal>> {
    let sq = squeezed_of(out)?;
    ridges
        .ridges
        .iter()
        .map(|r| {
            let m = reconstruct_mode(sq, r, d, false)?;
            let mut s = m.into_samples();
            s.truncate(len);
            if real {
                for z in &mut s {
                    z.im = 0.0;
                }
            }
            SampledSignal::new(s, 1.0 / sq.axes.t_step, sq.axes.t_start)
        })
        .collect()
}

/// Ridge extraction followed by reconstruction in one call.
pub fn reconstruct(
    out: &TransformOutput,
    ridge_cfg: &RidgeConfig,
    d: usize,
    len: usize,
    real: bool,
) -> Result<Reconstruction> {
    let ridges = ridges_of(out, ridge_cfg)?;
    let modes = modes_from_ridges(out, &ridges, d, len, real)?;
    Ok(Reconstruction { ridges, modes })
}

/// Pairs each reference with a distinct estimate, maximizing the summed
/// output SNR. Returns, per reference, the estimate index (if any remain).
pub fn match_modes(refs: &[&SampledSignal], est: &[SampledSignal]) -> Result<Vec<Option<usize>>> {
    let mut snr = vec![vec![0.0; est.len()]; refs.len()];
    for (i, r) in refs.iter().enumerate() {
        for (j, e) in est.iter().enumerate() {
            let s = output_snr(r, e)?;
            snr[i][j] = if s.is_finite() { s } else { 1e6 };
        }
    }
    let mut best: (f64, Vec<Option<usize>>) = (f64::NEG_INFINITY, vec![None; refs.len()]);
    let mut cur = vec![None; refs.len()];
    let mut used = vec![false; est.len()];
    fn search(
        i: usize,
        score: f64,
        snr: &[Vec<f64>],
        cur: &mut Vec<Option<usize>>,
        used: &mut [bool],
        best: &mut (f64, Vec<Option<usize>>),
    ) {
        if i == snr.len() {
            if score > best.0 {
                *best = (score, cur.clone());
            }
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                cur[i] = Some(j);
                search(i + 1, score + snr[i][j], snr, cur, used, best);
                used[j] = false;
            }
        }
        let free = used.iter().filter(|u| !**u).count();
        if snr.len() - i > free {
            cur[i] = None;
            search(i + 1, score, snr, cur, used, best);
        }
    }
    if refs.len() > 8 || est.len() > 8 {
        return Err(Error::InvalidParameter("mode matching supports at most 8 modes".into()));
    }
    search(0, 0.0, &snr, &mut cur, &mut used, &mut best);
    Ok(best.1)
}

/// Output SNR per reference and for the summed signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrReport {
    pub per_mode: Vec<f64>,
    pub total: f64,
}

pub fn score_reconstruction(
    refs: &[&SampledSignal],
    total_ref: &SampledSignal,
    modes: &[SampledSignal],
) -> Result<SnrReport> {
    let pairing = match_modes(refs, modes)?;
    let per_mode = refs
        .iter()
        .zip(&pairing)
        .map(|(r, p)| match p {
            Some(j) => output_snr(r, &modes[*j]),
            None => Ok(0.0),
        })
        .collect::<Result<Vec<_>>>()?;
    let zero = SampledSignal::new(
        vec![Complex64::new(0.0, 0.0); total_ref.len()],
        total_ref.sample_rate(),
        total_ref.t0(),
    )?;
    let total_est = modes.iter().try_fold(zero, |acc, m| acc.add(m))?;
    Ok(SnrReport {
        per_mode,
        total: output_snr(total_ref, &total_est)?,
    })
}

/// Output SNRs for each band half width in `ds`, reusing one ridge set.
pub fn d_sweep(
    out: &TransformOutput,
    ridges: &RidgeSet,
    ds: &[usize],
    refs: &[&SampledSignal],
    total_ref: &SampledSignal,
    real: bool,
) -> Result<Vec<(usize, SnrReport)>> {
    ds.par_iter()
        .map(|&d| {
            let modes = modes_from_ridges(out, ridges, d, total_ref.len(), real)?;
            Ok((d, score_reconstruction(refs, total_ref, &modes)?))
        })
        .collect()
}
