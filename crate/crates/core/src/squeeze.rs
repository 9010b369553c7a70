//! Synchrosqueezing along frequency and classical spectrogram reassignment.

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operators::IfEstimateField;
use crate::stft::{MatrixKind, TfAxes, TfMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeConfig {
    /// Coefficients with `|V| <= gamma` are discarded.
    pub gamma: f64,
    /// Output bins over `[0, fs/2)`; `None` keeps the input grid.
    pub n_out_bins: Option<usize>,
}

impl SqueezeConfig {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            n_out_bins: None,
        }
    }
}

/// Bookkeeping for coefficients that did not land on the output grid.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SqueezeDiagnostics {
    /// Estimates outside the output band.
    pub dropped: usize,
    /// `sum |V|^2` of the dropped coefficients.
    pub dropped_energy: f64,
    /// Scaled complex sum the dropped coefficients would have contributed.
    pub dropped_sum: Complex64,
    /// Pixels per applied estimator order, index = order (0 = invalid).
    pub order_histogram: [usize; 5],
}

impl SqueezeDiagnostics {
    pub fn merge(&mut self, other: &SqueezeDiagnostics) {
        self.dropped += other.dropped;
        self.dropped_energy += other.dropped_energy;
        self.dropped_sum += other.dropped_sum;
        for (a, b) in self.order_histogram.iter_mut().zip(other.order_histogram) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Squeezed {
    pub matrix: TfMatrix,
    pub diagnostics: SqueezeDiagnostics,
}

/// Output frequency grid covering the same band as `axes` with `n_out` bins.
pub fn output_axes(axes: TfAxes, n_in: usize, n_out: usize) -> TfAxes {
    TfAxes {
        f_step: axes.f_step * n_in as f64 / n_out as f64,
        ..axes
    }
}

/// Squeezes one column into `out`, adding `scale * V` to the bin nearest
/// `omega` for every kept coefficient.
///
/// `out_axes` gives the output grid; returns the drop bookkeeping.
pub fn squeeze_column(
    v: &[Complex64],
    omega: &[f64],
    valid: &[bool],
    gamma: f64,
    scale: f64,
    out_axes: &TfAxes,
    out: &mut [Complex64],
) -> SqueezeDiagnostics {
    let mut diag = SqueezeDiagnostics::default();
    for ((z, &w), &ok) in v.iter().zip(omega).zip(valid) {
        if !ok || z.norm() <= gamma {
            continue;
        }
        match out_axes.nearest_bin(w, out.len()) {
            Some(k) => out[k] += z * scale,
            None => {
                diag.dropped += 1;
                diag.dropped_energy += z.norm_sqr();
                diag.dropped_sum += z * scale;
            }
        }
    }
    diag
}

fn check_axes(a: &TfAxes, b: &TfAxes) -> Result<()> {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);
    if close(a.t_start, b.t_start)
        && close(a.t_step, b.t_step)
        && close(a.f_start, b.f_start)
        && close(a.f_step, b.f_step)
    {
        Ok(())
    } else {
        Err(Error::AxisMismatch(format!("{a:?} vs {b:?}")))
    }
}

fn check_inputs(stft_g: &TfMatrix, ife: &IfEstimateField) -> Result<f64> {
    if stft_g.kind != MatrixKind::Stft {
        return Err(Error::KindMismatch {
            expected: MatrixKind::Stft.name(),
            actual: stft_g.kind.name(),
        });
    }
    check_axes(&stft_g.axes, &ife.axes)?;
    if stft_g.values.dim() != ife.omega_hat.dim() {
        return Err(Error::AxisMismatch(format!(
            "STFT is {:?} but IF field is {:?}",
            stft_g.values.dim(),
            ife.omega_hat.dim()
        )));
    }
    let sigma = stft_g
        .window
        .map(|w| w.sigma)
        .ok_or_else(|| Error::InvalidParameter("STFT lacks a window descriptor".into()))?;
    Ok(sigma)
}

/// Frequency synchrosqueezing of `stft_g` with the IF field `ife`.
///
/// The output stores `V * d_eta / g(0)`, so a column sum is already a
/// synthesis of the signal at that frame.
pub fn squeeze(stft_g: &TfMatrix, ife: &IfEstimateField, cfg: &SqueezeConfig) -> Result<Squeezed> {
    let sigma = check_inputs(stft_g, ife)?;
    if !(cfg.gamma >= 0.0) {
        return Err(Error::InvalidParameter("gamma must be nonnegative".into()));
    }
    let n_in = stft_g.n_bins();
    let n_out = cfg.n_out_bins.unwrap_or(n_in);
    if n_out == 0 {
        return Err(Error::InvalidParameter("n_out_bins must be positive".into()));
    }
    let axes = output_axes(stft_g.axes, n_in, n_out);
    let scale = stft_g.axes.f_step * sigma;
    let mut values = Array2::zeros((stft_g.n_frames(), n_out));
    let diagnostics = values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(i, mut row)| {
            let v = stft_g.values.row(i);
            let w = ife.omega_hat.row(i);
            let ok = ife.valid.row(i);
            let out = row.as_slice_mut().expect("contiguous row");
            let mut d = squeeze_column(
                v.as_slice().expect("contiguous row"),
                w.as_slice().expect("contiguous row"),
                ok.as_slice().expect("contiguous row"),
                cfg.gamma,
                scale,
                &axes,
                out,
            );
            for &o in ife.order_used.row(i) {
                d.order_histogram[(o as usize).min(4)] += 1;
            }
            d
        })
        .reduce(SqueezeDiagnostics::default, |mut a, b| {
            a.merge(&b);
            a
        });
    Ok(Squeezed {
        matrix: TfMatrix {
            values,
            axes,
            kind: MatrixKind::Squeezed,
            window: stft_g.window,
        },
        diagnostics,
    })
}

/// Reassigned spectrogram: `|V|^2` moved to the cell nearest `(tau, omega)`.
///
/// Pixels without a valid estimate stay in place; relocations leaving the
/// grid are dropped and reported.
pub fn reassign_spectrogram(
    stft_g: &TfMatrix,
    ife: &IfEstimateField,
) -> Result<(TfMatrix<f64>, SqueezeDiagnostics)> {
    check_inputs(stft_g, ife)?;
    let tau = ife
        .tau_hat
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("reassignment needs the time operator".into()))?;
    let (nf, nb) = stft_g.values.dim();
    let axes = stft_g.axes;
    let mut out = Array2::<f64>::zeros((nf, nb));
    let mut diag = SqueezeDiagnostics::default();
    Zip::indexed(&stft_g.values)
        .and(&ife.omega_hat)
        .and(tau)
        .and(&ife.valid)
        .for_each(|(i, b), z, &w, &t, &ok| {
            let e = z.norm_sqr();
            if !ok {
                out[[i, b]] += e;
                return;
            }
            let fi = ((t - axes.t_start) / axes.t_step).round();
            match axes.nearest_bin(w, nb) {
                Some(k) if fi >= 0.0 && fi < nf as f64 => out[[fi as usize, k]] += e,
                _ => {
                    diag.dropped += 1;
                    diag.dropped_energy += e;
                }
            }
        });
    for &o in ife.order_used.iter() {
        diag.order_histogram[(o as usize).min(4)] += 1;
    }
    Ok((
        TfMatrix {
            values: out,
            axes,
            kind: MatrixKind::Reassigned,
            window: stft_g.window,
        },
        diag,
    ))
}
