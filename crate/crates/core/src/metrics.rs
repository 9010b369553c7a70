//! Concentration and accuracy measures for time-frequency representations.

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::{IdealTF, SampledSignal};
use crate::stft::{stft, StftConfig, TfAxes};
use crate::window::{build_window_family, WindowKind};

/// Rényi entropy in bits of `mag` treated as a mass distribution.
///
/// Cells are normalized by the total mass first, so the value is invariant
/// under scaling and a single nonzero cell scores 0.
pub fn renyi_entropy(mag: ArrayView2<'_, f64>, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || alpha == 1.0 {
        return Err(Error::InvalidParameter(format!("alpha must be positive and != 1, got {alpha}")));
    }
    let total: f64 = mag.iter().map(|m| m.abs()).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroDistribution);
    }
    let s: f64 = mag.iter().map(|m| (m.abs() / total).powf(alpha)).sum();
    Ok(s.log2() / (1.0 - alpha))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSearch {
    pub sigma_opt: f64,
    /// `(sigma, entropy)` for every grid point.
    pub curve: Vec<(f64, f64)>,
}

/// Window width minimizing the Rényi entropy of `|V^g|`; ties go to the
/// smaller width.
pub fn optimize_sigma(
    sig: &SampledSignal,
    grid: &[f64],
    alpha: f64,
    cfg: StftConfig,
) -> Result<SigmaSearch> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("sigma grid is empty".into()));
    }
    let curve = grid
        .par_iter()
        .map(|&sigma| {
            let fam = build_window_family(sigma, sig.sample_rate(), 1, 4.0)?;
            let v = stft(sig, &fam, WindowKind::G, cfg)?;
            Ok((sigma, renyi_entropy(v.magnitude().view(), alpha)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, &(s, h)) in curve.iter().enumerate() {
        let (bs, bh) = curve[best];
        if h < bh || (h == bh && s < bs) {
            best = i;
        }
    }
    Ok(SigmaSearch {
        sigma_opt: curve[best].0,
        curve,
    })
}

/// Parses `start:step:stop` (inclusive) into a grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidParameter(format!("bad grid '{spec}': {e}")))?;
    let [start, step, stop] = parts[..] else {
        return Err(Error::InvalidParameter(format!("grid '{spec}' must be start:step:stop")));
    };
    if !(step > 0.0) || stop < start {
        return Err(Error::InvalidParameter(format!("grid '{spec}' is empty")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// Fraction of total energy held by the `c` largest cells, for `c = 1..=max_count`.
pub fn normalized_energy_curve(mag: ArrayView2<'_, f64>, max_count: usize) -> Vec<f64> {
    let mut e: Vec<f64> = mag.iter().map(|m| m * m).collect();
    e.par_sort_unstable_by(|a, b| b.total_cmp(a));
    let total: f64 = e.iter().sum();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(max_count);
    for c in 0..max_count {
        if let Some(v) = e.get(c) {
            acc += v;
        }
        out.push(if total > 0.0 { (acc / total).min(1.0) } else { 0.0 });
    }
    if max_count >= e.len() && total > 0.0 {
        if let Some(last) = out.last_mut() {
            *last = 1.0;
        }
    }
    out
}

/// Wasserstein-1 distance between two discrete distributions on the line.
///
/// Weights need not be normalized; each side is rescaled to unit mass.
pub fn emd_1d(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    let sa: f64 = a.iter().map(|p| p.1).sum();
    let sb: f64 = b.iter().map(|p| p.1).sum();
    if !(sa > 0.0 && sb > 0.0) {
        return Err(Error::ZeroDistribution);
    }
    let mut events: Vec<(f64, f64)> = a
        .iter()
        .map(|&(x, w)| (x, w / sa))
        .chain(b.iter().map(|&(x, w)| (x, -w / sb)))
        .collect();
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut cdf = 0.0;
    let mut dist = 0.0;
    for pair in events.windows(2) {
        cdf += pair[0].1;
        dist += cdf.abs() * (pair[1].0 - pair[0].0);
    }
    Ok(dist)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmdOptions {
    /// Score a single mode inside its own sub-band.
    pub mode: Option<usize>,
    /// Frames whose masses are all at or below this are skipped.
    pub floor: f64,
}

impl Default for EmdOptions {
    fn default() -> Self {
        Self {
            mode: None,
            floor: 0.0,
        }
    }
}

/// Mean over frames of the 1-D EMD (Hz) between each mass column and the
/// amplitude-weighted ideal IF lines.
///
/// With `opts.mode = Some(k)`, only bins within half the minimum separation
/// between mode `k` and any other mode are used, against mode `k` alone.
pub fn emd_to_ideal(
    mass: ArrayView2<'_, f64>,
    axes: &TfAxes,
    ideal: &IdealTF,
    opts: &EmdOptions,
) -> Result<f64> {
    let (nf, nb) = mass.dim();
    if ideal.len() != nf {
        return Err(Error::AxisMismatch(format!(
            "{nf} frames but ideal has {} times",
            ideal.len()
        )));
    }
    for (i, &t) in ideal.times.iter().enumerate() {
        if (axes.frame_time(i) - t).abs() > 1e-9 * axes.t_step.max(1e-12) + 1e-12 {
            return Err(Error::AxisMismatch(format!(
                "frame {i} at {} s but ideal at {t} s",
                axes.frame_time(i)
            )));
        }
    }
    if let Some(k) = opts.mode {
        if k >= ideal.modes.len() {
            return Err(Error::InvalidParameter(format!("no mode {k}")));
        }
    }
    let halfwidth = match opts.mode {
        Some(k) if ideal.modes.len() > 1 => {
            let mut sep = f64::INFINITY;
            for (j, other) in ideal.modes.iter().enumerate() {
                if j == k {
                    continue;
                }
                for (a, b) in ideal.modes[k].freq.iter().zip(&other.freq) {
                    sep = sep.min((a - b).abs());
                }
            }
            0.5 * sep
        }
        _ => f64::INFINITY,
    };
    let per_frame: Vec<Option<f64>> = (0..nf)
        .into_par_iter()
        .map(|i| {
            let col = mass.row(i);
            let (center, lines): (f64, Vec<(f64, f64)>) = match opts.mode {
                Some(k) => {
                    let m = &ideal.modes[k];
                    (m.freq[i], vec![(m.freq[i], m.amp[i])])
                }
                None => (
                    0.0,
                    ideal.modes.iter().map(|m| (m.freq[i], m.amp[i])).collect(),
                ),
            };
            let pts: Vec<(f64, f64)> = (0..nb)
                .map(|b| (axes.bin_freq(b), col[b]))
                .filter(|&(f, _)| (f - center).abs() <= halfwidth)
                .collect();
            if pts.iter().all(|p| p.1 <= opts.floor) {
                return None;
            }
            emd_1d(&pts, &lines).ok()
        })
        .collect();
    let used: Vec<f64> = per_frame.into_iter().flatten().collect();
    if used.is_empty() {
        return Err(Error::ZeroDistribution);
    }
    Ok(used.iter().sum::<f64>() / used.len() as f64)
}

/// Summary of one evaluated representation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub renyi_bits: f64,
    pub sigma_opt: f64,
    pub normalized_energy: Vec<f64>,
    pub emd: f64,
    pub snr_out_db: Vec<f64>,
}
