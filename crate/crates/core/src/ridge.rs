//! Greedy ridge extraction and ridge-band mode reconstruction.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::SampledSignal;
use crate::stft::{MatrixKind, TfAxes, TfMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeConfig {
    /// Number of ridges to extract.
    pub k: usize,
    /// Largest bin move between consecutive frames.
    pub jump: usize,
    /// Half width, in bins, of the band removed around an extracted ridge.
    pub clear_halfwidth: usize,
    /// Random start frames tried per ridge.
    pub n_starts: usize,
    pub seed: u64,
}

impl RidgeConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            jump: 8,
            clear_halfwidth: 2,
            n_starts: 8,
            seed: 0,
        }
    }

    /// Clearing band matched to a reconstruction half width `d`.
    pub fn for_band(k: usize, d: usize) -> Self {
        Self {
            clear_halfwidth: 2 * d + 2,
            ..Self::new(k)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSet {
    /// One bin index per frame for each ridge, strongest first.
    pub ridges: Vec<Vec<usize>>,
    /// Summed squared magnitude along each ridge.
    pub energies: Vec<f64>,
    pub config: RidgeConfig,
    /// Set when fewer than `config.k` ridges could be found.
    pub incomplete: bool,
}

impl RidgeSet {
    pub fn len(&self) -> usize {
        self.ridges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ridges.is_empty()
    }

    /// Ridge `r` converted to Hz.
    pub fn frequencies(&self, r: usize, axes: &TfAxes) -> Vec<f64> {
        self.ridges[r].iter().map(|&b| axes.bin_freq(b)).collect()
    }
}

fn argmax_in(row: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for b in lo..=hi {
        if row[b] > row[best] {
            best = b;
        }
    }
    best
}

/// Path grown forward and backward from the column maximum at `start`.
fn grow(energy: &Array2<f64>, start: usize, jump: usize) -> (Vec<usize>, f64) {
    let (nf, nb) = energy.dim();
    let row = |i: usize| energy.row(i).to_slice().expect("contiguous row");
    let mut path = vec![0usize; nf];
    path[start] = argmax_in(row(start), 0, nb - 1);
    let step = |prev: usize, i: usize| {
        argmax_in(row(i), prev.saturating_sub(jump), (prev + jump).min(nb - 1))
    };
    for i in start + 1..nf {
        path[i] = step(path[i - 1], i);
    }
    for i in (0..start).rev() {
        path[i] = step(path[i + 1], i);
    }
    let score = path.iter().enumerate().map(|(i, &b)| energy[[i, b]]).sum();
    (path, score)
}

/// Extracts up to `cfg.k` ridges of maximal summed energy `mag^2`.
///
/// Each ridge is the best of `cfg.n_starts` forward/backward greedy paths;
/// a band of `±cfg.clear_halfwidth` bins around it is then zeroed out.
pub fn extract_ridges(mag: ArrayView2<'_, f64>, cfg: &RidgeConfig) -> Result<RidgeSet> {
    if cfg.k == 0 || cfg.n_starts == 0 {
        return Err(Error::InvalidParameter("k and n_starts must be positive".into()));
    }
    if mag.iter().any(|&m| !(m >= 0.0)) {
        return Err(Error::InvalidParameter("magnitudes must be nonnegative".into()));
    }
    let (nf, nb) = mag.dim();
    if nf == 0 || nb == 0 {
        return Err(Error::InvalidParameter("empty magnitude matrix".into()));
    }
    let mut energy = mag.mapv(|m| m * m);
    let total: f64 = energy.sum();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut found: Vec<(Vec<usize>, f64)> = Vec::new();
    for _ in 0..cfg.k {
        let starts: Vec<usize> = (0..cfg.n_starts).map(|_| rng.gen_range(0..nf)).collect();
        let best = starts
            .par_iter()
            .map(|&s| grow(&energy, s, cfg.jump))
            .reduce_with(|a, b| if b.1 > a.1 { b } else { a })
            .expect("at least one start");
        if !(best.1 > 1e-12 * total) {
            break;
        }
        for (i, &b) in best.0.iter().enumerate() {
            let lo = b.saturating_sub(cfg.clear_halfwidth);
            let hi = (b + cfg.clear_halfwidth).min(nb - 1);
            energy.row_mut(i).slice_mut(ndarray::s![lo..=hi]).fill(0.0);
        }
        found.push(best);
    }
    found.sort_by(|a, b| b.1.total_cmp(&a.1));
    let incomplete = found.len() < cfg.k;
    let (ridges, energies) = found.into_iter().unzip();
    Ok(RidgeSet {
        ridges,
        energies,
        config: *cfg,
        incomplete,
    })
}

/// Sums squeezed coefficients in `[ridge - d, ridge + d]` per frame.
///
/// Squeezed values already carry the synthesis constant, so no further
/// scaling is applied. `real_input` returns `2 Re` of the estimate.
pub fn reconstruct_mode(
    squeezed: &TfMatrix,
    ridge: &[usize],
    d: usize,
    real_input: bool,
) -> Result<SampledSignal> {
    if squeezed.kind != MatrixKind::Squeezed {
        return Err(Error::KindMismatch {
            expected: MatrixKind::Squeezed.name(),
            actual: squeezed.kind.name(),
        });
    }
    let (nf, nb) = squeezed.values.dim();
    if ridge.len() != nf {
        return Err(Error::LengthMismatch {
            expected: nf,
            actual: ridge.len(),
        });
    }
    if let Some(&b) = ridge.iter().find(|&&b| b >= nb) {
        return Err(Error::InvalidParameter(format!("ridge bin {b} out of range")));
    }
    let samples: Vec<Complex64> = ridge
        .par_iter()
        .enumerate()
        .map(|(i, &b)| {
            let lo = b.saturating_sub(d);
            let hi = b.saturating_add(d).min(nb - 1);
            let z: Complex64 = squeezed.values.row(i).slice(ndarray::s![lo..=hi]).sum();
            if real_input {
                Complex64::new(2.0 * z.re, 0.0)
            } else {
                z
            }
        })
        .collect();
    SampledSignal::new(samples, 1.0 / squeezed.axes.t_step, squeezed.axes.t_start)
}
