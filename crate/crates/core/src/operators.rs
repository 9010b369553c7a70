//! Local reassignment operators and instantaneous-frequency estimates.
//!
//! All operators are closed-form ratios of STFTs computed with the windows
//! `t^l g` and `t^l g'`. Writing `V_l = V^{t^l g}`, `U_l = V^{t^l g'}` and
//! `c = -i 2 pi`, frequency derivatives follow from `d/d eta V_l = c V_{l+1}`
//! (likewise for `U_l`). With
//!
//! ```text
//! X(k, j) = V_0 V_k - V_{j-1} V_{k-j+1}
//! d/d eta X(k, j) = c [X(k+1, j) + X(k+1, j+1) - X(k+1, 2)]
//! W2 = V_0^2 + V_0 U_1 - U_0 V_1,   W3 = dW2 / c,   W4 = dW3 / c
//! ```
//!
//! the modulation chain is
//!
//! ```text
//! y2 = W2 / (c X22)
//! y3 = (W3 X22 - W2 X33) / (c D3),            D3 = X43 X22 - X32 X33
//! y4 = [D3 W4 - A3 P43 + (W3 X32 - W2 X43) P33] / (c E4)
//! E4 = D3 P53 - B4 P43 + (X53 X32 - X42 X43) P33
//! ```
//!
//! where `A3 = W3 X22 - W2 X33`, `B4 = X53 X22 - X42 X33` and
//! `P(k, j) = X(k+1, j) + X(k+1, j+1) - X(k+1, 2)`. Back-substitution gives
//! `q4 = y4`, `q3 = y3 - x43 q4`, `q2 = y2 - x32 q3 - x42 q4` with
//! `x32 = X32 / X22`, `x42 = X42 / X22`, `x43 = B4 / D3`, and the estimate
//! `omega = Re{ omega~ - sum_k q_k V_{k-1} / V_0 }`. Order 3 drops the `q4`
//! row and column of the triangular system.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::stft::{FrameFields, StftStack, TfAxes};
use crate::window::WindowKind;

/// Which instantaneous-frequency estimate to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// `Re{eta - V^{g'} / (i 2 pi V^g)}`.
    FirstOrder,
    /// Second order with the frequency-derivative modulation operator.
    SecondOrderEta,
    /// Second order with the time-derivative modulation operator (needs `g''`).
    SecondOrderT,
    /// Order 3 or 4 frequency-derivative chain.
    OrderN(usize),
}

impl Estimator {
    /// Frequency-derivative estimator of the given order (1..=4).
    pub fn of_order(order: usize) -> Result<Self> {
        match order {
            1 => Ok(Estimator::FirstOrder),
            2 => Ok(Estimator::SecondOrderEta),
            3 | 4 => Ok(Estimator::OrderN(order)),
            n => Err(Error::UnsupportedOrder(n)),
        }
    }

    pub fn order(self) -> usize {
        match self {
            Estimator::FirstOrder => 1,
            Estimator::SecondOrderEta | Estimator::SecondOrderT => 2,
            Estimator::OrderN(n) => n,
        }
    }

    pub fn required_kinds(self) -> Vec<WindowKind> {
        match self {
            Estimator::FirstOrder => vec![WindowKind::G, WindowKind::DG],
            Estimator::SecondOrderT => vec![
                WindowKind::G,
                WindowKind::TG,
                WindowKind::DG,
                WindowKind::TDG,
                WindowKind::DDG,
            ],
            e => WindowKind::required(e.order()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorOptions {
    /// A denominator is degenerate below `eps_rel` times its per-frame median.
    pub eps_rel: f64,
    /// Force modulation operators of order above this to zero.
    pub zero_above: Option<usize>,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        Self {
            eps_rel: 1e-4,
            zero_above: None,
        }
    }
}

/// Per-pixel IF estimate with validity and fallback bookkeeping.
#[derive(Debug, Clone)]
pub struct IfEstimateField {
    pub omega_hat: Array2<f64>,
    pub valid: Array2<bool>,
    /// Order actually applied per pixel (0 where invalid).
    pub order_used: Array2<u8>,
    /// `Re{t + V^{tg} / V^g}` when `V^{tg}` was available.
    pub tau_hat: Option<Array2<f64>>,
    /// Modulation operators `q^{[k,N]}` for `k = 2..=N`.
    pub modulation: Vec<Array2<Complex64>>,
    pub axes: TfAxes,
    pub estimator: Estimator,
}

impl IfEstimateField {
    pub fn n_frames(&self) -> usize {
        self.omega_hat.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.omega_hat.ncols()
    }
}

/// Output of the frame kernel.
#[derive(Debug, Clone, Default)]
pub struct FrameEstimate {
    pub omega: Vec<f64>,
    pub valid: Vec<bool>,
    pub order_used: Vec<u8>,
    pub tau: Option<Vec<f64>>,
    pub modulation: Vec<Vec<Complex64>>,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn c_unit() -> Complex64 {
    Complex64::new(0.0, -2.0 * PI)
}

/// Intermediate per-pixel quantities shared by orders 2-4.
#[derive(Debug, Clone, Copy, Default)]
struct Chain {
    omega1: Complex64,
    x: [Complex64; 3],
    y2: Complex64,
    x32: Complex64,
    x42: Complex64,
    y3: Complex64,
    x43: Complex64,
    y4: Complex64,
    den: [f64; 3],
}

/// `X(k, j) = V_0 V_k - V_{j-1} V_{k-j+1}`.
fn xkj(v: &[Complex64], k: usize, j: usize) -> Complex64 {
    v[0] * v[k] - v[j - 1] * v[k + 1 - j]
}

/// `X(k+1, j) + X(k+1, j+1) - X(k+1, 2)`, i.e. `d/d eta X(k, j) / c`.
fn pkj(v: &[Complex64], k: usize, j: usize) -> Complex64 {
    xkj(v, k + 1, j) + xkj(v, k + 1, j + 1) - xkj(v, k + 1, 2)
}

fn chain_pixel(v: &[Complex64], u: &[Complex64], eta: f64, order: usize) -> Chain {
    let c = c_unit();
    let i2pi = Complex64::new(0.0, 2.0 * PI);
    let mut ch = Chain {
        omega1: eta - u[0] / (i2pi * v[0]),
        ..Default::default()
    };
    for k in 0..order.saturating_sub(1).min(3) {
        ch.x[k] = v[k + 1] / v[0];
    }
    if order < 2 {
        return ch;
    }
    let x22 = xkj(v, 2, 2);
    let w2 = v[0] * v[0] + v[0] * u[1] - u[0] * v[1];
    ch.y2 = w2 / (c * x22);
    ch.den[0] = x22.norm();
    if order < 3 {
        return ch;
    }
    let x32 = xkj(v, 3, 2);
    let x33 = xkj(v, 3, 3);
    let x43 = xkj(v, 4, 3);
    let w3 = 2.0 * v[0] * v[1] + v[0] * u[2] - u[0] * v[2];
    let a3 = w3 * x22 - w2 * x33;
    let d3 = x43 * x22 - x32 * x33;
    ch.x32 = x32 / x22;
    ch.y3 = a3 / (c * d3);
    ch.den[1] = d3.norm();
    if order < 4 {
        return ch;
    }
    let x42 = xkj(v, 4, 2);
    let x53 = xkj(v, 5, 3);
    let w4 = 2.0 * v[1] * v[1] + 2.0 * v[0] * v[2] + v[1] * u[2] + v[0] * u[3]
        - u[1] * v[2]
        - u[0] * v[3];
    let b4 = x53 * x22 - x42 * x33;
    let p33 = pkj(v, 3, 3);
    let p43 = pkj(v, 4, 3);
    let p53 = pkj(v, 5, 3);
    let num4 = d3 * w4 - a3 * p43 + (w3 * x32 - w2 * x43) * p33;
    let e4 = d3 * p53 - b4 * p43 + (x53 * x32 - x42 * x43) * p33;
    ch.x42 = x42 / x22;
    ch.x43 = b4 / d3;
    ch.y4 = num4 / (c * e4);
    ch.den[2] = e4.norm();
    ch
}

/// Back-substitution at a given order; returns the complex estimate and `q_k`.
fn solve_chain(ch: &Chain, order: usize, zero_above: usize) -> (Complex64, [Complex64; 3]) {
    let keep = |k: usize, q: Complex64| if k > zero_above { ZERO } else { q };
    let mut q = [ZERO; 3];
    match order {
        1 => return (ch.omega1, q),
        2 => {
            q[0] = keep(2, ch.y2);
        }
        3 => {
            q[1] = keep(3, ch.y3);
            q[0] = keep(2, ch.y2 - ch.x32 * q[1]);
        }
        _ => {
            q[2] = keep(4, ch.y4);
            q[1] = keep(3, ch.y3 - ch.x43 * q[2]);
            q[0] = keep(2, ch.y2 - ch.x32 * q[1] - ch.x42 * q[2]);
        }
    }
    let mut omega = ch.omega1;
    for k in 0..order - 1 {
        omega -= q[k] * ch.x[k];
    }
    (omega, q)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Evaluates one frame of the requested estimator.
///
/// `t` is the frame time in seconds, `gamma` the threshold on `|V^g|`.
pub fn estimate_frame(
    fields: &FrameFields<'_>,
    t: f64,
    axes: &TfAxes,
    gamma: f64,
    estimator: Estimator,
    opts: &OperatorOptions,
) -> Result<FrameEstimate> {
    let n_bins = fields.n_bins();
    let g = fields.get(WindowKind::G)?;
    let dg = fields.get(WindowKind::DG)?;
    let tau = match fields.get(WindowKind::TG) {
        Ok(tg) => Some(
            (0..n_bins)
                .map(|b| {
                    if g[b].norm() > gamma {
                        (t + tg[b] / g[b]).re
                    } else {
                        f64::NAN
                    }
                })
                .collect(),
        ),
        Err(_) => None,
    };
    let valid_base: Vec<bool> = g.iter().map(|z| z.norm() > gamma).collect();
    let mut out = FrameEstimate {
        omega: vec![f64::NAN; n_bins],
        valid: vec![false; n_bins],
        order_used: vec![0; n_bins],
        tau,
        modulation: Vec::new(),
    };
    let i2pi = Complex64::new(0.0, 2.0 * PI);

    match estimator {
        Estimator::FirstOrder => {
            for b in 0..n_bins {
                if !valid_base[b] {
                    continue;
                }
                let w = (axes.bin_freq(b) - dg[b] / (i2pi * g[b])).re;
                if w.is_finite() {
                    out.omega[b] = w;
                    out.valid[b] = true;
                    out.order_used[b] = 1;
                }
            }
        }
        Estimator::SecondOrderT => {
            let tg = fields.get(WindowKind::TG)?;
            let tdg = fields.get(WindowKind::TDG)?;
            let ddg = fields.get(WindowKind::DDG)?;
            let mut q = vec![ZERO; n_bins];
            let mut den = vec![f64::NAN; n_bins];
            let mut qt = vec![ZERO; n_bins];
            for b in 0..n_bins {
                if !valid_base[b] {
                    continue;
                }
                let d = tg[b] * dg[b] - tdg[b] * g[b];
                qt[b] = (ddg[b] * g[b] - dg[b] * dg[b]) / (i2pi * d);
                den[b] = d.norm();
            }
            let thr = degeneracy_threshold(&den, &valid_base, opts.eps_rel);
            for b in 0..n_bins {
                if !valid_base[b] {
                    continue;
                }
                let omega1 = axes.bin_freq(b) - dg[b] / (i2pi * g[b]);
                let x21 = tg[b] / g[b];
                let (w, order) = if den[b] > thr && qt[b].is_finite() {
                    q[b] = qt[b];
                    (omega1 + qt[b] * (-x21), 2)
                } else {
                    (omega1, 1)
                };
                if w.re.is_finite() {
                    out.omega[b] = w.re;
                    out.valid[b] = true;
                    out.order_used[b] = order;
                }
            }
            out.modulation = vec![q];
        }
        Estimator::SecondOrderEta | Estimator::OrderN(_) => {
            let order = estimator.order();
            if !(2..=4).contains(&order) {
                return Err(Error::UnsupportedOrder(order));
            }
            let v: Vec<&[Complex64]> = (0..=2 * order - 2)
                .map(|l| fields.get(WindowKind::new(l, 0)))
                .collect::<Result<_>>()?;
            let u: Vec<&[Complex64]> = (0..order)
                .map(|l| fields.get(WindowKind::new(l, 1)))
                .collect::<Result<_>>()?;
            let mut vb = [ZERO; 7];
            let mut ub = [ZERO; 4];
            let chains: Vec<Chain> = (0..n_bins)
                .map(|b| {
                    if !valid_base[b] {
                        return Chain::default();
                    }
                    for (l, row) in v.iter().enumerate() {
                        vb[l] = row[b];
                    }
                    for (l, row) in u.iter().enumerate() {
                        ub[l] = row[b];
                    }
                    chain_pixel(&vb, &ub, axes.bin_freq(b), order)
                })
                .collect();
            let thresholds: Vec<f64> = (0..order - 1)
                .map(|level| {
                    let den: Vec<f64> = chains.iter().map(|c| c.den[level]).collect();
                    degeneracy_threshold(&den, &valid_base, opts.eps_rel)
                })
                .collect();
            let zero_above = opts.zero_above.unwrap_or(usize::MAX);
            let mut modulation = vec![vec![ZERO; n_bins]; order - 1];
            for b in 0..n_bins {
                if !valid_base[b] {
                    continue;
                }
                let ch = &chains[b];
                let ok = |level: usize| ch.den[level] > thresholds[level];
                let mut used = order;
                while used > 1 && !(0..used - 1).all(ok) {
                    used -= 1;
                }
                let (mut w, mut q) = solve_chain(ch, used, zero_above);
                while !w.re.is_finite() && used > 1 {
                    used -= 1;
                    (w, q) = solve_chain(ch, used, zero_above);
                }
                if w.re.is_finite() {
                    out.omega[b] = w.re;
                    out.valid[b] = true;
                    out.order_used[b] = used as u8;
                    for k in 0..order - 1 {
                        modulation[k][b] = q[k];
                    }
                }
            }
            out.modulation = modulation;
        }
    }
    Ok(out)
}

fn degeneracy_threshold(den: &[f64], valid: &[bool], eps_rel: f64) -> f64 {
    let mut vals: Vec<f64> = den
        .iter()
        .zip(valid)
        .filter(|(d, &ok)| ok && d.is_finite())
        .map(|(d, _)| *d)
        .collect();
    let m = median(&mut vals);
    if m.is_finite() {
        eps_rel * m
    } else {
        0.0
    }
}

/// Evaluates an estimator over every frame of a stack.
pub fn estimate(
    stack: &StftStack,
    estimator: Estimator,
    gamma: f64,
    opts: &OperatorOptions,
) -> Result<IfEstimateField> {
    for kind in estimator.required_kinds() {
        if !stack.contains(kind) {
            return Err(Error::MissingField {
                power: kind.power,
                deriv: kind.deriv,
            });
        }
    }
    let axes = stack.axes();
    let frames: Vec<FrameEstimate> = (0..stack.n_frames())
        .into_par_iter()
        .map(|i| {
            estimate_frame(
                &stack.frame(i),
                axes.frame_time(i),
                &axes,
                gamma,
                estimator,
                opts,
            )
        })
        .collect::<Result<_>>()?;
    Ok(assemble(frames, stack.n_bins(), axes, estimator))
}

pub(crate) fn assemble(
    frames: Vec<FrameEstimate>,
    n_bins: usize,
    axes: TfAxes,
    estimator: Estimator,
) -> IfEstimateField {
    let n_frames = frames.len();
    let n_mod = frames.first().map_or(0, |f| f.modulation.len());
    let has_tau = frames.first().is_some_and(|f| f.tau.is_some());
    let mut field = IfEstimateField {
        omega_hat: Array2::from_elem((n_frames, n_bins), f64::NAN),
        valid: Array2::from_elem((n_frames, n_bins), false),
        order_used: Array2::zeros((n_frames, n_bins)),
        tau_hat: has_tau.then(|| Array2::from_elem((n_frames, n_bins), f64::NAN)),
        modulation: vec![Array2::zeros((n_frames, n_bins)); n_mod],
        axes,
        estimator,
    };
    for (i, f) in frames.into_iter().enumerate() {
        field.omega_hat.row_mut(i).assign(&ndarray::ArrayView1::from(&f.omega));
        field.valid.row_mut(i).assign(&ndarray::ArrayView1::from(&f.valid));
        field
            .order_used
            .row_mut(i)
            .assign(&ndarray::ArrayView1::from(&f.order_used));
        if let (Some(tau), Some(dst)) = (f.tau, field.tau_hat.as_mut()) {
            dst.row_mut(i).assign(&ndarray::ArrayView1::from(&tau));
        }
        for (k, q) in f.modulation.iter().enumerate() {
            field.modulation[k]
                .index_axis_mut(Axis(0), i)
                .assign(&ndarray::ArrayView1::from(q));
        }
    }
    field
}

/// `omega^ = Re{eta - V^{g'} / (i 2 pi V^g)}` and `tau^ = Re{t + V^{tg} / V^g}`.
pub fn first_order(stack: &StftStack, gamma: f64) -> Result<IfEstimateField> {
    estimate(stack, Estimator::FirstOrder, gamma, &OperatorOptions::default())
}

/// Second-order estimate with `q_eta = W2 / (-i 2 pi X22)`.
pub fn second_order_eta(stack: &StftStack, gamma: f64) -> Result<IfEstimateField> {
    estimate(
        stack,
        Estimator::SecondOrderEta,
        gamma,
        &OperatorOptions::default(),
    )
}

/// Second-order estimate with the time-derivative operator
/// `q_t = (V^{g''} V^g - (V^{g'})^2) / (i 2 pi (V^{tg} V^{g'} - V^{tg'} V^g))`.
pub fn second_order_t(stack: &StftStack, gamma: f64) -> Result<IfEstimateField> {
    estimate(
        stack,
        Estimator::SecondOrderT,
        gamma,
        &OperatorOptions::default(),
    )
}

/// Order 3 or 4 estimate with fallback to lower orders on degenerate pixels.
pub fn order_n(stack: &StftStack, order: usize, gamma: f64) -> Result<IfEstimateField> {
    if !(3..=4).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    estimate(
        stack,
        Estimator::OrderN(order),
        gamma,
        &OperatorOptions::default(),
    )
}

/// Relative threshold `rel * max |V^g|`.
pub fn relative_gamma(stft_g: ndarray::ArrayView2<'_, Complex64>, rel: f64) -> f64 {
    rel * stft_g.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
