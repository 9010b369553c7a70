//! L1-normalized Gaussian window `g(t) = exp(-pi t^2 / sigma^2) / sigma` and
//! its polynomial-weighted variants `t^l g(t)`, `t^l g'(t)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Identifies the window `t^power * g^(deriv)(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WindowKind {
    pub power: usize,
    pub deriv: u8,
}

impl WindowKind {
    pub const G: WindowKind = WindowKind::new(0, 0);
    pub const TG: WindowKind = WindowKind::new(1, 0);
    pub const DG: WindowKind = WindowKind::new(0, 1);
    pub const TDG: WindowKind = WindowKind::new(1, 1);
    pub const DDG: WindowKind = WindowKind::new(0, 2);

    pub const fn new(power: usize, deriv: u8) -> Self {
        Self { power, deriv }
    }

    /// Windows needed by an order-`order` modulation estimate:
    /// `t^l g` for `l = 0..=2N-2` and `t^l g'` for `l = 0..N`.
    pub fn required(order: usize) -> Vec<WindowKind> {
        let mut kinds: Vec<_> = (0..=2 * order - 2).map(|l| WindowKind::new(l, 0)).collect();
        kinds.extend((0..order).map(|l| WindowKind::new(l, 1)));
        kinds
    }
}

impl std::fmt::Display for WindowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let base = match self.deriv {
            0 => "g",
            1 => "g'",
            _ => "g''",
        };
        match self.power {
            0 => write!(f, "{base}"),
            1 => write!(f, "t{base}"),
            p => write!(f, "t^{p}{base}"),
        }
    }
}

/// Sampled Gaussian window family for one `sigma`.
#[derive(Debug, Clone)]
pub struct WindowFamily {
    sigma: f64,
    sample_rate: f64,
    order: usize,
    half_len: usize,
    windows: BTreeMap<WindowKind, Vec<f64>>,
}

/// Gaussian and its first two derivatives at `t`.
fn gaussian_derivs(sigma: f64, t: f64) -> [f64; 3] {
    let s2 = sigma * sigma;
    let g = (-PI * t * t / s2).exp() / sigma;
    let dg = -2.0 * PI * t / s2 * g;
    let ddg = (-2.0 * PI / s2 + 4.0 * PI * PI * t * t / (s2 * s2)) * g;
    [g, dg, ddg]
}

/// Builds the `3N - 1` windows required at order `order` (1..=4).
///
/// Windows are truncated at `half_support_mult * sigma` and always have an odd
/// number of taps so that `t = 0` is sampled.
pub fn build_window_family(
    sigma: f64,
    sample_rate: f64,
    order: usize,
    half_support_mult: f64,
) -> Result<WindowFamily> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::InvalidParameter("sample rate must be positive".into()));
    }
    if !(1..=4).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    if !(half_support_mult > 0.0) {
        return Err(Error::InvalidParameter("half support must be positive".into()));
    }
    let half_len = (half_support_mult * sigma * sample_rate).ceil() as usize;
    let mut fam = WindowFamily {
        sigma,
        sample_rate,
        order,
        half_len,
        windows: BTreeMap::new(),
    };
    for kind in WindowKind::required(order) {
        fam.insert(kind);
    }
    Ok(fam)
}

impl WindowFamily {
    fn insert(&mut self, kind: WindowKind) {
        let taps = (0..2 * self.half_len + 1)
            .map(|i| {
                let t = (i as f64 - self.half_len as f64) / self.sample_rate;
                let d = gaussian_derivs(self.sigma, t)[kind.deriv as usize];
                t.powi(kind.power as i32) * d
            })
            .collect();
        self.windows.insert(kind, taps);
    }

    /// Adds an extra window (e.g. `g''` for the time-derivative operator).
    pub fn with_kind(mut self, kind: WindowKind) -> Self {
        if kind.deriv <= 2 && !self.windows.contains_key(&kind) {
            self.insert(kind);
        }
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Half length in samples; the window spans `2 * half_len + 1` taps.
    pub fn half_len(&self) -> usize {
        self.half_len
    }

    pub fn len(&self) -> usize {
        2 * self.half_len + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half_support(&self) -> f64 {
        self.half_len as f64 / self.sample_rate
    }

    /// `g(0) = 1 / sigma`.
    pub fn g0(&self) -> f64 {
        1.0 / self.sigma
    }

    pub fn kinds(&self) -> impl Iterator<Item = WindowKind> + '_ {
        self.windows.keys().copied()
    }

    pub fn contains(&self, kind: WindowKind) -> bool {
        self.windows.contains_key(&kind)
    }

    pub fn taps(&self, kind: WindowKind) -> Result<&[f64]> {
        self.windows
            .get(&kind)
            .map(Vec::as_slice)
            .ok_or(Error::MissingField {
                power: kind.power,
                deriv: kind.deriv,
            })
    }
}
