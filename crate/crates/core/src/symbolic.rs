//! Exact frequency derivatives of rational expressions in STFT fields.
//!
//! Expressions are quotients of polynomials whose variables are the STFT
//! fields `V^{t^l g^(d)}` and the frequency `eta`. Differentiation applies the
//! product and quotient rules together with `d/d eta V^{t^l g^(d)} =
//! -i 2 pi V^{t^(l+1) g^(d)}`; nothing is approximated numerically.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stft::{FrameFields, StftStack};
use crate::window::WindowKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Eta,
    Field(WindowKind),
}

/// Sparse polynomial over [`Symbol`]s; a monomial is a sorted symbol list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    terms: BTreeMap<Vec<Symbol>, Complex64>,
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Complex64) -> Self {
        let mut p = Self::zero();
        p.add_term(Vec::new(), c);
        p
    }

    pub fn symbol(s: Symbol) -> Self {
        let mut p = Self::zero();
        p.add_term(vec![s], Complex64::new(1.0, 0.0));
        p
    }

    fn add_term(&mut self, mut mono: Vec<Symbol>, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        mono.sort_unstable();
        let entry = self.terms.entry(mono).or_insert(Complex64::new(0.0, 0.0));
        *entry += c;
        if entry.norm() == 0.0 {
            let key = self
                .terms
                .iter()
                .find(|(_, v)| v.norm() == 0.0)
                .map(|(k, _)| k.clone());
            if let Some(k) = key {
                self.terms.remove(&k);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Vec::len).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> Poly {
        let mut out = Poly::zero();
        for (m, &v) in &self.terms {
            out.add_term(m.clone(), v * c);
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                let mut m = ma.clone();
                m.extend_from_slice(mb);
                out.add_term(m, ca * cb);
            }
        }
        out
    }

    /// Every field referenced by the polynomial.
    pub fn fields(&self) -> impl Iterator<Item = WindowKind> + '_ {
        self.terms.keys().flatten().filter_map(|s| match s {
            Symbol::Field(k) => Some(*k),
            Symbol::Eta => None,
        })
    }

    /// Frequency derivative; `available` lists the fields that may appear.
    pub fn eta_derivative(&self, available: &[WindowKind]) -> Result<Poly> {
        let c = Complex64::new(0.0, -2.0 * PI);
        let mut out = Poly::zero();
        for (mono, &coef) in &self.terms {
            for i in 0..mono.len() {
                let mut rest = mono.clone();
                let s = rest.remove(i);
                match s {
                    Symbol::Eta => out.add_term(rest, coef),
                    Symbol::Field(k) => {
                        let raised = WindowKind::new(k.power + 1, k.deriv);
                        if !available.contains(&raised) {
                            return Err(Error::MissingField {
                                power: raised.power,
                                deriv: raised.deriv,
                            });
                        }
                        rest.push(Symbol::Field(raised));
                        out.add_term(rest, coef * c);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn eval<F: Fn(Symbol) -> Complex64>(&self, value: F) -> Complex64 {
        self.terms
            .iter()
            .map(|(mono, &c)| mono.iter().fold(c, |acc, &s| acc * value(s)))
            .sum()
    }
}

/// `numerator / denominator` with a provenance label.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalExpr {
    pub num: Poly,
    pub den: Poly,
    pub label: String,
}

impl RationalExpr {
    pub fn new(num: Poly, den: Poly, label: impl Into<String>) -> Self {
        Self {
            num,
            den,
            label: label.into(),
        }
    }

    pub fn field(kind: WindowKind) -> Self {
        Self::new(
            Poly::symbol(Symbol::Field(kind)),
            Poly::constant(Complex64::new(1.0, 0.0)),
            format!("V^{kind}"),
        )
    }

    pub fn eta() -> Self {
        Self::new(
            Poly::symbol(Symbol::Eta),
            Poly::constant(Complex64::new(1.0, 0.0)),
            "eta",
        )
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(
            Poly::constant(c),
            Poly::constant(Complex64::new(1.0, 0.0)),
            format!("{c}"),
        )
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn add(&self, o: &RationalExpr) -> RationalExpr {
        let label = format!("({} + {})", self.label, o.label);
        if self.den == o.den {
            return Self::new(self.num.add(&o.num), self.den.clone(), label);
        }
        Self::new(
            self.num.mul(&o.den).add(&o.num.mul(&self.den)),
            self.den.mul(&o.den),
            label,
        )
    }

    pub fn sub(&self, o: &RationalExpr) -> RationalExpr {
        let neg = RationalExpr::new(o.num.scale(Complex64::new(-1.0, 0.0)), o.den.clone(), "");
        self.add(&neg)
            .labeled(format!("({} - {})", self.label, o.label))
    }

    pub fn mul(&self, o: &RationalExpr) -> RationalExpr {
        Self::new(
            self.num.mul(&o.num),
            self.den.mul(&o.den),
            format!("{} * {}", self.label, o.label),
        )
    }

    pub fn scale(&self, c: Complex64) -> RationalExpr {
        Self::new(self.num.scale(c), self.den.clone(), format!("{c} * {}", self.label))
    }

    /// Quotient; identical denominators cancel.
    pub fn div(&self, o: &RationalExpr) -> RationalExpr {
        let label = format!("{} / {}", self.label, o.label);
        if self.den == o.den {
            return Self::new(self.num.clone(), o.num.clone(), label);
        }
        Self::new(self.num.mul(&o.den), self.den.mul(&o.num), label)
    }

    /// Exact frequency derivative (quotient rule).
    pub fn eta_derivative(&self, available: &[WindowKind]) -> Result<RationalExpr> {
        symbolic_eta_derivative(self, available)
    }

    pub fn eval<F: Fn(Symbol) -> Complex64 + Copy>(&self, value: F) -> Complex64 {
        self.num.eval(value) / self.den.eval(value)
    }

    /// Evaluates numerator and denominator on every pixel of a stack.
    pub fn evaluate(&self, stack: &StftStack) -> Result<RationalField> {
        let check = |p: &Poly| -> Result<()> {
            for k in p.fields() {
                stack.field(k)?;
            }
            Ok(())
        };
        check(&self.num)?;
        check(&self.den)?;
        let (nf, nb) = (stack.n_frames(), stack.n_bins());
        let axes = stack.axes();
        let mut numerator = Array2::zeros((nf, nb));
        let mut denominator = Array2::zeros((nf, nb));
        for i in 0..nf {
            let frame = stack.frame(i);
            for b in 0..nb {
                let eta = axes.bin_freq(b);
                let value = |s: Symbol| field_value(&frame, b, eta, s);
                numerator[[i, b]] = self.num.eval(value);
                denominator[[i, b]] = self.den.eval(value);
            }
        }
        Ok(RationalField {
            numerator,
            denominator,
            provenance: self.label.clone(),
        })
    }
}

fn field_value(frame: &FrameFields<'_>, b: usize, eta: f64, s: Symbol) -> Complex64 {
    match s {
        Symbol::Eta => Complex64::new(eta, 0.0),
        Symbol::Field(k) => frame.get(k).map(|r| r[b]).unwrap_or(Complex64::new(f64::NAN, 0.0)),
    }
}

/// Evaluated numerator and denominator matrices.
#[derive(Debug, Clone)]
pub struct RationalField {
    pub numerator: Array2<Complex64>,
    pub denominator: Array2<Complex64>,
    pub provenance: String,
}

impl RationalField {
    pub fn value(&self) -> Array2<Complex64> {
        &self.numerator / &self.denominator
    }
}

/// `d/d eta (N / D) = (N' D - N D') / D^2`, using the weight-raising identity.
///
/// Fails when a raised field `t^(l+1) g^(d)` is not in `available`.
pub fn symbolic_eta_derivative(
    expr: &RationalExpr,
    available: &[WindowKind],
) -> Result<RationalExpr> {
    let dn = expr.num.eta_derivative(available)?;
    let dd = expr.den.eta_derivative(available)?;
    let label = format!("d/deta[{}]", expr.label);
    if dd.is_zero() {
        return Ok(RationalExpr::new(dn, expr.den.clone(), label));
    }
    Ok(RationalExpr::new(
        dn.mul(&expr.den).sub(&expr.num.mul(&dd)),
        expr.den.mul(&expr.den),
        label,
    ))
}

/// The triangular system `y_j`, `x_{k,j}` for an order-`order` estimate,
/// built by repeated symbolic differentiation.
#[derive(Debug, Clone)]
pub struct ModulationChain {
    pub order: usize,
    /// `y[j-1] = y_j` for `j = 1..=order`.
    pub y: Vec<RationalExpr>,
    /// `x[j-1][k-1] = x_{k,j}` for `k >= j`.
    pub x: Vec<Vec<Option<RationalExpr>>>,
}

impl ModulationChain {
    pub fn build(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::UnsupportedOrder(order));
        }
        let available = WindowKind::required(order);
        let one = Complex64::new(1.0, 0.0);
        let g = RationalExpr::field(WindowKind::G);
        let inv_i2pi = Complex64::new(0.0, 2.0 * PI).inv();
        let y1 = RationalExpr::eta()
            .sub(&RationalExpr::field(WindowKind::DG).div(&g).scale(inv_i2pi))
            .labeled("y1");
        let mut x = vec![vec![None; order]; order];
        for k in 1..=order {
            let e = if k == 1 {
                RationalExpr::constant(one)
            } else {
                RationalExpr::field(WindowKind::new(k - 1, 0)).div(&g)
            };
            x[0][k - 1] = Some(e.labeled(format!("x{k}1")));
        }
        let mut y = vec![y1];
        for j in 2..=order {
            let pivot = x[j - 2][j - 1]
                .as_ref()
                .expect("pivot defined")
                .eta_derivative(&available)?;
            let yj = y[j - 2].eta_derivative(&available)?.div(&pivot);
            y.push(yj.labeled(format!("y{j}")));
            for k in j..=order {
                let prev = x[j - 2][k - 1].as_ref().expect("entry defined");
                let e = prev.eta_derivative(&available)?.div(&pivot);
                x[j - 1][k - 1] = Some(e.labeled(format!("x{k}{j}")));
            }
        }
        Ok(Self { order, y, x })
    }

    /// Back-substitutes at a pixel; returns `(omega~^{[N]}, [q^{[2,N]}, ...])`.
    pub fn solve<F: Fn(Symbol) -> Complex64 + Copy>(&self, value: F) -> (Complex64, Vec<Complex64>) {
        let n = self.order;
        let y: Vec<Complex64> = self.y.iter().map(|e| e.eval(value)).collect();
        let xv = |k: usize, j: usize| self.x[j - 1][k - 1].as_ref().expect("upper").eval(value);
        let mut r = vec![Complex64::new(0.0, 0.0); n + 1];
        for j in (2..=n).rev() {
            let mut acc = y[j - 1];
            for k in j + 1..=n {
                acc -= xv(k, j) * r[k];
            }
            r[j] = acc;
        }
        let mut omega = y[0];
        for k in 2..=n {
            omega -= r[k] * xv(k, 1);
        }
        (omega, r[2..].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn derivative_of_field_raises_weight() {
        let kinds = WindowKind::required(2);
        let d = symbolic_eta_derivative(&RationalExpr::field(WindowKind::G), &kinds).unwrap();
        let expected = Poly::symbol(Symbol::Field(WindowKind::TG)).scale(c(0.0, -2.0 * PI));
        assert_eq!(d.num, expected);
        assert_eq!(d.den, Poly::constant(c(1.0, 0.0)));
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let d = symbolic_eta_derivative(&RationalExpr::constant(c(3.0, 1.0)), &[]).unwrap();
        assert!(d.num.is_zero());
    }

    #[test]
    fn product_rule() {
        let kinds = WindowKind::required(2);
        let g = RationalExpr::field(WindowKind::G);
        let d = g.mul(&g).eta_derivative(&kinds).unwrap();
        let expected = Poly::symbol(Symbol::Field(WindowKind::G))
            .mul(&Poly::symbol(Symbol::Field(WindowKind::TG)))
            .scale(c(0.0, -4.0 * PI));
        assert_eq!(d.num, expected);
    }

    #[test]
    fn missing_raised_field_is_an_error() {
        let kinds = WindowKind::required(2);
        let e = RationalExpr::field(WindowKind::new(2, 0));
        assert!(matches!(
            e.eta_derivative(&kinds),
            Err(Error::MissingField { power: 3, deriv: 0 })
        ));
    }

    #[test]
    fn quotient_rule_on_values() {
        // d/deta (V1 / V0) = c (V2 V0 - V1^2) / V0^2
        let kinds = WindowKind::required(3);
        let e = RationalExpr::field(WindowKind::TG).div(&RationalExpr::field(WindowKind::G));
        let d = e.eta_derivative(&kinds).unwrap();
        let val = |s: Symbol| match s {
            Symbol::Eta => c(10.0, 0.0),
            Symbol::Field(k) => c(1.0 + k.power as f64, 0.5 * k.power as f64 - 0.2),
        };
        let (v0, v1, v2) = (val(Symbol::Field(WindowKind::G)), val(Symbol::Field(WindowKind::TG)), val(Symbol::Field(WindowKind::new(2, 0))));
        let expected = c(0.0, -2.0 * PI) * (v2 * v0 - v1 * v1) / (v0 * v0);
        assert!((d.eval(val) - expected).norm() < 1e-12);
    }

    #[test]
    fn chain_sizes_are_bounded() {
        let ch = ModulationChain::build(4).unwrap();
        assert_eq!(ch.y.len(), 4);
        // the shared quotient-rule denominators cancel at every level
        assert!(ch.y[3].num.degree() <= 8, "{}", ch.y[3].num.degree());
        for kind in ch.y[3].num.fields() {
            assert!(WindowKind::required(4).contains(&kind));
        }
    }
}
