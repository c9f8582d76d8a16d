//! Numerical decisions for the improper-integral conditions on `f` and the
//! resulting `k → ∞` regime.
//!
//! All tail integrals are computed in the variable `y = ln s` with the doubling
//! block engine of [`crate::quadrature::log_tail_integral`], so integrands are
//! evaluated through `ln f` and `ln F` and never overflow.

use crate::error::{LabError, Result};
use crate::nonlinearity::{structural_conditions, ConditionStatus, Nonlinearity};
use crate::quadrature::{adaptive, log_tail_integral, Finiteness, QuadOptions, TailAnalysis, TailOptions};
use crate::scalar_flow::theta_tail;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    A8,
    A10_J,
    A12_KO,
    KON_L,
    I1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralVerdict {
    pub condition: Condition,
    pub finite: Finiteness,
    /// Converged value when `finite`; `NaN` otherwise (serialized as `null`).
    pub value: f64,
    pub tail_exponent: f64,
    pub confidence: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl IntegralVerdict {
    fn from_tail(condition: Condition, t: TailAnalysis) -> Self {
        let value = if t.finiteness == Finiteness::Finite { t.value } else { f64::NAN };
        IntegralVerdict {
            condition,
            finite: t.finiteness,
            value,
            tail_exponent: t.tail_exponent,
            confidence: t.confidence,
            note: t.note,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.finite == Finiteness::Finite
    }

    pub fn is_infinite(&self) -> bool {
        self.finite == Finiteness::Infinite
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    BlowupEverywhere,
    FlowLimit,
    MinimalSingular,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub verdicts: Vec<IntegralVerdict>,
    pub regime: Regime,
    #[serde(rename = "N")]
    pub dimension: usize,
}

impl ClassificationReport {
    pub fn verdict(&self, c: Condition) -> Option<&IntegralVerdict> {
        self.verdicts.iter().find(|v| v.condition == c)
    }
}

fn tail(psi: impl Fn(f64) -> f64) -> TailAnalysis {
    log_tail_integral(psi, 0.0, TailOptions::default())
}

/// `∫₁^∞ ds / f(s)`.
pub fn tail_integral_j(nl: &Nonlinearity) -> IntegralVerdict {
    IntegralVerdict::from_tail(Condition::A10_J, tail(|y| y - nl.ln_f(y)))
}

/// `∫₁^∞ ds / √(s f(s))`.
pub fn kon_l_integral(nl: &Nonlinearity) -> IntegralVerdict {
    IntegralVerdict::from_tail(Condition::KON_L, tail(|y| 0.5 * (y - nl.ln_f(y))))
}

/// `∫₁^∞ ds / √F(s)`, cross-checked against the `√(s f)` form.
pub fn tail_integral_ko(nl: &Nonlinearity) -> IntegralVerdict {
    let mut v = IntegralVerdict::from_tail(Condition::A12_KO, tail(|y| y - 0.5 * nl.ln_big_f(y)));
    let l = kon_l_integral(nl);
    if l.finite != v.finite {
        let convex = structural_conditions(nl).c2.status == ConditionStatus::Holds;
        let msg = format!(
            "warning: F-form verdict {:?} and L-form verdict {:?} disagree{}",
            v.finite,
            l.finite,
            if convex { " although f is convex" } else { "; F-form kept" }
        );
        v.note = Some(match v.note.take() {
            Some(n) => format!("{n}; {msg}"),
            None => msg,
        });
    }
    v
}

/// `∫₁^∞ s^{−2−2/N} f(s) ds`.
pub fn weak_singularity(nl: &Nonlinearity, n_dim: usize) -> Result<IntegralVerdict> {
    if n_dim < 2 {
        return Err(LabError::Precondition(format!("dimension N ≥ 2 required, got {n_dim}")));
    }
    let e = 1.0 + 2.0 / n_dim as f64;
    Ok(IntegralVerdict::from_tail(Condition::A8, tail(|y| nl.ln_f(y) - e * y)))
}

fn surface_area(n_dim: usize) -> f64 {
    crate::parabolic::sphere_area(n_dim)
}

/// `I = ∫₀¹ ∫_{B_R} f(k E(x,t)) dx dt` via the substitutions `ρ = |x|/√t` and
/// `τ = t e^{ρ²/2N}`, which turn the inner time integral into `θ_k`.
pub fn dirac_admissibility(nl: &Nonlinearity, n_dim: usize, k: f64, radius: f64) -> Result<IntegralVerdict> {
    if !(k > 0.0 && radius > 0.0) {
        return Err(LabError::Precondition("k and R must be positive".into()));
    }
    if n_dim < 1 {
        return Err(LabError::Precondition("dimension must be positive".into()));
    }
    let probe = theta_tail(nl, k, n_dim, 1.0);
    if probe.finiteness != Finiteness::Finite {
        let mut v = IntegralVerdict::from_tail(Condition::I1, probe);
        v.note = Some(format!(
            "θ_k integrand at τ → 0 is {}",
            if v.is_infinite() { "not integrable (I₁ diverges)" } else { "undecided" }
        ));
        return Ok(v);
    }
    let nf = n_dim as f64;
    let c_star = (4.0 * PI).powf(-nf / 2.0);
    let theta = |t: f64| theta_tail(nl, k, n_dim, t).value;
    let integrand = |rho: f64| {
        let tau_max = (radius * radius / (rho * rho)).min(1.0) * (rho * rho / (2.0 * nf)).exp();
        (-(nf + 2.0) * rho * rho / (4.0 * nf)).exp() * rho.powf(nf - 1.0) * theta(tau_max)
    };
    let q = QuadOptions { rtol: 1e-9, atol: 0.0, max_intervals: 400 };
    let rho_end = 40.0f64.max(2.0 * radius);
    let mut cuts = vec![0.0, 1.0];
    if radius > 1.0 {
        cuts.push(radius);
    }
    cuts.push(rho_end);
    let mut parts = Vec::new();
    for w in cuts.windows(2) {
        parts.push(adaptive(integrand, w[0], w[1], q).value);
    }
    let pre = k * c_star * surface_area(n_dim);
    let i1 = pre * parts[0];
    let i2 = pre * parts[1..].iter().sum::<f64>();
    let value = i1 + i2;
    if !value.is_finite() {
        return Ok(IntegralVerdict {
            condition: Condition::I1,
            finite: Finiteness::Infinite,
            value: f64::NAN,
            tail_exponent: f64::NEG_INFINITY,
            confidence: 0.5,
            note: Some("outer integral overflowed".into()),
        });
    }
    Ok(IntegralVerdict {
        condition: Condition::I1,
        finite: Finiteness::Finite,
        value,
        tail_exponent: probe.tail_exponent,
        confidence: probe.confidence,
        note: Some(format!("I1 = {i1:.6e}, I2 = {i2:.6e}")),
    })
}

/// Per-decade `(min, max)` of `f(r)/(r ln^α r)` over the last two decades of `[10², 10¹²]`.
#[derive(Debug, Clone, Copy)]
pub struct DecadeStats {
    pub previous: (f64, f64),
    pub last: (f64, f64),
}

const PROBE_PER_DECADE: usize = 20;

pub fn asymptotic_decades(nl: &Nonlinearity, alpha: f64) -> DecadeStats {
    let ratio = |e: f64| {
        let y = e * std::f64::consts::LN_10;
        (nl.ln_f(y) - y - alpha * y.ln()).exp()
    };
    let decade = |d: f64| {
        (0..=PROBE_PER_DECADE).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let v = ratio(d + i as f64 / PROBE_PER_DECADE as f64);
            (lo.min(v), hi.max(v))
        })
    };
    DecadeStats { previous: decade(10.0), last: decade(11.0) }
}

/// `(liminf, limsup)` estimates of `f(r)/(r ln^α r)` from the last grid decade.
pub fn asymptotic_probe(nl: &Nonlinearity, alpha: f64) -> (f64, f64) {
    asymptotic_decades(nl, alpha).last
}

/// Runs all verdicts and routes to the implied regime.
pub fn classify(nl: &Nonlinearity, n_dim: usize) -> Result<ClassificationReport> {
    let a8 = weak_singularity(nl, n_dim)?;
    let j = tail_integral_j(nl);
    let ko = tail_integral_ko(nl);
    let l = kon_l_integral(nl);
    let i1 = dirac_admissibility(nl, n_dim, 1.0, 1.0)?;
    let regime = if j.is_infinite() {
        Regime::BlowupEverywhere
    } else if j.is_finite() && ko.is_infinite() {
        Regime::FlowLimit
    } else if ko.is_finite() && a8.is_finite() {
        Regime::MinimalSingular
    } else {
        Regime::Undecided
    };
    Ok(ClassificationReport { verdicts: vec![a8, j, ko, l, i1], regime, dimension: n_dim })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::parse_nonlinearity;

    #[test]
    fn j_examples() {
        let v = tail_integral_j(&Nonlinearity::power(1.0).unwrap());
        assert!(v.is_finite());
        assert!((v.value - 1.0).abs() < 1e-10);
        assert!(tail_integral_j(&Nonlinearity::log(1.5).unwrap()).is_finite());
        assert!(tail_integral_j(&Nonlinearity::log(0.5).unwrap()).is_infinite());
    }

    #[test]
    fn ko_examples() {
        let v = tail_integral_ko(&Nonlinearity::power(1.0).unwrap());
        assert!((v.value - 2.0 * 3f64.sqrt()).abs() < 1e-9, "{}", v.value);
        assert!(tail_integral_ko(&Nonlinearity::log(3.0).unwrap()).is_finite());
        assert!(!tail_integral_ko(&Nonlinearity::log(2.0).unwrap()).is_finite());
    }

    #[test]
    fn a8_examples() {
        assert!(weak_singularity(&Nonlinearity::power(0.5).unwrap(), 3).unwrap().is_finite());
        assert!(weak_singularity(&Nonlinearity::power(1.0).unwrap(), 2).unwrap().is_infinite());
        assert!(weak_singularity(&Nonlinearity::log(3.0).unwrap(), 3).unwrap().is_finite());
        assert!(weak_singularity(&parse_nonlinearity("u*exp(u)").unwrap(), 2).unwrap().is_infinite());
        assert!(weak_singularity(&Nonlinearity::log(3.0).unwrap(), 1).is_err());
    }

    #[test]
    fn probe_examples() {
        let (lo, hi) = asymptotic_probe(&Nonlinearity::log(1.0).unwrap(), 1.0);
        assert!((lo - 1.0).abs() < 0.02 && (hi - 1.0).abs() < 0.02);
        let (_, hi) = asymptotic_probe(&Nonlinearity::power(1.0).unwrap(), 1.0);
        assert!(hi > 1e3);
        let d = asymptotic_decades(&Nonlinearity::log(2.0).unwrap(), 3.0);
        assert!(d.last.0 < d.previous.0);
    }

    #[test]
    fn regimes() {
        let r = |a| classify(&Nonlinearity::log(a).unwrap(), 3).unwrap().regime;
        assert_eq!(r(0.5), Regime::BlowupEverywhere);
        assert_eq!(r(1.5), Regime::FlowLimit);
        assert_eq!(r(3.0), Regime::MinimalSingular);
    }
}
