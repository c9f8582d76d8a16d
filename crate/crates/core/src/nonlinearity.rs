//! Absorption terms `f`: built-in families, parsed expressions, the antiderivative
//! `F`, the ratio `h = f/s`, and probes of the structural conditions (C1)–(C3).

use crate::classifier::asymptotic_decades;
use crate::error::{LabError, Result};
use crate::expr::{parse_expr, ExprNode};
use crate::quadrature::{adaptive, gauss_legendre, softplus, QuadOptions};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::{Arc, OnceLock};

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearityKind {
    /// `f ≡ 0`; used for pure heat-flow control runs.
    Zero,
    /// `f(u) = u^(1+β)`.
    Power { beta: f64 },
    /// `f(u) = u·ln^α(u+1)`.
    LogAbsorption { alpha: f64 },
    Expression(ExprNode),
}

/// Cumulative `F` on a geometric grid; only built for kinds without closed form.
#[derive(Debug)]
struct AntiderivativeTable {
    s: Vec<f64>,
    cum: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    table: Option<Arc<AntiderivativeTable>>,
}

const TABLE_LO: f64 = 1e-10;
const TABLE_DECADES: usize = 40;
const TABLE_PER_DECADE: usize = 8;
const WINDOW: f64 = 60.0;
const WINDOW_CUTS: [f64; 11] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0];

fn gl20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

/// 20-point Gauss–Legendre on one panel.
fn gauss_panel<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let (x, w) = gl20();
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * x.iter().zip(w).map(|(xi, wi)| wi * f(c + h * xi)).sum::<f64>()
}

pub fn probe_grid() -> Vec<f64> {
    let n = 200;
    (0..n).map(|i| 10f64.powf(-6.0 + 18.0 * i as f64 / (n - 1) as f64)).collect()
}

fn parse_shorthand(text: &str, name: &str) -> Option<Result<f64>> {
    let t = text.trim();
    let rest = t.strip_prefix(name)?.trim_start();
    let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
    let offset = t.len() - rest.len() + 1;
    Some(match inner.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(LabError::Domain(format!("{name} parameter must be positive, got {v}"))),
        Err(_) => Err(LabError::Syntax { offset, message: format!("invalid {name} parameter '{inner}'") }),
    })
}

fn recognize(ast: &ExprNode) -> Option<NonlinearityKind> {
    use ExprNode::*;
    let konst = |e: &ExprNode| match e {
        Const(c) => Some(*c),
        _ => None,
    };
    let is_ln_u1 = |e: &ExprNode| match e {
        Ln(x) => matches!(&**x, Add(a, b)
            if (**a == Var && konst(b) == Some(1.0)) || (**b == Var && konst(a) == Some(1.0))),
        _ => false,
    };
    let log_power = |e: &ExprNode| -> Option<f64> {
        if is_ln_u1(e) {
            return Some(1.0);
        }
        match e {
            Pow(b, p) if is_ln_u1(b) => konst(p).filter(|a| *a > 0.0),
            _ => None,
        }
    };
    match ast {
        Pow(b, p) if **b == Var => {
            let p = konst(p)?;
            (p > 1.0).then(|| NonlinearityKind::Power { beta: p - 1.0 })
        }
        Mul(a, b) if **a == Var && **b == Var => Some(NonlinearityKind::Power { beta: 1.0 }),
        Mul(a, b) if **a == Var => log_power(b).map(|alpha| NonlinearityKind::LogAbsorption { alpha }),
        Mul(a, b) if **b == Var => log_power(a).map(|alpha| NonlinearityKind::LogAbsorption { alpha }),
        _ => None,
    }
}

/// Parses `text` into a validated nonlinearity.
pub fn parse_nonlinearity(text: &str) -> Result<Nonlinearity> {
    if text.len() > crate::expr::MAX_EXPR_LEN {
        return Err(LabError::Syntax {
            offset: crate::expr::MAX_EXPR_LEN,
            message: "input too long".into(),
        });
    }
    if let Some(b) = parse_shorthand(text, "power") {
        return Nonlinearity::new(NonlinearityKind::Power { beta: b? });
    }
    if let Some(a) = parse_shorthand(text, "log") {
        return Nonlinearity::new(NonlinearityKind::LogAbsorption { alpha: a? });
    }
    let ast = parse_expr(text)?;
    if ast == ExprNode::Const(0.0) {
        return Nonlinearity::new(NonlinearityKind::Zero);
    }
    let kind = recognize(&ast).unwrap_or(NonlinearityKind::Expression(ast));
    Nonlinearity::new(kind)
}

impl Nonlinearity {
    pub fn new(kind: NonlinearityKind) -> Result<Self> {
        match &kind {
            NonlinearityKind::Power { beta } if !(*beta > 0.0 && beta.is_finite()) => {
                return Err(LabError::Domain(format!("power exponent β must be positive, got {beta}")))
            }
            NonlinearityKind::LogAbsorption { alpha } if !(*alpha > 0.0 && alpha.is_finite()) => {
                return Err(LabError::Domain(format!("log exponent α must be positive, got {alpha}")))
            }
            _ => {}
        }
        let mut nl = Nonlinearity { kind, table: None };
        nl.validate()?;
        if matches!(nl.kind, NonlinearityKind::LogAbsorption { .. } | NonlinearityKind::Expression(_)) {
            nl.table = Some(Arc::new(nl.build_table()));
        }
        Ok(nl)
    }

    pub fn power(beta: f64) -> Result<Self> {
        Self::new(NonlinearityKind::Power { beta })
    }

    pub fn log(alpha: f64) -> Result<Self> {
        Self::new(NonlinearityKind::LogAbsorption { alpha })
    }

    pub fn zero() -> Self {
        Nonlinearity { kind: NonlinearityKind::Zero, table: None }
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn is_zero(&self) -> bool {
        self.kind == NonlinearityKind::Zero
    }

    fn validate(&self) -> Result<()> {
        if let NonlinearityKind::Expression(ast) = &self.kind {
            let f0 = ast.eval(0.0)?;
            if f0 != 0.0 {
                return Err(LabError::Domain(format!("f(0) = {f0} but f(0) = 0 is required")));
            }
        }
        if self.is_zero() {
            return Ok(());
        }
        let mut prev: Option<(f64, f64)> = None;
        for s in probe_grid() {
            let v = match &self.kind {
                NonlinearityKind::Expression(ast) => ast.eval(s)?,
                _ => self.f(s),
            };
            if v.is_nan() || v <= 0.0 {
                return Err(LabError::Domain(format!("f({s:e}) = {v:e} is not positive")));
            }
            if let Some((ps, pv)) = prev {
                if v < pv - 1e-12 * pv {
                    return Err(LabError::Domain(format!(
                        "f decreases between s = {ps:e} and s = {s:e}"
                    )));
                }
            }
            prev = Some((s, v));
        }
        Ok(())
    }

    fn build_table(&self) -> AntiderivativeTable {
        let n = TABLE_DECADES * TABLE_PER_DECADE;
        let mut s = vec![0.0];
        s.extend((0..=n).map(|j| TABLE_LO * 10f64.powf(j as f64 / TABLE_PER_DECADE as f64)));
        let mut cum = vec![0.0; s.len()];
        let q = QuadOptions { rtol: 1e-14, atol: 0.0, max_intervals: 500 };
        for j in 1..s.len() {
            let seg = adaptive(|x| self.f(x), s[j - 1], s[j], q).value;
            cum[j] = cum[j - 1] + seg;
        }
        AntiderivativeTable { s, cum }
    }

    /// `f(s)`; expression evaluation errors yield `NaN`.
    #[inline]
    pub fn f(&self, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::Power { beta } => s.powf(1.0 + beta),
            NonlinearityKind::LogAbsorption { alpha } => s * s.ln_1p().powf(*alpha),
            NonlinearityKind::Expression(ast) => ast.eval(s).unwrap_or(f64::NAN),
        }
    }

    /// `f'(s)`: closed form for the families, central differences for expressions.
    pub fn df(&self, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::Power { beta } => (1.0 + beta) * s.powf(*beta),
            NonlinearityKind::LogAbsorption { alpha } => {
                let l = s.ln_1p();
                if l == 0.0 {
                    return 0.0;
                }
                l.powf(*alpha) + alpha * s * l.powf(alpha - 1.0) / (1.0 + s)
            }
            NonlinearityKind::Expression(_) => {
                let d = 1e-6 * s.max(1e-8);
                if s > d {
                    (self.f(s + d) - self.f(s - d)) / (2.0 * d)
                } else {
                    (self.f(s + d) - self.f(s)) / d
                }
            }
        }
    }

    /// `h(s) = f(s)/s`.
    pub fn h(&self, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::Power { beta } => s.powf(*beta),
            NonlinearityKind::LogAbsorption { alpha } => s.ln_1p().powf(*alpha),
            NonlinearityKind::Expression(_) => {
                if s > 0.0 {
                    self.f(s) / s
                } else {
                    self.df(0.0)
                }
            }
        }
    }

    /// `ln f(e^y)`, finite far beyond the `f64` range of `f`.
    #[inline]
    pub fn ln_f(&self, y: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Zero => f64::NEG_INFINITY,
            NonlinearityKind::Power { beta } => (1.0 + beta) * y,
            NonlinearityKind::LogAbsorption { alpha } => y + alpha * softplus(y).ln(),
            NonlinearityKind::Expression(ast) => match ast.eval_log(y) {
                Ok(v) if v.sign > 0 => v.ln_abs,
                _ => f64::NEG_INFINITY,
            },
        }
    }

    /// `ln h(e^y)`.
    pub fn ln_h(&self, y: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Power { beta } => beta * y,
            NonlinearityKind::LogAbsorption { alpha } => alpha * softplus(y).ln(),
            _ => self.ln_f(y) - y,
        }
    }

    /// `F(s) = ∫₀ˢ f`. Errors with an overflow signal when `F(s)` is not representable.
    pub fn big_f(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(LabError::Domain(format!("F requires s ≥ 0, got {s}")));
        }
        let v = match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::Power { beta } => s.powf(2.0 + beta) / (2.0 + beta),
            _ => {
                let t = self.table.as_ref().expect("table built for non-closed kinds");
                let top = *t.s.last().unwrap();
                if s <= TABLE_LO {
                    let q = QuadOptions { rtol: 1e-13, atol: 0.0, max_intervals: 200 };
                    adaptive(|x| self.f(x), 0.0, s, q).value
                } else if s <= top {
                    let j = t.s.partition_point(|&x| x <= s) - 1;
                    t.cum[j] + gauss_panel(|x| self.f(x), t.s[j], s)
                } else {
                    self.ln_big_f(s.ln()).exp()
                }
            }
        };
        if !v.is_finite() {
            return Err(LabError::Overflow(format!("F({s:e}) exceeds the representable range")));
        }
        Ok(v)
    }

    /// `ln F(e^y)`, evaluated on the log scale for large `y`.
    pub fn ln_big_f(&self, y: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Zero => f64::NEG_INFINITY,
            NonlinearityKind::Power { beta } => (2.0 + beta) * y - (2.0 + beta).ln(),
            _ => {
                let t = self.table.as_ref().expect("table built for non-closed kinds");
                let top_y = t.s.last().unwrap().ln();
                if y <= top_y {
                    if let Ok(v) = self.big_f(y.exp()) {
                        if v > 0.0 && v.is_finite() {
                            return v.ln();
                        }
                    }
                }
                // F(e^y) = e^{ψ(y)} ∫_0^W exp(ψ(y-Δ) - ψ(y)) dΔ + F(e^{y-W}), ψ(η) = η + ln f(e^η)
                let lf = self.ln_f(y);
                if !lf.is_finite() {
                    return lf;
                }
                let w = if y > top_y { WINDOW.min(y - top_y) } else { WINDOW };
                // rescale Δ by the local slope of ψ so the integrand decays like e^{-x}
                let dy = 1e-6 * y.abs().max(1.0);
                let slope = (1.0 + (lf - self.ln_f(y - dy)) / dy).max(1.0);
                let integrand = |x: f64| {
                    let d = x / slope;
                    (-d + self.ln_f(y - d) - lf).exp()
                };
                let xw = w * slope;
                let mut integral = 0.0;
                for win in WINDOW_CUTS.windows(2) {
                    if win[0] >= xw {
                        break;
                    }
                    integral += gauss_panel(integrand, win[0], win[1].min(xw));
                }
                let main = y + lf + (integral / slope).ln();
                if w < WINDOW {
                    let base = self.big_f((y - w).exp()).map(|v| v.ln()).unwrap_or(f64::NEG_INFINITY);
                    crate::quadrature::log_add_exp(main, base)
                } else {
                    main
                }
            }
        }
    }

    /// Solves `m + c·f(m) = b` for `m ∈ [0, b]` (`b ≥ 0`, `c ≥ 0`): Newton from `b`,
    /// safeguarded by bisection.
    pub fn solve_implicit(&self, c: f64, b: f64) -> Result<f64> {
        if b <= 0.0 || c == 0.0 || self.is_zero() {
            return Ok(b.max(0.0));
        }
        let (mut lo, mut hi) = (0.0, b);
        let mut m = b;
        for _ in 0..200 {
            let g = m + c * self.f(m) - b;
            if g == 0.0 {
                return Ok(m);
            }
            if g > 0.0 {
                hi = m;
            } else {
                lo = m;
            }
            let dg = 1.0 + c * self.df(m);
            let mut next = m - g / dg;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - m).abs() <= 4.0 * f64::EPSILON * m.abs() || hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(next);
            }
            m = next;
        }
        Err(LabError::NonConvergence {
            iterations: 200,
            message: format!("implicit absorption solve m + {c:e} f(m) = {b:e}"),
            last_iterates: None,
        })
    }

    /// Canonical text; parsing it reproduces the same kind.
    pub fn text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            NonlinearityKind::Zero => write!(f, "0"),
            NonlinearityKind::Power { beta } => write!(f, "u^{}", 1.0 + beta),
            NonlinearityKind::LogAbsorption { alpha } => write!(f, "u*ln(u+1)^{alpha}"),
            NonlinearityKind::Expression(ast) => write!(f, "{ast}"),
        }
    }
}

impl PartialEq for Nonlinearity {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionStatus {
    Holds,
    Fails,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: f64,
    pub quantity: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub status: ConditionStatus,
    pub witnesses: Vec<Witness>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralReport {
    pub c1: ConditionVerdict,
    pub c2: ConditionVerdict,
    pub c3: ConditionVerdict,
    /// Smallest tested β with a bounded `f/(s ln^β s)`; `None` when the premise of (C3) fails.
    pub c3_beta: Option<f64>,
}

fn w(point: f64, quantity: &str, value: f64) -> Witness {
    Witness { point, quantity: quantity.to_string(), value }
}

fn check_c1(nl: &Nonlinearity) -> ConditionVerdict {
    let grid = probe_grid();
    let h: Vec<f64> = grid.iter().map(|&s| nl.h(s)).collect();
    for i in 1..grid.len() {
        if h[i] < h[i - 1] * (1.0 - 1e-10) {
            return ConditionVerdict {
                status: ConditionStatus::Fails,
                witnesses: vec![w(grid[i - 1], "h", h[i - 1]), w(grid[i], "h", h[i])],
                note: Some("h decreases".into()),
            };
        }
    }
    let n = grid.len();
    let (s0, h0) = (grid[0], h[0]);
    let (s1, h1) = (grid[n - 1], h[n - 1]);
    let mut witnesses = vec![w(s0, "h", h0), w(s1, "h", h1)];
    if h1 <= h0 * (1.0 + 1e-9) {
        return ConditionVerdict {
            status: ConditionStatus::Fails,
            witnesses,
            note: Some("h is constant on the probe grid".into()),
        };
    }
    let decade = n / 18;
    let low_ok = h0 < 1e-3;
    let high_ok = h1 > 1e3;
    if low_ok && high_ok {
        return ConditionVerdict { status: ConditionStatus::Holds, witnesses, note: None };
    }
    let still_falling = h0 < h[decade] * (1.0 - 1e-3);
    let still_rising = h1 > h[n - 1 - decade] * (1.0 + 1e-3);
    if (!low_ok && !still_falling) || (!high_ok && !still_rising) {
        witnesses.push(w(grid[n - 1 - decade], "h", h[n - 1 - decade]));
        return ConditionVerdict {
            status: ConditionStatus::Fails,
            witnesses,
            note: Some("h levels off before reaching the limit thresholds".into()),
        };
    }
    ConditionVerdict {
        status: ConditionStatus::Undecided,
        witnesses,
        note: Some("h is monotone but the limit thresholds are not reached on the probe grid".into()),
    }
}

fn check_c2(nl: &Nonlinearity) -> ConditionVerdict {
    let d = 1e-4;
    let mut worst = (f64::INFINITY, 0.0);
    for s in probe_grid() {
        let (a, b, c) = (nl.f(s * (1.0 - d)), nl.f(s), nl.f(s * (1.0 + d)));
        if !(a.is_finite() && b.is_finite() && c.is_finite()) || b == 0.0 {
            continue;
        }
        let q = (a - 2.0 * b + c) / b;
        if q < worst.0 {
            worst = (q, s);
        }
    }
    let tol = 64.0 * f64::EPSILON;
    let witnesses = vec![w(worst.1, "second difference / f", worst.0)];
    let status = if worst.0 >= -tol {
        ConditionStatus::Holds
    } else if worst.0 >= -100.0 * tol {
        ConditionStatus::Undecided
    } else {
        ConditionStatus::Fails
    };
    ConditionVerdict { status, witnesses, note: None }
}

const C3_PREMISE_ALPHA: f64 = 2.5;
const C3_BETAS: [f64; 3] = [1.25, 1.5, 2.0];
const BOUNDED_SLACK: f64 = 0.005;

fn check_c3(nl: &Nonlinearity) -> (ConditionVerdict, Option<f64>) {
    let p = asymptotic_decades(nl, C3_PREMISE_ALPHA);
    let premise = p.last.0 < p.previous.0 * (1.0 - 1e-3);
    let growing = p.last.0 > p.previous.0 * (1.0 + 1e-3);
    if !premise {
        let status = if growing { ConditionStatus::Holds } else { ConditionStatus::Undecided };
        return (
            ConditionVerdict {
                status,
                witnesses: vec![
                    w(1e11, "min f/(s ln^2.5 s) over previous decade", p.previous.0),
                    w(1e12, "min f/(s ln^2.5 s) over last decade", p.last.0),
                ],
                note: Some(if growing {
                    "premise fails (ratio not tending to 0); condition holds vacuously".into()
                } else {
                    "premise probe inconclusive".into()
                }),
            },
            None,
        );
    }
    for beta in C3_BETAS {
        let q = asymptotic_decades(nl, beta);
        if q.last.1 <= (1.0 + BOUNDED_SLACK) * q.previous.1 {
            return (
                ConditionVerdict {
                    status: ConditionStatus::Holds,
                    witnesses: vec![
                        w(1e11, &format!("max f/(s ln^{beta} s) over previous decade"), q.previous.1),
                        w(1e12, &format!("max f/(s ln^{beta} s) over last decade"), q.last.1),
                    ],
                    note: None,
                },
                Some(beta),
            );
        }
    }
    let q = asymptotic_decades(nl, 2.0);
    (
        ConditionVerdict {
            status: ConditionStatus::Fails,
            witnesses: vec![w(1e12, "max f/(s ln^2 s) over last decade", q.last.1)],
            note: Some("premise holds but no tested β gives a bounded ratio".into()),
        },
        None,
    )
}

/// Numeric probes of (C1)–(C3).
pub fn structural_conditions(nl: &Nonlinearity) -> StructuralReport {
    if nl.is_zero() {
        let v = ConditionVerdict {
            status: ConditionStatus::Fails,
            witnesses: vec![w(1.0, "f", 0.0)],
            note: Some("f vanishes identically".into()),
        };
        return StructuralReport { c1: v.clone(), c2: v.clone(), c3: v, c3_beta: None };
    }
    let (c3, c3_beta) = check_c3(nl);
    StructuralReport { c1: check_c1(nl), c2: check_c2(nl), c3, c3_beta }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_recognized() {
        assert_eq!(parse_nonlinearity("u^2").unwrap().kind, NonlinearityKind::Power { beta: 1.0 });
        assert_eq!(parse_nonlinearity("u*u").unwrap().kind, NonlinearityKind::Power { beta: 1.0 });
        assert_eq!(
            parse_nonlinearity("u*ln(u+1)^2").unwrap().kind,
            NonlinearityKind::LogAbsorption { alpha: 2.0 }
        );
        assert_eq!(
            parse_nonlinearity("ln(1+u)*u").unwrap().kind,
            NonlinearityKind::LogAbsorption { alpha: 1.0 }
        );
        assert_eq!(parse_nonlinearity("log(1.5)").unwrap().kind, NonlinearityKind::LogAbsorption { alpha: 1.5 });
        assert_eq!(parse_nonlinearity("power(0.5)").unwrap().kind, NonlinearityKind::Power { beta: 0.5 });
        assert!(matches!(parse_nonlinearity("u").unwrap().kind, NonlinearityKind::Expression(_)));
        assert!(parse_nonlinearity("0").unwrap().is_zero());
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(parse_nonlinearity("u - 1"), Err(LabError::Domain(_))));
        assert!(matches!(parse_nonlinearity("u - u^2"), Err(LabError::Domain(_))));
        assert!(matches!(parse_nonlinearity("ln(u)"), Err(LabError::Domain(_))));
        assert!(matches!(parse_nonlinearity("power(-1)"), Err(LabError::Domain(_))));
        assert!(matches!(parse_nonlinearity("log(x)"), Err(LabError::Syntax { .. })));
    }

    #[test]
    fn closed_forms() {
        let nl = parse_nonlinearity("u^2").unwrap();
        assert_eq!(nl.f(3.0), 9.0);
        assert!((nl.big_f(3.0).unwrap() - 9.0).abs() < 1e-14);
        assert_eq!(nl.big_f(0.0).unwrap(), 0.0);
    }

    #[test]
    fn ln_big_f_continuous_across_table_top() {
        let nl = Nonlinearity::log(3.0).unwrap();
        let y = (1e30f64).ln();
        let a = nl.ln_big_f(y - 1e-9);
        let b = nl.ln_big_f(y + 1e-9);
        assert!((a - b).abs() < 1e-8, "{a} {b}");
        let e = parse_nonlinearity("u*ln(u+1)^3 + 0*u").unwrap();
        for y in [75.0, 200.0, 1e4] {
            let (p, q) = (nl.ln_big_f(y), e.ln_big_f(y));
            assert!((p - q).abs() < 1e-10 * p.abs(), "{y}: {p} {q}");
        }
    }

    #[test]
    fn implicit_solver() {
        let nl = Nonlinearity::power(1.0).unwrap();
        let m = nl.solve_implicit(0.5, 4.0).unwrap();
        assert!((m + 0.5 * m * m - 4.0).abs() < 1e-13);
        let nl = Nonlinearity::log(3.0).unwrap();
        let m = nl.solve_implicit(1e-3, 1e15).unwrap();
        assert!((m + 1e-3 * nl.f(m) - 1e15).abs() < 1e-12 * 1e15);
    }

    #[test]
    fn structural_examples() {
        let r = structural_conditions(&Nonlinearity::power(1.0).unwrap());
        assert_eq!(r.c1.status, ConditionStatus::Holds);
        assert_eq!(r.c2.status, ConditionStatus::Holds);
        let r = structural_conditions(&Nonlinearity::log(3.0).unwrap());
        assert_eq!(r.c1.status, ConditionStatus::Holds);
        assert_eq!(r.c2.status, ConditionStatus::Holds);
        assert_eq!(r.c3.status, ConditionStatus::Holds);
        let r = structural_conditions(&Nonlinearity::log(1.5).unwrap());
        assert_eq!(r.c3.status, ConditionStatus::Holds);
        assert_eq!(r.c3_beta, Some(1.5));
        let r = structural_conditions(&parse_nonlinearity("u").unwrap());
        assert_eq!(r.c1.status, ConditionStatus::Fails);
        for v in [&r.c1, &r.c2] {
            assert!(!v.witnesses.is_empty());
        }
    }
}
