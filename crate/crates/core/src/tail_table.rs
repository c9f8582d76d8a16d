//! Tabulated tail integrals `T(y) = ∫_y^∞ e^{ψ(η)} dη` in the variable `y = ln s`,
//! with a safeguarded Newton inverse. Backs both `G(x) = ∫ₓ^∞ ds/f` and the
//! energy radius `r(Φ) = ∫_Φ^∞ ds/√(2F)`.

use crate::nonlinearity::Nonlinearity;
use crate::quadrature::{adaptive, log_tail_integral, Finiteness, QuadOptions, TailAnalysis, TailOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailKind {
    /// `ds / f(s)`.
    InverseF,
    /// `ds / √(2 F(s))`.
    Energy,
}

#[derive(Debug, Clone)]
pub struct TailTable {
    nl: Nonlinearity,
    kind: TailKind,
    ys: Vec<f64>,
    vals: Vec<f64>,
}

const SEGMENT_RTOL: f64 = 1e-14;

impl TailTable {
    /// Log-integrand in `y`.
    pub fn psi(nl: &Nonlinearity, kind: TailKind, y: f64) -> f64 {
        match kind {
            TailKind::InverseF => y - nl.ln_f(y),
            TailKind::Energy => y - 0.5 * (std::f64::consts::LN_2 + nl.ln_big_f(y)),
        }
    }

    pub fn tail(nl: &Nonlinearity, kind: TailKind, y: f64) -> TailAnalysis {
        log_tail_integral(|e| Self::psi(nl, kind, e), y, TailOptions::default())
    }

    /// Builds a table of `n` nodes uniform in `y` on `[y_lo, y_hi]`. Returns `None`
    /// when the tail at `y_hi` is infinite or has no finite estimate.
    pub fn new(nl: &Nonlinearity, kind: TailKind, y_lo: f64, y_hi: f64, n: usize) -> Option<Self> {
        let top = Self::tail(nl, kind, y_hi);
        if top.finiteness == Finiteness::Infinite || !top.value.is_finite() {
            return None;
        }
        let ys: Vec<f64> = (0..n).map(|i| y_lo + (y_hi - y_lo) * i as f64 / (n - 1) as f64).collect();
        let mut vals = vec![0.0; n];
        vals[n - 1] = top.value;
        for i in (0..n - 1).rev() {
            vals[i] = vals[i + 1] + Self::segment(nl, kind, ys[i], ys[i + 1]);
        }
        Some(TailTable { nl: nl.clone(), kind, ys, vals })
    }

    fn segment(nl: &Nonlinearity, kind: TailKind, a: f64, b: f64) -> f64 {
        let q = QuadOptions { rtol: SEGMENT_RTOL, atol: 0.0, max_intervals: 300 };
        adaptive(|e| Self::psi(nl, kind, e).exp(), a, b, q).value
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.ys[0], *self.ys.last().unwrap())
    }

    /// Smallest tabulated value (the tail at the top node).
    pub fn min_value(&self) -> f64 {
        *self.vals.last().unwrap()
    }

    pub fn max_value(&self) -> f64 {
        self.vals[0]
    }

    fn from_node(&self, i: usize, y: f64) -> f64 {
        self.vals[i] + Self::segment(&self.nl, self.kind, y, self.ys[i])
    }

    /// `T(y)` for any `y`; above the table falls back to the tail engine.
    pub fn value(&self, y: f64) -> f64 {
        let n = self.ys.len();
        if y >= self.ys[n - 1] {
            return Self::tail(&self.nl, self.kind, y).value;
        }
        if y < self.ys[0] {
            return self.from_node(0, y);
        }
        let i = self.ys.partition_point(|&v| v <= y);
        self.from_node(i, y)
    }

    /// Solves `T(y) = t` for `t` within `[min_value, max_value]`.
    pub fn invert(&self, t: f64) -> Option<f64> {
        let n = self.ys.len();
        if !(t >= self.vals[n - 1] && t <= self.vals[0]) {
            return None;
        }
        let i = self.vals.partition_point(|&v| v >= t).clamp(1, n - 1) - 1;
        let (mut lo, mut hi) = (self.ys[i], self.ys[i + 1]);
        let lt = t.ln();
        let (la, lb) = (self.vals[i].ln(), self.vals[i + 1].ln());
        let frac = if la > lb { (la - lt) / (la - lb) } else { 0.5 };
        let mut y = lo + frac.clamp(0.0, 1.0) * (hi - lo);
        for _ in 0..100 {
            let v = self.from_node(i + 1, y);
            let r = v.ln() - lt;
            if r > 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let d = -Self::psi(&self.nl, self.kind, y).exp() / v;
            let mut next = y - r / d;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let scale = y.abs().max(1.0);
            if (next - y).abs() <= 1e-15 * scale || hi - lo <= 1e-15 * scale {
                return Some(next);
            }
            y = next;
        }
        Some(y)
    }

    /// Solves `T(y) = t` below the table, where `t` exceeds `max_value`.
    pub fn invert_below(&self, t: f64) -> Option<f64> {
        let mut hi = self.ys[0];
        let mut lo = hi - 8.0;
        let mut steps = 0;
        while self.value(lo) < t {
            hi = lo;
            lo -= 8.0;
            steps += 1;
            if steps > 100 {
                return None;
            }
        }
        while hi - lo > 1e-14 * lo.abs().max(1.0) {
            let m = 0.5 * (lo + hi);
            if self.value(m) > t {
                lo = m;
            } else {
                hi = m;
            }
        }
        Some(0.5 * (lo + hi))
    }
}
