//! Quadrature kernels: adaptive Gauss–Kronrod (21 point), Gauss–Legendre rules,
//! and a log-space tail engine for improper integrals over `[y0, ∞)`.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];

const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

/// One 21-point Kronrod panel. Returns `(kronrod, |kronrod - gauss|)`.
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = WGK[10] * fc;
    let mut rg = 0.0;
    for j in 0..10 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { rtol: 1e-12, atol: 0.0, max_intervals: 2000 }
    }
}

impl QuadOptions {
    pub fn rtol(rtol: f64) -> Self {
        QuadOptions { rtol, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

/// Globally adaptive GK21 bisection on `[a, b]`.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> QuadResult {
    if a == b {
        return QuadResult { value: 0.0, error: 0.0, converged: true };
    }
    let (v, e) = gk21(&f, a, b);
    if !v.is_finite() {
        return QuadResult { value: v, error: f64::INFINITY, converged: false };
    }
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value: v, error: e });
    let mut total = v;
    let mut err = e;
    let mut count = 1;
    loop {
        let tol = opts.atol.max(opts.rtol * total.abs());
        if err <= tol || err <= 4.0 * f64::EPSILON * total.abs() {
            return QuadResult { value: total, error: err, converged: true };
        }
        if count >= opts.max_intervals {
            return QuadResult { value: total, error: err, converged: false };
        }
        let p = heap.pop().expect("heap never empty");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            heap.push(p);
            return QuadResult { value: total, error: err, converged: false };
        }
        let (v1, e1) = gk21(&f, p.a, m);
        let (v2, e2) = gk21(&f, m, p.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return QuadResult { value: f64::INFINITY, error: f64::INFINITY, converged: false };
        }
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Panel { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Panel { a: m, b: p.b, value: v2, error: e2 });
        count += 1;
        if count % 64 == 0 {
            total = heap.iter().map(|q| q.value).sum();
            err = heap.iter().map(|q| q.error).sum();
        }
    }
}

/// Shorthand for [`adaptive`] with a relative tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rtol: f64) -> f64 {
    adaptive(f, a, b, QuadOptions::rtol(rtol)).value
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre rule with `panels` equal panels of `order` points.
pub fn composite_gauss<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            sum += wi * f(c + 0.5 * h * xi);
        }
    }
    0.5 * h * sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finiteness {
    Finite,
    Infinite,
    Undecided,
}

#[derive(Debug, Clone, Copy)]
pub struct TailOptions {
    /// Last doubling block: the integral is truncated at `y0 + L·2^max_block`.
    pub max_block: usize,
    pub block_rtol: f64,
    /// Ratio threshold below which the last increments count as geometric decay.
    pub finite_ratio: f64,
    /// Half-width of the undecided band around the critical exponent.
    pub exponent_band: f64,
    pub extrapolation_rtol: f64,
}

impl Default for TailOptions {
    fn default() -> Self {
        TailOptions {
            max_block: 20,
            block_rtol: 1e-13,
            finite_ratio: 0.9,
            exponent_band: 0.05,
            extrapolation_rtol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TailAnalysis {
    pub finiteness: Finiteness,
    pub value: f64,
    /// Algebraic decay exponent `p` of the integrand in `y` (integrand ~ y^-p);
    /// `+inf` for faster than algebraic decay, `-inf` for overflow.
    pub tail_exponent: f64,
    pub confidence: f64,
    pub partial_sums: Vec<f64>,
    pub note: Option<String>,
}

/// Analyses `∫_{y0}^∞ exp(psi(y)) dy` over the doubling blocks
/// `[y0, y0+L]`, `[y0+L·2^(m-1), y0+L·2^m]` with `L = max(1, |y0|)`.
pub fn log_tail_integral<P: Fn(f64) -> f64>(psi: P, y0: f64, opts: TailOptions) -> TailAnalysis {
    let scale = y0.abs().max(1.0);
    let ln_scale = scale.ln();
    let mut incs: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut s = 0.0;
    let mut negligible = 0;
    for m in 0..=opts.max_block {
        let qo = QuadOptions { rtol: opts.block_rtol, atol: 1e-17 * s, max_intervals: 400 };
        let d = if m == 0 {
            adaptive(|y| psi(y0 + y).exp(), 0.0, scale, qo).value
        } else {
            let z0 = (m as f64 - 1.0) * std::f64::consts::LN_2;
            let z1 = m as f64 * std::f64::consts::LN_2;
            adaptive(|z| (psi(y0 + scale * z.exp()) + z + ln_scale).exp(), z0, z1, qo).value
        };
        if !d.is_finite() {
            return TailAnalysis {
                finiteness: Finiteness::Infinite,
                value: f64::INFINITY,
                tail_exponent: f64::NEG_INFINITY,
                confidence: 1.0,
                partial_sums: sums,
                note: Some(format!("integrand overflows in block {m}")),
            };
        }
        s += d;
        incs.push(d);
        sums.push(s);
        if m >= 3 && d <= 1e-17 * s {
            negligible += 1;
            if negligible >= 2 {
                return TailAnalysis {
                    finiteness: Finiteness::Finite,
                    value: s,
                    tail_exponent: f64::INFINITY,
                    confidence: 1.0,
                    partial_sums: sums,
                    note: None,
                };
            }
        } else {
            negligible = 0;
        }
        if m >= 4 && s > 1e300 {
            break;
        }
    }
    let n = incs.len();
    let ratio = |i: usize| incs[i] / incs[i - 1];
    let r: Vec<f64> = (n - 3..n).map(ratio).collect();
    let r_last = r[2];
    let p = 1.0 - r_last.log2();
    let band_lo = (-opts.exponent_band).exp2();
    let band_hi = opts.exponent_band.exp2();
    if r.iter().all(|&x| x < opts.finite_ratio) {
        let extrap = |k: usize| {
            let q = incs[k] / incs[k - 1];
            sums[k] + incs[k] * q / (1.0 - q)
        };
        let e1 = extrap(n - 1);
        let e0 = extrap(n - 2);
        let diff = (e1 - e0).abs() / e1.abs().max(f64::MIN_POSITIVE);
        // decay faster than any power in y counts as super-geometric
        let super_geometric = r[2] < r[1] * 0.5 && r[1] < r[0] * 0.5;
        let tail_exponent = if super_geometric { f64::INFINITY } else { p };
        if diff < opts.extrapolation_rtol {
            let conf = ((1.0 - r_last) / (1.0 - opts.finite_ratio) * 0.5).clamp(0.5, 1.0);
            return TailAnalysis {
                finiteness: Finiteness::Finite,
                value: e1,
                tail_exponent,
                confidence: conf,
                partial_sums: sums,
                note: None,
            };
        }
        return TailAnalysis {
            finiteness: Finiteness::Undecided,
            value: e1,
            tail_exponent,
            confidence: 0.3,
            partial_sums: sums,
            note: Some(format!("tail extrapolation not converged (relative change {diff:.2e})")),
        };
    }
    if r.iter().all(|&x| x > band_hi) {
        let conf = ((r_last - 1.0) / (band_hi - 1.0) * 0.25).clamp(0.5, 1.0);
        let growth = r[2] > r[1] * 2.0 && r[1] > r[0] * 2.0;
        return TailAnalysis {
            finiteness: Finiteness::Infinite,
            value: f64::INFINITY,
            tail_exponent: if growth { f64::NEG_INFINITY } else { p },
            confidence: conf,
            partial_sums: sums,
            note: None,
        };
    }
    let note = if r_last >= band_lo && r_last <= band_hi {
        "tail exponent within the critical band".to_string()
    } else {
        "increment ratios inconclusive".to_string()
    };
    TailAnalysis {
        finiteness: Finiteness::Undecided,
        value: f64::NAN,
        tail_exponent: p,
        confidence: 0.0,
        partial_sums: sums,
        note: Some(note),
    }
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

/// `ln(1 + e^y)`, accurate for all `y`.
pub fn softplus(y: f64) -> f64 {
    if y > 35.0 {
        y + (-y).exp()
    } else if y < -35.0 {
        y.exp()
    } else {
        y.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk21_polynomial_exact() {
        let (v, _) = gk21(&|x: f64| x.powi(20), 0.0, 1.0);
        assert!((v - 1.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_sqrt_singularity() {
        let r = adaptive(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, QuadOptions::rtol(1e-10));
        assert!((r.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_weights_sum() {
        for n in [1, 2, 5, 12, 33] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
            if n >= 2 {
                assert!((m2 - 2.0 / 3.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn tail_rules() {
        let o = TailOptions::default();
        // y^-1.5 from 1: value 2
        let t = log_tail_integral(|y: f64| -1.5 * (1.0 + y).ln(), 0.0, o);
        assert_eq!(t.finiteness, Finiteness::Finite);
        assert!((t.value - 2.0).abs() < 1e-7, "{}", t.value);
        assert!((t.tail_exponent - 1.5).abs() < 0.01);
        let t = log_tail_integral(|y: f64| -0.5 * (1.0 + y).ln(), 0.0, o);
        assert_eq!(t.finiteness, Finiteness::Infinite);
        let t = log_tail_integral(|y: f64| -(1.0 + y).ln(), 0.0, o);
        assert_eq!(t.finiteness, Finiteness::Undecided);
        let t = log_tail_integral(|y: f64| -y, 0.0, o);
        assert_eq!(t.finiteness, Finiteness::Finite);
        assert!((t.value - 1.0).abs() < 1e-13);
        let t = log_tail_integral(|y: f64| y, 0.0, o);
        assert_eq!(t.finiteness, Finiteness::Infinite);
    }

    #[test]
    fn log_helpers() {
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
    }
}
