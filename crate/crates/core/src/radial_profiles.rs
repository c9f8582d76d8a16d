//! Stationary radial problems `−w″ − ((N−1)/r) w′ + f(w) = 0`: global profiles
//! `w_a` with `w(0) = a`, large solutions `w_R` of a ball, and the decaying
//! one-dimensional profile `Φ` with `Φ(0+) = ∞`.
//!
//! Profiles are marched outward on the integral form
//! `w = a + ∫₀ʳ s^{1−N} I`, `I = ∫₀ˢ t^{N−1} f(w)` with 4-stage Gauss collocation;
//! the stage equations are solved by Picard iteration.

use crate::classifier::tail_integral_ko;
use crate::error::{LabError, Result};
use crate::nonlinearity::Nonlinearity;
use crate::quadrature::{gauss_legendre, Finiteness};
use crate::scalar_flow::{PhiValue, PHI_SATURATION};
use crate::tail_table::{TailKind, TailTable};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ProfileKind {
    Global { a: f64 },
    BallBlowup { radius: f64 },
    SingularPhi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions {
    /// Multiplies the step rule `min(0.01, 0.1/√(1+h(w)))`.
    pub resolution: f64,
    pub max_iter: usize,
    pub picard_rtol: f64,
    pub w_cap: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions { resolution: 0.25, max_iter: 200, picard_rtol: 1e-12, w_cap: 1e12 }
    }
}

const W_OVERFLOW: f64 = 1e250;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub kind: ProfileKind,
    #[serde(rename = "N")]
    pub n_dim: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub derivative: Vec<f64>,
    pub residual_norm: f64,
    pub blowup_radius: Option<f64>,
}

impl RadialProfile {
    /// Cubic Hermite interpolation; `NaN` outside the grid.
    pub fn eval(&self, r: f64) -> f64 {
        let g = &self.grid;
        let n = g.len();
        if !(r >= g[0] && r <= g[n - 1]) {
            return f64::NAN;
        }
        let i = g.partition_point(|&x| x <= r).clamp(1, n - 1) - 1;
        let h = g[i + 1] - g[i];
        let t = (r - g[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.values[i]
            + (t3 - 2.0 * t2 + t) * h * self.derivative[i]
            + (-2.0 * t3 + 3.0 * t2) * self.values[i + 1]
            + (t3 - t2) * h * self.derivative[i + 1]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise residual of `−w″ − ((N−1)/r)w′ + f(w)` from finite differences.
    pub fn residuals(&self, nl: &Nonlinearity) -> Vec<f64> {
        residuals(nl, self.n_dim, &self.grid, &self.values)
    }

    /// `(r, w)` rows.
    pub fn rows(&self) -> Vec<[f64; 2]> {
        self.grid.iter().zip(&self.values).map(|(&r, &w)| [r, w]).collect()
    }

    pub fn metadata(&self) -> serde_json::Value {
        let (kind, a_or_r) = match self.kind {
            ProfileKind::Global { a } => ("Global", Some(a)),
            ProfileKind::BallBlowup { radius } => ("BallBlowup", Some(radius)),
            ProfileKind::SingularPhi => ("SingularPhi", None),
        };
        serde_json::json!({
            "kind": kind,
            "a_or_R": a_or_r,
            "N": self.n_dim,
            "residual_norm": self.residual_norm,
            "blowup_radius": self.blowup_radius,
        })
    }
}

struct Tableau {
    c: [f64; 4],
    b: [f64; 4],
    a: [[f64; 4]; 4],
}

fn tableau() -> &'static Tableau {
    static T: OnceLock<Tableau> = OnceLock::new();
    T.get_or_init(|| {
        let (x, w) = gauss_legendre(4);
        let mut c = [0.0; 4];
        let mut b = [0.0; 4];
        for i in 0..4 {
            c[i] = 0.5 * (1.0 + x[i]);
            b[i] = 0.5 * w[i];
        }
        let lagrange = |j: usize, s: f64| {
            (0..4).filter(|&m| m != j).map(|m| (s - c[m]) / (c[j] - c[m])).product::<f64>()
        };
        let mut a = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                a[i][j] = (0..4).map(|q| 0.5 * c[i] * w[q] * lagrange(j, 0.5 * c[i] * (1.0 + x[q]))).sum();
            }
        }
        Tableau { c, b, a }
    })
}

/// `(w′, I′) = (r^{1−N} I, r^{N−1} f(w))`.
#[inline]
fn rhs(nl: &Nonlinearity, n_dim: usize, r: f64, w: f64, i: f64) -> (f64, f64) {
    if n_dim == 1 {
        return (i, nl.f(w));
    }
    if r == 0.0 {
        return (0.0, 0.0);
    }
    let p = r.powi(n_dim as i32 - 1);
    (i / p, p * nl.f(w))
}

enum StepFailure {
    Diverged,
    Stalled(Vec<f64>, Vec<f64>),
}

fn gauss_step(
    nl: &Nonlinearity,
    n_dim: usize,
    r: f64,
    w: f64,
    i: f64,
    h: f64,
    opts: &ProfileOptions,
) -> std::result::Result<(f64, f64), StepFailure> {
    let tb = tableau();
    let (k0w, k0i) = rhs(nl, n_dim, r, w, i);
    let mut sw = [0.0; 4];
    let mut si = [0.0; 4];
    for j in 0..4 {
        sw[j] = w + tb.c[j] * h * k0w;
        si[j] = i + tb.c[j] * h * k0i;
    }
    let mut prev = sw;
    for _ in 0..opts.max_iter {
        let mut kw = [0.0; 4];
        let mut ki = [0.0; 4];
        for j in 0..4 {
            (kw[j], ki[j]) = rhs(nl, n_dim, r + tb.c[j] * h, sw[j], si[j]);
        }
        let mut diff: f64 = 0.0;
        prev = sw;
        for j in 0..4 {
            let nw = w + h * (0..4).map(|m| tb.a[j][m] * kw[m]).sum::<f64>();
            let ni = i + h * (0..4).map(|m| tb.a[j][m] * ki[m]).sum::<f64>();
            if !(nw.is_finite() && ni.is_finite()) {
                return Err(StepFailure::Diverged);
            }
            diff = diff.max((nw - sw[j]).abs() / nw.abs().max(1e-300));
            diff = diff.max((ni - si[j]).abs() / ni.abs().max(i.abs()).max(1e-300));
            sw[j] = nw;
            si[j] = ni;
        }
        if diff <= opts.picard_rtol {
            for j in 0..4 {
                (kw[j], ki[j]) = rhs(nl, n_dim, r + tb.c[j] * h, sw[j], si[j]);
            }
            let w1 = w + h * (0..4).map(|m| tb.b[m] * kw[m]).sum::<f64>();
            let i1 = i + h * (0..4).map(|m| tb.b[m] * ki[m]).sum::<f64>();
            if !(w1.is_finite() && i1.is_finite()) {
                return Err(StepFailure::Diverged);
            }
            return Ok((w1, i1));
        }
    }
    Err(StepFailure::Stalled(prev.to_vec(), sw.to_vec()))
}

/// Nodes `(r, w, w′)` of an outward march.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub rs: Vec<f64>,
    pub ws: Vec<f64>,
    pub dws: Vec<f64>,
    /// True when the march stopped because `w` reached the cap.
    pub capped: bool,
}

/// Marches from `w(0) = a` to `r_end`, or until `w ≥ w_cap` when `capped_mode`.
pub fn march(
    nl: &Nonlinearity,
    n_dim: usize,
    a: f64,
    r_end: f64,
    capped_mode: bool,
    opts: &ProfileOptions,
) -> Result<Trajectory> {
    if !(a > 0.0) || n_dim == 0 {
        return Err(LabError::Precondition(format!("profile needs a > 0 and N ≥ 1 (a = {a}, N = {n_dim})")));
    }
    let mut rs = vec![0.0];
    let mut ws = vec![a];
    let mut dws = vec![0.0];
    let (mut r, mut w, mut i) = (0.0f64, a, 0.0f64);
    let mut h_prev = f64::INFINITY;
    let mut capped = false;
    while r < r_end {
        if capped_mode && w >= opts.w_cap {
            capped = true;
            break;
        }
        let mut h = opts.resolution * 0.01f64.min(0.1 / (1.0 + nl.h(w)).sqrt());
        h = h.min(1.25 * h_prev);
        let rem = r_end - r;
        if h >= rem {
            h = rem;
        } else if 2.0 * h > rem {
            h = 0.5 * rem;
        }
        let mut reductions = 0;
        let (w1, i1) = loop {
            match gauss_step(nl, n_dim, r, w, i, h, opts) {
                Ok(v) => break v,
                Err(fail) => {
                    reductions += 1;
                    h *= 0.25;
                    if reductions > 10 || h < 1e-15 * r.max(1.0) {
                        return Err(match fail {
                            StepFailure::Diverged => LabError::BlowupBeforeRmax { radius: r },
                            StepFailure::Stalled(p, l) => LabError::NonConvergence {
                                iterations: opts.max_iter,
                                message: format!("collocation stages did not settle at r = {r:e}, w = {w:e}"),
                                last_iterates: Some((p, l)),
                            },
                        });
                    }
                }
            }
        };
        if !capped_mode && w1 > W_OVERFLOW {
            return Err(LabError::BlowupBeforeRmax { radius: r });
        }
        r += h;
        w = w1;
        i = i1;
        h_prev = h;
        rs.push(r);
        ws.push(w);
        dws.push(if n_dim == 1 { i } else { i / r.powi(n_dim as i32 - 1) });
    }
    Ok(Trajectory { rs, ws, dws, capped })
}

/// Finite-difference weights for derivatives `0..=m` at `z` on nodes `x`.
pub fn fd_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

const STENCIL: usize = 7;

/// Residuals at every node from 7-point finite differences. A grid starting at
/// `r = 0` is treated as even in `r`.
pub fn residuals(nl: &Nonlinearity, n_dim: usize, rs: &[f64], ws: &[f64]) -> Vec<f64> {
    let n = rs.len();
    if n < STENCIL {
        return vec![f64::NAN; n];
    }
    let half = STENCIL / 2;
    let mirror = rs[0] == 0.0;
    let nf = n_dim as f64;
    (0..n)
        .map(|i| {
            let mut xs = Vec::with_capacity(STENCIL);
            let mut vs = Vec::with_capacity(STENCIL);
            if mirror && i < half {
                for k in (1..=half - i).rev() {
                    xs.push(-rs[k]);
                    vs.push(ws[k]);
                }
                for k in 0..=i + half {
                    xs.push(rs[k]);
                    vs.push(ws[k]);
                }
            } else {
                let lo = i.saturating_sub(half).min(n - STENCIL);
                xs.extend_from_slice(&rs[lo..lo + STENCIL]);
                vs.extend_from_slice(&ws[lo..lo + STENCIL]);
            }
            let c = fd_weights(rs[i], &xs, 2);
            let d1: f64 = c[1].iter().zip(&vs).map(|(a, b)| a * b).sum();
            let d2: f64 = c[2].iter().zip(&vs).map(|(a, b)| a * b).sum();
            let drift = if rs[i] == 0.0 { (nf - 1.0) * d2 } else { (nf - 1.0) / rs[i] * d1 };
            -d2 - drift + nl.f(ws[i])
        })
        .collect()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Global profile `w_a` on `[0, r_max]`.
pub fn solve_global_radial(nl: &Nonlinearity, a: f64, n_dim: usize, r_max: f64) -> Result<RadialProfile> {
    solve_global_radial_with(nl, a, n_dim, r_max, &ProfileOptions::default())
}

pub fn solve_global_radial_with(
    nl: &Nonlinearity,
    a: f64,
    n_dim: usize,
    r_max: f64,
    opts: &ProfileOptions,
) -> Result<RadialProfile> {
    if !(r_max > 0.0) {
        return Err(LabError::Precondition(format!("r_max must be positive, got {r_max}")));
    }
    let tr = march(nl, n_dim, a, r_max, false, opts)?;
    let res = residuals(nl, n_dim, &tr.rs, &tr.ws);
    let residual_norm = sup_norm(&res);
    let max_f = tr.ws.iter().map(|&w| nl.f(w)).fold(0.0, f64::max);
    if !(residual_norm <= 1e-6 * (1.0 + max_f)) {
        return Err(LabError::Postcondition(format!(
            "residual {residual_norm:e} exceeds 1e-6·(1 + {max_f:e}); refine resolution"
        )));
    }
    Ok(RadialProfile {
        kind: ProfileKind::Global { a },
        n_dim,
        grid: tr.rs,
        values: tr.ws,
        derivative: tr.dws,
        residual_norm,
        blowup_radius: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BlowupRadius {
    Finite(f64),
    Infinite,
}

impl BlowupRadius {
    pub fn value(&self) -> f64 {
        match self {
            BlowupRadius::Finite(r) => *r,
            BlowupRadius::Infinite => f64::INFINITY,
        }
    }
}

const R_SEARCH_LIMIT: f64 = 1e4;

/// `∫_w^∞ ds/√(2F(s))`.
pub fn energy_tail(nl: &Nonlinearity, w: f64) -> (Finiteness, f64) {
    let t = TailTable::tail(nl, TailKind::Energy, w.ln());
    (t.finiteness, t.value)
}

/// Cap radius plus the remaining energy radius, read from `phi` when available.
fn capped_radius(nl: &Nonlinearity, phi: Option<&SingularProfile>, tr: &Trajectory) -> Result<Option<f64>> {
    if !tr.capped {
        return Ok(None);
    }
    let (r_cap, w_cap) = (*tr.rs.last().unwrap(), *tr.ws.last().unwrap());
    if let Some(phi) = phi {
        return Ok(Some(r_cap + phi.radius_of(w_cap)));
    }
    match energy_tail(nl, w_cap) {
        (Finiteness::Finite, t) => Ok(Some(r_cap + t)),
        (Finiteness::Infinite, _) => Ok(None),
        (Finiteness::Undecided, _) => Err(LabError::Inconsistent(format!(
            "w reached {w_cap:e} at r = {r_cap} but the remaining energy radius is undecided"
        ))),
    }
}

/// Radius where `w_a` blows up, from the cap crossing plus the energy tail.
pub fn blowup_radius(nl: &Nonlinearity, a: f64, n_dim: usize) -> Result<BlowupRadius> {
    blowup_radius_with(nl, a, n_dim, &ProfileOptions::default())
}

pub fn blowup_radius_with(nl: &Nonlinearity, a: f64, n_dim: usize, opts: &ProfileOptions) -> Result<BlowupRadius> {
    let ko = tail_integral_ko(nl);
    if ko.is_infinite() {
        return Ok(BlowupRadius::Infinite);
    }
    let phi = if ko.is_finite() { Some(SingularProfile::new(nl)?) } else { None };
    let tr = march(nl, n_dim, a, R_SEARCH_LIMIT, true, opts)?;
    match capped_radius(nl, phi.as_ref(), &tr)? {
        Some(r) => Ok(BlowupRadius::Finite(r)),
        None if ko.is_finite() && tr.capped => Err(LabError::Inconsistent(
            "cap reached with a finite KO verdict but an infinite energy tail".into(),
        )),
        None if ko.is_finite() => Err(LabError::Inconsistent(format!(
            "KO integral finite but w stayed below {:e} up to r = {R_SEARCH_LIMIT:e}",
            opts.w_cap
        ))),
        None => Ok(BlowupRadius::Infinite),
    }
}

/// `R(a)` if it is below `limit`, otherwise `None` (the march stops at `limit`).
fn radius_below(
    phi: &SingularProfile,
    a: f64,
    n_dim: usize,
    limit: f64,
    opts: &ProfileOptions,
) -> Result<(Option<f64>, Trajectory)> {
    let tr = march(&phi.nl, n_dim, a, limit, true, opts)?;
    let r = capped_radius(&phi.nl, Some(phi), &tr)?;
    Ok((r.filter(|&r| r < limit), tr))
}

fn bracket_failure(radius: f64) -> LabError {
    LabError::NonConvergence {
        iterations: 60,
        message: format!("no central value brackets the blow-up radius {radius}"),
        last_iterates: None,
    }
}

/// Large solution of the ball `B_R`: bisection on `a = w(0)` until `R(a) = R`.
pub fn solve_ball_blowup(nl: &Nonlinearity, radius: f64, n_dim: usize) -> Result<RadialProfile> {
    solve_ball_blowup_with(nl, radius, n_dim, &ProfileOptions::default())
}

pub fn solve_ball_blowup_with(nl: &Nonlinearity, radius: f64, n_dim: usize, opts: &ProfileOptions) -> Result<RadialProfile> {
    if !(radius > 0.0) {
        return Err(LabError::Precondition(format!("ball radius must be positive, got {radius}")));
    }
    let ko = tail_integral_ko(nl);
    if !ko.is_finite() {
        return Err(LabError::Precondition(format!(
            "no large solution: ∫ ds/√F is {:?} for f = {nl}",
            ko.finite
        )));
    }
    let phi = SingularProfile::new(nl)?;
    let limit = 2.0 * radius;
    let r_of = |ln_a: f64| -> Result<f64> {
        let (r, _) = radius_below(&phi, ln_a.exp(), n_dim, limit, opts)?;
        Ok(r.unwrap_or(limit))
    };
    // R(a) decreases in a: `lo` keeps R(a) > R, `hi` keeps R(a) ≤ R
    let step = std::f64::consts::LN_10;
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let (mut r_lo, mut r_hi);
    let first = r_of(0.0)?;
    let mut guard = 0;
    if first > radius {
        r_lo = first;
        loop {
            hi += step;
            r_hi = r_of(hi)?;
            if r_hi <= radius {
                break;
            }
            lo = hi;
            r_lo = r_hi;
            guard += 1;
            if guard > 60 {
                return Err(bracket_failure(radius));
            }
        }
    } else {
        r_hi = first;
        loop {
            lo -= step;
            r_lo = r_of(lo)?;
            if r_lo > radius {
                break;
            }
            hi = lo;
            r_hi = r_lo;
            guard += 1;
            if guard > 60 {
                return Err(bracket_failure(radius));
            }
        }
    }
    // Illinois iteration on ln a against ln R(a) − ln R
    let target = radius.ln();
    let (mut flo, mut fhi) = (r_lo.ln() - target, r_hi.ln() - target);
    let mut side = 0i32;
    let mut ln_a = 0.5 * (lo + hi);
    for _ in 0..200 {
        ln_a = if fhi != flo && r_lo < limit { hi - fhi * (hi - lo) / (fhi - flo) } else { 0.5 * (lo + hi) };
        if !(ln_a > lo && ln_a < hi) {
            ln_a = 0.5 * (lo + hi);
        }
        let fm = r_of(ln_a)?.ln() - target;
        if fm.abs() <= 1e-8 || hi - lo <= 1e-15 * ln_a.abs().max(1.0) {
            break;
        }
        if fm > 0.0 {
            lo = ln_a;
            flo = fm;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = ln_a;
            fhi = fm;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    let a = ln_a.exp();
    let (r_a, tr) = radius_below(&phi, a, n_dim, limit, opts)?;
    let r_a = r_a.ok_or_else(|| LabError::Inconsistent("bisected central value lost its blow-up".into()))?;
    if ((r_a - radius) / radius).abs() > 1e-6 {
        return Err(LabError::NonConvergence {
            iterations: 200,
            message: format!("blow-up radius {r_a} did not reach {radius} within 1e-6"),
            last_iterates: None,
        });
    }
    let (mut rs, mut ws, mut dws) = (tr.rs, tr.ws, tr.dws);
    // beyond the cap, follow the one-dimensional energy profile toward R(a)
    let r_end = radius * (1.0 - 1e-6);
    let mut d = r_a - *rs.last().unwrap();
    while d > r_a - r_end {
        d = (0.8 * d).max(r_a - r_end);
        let p = phi.eval(d)?;
        if p.saturated {
            break;
        }
        rs.push(r_a - d);
        ws.push(p.value);
        dws.push(phi.speed(p.value));
    }
    let residual_norm = sup_norm(&residuals(nl, n_dim, &rs, &ws));
    Ok(RadialProfile {
        kind: ProfileKind::BallBlowup { radius },
        n_dim,
        grid: rs,
        values: ws,
        derivative: dws,
        residual_norm,
        blowup_radius: Some(r_a),
    })
}

/// Checks `R₁ < R₂ ⇒ w_{R₁} ≥ w_{R₂}` at the nodes of the smaller-ball profile.
pub fn ball_profiles_ordered(small: &RadialProfile, large: &RadialProfile) -> bool {
    small.grid.iter().zip(&small.values).all(|(&r, &w)| {
        let v = large.eval(r);
        v.is_nan() || w >= v * (1.0 - 1e-9)
    })
}

const PHI_TABLE_SIZE: usize = 400;
const PHI_Y_LO: f64 = -27.631021115928547; // ln 1e-12

/// `Φ` with `Φ′ = −√(2F(Φ))`, tabulated through `r(Φ) = ∫_Φ^∞ ds/√(2F)`.
#[derive(Debug, Clone)]
pub struct SingularProfile {
    nl: Nonlinearity,
    table: TailTable,
}

impl SingularProfile {
    pub fn new(nl: &Nonlinearity) -> Result<Self> {
        let ko = tail_integral_ko(nl);
        if !ko.is_finite() {
            return Err(LabError::Precondition(format!(
                "Φ needs a finite ∫ ds/√F; verdict {:?} for f = {nl}",
                ko.finite
            )));
        }
        let table = TailTable::new(nl, TailKind::Energy, PHI_Y_LO, PHI_SATURATION.ln(), PHI_TABLE_SIZE)
            .ok_or_else(|| LabError::Inconsistent("energy tail not finite at the table top".into()))?;
        Ok(SingularProfile { nl: nl.clone(), table })
    }

    /// `r(Φ) = ∫_Φ^∞ ds/√(2F(s))`.
    pub fn radius_of(&self, value: f64) -> f64 {
        self.table.value(value.ln())
    }

    /// `Φ(r)`; saturates at `1e300` for radii inside `r(1e300)`.
    pub fn eval(&self, r: f64) -> Result<PhiValue> {
        if !(r > 0.0) {
            return Err(LabError::Precondition(format!("Φ needs r > 0, got {r}")));
        }
        let y = if r > self.table.max_value() { self.table.invert_below(r) } else { self.table.invert(r) };
        Ok(match y {
            Some(y) => PhiValue { value: y.exp(), saturated: false },
            None => PhiValue { value: PHI_SATURATION, saturated: true },
        })
    }

    /// `|Φ′| = √(2F(Φ))` at the value `phi`.
    pub fn speed(&self, phi: f64) -> f64 {
        -(0.5 * (std::f64::consts::LN_2 + self.nl.ln_big_f(phi.ln()))).exp()
    }

    /// Relative residual `|−Φ″ + f(Φ)| / f(Φ)` on a 3-point stencil scaled to `Φ/|Φ′|`.
    pub fn stencil_residual(&self, r: f64) -> Result<f64> {
        let (d2, p) = self.second_difference(r)?;
        let f = self.nl.f(p);
        Ok((-d2 + f).abs() / f)
    }

    /// Radial residual `−Φ″ − ((N−1)/r)Φ′ + f(Φ)`, relative to `f(Φ)`; nonnegative for a supersolution.
    pub fn supersolution_residual(&self, r: f64, n_dim: usize) -> Result<f64> {
        let (d2, p) = self.second_difference(r)?;
        let f = self.nl.f(p);
        Ok((-d2 - (n_dim as f64 - 1.0) / r * self.speed(p) + f) / f)
    }

    fn second_difference(&self, r: f64) -> Result<(f64, f64)> {
        let p = self.eval(r)?;
        if p.saturated {
            return Err(LabError::Overflow(format!("Φ({r}) exceeds the representable range")));
        }
        let scale = p.value / self.speed(p.value).abs();
        let d = 3e-3 * scale.min(r);
        let lo = self.eval(r - d)?;
        let hi = self.eval(r + d)?;
        if lo.saturated {
            return Err(LabError::Overflow(format!("Φ({}) exceeds the representable range", r - d)));
        }
        Ok(((hi.value - 2.0 * p.value + lo.value) / (d * d), p.value))
    }

    /// Profile on the given increasing radii, all positive.
    pub fn profile(&self, radii: &[f64]) -> Result<RadialProfile> {
        let mut values = Vec::with_capacity(radii.len());
        let mut derivative = Vec::with_capacity(radii.len());
        for &r in radii {
            let p = self.eval(r)?;
            values.push(p.value);
            derivative.push(self.speed(p.value));
        }
        let residual_norm = sup_norm(&residuals(&self.nl, 1, radii, &values));
        Ok(RadialProfile {
            kind: ProfileKind::SingularPhi,
            n_dim: 1,
            grid: radii.to_vec(),
            values,
            derivative,
            residual_norm,
            blowup_radius: None,
        })
    }
}

/// `Φ(r)` for a single evaluation.
pub fn singular_profile_phi(nl: &Nonlinearity, r: f64) -> Result<f64> {
    Ok(SingularProfile::new(nl)?.eval(r)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::parse_nonlinearity;

    #[test]
    fn tableau_is_gauss() {
        let tb = tableau();
        assert!((tb.b.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..4 {
            assert!((tb.a[i].iter().sum::<f64>() - tb.c[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn fd_weights_exact_on_quartic() {
        let x = [0.0, 0.1, 0.25, 0.3, 0.5];
        let c = fd_weights(0.25, &x, 2);
        let d2: f64 = c[2].iter().zip(&x).map(|(c, x)| c * x.powi(4)).sum();
        assert!((d2 - 12.0 * 0.0625).abs() < 1e-9);
    }

    #[test]
    fn linear_profile_is_sinh() {
        let nl = parse_nonlinearity("u").unwrap();
        let p = solve_global_radial(&nl, 1.0, 3, 2.0).unwrap();
        assert!((p.eval(1.0) - 1f64.sinh()).abs() < 1e-9);
        assert!(p.values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn phi_closed_form() {
        let s = SingularProfile::new(&Nonlinearity::power(1.0).unwrap()).unwrap();
        for r in [0.1, 1.0, 10.0] {
            let v = s.eval(r).unwrap().value;
            assert!((v * r * r / 6.0 - 1.0).abs() < 1e-9, "{r}: {v}");
        }
        assert!(s.stencil_residual(1.0).unwrap() < 1e-4);
    }

    #[test]
    fn ball_needs_keller_osserman() {
        assert!(matches!(
            solve_ball_blowup(&Nonlinearity::log(1.5).unwrap(), 1.0, 3),
            Err(LabError::Precondition(_))
        ));
    }
}
