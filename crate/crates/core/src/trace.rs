//! Initial traces of computed fields: ball masses, regular/singular verdicts per
//! test radius, the ratio `u/φ_∞` on singular interiors, and the `ν_∞` sandwich.

use crate::classifier::{classify, Regime};
use crate::error::{LabError, Result};
use crate::nonlinearity::Nonlinearity;
use crate::parabolic::{aitken, solve_radial_cauchy, BoundaryCondition, BoundaryFn, DtControl, RadialGrid, SolverOptions, SpaceTimeField};
use crate::radial_profiles::solve_global_radial;
use crate::scalar_flow::ScalarFlow;
use serde::Serialize;
use std::sync::Arc;

/// `|S^{N−1}| ∫₀^ρ u(r, t) r^{N−1} dr`.
pub fn ball_mass(field: &SpaceTimeField, rho: f64, t: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= field.grid.r_max() * (1.0 + 1e-12)) {
        return Err(LabError::Precondition(format!("ball radius {rho} outside (0, r_max]")));
    }
    let u = field
        .snapshot(t)
        .ok_or_else(|| LabError::Precondition(format!("time {t} is not stored in the field")))?;
    Ok(field.grid.radial_integral(u, rho.min(field.grid.r_max())))
}

/// `|S^{N−1}| ∫₀^ρ f(u) r^{N−1} dr` at a stored snapshot.
fn ball_absorption(nl: &Nonlinearity, field: &SpaceTimeField, i: usize, rho: f64) -> f64 {
    let fu: Vec<f64> = field.values[i].iter().map(|&v| nl.f(v)).collect();
    field.grid.radial_integral(&fu, rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", content = "mass_limit")]
pub enum PointVerdict {
    Regular(f64),
    Singular,
    Undecided,
}

/// Calibration constants of the trace rules.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceThresholds {
    /// Masses at the last two sampled times must agree to this for `Regular`.
    pub cauchy: f64,
    /// Mass growth over `[t_min, T]` that marks `Singular` when the dyadic
    /// increments are not shrinking.
    pub growth: f64,
    /// Last dyadic absorption contribution over the previous one; at or above
    /// this the absorption integral is not decaying.
    pub decay: f64,
}

impl Default for TraceThresholds {
    fn default() -> Self {
        TraceThresholds { cauchy: 0.02, growth: 10.0, decay: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
    pub mass_curve: Vec<(f64, f64)>,
    pub absorption_integral: f64,
    pub verdict: PointVerdict,
    /// Regular mass over the annulus volume; `NaN` unless `Regular`.
    pub density: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RadiusTrace {
    pub rho: f64,
    /// `(t, mass)` from `T` down to `t_min`.
    pub mass_curve: Vec<(f64, f64)>,
    /// `∫_{t_min}^T ∫_{B_ρ} f(u)` by the trapezoid rule on the stored times.
    pub absorption_integral: f64,
    /// Contributions of the two dyadic intervals nearest `t_min`, latest last.
    pub absorption_tail: (f64, f64),
    pub verdict: PointVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceEstimate {
    pub radii: Vec<RadiusTrace>,
    /// Annuli between consecutive test radii, classified like the balls.
    pub annuli: Vec<Annulus>,
    pub thresholds: TraceThresholds,
}

impl TraceEstimate {
    pub fn all_singular(&self) -> bool {
        self.radii.iter().all(|r| r.verdict == PointVerdict::Singular)
    }

    pub fn all_regular(&self) -> bool {
        self.radii.iter().all(|r| matches!(r.verdict, PointVerdict::Regular(_)))
    }

    /// Rows `(t, rho, mass)`.
    pub fn mass_rows(&self) -> Vec<[f64; 3]> {
        self.radii.iter().flat_map(|r| r.mass_curve.iter().map(move |(t, m)| [*t, r.rho, *m])).collect()
    }
}

pub fn extract_trace(nl: &Nonlinearity, field: &SpaceTimeField, test_radii: &[f64], t_min: f64) -> Result<TraceEstimate> {
    extract_trace_with(nl, field, test_radii, t_min, TraceThresholds::default())
}

/// Classifies each ball `B_ρ` from the field's snapshots at `t ≥ t_min`, which
/// should form a dyadic ladder `T, T/2, …, t_min`.
pub fn extract_trace_with(
    nl: &Nonlinearity,
    field: &SpaceTimeField,
    test_radii: &[f64],
    t_min: f64,
    th: TraceThresholds,
) -> Result<TraceEstimate> {
    let idx: Vec<usize> = {
        let mut v: Vec<usize> = (0..field.times.len()).filter(|&i| field.times[i] >= t_min * (1.0 - 1e-12)).collect();
        v.reverse();
        v
    };
    if idx.len() < 3 {
        return Err(LabError::Precondition(format!("need at least 3 snapshots at t ≥ {t_min}")));
    }
    let mut radii = Vec::with_capacity(test_radii.len());
    let mut balls = Vec::with_capacity(test_radii.len());
    for &rho in test_radii {
        let mass: Vec<f64> = idx.iter().map(|&i| ball_mass(field, rho, field.times[i])).collect::<Result<_>>()?;
        let abs: Vec<f64> = idx.iter().map(|&i| ball_absorption(nl, field, i, rho)).collect();
        balls.push((mass, abs));
    }
    let times: Vec<f64> = idx.iter().map(|&i| field.times[i]).collect();
    for (&rho, (mass, abs)) in test_radii.iter().zip(&balls) {
        let (verdict, absorption_integral, absorption_tail) = classify_region(&times, mass, abs, &th);
        let mass_curve = times.iter().cloned().zip(mass.iter().cloned()).collect();
        radii.push(RadiusTrace { rho, mass_curve, absorption_integral, absorption_tail, verdict });
    }
    let omega = crate::parabolic::sphere_area(field.n_dim()) / field.n_dim() as f64;
    let nd = field.n_dim() as i32;
    let mut annuli = Vec::new();
    for j in 1..test_radii.len() {
        let (inner, outer) = (test_radii[j - 1], test_radii[j]);
        let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| (x - y).max(0.0)).collect() };
        let mass = diff(&balls[j].0, &balls[j - 1].0);
        let abs = diff(&balls[j].1, &balls[j - 1].1);
        let (verdict, absorption_integral, _) = classify_region(&times, &mass, &abs, &th);
        let density = match verdict {
            PointVerdict::Regular(m) => m / (omega * (outer.powi(nd) - inner.powi(nd))),
            _ => f64::NAN,
        };
        let mass_curve = times.iter().cloned().zip(mass).collect();
        annuli.push(Annulus { inner, outer, mass_curve, absorption_integral, verdict, density });
    }
    Ok(TraceEstimate { radii, annuli, thresholds: th })
}

/// Share of `k` the smallest ball may hold at a time used for ball verdicts.
pub const DIRAC_MASS_SHARE: f64 = 0.01;

/// Trace of a field started from `k δ₀`. Ball verdicts use only times at which
/// the smallest ball holds at most `DIRAC_MASS_SHARE · k`, since closer to
/// `t = 0` the run sees its finite mass rather than the `k → ∞` limit; annuli
/// use every time down to `t_min`.
pub fn extract_dirac_trace(
    nl: &Nonlinearity,
    field: &SpaceTimeField,
    k: f64,
    test_radii: &[f64],
    t_min: f64,
) -> Result<TraceEstimate> {
    let rho = test_radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut t_ball = f64::INFINITY;
    for &t in field.times.iter().rev() {
        if t < t_min * (1.0 - 1e-12) {
            continue;
        }
        if ball_mass(field, rho, t)? > DIRAC_MASS_SHARE * k {
            break;
        }
        t_ball = t_ball.min(t);
    }
    let deep = extract_trace(nl, field, test_radii, t_min)?;
    let balls = extract_trace(nl, field, test_radii, t_ball)?;
    Ok(TraceEstimate { radii: balls.radii, annuli: deep.annuli, thresholds: deep.thresholds })
}

/// Verdict from a mass curve and absorption rates sampled at dyadic times
/// `T, T/2, …`; also returns the absorption integral and its last two pieces.
fn classify_region(times: &[f64], masses: &[f64], abs: &[f64], th: &TraceThresholds) -> (PointVerdict, f64, (f64, f64)) {
    let pieces: Vec<f64> = (0..times.len() - 1).map(|j| 0.5 * (abs[j] + abs[j + 1]) * (times[j] - times[j + 1])).collect();
    let absorption_integral: f64 = pieces.iter().sum();
    let p = pieces.len();
    let tail = (pieces[p - 2], pieces[p - 1]);
    let n = masses.len();
    let (m_top, m_prev, m_last) = (masses[0], masses[n - 2], masses[n - 1]);
    let decaying = tail.1 < th.decay * tail.0 || tail.1 == 0.0;
    // growth alone is not enough: small balls gain mass as t ↓ 0 for smooth data too
    let (d1, d2) = (m_prev - masses[n - 3], m_last - m_prev);
    let mass_diverging = m_last > th.growth * m_top && d2 > 0.0 && d2 >= th.decay * d1;
    let scale = masses.iter().cloned().fold(0.0, f64::max);
    let verdict = if mass_diverging || !decaying {
        PointVerdict::Singular
    } else if (m_last - m_prev).abs() <= th.cauchy * m_prev.abs().max(1e-300) || m_last.abs() <= th.cauchy * scale * 1e-3 {
        PointVerdict::Regular(aitken(masses))
    } else {
        PointVerdict::Undecided
    };
    (verdict, absorption_integral, tail)
}

/// `max_{r ≤ rho_inner} |u(r, t)/φ_∞(t) − 1|`.
pub fn ratio_law(field: &SpaceTimeField, flow: &ScalarFlow, rho_inner: f64, t: f64) -> Result<f64> {
    let u = field
        .snapshot(t)
        .ok_or_else(|| LabError::Precondition(format!("time {t} is not stored in the field")))?;
    let phi = flow.phi_infinity(t)?;
    if phi.saturated {
        return Err(LabError::Precondition(format!("φ_∞({t}) is saturated")));
    }
    Ok(field
        .grid
        .radii
        .iter()
        .zip(u)
        .take_while(|(r, _)| **r <= rho_inner)
        .map(|(_, v)| (v / phi.value - 1.0).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone)]
pub struct SandwichOptions {
    /// `τ` rungs, largest first; the last carries the returned field.
    pub taus: Vec<f64>,
    pub times: Vec<f64>,
    pub r_max: f64,
    pub nodes: usize,
    /// Time at which consecutive rungs are compared.
    pub compare_at: f64,
    /// Checks are made on `r ≤ check_radius`.
    pub check_radius: f64,
    pub rtol: f64,
}

impl Default for SandwichOptions {
    fn default() -> Self {
        SandwichOptions {
            taus: vec![0.2, 0.1],
            times: vec![0.25, 0.3, 0.4, 0.5],
            r_max: 6.0,
            nodes: 601,
            compare_at: 0.3,
            check_radius: 4.0,
            rtol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NuInfinitySandwich {
    pub field: SpaceTimeField,
    pub b: f64,
    /// `max (max{φ_∞, w_b} − u)/max{φ_∞, w_b}`.
    pub lower_deficit: f64,
    /// `max (u − φ_∞ − w_b)/(φ_∞ + w_b)`.
    pub upper_excess: f64,
    /// `max (φ_∞ − u)/φ_∞`.
    pub minimality_deficit: f64,
    /// Sup-relative gap of the last two rungs at `compare_at`.
    pub rung_gap: f64,
}

/// Solutions started at time `τ` from `½(max{φ_∞(τ), w_b} + φ_∞(τ) + w_b)`, with the
/// same expression as Dirichlet data on `r_max`, for decreasing `τ`.
pub fn nu_infinity_sandwich(nl: &Nonlinearity, n_dim: usize, b: f64, opts: &SandwichOptions) -> Result<NuInfinitySandwich> {
    let regime = classify(nl, n_dim)?.regime;
    if regime != Regime::FlowLimit {
        return Err(LabError::Regime(format!("ν_∞ sandwich needs regime FlowLimit, f = {nl} is {regime:?}")));
    }
    let flow = Arc::new(ScalarFlow::new(nl)?);
    for &tau in &opts.taus {
        if flow.phi_infinity(tau)?.saturated {
            return Err(LabError::Precondition(format!("φ_∞(τ = {tau}) saturates; raise τ")));
        }
    }
    let w_b = solve_global_radial(nl, b, n_dim, opts.r_max)?;
    let grid = RadialGrid::uniform(n_dim, opts.r_max, opts.nodes)?;
    let wb: Vec<f64> = grid.radii.iter().map(|&r| w_b.eval(r)).collect();
    let psi = |phi: f64, w: f64| 0.5 * (phi.max(w) + phi + w);
    let w_edge = *wb.last().unwrap();
    let mut fields = Vec::new();
    for &tau in &opts.taus {
        let phi_tau = flow.phi_inf(tau);
        let u0: Vec<f64> = wb.iter().map(|&w| psi(phi_tau, w)).collect();
        let f = flow.clone();
        let bc = BoundaryCondition::DirichletValue(BoundaryFn::new(move |t| psi(f.phi_inf(t), w_edge)));
        let times: Vec<f64> = opts.times.iter().cloned().filter(|&t| t > tau).collect();
        if times.len() != opts.times.len() {
            return Err(LabError::Precondition("output times must exceed every τ".into()));
        }
        let solver = SolverOptions {
            dt: DtControl::Adaptive { rtol: opts.rtol, dt_init: 0.0 },
            error_floor: 0.0,
            extrapolate: true,
            ..Default::default()
        };
        fields.push(solve_radial_cauchy(nl, &grid, &u0, &bc, tau, &times, &solver)?);
    }
    let rung_gap = if fields.len() >= 2 {
        let (p, q) = (&fields[fields.len() - 2], &fields[fields.len() - 1]);
        let (a, c) = (p.snapshot(opts.compare_at), q.snapshot(opts.compare_at));
        match (a, c) {
            (Some(a), Some(c)) => a.iter().zip(c).map(|(x, y)| (x - y).abs() / y.abs()).fold(0.0, f64::max),
            _ => return Err(LabError::Precondition("compare_at must be an output time".into())),
        }
    } else {
        f64::NAN
    };
    let field = fields.pop().unwrap();
    let (mut lower, mut upper, mut minimal) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (&t, u) in field.times.iter().zip(&field.values) {
        let phi = flow.phi_inf(t);
        for ((&r, &v), &w) in grid.radii.iter().zip(u).zip(&wb) {
            if r > opts.check_radius {
                break;
            }
            let lo = phi.max(w);
            lower = lower.max((lo - v) / lo);
            upper = upper.max((v - phi - w) / (phi + w));
            minimal = minimal.max((phi - v) / phi);
        }
    }
    Ok(NuInfinitySandwich { field, b, lower_deficit: lower, upper_excess: upper, minimality_deficit: minimal, rung_gap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_mass_is_volume() {
        let grid = RadialGrid::uniform(3, 2.0, 41).unwrap();
        let field = SpaceTimeField {
            grid: grid.clone(),
            t_start: 0.0,
            times: vec![1.0],
            values: vec![vec![3.0; 41]],
            nl: "0".into(),
            bc: "dirichlet_zero".into(),
            steps: 0,
            rejected: 0,
        };
        let m = ball_mass(&field, 1.5, 1.0).unwrap();
        let exact = 3.0 * 4.0 * std::f64::consts::PI * 1.5f64.powi(3) / 3.0;
        assert!((m - exact).abs() < 1e-12 * exact);
        assert!(ball_mass(&field, 3.0, 1.0).is_err());
    }
}
