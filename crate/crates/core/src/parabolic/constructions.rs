//! Non-uniqueness, minimal/maximal and uniqueness constructions.

use super::{DtControl, 
    merge_times, solve_dirac, solve_radial_cauchy, solve_radial_cauchy_observed, BoundaryCondition, BoundaryFn,
    DiracApprox, DiracOptions, InnerDirichlet, RadialGrid, SolverOptions, SpaceTimeField,
};
use crate::classifier::{classify, tail_integral_ko, Regime};
use crate::error::{LabError, Result};
use crate::nonlinearity::Nonlinearity;
use crate::radial_profiles::{solve_ball_blowup, solve_global_radial, RadialProfile};
use crate::scalar_flow::ScalarFlow;
use serde::Serialize;
use std::sync::Arc;

fn require_regime(nl: &Nonlinearity, n_dim: usize, want: Regime) -> Result<()> {
    let got = classify(nl, n_dim)?.regime;
    if got != want {
        return Err(LabError::Regime(format!("construction needs regime {want:?}, f = {nl} is {got:?}")));
    }
    Ok(())
}

fn profile_on(w: &RadialProfile, grid: &RadialGrid) -> Vec<f64> {
    grid.radii.iter().map(|&r| w.eval(r)).collect()
}

/// `max (a − b)/|b|` over matching entries.
fn excess(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) / y.abs().max(1e-300)).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone)]
pub struct PairOptions {
    /// Radius `n` of the domain carrying the upper solution.
    pub n: f64,
    /// Grid spacing shared by all runs.
    pub h: f64,
    pub times: Vec<f64>,
    /// Truncation radii of the lower ladder as fractions of `n`.
    pub r_fractions: Vec<f64>,
    /// Outer domain of each lower rung as a multiple of its truncation radius.
    pub domain_factor: f64,
    /// Step-doubling tolerance of every run.
    pub rtol: f64,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            n: 10.0,
            h: 0.02,
            times: vec![0.1, 0.25, 0.5],
            r_fractions: vec![0.8, 0.9, 1.0],
            domain_factor: 1.25,
            rtol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Separation {
    pub r: f64,
    pub t: f64,
    pub over: f64,
    pub under: f64,
    pub w_a: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonUniquenessPair {
    pub under: SpaceTimeField,
    pub over: SpaceTimeField,
    pub truncation_radii: Vec<f64>,
    /// Relative sup change of the lower ladder between its last two rungs on the
    /// inner half of the smaller truncation radius, at the final time.
    pub under_cauchy: f64,
    /// `max (under − min{φ_∞(t), w_b})/min{φ_∞(t), w_b}`.
    pub under_excess: f64,
    /// `max (w_a − over)/w_a`.
    pub over_deficit: f64,
    /// `max (over − w_b)/w_b`.
    pub over_excess: f64,
    /// `sup_r under(r, T) / φ_∞(T)`.
    pub under_decay: f64,
    /// `over(0.9 n, T) > over(0, T)`.
    pub over_grows: bool,
    pub separation: Separation,
}

/// Two solutions with the same initial data `u0`, `w_a ≤ u0 ≤ w_b`: the limit of
/// truncated-data runs (bounded by the flow) and the solution pinned between
/// `w_a` and `w_b` by the boundary value `(w_a(n) + w_b(n))/2` on `|x| = n`.
pub fn nonuniqueness_pair(
    nl: &Nonlinearity,
    n_dim: usize,
    a: f64,
    b: f64,
    u0: &dyn Fn(f64) -> f64,
    opts: &PairOptions,
) -> Result<NonUniquenessPair> {
    require_regime(nl, n_dim, Regime::FlowLimit)?;
    if !(0.0 < a && a < b) {
        return Err(LabError::Precondition(format!("need 0 < a < b, got a = {a}, b = {b}")));
    }
    let flow = ScalarFlow::new(nl)?;
    let n = opts.n;
    let r_outer = n * opts.domain_factor * opts.r_fractions.iter().cloned().fold(0.0, f64::max);
    let w_a = solve_global_radial(nl, a, n_dim, n.max(r_outer))?;
    let w_b = solve_global_radial(nl, b, n_dim, n.max(r_outer))?;
    let nodes = |len: f64| (len / opts.h).round() as usize + 1;

    let grid = RadialGrid::uniform(n_dim, n, nodes(n))?;
    let wa = profile_on(&w_a, &grid);
    let wb = profile_on(&w_b, &grid);
    let data: Vec<f64> = grid.radii.iter().map(|&r| u0(r)).collect();
    if excess(&wa, &data) > 1e-9 || excess(&data, &wb) > 1e-9 {
        return Err(LabError::Precondition("initial data must lie between w_a and w_b".into()));
    }
    let edge = 0.5 * (w_a.eval(n) + w_b.eval(n));
    let dt = DtControl::Adaptive { rtol: opts.rtol, dt_init: 0.0 };
    let over_opts = SolverOptions { dt, error_floor: 0.0, ..Default::default() };
    let over = solve_radial_cauchy(
        nl,
        &grid,
        &data,
        &BoundaryCondition::DirichletValue(BoundaryFn::constant(edge)),
        0.0,
        &opts.times,
        &over_opts,
    )?;

    let mut truncation_radii = Vec::new();
    let mut rungs = Vec::new();
    for &frac in &opts.r_fractions {
        let rt = frac * n;
        let len = rt * opts.domain_factor;
        let g = RadialGrid::uniform(n_dim, len, nodes(len))?;
        let d: Vec<f64> = g.radii.iter().map(|&r| if r <= rt { u0(r) } else { 0.0 }).collect();
        rungs.push(solve_radial_cauchy(nl, &g, &d, &BoundaryCondition::DirichletZero, 0.0, &opts.times, &SolverOptions { dt, ..Default::default() })?);
        truncation_radii.push(rt);
    }
    let t_end = *opts.times.last().unwrap();
    let under_cauchy = if rungs.len() >= 2 {
        let (p, q) = (&rungs[rungs.len() - 2], &rungs[rungs.len() - 1]);
        let reach = 0.5 * truncation_radii[truncation_radii.len() - 2];
        let up = p.snapshot(t_end).unwrap();
        let (mut d, mut m) = (0.0f64, 0.0f64);
        for (&r, &v) in p.grid.radii.iter().zip(up) {
            if r > reach {
                break;
            }
            let w = q.value(r, t_end).unwrap();
            d = d.max((v - w).abs());
            m = m.max(w.abs());
        }
        d / m.max(1e-300)
    } else {
        f64::NAN
    };
    let under = rungs.pop().unwrap();

    let mut under_excess = f64::NEG_INFINITY;
    for (&t, u) in under.times.iter().zip(&under.values) {
        let phi = flow.phi_inf(t);
        for (&r, &v) in under.grid.radii.iter().zip(u) {
            let cap = phi.min(w_b.eval(r));
            under_excess = under_excess.max((v - cap) / cap);
        }
    }
    let (mut over_deficit, mut over_excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for u in &over.values {
        over_deficit = over_deficit.max(excess(&wa, u));
        over_excess = over_excess.max(excess(u, &wb));
    }
    let last_under = under.snapshot(t_end).unwrap();
    let under_decay = last_under.iter().cloned().fold(0.0, f64::max) / flow.phi_inf(t_end);
    let over_grows = over.value(0.9 * n, t_end).unwrap() > over.value(0.0, t_end).unwrap();
    let rs = 0.8 * n;
    let (ov, un, wa_s) = (over.value(rs, t_end).unwrap(), under.value(rs, t_end).unwrap(), w_a.eval(rs));
    let separation = Separation { r: rs, t: t_end, over: ov, under: un, w_a: wa_s, holds: ov - un > 0.5 * wa_s };
    Ok(NonUniquenessPair {
        under,
        over,
        truncation_radii,
        under_cauchy,
        under_excess,
        over_deficit,
        over_excess,
        under_decay,
        over_grows,
        separation,
    })
}

#[derive(Debug, Clone)]
pub struct MinMaxOptions {
    /// Mass of the Dirac run standing in for `k = ∞`.
    pub k: f64,
    pub t0: f64,
    pub dirac: DiracOptions,
    pub eps: f64,
    /// Decreasing `τ` rungs; the smallest carries the upper field.
    pub taus: Vec<f64>,
    pub times: Vec<f64>,
    /// Boundary data `φ_∞(t)` of the exterior problem is capped at `φ_∞(cap_time)`.
    pub cap_time: f64,
}

impl Default for MinMaxOptions {
    fn default() -> Self {
        MinMaxOptions {
            k: 1e5,
            t0: 1e-4,
            dirac: DiracOptions::default(),
            eps: 0.2,
            taus: vec![1e-4, 3e-5, 1e-5],
            times: vec![0.1, 0.25, 0.5],
            cap_time: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinMaxU {
    pub under: SpaceTimeField,
    pub over: SpaceTimeField,
    pub eps: f64,
    /// `(τ, m(τ, ε))` per rung.
    pub offsets: Vec<(f64, f64)>,
    pub offsets_decrease: bool,
    /// `max (under − over)/over` on the shared output times.
    pub order_excess: f64,
}

/// `m(τ, ε)` per `τ`: the largest value on `|x| > ε`, `t ≤ τ` of the exterior
/// solution with data `φ_∞(t)` on `|x| = ε/2` and zero initial data.
pub fn exterior_offsets(
    nl: &Nonlinearity,
    n_dim: usize,
    eps: f64,
    taus: &[f64],
    cap_time: f64,
    grid: &RadialGrid,
) -> Result<Vec<(f64, f64)>> {
    let flow = Arc::new(ScalarFlow::new(nl)?);
    let cap = flow.phi_inf(cap_time);
    let inner = InnerDirichlet {
        radius: 0.5 * eps,
        value: {
            let f = flow.clone();
            BoundaryFn::new(move |t| if t > 0.0 { f.phi_inf(t) } else { f64::INFINITY })
        },
        cap,
    };
    let data: Vec<f64> = grid.radii.iter().map(|&r| if r <= 0.5 * eps { cap } else { 0.0 }).collect();
    let outs = merge_times(&[taus]);
    let first_out = grid.radii.partition_point(|&r| r <= eps);
    let mut running = 0.0f64;
    let mut at: Vec<(f64, f64)> = Vec::new();
    let mut next = 0;
    let opts = SolverOptions { inner: Some(inner), ..Default::default() };
    solve_radial_cauchy_observed(
        nl,
        grid,
        &data,
        &BoundaryCondition::DirichletZero,
        0.0,
        &outs,
        &opts,
        &mut |t, u| {
            running = running.max(u[first_out..].iter().cloned().fold(0.0, f64::max));
            while next < outs.len() && t >= outs[next] * (1.0 - 1e-12) {
                at.push((outs[next], running));
                next += 1;
            }
        },
    )?;
    let _ = n_dim;
    Ok(taus
        .iter()
        .map(|&tau| *at.iter().find(|(s, _)| (s - tau).abs() <= 1e-12 * tau).unwrap())
        .collect())
}

/// Minimal element (top Dirac rung) and a computed rung of the maximal element
/// `U_{ε,ℓ}(·, t − τ) + m(τ, ε)` with `ℓ = φ_∞(τ)`.
pub fn minimal_maximal_u(nl: &Nonlinearity, n_dim: usize, opts: &MinMaxOptions) -> Result<MinMaxU> {
    require_regime(nl, n_dim, Regime::MinimalSingular)?;
    let tau = opts.taus.iter().cloned().fold(f64::INFINITY, f64::min);
    if opts.times.iter().any(|&t| t <= tau) {
        return Err(LabError::Precondition("output times must exceed every τ".into()));
    }
    let under = solve_dirac(nl, n_dim, &DiracApprox::heat_kernel(opts.k, opts.t0), &opts.times, &opts.dirac)?;
    let grid = RadialGrid::graded(n_dim, opts.dirac.r_max, opts.dirac.nodes, opts.eps / 40.0)?;
    let offsets = exterior_offsets(nl, n_dim, opts.eps, &opts.taus, opts.cap_time, &grid)?;
    let m = offsets.iter().find(|(s, _)| *s == tau).unwrap().1;
    let ell = ScalarFlow::new(nl)?.phi_inf(tau);
    let data: Vec<f64> = grid.radii.iter().map(|&r| if r <= opts.eps { ell } else { 0.0 }).collect();
    let shifted: Vec<f64> = opts.times.iter().map(|&t| t - tau).collect();
    let mut over =
        solve_radial_cauchy(nl, &grid, &data, &BoundaryCondition::DirichletZero, 0.0, &shifted, &SolverOptions::default())?;
    over.times = opts.times.clone();
    over.t_start = tau;
    for u in &mut over.values {
        for v in u.iter_mut() {
            *v += m;
        }
    }
    over.bc = format!("{} + m(τ={tau}, ε={})", over.bc, opts.eps);
    let mut sorted = offsets.clone();
    sorted.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let offsets_decrease = sorted.windows(2).all(|w| w[0].1 < w[1].1);
    let mut order_excess = f64::NEG_INFINITY;
    for (&t, u) in under.times.iter().zip(&under.values) {
        for (&r, &v) in under.grid.radii.iter().zip(u) {
            let o = over.value(r, t).unwrap();
            order_excess = order_excess.max((v - o) / o);
        }
    }
    Ok(MinMaxU { under, over, eps: opts.eps, offsets, offsets_decrease, order_excess })
}

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    /// Radius of the truncated-data path; its domain extends to `domain_factor · R`.
    pub radius: f64,
    pub domain_factor: f64,
    /// Outer radius of the direct path, which freezes `u0` there.
    pub far: f64,
    pub nodes: usize,
    pub times: Vec<f64>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { radius: 20.0, domain_factor: 1.25, far: 40.0, nodes: 800, times: vec![0.1, 0.5, 1.0] }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Sandwich {
    pub radius: f64,
    /// `w_R(0)`.
    pub w_center: f64,
    /// `max (u_R − u)/u`.
    pub lower_excess: f64,
    /// `max (u − w_R − u_R)/(w_R + u_R)` where `w_R` is finite.
    pub upper_excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    /// Sup-relative disagreement of the two paths on `r ≤ far/2`.
    pub agreement: f64,
    pub sandwich: Option<Sandwich>,
}

fn sup_rel_gap(a: &SpaceTimeField, b: &SpaceTimeField, reach: f64) -> f64 {
    let (mut d, mut m) = (0.0f64, 0.0f64);
    for (&t, u) in b.times.iter().zip(&b.values) {
        for (&r, &v) in b.grid.radii.iter().zip(u) {
            if r > reach {
                break;
            }
            let w = a.value(r, t).unwrap();
            d = d.max((v - w).abs());
            m = m.max(v.abs());
        }
    }
    d / m.max(1e-300)
}

/// Solves from `u0` along two paths: truncated data `u0·𝟙_{r≤R}` with zero
/// Dirichlet data, and a large domain with `u0(far)` frozen on its boundary.
/// When `∫ ds/√F` converges also checks `u_R ≤ u ≤ w_R + u_R`.
pub fn uniqueness_probe(
    nl: &Nonlinearity,
    n_dim: usize,
    u0: &dyn Fn(f64) -> f64,
    opts: &ProbeOptions,
) -> Result<UniquenessReport> {
    let graded = |len: f64| RadialGrid::graded(n_dim, len, opts.nodes, (len / opts.nodes as f64).min(0.01));
    let len = opts.radius * opts.domain_factor;
    let g1 = graded(len)?;
    let d1: Vec<f64> = g1.radii.iter().map(|&r| if r <= opts.radius { u0(r) } else { 0.0 }).collect();
    let truncated = solve_radial_cauchy(nl, &g1, &d1, &BoundaryCondition::DirichletZero, 0.0, &opts.times, &SolverOptions::default())?;
    let g2 = graded(opts.far)?;
    let d2: Vec<f64> = g2.radii.iter().map(|&r| u0(r)).collect();
    let bc = BoundaryCondition::DirichletValue(BoundaryFn::constant(u0(opts.far)));
    let direct = solve_radial_cauchy(nl, &g2, &d2, &bc, 0.0, &opts.times, &SolverOptions::default())?;
    let agreement = sup_rel_gap(&truncated, &direct, 0.5 * opts.far.min(len));

    let sandwich = if !nl.is_zero() && tail_integral_ko(nl).is_finite() {
        let gr = graded(opts.radius)?;
        let dr: Vec<f64> = gr.radii.iter().map(|&r| u0(r)).collect();
        let u_r = solve_radial_cauchy(nl, &gr, &dr, &BoundaryCondition::DirichletZero, 0.0, &opts.times, &SolverOptions::default())?;
        let w = solve_ball_blowup(nl, opts.radius, n_dim)?;
        let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (&t, ur) in u_r.times.iter().zip(&u_r.values) {
            for (&r, &v) in u_r.grid.radii.iter().zip(ur) {
                let u = direct.value(r, t).unwrap();
                if u > 0.0 {
                    lower = lower.max((v - u) / u);
                }
                let wr = w.eval(r);
                if wr.is_finite() {
                    upper = upper.max((u - wr - v) / (wr + v));
                }
            }
        }
        Some(Sandwich { radius: opts.radius, w_center: w.eval(0.0), lower_excess: lower, upper_excess: upper })
    } else {
        None
    };
    Ok(UniquenessReport { agreement, sandwich })
}
