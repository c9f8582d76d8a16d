//! Dirac initial data `k δ₀`, its two regularizations, and the ladder `k → ∞`.

use super::{heat_kernel, solve_radial_cauchy, BoundaryCondition, DtControl, RadialGrid, SolverOptions, SpaceTimeField};
use crate::classifier::weak_singularity;
use crate::error::{LabError, Result};
use crate::nonlinearity::Nonlinearity;
use crate::quadrature::{adaptive, Finiteness, QuadOptions};
use crate::radial_profiles::SingularProfile;
use crate::scalar_flow::{theta_k, ScalarFlow};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DiracKind {
    /// `k E(·, t₀)`, started at time `t₀`.
    HeatKernelAtT0(f64),
    /// Mollifier `exp(−1/(1 − r²/ρ²))` scaled to mass `k`, started at the time
    /// whose heat kernel has the same second moment (see [`bump_start_time`]).
    NormalizedBump(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiracApprox {
    pub kind: DiracKind,
    pub k: f64,
}

impl DiracApprox {
    pub fn heat_kernel(k: f64, t0: f64) -> Self {
        DiracApprox { kind: DiracKind::HeatKernelAtT0(t0), k }
    }

    pub fn bump(k: f64, rho: f64) -> Self {
        DiracApprox { kind: DiracKind::NormalizedBump(rho), k }
    }

    /// Length over which the initial data varies.
    pub fn support_scale(&self) -> f64 {
        match self.kind {
            DiracKind::HeatKernelAtT0(t0) => 2.0 * t0.sqrt(),
            DiracKind::NormalizedBump(rho) => rho,
        }
    }

    pub fn start_time(&self, n_dim: usize) -> f64 {
        match self.kind {
            DiracKind::HeatKernelAtT0(t0) => t0,
            DiracKind::NormalizedBump(rho) => bump_start_time(n_dim, rho),
        }
    }

    /// Nodal data rescaled so the discrete mass is exactly `k`.
    pub fn initial_data(&self, grid: &RadialGrid) -> Result<Vec<f64>> {
        let shape: Vec<f64> = match self.kind {
            DiracKind::HeatKernelAtT0(t0) => grid.radii.iter().map(|&r| heat_kernel(grid.n_dim, r, t0)).collect(),
            DiracKind::NormalizedBump(rho) => grid.radii.iter().map(|&r| mollifier(r / rho)).collect(),
        };
        let mass = grid.radial_integral(&shape, grid.r_max());
        if !(mass > 0.0) {
            return Err(LabError::Precondition("Dirac approximation has no mass on the grid".into()));
        }
        Ok(shape.into_iter().map(|v| v * self.k / mass).collect())
    }
}

fn mollifier(s: f64) -> f64 {
    if s < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// `⟨|x|²⟩ / (2N)` for the mollifier of radius `ρ`: `E(·, t)` has second moment
/// `2Nt`, so a bump placed at this time differs from `δ₀` only at fourth order in `ρ`.
pub fn bump_start_time(n_dim: usize, rho: f64) -> f64 {
    let q = QuadOptions { rtol: 1e-12, atol: 0.0, max_intervals: 200 };
    let m = |p: i32| adaptive(|s| s.powi(p) * mollifier(s), 0.0, 1.0, q).value;
    let nd = n_dim as i32;
    m(nd + 1) / m(nd - 1) * rho * rho / (2.0 * n_dim as f64)
}

#[derive(Debug, Clone)]
pub struct DiracOptions {
    pub r_max: f64,
    pub nodes: usize,
    pub dt: DtControl,
}

impl Default for DiracOptions {
    fn default() -> Self {
        DiracOptions { r_max: 8.0, nodes: 600, dt: DtControl::default() }
    }
}

/// Default `t₀ = (r_max/40)²`.
pub fn default_t0(r_max: f64) -> f64 {
    (r_max / 40.0).powi(2)
}

/// Graded grid with at least 12 nodes inside the support scale of `approx`.
pub fn dirac_grid(n_dim: usize, approx: &DiracApprox, opts: &DiracOptions) -> Result<RadialGrid> {
    let scale = approx.support_scale();
    let grid = RadialGrid::graded(n_dim, opts.r_max, opts.nodes, scale / 16.0)?;
    if grid.nodes_within(scale) < 12 {
        return Err(LabError::Precondition(format!(
            "only {} nodes inside the Dirac support scale {scale:e}; raise the node count",
            grid.nodes_within(scale)
        )));
    }
    Ok(grid)
}

fn check_admissible(nl: &Nonlinearity, n_dim: usize) -> Result<()> {
    if nl.is_zero() {
        return Ok(());
    }
    let v = weak_singularity(nl, n_dim)?;
    if v.finite != Finiteness::Finite {
        return Err(LabError::Regime(format!(
            "k δ₀ is not admissible for f = {nl}, N = {n_dim}: ∫ s^(-2-2/N) f(s) ds is {:?}",
            v.finite
        )));
    }
    Ok(())
}

/// Solves with initial data `k δ₀` regularized by `approx`, on `[0, r_max]` with
/// zero Dirichlet data. `times` must lie after the approximation's start time.
pub fn solve_dirac(
    nl: &Nonlinearity,
    n_dim: usize,
    approx: &DiracApprox,
    times: &[f64],
    opts: &DiracOptions,
) -> Result<SpaceTimeField> {
    check_admissible(nl, n_dim)?;
    if !(approx.k > 0.0) {
        return Err(LabError::Precondition(format!("mass k must be positive, got {}", approx.k)));
    }
    let grid = dirac_grid(n_dim, approx, opts)?;
    let u0 = approx.initial_data(&grid)?;
    let solver = SolverOptions { dt: opts.dt, ..Default::default() };
    solve_radial_cauchy(nl, &grid, &u0, &BoundaryCondition::DirichletZero, approx.start_time(n_dim), times, &solver)
}

/// `k · max_{t ≤ T} E(r_max, t)`: bound on the error from truncating at `r_max`.
pub fn truncation_error_bound(n_dim: usize, k: f64, r_max: f64, t_end: f64) -> f64 {
    let t_peak = (r_max * r_max / (2.0 * n_dim as f64)).min(t_end);
    k * heat_kernel(n_dim, r_max, t_peak)
}

/// Below this fraction of the kernel peak `k E(0, t)` values are not compared:
/// there the implicit scheme's diffusion tail and the truncation at `r_max` dominate.
pub const BOUND_FLOOR: f64 = 1e-12;

/// Worst relative violations of the a priori bounds for a Dirac field, over nodes
/// with `E(r, t) ≥ BOUND_FLOOR·E(0, t)` and `r ≤ r_max/2`.
#[derive(Debug, Clone, Serialize)]
pub struct DiracBounds {
    /// `max (u − kE)/(kE)`.
    pub upper_kernel: f64,
    /// `max (lower − u)/lower` over `t` in the envelope window.
    pub lower_envelope: f64,
    /// `max (u − min{φ_∞, Φ})/min{φ_∞, Φ}`; `None` when neither bound exists.
    pub universal: Option<f64>,
}

/// Evaluates the kernel upper bound, the lower envelope on `t ∈ window`, and
/// `u ≤ min{φ_∞(t), Φ(r)}` when `φ_∞` or `Φ` exist.
pub fn dirac_bounds(
    nl: &Nonlinearity,
    field: &SpaceTimeField,
    k: f64,
    window: (f64, f64),
    flow: Option<&ScalarFlow>,
    phi: Option<&SingularProfile>,
) -> Result<DiracBounds> {
    let n_dim = field.n_dim();
    let r_half = 0.5 * field.grid.r_max();
    let mut upper = f64::NEG_INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut univ: Option<f64> = None;
    let phi_r: Option<Vec<f64>> = match phi {
        Some(p) => Some(
            field
                .grid
                .radii
                .iter()
                .map(|&r| if r > 0.0 && r <= r_half { p.eval(r).map(|v| v.value) } else { Ok(f64::INFINITY) })
                .collect::<Result<_>>()?,
        ),
        None => None,
    };
    for (&t, u) in field.times.iter().zip(&field.values) {
        let in_window = t >= window.0 * (1.0 - 1e-12) && t <= window.1 * (1.0 + 1e-12);
        let theta = if in_window { Some(theta_k(nl, k, n_dim, t)?) } else { None };
        let phi_t = flow.map(|f| f.phi_inf(t));
        let r_sig = (4.0 * t * -BOUND_FLOOR.ln()).sqrt().min(r_half);
        for (i, (&r, &v)) in field.grid.radii.iter().zip(u).enumerate() {
            if r > r_sig {
                break;
            }
            let ke = k * heat_kernel(n_dim, r, t);
            upper = upper.max((v - ke) / ke);
            if let Some(th) = theta {
                let lo = ke * (-th).exp();
                lower = lower.max((lo - v) / lo);
            }
            let cap = match (phi_t, &phi_r) {
                (Some(a), Some(p)) => a.min(p[i]),
                (Some(a), None) => a,
                (None, Some(p)) => p[i],
                (None, None) => continue,
            };
            if cap.is_finite() {
                let e = (v - cap) / cap;
                univ = Some(univ.map_or(e, |x| x.max(e)));
            }
        }
    }
    Ok(DiracBounds { upper_kernel: upper, lower_envelope: lower, universal: univ })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LadderVerdict {
    Diverges,
    ConvergesToFlow,
    ConvergesBelowFlow,
    Undecided,
}

/// Calibration constants of the ladder verdict.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LadderThresholds {
    /// Growth factor between the last two rungs that signals divergence.
    pub growth: f64,
    /// Relative distance to `φ_∞(t_p)` accepted as convergence to the flow.
    pub flow: f64,
    /// Relative change between the last two rungs accepted as Cauchy.
    pub cauchy: f64,
    /// Limit below `below · φ_∞(t_p)` counts as strictly below the flow.
    pub below: f64,
}

impl Default for LadderThresholds {
    fn default() -> Self {
        LadderThresholds { growth: 2.0, flow: 0.05, cauchy: 0.01, below: 0.95 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub r: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeSeries {
    pub probe: Probe,
    /// `u_k(r_p, t_p)` per rung.
    pub values: Vec<f64>,
    pub extrapolated: f64,
    /// `φ_∞(t_p)` when the flow exists.
    pub flow: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KLadderResult {
    pub ks: Vec<f64>,
    pub probes: Vec<ProbeSeries>,
    pub verdict: LadderVerdict,
    /// Nodewise `u_{k₁} ≤ u_{k₂}` for consecutive rungs (relative slack `1e-9`).
    pub monotone: bool,
    /// `max u_k/φ_∞ − 1` over the top rung, when the flow exists.
    pub flow_domination: Option<f64>,
    pub thresholds: LadderThresholds,
    #[serde(skip)]
    pub fields: Vec<SpaceTimeField>,
}

impl KLadderResult {
    pub fn top(&self) -> &SpaceTimeField {
        self.fields.last().unwrap()
    }
}

/// Aitken's Δ² on the last three terms; falls back to the last term.
pub fn aitken(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return *xs.last().unwrap_or(&f64::NAN);
    }
    let (a, b, c) = (xs[n - 3], xs[n - 2], xs[n - 1]);
    let (d1, d2) = (b - a, c - b);
    let den = d2 - d1;
    if d1 == 0.0 || den == 0.0 || d2 / d1 <= 0.0 || d2 / d1 >= 1.0 {
        return c;
    }
    c - d2 * d2 / den
}

#[derive(Debug, Clone)]
pub struct LadderOptions {
    pub dirac: DiracOptions,
    /// Regularization per rung; `None` uses `HeatKernelAtT0(default_t0)`.
    pub t0: Option<f64>,
    pub thresholds: LadderThresholds,
    /// Extra output times besides the probe times.
    pub extra_times: Vec<f64>,
}

impl Default for LadderOptions {
    fn default() -> Self {
        LadderOptions { dirac: DiracOptions::default(), t0: None, thresholds: LadderThresholds::default(), extra_times: vec![] }
    }
}

pub fn k_ladder(nl: &Nonlinearity, n_dim: usize, ks: &[f64], probes: &[Probe], opts: &LadderOptions) -> Result<KLadderResult> {
    if ks.len() < 5 || ks.windows(2).any(|w| !(w[1] > w[0])) || !(ks[0] > 0.0) {
        return Err(LabError::Precondition("k ladder needs at least 5 increasing positive masses".into()));
    }
    if (ks[ks.len() - 1] / ks[0]).log10() < 4.0 - 1e-9 {
        return Err(LabError::Precondition("k ladder must span at least 4 decades".into()));
    }
    if probes.is_empty() {
        return Err(LabError::Precondition("k ladder needs at least one probe".into()));
    }
    let t0 = opts.t0.unwrap_or_else(|| default_t0(opts.dirac.r_max));
    let mut times: Vec<f64> = probes.iter().map(|p| p.t).chain(opts.extra_times.iter().cloned()).collect();
    times = super::merge_times(&[&times]);
    if times[0] <= t0 {
        return Err(LabError::Precondition(format!("probe and output times must exceed t₀ = {t0:e}")));
    }
    let fields: Vec<SpaceTimeField> = ks
        .par_iter()
        .map(|&k| solve_dirac(nl, n_dim, &DiracApprox::heat_kernel(k, t0), &times, &opts.dirac))
        .collect::<Result<_>>()?;

    let monotone = fields.windows(2).all(|w| {
        w[0].values
            .iter()
            .flatten()
            .zip(w[1].values.iter().flatten())
            .all(|(a, b)| *a <= b * (1.0 + 1e-9) + 1e-300)
    });

    let flow = ScalarFlow::new(nl).ok();
    let series: Vec<ProbeSeries> = probes
        .iter()
        .map(|p| {
            let values: Vec<f64> = fields.iter().map(|f| f.value(p.r, p.t).unwrap()).collect();
            ProbeSeries {
                probe: *p,
                extrapolated: aitken(&values),
                values,
                flow: flow.as_ref().map(|f| f.phi_inf(p.t)),
            }
        })
        .collect();

    let flow_domination = flow.as_ref().map(|f| {
        let top = fields.last().unwrap();
        top.times
            .iter()
            .zip(&top.values)
            .map(|(t, u)| {
                let c = f.phi_inf(*t);
                u.iter().cloned().fold(0.0, f64::max) / c - 1.0
            })
            .fold(f64::NEG_INFINITY, f64::max)
    });

    let verdict = ladder_verdict(&series, &opts.thresholds);
    Ok(KLadderResult {
        ks: ks.to_vec(),
        probes: series,
        verdict,
        monotone,
        flow_domination,
        thresholds: opts.thresholds,
        fields,
    })
}

pub fn ladder_verdict(series: &[ProbeSeries], th: &LadderThresholds) -> LadderVerdict {
    let last_two = |s: &ProbeSeries| {
        let n = s.values.len();
        (s.values[n - 2], s.values[n - 1])
    };
    if series.iter().any(|s| {
        let (a, b) = last_two(s);
        b > th.growth * a
    }) {
        return LadderVerdict::Diverges;
    }
    if series.iter().all(|s| match s.flow {
        Some(phi) => (last_two(s).1 - phi).abs() <= th.flow * phi,
        None => false,
    }) {
        return LadderVerdict::ConvergesToFlow;
    }
    let cauchy = series.iter().all(|s| {
        let (a, b) = last_two(s);
        (b - a).abs() <= th.cauchy * b.abs()
    });
    let below = series.iter().any(|s| {
        s.probe.r > 0.0
            && match s.flow {
                Some(phi) => s.extrapolated < th.below * phi,
                None => true,
            }
    });
    if cauchy && below {
        return LadderVerdict::ConvergesBelowFlow;
    }
    LadderVerdict::Undecided
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aitken_geometric() {
        let xs: Vec<f64> = (0..5).map(|i| 3.0 - 0.5f64.powi(i)).collect();
        assert!((aitken(&xs) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bump_mass_is_exact() {
        let approx = DiracApprox::bump(100.0, 0.1);
        let g = dirac_grid(3, &approx, &DiracOptions::default()).unwrap();
        let u0 = approx.initial_data(&g).unwrap();
        assert!((g.radial_integral(&u0, g.r_max()) - 100.0).abs() < 1e-9);
    }
}
