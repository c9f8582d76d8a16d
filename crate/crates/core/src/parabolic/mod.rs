//! Radial solver for `u_t = u_rr + ((N−1)/r) u_r − f(u)` on `[0, r_max]`.
//!
//! Vertex-centred finite volumes in `r` (symmetry at `r = 0` is built into the
//! zero flux through the origin), Dirichlet data at `r_max`, and Lie splitting in
//! time: implicit Euler diffusion by a tridiagonal solve, then implicit absorption
//! node by node. Both substeps map nonnegative data to nonnegative data and are
//! order preserving, so the discrete comparison principle holds exactly.

mod constructions;
mod dirac;

pub use constructions::*;
pub use dirac::*;

use crate::error::{LabError, Result};
use crate::nonlinearity::Nonlinearity;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

/// `|S^{N−1}|`.
pub fn sphere_area(n_dim: usize) -> f64 {
    let n = n_dim as f64;
    2.0 * std::f64::consts::PI.powf(n / 2.0) / gamma_half(n_dim)
}

/// `Γ(N/2)` for integer `N ≥ 1`.
fn gamma_half(n_dim: usize) -> f64 {
    let mut g = if n_dim % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut x = if n_dim % 2 == 0 { 1.0 } else { 0.5 };
    while x < n_dim as f64 / 2.0 - 1e-9 {
        g *= x;
        x += 1.0;
    }
    g
}

/// `E(r, t) = (4πt)^{−N/2} e^{−r²/4t}`.
pub fn heat_kernel(n_dim: usize, r: f64, t: f64) -> f64 {
    (4.0 * std::f64::consts::PI * t).powf(-(n_dim as f64) / 2.0) * (-r * r / (4.0 * t)).exp()
}

pub const MAX_SPACING_RATIO: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid {
    #[serde(rename = "N")]
    pub n_dim: usize,
    pub radii: Vec<f64>,
}

impl RadialGrid {
    pub fn new(n_dim: usize, radii: Vec<f64>) -> Result<Self> {
        let g = RadialGrid { n_dim, radii };
        g.validate()?;
        Ok(g)
    }

    pub fn uniform(n_dim: usize, r_max: f64, nodes: usize) -> Result<Self> {
        if nodes < 3 {
            return Err(LabError::Precondition("a grid needs at least 3 nodes".into()));
        }
        Self::new(n_dim, (0..nodes).map(|i| r_max * i as f64 / (nodes - 1) as f64).collect())
    }

    /// `r_i = c·sinh(s·i/(n−1))` with `s` chosen so that the first spacing is about `h0`.
    pub fn graded(n_dim: usize, r_max: f64, nodes: usize, h0: f64) -> Result<Self> {
        if nodes < 3 || !(r_max > 0.0) || !(h0 > 0.0) {
            return Err(LabError::Precondition("graded grid needs nodes ≥ 3, r_max > 0, h0 > 0".into()));
        }
        let m = (nodes - 1) as f64;
        let target = h0 * m / r_max;
        if target >= 1.0 {
            return Self::uniform(n_dim, r_max, nodes);
        }
        // s / sinh(s) = target
        let (mut lo, mut hi) = (1e-8f64, 1.0f64);
        while hi / hi.sinh() > target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid / mid.sinh() > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let c = r_max / s.sinh();
        let mut radii: Vec<f64> = (0..nodes).map(|i| c * (s * i as f64 / m).sinh()).collect();
        radii[nodes - 1] = r_max;
        Self::new(n_dim, radii)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.radii;
        if self.n_dim == 0 {
            return Err(LabError::Precondition("dimension must be positive".into()));
        }
        if r.len() < 3 || r[0] != 0.0 {
            return Err(LabError::Precondition("grid must start at r = 0 with at least 3 nodes".into()));
        }
        for i in 1..r.len() {
            if !(r[i] > r[i - 1]) || !r[i].is_finite() {
                return Err(LabError::Precondition(format!("grid not strictly increasing at node {i}")));
            }
        }
        for i in 1..r.len() - 1 {
            let q = (r[i + 1] - r[i]) / (r[i] - r[i - 1]);
            if q > MAX_SPACING_RATIO * (1.0 + 1e-12) || q < 1.0 / MAX_SPACING_RATIO / (1.0 + 1e-12) {
                return Err(LabError::Precondition(format!(
                    "adjacent spacing ratio {q:.4} at node {i} exceeds {MAX_SPACING_RATIO}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    pub fn nodes_within(&self, r: f64) -> usize {
        self.radii.iter().filter(|&&x| x <= r).count()
    }

    /// Inserts the midpoint of every cell.
    pub fn refine(&self) -> Self {
        let mut radii = Vec::with_capacity(2 * self.len() - 1);
        for w in self.radii.windows(2) {
            radii.push(w[0]);
            radii.push(0.5 * (w[0] + w[1]));
        }
        radii.push(self.r_max());
        RadialGrid { n_dim: self.n_dim, radii }
    }

    /// Control volumes `(r_{i+½}^N − r_{i−½}^N)/N` (without `|S^{N−1}|`) and face
    /// coefficients `r_{i+½}^{N−1}/(r_{i+1} − r_i)`.
    fn finite_volumes(&self) -> (Vec<f64>, Vec<f64>) {
        let r = &self.radii;
        let n = r.len();
        let nd = self.n_dim as i32;
        let face = |i: usize| 0.5 * (r[i] + r[i + 1]);
        let vol = (0..n)
            .map(|i| {
                let lo = if i == 0 { 0.0 } else { face(i - 1) };
                let hi = if i == n - 1 { r[n - 1] } else { face(i) };
                (hi.powi(nd) - lo.powi(nd)) / nd as f64
            })
            .collect();
        let flux = (0..n - 1).map(|i| face(i).powi(nd - 1) / (r[i + 1] - r[i])).collect();
        (vol, flux)
    }

    /// `|S^{N−1}| ∫₀^ρ u r^{N−1} dr` with `u` piecewise linear on the grid.
    pub fn radial_integral(&self, values: &[f64], rho: f64) -> f64 {
        let r = &self.radii;
        let nd = self.n_dim as i32;
        let mut sum = 0.0;
        for i in 0..r.len() - 1 {
            let (a, b) = (r[i], r[i + 1]);
            if a >= rho {
                break;
            }
            let end = b.min(rho);
            let slope = (values[i + 1] - values[i]) / (b - a);
            // ∫_a^end (u_a + slope (x − a)) x^{N−1} dx
            let p = |x: f64| {
                (values[i] - slope * a) * x.powi(nd) / nd as f64 + slope * x.powi(nd + 1) / (nd + 1) as f64
            };
            sum += p(end) - p(a);
        }
        sphere_area(self.n_dim) * sum
    }

    /// Linear interpolation of nodal values at `r`.
    pub fn interpolate(&self, values: &[f64], r: f64) -> f64 {
        let g = &self.radii;
        let n = g.len();
        if r <= 0.0 {
            return values[0];
        }
        if r >= g[n - 1] {
            return values[n - 1];
        }
        let i = g.partition_point(|&x| x <= r) - 1;
        let t = (r - g[i]) / (g[i + 1] - g[i]);
        values[i] * (1.0 - t) + values[i + 1] * t
    }
}

/// Time-dependent boundary value.
#[derive(Clone)]
pub struct BoundaryFn(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl BoundaryFn {
    pub fn new(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        BoundaryFn(Arc::new(g))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c)
    }

    pub fn at(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

impl fmt::Debug for BoundaryFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BoundaryFn(..)")
    }
}

/// Outer boundary data at `r_max`; `r = 0` is always a symmetry point.
#[derive(Debug, Clone)]
pub enum BoundaryCondition {
    DirichletZero,
    DirichletValue(BoundaryFn),
    /// Values of a profile that may blow up as `t → 0`; clipped at `cap`.
    DirichletTimeProfile { g: BoundaryFn, cap: f64 },
}

impl BoundaryCondition {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            BoundaryCondition::DirichletZero => 0.0,
            BoundaryCondition::DirichletValue(g) => g.at(t),
            BoundaryCondition::DirichletTimeProfile { g, cap } => g.at(t).min(*cap),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            BoundaryCondition::DirichletZero => "dirichlet_zero",
            BoundaryCondition::DirichletValue(_) => "dirichlet_value",
            BoundaryCondition::DirichletTimeProfile { .. } => "dirichlet_time_profile",
        }
    }
}

/// Nodes with `r ≤ radius` held at `value(t)`, making the problem an exterior one.
#[derive(Debug, Clone)]
pub struct InnerDirichlet {
    pub radius: f64,
    pub value: BoundaryFn,
    pub cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DtControl {
    /// Step doubling with the per-step relative tolerance `rtol`.
    Adaptive { rtol: f64, dt_init: f64 },
    Fixed(f64),
}

impl Default for DtControl {
    fn default() -> Self {
        DtControl::Adaptive { rtol: 1e-6, dt_init: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub dt: DtControl,
    pub inner: Option<InnerDirichlet>,
    pub max_steps: usize,
    /// Values below `error_floor · max u` are measured in absolute terms by the
    /// step-doubling estimate.
    pub error_floor: f64,
    /// Accept `2·(two half steps) − (one step)`, clamped at zero, instead of the
    /// half-step result. Second order but no longer order-preserving.
    pub extrapolate: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { dt: DtControl::default(), inner: None, max_steps: 5_000_000, error_floor: 1e-6, extrapolate: false }
    }
}

/// Snapshots `u(r_i, t_n)` at the requested output times.
#[derive(Debug, Clone, Serialize)]
pub struct SpaceTimeField {
    pub grid: RadialGrid,
    pub t_start: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub nl: String,
    pub bc: String,
    pub steps: usize,
    pub rejected: usize,
}

impl SpaceTimeField {
    pub fn n_dim(&self) -> usize {
        self.grid.n_dim
    }

    /// Index of the snapshot at `t` (relative match `1e-9`).
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1e-300))
    }

    pub fn snapshot(&self, t: f64) -> Option<&[f64]> {
        self.time_index(t).map(|i| self.values[i].as_slice())
    }

    /// `u(r, t)` by linear interpolation in `r` at a stored time.
    pub fn value(&self, r: f64, t: f64) -> Option<f64> {
        self.snapshot(t).map(|u| self.grid.interpolate(u, r))
    }

    /// Minimum over all stored values.
    pub fn min_value(&self) -> f64 {
        self.values.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Long-format rows `(t, r, u)`.
    pub fn rows(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.times.len() * self.grid.len());
        for (t, u) in self.times.iter().zip(&self.values) {
            for (r, v) in self.grid.radii.iter().zip(u) {
                out.push([*t, *r, *v]);
            }
        }
        out
    }

    pub fn metadata(&self, dt: &DtControl, truncation_error_bound: Option<f64>) -> serde_json::Value {
        serde_json::json!({
            "nl": self.nl,
            "N": self.grid.n_dim,
            "grid": { "nodes": self.grid.len(), "r_max": self.grid.r_max(), "h_min": self.grid.radii[1] },
            "bc": self.bc,
            "dt_ctrl": dt,
            "truncation_error_bound": truncation_error_bound,
            "steps": self.steps,
            "rejected": self.rejected,
        })
    }
}

struct Stepper<'a> {
    nl: &'a Nonlinearity,
    vol: Vec<f64>,
    flux: Vec<f64>,
    bc: &'a BoundaryCondition,
    inner_nodes: usize,
    inner: Option<&'a InnerDirichlet>,
    // scratch for the tridiagonal sweep
    cp: Vec<f64>,
    dp: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(nl: &'a Nonlinearity, grid: &RadialGrid, bc: &'a BoundaryCondition, inner: Option<&'a InnerDirichlet>) -> Self {
        let (vol, flux) = grid.finite_volumes();
        let n = grid.len();
        let inner_nodes = inner.map(|d| grid.nodes_within(d.radius)).unwrap_or(0);
        Stepper { nl, vol, flux, bc, inner_nodes, inner, cp: vec![0.0; n], dp: vec![0.0; n] }
    }

    fn inner_value(&self, t: f64) -> f64 {
        self.inner.map(|d| d.value.at(t).min(d.cap)).unwrap_or(0.0)
    }

    fn apply_dirichlet(&self, u: &mut [f64], t: f64) {
        let n = u.len();
        u[n - 1] = self.bc.value(t);
        let v = self.inner_value(t);
        for x in u.iter_mut().take(self.inner_nodes) {
            *x = v;
        }
    }

    /// One Lie step: implicit diffusion, then implicit absorption.
    fn step(&mut self, u: &[f64], t: f64, dt: f64, out: &mut [f64]) -> Result<()> {
        let n = u.len();
        let t1 = t + dt;
        let fixed = |i: usize| i == n - 1 || i < self.inner_nodes;
        let g_out = self.bc.value(t1);
        let g_in = self.inner_value(t1);
        // Thomas sweep on rows (lower, diag, upper | rhs)
        for i in 0..n {
            let (lo, di, up, rhs) = if fixed(i) {
                (0.0, 1.0, 0.0, if i == n - 1 { g_out } else { g_in })
            } else {
                let aw = if i == 0 { 0.0 } else { self.flux[i - 1] };
                let ae = self.flux[i];
                let m = self.vol[i] / dt;
                (-aw, m + aw + ae, -ae, m * u[i])
            };
            if i == 0 {
                self.cp[0] = up / di;
                self.dp[0] = rhs / di;
            } else {
                let den = di - lo * self.cp[i - 1];
                self.cp[i] = up / den;
                self.dp[i] = (rhs - lo * self.dp[i - 1]) / den;
            }
        }
        out[n - 1] = self.dp[n - 1];
        for i in (0..n - 1).rev() {
            out[i] = self.dp[i] - self.cp[i] * out[i + 1];
        }
        for (i, v) in out.iter_mut().enumerate() {
            if fixed(i) {
                *v = if i == n - 1 { g_out } else { g_in };
            } else {
                *v = self.nl.solve_implicit(dt, v.max(0.0))?;
            }
        }
        Ok(())
    }
}

/// Solves from `u0` at `t_start`, recording snapshots at `output_times` (increasing, `> t_start`).
pub fn solve_radial_cauchy(
    nl: &Nonlinearity,
    grid: &RadialGrid,
    u0: &[f64],
    bc: &BoundaryCondition,
    t_start: f64,
    output_times: &[f64],
    opts: &SolverOptions,
) -> Result<SpaceTimeField> {
    solve_radial_cauchy_observed(nl, grid, u0, bc, t_start, output_times, opts, &mut |_, _| {})
}

/// As [`solve_radial_cauchy`], calling `observe(t, u)` after every accepted step.
#[allow(clippy::too_many_arguments)]
pub fn solve_radial_cauchy_observed(
    nl: &Nonlinearity,
    grid: &RadialGrid,
    u0: &[f64],
    bc: &BoundaryCondition,
    t_start: f64,
    output_times: &[f64],
    opts: &SolverOptions,
    observe: &mut dyn FnMut(f64, &[f64]),
) -> Result<SpaceTimeField> {
    grid.validate()?;
    let n = grid.len();
    if u0.len() != n {
        return Err(LabError::Precondition(format!("u0 has {} values for {n} nodes", u0.len())));
    }
    if u0.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(LabError::Precondition("initial data must be finite and nonnegative".into()));
    }
    if output_times.is_empty() || output_times.windows(2).any(|w| !(w[1] > w[0])) || !(output_times[0] > t_start) {
        return Err(LabError::Precondition("output times must increase and follow t_start".into()));
    }
    let t_end = *output_times.last().unwrap();
    let span = t_end - t_start;
    let mut stepper = Stepper::new(nl, grid, bc, opts.inner.as_ref());
    let mut u = u0.to_vec();
    let mut big = vec![0.0; n];
    let mut half = vec![0.0; n];
    let mut two = vec![0.0; n];
    let mut t = t_start;
    let mut times = Vec::with_capacity(output_times.len());
    let mut values = Vec::with_capacity(output_times.len());
    let (adaptive, rtol, mut dt) = match opts.dt {
        DtControl::Adaptive { rtol, dt_init } => (true, rtol, if dt_init > 0.0 { dt_init } else { 1e-7 * span }),
        DtControl::Fixed(dt) => (false, 0.0, dt),
    };
    if !(dt > 0.0) {
        return Err(LabError::Precondition(format!("time step must be positive, got {dt}")));
    }
    let (mut steps, mut rejected) = (0usize, 0usize);
    let mut next_out = 0;
    while next_out < output_times.len() {
        let target = output_times[next_out];
        let remaining = target - t;
        let landing = dt >= remaining * (1.0 - 1e-12);
        let h = if landing { remaining } else { dt };
        if adaptive {
            stepper.step(&u, t, h, &mut big)?;
            stepper.step(&u, t, 0.5 * h, &mut half)?;
            stepper.step(&half, t + 0.5 * h, 0.5 * h, &mut two)?;
            let peak = two.iter().cloned().fold(0.0, f64::max);
            let floor = (opts.error_floor * peak).max(1e-300);
            let err = big
                .iter()
                .zip(&two)
                .map(|(b, s)| (b - s).abs() / (rtol * s.abs().max(floor)))
                .fold(0.0, f64::max);
            if err > 1.0 {
                rejected += 1;
                dt = h * (0.9 / err.sqrt()).clamp(0.1, 0.5);
                if dt < 1e-15 * t.abs().max(span) {
                    return Err(LabError::DtUnderflow { t, dt });
                }
                continue;
            }
            if opts.extrapolate {
                for (s, b) in two.iter_mut().zip(&big) {
                    *s = (2.0 * *s - b).max(0.0);
                }
            }
            std::mem::swap(&mut u, &mut two);
            let grow = if err == 0.0 { 2.0 } else { (0.9 / err.sqrt()).clamp(0.2, 2.0) };
            if !landing || grow < 1.0 {
                dt = h * grow;
            }
        } else {
            stepper.step(&u, t, h, &mut big)?;
            std::mem::swap(&mut u, &mut big);
        }
        t = if landing { target } else { t + h };
        steps += 1;
        if steps > opts.max_steps {
            return Err(LabError::DtUnderflow { t, dt });
        }
        observe(t, &u);
        if landing {
            stepper.apply_dirichlet(&mut u, t);
            times.push(t);
            values.push(u.clone());
            next_out += 1;
        }
    }
    Ok(SpaceTimeField {
        grid: grid.clone(),
        t_start,
        times,
        values,
        nl: nl.text(),
        bc: bc.label().to_string(),
        steps,
        rejected,
    })
}

/// `n` times geometric on `[t_lo, t_hi]`.
pub fn geometric_times(t_lo: f64, t_hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![t_hi];
    }
    let (a, b) = (t_lo.ln(), t_hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Sorted, deduplicated union of time lists.
pub fn merge_times(lists: &[&[f64]]) -> Vec<f64> {
    let mut all: Vec<f64> = lists.iter().flat_map(|l| l.iter().cloned()).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::parse_nonlinearity;

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * std::f64::consts::PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-13);
    }

    #[test]
    fn graded_grid_ratio() {
        let g = RadialGrid::graded(3, 8.0, 600, 1e-3).unwrap();
        assert!((g.radii[1] - 1e-3).abs() < 2e-4);
        assert!(g.nodes_within(0.01) >= 10);
    }

    #[test]
    fn radial_integral_of_constant() {
        let g = RadialGrid::graded(3, 2.0, 100, 0.01).unwrap();
        let u = vec![2.0; g.len()];
        let exact = 2.0 * 4.0 * std::f64::consts::PI / 3.0 * 1.5f64.powi(3);
        assert!((g.radial_integral(&u, 1.5) - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn constant_data_follows_flow() {
        let nl = Nonlinearity::power(1.0).unwrap();
        let g = RadialGrid::uniform(2, 1.0, 30).unwrap();
        let bc = BoundaryCondition::DirichletValue(BoundaryFn::new(|t| 1.0 / (1.0 + t)));
        let field = solve_radial_cauchy(&nl, &g, &vec![1.0; 30], &bc, 0.0, &[0.5, 1.0], &SolverOptions::default()).unwrap();
        for v in &field.values[1] {
            assert!((v - 0.5).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn nonnegative_from_nonnegative() {
        let nl = parse_nonlinearity("u^3").unwrap();
        let g = RadialGrid::uniform(3, 2.0, 40).unwrap();
        let u0: Vec<f64> = g.radii.iter().map(|&r| if r < 0.3 { 50.0 } else { 0.0 }).collect();
        let f = solve_radial_cauchy(&nl, &g, &u0, &BoundaryCondition::DirichletZero, 0.0, &[0.1], &SolverOptions::default())
            .unwrap();
        assert!(f.min_value() >= 0.0);
    }
}
