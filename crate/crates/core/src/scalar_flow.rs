//! Scalar absorption flows `φ' + f(φ) = 0`, the maximal flow `φ_∞` obtained by
//! inverting `G(x) = ∫ₓ^∞ ds/f(s)`, and the `θ_k` machinery.

use crate::classifier::tail_integral_j;
use crate::error::{LabError, Result};
use crate::nonlinearity::Nonlinearity;
use crate::quadrature::{log_tail_integral, Finiteness, TailAnalysis, TailOptions};
use crate::tail_table::{TailKind, TailTable};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Result of a flow integration; `underflow` marks a value driven below `1e-300`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowValue {
    pub value: f64,
    pub underflow: bool,
    pub steps: usize,
}

const FLOW_TOL: f64 = 1e-12;

fn midpoint_step(nl: &Nonlinearity, y: f64, dt: f64) -> Result<f64> {
    let m = nl.solve_implicit(0.5 * dt, y)?;
    Ok(2.0 * m - y)
}

/// `φ_a(t)` by implicit midpoint steps with step doubling and Richardson extrapolation.
pub fn flow_detailed(nl: &Nonlinearity, a: f64, t: f64) -> Result<FlowValue> {
    if !(a > 0.0) || !(t >= 0.0) {
        return Err(LabError::Precondition(format!("flow needs a > 0 and t ≥ 0 (a = {a}, t = {t})")));
    }
    if t == 0.0 || nl.is_zero() {
        return Ok(FlowValue { value: a, underflow: false, steps: 0 });
    }
    let mut y = a;
    let mut tau = 0.0;
    let mut dt = t.min(0.01 / nl.h(a).max(1e-300)).max(t * 1e-12);
    let mut steps = 0;
    while tau < t {
        if y < 1e-300 {
            return Ok(FlowValue { value: 0.0, underflow: true, steps });
        }
        let last = dt >= t - tau;
        let step = if last { t - tau } else { dt };
        let big = midpoint_step(nl, y, step)?;
        let mid = midpoint_step(nl, y, 0.5 * step)?;
        let half = if mid >= 0.0 { midpoint_step(nl, mid, 0.5 * step)? } else { -1.0 };
        if big < 0.0 || half < 0.0 || half > y {
            dt = 0.25 * step;
            if dt < t * 1e-15 {
                return Err(LabError::DtUnderflow { t: tau, dt });
            }
            continue;
        }
        let err = (half - big).abs() / 3.0;
        let scale = FLOW_TOL * half.max(1e-300);
        if err <= scale {
            let ex = half + (half - big) / 3.0;
            y = if ex > 0.0 && ex <= y { ex } else { half };
            tau = if last { t } else { tau + step };
            steps += 1;
        }
        let fac = if err == 0.0 { 4.0 } else { (0.9 * (scale / err).cbrt()).clamp(0.2, 4.0) };
        dt = step * fac;
        if dt < t * 1e-15 {
            return Err(LabError::DtUnderflow { t: tau, dt });
        }
    }
    Ok(FlowValue { value: y, underflow: y < 1e-300, steps })
}

/// `φ_a(t)`.
pub fn flow(nl: &Nonlinearity, a: f64, t: f64) -> Result<f64> {
    Ok(flow_detailed(nl, a, t)?.value)
}

/// `|φ_{φ_a(t)}(s) − φ_a(t+s)| / φ_a(t+s)`.
pub fn semigroup_check(nl: &Nonlinearity, a: f64, t: f64, s: f64) -> Result<f64> {
    if t == 0.0 || s == 0.0 {
        return Ok(0.0);
    }
    let two_path = flow(nl, flow(nl, a, t)?, s)?;
    let direct = flow(nl, a, t + s)?;
    Ok((two_path - direct).abs() / direct)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiValue {
    pub value: f64,
    /// True when `φ_∞(t)` exceeds `1e300`; `value` is then `1e300`.
    pub saturated: bool,
}

pub const PHI_FLOOR: f64 = 1e-8;
pub const PHI_SATURATION: f64 = 1e300;
const G_TABLE_SIZE: usize = 400;

/// Tabulated `G` and the evaluators `φ_a`, `φ_∞` built on it.
#[derive(Debug, Clone)]
pub struct ScalarFlow {
    nl: Nonlinearity,
    table: TailTable,
}

impl ScalarFlow {
    /// Builds the table; fails with "flow does not exist" unless `∫₁^∞ ds/f` is finite.
    pub fn new(nl: &Nonlinearity) -> Result<Self> {
        let j = tail_integral_j(nl);
        if j.finite != Finiteness::Finite {
            return Err(LabError::FlowDoesNotExist(format!(
                "∫₁^∞ ds/f(s) is {:?} for f = {nl}",
                j.finite
            )));
        }
        let table = TailTable::new(nl, TailKind::InverseF, PHI_FLOOR.ln(), PHI_SATURATION.ln(), G_TABLE_SIZE)
            .ok_or_else(|| {
                LabError::FlowDoesNotExist(format!("tail of ∫ ds/f not finite at the table top for f = {nl}"))
            })?;
        Ok(ScalarFlow { nl: nl.clone(), table })
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    /// `G(x) = ∫ₓ^∞ ds/f(s)`.
    pub fn g(&self, x: f64) -> f64 {
        self.table.value(x.ln())
    }

    /// `φ_∞(t) = G⁻¹(t)`.
    pub fn phi_infinity(&self, t: f64) -> Result<PhiValue> {
        if !(t > 0.0) {
            return Err(LabError::Precondition(format!("φ_∞ needs t > 0, got {t}")));
        }
        if t >= self.table.max_value() {
            let v = flow(&self.nl, PHI_FLOOR, t - self.table.max_value())?;
            return Ok(PhiValue { value: v, saturated: false });
        }
        Ok(match self.table.invert(t) {
            Some(y) => PhiValue { value: y.exp(), saturated: false },
            None => PhiValue { value: PHI_SATURATION, saturated: true },
        })
    }

    /// `φ_∞(t)` capped at the saturation value.
    pub fn phi_inf(&self, t: f64) -> f64 {
        self.phi_infinity(t).map(|p| p.value).unwrap_or(f64::NAN)
    }

    /// `φ_a(t) = G⁻¹(G(a) + t)`, valid for any `a` in the table range.
    pub fn flow_via_g(&self, a: f64, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(a);
        }
        if a >= PHI_SATURATION {
            return Ok(self.phi_infinity(t)?.value);
        }
        Ok(self.phi_infinity(self.g(a) + t)?.value)
    }

    /// `G(1e300)`: below this time `φ_∞` saturates.
    pub fn saturation_time(&self) -> f64 {
        self.table.min_value()
    }
}

/// `φ_∞(t)` for a single evaluation; builds the table on the fly.
pub fn phi_infinity(nl: &Nonlinearity, t: f64) -> Result<PhiValue> {
    ScalarFlow::new(nl)?.phi_infinity(t)
}

pub fn c_star(n_dim: usize) -> f64 {
    (4.0 * PI).powf(-(n_dim as f64) / 2.0)
}

/// Tail analysis of `θ_k(T) = T ∫₀^∞ e^{−v} h(k C* T^{−N/2} e^{Nv/2}) dv`.
pub fn theta_tail(nl: &Nonlinearity, k: f64, n_dim: usize, t: f64) -> TailAnalysis {
    let nf = n_dim as f64;
    let lt = t.ln();
    let base = (k * c_star(n_dim)).ln() - 0.5 * nf * lt;
    log_tail_integral(|v| lt - v + nl.ln_h(base + 0.5 * nf * v), 0.0, TailOptions::default())
}

/// `θ_k(t) = ∫₀ᵗ h(k C* τ^{−N/2}) dτ`.
pub fn theta_k(nl: &Nonlinearity, k: f64, n_dim: usize, t: f64) -> Result<f64> {
    if !(t >= 0.0 && k > 0.0) {
        return Err(LabError::Precondition("θ_k needs k > 0 and t ≥ 0".into()));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let a = theta_tail(nl, k, n_dim, t);
    match a.finiteness {
        Finiteness::Finite => Ok(a.value),
        other => Err(LabError::DivergenceAtZero(format!(
            "h(k C* τ^(-N/2)) integrability probe at τ → 0 returned {other:?}"
        ))),
    }
}

/// `k (4πt)^{−N/2} exp(−θ_k(t) − x²/4t)`.
pub fn dirac_lower_envelope(nl: &Nonlinearity, k: f64, n_dim: usize, x: f64, t: f64) -> Result<f64> {
    let th = theta_k(nl, k, n_dim, t)?;
    Ok(k * (4.0 * PI * t).powf(-(n_dim as f64) / 2.0) * (-th - x * x / (4.0 * t)).exp())
}

/// Constants of the bound `θ_k(t) < 2^{β−1} M t (ln k)^β + (M N^β / 2) ∫₀¹ ln^β(1/τ) dτ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaEnvelope {
    pub k: f64,
    #[serde(rename = "N")]
    pub n_dim: usize,
    pub m: f64,
    pub beta: f64,
    pub r0: f64,
    pub log_moment: f64,
    pub c1: f64,
    pub m_beta: f64,
}

const FIT_R_LO: f64 = 1e3;
const FIT_R_HI: f64 = 1e12;

/// `∫₀¹ ln^β(1/τ) dτ`, computed by quadrature.
pub fn log_moment(beta: f64) -> f64 {
    log_tail_integral(|v| if v == 0.0 { f64::NEG_INFINITY } else { beta * v.ln() - v }, 0.0, TailOptions::default())
        .value
}

impl ThetaEnvelope {
    /// Fits `β` (unless given) by least squares of `ln h` against `ln ln r` on `[1e3, 1e12]`,
    /// then takes `M` as the largest ratio `h(r)/ln^β r` over the same range.
    pub fn fit(nl: &Nonlinearity, k: f64, n_dim: usize, beta: Option<f64>) -> Self {
        let n = 200;
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let y = FIT_R_LO.ln() + (FIT_R_HI.ln() - FIT_R_LO.ln()) * i as f64 / (n - 1) as f64;
                (y.ln(), nl.ln_h(y))
            })
            .collect();
        let beta = beta.unwrap_or_else(|| {
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            sxy / sxx
        });
        let m = pts.iter().map(|p| (p.1 - beta * p.0).exp()).fold(0.0, f64::max);
        let nf = n_dim as f64;
        let lm = log_moment(beta);
        ThetaEnvelope {
            k,
            n_dim,
            m,
            beta,
            r0: FIT_R_LO,
            log_moment: lm,
            c1: (-(m * nf.powf(beta) / 2.0) * lm).exp(),
            m_beta: 2f64.powf(beta - 1.0) * m,
        }
    }

    /// Right-hand side of the `θ_k` bound at time `t`.
    pub fn bound(&self, t: f64) -> f64 {
        self.m_beta * t * self.k.ln().max(0.0).powf(self.beta)
            + self.m * (self.n_dim as f64).powf(self.beta) / 2.0 * self.log_moment
    }
}

/// Rows `(t, φ_∞, φ_a…, θ_k…)` for plotting.
pub fn flow_table(
    sf: &ScalarFlow,
    times: &[f64],
    initial_values: &[f64],
    ks: &[f64],
    n_dim: usize,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut header = vec!["t".to_string(), "phi_inf".to_string()];
    header.extend(initial_values.iter().map(|a| format!("phi_a@{a}")));
    header.extend(ks.iter().map(|k| format!("theta_k@{k}")));
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        let mut row = vec![t, sf.phi_inf(t)];
        for &a in initial_values {
            row.push(flow(sf.nonlinearity(), a, t)?);
        }
        for &k in ks {
            row.push(theta_k(sf.nonlinearity(), k, n_dim, t)?);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::parse_nonlinearity;

    #[test]
    fn closed_form_flow() {
        let nl = Nonlinearity::power(1.0).unwrap();
        for t in [0.0, 0.1, 1.0, 10.0] {
            let v = flow(&nl, 1.0, t).unwrap();
            assert!((v - 1.0 / (1.0 + t)).abs() < 1e-9 / (1.0 + t), "{t}: {v}");
        }
        let sf = ScalarFlow::new(&nl).unwrap();
        for t in [1e-2, 0.1, 1.0, 10.0] {
            let p = sf.phi_infinity(t).unwrap();
            assert!((p.value * t - 1.0).abs() < 1e-8, "{t}: {}", p.value);
        }
    }

    #[test]
    fn no_flow_for_weak_absorption() {
        assert!(matches!(
            ScalarFlow::new(&Nonlinearity::log(0.5).unwrap()),
            Err(LabError::FlowDoesNotExist(_))
        ));
    }

    #[test]
    fn inverse_identity() {
        let sf = ScalarFlow::new(&Nonlinearity::log(2.0).unwrap()).unwrap();
        for x in [1e-6, 0.3, 10.0, 1e5, 1e40] {
            let p = sf.phi_infinity(sf.g(x)).unwrap().value;
            assert!((p - x).abs() < 1e-9 * x, "{x}: {p}");
        }
    }

    #[test]
    fn saturation_flag() {
        let sf = ScalarFlow::new(&Nonlinearity::log(1.5).unwrap()).unwrap();
        assert!(sf.phi_infinity(0.05).unwrap().saturated);
        assert!(!sf.phi_infinity(0.2).unwrap().saturated);
    }

    #[test]
    fn theta_linear() {
        let nl = parse_nonlinearity("u").unwrap();
        for t in [0.1, 0.5, 2.0] {
            assert!((theta_k(&nl, 3.0, 2, t).unwrap() - t).abs() < 1e-12);
        }
        let v = dirac_lower_envelope(&nl, 1.0, 2, 0.0, 1.0).unwrap();
        assert!((v - (-1f64).exp() / (4.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn theta_diverges_without_weak_singularity() {
        let nl = Nonlinearity::power(2.0).unwrap();
        assert!(matches!(theta_k(&nl, 1.0, 2, 0.5), Err(LabError::DivergenceAtZero(_))));
    }

    #[test]
    fn log_moment_is_gamma() {
        assert!((log_moment(2.0) - 2.0).abs() < 1e-10);
        assert!((log_moment(1.5) - 1.329340388179137).abs() < 1e-10);
    }
}
