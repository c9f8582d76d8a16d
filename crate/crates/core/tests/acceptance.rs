//! Acceptance suite: one pass/fail line per criterion, tolerances pinned here.
//! Exits nonzero when any criterion fails.

use absorption_lab::classifier::{classify, kon_l_integral, tail_integral_ko, Condition, Regime};
use absorption_lab::harness::{regimes_table, Family, RegimesOptions};
use absorption_lab::nonlinearity::{structural_conditions, ConditionStatus};
use absorption_lab::parabolic::{
    dirac_bounds, geometric_times, heat_kernel, nonuniqueness_pair, solve_dirac, solve_radial_cauchy, uniqueness_probe,
    BoundaryCondition, DiracApprox, DiracOptions, DtControl, LadderVerdict, PairOptions, ProbeOptions, RadialGrid,
    SolverOptions, SpaceTimeField,
};
use absorption_lab::quadrature::{integrate, Finiteness};
use absorption_lab::radial_profiles::{solve_global_radial, SingularProfile};
use absorption_lab::scalar_flow::{flow, ScalarFlow};
use absorption_lab::trace::{extract_dirac_trace, extract_trace, nu_infinity_sandwich, PointVerdict, SandwichOptions};
use absorption_lab::{parse_nonlinearity, Nonlinearity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;

type Outcome = Result<(bool, String), absorption_lab::LabError>;

const FLOW_PHI_RTOL: f64 = 1e-6;
const FLOW_RTOL: f64 = 1e-8;
const PROFILE_DERIV_SLACK: f64 = 1e-6;
const SINH_TOL: f64 = 1e-6;
const PHI_CLOSED_TOL: f64 = 1e-6;
const PHI_RESIDUAL_TOL: f64 = 1e-4;
const KERNEL_TOL: f64 = 1e-3;
const ENVELOPE_SLACK: f64 = 1e-2;
const UNIV_TOL: f64 = 1e-3;
const PAIR_TOL: f64 = 1e-2;
const AGREEMENT_TOL: f64 = 1e-3;
const UNIQUE_SANDWICH_TOL: f64 = 1e-3;
const W_CENTER_MAX: f64 = 1e-2;
const MASS_RECOVERY: f64 = 0.02;
const NU_SANDWICH_TOL: f64 = 1e-2;
const HEAT_TOL: f64 = 1e-3;
const MIN_ORDER: f64 = 1.8;
const ORDER_SLACK: f64 = 1e-12;
const STABILITY_TOL: f64 = 0.01;

fn log(alpha: f64) -> Nonlinearity {
    Nonlinearity::log(alpha).unwrap()
}

fn regime_trichotomy() -> Outcome {
    let rows = regimes_table(Family::Log, &[0.5, 1.5, 3.0], 3, &RegimesOptions::default())?;
    let want = [
        (Regime::BlowupEverywhere, LadderVerdict::Diverges),
        (Regime::FlowLimit, LadderVerdict::ConvergesToFlow),
        (Regime::MinimalSingular, LadderVerdict::ConvergesBelowFlow),
    ];
    let ok = rows.iter().zip(&want).all(|(r, (g, v))| r.regime == *g && r.ladder == Some(*v));
    let detail = rows.iter().map(|r| format!("α={}: {:?}/{:?}", r.param, r.regime, r.ladder)).collect::<Vec<_>>().join("; ");
    Ok((ok, detail))
}

fn closed_form_flow() -> Outcome {
    let nl = Nonlinearity::power(1.0)?;
    let sf = ScalarFlow::new(&nl)?;
    let phi_err = geometric_times(1e-2, 10.0, 61).iter().map(|&t| (sf.phi_inf(t) * t - 1.0).abs()).fold(0.0, f64::max);
    let mut flow_err = 0.0f64;
    for &t in &geometric_times(1e-3, 100.0, 41) {
        flow_err = flow_err.max((flow(&nl, 1.0, t)? * (1.0 + t) - 1.0).abs());
    }
    Ok((phi_err <= FLOW_PHI_RTOL && flow_err <= FLOW_RTOL, format!("φ_∞ rel {phi_err:.1e}, flow rel {flow_err:.1e}")))
}

fn power_classification() -> Outcome {
    let mut wrong = Vec::new();
    for n_dim in [2, 3] {
        for beta in [0.25, 0.5, 1.0, 2.0] {
            let rep = classify(&Nonlinearity::power(beta)?, n_dim)?;
            let a8 = rep.verdict(Condition::A8).unwrap();
            let boundary = (beta - 2.0 / n_dim as f64).abs() < 1e-12;
            // the boundary exponent may come back undecided
            let a8_ok = boundary || (a8.finite != Finiteness::Undecided && a8.is_finite() == (beta < 2.0 / n_dim as f64));
            let rest_ok = rep.verdict(Condition::A10_J).unwrap().is_finite() && rep.verdict(Condition::A12_KO).unwrap().is_finite();
            if !(a8_ok && rest_ok) {
                wrong.push(format!("β={beta} N={n_dim}"));
            }
        }
    }
    Ok((wrong.is_empty(), format!("{} misclassified {:?}", wrong.len(), wrong)))
}

fn kon_equivalence() -> Outcome {
    let corpus = [
        "u^2",
        "u^1.5",
        "u^4",
        "u^1.2",
        "u^2+u",
        "u*ln(u+1)^3",
        "u*ln(u+1)^1.5",
        "u*ln(u+1)^0.5",
    ];
    let mut bad = Vec::new();
    for text in corpus {
        let nl = parse_nonlinearity(text)?;
        let convex = structural_conditions(&nl).c2.status == ConditionStatus::Holds;
        if !convex || tail_integral_ko(&nl).finite != kon_l_integral(&nl).finite {
            bad.push(text);
        }
    }
    Ok((bad.is_empty(), format!("{} of {} disagree {:?}", bad.len(), corpus.len(), bad)))
}

fn profile_bounds() -> Outcome {
    let cases = [(1.5, 1.0, 3), (0.5, 2.0, 2), (2.0, 0.5, 3), (1.5, 3.0, 2), (1.0, 1.0, 3), (0.5, 1.0, 3)];
    let (mut value_slack, mut deriv_slack) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (alpha, a, n_dim) in cases {
        let nl = log(alpha);
        let p = solve_global_radial(&nl, a, n_dim, 4.0)?;
        let c = a * nl.h(a) / n_dim as f64;
        for ((&r, &w), &dw) in p.grid.iter().zip(&p.values).zip(&p.derivative) {
            value_slack = value_slack.max((a + 0.5 * c * r * r - w) / w);
            deriv_slack = deriv_slack.max(c * r - dw);
        }
    }
    let lin = solve_global_radial(&parse_nonlinearity("u")?, 1.0, 3, 4.0)?;
    let sinh_err = lin
        .grid
        .iter()
        .zip(&lin.values)
        .map(|(&r, &w)| {
            let exact = if r == 0.0 { 1.0 } else { r.sinh() / r };
            ((w - exact) / exact).abs()
        })
        .fold(0.0, f64::max);
    let ok = value_slack <= 1e-12 && deriv_slack <= PROFILE_DERIV_SLACK && sinh_err <= SINH_TOL;
    Ok((ok, format!("value slack {value_slack:.1e}, w′ slack {deriv_slack:.1e}, sinh rel {sinh_err:.1e}")))
}

fn singular_profile() -> Outcome {
    let sq = SingularProfile::new(&Nonlinearity::power(1.0)?)?;
    let mut closed = 0.0f64;
    for &r in &geometric_times(0.1, 10.0, 41) {
        closed = closed.max((sq.eval(r)?.value * r * r / 6.0 - 1.0).abs());
    }
    let l3 = SingularProfile::new(&log(3.0))?;
    let mut res = 0.0f64;
    for &r in &geometric_times(0.1, 10.0, 21) {
        res = res.max(l3.stencil_residual(r)?);
    }
    Ok((closed <= PHI_CLOSED_TOL && res <= PHI_RESIDUAL_TOL, format!("6/r² rel {closed:.1e}, log(3) residual {res:.1e}")))
}

fn dirac_sandwich() -> Outcome {
    let nl = log(3.0);
    let k = 1e4;
    let times = geometric_times(1e-3, 1.0, 13);
    let field = solve_dirac(&nl, 3, &DiracApprox::heat_kernel(k, 1e-4), &times, &DiracOptions::default())?;
    let flow = ScalarFlow::new(&nl)?;
    let phi = SingularProfile::new(&nl)?;
    let b = dirac_bounds(&nl, &field, k, (1e-3, 1.0), Some(&flow), Some(&phi))?;
    let univ = b.universal.unwrap_or(f64::INFINITY);
    let ok = b.upper_kernel <= KERNEL_TOL && b.lower_envelope <= ENVELOPE_SLACK && univ <= UNIV_TOL;
    Ok((ok, format!("kE {:.2e}, envelope {:.2e}, universal {univ:.2e}", b.upper_kernel, b.lower_envelope)))
}

fn non_uniqueness() -> Outcome {
    let nl = log(1.5);
    let opts = PairOptions::default();
    let w1 = solve_global_radial(&nl, 1.0, 3, opts.n * 1.25)?;
    let p = nonuniqueness_pair(&nl, 3, 1.0, 2.0, &|r| w1.eval(r), &opts)?;
    let s = &p.separation;
    let ok = p.under_excess <= PAIR_TOL && p.over_deficit <= PAIR_TOL && p.over_excess <= PAIR_TOL && s.holds;
    Ok((
        ok,
        format!(
            "under−cap {:.1e}, w_1−over {:.1e}, over−w_2 {:.1e}, at r={} over {:.3e} under {:.3e}",
            p.under_excess, p.over_deficit, p.over_excess, s.r, s.over, s.under
        ),
    ))
}

fn uniqueness_ko() -> Outcome {
    let rep = uniqueness_probe(&Nonlinearity::power(1.0)?, 3, &|r| 5.0 * (-r * r).exp(), &ProbeOptions::default())?;
    let s = rep.sandwich.as_ref().expect("u² satisfies the KO condition");
    let ok = rep.agreement < AGREEMENT_TOL
        && s.lower_excess <= UNIQUE_SANDWICH_TOL
        && s.upper_excess <= UNIQUE_SANDWICH_TOL
        && s.w_center < W_CENTER_MAX;
    Ok((
        ok,
        format!(
            "agreement {:.1e}, u_R−u {:.1e}, u−w_R−u_R {:.1e}, w_{}(0) = {:.4}",
            rep.agreement, s.lower_excess, s.upper_excess, s.radius, s.w_center
        ),
    ))
}

fn dyadic(t_end: f64, levels: i32) -> Vec<f64> {
    (0..=levels).rev().map(|j| t_end / 2f64.powi(j)).collect()
}

fn trace_extraction() -> Outcome {
    let nl = log(3.0);
    let radii = [0.1, 0.25, 0.5, 1.0];
    let bump = |r: f64| if r < 1.0 { (-1.0 / (1.0 - r * r)).exp() } else { 0.0 };
    let grid = RadialGrid::uniform(3, 8.0, 600)?;
    let u0: Vec<f64> = grid.radii.iter().map(|&r| bump(r)).collect();
    let times = dyadic(0.5, 8);
    let field = solve_radial_cauchy(&nl, &grid, &u0, &BoundaryCondition::DirichletZero, 0.0, &times, &SolverOptions::default())?;
    let est = extract_trace(&nl, &field, &radii, times[0])?;
    let mut recovery = 0.0f64;
    let mut bump_ok = true;
    for r in &est.radii {
        match r.verdict {
            PointVerdict::Regular(m) => {
                let exact = integrate(|s| 4.0 * PI * s * s * bump(s), 0.0, r.rho, 1e-12);
                recovery = recovery.max((m / exact - 1.0).abs());
            }
            _ => bump_ok = false,
        }
    }
    bump_ok &= recovery <= MASS_RECOVERY;

    let k = 1e5;
    let times = dyadic(0.5, 14);
    let field = solve_dirac(&nl, 3, &DiracApprox::heat_kernel(k, times[0] / 16.0), &times, &DiracOptions::default())?;
    let est = extract_dirac_trace(&nl, &field, k, &radii, times[0])?;
    let dirac_ok = est.all_singular()
        && est.annuli.iter().all(|a| matches!(a.verdict, PointVerdict::Regular(m) if m.abs() <= 1e-6));

    let sw = nu_infinity_sandwich(&log(1.5), 3, 1.0, &SandwichOptions::default())?;
    let sw_ok =
        sw.lower_deficit <= NU_SANDWICH_TOL && sw.upper_excess <= NU_SANDWICH_TOL && sw.minimality_deficit <= NU_SANDWICH_TOL;
    Ok((
        bump_ok && dirac_ok && sw_ok,
        format!(
            "bump regular {bump_ok} (mass rel {recovery:.1e}); dirac singular-at-0/regular-zero {dirac_ok}; ν_∞ sandwich {:.1e}/{:.1e}/{:.1e}",
            sw.lower_deficit, sw.upper_excess, sw.minimality_deficit
        ),
    ))
}

fn solver_verification() -> Outcome {
    // heat kernel
    let grid = RadialGrid::graded(2, 8.0, 400, 0.005)?;
    let t0 = 0.01;
    let u0: Vec<f64> = grid.radii.iter().map(|&r| heat_kernel(2, r, t0)).collect();
    let field = solve_radial_cauchy(
        &Nonlinearity::zero(),
        &grid,
        &u0,
        &BoundaryCondition::DirichletZero,
        t0,
        &[0.1],
        &SolverOptions::default(),
    )?;
    let heat_err = grid.radii.iter().zip(&field.values[0]).map(|(&r, &u)| (u - heat_kernel(2, r, 0.1)).abs()).fold(0.0, f64::max);

    // self-convergence in space at a fixed small step
    let nl = Nonlinearity::power(1.0)?;
    let runs: Vec<SpaceTimeField> = [41, 81, 161]
        .iter()
        .map(|&m| {
            let g = RadialGrid::uniform(3, 4.0, m).unwrap();
            let u0: Vec<f64> = g.radii.iter().map(|&r| 5.0 * (-r * r).exp()).collect();
            let opts = SolverOptions { dt: DtControl::Fixed(1e-3), ..Default::default() };
            solve_radial_cauchy(&nl, &g, &u0, &BoundaryCondition::DirichletZero, 0.0, &[1.0], &opts)
        })
        .collect::<Result<_, _>>()?;
    let coarse = |f: &SpaceTimeField, stride: usize| -> Vec<f64> { f.values[0].iter().step_by(stride).cloned().collect() };
    let (c0, c1, c2) = (coarse(&runs[0], 1), coarse(&runs[1], 2), coarse(&runs[2], 4));
    let e01 = c0.iter().zip(&c1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let e12 = c1.iter().zip(&c2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let order = (e01 / e12).log2();

    // discrete comparison on random ordered pairs
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst = f64::NEG_INFINITY;
    let g = RadialGrid::uniform(3, 3.0, 61)?;
    for _ in 0..20 {
        let nl = match rng.gen_range(0..3) {
            0 => Nonlinearity::power(rng.gen_range(0.2..2.0))?,
            1 => log(rng.gen_range(0.5..3.5)),
            _ => Nonlinearity::zero(),
        };
        let (amp, width) = (rng.gen_range(0.1..20.0), rng.gen_range(0.2..1.5));
        let lower: Vec<f64> = g.radii.iter().map(|&r| amp * (-(r / width).powi(2)).exp() * rng.gen_range(0.0..1.0)).collect();
        let upper: Vec<f64> = lower.iter().map(|&v| v + rng.gen_range(0.0..5.0)).collect();
        let opts = SolverOptions { dt: DtControl::Fixed(2e-3), ..Default::default() };
        let a = solve_radial_cauchy(&nl, &g, &lower, &BoundaryCondition::DirichletZero, 0.0, &[0.05, 0.2], &opts)?;
        let b = solve_radial_cauchy(&nl, &g, &upper, &BoundaryCondition::DirichletZero, 0.0, &[0.05, 0.2], &opts)?;
        for (x, y) in a.values.iter().zip(&b.values) {
            worst = worst.max(x.iter().zip(y).map(|(p, q)| p - q).fold(f64::NEG_INFINITY, f64::max));
        }
    }
    let ok = heat_err < HEAT_TOL && order >= MIN_ORDER && worst <= ORDER_SLACK;
    Ok((ok, format!("heat sup err {heat_err:.1e}, order {order:.3}, max(u−v) {worst:.1e} over 20 pairs")))
}

fn stability() -> Outcome {
    let nl = log(1.5);
    let (k, t0, rho): (f64, f64, f64) = (100.0, 1e-4, 0.05);
    let t = 4.0 * t0.max(rho * rho);
    let opts = DiracOptions::default();
    let a = solve_dirac(&nl, 3, &DiracApprox::heat_kernel(k, t0), &[t], &opts)?;
    let b = solve_dirac(&nl, 3, &DiracApprox::bump(k, rho), &[t], &opts)?;
    let (mut d, mut m) = (0.0f64, 0.0f64);
    for (&r, &u) in a.grid.radii.iter().zip(&a.values[0]) {
        if r > 1.0 {
            break;
        }
        d = d.max((u - b.value(r, t).unwrap()).abs());
        m = m.max(u.abs());
    }
    Ok((d / m <= STABILITY_TOL, format!("normalized sup gap {:.2e} at t = {t}", d / m)))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("regime trichotomy", regime_trichotomy),
        ("closed-form flow", closed_form_flow),
        ("power-family classification", power_classification),
        ("KO F-form/L-form equivalence", kon_equivalence),
        ("radial profile bounds", profile_bounds),
        ("singular profile", singular_profile),
        ("Dirac solution sandwich", dirac_sandwich),
        ("non-uniqueness", non_uniqueness),
        ("uniqueness under KO", uniqueness_ko),
        ("trace extraction", trace_extraction),
        ("solver verification", solver_verification),
        ("stability of Dirac approximations", stability),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{:>2}] {name}: {detail} ({:.1} s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
