//! Experiment configs, orchestration and artifacts.
//!
//! A config is a TOML file with top-level `experiment`, `nonlinearity`, `N`,
//! optional `out`, and a `[params]` table read per experiment with defaults.
//! Every run writes CSV/JSON artifacts and a `manifest.json` of
//! `{file, sha256, rows}` entries.

use crate::classifier::{classify, weak_singularity, Regime};
use crate::error::{LabError, Result};
use crate::nonlinearity::{parse_nonlinearity, Nonlinearity};
use crate::parabolic::{
    default_t0, dirac_bounds, geometric_times, k_ladder, minimal_maximal_u, nonuniqueness_pair, solve_dirac,
    truncation_error_bound, DiracApprox, DiracOptions, LadderOptions, LadderVerdict, MinMaxOptions, PairOptions, Probe,
    SpaceTimeField,
};
use crate::radial_profiles::{solve_ball_blowup, solve_global_radial, RadialProfile, SingularProfile};
use crate::scalar_flow::{flow_table, ScalarFlow};
use crate::trace::{extract_dirac_trace, extract_trace, nu_infinity_sandwich, PointVerdict, SandwichOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Classify,
    Flow,
    Profile,
    Dirac,
    Ladder,
    Nonunique,
    Minmax,
    Trace,
    Sandwich,
    Regimes,
}

impl std::str::FromStr for Experiment {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        toml::Value::String(s.to_string())
            .try_into()
            .map_err(|_| LabError::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub nonlinearity: String,
    pub n_dim: usize,
    pub out: Option<PathBuf>,
    pub params: toml::Table,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Experiment,
    #[serde(default)]
    nonlinearity: Option<String>,
    #[serde(rename = "N", default)]
    n_dim: Option<usize>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    params: toml::Table,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, nonlinearity: &str, n_dim: usize) -> Self {
        ExperimentConfig { experiment, nonlinearity: nonlinearity.into(), n_dim, out: None, params: toml::Table::new() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        Ok(ExperimentConfig {
            experiment: raw.experiment,
            nonlinearity: raw.nonlinearity.unwrap_or_default(),
            n_dim: raw.n_dim.unwrap_or(3),
            out: raw.out,
            params: raw.params,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Applies `key=value`; the value is read as TOML and falls back to a string.
    /// Keys other than `experiment`, `nonlinearity`, `N` and `out` go to `params`.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| LabError::Config(format!("override '{kv}' is not key=value")))?;
        let key = key.trim().trim_start_matches("params.");
        let value = value.trim();
        let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        match key {
            "experiment" => self.experiment = value.parse()?,
            "nonlinearity" => self.nonlinearity = value.trim_matches('"').to_string(),
            "N" => {
                self.n_dim = parsed
                    .as_integer()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| LabError::Config(format!("N must be a positive integer, got {value}")))?
                    as usize
            }
            "out" => self.out = Some(PathBuf::from(value.trim_matches('"'))),
            _ => {
                self.params.insert(key.to_string(), parsed);
            }
        }
        Ok(())
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => as_f64(v).ok_or_else(|| LabError::Config(format!("params.{key} must be a number"))),
        }
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.params.get(key).map(|_| self.f64(key, 0.0)).transpose()
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_integer()
                .filter(|&n| n >= 0)
                .map(|n| n as usize)
                .ok_or_else(|| LabError::Config(format!("params.{key} must be a nonnegative integer"))),
        }
    }

    fn list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.params.get(key) {
            None => Ok(default.to_vec()),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| as_f64(v).ok_or_else(|| LabError::Config(format!("params.{key} must hold numbers"))))
                .collect(),
            Some(v) => as_f64(v)
                .map(|x| vec![x])
                .ok_or_else(|| LabError::Config(format!("params.{key} must be a list of numbers"))),
        }
    }

    fn string(&self, key: &str, default: &str) -> Result<String> {
        match self.params.get(key) {
            None => Ok(default.to_string()),
            Some(toml::Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(LabError::Config(format!("params.{key} must be a string"))),
        }
    }

    fn probes(&self, default: &[Probe]) -> Result<Vec<Probe>> {
        match self.params.get("probes") {
            None => Ok(default.to_vec()),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|p| match p.as_array().map(|q| q.iter().map(as_f64).collect::<Vec<_>>()) {
                    Some(q) if q.len() == 2 && q.iter().all(Option::is_some) => {
                        Ok(Probe { r: q[0].unwrap(), t: q[1].unwrap() })
                    }
                    _ => Err(LabError::Config("params.probes must be a list of [r, t] pairs".into())),
                })
                .collect(),
            Some(_) => Err(LabError::Config("params.probes must be a list of [r, t] pairs".into())),
        }
    }

    fn parse_nl(&self) -> Result<Nonlinearity> {
        parse_nonlinearity(&self.nonlinearity)
    }

    /// Parses the nonlinearity and checks the regime the experiment needs.
    pub fn validate(&self) -> Result<()> {
        if self.n_dim == 0 {
            return Err(LabError::Config("N must be positive".into()));
        }
        if self.experiment == Experiment::Regimes {
            return Ok(());
        }
        let nl = self.parse_nl()?;
        let need = match self.experiment {
            Experiment::Nonunique | Experiment::Sandwich => Some(Regime::FlowLimit),
            Experiment::Minmax => Some(Regime::MinimalSingular),
            _ => None,
        };
        if let Some(want) = need {
            let got = classify(&nl, self.n_dim)?.regime;
            if got != want {
                return Err(LabError::Regime(format!(
                    "experiment {:?} needs regime {want:?}, f = {nl} in N = {} is {got:?}",
                    self.experiment, self.n_dim
                )));
            }
        }
        let dirac_source = self.experiment == Experiment::Trace && self.string("source", "bump")? == "dirac";
        if matches!(self.experiment, Experiment::Dirac | Experiment::Ladder) || dirac_source {
            if !nl.is_zero() && !weak_singularity(&nl, self.n_dim)?.is_finite() {
                return Err(LabError::Regime(format!("k δ₀ is not admissible for f = {nl} in N = {}", self.n_dim)));
            }
        }
        Ok(())
    }
}

fn as_f64(v: &toml::Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

/// Exit status for an error: 2 config, 3 regime, 4 numeric, 5 postcondition.
pub fn exit_code(e: &LabError) -> i32 {
    match e {
        LabError::Syntax { .. } | LabError::Config(_) | LabError::Precondition(_) => 2,
        LabError::Regime(_) | LabError::FlowDoesNotExist(_) => 3,
        LabError::Postcondition(_) => 5,
        _ => 4,
    }
}

/// Fixed 17-significant-digit rendering.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    /// Data rows for CSV files; `null` for JSON.
    pub rows: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostconditionCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: Experiment,
    pub nonlinearity: String,
    #[serde(rename = "N")]
    pub n_dim: usize,
    pub files: Vec<ManifestEntry>,
    pub postconditions: Vec<PostconditionCheck>,
}

impl Manifest {
    pub fn ok(&self) -> bool {
        self.postconditions.iter().all(|p| p.holds)
    }
}

/// Writes artifacts into one directory and records their hashes.
pub struct ArtifactWriter {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ArtifactWriter { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn record(&mut self, name: &str, bytes: &[u8], rows: Option<usize>) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.push(ManifestEntry { file: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)), rows });
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| LabError::Io(e.to_string());
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Io(e.to_string()))?;
        self.record(name, &bytes, Some(rows.len()))
    }

    pub fn numeric_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let text: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|&x| fmt_f64(x)).collect()).collect();
        self.csv(name, header, &text)
    }

    pub fn field_csv(&mut self, name: &str, field: &SpaceTimeField) -> Result<()> {
        let rows: Vec<Vec<f64>> = field.rows().iter().map(|r| r.to_vec()).collect();
        self.numeric_csv(name, &["t", "r", "u"], &rows)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| LabError::Io(e.to_string()))?;
        text.push('\n');
        self.record(name, text.as_bytes(), None)
    }

    /// Writes `manifest.json` (not listed in itself).
    pub fn finish(self, experiment: Experiment, nl: &str, n_dim: usize, postconditions: Vec<PostconditionCheck>) -> Result<Manifest> {
        let manifest =
            Manifest { experiment, nonlinearity: nl.to_string(), n_dim, files: self.files, postconditions };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| LabError::Io(e.to_string()))?;
        text.push('\n');
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

struct Checks(Vec<PostconditionCheck>);

impl Checks {
    fn at_most(&mut self, name: &str, value: f64, limit: f64) {
        self.0.push(PostconditionCheck { name: name.into(), holds: value <= limit, detail: format!("{value:e} ≤ {limit:e}") });
    }

    fn flag(&mut self, name: &str, holds: bool, detail: String) {
        self.0.push(PostconditionCheck { name: name.into(), holds, detail });
    }
}

/// Runs the experiment and writes artifacts to `out` (or the config's `out`).
pub fn run(config: &ExperimentConfig, out: Option<&Path>) -> Result<Manifest> {
    config.validate()?;
    let dir = out.map(Path::to_path_buf).or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let mut w = ArtifactWriter::new(&dir)?;
    let mut checks = Checks(Vec::new());
    let n_dim = config.n_dim;
    match config.experiment {
        Experiment::Classify => {
            let nl = config.parse_nl()?;
            let report = classify(&nl, n_dim)?;
            w.json("report.json", &report)?;
        }
        Experiment::Flow => {
            let nl = config.parse_nl()?;
            let sf = ScalarFlow::new(&nl)?;
            let times = geometric_times(config.f64("t_min", 1e-2)?, config.f64("t_max", 10.0)?, config.usize("samples", 41)?);
            let (header, rows) = flow_table(&sf, &times, &config.list("a", &[])?, &config.list("ks", &[])?, n_dim)?;
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            w.numeric_csv("flow.csv", &h, &rows)?;
            w.json("flow.json", &serde_json::json!({ "saturation_time": sf.saturation_time() }))?;
        }
        Experiment::Profile => run_profile(config, &mut w, &mut checks)?,
        Experiment::Dirac => run_dirac(config, &mut w, &mut checks)?,
        Experiment::Ladder => run_ladder(config, &mut w, &mut checks)?,
        Experiment::Nonunique => {
            let nl = config.parse_nl()?;
            let (a, b) = (config.f64("a", 1.0)?, config.f64("b", 2.0)?);
            let def = PairOptions::default();
            let opts = PairOptions {
                n: config.f64("n", def.n)?,
                h: config.f64("h", def.h)?,
                times: config.list("times", &def.times)?,
                r_fractions: config.list("r_fractions", &def.r_fractions)?,
                domain_factor: config.f64("domain_factor", def.domain_factor)?,
                rtol: config.f64("rtol", def.rtol)?,
            };
            let w_a = solve_global_radial(&nl, a, n_dim, opts.n)?;
            let pair = nonuniqueness_pair(&nl, n_dim, a, b, &|r| w_a.eval(r), &opts)?;
            let tol = config.f64("tol", 1e-2)?;
            checks.at_most("under ≤ min{φ_∞, w_b}", pair.under_excess, tol);
            checks.at_most("w_a ≤ over", pair.over_deficit, tol);
            checks.at_most("over ≤ w_b", pair.over_excess, tol);
            checks.flag("separation", pair.separation.holds, format!("{:?}", pair.separation));
            w.field_csv("under.csv", &pair.under)?;
            w.field_csv("over.csv", &pair.over)?;
            w.json(
                "nonunique.json",
                &serde_json::json!({
                    "truncation_radii": pair.truncation_radii,
                    "under_cauchy": pair.under_cauchy,
                    "under_excess": pair.under_excess,
                    "over_deficit": pair.over_deficit,
                    "over_excess": pair.over_excess,
                    "under_decay": pair.under_decay,
                    "over_grows": pair.over_grows,
                    "separation": pair.separation,
                }),
            )?;
        }
        Experiment::Minmax => {
            let nl = config.parse_nl()?;
            let def = MinMaxOptions::default();
            let opts = MinMaxOptions {
                k: config.f64("k", def.k)?,
                t0: config.f64("t0", def.t0)?,
                dirac: dirac_options(config)?,
                eps: config.f64("eps", def.eps)?,
                taus: config.list("taus", &def.taus)?,
                times: config.list("times", &def.times)?,
                cap_time: config.f64("cap_time", def.cap_time)?,
            };
            let mm = minimal_maximal_u(&nl, n_dim, &opts)?;
            let t_end = *opts.times.last().unwrap();
            checks.at_most("underU ≤ overU", mm.order_excess, config.f64("tol", 1e-3)?);
            checks.flag("m(τ, ε) decreases with τ", mm.offsets_decrease, format!("{:?}", mm.offsets));
            w.field_csv("under.csv", &mm.under)?;
            w.field_csv("over.csv", &mm.over)?;
            w.json(
                "minmax.json",
                &serde_json::json!({
                    "eps": mm.eps,
                    "offsets": mm.offsets,
                    "order_excess": mm.order_excess,
                    "probe": { "r": 0.5, "t": t_end, "under": mm.under.value(0.5, t_end), "over": mm.over.value(0.5, t_end) },
                }),
            )?;
        }
        Experiment::Trace => run_trace(config, &mut w)?,
        Experiment::Sandwich => {
            let nl = config.parse_nl()?;
            let def = SandwichOptions::default();
            let opts = SandwichOptions {
                taus: config.list("taus", &def.taus)?,
                times: config.list("times", &def.times)?,
                r_max: config.f64("r_max", def.r_max)?,
                nodes: config.usize("nodes", def.nodes)?,
                compare_at: config.f64("compare_at", def.compare_at)?,
                check_radius: config.f64("check_radius", def.check_radius)?,
                rtol: config.f64("rtol", def.rtol)?,
            };
            let s = nu_infinity_sandwich(&nl, n_dim, config.f64("b", 1.0)?, &opts)?;
            let tol = config.f64("tol", 1e-2)?;
            checks.at_most("max{φ_∞, w_b} ≤ u", s.lower_deficit, tol);
            checks.at_most("u ≤ φ_∞ + w_b", s.upper_excess, tol);
            checks.at_most("φ_∞ ≤ u", s.minimality_deficit, tol);
            w.field_csv("sandwich.csv", &s.field)?;
            w.json(
                "sandwich.json",
                &serde_json::json!({
                    "b": s.b,
                    "lower_deficit": s.lower_deficit,
                    "upper_excess": s.upper_excess,
                    "minimality_deficit": s.minimality_deficit,
                    "rung_gap": s.rung_gap,
                }),
            )?;
        }
        Experiment::Regimes => {
            let family = match config.string("family", "log")?.as_str() {
                "log" => Family::Log,
                "power" => Family::Power,
                other => return Err(LabError::Config(format!("unknown family '{other}'"))),
            };
            let params = config.list("params", &[0.5, 1.5, 3.0])?;
            let opts = RegimesOptions { ladder: config.params.get("ladder").and_then(|v| v.as_bool()).unwrap_or(true), ladder_opts: ladder_options(config)?, ks: config.list("ks", &DEFAULT_KS)?, probes: config.probes(&default_probes())? };
            let rows = regimes_table(family, &params, n_dim, &opts)?;
            checks.flag(
                "ladder verdicts agree with the classifier",
                rows.iter().all(|r| r.agreement),
                rows.iter().map(|r| format!("{}: {:?}/{:?}", r.param, r.regime, r.ladder)).collect::<Vec<_>>().join(", "),
            );
            let text: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        fmt_f64(r.param),
                        r.nonlinearity.clone(),
                        format!("{:?}", r.regime),
                        r.a8.clone(),
                        r.j.clone(),
                        r.ko.clone(),
                        r.ladder.map(|v| format!("{v:?}")).unwrap_or_else(|| "not_run".into()),
                        r.agreement.to_string(),
                    ]
                })
                .collect();
            w.csv("regimes.csv", &["param", "nonlinearity", "regime", "A8", "J", "KO", "ladder", "agreement"], &text)?;
            w.json("regimes.json", &rows)?;
        }
    }
    w.finish(config.experiment, &config.nonlinearity, n_dim, checks.0)
}

fn dirac_options(config: &ExperimentConfig) -> Result<DiracOptions> {
    let def = DiracOptions::default();
    let rtol = config.f64("rtol", 1e-6)?;
    Ok(DiracOptions {
        r_max: config.f64("r_max", def.r_max)?,
        nodes: config.usize("nodes", def.nodes)?,
        dt: crate::parabolic::DtControl::Adaptive { rtol, dt_init: 0.0 },
    })
}

fn run_profile(config: &ExperimentConfig, w: &mut ArtifactWriter, checks: &mut Checks) -> Result<()> {
    let nl = config.parse_nl()?;
    let n_dim = config.n_dim;
    let profile: RadialProfile = match config.string("kind", "global")?.as_str() {
        "global" => {
            let a = config.f64("a", 1.0)?;
            let p = solve_global_radial(&nl, a, n_dim, config.f64("r_max", 5.0)?)?;
            let c = a * nl.h(a) / n_dim as f64;
            let lower = p
                .grid
                .iter()
                .zip(&p.values)
                .map(|(&r, &v)| (a + 0.5 * c * r * r) - v)
                .fold(f64::NEG_INFINITY, f64::max);
            checks.at_most("w ≥ a + a h(a) r²/(2N)", lower, 1e-9 * p.max_value());
            p
        }
        "ball" => solve_ball_blowup(&nl, config.f64("R", 1.0)?, n_dim)?,
        "phi" => {
            let radii = geometric_times(config.f64("r_min", 0.1)?, config.f64("r_max", 10.0)?, config.usize("samples", 200)?);
            SingularProfile::new(&nl)?.profile(&radii)?
        }
        other => return Err(LabError::Config(format!("unknown profile kind '{other}'"))),
    };
    let rows: Vec<Vec<f64>> =
        profile.grid.iter().zip(&profile.values).zip(&profile.derivative).map(|((&r, &v), &d)| vec![r, v, d]).collect();
    w.numeric_csv("profile.csv", &["r", "w", "dw"], &rows)?;
    w.json("profile.json", &profile.metadata())
}

fn run_dirac(config: &ExperimentConfig, w: &mut ArtifactWriter, checks: &mut Checks) -> Result<()> {
    let nl = config.parse_nl()?;
    let n_dim = config.n_dim;
    let opts = dirac_options(config)?;
    let k = config.f64("k", 100.0)?;
    let approx = match config.string("approx", "heat")?.as_str() {
        "heat" => DiracApprox::heat_kernel(k, config.f64("t0", default_t0(opts.r_max))?),
        "bump" => DiracApprox::bump(k, config.f64("rho", 0.05)?),
        other => return Err(LabError::Config(format!("unknown approximation '{other}'"))),
    };
    let t_end = config.f64("T", 1.0)?;
    let times = match config.params.get("times") {
        Some(_) => config.list("times", &[])?,
        None => geometric_times(config.f64("t_min", 1e-3)?.max(2.0 * approx.start_time(n_dim)), t_end, config.usize("samples", 13)?),
    };
    let field = solve_dirac(&nl, n_dim, &approx, &times, &opts)?;
    let flow = ScalarFlow::new(&nl).ok();
    let phi = SingularProfile::new(&nl).ok();
    let window = (config.f64("window_lo", 0.05)?, config.f64("window_hi", 0.5)?);
    let bounds = dirac_bounds(&nl, &field, k, window, flow.as_ref(), phi.as_ref())?;
    checks.at_most("u ≤ kE", bounds.upper_kernel, 1e-3);
    checks.at_most("u ≥ lower envelope", bounds.lower_envelope, 1e-2);
    if let Some(u) = bounds.universal {
        checks.at_most("u ≤ min{φ_∞, Φ}", u, 1e-3);
    }
    let bound = truncation_error_bound(n_dim, k, opts.r_max, t_end);
    w.field_csv("field.csv", &field)?;
    w.json("field.json", &field.metadata(&opts.dt, Some(bound)))?;
    w.json("bounds.json", &bounds)
}

const DEFAULT_KS: [f64; 5] = [1e1, 1e2, 1e3, 1e4, 1e5];

fn default_probes() -> Vec<Probe> {
    vec![Probe { r: 0.0, t: 0.2 }, Probe { r: 0.5, t: 0.2 }]
}

fn ladder_options(config: &ExperimentConfig) -> Result<LadderOptions> {
    let def = LadderOptions::default();
    let mut th = def.thresholds;
    th.growth = config.f64("growth", th.growth)?;
    th.flow = config.f64("flow_tol", th.flow)?;
    th.cauchy = config.f64("cauchy", th.cauchy)?;
    th.below = config.f64("below", th.below)?;
    Ok(LadderOptions { dirac: dirac_options(config)?, t0: config.opt_f64("t0")?, thresholds: th, extra_times: vec![] })
}

fn run_ladder(config: &ExperimentConfig, w: &mut ArtifactWriter, checks: &mut Checks) -> Result<()> {
    let nl = config.parse_nl()?;
    let ks = config.list("ks", &DEFAULT_KS)?;
    let probes = config.probes(&default_probes())?;
    let res = k_ladder(&nl, config.n_dim, &ks, &probes, &ladder_options(config)?)?;
    checks.flag("u_k monotone in k", res.monotone, String::new());
    if let Some(d) = res.flow_domination {
        checks.at_most("u_k ≤ φ_∞", d, 1e-3);
    }
    let mut rows = Vec::new();
    for p in &res.probes {
        for (k, v) in res.ks.iter().zip(&p.values) {
            rows.push(vec![*k, p.probe.r, p.probe.t, *v]);
        }
    }
    w.numeric_csv("ladder.csv", &["k", "r", "t", "u"], &rows)?;
    w.json("ladder.json", &res)
}

fn run_trace(config: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<()> {
    let nl = config.parse_nl()?;
    let n_dim = config.n_dim;
    let t_end = config.f64("T", 0.5)?;
    let deep = config.string("source", "bump")? == "dirac";
    let t_min = config.f64("t_min", t_end / if deep { 16384.0 } else { 256.0 })?;
    let levels = ((t_end / t_min).log2().round() as usize).max(2);
    let times: Vec<f64> = (0..=levels).rev().map(|j| t_end / 2f64.powi(j as i32)).collect();
    let opts = dirac_options(config)?;
    let (field, dirac_mass) = match config.string("source", "bump")?.as_str() {
        "bump" => {
            let rho = config.f64("rho", 1.0)?;
            let height = config.f64("height", 1.0)?;
            let grid = crate::parabolic::RadialGrid::uniform(n_dim, opts.r_max, opts.nodes)?;
            let u0: Vec<f64> = grid
                .radii
                .iter()
                .map(|&r| if r < rho { height * (-1.0 / (1.0 - (r / rho).powi(2))).exp() } else { 0.0 })
                .collect();
            let field = crate::parabolic::solve_radial_cauchy(
                &nl,
                &grid,
                &u0,
                &crate::parabolic::BoundaryCondition::DirichletZero,
                0.0,
                &times,
                &crate::parabolic::SolverOptions { dt: opts.dt, ..Default::default() },
            )?;
            (field, None)
        }
        "dirac" => {
            let k = config.f64("k", 1e5)?;
            let t0 = config.f64("t0", (t_min / 16.0).min(default_t0(opts.r_max)))?;
            (solve_dirac(&nl, n_dim, &DiracApprox::heat_kernel(k, t0), &times, &opts)?, Some(k))
        }
        other => return Err(LabError::Config(format!("unknown trace source '{other}'"))),
    };
    let radii = config.list("radii", &[0.1, 0.25, 0.5, 1.0])?;
    let est = match dirac_mass {
        Some(k) => extract_dirac_trace(&nl, &field, k, &radii, t_min)?,
        None => extract_trace(&nl, &field, &radii, t_min)?,
    };
    let report: Vec<serde_json::Value> = est
        .radii
        .iter()
        .map(|r| {
            let (verdict, mass) = match r.verdict {
                PointVerdict::Regular(m) => ("Regular", Some(m)),
                PointVerdict::Singular => ("Singular", None),
                PointVerdict::Undecided => ("Undecided", None),
            };
            serde_json::json!({
                "rho": r.rho,
                "verdict": verdict,
                "mass_limit_or_null": mass,
                "absorption_integral": r.absorption_integral,
            })
        })
        .collect();
    let rows: Vec<Vec<f64>> = est.mass_rows().iter().map(|r| r.to_vec()).collect();
    w.numeric_csv("mass.csv", &["t", "rho", "mass"], &rows)?;
    w.json("trace.json", &serde_json::json!({ "radii": report, "annuli": est.annuli }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `u ln(u+1)^α`.
    Log,
    /// `u^{1+β}`.
    Power,
}

#[derive(Debug, Clone)]
pub struct RegimesOptions {
    /// Run the k ladder for admissible rows.
    pub ladder: bool,
    pub ladder_opts: LadderOptions,
    pub ks: Vec<f64>,
    pub probes: Vec<Probe>,
}

impl Default for RegimesOptions {
    fn default() -> Self {
        RegimesOptions { ladder: true, ladder_opts: LadderOptions::default(), ks: DEFAULT_KS.to_vec(), probes: default_probes() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeRow {
    pub param: f64,
    pub nonlinearity: String,
    pub regime: Regime,
    pub a8: String,
    pub j: String,
    pub ko: String,
    /// `k δ₀` admissible in this dimension.
    pub admissible: bool,
    pub ladder: Option<LadderVerdict>,
    pub expected: Option<LadderVerdict>,
    /// The ladder verdict matches the regime, or no ladder was run.
    pub agreement: bool,
}

pub fn expected_verdict(regime: Regime) -> Option<LadderVerdict> {
    match regime {
        Regime::BlowupEverywhere => Some(LadderVerdict::Diverges),
        Regime::FlowLimit => Some(LadderVerdict::ConvergesToFlow),
        Regime::MinimalSingular => Some(LadderVerdict::ConvergesBelowFlow),
        Regime::Undecided => None,
    }
}

/// One row per parameter: classifier verdicts, ladder verdict and agreement.
pub fn regimes_table(family: Family, params: &[f64], n_dim: usize, opts: &RegimesOptions) -> Result<Vec<RegimeRow>> {
    if params.len() < 3 {
        return Err(LabError::Precondition(format!("regimes table needs at least 3 parameters, got {}", params.len())));
    }
    let mut rows = Vec::with_capacity(params.len());
    for &p in params {
        let nl = match family {
            Family::Log => Nonlinearity::log(p)?,
            Family::Power => Nonlinearity::power(p)?,
        };
        let rep = classify(&nl, n_dim)?;
        let label = |i: usize| format!("{:?}", rep.verdicts[i].finite);
        let admissible = rep.verdicts[0].is_finite();
        let expected = expected_verdict(rep.regime);
        let ladder = if opts.ladder && admissible && expected.is_some() {
            Some(k_ladder(&nl, n_dim, &opts.ks, &opts.probes, &opts.ladder_opts)?.verdict)
        } else {
            None
        };
        let agreement = match (ladder, expected) {
            (Some(v), Some(e)) => v == e,
            _ => true,
        };
        rows.push(RegimeRow {
            param: p,
            nonlinearity: nl.text(),
            regime: rep.regime,
            a8: label(0),
            j: label(1),
            ko: label(2),
            admissible,
            ladder,
            expected,
            agreement,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_parses_values() {
        let mut c = ExperimentConfig::from_toml_str("experiment = \"ladder\"\nnonlinearity = \"u^2\"\n").unwrap();
        c.apply_override("ks=[1, 10, 100]").unwrap();
        c.apply_override("N=2").unwrap();
        c.apply_override("approx=bump").unwrap();
        assert_eq!(c.n_dim, 2);
        assert_eq!(c.list("ks", &[]).unwrap(), vec![1.0, 10.0, 100.0]);
        assert_eq!(c.string("approx", "").unwrap(), "bump");
        assert!(c.apply_override("N=zero").is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 6.02e31, 1e-300] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&LabError::Syntax { offset: 3, message: String::new() }), 2);
        assert_eq!(exit_code(&LabError::Regime(String::new())), 3);
        assert_eq!(exit_code(&LabError::DtUnderflow { t: 0.0, dt: 0.0 }), 4);
        assert_eq!(exit_code(&LabError::Postcondition(String::new())), 5);
    }
}
