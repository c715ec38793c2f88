//! JSON-configured experiments and their on-disk outputs.
//!
//! A run produces `trajectory.csv`, kind-specific tables, `summary.json` and
//! `manifest.json` (SHA-256 of every other file). Identical configs produce
//! byte-identical files.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::constraint::{monotonicity_gap, lp_norm_ratio, GalerkinBand, SmoothedMultiplier};
use crate::diagnostics::{
    energy_series, h1_ito_residual, max_sphere_defect, mean_energy, radial_cancellation, sphere_defect,
    uniqueness_monitor, EnergySeries,
};
use crate::error::{Error, Result};
use crate::galerkin::{
    integral_ratio, normalize_initial, sample_brownian, simulate, GalerkinSystem, IntegratorConfig, Scheme,
    Trajectory,
};
use crate::noise::{
    dn_apply, kappa_apply, lipschitz_report, n_apply, pairing_direct, pairing_suite, NoiseChannel, NoiseFamily,
    TruncationMode, PAIRING_NAMES,
};
use crate::spectral::{build_eigensystem, DomainSpec, EigenSystem, SpectralField};
use crate::diagnostics::lp_ito_residual;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    ConvergeDt,
    ConvergeM,
    IdentitySuite,
    Uniqueness,
    MonteCarlo,
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        serde_json::from_value(Value::String(s.replace('-', "_")))
            .map_err(|_| format!("unknown experiment kind {s:?}"))
    }
}

/// A single eigenmode, by 1-based position in the ordered list or by 1-based
/// per-axis index.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ModeRef {
    Ordinal(usize),
    Index(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Mode { mode: ModeRef, amplitude: f64 },
    Coeffs { coeffs: Vec<f64>, amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InitialTerm {
    pub mode: ModeRef,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DomainConfig {
    pub lengths: Vec<f64>,
    pub grid_points: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub domain: DomainConfig,
    pub modes: usize,
    pub p: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    pub dt_base: f64,
    pub m: u32,
    pub scheme: Scheme,
    pub truncation: TruncationMode,
    pub noise: Vec<NoiseSpec>,
    pub u0: Vec<InitialTerm>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub samples: usize,
    pub levels: usize,
    pub m_levels: Vec<u32>,
    pub perturbation: f64,
    pub identity_fields: usize,
    pub stability_c: f64,
}

const TOP_KEYS: &[&str] = &[
    "kind", "domain", "modes", "p", "T", "dt", "dt_base", "m", "scheme", "truncation", "noise", "u0", "seed",
    "output_dir", "workers", "samples", "levels", "m_levels", "perturbation", "identity_fields", "stability_c",
];

struct Reader {
    errors: Vec<String>,
}

impl Reader {
    fn err(&mut self, path: &str, msg: impl Display) {
        self.errors.push(format!("{path}: {msg}"));
    }

    fn object<'v>(&mut self, v: &'v Value, path: &str, allowed: &[&str]) -> Option<&'v Map<String, Value>> {
        let Some(obj) = v.as_object() else {
            self.err(path, "expected an object");
            return None;
        };
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                self.err(&format!("{path}.{key}"), "unknown key");
            }
        }
        Some(obj)
    }

    fn required<'v>(&mut self, obj: &'v Map<String, Value>, key: &str, path: &str) -> Option<&'v Value> {
        let v = obj.get(key);
        if v.is_none() {
            self.err(&format!("{path}.{key}"), "missing required key");
        }
        v
    }

    fn number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.err(path, "expected a finite number");
                None
            }
        }
    }

    fn count(&mut self, v: &Value, path: &str) -> Option<u64> {
        let n = v.as_u64();
        if n.is_none() {
            self.err(path, "expected a nonnegative integer");
        }
        n
    }

    fn list<T>(&mut self, v: &Value, path: &str, mut item: impl FnMut(&mut Self, &Value, &str) -> Option<T>) -> Option<Vec<T>> {
        let Some(arr) = v.as_array() else {
            self.err(path, "expected an array");
            return None;
        };
        let before = self.errors.len();
        let out: Vec<Option<T>> = arr.iter().enumerate().map(|(i, x)| item(self, x, &format!("{path}[{i}]"))).collect();
        (self.errors.len() == before).then(|| out.into_iter().map(|x| x.expect("checked")).collect())
    }

    fn variant<T: for<'de> Deserialize<'de>>(&mut self, v: &Value, path: &str, choices: &str) -> Option<T> {
        let t = serde_json::from_value(v.clone()).ok();
        if t.is_none() {
            self.err(path, format!("expected one of {choices}"));
        }
        t
    }

    fn mode_ref(&mut self, v: &Value, path: &str) -> Option<ModeRef> {
        if v.is_array() {
            self.list(v, path, |r, x, p| r.count(x, p).map(|n| n as usize)).map(ModeRef::Index)
        } else {
            self.count(v, path).map(|n| ModeRef::Ordinal(n as usize))
        }
    }
}

/// Parse and validate a JSON config. Every problem is reported, each with its
/// key path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_as(text, None)
}

/// As [`parse_config`], with the experiment kind supplied from outside (the
/// `kind` key becomes optional and must agree if present).
pub fn parse_config_as(text: &str, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(vec![format!("$: {e}")]))?;
    let mut r = Reader { errors: Vec::new() };
    let Some(top) = r.object(&doc, "$", TOP_KEYS) else {
        return Err(Error::InvalidConfig(r.errors));
    };

    let kind = match (top.get("kind"), kind) {
        (Some(v), outer) => {
            let k = r.variant::<ExperimentKind>(
                v,
                "$.kind",
                "simulate, converge_dt, converge_m, identity_suite, uniqueness, monte_carlo",
            );
            if let (Some(k), Some(o)) = (k, outer) {
                if k != o {
                    r.err("$.kind", format!("config says {k:?} but {o:?} was requested"));
                }
            }
            k
        }
        (None, Some(o)) => Some(o),
        (None, None) => {
            r.err("$.kind", "missing required key");
            None
        }
    };

    let domain = r.required(top, "domain", "$").and_then(|v| {
        let obj = r.object(v, "$.domain", &["lengths", "grid_points"])?;
        let lengths = r.required(obj, "lengths", "$.domain").and_then(|v| r.list(v, "$.domain.lengths", Reader::number));
        let grid = r
            .required(obj, "grid_points", "$.domain")
            .and_then(|v| r.list(v, "$.domain.grid_points", |r, x, p| r.count(x, p).map(|n| n as usize)));
        Some(DomainConfig { lengths: lengths?, grid_points: grid? })
    });
    let modes = r.required(top, "modes", "$").and_then(|v| r.count(v, "$.modes"));
    let p = r.required(top, "p", "$").and_then(|v| r.number(v, "$.p"));
    let t_final = r.required(top, "T", "$").and_then(|v| r.number(v, "$.T"));
    let dt = r.required(top, "dt", "$").and_then(|v| r.number(v, "$.dt"));
    let m = r.required(top, "m", "$").and_then(|v| r.count(v, "$.m"));
    let dt_base = match top.get("dt_base") {
        Some(v) => r.number(v, "$.dt_base"),
        None => dt.map(|d| d / 16.0),
    };
    let scheme = top.get("scheme").map_or(Some(Scheme::EmIto), |v| r.variant(v, "$.scheme", "em_ito, heun_strat"));
    let truncation =
        top.get("truncation").map_or(Some(TruncationMode::Smoothed), |v| r.variant(v, "$.truncation", "smoothed, consistent"));
    let noise = top.get("noise").map_or(Some(Vec::new()), |v| {
        r.list(v, "$.noise", |r, x, path| {
            let obj = r.object(x, path, &["mode", "coeffs", "amplitude"])?;
            let amplitude = obj.get("amplitude").map_or(Some(1.0), |a| r.number(a, &format!("{path}.amplitude")));
            match (obj.get("mode"), obj.get("coeffs")) {
                (Some(mv), None) => {
                    Some(NoiseSpec::Mode { mode: r.mode_ref(mv, &format!("{path}.mode"))?, amplitude: amplitude? })
                }
                (None, Some(cv)) => Some(NoiseSpec::Coeffs {
                    coeffs: r.list(cv, &format!("{path}.coeffs"), Reader::number)?,
                    amplitude: amplitude?,
                }),
                _ => {
                    r.err(path, "exactly one of mode or coeffs is required");
                    None
                }
            }
        })
    });
    let u0 = top.get("u0").map_or(Some(vec![InitialTerm { mode: ModeRef::Ordinal(1), weight: 1.0 }]), |v| {
        r.list(v, "$.u0", |r, x, path| {
            let obj = r.object(x, path, &["mode", "weight"])?;
            let mode = r.required(obj, "mode", path).and_then(|mv| r.mode_ref(mv, &format!("{path}.mode")));
            let weight = obj.get("weight").map_or(Some(1.0), |w| r.number(w, &format!("{path}.weight")));
            Some(InitialTerm { mode: mode?, weight: weight? })
        })
    });
    let seed = top.get("seed").map_or(Some(0), |v| r.count(v, "$.seed"));
    let output_dir = match top.get("output_dir") {
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => {
            r.err("$.output_dir", "expected a string");
            None
        }
        None => Some(PathBuf::from("out")),
    };
    let mut count_or = |key: &str, default: u64| top.get(key).map_or(Some(default), |v| r.count(v, &format!("$.{key}")));
    let workers = count_or("workers", 1);
    let samples = count_or("samples", 1);
    let levels = count_or("levels", 3);
    let identity_fields = count_or("identity_fields", 100);
    let m_levels = top.get("m_levels").map_or_else(
        || m.map(|m| (m..m + 4).map(|k| k as u32).collect()),
        |v| r.list(v, "$.m_levels", |r, x, p| r.count(x, p).map(|n| n as u32)),
    );
    let perturbation = top.get("perturbation").map_or(Some(1e-3), |v| r.number(v, "$.perturbation"));
    let stability_c = top.get("stability_c").map_or(Some(1.0), |v| r.number(v, "$.stability_c"));

    let size = |x: Option<u64>| x.map(|n| n as usize);
    let cfg = (|| {
        Some(ExperimentConfig {
            kind: kind?,
            domain: domain?,
            modes: size(modes)?,
            p: p?,
            t_final: t_final?,
            dt: dt?,
            dt_base: dt_base?,
            m: m? as u32,
            scheme: scheme?,
            truncation: truncation?,
            noise: noise?,
            u0: u0?,
            seed: seed?,
            output_dir: output_dir?,
            workers: size(workers)?,
            samples: size(samples)?,
            levels: size(levels)?,
            m_levels: m_levels?,
            perturbation: perturbation?,
            identity_fields: size(identity_fields)?,
            stability_c: stability_c?,
        })
    })();
    // unknown keys leave every field readable, so invariants are still checked
    let mut problems = r.errors;
    if let Some(cfg) = &cfg {
        problems.extend(cfg.violations());
    }
    match cfg {
        Some(cfg) if problems.is_empty() => Ok(cfg),
        _ => Err(Error::InvalidConfig(problems)),
    }
}

/// The eigensystem, noise family and raw initial data a config describes.
pub struct Setup {
    pub es: EigenSystem,
    pub family: NoiseFamily,
    pub u0_raw: SpectralField,
}

fn resolve_mode(es: &EigenSystem, mode: &ModeRef) -> std::result::Result<usize, String> {
    match mode {
        ModeRef::Ordinal(k) if *k >= 1 && *k <= es.len() => Ok(k - 1),
        ModeRef::Ordinal(k) => Err(format!("mode {k} is outside 1..={}", es.len())),
        ModeRef::Index(idx) => {
            let zero_based: Vec<usize> = idx.iter().map(|&i| i.wrapping_sub(1)).collect();
            es.modes()
                .iter()
                .position(|m| m.index.iter().map(|&i| i - 1).eq(zero_based.iter().copied()))
                .ok_or_else(|| format!("mode {idx:?} is not among the first {} modes", es.len()))
        }
    }
}

impl ExperimentConfig {
    pub fn integrator(&self, m: u32, dt: f64, scheme: Scheme) -> IntegratorConfig {
        IntegratorConfig {
            scheme,
            dt,
            t_final: self.t_final,
            m,
            p: self.p,
            mode: self.truncation,
            stability_c: self.stability_c,
        }
    }

    fn sample_seed(&self, k: usize) -> u64 {
        self.seed.wrapping_add(k as u64)
    }

    /// Every invariant violation, each prefixed with its key path.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut err = |path: &str, msg: String| v.push(format!("{path}: {msg}"));
        if self.p < 2.0 {
            err("$.p", format!("p must be ≥ 2, got {}", self.p));
        }
        for (key, x) in [("T", self.t_final), ("dt", self.dt), ("dt_base", self.dt_base), ("stability_c", self.stability_c), ("perturbation", self.perturbation)] {
            if x <= 0.0 {
                err(&format!("$.{key}"), format!("must be positive, got {x}"));
            }
        }
        if self.dt > 0.0 && self.t_final > 0.0 && integral_ratio(self.t_final, self.dt).is_none() {
            err("$.dt", format!("dt = {} does not divide T = {}", self.dt, self.t_final));
        }
        if self.dt > 0.0 && self.dt_base > 0.0 && integral_ratio(self.dt, self.dt_base).is_none() {
            err("$.dt_base", format!("dt = {} is not an integer multiple of dt_base = {}", self.dt, self.dt_base));
        }
        if self.m == 0 {
            err("$.m", "Galerkin level m must be at least 1".into());
        }
        for (key, n) in [("modes", self.modes), ("workers", self.workers), ("samples", self.samples), ("identity_fields", self.identity_fields)] {
            if n == 0 {
                err(&format!("$.{key}"), "must be at least 1".into());
            }
        }
        if self.kind == ExperimentKind::ConvergeDt {
            if self.levels < 2 {
                err("$.levels", format!("need at least 2 levels, got {}", self.levels));
            } else if self.dt > 0.0
                && self.dt_base > 0.0
                && integral_ratio(self.dt / 2f64.powi(self.levels as i32), self.dt_base).is_none()
            {
                err("$.levels", format!("dt / 2^{} is not a multiple of dt_base = {}", self.levels, self.dt_base));
            }
        }
        if self.kind == ExperimentKind::ConvergeM && self.m_levels.is_empty() {
            err("$.m_levels", "must not be empty".into());
        }
        for (i, &m) in self.m_levels.iter().enumerate() {
            if m == 0 {
                err(&format!("$.m_levels[{i}]"), "Galerkin level must be at least 1".into());
            }
        }
        if self.u0.is_empty() {
            err("$.u0", "initial data must have at least one term".into());
        }
        for (i, s) in self.noise.iter().enumerate() {
            if let NoiseSpec::Coeffs { coeffs, .. } = s {
                if coeffs.len() > self.modes {
                    err(&format!("$.noise[{i}].coeffs"), format!("{} coefficients for {} modes", coeffs.len(), self.modes));
                }
            }
        }
        if !v.is_empty() {
            return v;
        }

        let domain = match DomainSpec::new(self.domain.lengths.clone(), self.domain.grid_points.clone()) {
            Ok(d) => d,
            Err(e) => return vec![format!("$.domain: {}", plain(e))],
        };
        let es = match build_eigensystem(&domain, self.modes) {
            Ok(es) => es,
            Err(e) => return vec![format!("$.domain.grid_points: {}", plain(e))],
        };
        let mut v = Vec::new();
        let levels: Vec<(String, u32)> = match self.kind {
            ExperimentKind::ConvergeM => {
                self.m_levels.iter().enumerate().map(|(i, &m)| (format!("$.m_levels[{i}]"), m + 2)).collect()
            }
            _ => vec![("$.dt".to_string(), self.m)],
        };
        for (path, m) in levels {
            if let Err(e) = self.integrator(m, self.dt, self.scheme).validate(&es) {
                v.push(format!("{path}: {}", plain(e)));
            }
        }
        for (i, s) in self.noise.iter().enumerate() {
            if let NoiseSpec::Mode { mode, .. } = s {
                if let Err(e) = resolve_mode(&es, mode) {
                    v.push(format!("$.noise[{i}].mode: {e}"));
                }
            }
        }
        for (i, t) in self.u0.iter().enumerate() {
            if let Err(e) = resolve_mode(&es, &t.mode) {
                v.push(format!("$.u0[{i}].mode: {e}"));
            }
        }
        if v.is_empty() {
            let setup = self.setup_unchecked(es);
            let ms: Vec<u32> = match self.kind {
                ExperimentKind::ConvergeM => self.m_levels.iter().flat_map(|&m| [m, m + 2]).collect(),
                _ => vec![self.m],
            };
            for m in ms {
                let band = GalerkinBand::new(&setup.es, m).expect("m ≥ 1 checked");
                if let Err(e) = normalize_initial(&setup.u0_raw, &band) {
                    v.push(format!("$.u0: {}", plain(e)));
                    break;
                }
            }
        }
        v
    }

    fn setup_unchecked(&self, es: EigenSystem) -> Setup {
        let channels = self
            .noise
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let f = match s {
                    NoiseSpec::Mode { mode, amplitude } => {
                        es.basis(resolve_mode(&es, mode).expect("validated")).scaled(*amplitude)
                    }
                    NoiseSpec::Coeffs { coeffs, amplitude } => {
                        let mut c = coeffs.clone();
                        c.resize(es.len(), 0.0);
                        SpectralField::new(c).scaled(*amplitude)
                    }
                };
                NoiseChannel { label: format!("noise[{i}]"), f }
            })
            .collect();
        let mut u0 = SpectralField::zeros(es.len());
        for t in &self.u0 {
            u0.axpy(t.weight, &es.basis(resolve_mode(&es, &t.mode).expect("validated")));
        }
        Setup { family: NoiseFamily::new(channels), u0_raw: u0, es }
    }

    pub fn setup(&self) -> Result<Setup> {
        let problems = self.violations();
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems));
        }
        let domain = DomainSpec::new(self.domain.lengths.clone(), self.domain.grid_points.clone())?;
        Ok(self.setup_unchecked(build_eigensystem(&domain, self.modes)?))
    }
}

fn plain(e: Error) -> String {
    match e {
        Error::Config(s) | Error::Contract(s) | Error::Numeric(s) => s,
        other => other.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), passed: value <= threshold, value, threshold }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), passed: value >= threshold, value, threshold }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub results: Value,
    /// Step index of the first divergence, if any run diverged.
    pub divergence: Option<usize>,
    /// Data files written before the summary.
    pub files: Vec<FileDigest>,
    /// Kept out of the JSON so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// A finished run: the summary plus file contents not yet written.
pub struct RunOutput {
    pub summary: RunSummary,
    pub files: Vec<(String, String)>,
}

const SERIES_HEADER: &str = "t,l2_sq,h1_sq,lp_p,lagrange,sphere_defect";

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// The standard time-series CSV.
pub fn series_csv(traj: &Trajectory) -> String {
    let defect = sphere_defect(traj);
    let mut s = String::from(SERIES_HEADER);
    s.push('\n');
    for ((t, r), d) in traj.times.iter().zip(&traj.records).zip(defect) {
        let row = [*t, r.l2_sq, r.h1_sq, r.lp_p, r.lagrange, d].map(fmt).join(",");
        s.push_str(&row);
        s.push('\n');
    }
    s
}

fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.iter().map(|&x| fmt(x)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Worst ratio `v[k+1] / v[k]`, the quantity a "strictly decreasing" check
/// compares with 1.
fn worst_step_ratio(v: &[f64]) -> f64 {
    v.windows(2).map(|w| w[1] / w[0]).fold(f64::NEG_INFINITY, f64::max)
}

/// Random field with coefficients uniform in `[-1, 1]`, damped by `1/(1+k)`.
pub fn random_field(rng: &mut ChaCha8Rng, len: usize) -> SpectralField {
    SpectralField::new((0..len).map(|k| rng.gen_range(-1.0..1.0) / (1.0 + k as f64)).collect())
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    setup: &'a Setup,
}

impl<'a> Context<'a> {
    fn system(&self, m: u32) -> Result<GalerkinSystem<'a>> {
        GalerkinSystem::new(&self.setup.es, &self.setup.family, m, self.cfg.p, self.cfg.truncation)
    }

    fn initial(&self, sys: &GalerkinSystem) -> Result<SpectralField> {
        normalize_initial(&self.setup.u0_raw, sys.band())
    }
}

struct KindOutput {
    results: Value,
    checks: Vec<Check>,
    files: Vec<(String, String)>,
    divergence: Option<usize>,
}

/// Run the experiment a validated config describes, without touching disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let setup = cfg.setup()?;
    let ctx = Context { cfg, setup: &setup };
    let out = match cfg.kind {
        ExperimentKind::Simulate => run_simulate(&ctx)?,
        ExperimentKind::ConvergeDt => run_converge_dt(&ctx)?,
        ExperimentKind::ConvergeM => run_converge_m(&ctx)?,
        ExperimentKind::IdentitySuite => run_identity_suite(&ctx)?,
        ExperimentKind::Uniqueness => run_uniqueness(&ctx)?,
        ExperimentKind::MonteCarlo => run_monte_carlo(&ctx)?,
    };
    let files = out.files;
    let summary = RunSummary {
        kind: cfg.kind,
        config: cfg.clone(),
        checks: out.checks,
        results: out.results,
        divergence: out.divergence,
        files: files.iter().map(|(n, c)| digest(n, c.as_bytes())).collect(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { summary, files })
}

/// A trajectory, or the partial one and the step at which it diverged.
fn simulate_or_partial(
    sys: &GalerkinSystem,
    icfg: &IntegratorConfig,
    path: &crate::galerkin::BrownianPath,
    u0: &SpectralField,
) -> Result<(Trajectory, Option<usize>)> {
    match simulate(sys, icfg, path, u0) {
        Ok(t) => Ok((t, None)),
        Err(Error::Divergence { step, partial }) => Ok((*partial, Some(step))),
        Err(e) => Err(e),
    }
}

fn divergence_check(divergence: Option<usize>) -> Check {
    Check::at_most("no_divergence", divergence.map_or(0.0, |s| s as f64), 0.0)
}

fn run_simulate(ctx: &Context) -> Result<KindOutput> {
    let cfg = ctx.cfg;
    let sys = ctx.system(cfg.m)?;
    let u0 = ctx.initial(&sys)?;
    let path = sample_brownian(ctx.setup.family.len(), cfg.t_final, cfg.dt_base, cfg.seed)?;
    let icfg = cfg.integrator(cfg.m, cfg.dt, cfg.scheme);
    let (traj, divergence) = simulate_or_partial(&sys, &icfg, &path, &u0)?;
    let mut checks = vec![divergence_check(divergence)];
    let mut results = Map::new();
    results.insert("steps".into(), json!(traj.len().saturating_sub(1)));
    results.insert("max_sphere_defect".into(), json!(max_sphere_defect(&traj)));
    if let Some(r) = traj.records.last() {
        results.insert("final".into(), serde_json::to_value(r)?);
    }
    if let Some(u) = traj.final_state() {
        let rc = radial_cancellation(u, &ctx.setup.family, cfg.p, &ctx.setup.es)?;
        let scale = rc.closed_form.abs().max(1.0);
        checks.push(Check::at_most("radial_cancellation", (rc.direct - rc.closed_form).abs() / scale, 1e-10));
        results.insert("radial_cancellation".into(), serde_json::to_value(rc)?);
    }
    results.insert("noise_summability".into(), serde_json::to_value(ctx.setup.family.summability(cfg.p, &ctx.setup.es)?)?);
    if divergence.is_none() {
        results.insert("lp_ito".into(), serde_json::to_value(lp_ito_residual(&sys, &traj, &path)?)?);
        results.insert("h1_ito".into(), serde_json::to_value(h1_ito_residual(&sys, &traj, &path)?)?);
        results.insert("energy".into(), serde_json::to_value(energy_series(&traj, cfg.p, &ctx.setup.es)?)?);
    }
    Ok(KindOutput {
        results: Value::Object(results),
        checks,
        files: vec![("trajectory.csv".into(), series_csv(&traj))],
        divergence,
    })
}

fn run_converge_dt(ctx: &Context) -> Result<KindOutput> {
    let cfg = ctx.cfg;
    let sys = ctx.system(cfg.m)?;
    let u0 = ctx.initial(&sys)?;
    let dts: Vec<f64> = (0..=cfg.levels).map(|j| cfg.dt / 2f64.powi(j as i32)).collect();
    let n = dts.len();
    let mut diff_sq = vec![0.0; n - 1];
    let mut lp_res = vec![Vec::new(); n];
    let mut h1_res = vec![Vec::new(); n];
    let mut defect = vec![0.0; n];
    let mut finest = None;
    for s in 0..cfg.samples {
        let path = sample_brownian(ctx.setup.family.len(), cfg.t_final, cfg.dt_base, cfg.sample_seed(s))?;
        let mut finals = Vec::with_capacity(n);
        for (j, &dt) in dts.iter().enumerate() {
            let traj = simulate(&sys, &cfg.integrator(cfg.m, dt, cfg.scheme), &path, &u0)?;
            lp_res[j].push(lp_ito_residual(&sys, &traj, &path)?.residual.abs());
            h1_res[j].push(h1_ito_residual(&sys, &traj, &path)?.residual.abs());
            defect[j] += max_sphere_defect(&traj) / cfg.samples as f64;
            finals.push(traj.final_state().expect("nonempty").clone());
            if s == 0 && j == n - 1 {
                finest = Some(traj);
            }
        }
        for j in 0..n - 1 {
            diff_sq[j] += finals[j].sub(&finals[j + 1]).norm_sq() / cfg.samples as f64;
        }
    }
    let strong: Vec<f64> = diff_sq.iter().map(|x| x.sqrt()).collect();
    let ratios: Vec<f64> = strong.windows(2).map(|w| w[0] / w[1]).collect();
    let lp_med: Vec<f64> = lp_res.into_iter().map(median).collect();
    let h1_med: Vec<f64> = h1_res.into_iter().map(median).collect();

    let mut checks: Vec<Check> =
        ratios.iter().enumerate().map(|(j, &r)| Check::at_least(format!("self_convergence_ratio[{j}]"), r, 1.3)).collect();
    checks.push(Check { passed: strictly_decreasing(&lp_med), ..Check::at_most("lp_residual_median_decreasing", worst_step_ratio(&lp_med), 1.0) });
    checks.push(Check { passed: strictly_decreasing(&h1_med), ..Check::at_most("h1_residual_median_decreasing", worst_step_ratio(&h1_med), 1.0) });

    let rows: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            vec![
                dts[j],
                strong.get(j).copied().unwrap_or(f64::NAN),
                if j >= 1 { ratios.get(j - 1).copied().unwrap_or(f64::NAN) } else { f64::NAN },
                lp_med[j],
                h1_med[j],
                defect[j],
            ]
        })
        .collect();
    let results = json!({
        "dt": dts,
        "strong_error": strong,
        "ratios": ratios,
        "lp_residual_median": lp_med,
        "h1_residual_median": h1_med,
        "mean_max_sphere_defect": defect,
    });
    let mut files = vec![(
        "convergence.csv".to_string(),
        table_csv(&["dt", "strong_error", "ratio", "lp_residual_median", "h1_residual_median", "mean_max_sphere_defect"], &rows),
    )];
    files.push(("trajectory.csv".into(), series_csv(&finest.expect("at least one sample"))));
    Ok(KindOutput { results, checks, files, divergence: None })
}

fn run_converge_m(ctx: &Context) -> Result<KindOutput> {
    let cfg = ctx.cfg;
    let mut table = Vec::new();
    let mut checks = Vec::new();
    let mut per_sample = Vec::new();
    for s in 0..cfg.samples {
        let path = sample_brownian(ctx.setup.family.len(), cfg.t_final, cfg.dt_base, cfg.sample_seed(s))?;
        let final_at = |m: u32| -> Result<SpectralField> {
            let sys = ctx.system(m)?;
            let u0 = ctx.initial(&sys)?;
            let traj = simulate(&sys, &cfg.integrator(m, cfg.dt, cfg.scheme), &path, &u0)?;
            Ok(traj.final_state().expect("nonempty").clone())
        };
        let mut d = Vec::with_capacity(cfg.m_levels.len());
        for &m in &cfg.m_levels {
            let gap = final_at(m)?.sub(&final_at(m + 2)?).norm();
            table.push(vec![cfg.sample_seed(s) as f64, m as f64, gap]);
            d.push(gap);
        }
        let worst = d.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check { passed: d.windows(2).all(|w| w[1] <= w[0]), ..Check::at_most(format!("nonincreasing[seed={}]", cfg.sample_seed(s)), worst, 0.0) });
        per_sample.push(d);
    }
    let results = json!({ "m_levels": cfg.m_levels, "distance_to_m_plus_2": per_sample });
    Ok(KindOutput {
        results,
        checks,
        files: vec![("galerkin.csv".into(), table_csv(&["seed", "m", "distance"], &table))],
        divergence: None,
    })
}

fn run_identity_suite(ctx: &Context) -> Result<KindOutput> {
    let cfg = ctx.cfg;
    let es = &ctx.setup.es;
    let p = cfg.p;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = [0.0f64; 9];
    let mut frechet: f64 = 0.0;
    let mut kappa_exp: f64 = 0.0;
    let mut radial: f64 = 0.0;
    let mut mono = f64::INFINITY;
    let mut lipschitz_margin = f64::INFINITY;
    let mut fields = Vec::with_capacity(cfg.identity_fields);
    for _ in 0..cfg.identity_fields {
        let f = random_field(&mut rng, es.len());
        let v = random_field(&mut rng, es.len()).scaled(rng.gen_range(0.1..3.0));
        let h = random_field(&mut rng, es.len());
        let w = random_field(&mut rng, es.len());
        let closed = pairing_suite(&f, &v, p, es)?;
        let direct = pairing_direct(&f, &v, p, es)?;
        for (k, w) in worst.iter_mut().enumerate() {
            let scale = closed.scales[k].max(direct.scales[k]).max(f64::MIN_POSITIVE);
            *w = w.max((closed.values[k] - direct.values[k]).abs() / scale);
        }
        let rem = n_apply(&f, &v.add(&h)).sub(&n_apply(&f, &v)).sub(&dn_apply(&f, &v, &h)).add(&h.scaled(f.dot(&h)));
        frechet = frechet.max(rem.norm());
        let mut expansion = f.scaled(-f.dot(&v));
        expansion.axpy(2.0 * f.dot(&v).powi(2) - f.norm_sq(), &v);
        kappa_exp = kappa_exp.max(kappa_apply(&f, &v).sub(&expansion).norm());
        let fam = NoiseFamily::new(vec![NoiseChannel { label: "f".into(), f: f.clone() }]);
        let rc = radial_cancellation(&v, &fam, p, es)?;
        radial = radial.max((rc.direct - rc.closed_form).abs() / rc.closed_form.abs().max(1.0));
        mono = mono.min(monotonicity_gap(&v, &w, p, es)?);
        let lr = lipschitz_report(&f, &v, &w, p, es)?;
        lipschitz_margin = lipschitz_margin.min(
            [lr.h1_bound - lr.h1_measured, lr.lp_bound - lr.lp_measured, lr.vp_bound - lr.vp_measured, lr.kappa_l2_bound - lr.kappa_l2_measured]
                .into_iter()
                .fold(f64::INFINITY, f64::min),
        );
        fields.push(v);
    }
    let mut checks: Vec<Check> =
        PAIRING_NAMES.iter().zip(worst).map(|(name, e)| Check::at_most(*name, e, 1e-8)).collect();
    checks.push(Check::at_most("frechet_remainder", frechet, 1e-12));
    checks.push(Check::at_most("kappa_expansion", kappa_exp, 1e-12));
    checks.push(Check::at_most("radial_cancellation", radial, 1e-10));
    checks.push(Check::at_least("monotonicity_gap", mono, -1e-8));
    checks.push(Check::at_least("lipschitz_margin", lipschitz_margin, -1e-8));

    // empirical L^p operator norm of S_k on the sampled fields; reported only
    let ratios: Vec<f64> = (0..=cfg.m)
        .map(|k| lp_norm_ratio(&SmoothedMultiplier::build(es, k), p, es, &fields))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = worst.iter().enumerate().map(|(k, &e)| vec![k as f64, e]).collect();
    let results = json!({
        "fields": cfg.identity_fields,
        "p": p,
        "pairings": PAIRING_NAMES.iter().zip(worst).map(|(n, e)| json!({"name": n, "max_rel_error": e})).collect::<Vec<_>>(),
        "frechet_remainder_max": frechet,
        "kappa_expansion_max": kappa_exp,
        "radial_cancellation_max_rel": radial,
        "monotonicity_gap_min": mono,
        "lipschitz_margin_min": lipschitz_margin,
        "multiplier_lp_ratio": ratios,
    });
    Ok(KindOutput {
        results,
        checks,
        files: vec![("identities.csv".into(), table_csv(&["identity", "max_rel_error"], &rows))],
        divergence: None,
    })
}

fn run_uniqueness(ctx: &Context) -> Result<KindOutput> {
    let cfg = ctx.cfg;
    let sys = ctx.system(cfg.m)?;
    let u0 = ctx.initial(&sys)?;
    let icfg = cfg.integrator(cfg.m, cfg.dt, cfg.scheme);
    let mut checks = Vec::new();
    let mut summaries = Vec::new();
    let mut files = Vec::new();
    for s in 0..cfg.samples {
        let seed = cfg.sample_seed(s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let delta = sys.band().project(&random_field(&mut rng, ctx.setup.es.len()));
        let delta = delta.scaled(cfg.perturbation / delta.norm().max(f64::MIN_POSITIVE));
        let u1 = normalize_initial(&u0.add(&delta), sys.band())?;
        let path = sample_brownian(ctx.setup.family.len(), cfg.t_final, cfg.dt_base, seed)?;
        let a = simulate(&sys, &icfg, &path, &u0)?;
        let b = simulate(&sys, &icfg, &path, &u1)?;
        let r = uniqueness_monitor(&a, &b, &ctx.setup.family, cfg.p)?;
        checks.push(Check::at_most(format!("terminal_le_initial[seed={seed}]"), r.terminal(), r.initial()));
        checks.push(Check::at_most(format!("max_uptick[seed={seed}]"), r.max_uptick, 1e-2 * r.initial()));
        summaries.push(json!({
            "seed": seed,
            "initial": r.initial(),
            "terminal": r.terminal(),
            "max_uptick": r.max_uptick,
            "rho_final": r.rho.last(),
        }));
        if s == 0 {
            let rows: Vec<Vec<f64>> =
                (0..r.times.len()).map(|k| vec![r.times[k], r.rho[k], r.weighted_dist[k]]).collect();
            files.push(("uniqueness.csv".into(), table_csv(&["t", "rho", "weighted_dist"], &rows)));
            files.push(("trajectory.csv".into(), series_csv(&a)));
        }
    }
    Ok(KindOutput { results: json!({ "samples": summaries }), checks, files, divergence: None })
}

struct SampleOutcome {
    seed: u64,
    traj: Trajectory,
    divergence: Option<usize>,
    energy: Option<EnergySeries>,
}

fn run_monte_carlo(ctx: &Context) -> Result<KindOutput> {
    let cfg = ctx.cfg;
    let sys = ctx.system(cfg.m)?;
    let u0 = ctx.initial(&sys)?;
    let icfg = cfg.integrator(cfg.m, cfg.dt, cfg.scheme);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let outcomes: Vec<Result<SampleOutcome>> = pool.install(|| {
        (0..cfg.samples)
            .into_par_iter()
            .map(|s| {
                let seed = cfg.sample_seed(s);
                let path = sample_brownian(ctx.setup.family.len(), cfg.t_final, cfg.dt_base, seed)?;
                let (traj, divergence) = simulate_or_partial(&sys, &icfg, &path, &u0)?;
                let energy = match divergence {
                    None => Some(energy_series(&traj, cfg.p, &ctx.setup.es)?),
                    Some(_) => None,
                };
                Ok(SampleOutcome { seed, traj, divergence, energy })
            })
            .collect()
    });
    let outcomes: Vec<SampleOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let divergence = outcomes.iter().filter_map(|o| o.divergence).min();
    let finished: Vec<&SampleOutcome> = outcomes.iter().filter(|o| o.divergence.is_none()).collect();
    let energies: Vec<EnergySeries> = finished.iter().filter_map(|o| o.energy).collect();
    let rows: Vec<Vec<f64>> = outcomes
        .iter()
        .map(|o| {
            let e = o.energy.unwrap_or(EnergySeries {
                sup_energy: f64::NAN,
                laplacian_integral: f64::NAN,
                nonlinear_integral: f64::NAN,
                weighted_gradient_integral: f64::NAN,
            });
            vec![
                o.seed as f64,
                max_sphere_defect(&o.traj),
                e.sup_energy,
                e.laplacian_integral,
                e.nonlinear_integral,
                e.weighted_gradient_integral,
                o.divergence.map_or(f64::NAN, |s| s as f64),
            ]
        })
        .collect();

    let mean_traj = finished.first().map(|first| {
        let mut mean = Trajectory { states: Vec::new(), ..first.traj.clone() };
        let k = finished.len() as f64;
        for (i, r) in mean.records.iter_mut().enumerate() {
            let avg = |f: fn(&crate::galerkin::Functionals) -> f64| finished.iter().map(|o| f(&o.traj.records[i])).sum::<f64>() / k;
            r.l2_sq = avg(|x| x.l2_sq);
            r.h1_sq = avg(|x| x.h1_sq);
            r.lp_p = avg(|x| x.lp_p);
            r.lagrange = avg(|x| x.lagrange);
        }
        mean
    });

    let full = mean_energy(&energies);
    let half = mean_energy(&energies[..energies.len().div_ceil(2)]);
    let mut checks = vec![divergence_check(divergence)];
    let all_finite = energies.iter().all(|e| {
        [e.sup_energy, e.laplacian_integral, e.nonlinear_integral, e.weighted_gradient_integral].iter().all(|x| x.is_finite())
    });
    checks.push(Check { passed: all_finite, ..Check::at_most("energy_finite", if all_finite { 0.0 } else { 1.0 }, 0.0) });
    if energies.len() >= 2 {
        checks.push(Check::at_most("sup_energy_mean_stability", (full.sup_energy / half.sup_energy - 1.0).abs(), 0.2));
    }
    let results = json!({
        "samples": cfg.samples,
        "workers": cfg.workers,
        "diverged": outcomes.len() - finished.len(),
        "energy_mean": full,
        "energy_mean_first_half": half,
        "max_sphere_defect_mean": finished.iter().map(|o| max_sphere_defect(&o.traj)).sum::<f64>() / finished.len().max(1) as f64,
    });
    let header = [
        "seed", "max_sphere_defect", "sup_energy", "laplacian_integral", "nonlinear_integral",
        "weighted_gradient_integral", "diverged_step",
    ];
    let empty = Trajectory { dt: cfg.dt, scheme: cfg.scheme, times: vec![], states: vec![], records: vec![] };
    Ok(KindOutput {
        results,
        checks,
        files: vec![
            ("monte_carlo.csv".into(), table_csv(&header, &rows)),
            ("trajectory.csv".into(), series_csv(mean_traj.as_ref().unwrap_or(&empty))),
        ],
        divergence,
    })
}

fn digest(name: &str, bytes: &[u8]) -> FileDigest {
    FileDigest { path: name.to_string(), bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(bytes)) }
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> Result<FileDigest> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| Error::Io { path, source })?;
    Ok(digest(name, contents))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<FileDigest>,
}

/// Write the data files, `summary.json` and `manifest.json` into `dir`.
pub fn emit_outputs(output: &RunOutput, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let mut files = Vec::with_capacity(output.files.len() + 1);
    for (name, contents) in &output.files {
        files.push(write(dir, name, contents.as_bytes())?);
    }
    let mut summary = serde_json::to_string_pretty(&output.summary)?;
    summary.push('\n');
    files.push(write(dir, "summary.json", summary.as_bytes())?);
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest { files };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write(dir, "manifest.json", text.as_bytes())?;
    Ok(manifest)
}

/// Recompute every digest listed in `dir/manifest.json`; returns the
/// mismatches, empty when the directory is intact.
pub fn verify_outputs(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|source| Error::Io { path, source })?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let mut problems = Vec::new();
    for entry in &manifest.files {
        match fs::read(dir.join(&entry.path)) {
            Ok(bytes) => {
                let got = digest(&entry.path, &bytes);
                if got != *entry {
                    problems.push(format!("{}: digest mismatch", entry.path));
                }
            }
            Err(e) => problems.push(format!("{}: {e}", entry.path)),
        }
    }
    Ok(problems)
}

/// Parse, run and write in one go; the config's `output_dir` is used unless
/// `out` is given.
pub fn execute(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(RunSummary, Manifest)> {
    let output = run_experiment(cfg)?;
    let dir = out.map_or_else(|| cfg.output_dir.clone(), Path::to_path_buf);
    let manifest = emit_outputs(&output, &dir)?;
    Ok((output.summary, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "kind": "simulate",
        "domain": {"lengths": [3.141592653589793], "grid_points": [34]},
        "modes": 16, "p": 2, "T": 0.5, "dt": 0.01, "m": 3
    }"#;

    fn with(extra: &str) -> String {
        MINIMAL.trim_end().trim_end_matches('}').to_string() + "," + extra + "}"
    }

    fn violations(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::InvalidConfig(v)) => v,
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.scheme, Scheme::EmIto);
        assert_eq!(cfg.truncation, TruncationMode::Smoothed);
        assert_eq!(cfg.dt_base, 0.01 / 16.0);
        assert_eq!(cfg.u0, vec![InitialTerm { mode: ModeRef::Ordinal(1), weight: 1.0 }]);
        assert!(cfg.noise.is_empty());
        assert_eq!(cfg.m_levels, vec![3, 4, 5, 6]);
    }

    #[test]
    fn rejections_name_their_keys() {
        let v = violations(&MINIMAL.replace("\"p\": 2", "\"p\": 1.5"));
        assert!(v.iter().any(|e| e.starts_with("$.p") && e.contains("p must be ≥ 2")), "{v:?}");

        let v = violations(&with(r#""dt_base": 0.003"#));
        assert!(v.iter().any(|e| e.starts_with("$.dt_base")), "{v:?}");

        let v = violations(&with(r#""colour": 1, "domain_x": 2"#));
        assert!(v.contains(&"$.colour: unknown key".to_string()) && v.len() == 2, "{v:?}");

        let v = violations(&with(r#""noise": [{"mode": 40}, {"mode": 1, "coeffs": [1]}], "scheme": "rk4""#));
        assert!(v.iter().any(|e| e.starts_with("$.noise[1]")), "{v:?}");
        assert!(v.iter().any(|e| e.starts_with("$.scheme")), "{v:?}");

        let v = violations(&with(r#""noise": [{"mode": 40}]"#));
        assert!(v.iter().any(|e| e.starts_with("$.noise[0].mode")), "{v:?}");

        let v = violations(&MINIMAL.replace("\"dt\": 0.01", "\"dt\": 0.5"));
        assert!(v.iter().any(|e| e.starts_with("$.dt") && e.contains("λ_max")), "{v:?}");

        let v = violations(&MINIMAL.replace("[34]", "[20]"));
        assert!(v.iter().any(|e| e.starts_with("$.domain.grid_points")), "{v:?}");

        let v = violations(&with(r#""u0": [{"mode": 12}]"#));
        assert!(v.iter().any(|e| e.starts_with("$.u0")), "{v:?}");

        let v = violations(r#"{"domain": {"lengths": [1.0]}}"#);
        for key in ["$.kind", "$.domain.grid_points", "$.modes", "$.p", "$.T", "$.dt", "$.m"] {
            assert!(v.iter().any(|e| e.starts_with(key)), "{key}: {v:?}");
        }
    }

    #[test]
    fn two_dimensional_mode_indices() {
        let text = r#"{
            "kind": "simulate",
            "domain": {"lengths": [3.141592653589793, 3.141592653589793], "grid_points": [16, 16]},
            "modes": 12, "p": 4, "T": 0.05, "dt": 0.005, "m": 3,
            "u0": [{"mode": [1, 1]}, {"mode": [1, 2], "weight": 0.5}],
            "noise": [{"mode": [2, 1], "amplitude": 0.1}]
        }"#;
        let cfg = parse_config(text).unwrap();
        let setup = cfg.setup().unwrap();
        assert_eq!(setup.es.modes()[1].index, vec![1, 2]);
        assert_eq!(setup.u0_raw.coeffs()[..3], [1.0, 0.5, 0.0]);
        assert_eq!(setup.family.channels()[0].f.coeffs()[2], 0.1);
    }

    #[test]
    fn stationary_simulation_has_no_defect() {
        let cfg = parse_config(MINIMAL).unwrap();
        let out = run_experiment(&cfg).unwrap();
        assert!(out.summary.passed());
        let csv = &out.files.iter().find(|(n, _)| n == "trajectory.csv").unwrap().1;
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(SERIES_HEADER));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 51);
        for row in rows {
            let defect: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
            assert!(defect <= 1e-12);
        }
    }

    #[test]
    fn csv_formatting() {
        let empty = Trajectory { dt: 0.1, scheme: Scheme::EmIto, times: vec![], states: vec![], records: vec![] };
        assert_eq!(series_csv(&empty), format!("{SERIES_HEADER}\n"));
        assert_eq!(fmt(0.1), "1.0000000000000001e-1");
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn identity_suite_passes() {
        let cfg = parse_config(&with(r#""kind": "identity_suite", "identity_fields": 10, "p": 4"#).replace("\"kind\": \"simulate\",", "").replace("\"p\": 2,", "")).unwrap();
        let out = run_experiment(&cfg).unwrap();
        assert!(out.summary.passed(), "{:?}", out.summary.checks);
        assert_eq!(out.summary.checks.iter().filter(|c| PAIRING_NAMES.contains(&c.name.as_str())).count(), 9);
    }

    #[test]
    fn kind_strings() {
        assert_eq!("converge-dt".parse::<ExperimentKind>().unwrap(), ExperimentKind::ConvergeDt);
        assert_eq!("monte_carlo".parse::<ExperimentKind>().unwrap(), ExperimentKind::MonteCarlo);
        assert!("plot".parse::<ExperimentKind>().is_err());
        let v = match parse_config_as(MINIMAL, Some(ExperimentKind::Uniqueness)) {
            Err(Error::InvalidConfig(v)) => v,
            other => panic!("{other:?}"),
        };
        assert!(v[0].starts_with("$.kind"));
    }
}
