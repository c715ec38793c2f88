//! Brownian paths and explicit time stepping of the level-`m` Galerkin system
//!
//! ```text
//! du = P_m G(u) dt + ½ Σ κ_i^m(u) dt + Σ σ_i(u) dW_i
//! ```
//!
//! in Itô form (Euler–Maruyama) or in Stratonovich form (Heun).

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::{drift_g, lagrange_coefficient, GalerkinBand};
use crate::error::{contract, Error, Result};
use crate::noise::{truncated_noise, truncated_self_derivative, NoiseFamily, TruncatedNoise, TruncationMode};
use crate::spectral::{lp_norm_pow, norm_h1_sq, EigenSystem, SpectralField};

/// States whose L² norm exceeds this are treated as divergent.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// `a / b` as an integer, if it is one up to round-off.
pub fn integral_ratio(a: f64, b: f64) -> Option<usize> {
    if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
        return None;
    }
    let r = a / b;
    let n = r.round();
    ((r - n).abs() <= 1e-9 * n.max(1.0) && n >= 1.0).then_some(n as usize)
}

const WORDS_PER_SAMPLE: u128 = 4;

fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = unit_open(rng.next_u64());
    let u2 = unit_open(rng.next_u64());
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Standard normal draw keyed by `(seed, channel, step)`. Every draw consumes
/// a fixed number of generator words, so any entry can be recomputed on its
/// own.
pub fn normal_at(seed: u64, channel: usize, step: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(channel as u64);
    rng.set_word_pos(WORDS_PER_SAMPLE * step as u128);
    standard_normal(&mut rng)
}

/// Brownian increments on a uniform grid, stored step-major (`steps × M`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    dt_base: f64,
    steps: usize,
    channels: usize,
    seed: u64,
    increments: Vec<f64>,
}

pub fn sample_brownian(channels: usize, t_final: f64, dt_base: f64, seed: u64) -> Result<BrownianPath> {
    let steps = integral_ratio(t_final, dt_base).ok_or_else(|| {
        Error::Config(format!("T = {t_final} is not an integer multiple of dt_base = {dt_base}"))
    })?;
    let scale = dt_base.sqrt();
    let mut increments = vec![0.0; steps * channels];
    for c in 0..channels {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        for k in 0..steps {
            increments[k * channels + c] = scale * standard_normal(&mut rng);
        }
    }
    Ok(BrownianPath { dt_base, steps, channels, seed, increments })
}

impl BrownianPath {
    pub fn dt(&self) -> f64 {
        self.dt_base
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn t_final(&self) -> f64 {
        self.steps as f64 * self.dt_base
    }

    /// Increments `ΔW_1..ΔW_M` of step `k`.
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.channels..(k + 1) * self.channels]
    }

    /// `W_c` at every grid time, starting from 0.
    pub fn cumulative(&self, channel: usize) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.steps + 1);
        let mut acc = 0.0;
        w.push(acc);
        for k in 0..self.steps {
            acc += self.increment(k)[channel];
            w.push(acc);
        }
        w
    }

    pub fn coarsen(&self, factor: usize) -> Result<BrownianPath> {
        contract(factor >= 1 && self.steps.is_multiple_of(factor), || {
            format!("coarsening factor {factor} does not divide {} steps", self.steps)
        })?;
        let steps = self.steps / factor;
        let m = self.channels;
        let mut increments = vec![0.0; steps * m];
        for k in 0..steps {
            for j in 0..factor {
                let src = self.increment(k * factor + j);
                for (dst, s) in increments[k * m..(k + 1) * m].iter_mut().zip(src) {
                    *dst += s;
                }
            }
        }
        Ok(BrownianPath { dt_base: self.dt_base * factor as f64, steps, channels: m, seed: self.seed, increments })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler–Maruyama on the Itô form.
    #[default]
    EmIto,
    /// Heun predictor–corrector on the Stratonovich form.
    HeunStrat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_final: f64,
    pub m: u32,
    pub p: f64,
    pub mode: TruncationMode,
    /// Explicit stability constant: `dt · λ_max(P_m) ≤ stability_c`.
    pub stability_c: f64,
}

impl IntegratorConfig {
    pub fn steps(&self) -> Result<usize> {
        integral_ratio(self.t_final, self.dt)
            .ok_or_else(|| Error::Config(format!("dt = {} does not divide T = {}", self.dt, self.t_final)))
    }

    pub fn validate(&self, es: &EigenSystem) -> Result<()> {
        crate::spectral::check_exponent(self.p)?;
        if self.m == 0 {
            return Err(Error::Config("Galerkin level m must be at least 1".into()));
        }
        self.steps()?;
        let band = GalerkinBand::new(es, self.m)?;
        let lam = band.max_eigenvalue(es);
        if self.dt * lam > self.stability_c {
            return Err(Error::Config(format!(
                "dt = {} violates dt·λ_max ≤ {} (λ_max = {lam} in the P_{} band)",
                self.dt, self.stability_c, self.m
            )));
        }
        Ok(())
    }
}

/// The truncated drift and noise of one Galerkin level.
#[derive(Clone, Debug)]
pub struct GalerkinSystem<'a> {
    es: &'a EigenSystem,
    family: &'a NoiseFamily,
    band: GalerkinBand,
    p: f64,
    mode: TruncationMode,
}

impl<'a> GalerkinSystem<'a> {
    pub fn new(es: &'a EigenSystem, family: &'a NoiseFamily, m: u32, p: f64, mode: TruncationMode) -> Result<Self> {
        crate::spectral::check_exponent(p)?;
        for ch in family.channels() {
            contract(ch.f.len() == es.len() && ch.f.is_finite(), || {
                format!("noise channel {} must be finite with {} coefficients", ch.label, es.len())
            })?;
        }
        Ok(Self { es, family, band: GalerkinBand::new(es, m)?, p, mode })
    }

    pub fn eigensystem(&self) -> &'a EigenSystem {
        self.es
    }

    pub fn family(&self) -> &'a NoiseFamily {
        self.family
    }

    pub fn band(&self) -> &GalerkinBand {
        &self.band
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn mode(&self) -> TruncationMode {
        self.mode
    }

    /// `−λu − P_m C(u) + Λ(u) u`
    pub fn deterministic_drift(&self, u: &SpectralField) -> Result<SpectralField> {
        self.band.check_contains(u)?;
        Ok(self.band.project(&drift_g(u, self.p, self.es)?))
    }

    pub fn noise(&self, u: &SpectralField) -> Result<Vec<TruncatedNoise>> {
        self.family
            .channels()
            .iter()
            .map(|ch| truncated_noise(&ch.f, u, &self.band, self.mode))
            .collect()
    }

    fn ito_from(&self, u: &SpectralField, noise: &[TruncatedNoise]) -> Result<SpectralField> {
        let mut b = self.deterministic_drift(u)?;
        for n in noise {
            b.axpy(0.5, &n.kappa);
        }
        Ok(b)
    }

    pub fn ito_drift(&self, u: &SpectralField) -> Result<SpectralField> {
        let noise = self.noise(u)?;
        self.ito_from(u, &noise)
    }

    fn strat_from(&self, u: &SpectralField, noise: &[TruncatedNoise]) -> Result<SpectralField> {
        let mut b = self.ito_from(u, noise)?;
        for (ch, n) in self.family.channels().iter().zip(noise) {
            let d = truncated_self_derivative(&ch.f, u, &n.sigma, &self.band, self.mode);
            b.axpy(-0.5, &d);
        }
        Ok(b)
    }

    /// Drift of the Stratonovich form with the same solution as the Itô form.
    /// In consistent mode the correction cancels the κ-term exactly, leaving
    /// `P_m G(u)`.
    pub fn strat_drift(&self, u: &SpectralField) -> Result<SpectralField> {
        let noise = self.noise(u)?;
        self.strat_from(u, &noise)
    }

    pub fn step_em_ito(&self, u: &SpectralField, dw: &[f64], dt: f64) -> Result<SpectralField> {
        self.check_increments(dw)?;
        let noise = self.noise(u)?;
        let mut next = u.clone();
        next.axpy(dt, &self.ito_from(u, &noise)?);
        for (n, w) in noise.iter().zip(dw) {
            next.axpy(*w, &n.sigma);
        }
        Ok(next)
    }

    pub fn step_heun_strat(&self, u: &SpectralField, dw: &[f64], dt: f64) -> Result<SpectralField> {
        self.check_increments(dw)?;
        let noise0 = self.noise(u)?;
        let b0 = self.strat_from(u, &noise0)?;
        let mut pred = u.clone();
        pred.axpy(dt, &b0);
        for (n, w) in noise0.iter().zip(dw) {
            pred.axpy(*w, &n.sigma);
        }
        if !pred.is_finite() {
            return Ok(pred);
        }
        let noise1 = self.noise(&pred)?;
        let b1 = self.strat_from(&pred, &noise1)?;
        let mut next = u.clone();
        next.axpy(0.5 * dt, &b0);
        next.axpy(0.5 * dt, &b1);
        for ((n0, n1), w) in noise0.iter().zip(&noise1).zip(dw) {
            next.axpy(0.5 * w, &n0.sigma);
            next.axpy(0.5 * w, &n1.sigma);
        }
        Ok(next)
    }

    pub fn step(&self, scheme: Scheme, u: &SpectralField, dw: &[f64], dt: f64) -> Result<SpectralField> {
        match scheme {
            Scheme::EmIto => self.step_em_ito(u, dw, dt),
            Scheme::HeunStrat => self.step_heun_strat(u, dw, dt),
        }
    }

    fn check_increments(&self, dw: &[f64]) -> Result<()> {
        contract(dw.len() == self.family.len(), || {
            format!("{} increments for {} noise channels", dw.len(), self.family.len())
        })
    }

    pub fn functionals(&self, u: &SpectralField) -> Result<Functionals> {
        Ok(Functionals {
            l2_sq: u.norm_sq(),
            h1_sq: norm_h1_sq(u, self.es)?,
            lp_p: lp_norm_pow(u, self.p, self.es)?,
            lagrange: lagrange_coefficient(u, self.p, self.es)?,
        })
    }
}

/// `S_{m-1} u0 / ‖S_{m-1} u0‖`
pub fn normalize_initial(u0: &SpectralField, band: &GalerkinBand) -> Result<SpectralField> {
    let s = band.smooth(u0);
    let n = s.norm();
    if !(n > 1e-300 && n.is_finite()) {
        return Err(Error::Config(format!("initial data vanishes after S_{} smoothing", band.level() - 1)));
    }
    Ok(band.project(&s).scaled(1.0 / n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub l2_sq: f64,
    pub h1_sq: f64,
    pub lp_p: f64,
    pub lagrange: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub scheme: Scheme,
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
    pub records: Vec<Functionals>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&SpectralField> {
        self.states.last()
    }
}

/// March `u0` to `cfg.t_final` on `path`, coarsened to `cfg.dt`.
pub fn simulate(
    sys: &GalerkinSystem,
    cfg: &IntegratorConfig,
    path: &BrownianPath,
    u0: &SpectralField,
) -> Result<Trajectory> {
    cfg.validate(sys.es)?;
    contract(sys.p == cfg.p && sys.mode == cfg.mode && sys.band.level() == cfg.m, || {
        "integrator config does not match the Galerkin system".into()
    })?;
    contract(path.channels() == sys.family.len(), || {
        format!("path has {} channels, noise family has {}", path.channels(), sys.family.len())
    })?;
    let steps = cfg.steps()?;
    let factor = integral_ratio(cfg.dt, path.dt())
        .ok_or_else(|| Error::Config(format!("dt = {} is not a multiple of dt_base = {}", cfg.dt, path.dt())))?;
    let path = path.coarsen(factor)?;
    contract(path.steps() >= steps, || format!("path has {} steps, run needs {steps}", path.steps()))?;
    sys.band.check_contains(u0)?;

    let mut traj = Trajectory {
        dt: cfg.dt,
        scheme: cfg.scheme,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        records: Vec::with_capacity(steps + 1),
    };
    let mut u = u0.clone();
    traj.times.push(0.0);
    traj.records.push(sys.functionals(&u)?);
    traj.states.push(u.clone());
    for k in 0..steps {
        let next = sys.step(cfg.scheme, &u, path.increment(k), cfg.dt)?;
        if !next.is_finite() || next.norm() > DIVERGENCE_NORM {
            return Err(Error::Divergence { step: k + 1, partial: Box::new(traj) });
        }
        u = next;
        traj.times.push((k + 1) as f64 * cfg.dt);
        traj.records.push(sys.functionals(&u)?);
        traj.states.push(u.clone());
    }
    Ok(traj)
}
