//! Browser bindings for a handful of `sphere-heat` operations on the interval
//! `(0, π)`. Each export returns a JSON string for the page to plot.

use std::f64::consts::PI;

use serde::Serialize;
use sphere_heat::constraint::{projector_mask, SmoothedMultiplier};
use sphere_heat::diagnostics::sphere_defect;
use sphere_heat::galerkin::{normalize_initial, sample_brownian, simulate, GalerkinSystem, IntegratorConfig, Scheme};
use sphere_heat::noise::{NoiseChannel, NoiseFamily, TruncationMode};
use sphere_heat::spectral::{build_eigensystem, synthesize_closed, DomainSpec, EigenSystem, SpectralField};
use wasm_bindgen::prelude::*;

const MODES: usize = 32;
const GRID: usize = 64;

fn eigensystem() -> Result<EigenSystem, String> {
    let domain = DomainSpec::interval(PI, GRID).map_err(|e| e.to_string())?;
    build_eigensystem(&domain, MODES).map_err(|e| e.to_string())
}

fn scheme(name: &str) -> Result<Scheme, String> {
    match name {
        "em_ito" => Ok(Scheme::EmIto),
        "heun_strat" => Ok(Scheme::HeunStrat),
        other => Err(format!("unknown scheme {other:?}")),
    }
}

fn truncation(name: &str) -> Result<TruncationMode, String> {
    match name {
        "smoothed" => Ok(TruncationMode::Smoothed),
        "consistent" => Ok(TruncationMode::Consistent),
        other => Err(format!("unknown truncation {other:?}")),
    }
}

/// Noise on the second and third modes, initial data `e_1 + e_2/2`.
fn setup(es: &EigenSystem, amplitude: f64) -> (NoiseFamily, SpectralField) {
    let family = NoiseFamily::new(
        [1, 2].iter().map(|&k| NoiseChannel { label: format!("e{}", k + 1), f: es.basis(k).scaled(amplitude) }).collect(),
    );
    (family, es.basis(0).add(&es.basis(1).scaled(0.5)))
}

#[derive(Debug, Serialize)]
pub struct MultiplierCurve {
    pub level: u32,
    pub eigenvalues: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub sharp: Vec<f64>,
}

/// `S_m` and `P_m` multiplier values at the first eigenvalues.
pub fn multiplier_curve(level: u32) -> Result<MultiplierCurve, String> {
    if level > 10 {
        return Err(format!("level must be at most 10, got {level}"));
    }
    let es = eigensystem()?;
    Ok(MultiplierCurve {
        level,
        eigenvalues: es.eigenvalues().collect(),
        smoothed: SmoothedMultiplier::build(&es, level).values().to_vec(),
        sharp: projector_mask(level, &es).iter().map(|&k| f64::from(u8::from(k))).collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct RunResult {
    pub x: Vec<f64>,
    pub initial: Vec<f64>,
    pub last: Vec<f64>,
    pub times: Vec<f64>,
    pub sphere_defect: Vec<f64>,
    pub lagrange: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunParams {
    pub p: f64,
    pub amplitude: f64,
    pub m: u32,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub mode: TruncationMode,
    pub seed: u64,
}

fn profile(u: &SpectralField, es: &EigenSystem) -> Result<Vec<f64>, String> {
    Ok(synthesize_closed(u, es).map_err(|e| e.to_string())?.values().to_vec())
}

/// One trajectory; profiles on the closed grid including the boundary.
pub fn run(params: &RunParams) -> Result<RunResult, String> {
    let es = eigensystem()?;
    let (family, raw) = setup(&es, params.amplitude);
    let sys = GalerkinSystem::new(&es, &family, params.m, params.p, params.mode).map_err(|e| e.to_string())?;
    let u0 = normalize_initial(&raw, sys.band()).map_err(|e| e.to_string())?;
    let cfg = IntegratorConfig {
        scheme: params.scheme,
        dt: params.dt,
        t_final: params.t_final,
        m: params.m,
        p: params.p,
        mode: params.mode,
        stability_c: 1.0,
    };
    cfg.validate(&es).map_err(|e| e.to_string())?;
    let path = sample_brownian(family.len(), params.t_final, params.dt, params.seed).map_err(|e| e.to_string())?;
    let traj = simulate(&sys, &cfg, &path, &u0).map_err(|e| e.to_string())?;
    let h = PI / (GRID + 1) as f64;
    Ok(RunResult {
        x: (0..GRID + 2).map(|j| j as f64 * h).collect(),
        initial: profile(&u0, &es)?,
        last: profile(traj.final_state().expect("nonempty"), &es)?,
        times: traj.times.clone(),
        sphere_defect: sphere_defect(&traj),
        lagrange: traj.records.iter().map(|r| r.lagrange).collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct SweepResult {
    pub dt: Vec<f64>,
    pub em_ito: Vec<f64>,
    pub heun_strat: Vec<f64>,
}

/// Largest sphere defect over `[0, 1]` for both schemes, all step sizes
/// driven by one Brownian path.
pub fn dt_sweep(amplitude: f64, mode: TruncationMode, seed: u64) -> Result<SweepResult, String> {
    let es = eigensystem()?;
    let (family, raw) = setup(&es, amplitude);
    let (m, p, t_final) = (4, 4.0, 1.0);
    let sys = GalerkinSystem::new(&es, &family, m, p, mode).map_err(|e| e.to_string())?;
    let u0 = normalize_initial(&raw, sys.band()).map_err(|e| e.to_string())?;
    let dts = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0, 1.0 / 512.0, 1.0 / 1024.0];
    let path = sample_brownian(family.len(), t_final, dts[dts.len() - 1], seed).map_err(|e| e.to_string())?;
    let defects = |scheme: Scheme| -> Result<Vec<f64>, String> {
        dts.iter()
            .map(|&dt| {
                let cfg = IntegratorConfig { scheme, dt, t_final, m, p, mode, stability_c: 1.0 };
                let traj = simulate(&sys, &cfg, &path, &u0).map_err(|e| e.to_string())?;
                Ok(sphere_defect(&traj).into_iter().fold(0.0, f64::max))
            })
            .collect()
    };
    Ok(SweepResult { dt: dts.to_vec(), em_ito: defects(Scheme::EmIto)?, heun_strat: defects(Scheme::HeunStrat)? })
}

fn to_json<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = multiplierCurve)]
pub fn multiplier_curve_js(level: u32) -> Result<String, JsError> {
    to_json(multiplier_curve(level))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(
    p: f64,
    amplitude: f64,
    m: u32,
    dt: f64,
    t_final: f64,
    scheme_name: &str,
    mode_name: &str,
    seed: u32,
) -> Result<String, JsError> {
    let params = (|| {
        Ok(RunParams {
            p,
            amplitude,
            m,
            dt,
            t_final,
            scheme: scheme(scheme_name)?,
            mode: truncation(mode_name)?,
            seed: u64::from(seed),
        })
    })();
    to_json(params.and_then(|p| run(&p)))
}

#[wasm_bindgen(js_name = dtSweep)]
pub fn dt_sweep_js(amplitude: f64, mode_name: &str, seed: u32) -> Result<String, JsError> {
    to_json(truncation(mode_name).and_then(|mode| dt_sweep(amplitude, mode, u64::from(seed))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplier_curve_shape() {
        let c = multiplier_curve(3).unwrap();
        assert_eq!(c.eigenvalues.len(), MODES);
        assert_eq!(c.smoothed[0], 1.0);
        assert_eq!(c.sharp[..4], [1.0, 1.0, 1.0, 0.0]);
        assert!(c.smoothed.iter().zip(&c.sharp).all(|(s, p)| *s <= 1.0 && (*s == 0.0 || *p == 1.0)));
        assert!(multiplier_curve(11).is_err());
    }

    #[test]
    fn run_starts_on_the_sphere() {
        let params = RunParams {
            p: 4.0,
            amplitude: 0.2,
            m: 3,
            dt: 0.01,
            t_final: 0.2,
            scheme: Scheme::HeunStrat,
            mode: TruncationMode::Consistent,
            seed: 1,
        };
        let r = run(&params).unwrap();
        assert_eq!(r.x.len(), GRID + 2);
        assert!(r.initial[0].abs() < 1e-14 && r.last[GRID + 1].abs() < 1e-14);
        assert_eq!(r.times.len(), 21);
        assert!(r.sphere_defect[0] < 1e-14);
        assert!(r.sphere_defect.iter().all(|d| *d < 0.05));
        assert!(run(&RunParams { dt: 0.5, ..params }).is_err());
    }

    #[test]
    fn sweep_defects_shrink() {
        let r = dt_sweep(0.1, TruncationMode::Consistent, 0).unwrap();
        assert_eq!(r.dt.len(), r.em_ito.len());
        assert!(r.heun_strat.first() > r.heun_strat.last());
        assert!(r.em_ito.first() > r.em_ito.last());
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(scheme("rk4").is_err());
        assert!(truncation("sharp").is_err());
    }
}
