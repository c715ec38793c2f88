//! Measurable consequences of the constrained dynamics: sphere defect, the
//! radial cancellation identity, discrete Itô-formula residuals, energy
//! functionals and the weighted-distance uniqueness monitor.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constraint::{drift_g, lagrange_coefficient, nonlinearity_c};
use crate::error::{contract, Result};
use crate::galerkin::{integral_ratio, BrownianPath, GalerkinSystem, Trajectory};
use crate::noise::{kappa_apply, n_apply, pairing_suite, weighted_pairing, NoiseFamily};
use crate::spectral::{
    inner_h1, lp_norm_pow, norm_h1_sq, norm_laplacian_sq, weighted_gradient_sq, EigenSystem, SpectralField,
};

/// `|‖u(t)‖² − 1|` at every recorded time.
pub fn sphere_defect(traj: &Trajectory) -> Vec<f64> {
    traj.records.iter().map(|r| (r.l2_sq - 1.0).abs()).collect()
}

pub fn max_sphere_defect(traj: &Trajectory) -> f64 {
    sphere_defect(traj).into_iter().fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialCancellation {
    /// `2 (G(u), u) + Σ [(κ_i(u), u) + ‖N_i(u)‖²]`
    pub direct: f64,
    /// `(2Λ(u) + Σ (3 (f_i, u)² − ‖f_i‖²)) (‖u‖² − 1)`
    pub closed_form: f64,
}

/// Radial part of the untruncated Itô dynamics, evaluated two ways.
pub fn radial_cancellation(u: &SpectralField, family: &NoiseFamily, p: f64, es: &EigenSystem) -> Result<RadialCancellation> {
    let mut direct = 2.0 * drift_g(u, p, es)?.dot(u);
    let mut prefactor = 2.0 * lagrange_coefficient(u, p, es)?;
    for ch in family.channels() {
        direct += kappa_apply(&ch.f, u).dot(u) + n_apply(&ch.f, u).norm_sq();
        prefactor += 3.0 * ch.f.dot(u).powi(2) - ch.f.norm_sq();
    }
    Ok(RadialCancellation { direct, closed_form: prefactor * (u.norm_sq() - 1.0) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItoResidualReport {
    pub terms: BTreeMap<String, f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub dt: f64,
}

fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dt * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// The path coarsened onto the trajectory's step, checked for alignment.
fn aligned_path(sys: &GalerkinSystem, traj: &Trajectory, path: &BrownianPath) -> Result<BrownianPath> {
    contract(!traj.is_empty() && traj.states.len() == traj.len() && traj.records.len() == traj.len(), || {
        "trajectory columns have unequal lengths".into()
    })?;
    contract(path.channels() == sys.family().len(), || {
        format!("path has {} channels, noise family has {}", path.channels(), sys.family().len())
    })?;
    let factor = integral_ratio(traj.dt, path.dt());
    contract(factor.is_some(), || format!("trajectory step {} is not a multiple of the path step {}", traj.dt, path.dt()))?;
    let coarse = path.coarsen(factor.unwrap_or(1))?;
    contract(coarse.steps() + 1 >= traj.len(), || "path is shorter than the trajectory".into())?;
    Ok(coarse)
}

/// Discrete check of the Itô formula for `‖u‖_p^p` along a Galerkin run.
///
/// The nonlinear dissipation is `‖P_m C(u)‖²`, the Galerkin form of
/// `‖u‖_{2p−2}^{2p−2}`; the untruncated value is reported as an extra term.
/// The noise terms are the solver's truncated `σ_i` and κ-terms.
pub fn lp_ito_residual(sys: &GalerkinSystem, traj: &Trajectory, path: &BrownianPath) -> Result<ItoResidualReport> {
    let path = aligned_path(sys, traj, path)?;
    let es = sys.eigensystem();
    let p = sys.p();
    let n = traj.len();
    let mut grad = Vec::with_capacity(n);
    let mut dissip = Vec::with_capacity(n);
    let mut dissip_full = Vec::with_capacity(n);
    let mut lagr = Vec::with_capacity(n);
    let mut kappa = Vec::with_capacity(n);
    let mut quad = Vec::with_capacity(n);
    let mut stochastic = 0.0;
    for (k, u) in traj.states.iter().enumerate() {
        let c = nonlinearity_c(u, p, es)?;
        let noise = sys.noise(u)?;
        grad.push(weighted_gradient_sq(u, p, es)?);
        dissip.push(sys.band().project(&c).norm_sq());
        dissip_full.push(lp_norm_pow(u, 2.0 * p - 2.0, es)?);
        lagr.push(traj.records[k].lagrange * traj.records[k].lp_p);
        kappa.push(noise.iter().map(|t| c.dot(&t.kappa)).sum());
        let mut q = 0.0;
        for t in &noise {
            q += weighted_pairing(&t.sigma, &t.sigma, u, p, es)?;
        }
        quad.push(q);
        if k + 1 < n {
            stochastic += noise.iter().zip(path.increment(k)).map(|(t, w)| c.dot(&t.sigma) * w).sum::<f64>();
        }
    }
    let dt = traj.dt;
    let mut terms = BTreeMap::new();
    let mut put = |name: &str, v: f64| {
        terms.insert(name.to_string(), v);
        v
    };
    let final_lp = put("lp_final", traj.records[n - 1].lp_p);
    let initial_lp = put("lp_initial", traj.records[0].lp_p);
    let i_grad = put("weighted_gradient_integral", trapezoid(&grad, dt));
    let i_dissip = put("nonlinear_dissipation_integral", trapezoid(&dissip, dt));
    put("nonlinear_dissipation_untruncated_integral", trapezoid(&dissip_full, dt));
    let i_lagr = put("lagrange_integral", trapezoid(&lagr, dt));
    let i_kappa = put("kappa_integral", trapezoid(&kappa, dt));
    let i_quad = put("noise_quadratic_integral", trapezoid(&quad, dt));
    let stoch = put("stochastic_integral", stochastic);

    let lhs = final_lp + p * (p - 1.0) * i_grad + p * i_dissip;
    let rhs = initial_lp + p * i_lagr + 0.5 * p * i_kappa + 0.5 * p * (p - 1.0) * i_quad + p * stoch;
    Ok(ItoResidualReport { terms, lhs, rhs, residual: lhs - rhs, dt })
}

/// Discrete check of the Itô formula for `‖u‖²_{H¹}` along a Galerkin run.
pub fn h1_ito_residual(sys: &GalerkinSystem, traj: &Trajectory, path: &BrownianPath) -> Result<ItoResidualReport> {
    let path = aligned_path(sys, traj, path)?;
    let es = sys.eigensystem();
    let p = sys.p();
    let n = traj.len();
    let mut lap = Vec::with_capacity(n);
    let mut grad = Vec::with_capacity(n);
    let mut lagr = Vec::with_capacity(n);
    let mut kappa = Vec::with_capacity(n);
    let mut quad = Vec::with_capacity(n);
    let mut stochastic = 0.0;
    let mut crosscheck: f64 = 0.0;
    for (k, u) in traj.states.iter().enumerate() {
        let noise = sys.noise(u)?;
        lap.push(norm_laplacian_sq(u, es)?);
        grad.push(weighted_gradient_sq(u, p, es)?);
        lagr.push(traj.records[k].lagrange * traj.records[k].h1_sq);
        let mut kk = 0.0;
        let mut q = 0.0;
        for t in &noise {
            kk += inner_h1(u, &t.kappa, es)?;
            q += norm_h1_sq(&t.sigma, es)?;
        }
        kappa.push(kk);
        quad.push(q);
        for ch in sys.family().channels() {
            let closed = pairing_suite(&ch.f, u, p, es)?.values[5];
            let spectral = norm_h1_sq(&n_apply(&ch.f, u), es)?;
            crosscheck = crosscheck.max((closed - spectral).abs());
        }
        if k + 1 < n {
            for (t, w) in noise.iter().zip(path.increment(k)) {
                stochastic += inner_h1(u, &t.sigma, es)? * w;
            }
        }
    }
    let dt = traj.dt;
    let mut terms = BTreeMap::new();
    let mut put = |name: &str, v: f64| {
        terms.insert(name.to_string(), v);
        v
    };
    let final_h1 = put("h1_final", traj.records[n - 1].h1_sq);
    let initial_h1 = put("h1_initial", traj.records[0].h1_sq);
    let i_lap = put("laplacian_integral", trapezoid(&lap, dt));
    let i_grad = put("weighted_gradient_integral", trapezoid(&grad, dt));
    let i_lagr = put("lagrange_integral", trapezoid(&lagr, dt));
    let i_kappa = put("kappa_integral", trapezoid(&kappa, dt));
    let i_quad = put("noise_gradient_integral", trapezoid(&quad, dt));
    let stoch = put("stochastic_integral", stochastic);
    put("noise_gradient_closed_form_max_error", crosscheck);

    let lhs = final_h1 + 2.0 * i_lap + 2.0 * (p - 1.0) * i_grad;
    let rhs = initial_h1 + 2.0 * i_lagr + i_kappa + i_quad + 2.0 * stoch;
    Ok(ItoResidualReport { terms, lhs, rhs, residual: lhs - rhs, dt })
}

/// The four functionals of the energy estimate along one trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    /// `sup_t (‖u‖⁴_{H¹} + ‖u‖_p^{2p})`
    pub sup_energy: f64,
    /// `∫ ‖Δu‖²`
    pub laplacian_integral: f64,
    /// `∫ ‖u‖_{2p−2}^{2p−2}`
    pub nonlinear_integral: f64,
    /// `∫ ‖|u|^{(p−2)/2} ∇u‖²`
    pub weighted_gradient_integral: f64,
}

pub fn energy_series(traj: &Trajectory, p: f64, es: &EigenSystem) -> Result<EnergySeries> {
    let mut sup: f64 = 0.0;
    let mut lap = Vec::with_capacity(traj.len());
    let mut nl = Vec::with_capacity(traj.len());
    let mut wg = Vec::with_capacity(traj.len());
    for (u, r) in traj.states.iter().zip(&traj.records) {
        sup = sup.max(r.h1_sq * r.h1_sq + r.lp_p * r.lp_p);
        lap.push(norm_laplacian_sq(u, es)?);
        nl.push(lp_norm_pow(u, 2.0 * p - 2.0, es)?);
        wg.push(weighted_gradient_sq(u, p, es)?);
    }
    Ok(EnergySeries {
        sup_energy: sup,
        laplacian_integral: trapezoid(&lap, traj.dt),
        nonlinear_integral: trapezoid(&nl, traj.dt),
        weighted_gradient_integral: trapezoid(&wg, traj.dt),
    })
}

/// Componentwise mean over a batch, in the given order.
pub fn mean_energy(series: &[EnergySeries]) -> EnergySeries {
    if series.is_empty() {
        return EnergySeries::default();
    }
    let n = series.len() as f64;
    let sum = |f: fn(&EnergySeries) -> f64| series.iter().map(f).sum::<f64>() / n;
    EnergySeries {
        sup_energy: sum(|e| e.sup_energy),
        laplacian_integral: sum(|e| e.laplacian_integral),
        nonlinear_integral: sum(|e| e.nonlinear_integral),
        weighted_gradient_integral: sum(|e| e.weighted_gradient_integral),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    pub weighted_dist: Vec<f64>,
    pub max_uptick: f64,
}

impl UniquenessReport {
    pub fn initial(&self) -> f64 {
        self.weighted_dist.first().copied().unwrap_or(0.0)
    }

    pub fn terminal(&self) -> f64 {
        self.weighted_dist.last().copied().unwrap_or(0.0)
    }
}

/// Weighted distance `e^{−ρ(t)} ‖u₁(t) − u₂(t)‖²` between two runs driven by
/// the same path, with
///
/// ```text
/// ρ' = 2 [ ‖∇u₁‖² + ½ (‖∇u₁‖ + ‖∇u₂‖)² ‖u₂‖² + ‖u₁‖_p^p
///        + p² 2^{2p−4} (‖u₁‖_p^p + ‖u₂‖_p^p) ‖u₂‖²
///        + Σ ‖f_i‖² (2 + 3 (‖u₁‖ + ‖u₂‖)²) ]
/// ```
pub fn uniqueness_monitor(a: &Trajectory, b: &Trajectory, family: &NoiseFamily, p: f64) -> Result<UniquenessReport> {
    contract(a.len() == b.len() && a.dt == b.dt && a.times == b.times, || {
        "trajectories are on different time grids".into()
    })?;
    let noise_sq: f64 = family.channels().iter().map(|c| c.f.norm_sq()).sum();
    let c_p = p * p * 2f64.powf(2.0 * p - 4.0);
    let integrand: Vec<f64> = a
        .records
        .iter()
        .zip(&b.records)
        .map(|(r1, r2)| {
            let g1 = r1.h1_sq.sqrt();
            let g2 = r2.h1_sq.sqrt();
            let n1 = r1.l2_sq.sqrt();
            let n2 = r2.l2_sq.sqrt();
            2.0 * (r1.h1_sq
                + 0.5 * (g1 + g2).powi(2) * r2.l2_sq
                + r1.lp_p
                + c_p * (r1.lp_p + r2.lp_p) * r2.l2_sq
                + noise_sq * (2.0 + 3.0 * (n1 + n2).powi(2)))
        })
        .collect();
    let mut rho = Vec::with_capacity(a.len());
    let mut acc = 0.0;
    for k in 0..a.len() {
        if k > 0 {
            acc += 0.5 * a.dt * (integrand[k - 1] + integrand[k]);
        }
        rho.push(acc);
    }
    let weighted_dist: Vec<f64> =
        a.states.iter().zip(&b.states).zip(&rho).map(|((u1, u2), r)| (-r).exp() * u1.sub(u2).norm_sq()).collect();
    let max_uptick = weighted_dist.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(UniquenessReport { times: a.times.clone(), rho, weighted_dist, max_uptick })
}
