//! Rank-one, constraint-compatible noise `N(u) = f − (f, u) u`, its Fréchet
//! derivative, the Itô correction `κ(u) = d_u N(N(u))`, and the closed-form
//! pairings used to check sphere invariance.

use serde::{Deserialize, Serialize};

use crate::constraint::{nonlinearity_c, signed_power, GalerkinBand};
use crate::error::Result;
use crate::spectral::{
    gradient_dot_grid, inner_h1, integrate, lp_norm_pow, norm_h1_sq, norm_lp, synthesize,
    EigenSystem, SpectralField,
};

/// One noise direction `f_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseChannel {
    pub label: String,
    pub f: SpectralField,
}

/// The finite family `f_1, …, f_M`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseFamily {
    channels: Vec<NoiseChannel>,
}

impl NoiseFamily {
    pub fn new(channels: Vec<NoiseChannel>) -> Self {
        Self { channels }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn channels(&self) -> &[NoiseChannel] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Partial sums of `‖f_i‖_{H¹}` and `‖f_i‖_{L^p}`.
    pub fn summability(&self, p: f64, es: &EigenSystem) -> Result<SummabilityReport> {
        let mut h1 = Vec::with_capacity(self.len());
        let mut lp = Vec::with_capacity(self.len());
        let (mut sh, mut sl) = (0.0, 0.0);
        for ch in &self.channels {
            sh += norm_h1_sq(&ch.f, es)?.sqrt();
            sl += norm_lp(&ch.f, p, es)?;
            h1.push(sh);
            lp.push(sl);
        }
        Ok(SummabilityReport { h1_partial_sums: h1, lp_partial_sums: lp })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummabilityReport {
    pub h1_partial_sums: Vec<f64>,
    pub lp_partial_sums: Vec<f64>,
}

/// `N(u) = f − (f, u) u`
pub fn n_apply(f: &SpectralField, u: &SpectralField) -> SpectralField {
    let mut out = f.clone();
    out.axpy(-f.dot(u), u);
    out
}

/// `d_v N(h) = −(f, v) h − (f, h) v`
pub fn dn_apply(f: &SpectralField, v: &SpectralField, h: &SpectralField) -> SpectralField {
    let mut out = h.scaled(-f.dot(v));
    out.axpy(-f.dot(h), v);
    out
}

/// `κ(u) = d_u N(N(u)) = −(f, u) f − ‖f‖² u + 2 (f, u)² u`
pub fn kappa_apply(f: &SpectralField, u: &SpectralField) -> SpectralField {
    let fu = f.dot(u);
    let mut out = f.scaled(-fu);
    out.axpy(2.0 * fu * fu - f.norm_sq(), u);
    out
}

/// How the Galerkin system truncates the noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationMode {
    /// `σ = S_{m-1} N(u)`, `κ^m = S_{m-1} κ(u)`.
    #[default]
    Smoothed,
    /// `σ = P_m N(u)` with its own exact Itô correction; keeps the sphere
    /// invariant for the truncated system.
    Consistent,
}

/// Truncated noise field `σ(u)` and the Itô drift term paired with it.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedNoise {
    pub sigma: SpectralField,
    pub kappa: SpectralField,
}

pub fn truncated_noise(
    f: &SpectralField,
    u: &SpectralField,
    band: &GalerkinBand,
    mode: TruncationMode,
) -> Result<TruncatedNoise> {
    band.check_contains(u)?;
    Ok(match mode {
        TruncationMode::Smoothed => TruncatedNoise {
            sigma: band.smooth(&n_apply(f, u)),
            kappa: band.smooth(&kappa_apply(f, u)),
        },
        TruncationMode::Consistent => {
            let sigma = band.project(&n_apply(f, u));
            let mut kappa = sigma.scaled(-f.dot(u));
            kappa.axpy(-f.dot(&sigma), u);
            TruncatedNoise { sigma, kappa }
        }
    })
}

/// Derivative of the truncated field applied to itself, `σ'(u)[σ(u)]`: the
/// exact Itô correction of the Stratonovich field `σ`.
pub fn truncated_self_derivative(
    f: &SpectralField,
    u: &SpectralField,
    sigma: &SpectralField,
    band: &GalerkinBand,
    mode: TruncationMode,
) -> SpectralField {
    let d = dn_apply(f, u, sigma);
    match mode {
        TruncationMode::Smoothed => band.smooth(&d),
        // u and σ are both in the band, so P_m d = d
        TruncationMode::Consistent => d,
    }
}

pub const PAIRING_NAMES: [&str; 9] = [
    "noise_radial",
    "noise_norm_sq",
    "kappa_radial",
    "noise_laplacian",
    "kappa_laplacian",
    "noise_gradient_sq",
    "noise_nonlinear",
    "kappa_nonlinear",
    "noise_weighted_sq",
];

/// The nine pairings, in [`PAIRING_NAMES`] order:
///
/// ```text
/// (N v, v)          (N v, N v)         (κ v, v)
/// (N v, −Δv)        (κ v, −Δv)         ‖∇ N v‖²
/// (N v, |v|^{p-2}v) (κ v, |v|^{p-2}v)  (N v, |v|^{p-2} N v)
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pairings {
    pub values: [f64; 9],
    /// Magnitude of the largest contributing term, for relative comparisons.
    pub scales: [f64; 9],
}

/// Closed-form right-hand sides, built from inner products and norms only.
pub fn pairing_suite(f: &SpectralField, v: &SpectralField, p: f64, es: &EigenSystem) -> Result<Pairings> {
    let fv = f.dot(v);
    let ff = f.norm_sq();
    let vv = v.norm_sq();
    let v_h1 = norm_h1_sq(v, es)?;
    let f_h1 = norm_h1_sq(f, es)?;
    let gfv = inner_h1(f, v, es)?;
    let v_lp = lp_norm_pow(v, p, es)?;
    let f_cv = {
        let gf = synthesize(f, es)?;
        let gv = synthesize(v, es)?;
        integrate(&gf.zip_map(&gv, |a, b| a * signed_power(b, p)), es.domain())
    };
    let f_wf = weighted_pairing(f, f, v, p, es)?;

    let terms: [Vec<f64>; 9] = [
        vec![fv, -fv * vv],
        vec![ff, fv * fv * (vv - 2.0)],
        vec![-ff * vv, fv * fv * (2.0 * vv - 1.0)],
        vec![gfv, -fv * v_h1],
        vec![-fv * gfv, -ff * v_h1, 2.0 * fv * fv * v_h1],
        vec![f_h1, -2.0 * fv * gfv, fv * fv * v_h1],
        vec![f_cv, -fv * v_lp],
        vec![-fv * f_cv, -ff * v_lp, 2.0 * fv * fv * v_lp],
        vec![f_wf, -2.0 * fv * f_cv, fv * fv * v_lp],
    ];
    let mut values = [0.0; 9];
    let mut scales = [0.0; 9];
    for (k, t) in terms.iter().enumerate() {
        values[k] = t.iter().sum();
        scales[k] = t.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    }
    Ok(Pairings { values, scales })
}

/// `∫ |v|^{p-2} a b` by interior-node quadrature.
pub fn weighted_pairing(a: &SpectralField, b: &SpectralField, v: &SpectralField, p: f64, es: &EigenSystem) -> Result<f64> {
    let ga = synthesize(a, es)?;
    let gb = synthesize(b, es)?;
    let w = synthesize(v, es)?.map(|x| if p == 2.0 { 1.0 } else { x.abs().powf(p - 2.0) });
    let prod = ga.zip_map(&gb, |x, y| x * y).zip_map(&w, |x, y| x * y);
    Ok(integrate(&prod, es.domain()))
}

/// Left-hand sides evaluated directly: the noise fields are formed, then
/// paired by grid quadrature (gradient pairings on the closed grid).
pub fn pairing_direct(f: &SpectralField, v: &SpectralField, p: f64, es: &EigenSystem) -> Result<Pairings> {
    let n = n_apply(f, v);
    let k = kappa_apply(f, v);
    let d = es.domain();
    let grid_dot = |a: &SpectralField, b: &SpectralField| -> Result<f64> {
        let ga = synthesize(a, es)?;
        let gb = synthesize(b, es)?;
        Ok(integrate(&ga.zip_map(&gb, |x, y| x * y), d))
    };
    let grad_dot = |a: &SpectralField, b: &SpectralField| -> Result<f64> {
        Ok(integrate(&gradient_dot_grid(a, b, es)?, d))
    };
    let nonlinear_dot = |a: &SpectralField| -> Result<f64> {
        let ga = synthesize(a, es)?;
        let gv = synthesize(v, es)?;
        Ok(integrate(&ga.zip_map(&gv, |x, y| x * signed_power(y, p)), d))
    };
    let values = [
        grid_dot(&n, v)?,
        grid_dot(&n, &n)?,
        grid_dot(&k, v)?,
        grad_dot(&n, v)?,
        grad_dot(&k, v)?,
        grad_dot(&n, &n)?,
        nonlinear_dot(&n)?,
        nonlinear_dot(&k)?,
        weighted_pairing(&n, &n, v, p, es)?,
    ];
    let scales = values.map(f64::abs);
    Ok(Pairings { values, scales })
}

/// Spectral evaluation of `(C(v), w)` via the analyzed nonlinearity. Equal to
/// the grid quadrature because analysis is the grid inner product.
pub fn nonlinear_pairing(v: &SpectralField, w: &SpectralField, p: f64, es: &EigenSystem) -> Result<f64> {
    Ok(nonlinearity_c(v, p, es)?.dot(w))
}

/// Measured increments of `N` against the local Lipschitz bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub h1_measured: f64,
    /// `λ₁^{-1/2} ‖f‖ (‖v1‖_{H¹} + ‖v2‖_{H¹}) ‖v1 − v2‖_{H¹}`
    pub h1_bound: f64,
    pub lp_measured: f64,
    /// `‖f‖ (‖v1‖ ‖v1 − v2‖_p + ‖v2‖_p ‖v1 − v2‖)`
    pub lp_bound: f64,
    /// Combined `H¹ + L^p` norm of the increment.
    pub vp_measured: f64,
    pub vp_bound: f64,
    pub kappa_l2_measured: f64,
    /// `2 ‖f‖² (1 + (‖v1‖ + ‖v2‖)²) ‖v1 − v2‖`
    pub kappa_l2_bound: f64,
}

impl LipschitzReport {
    pub fn holds(&self, slack: f64) -> bool {
        self.h1_measured <= self.h1_bound + slack
            && self.lp_measured <= self.lp_bound + slack
            && self.vp_measured <= self.vp_bound + slack
            && self.kappa_l2_measured <= self.kappa_l2_bound + slack
    }
}

pub fn lipschitz_report(
    f: &SpectralField,
    v1: &SpectralField,
    v2: &SpectralField,
    p: f64,
    es: &EigenSystem,
) -> Result<LipschitzReport> {
    let w = v1.sub(v2);
    let dn = n_apply(f, v1).sub(&n_apply(f, v2));
    let inv_sqrt_l1 = 1.0 / es.first_eigenvalue().sqrt();
    let fl2 = f.norm();
    let h1 = |u: &SpectralField| norm_h1_sq(u, es).map(f64::sqrt);
    let lp = |u: &SpectralField| norm_lp(u, p, es);

    let h1_measured = h1(&dn)?;
    let h1_bound = inv_sqrt_l1 * fl2 * (h1(v1)? + h1(v2)?) * h1(&w)?;
    let lp_measured = lp(&dn)?;
    let lp_bound = fl2 * (v1.norm() * lp(&w)? + lp(v2)? * w.norm());
    let vp = |u: &SpectralField| -> Result<f64> { Ok(h1(u)? + lp(u)?) };
    let vp_measured = vp(&dn)?;
    let vp_bound = (inv_sqrt_l1 * fl2 * (h1(v1)? + vp(v2)?) + fl2 * lp(v1)?) * vp(&w)?;
    let kappa_l2_measured = kappa_apply(f, v1).sub(&kappa_apply(f, v2)).norm();
    let s = v1.norm() + v2.norm();
    let kappa_l2_bound = 2.0 * f.norm_sq() * (1.0 + s * s) * w.norm();
    Ok(LipschitzReport {
        h1_measured,
        h1_bound,
        lp_measured,
        lp_bound,
        vp_measured,
        vp_bound,
        kappa_l2_measured,
        kappa_l2_bound,
    })
}
