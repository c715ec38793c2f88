//! The nonlinearity `C(u) = |u|^{p-2} u`, the tangent-projected drift, and the
//! spectral cutoffs used by the Galerkin scheme: the sharp projector `P_m` and
//! the smooth dyadic multiplier `S_m`.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::spectral::{
    analyze, check_exponent, integrate, lp_norm_pow, norm_h1_sq, synthesize, EigenSystem,
    SpectralField,
};

/// Exponent `p ≥ 2` of the nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct NonlinearityExponent(f64);

impl NonlinearityExponent {
    pub fn new(p: f64) -> Result<Self> {
        check_exponent(p)?;
        Ok(Self(p))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for NonlinearityExponent {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<NonlinearityExponent> for f64 {
    fn from(p: NonlinearityExponent) -> f64 {
        p.0
    }
}

/// `|v|^{p-2} v`, pointwise.
#[inline]
pub fn signed_power(v: f64, p: f64) -> f64 {
    if p == 2.0 {
        v
    } else {
        v.abs().powf(p - 2.0) * v
    }
}

/// Coefficients of `C(u) = |u|^{p-2} u`, computed on the grid and analyzed
/// back onto the retained modes.
pub fn nonlinearity_c(u: &SpectralField, p: f64, es: &EigenSystem) -> Result<SpectralField> {
    check_exponent(p)?;
    let g = synthesize(u, es)?.map(|v| signed_power(v, p));
    if !g.is_finite() {
        return Err(Error::Numeric("non-finite value in |u|^{p-2}u".into()));
    }
    analyze(&g, es)
}

/// The nonlocal multiplier `‖∇u‖² + ‖u‖_p^p`.
pub fn lagrange_coefficient(u: &SpectralField, p: f64, es: &EigenSystem) -> Result<f64> {
    Ok(norm_h1_sq(u, es)? + lp_norm_pow(u, p, es)?)
}

/// `G(u) = Δu − |u|^{p-2}u + (‖∇u‖² + ‖u‖_p^p) u`.
pub fn drift_g(u: &SpectralField, p: f64, es: &EigenSystem) -> Result<SpectralField> {
    let c = nonlinearity_c(u, p, es)?;
    let lagrange = lagrange_coefficient(u, p, es)?;
    let coeffs = u
        .coeffs()
        .iter()
        .zip(c.coeffs())
        .zip(es.eigenvalues())
        .map(|((&uc, &cc), l)| -l * uc - cc + lagrange * uc)
        .collect();
    Ok(SpectralField::new(coeffs))
}

/// Retained flags of `P_m = 1_{(0, 2^{m+1})}(−Δ)`.
pub fn projector_mask(m: u32, es: &EigenSystem) -> Vec<bool> {
    let edge = 2f64.powi(m as i32 + 1);
    es.eigenvalues().map(|l| l < edge).collect()
}

pub fn apply_pm(u: &SpectralField, m: u32, es: &EigenSystem) -> SpectralField {
    let mask = projector_mask(m, es);
    masked(u, &mask)
}

pub(crate) fn masked(u: &SpectralField, mask: &[bool]) -> SpectralField {
    SpectralField::new(
        u.coeffs().iter().zip(mask).map(|(&c, &keep)| if keep { c } else { 0.0 }).collect(),
    )
}

fn bump(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 for `s ≤ 0`, 1 for `s ≥ 1`, `h(s) + h(1 − s) = 1`.
fn smooth_step(s: f64) -> f64 {
    let a = bump(s);
    let b = bump(1.0 - s);
    a / (a + b)
}

/// Dyadic cutoff profile: 1 on `(0, 1]`, 0 on `[2, ∞)`, smooth in between.
/// `γ(t) = χ(t) − χ(2t)` is then supported in `[1/2, 2]` and the dyadic
/// dilates of `γ` telescope to `χ`.
pub fn cutoff_profile(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        smooth_step(2.0 - t)
    }
}

/// Values `s_m(λ_n) = χ(2^{-m} λ_n)` of the smoothed spectral cutoff `S_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothedMultiplier {
    level: u32,
    values: Vec<f64>,
}

impl SmoothedMultiplier {
    pub fn build(es: &EigenSystem, level: u32) -> Self {
        let scale = 2f64.powi(-(level as i32));
        Self { level, values: es.eigenvalues().map(|l| cutoff_profile(scale * l)).collect() }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn apply(&self, u: &SpectralField) -> SpectralField {
        u.mul_coeffwise(&self.values)
    }
}

pub fn build_smoothed_multiplier(es: &EigenSystem, m: u32) -> SmoothedMultiplier {
    SmoothedMultiplier::build(es, m)
}

pub fn apply_sm(u: &SpectralField, mult: &SmoothedMultiplier) -> SpectralField {
    mult.apply(u)
}

/// The pair of cutoffs the level-`m` Galerkin system needs: the band `P_m`
/// where the state lives and `S_{m-1}` which smooths noise and initial data.
#[derive(Clone, Debug)]
pub struct GalerkinBand {
    m: u32,
    mask: Vec<bool>,
    smoother: SmoothedMultiplier,
}

impl GalerkinBand {
    pub fn new(es: &EigenSystem, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("Galerkin level m must be at least 1".into()));
        }
        Ok(Self { m, mask: projector_mask(m, es), smoother: SmoothedMultiplier::build(es, m - 1) })
    }

    pub fn level(&self) -> u32 {
        self.m
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn smoother(&self) -> &SmoothedMultiplier {
        &self.smoother
    }

    pub fn project(&self, u: &SpectralField) -> SpectralField {
        masked(u, &self.mask)
    }

    pub fn smooth(&self, u: &SpectralField) -> SpectralField {
        self.smoother.apply(u)
    }

    pub fn band_size(&self) -> usize {
        self.mask.iter().filter(|&&k| k).count()
    }

    pub fn contains(&self, u: &SpectralField) -> bool {
        u.coeffs().iter().zip(&self.mask).all(|(&c, &keep)| keep || c == 0.0)
    }

    pub fn check_contains(&self, u: &SpectralField) -> Result<()> {
        contract(self.contains(u), || format!("state has energy outside the P_{} band", self.m))
    }

    /// Largest eigenvalue inside the band.
    pub fn max_eigenvalue(&self, es: &EigenSystem) -> f64 {
        es.eigenvalues().zip(&self.mask).filter(|(_, &k)| k).map(|(l, _)| l).fold(0.0, f64::max)
    }
}

/// `⟨C(v1) − C(v2), v1 − v2⟩ − 2^{2-p} ‖v1 − v2‖_p^p` by grid quadrature.
/// Nonnegative up to round-off.
pub fn monotonicity_gap(v1: &SpectralField, v2: &SpectralField, p: f64, es: &EigenSystem) -> Result<f64> {
    check_exponent(p)?;
    let g1 = synthesize(v1, es)?;
    let g2 = synthesize(v2, es)?;
    let pairing = g1.zip_map(&g2, |a, b| (signed_power(a, p) - signed_power(b, p)) * (a - b));
    let diff = g1.zip_map(&g2, |a, b| (a - b).abs().powf(p));
    let d = es.domain();
    Ok(integrate(&pairing, d) - 2f64.powf(2.0 - p) * integrate(&diff, d))
}

/// Largest observed ratio `‖S u‖_p / ‖u‖_p` over the given fields. A lower
/// estimate of the grid operator norm of the multiplier on `L^p`.
pub fn lp_norm_ratio(mult: &SmoothedMultiplier, p: f64, es: &EigenSystem, fields: &[SpectralField]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for u in fields {
        let den = lp_norm_pow(u, p, es)?.powf(1.0 / p);
        if den > 0.0 {
            worst = worst.max(lp_norm_pow(&mult.apply(u), p, es)?.powf(1.0 / p) / den);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_eigensystem, DomainSpec};
    use std::f64::consts::PI;

    fn line(modes: usize, n: usize) -> EigenSystem {
        build_eigensystem(&DomainSpec::interval(PI, n).unwrap(), modes).unwrap()
    }

    fn field(v: &[f64], len: usize) -> SpectralField {
        let mut c = v.to_vec();
        c.resize(len, 0.0);
        SpectralField::new(c)
    }

    #[test]
    fn exponent_validation() {
        assert!(NonlinearityExponent::new(1.5).is_err());
        assert!(NonlinearityExponent::new(f64::INFINITY).is_err());
        assert_eq!(NonlinearityExponent::new(3.0).unwrap().get(), 3.0);
    }

    #[test]
    fn nonlinearity_special_cases() {
        let es = line(8, 32);
        let u = field(&[0.3, -0.7, 0.2, 0.05], 8);
        let c = nonlinearity_c(&u, 2.0, &es).unwrap();
        assert!(c.sub(&u).norm() < 1e-12);
        let z = nonlinearity_c(&SpectralField::zeros(8), 4.0, &es).unwrap();
        assert!(z.norm() == 0.0);
        let e1 = es.basis(0);
        let pairing = nonlinearity_c(&e1, 4.0, &es).unwrap().dot(&e1);
        assert!((pairing - 1.5 / PI).abs() < 1e-8);
    }

    #[test]
    fn lagrange_values() {
        let es = line(4, 16);
        let e1 = es.basis(0);
        assert!((lagrange_coefficient(&e1, 2.0, &es).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(lagrange_coefficient(&SpectralField::zeros(4), 3.0, &es).unwrap(), 0.0);
        assert!((lagrange_coefficient(&e1, 4.0, &es).unwrap() - (1.0 + 1.5 / PI)).abs() < 1e-10);
    }

    #[test]
    fn drift_is_stationary_on_first_mode_and_radial_off_sphere() {
        let es = line(6, 16);
        let e1 = es.basis(0);
        assert!(drift_g(&e1, 2.0, &es).unwrap().norm() < 1e-10);
        let u = e1.scaled(2.0);
        let radial = drift_g(&u, 2.0, &es).unwrap().dot(&u);
        assert!((radial - 24.0).abs() < 1e-8);
    }

    #[test]
    fn drift_is_tangent_on_the_sphere() {
        let es = line(10, 32);
        for p in [2.0, 3.0, 4.0, 6.0] {
            let mut u = field(&[0.9, -0.4, 0.3, 0.1, -0.05, 0.02], 10);
            u = u.scaled(1.0 / u.norm());
            let g = drift_g(&u, p, &es).unwrap();
            assert!(g.dot(&u).abs() <= 1e-8 * (1.0 + g.norm()), "p = {p}");
        }
    }

    #[test]
    fn projector_threshold_is_strict() {
        let es = line(3, 8);
        let u = field(&[1.0, 2.0, 3.0], 3);
        assert_eq!(apply_pm(&u, 2, &es).coeffs(), &[1.0, 2.0, 0.0]);
        let once = apply_pm(&u, 1, &es);
        assert_eq!(apply_pm(&once, 1, &es), once);
        assert_eq!(apply_pm(&u, 5, &es), u);
        // λ = 4 equals 2^{m+1} for m = 1 and is excluded
        assert_eq!(once.coeffs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn cutoff_profile_shape() {
        assert_eq!(cutoff_profile(0.3), 1.0);
        assert_eq!(cutoff_profile(1.0), 1.0);
        assert_eq!(cutoff_profile(2.0), 0.0);
        assert_eq!(cutoff_profile(1.5), 0.5);
        let mut prev = 1.0;
        for k in 0..=400 {
            let v = cutoff_profile(1.0 + k as f64 / 400.0);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn multiplier_values_at_dyadic_points() {
        let es = line(40, 80);
        for m in 0..6u32 {
            let mult = SmoothedMultiplier::build(&es, m);
            let edge = 2f64.powi(m as i32);
            for (l, &s) in es.eigenvalues().zip(mult.values()) {
                if l <= edge {
                    assert_eq!(s, 1.0);
                }
                if l >= 2.0 * edge {
                    assert_eq!(s, 0.0);
                }
                assert!(s <= 1.0);
            }
        }
        // λ₁ = 6 = 1.5 · 2² on an interval of length π/√6
        let es = build_eigensystem(&DomainSpec::interval(PI / 6f64.sqrt(), 8).unwrap(), 1).unwrap();
        let mult = SmoothedMultiplier::build(&es, 2);
        assert!((mult.values()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn band_rejects_level_zero_and_checks_support() {
        let es = line(6, 16);
        assert!(GalerkinBand::new(&es, 0).is_err());
        let band = GalerkinBand::new(&es, 2).unwrap();
        assert_eq!(band.band_size(), 2);
        assert!(band.contains(&es.basis(1)));
        assert!(band.check_contains(&es.basis(2)).is_err());
        assert!((band.max_eigenvalue(&es) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn monotonicity_gap_edge_cases() {
        let es = line(6, 24);
        let a = field(&[0.4, 0.3, -0.2], 6);
        let b = field(&[-0.1, 0.5, 0.0, 0.3], 6);
        assert!(monotonicity_gap(&a, &b, 2.0, &es).unwrap().abs() < 1e-10);
        assert_eq!(monotonicity_gap(&a, &a, 4.0, &es).unwrap(), 0.0);
        assert!(monotonicity_gap(&a, &b, 4.0, &es).unwrap() >= -1e-8);
    }
}
