//! Dirichlet-Laplacian eigenbasis on intervals and rectangles.
//!
//! Every field lives in the orthonormal sine basis
//!
//! ```text
//! e_n(x) = Π_k sqrt(2/L_k) sin(n_k π x_k / L_k),    λ_n = Σ_k (n_k π / L_k)²
//! ```
//!
//! Physical-space work (nonlinearities, L^p norms) happens on a uniform
//! collocation grid. The interior grid `x_j = j·L/(N+1), j = 1..N` carries
//! values of sine series; the closed grid `j = 0..N+1` adds the boundary nodes
//! and is used for derivative fields, which do not vanish at the walls.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{contract, Error, Result};

/// Box domain `(0, L_1) [× (0, L_2)]` plus its collocation resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    lengths: Vec<f64>,
    grid_points: Vec<usize>,
}

impl DomainSpec {
    pub fn new(lengths: Vec<f64>, grid_points: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > 2 {
            return Err(Error::Config(format!(
                "domain dimension must be 1 or 2, got {}",
                lengths.len()
            )));
        }
        if lengths.len() != grid_points.len() {
            return Err(Error::Config(
                "lengths and grid_points must have one entry per axis".into(),
            ));
        }
        for (k, &l) in lengths.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Config(format!("axis {k}: length must be positive, got {l}")));
            }
        }
        for (k, &n) in grid_points.iter().enumerate() {
            if n < 4 {
                return Err(Error::Config(format!("axis {k}: need at least 4 grid points, got {n}")));
            }
        }
        Ok(Self { lengths, grid_points })
    }

    pub fn interval(length: f64, grid_points: usize) -> Result<Self> {
        Self::new(vec![length], vec![grid_points])
    }

    pub fn rectangle(lengths: [f64; 2], grid_points: [usize; 2]) -> Result<Self> {
        Self::new(lengths.to_vec(), grid_points.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn grid_points(&self) -> &[usize] {
        &self.grid_points
    }

    /// Node spacing `L/(N+1)` along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / (self.grid_points[axis] + 1) as f64
    }

    pub fn shape(&self, layout: GridLayout) -> Vec<usize> {
        let extra = match layout {
            GridLayout::Interior => 0,
            GridLayout::Closed => 2,
        };
        self.grid_points.iter().map(|n| n + extra).collect()
    }
}

/// One Dirichlet eigenpair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub index: Vec<usize>,
    pub eigenvalue: f64,
}

/// Ordered eigenpairs together with the sampled 1-D factors of each basis
/// function, so synthesis and analysis are table lookups.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    domain: DomainSpec,
    modes: Vec<Mode>,
    axes: Vec<AxisTables>,
}

#[derive(Clone, Debug)]
struct AxisTables {
    /// `phi_n(x_j)` on the interior grid, row `n-1`.
    interior: Vec<Vec<f64>>,
    /// `phi_n` on the closed grid.
    closed: Vec<Vec<f64>>,
    /// `phi_n'` on the closed grid.
    closed_deriv: Vec<Vec<f64>>,
}

impl AxisTables {
    fn new(length: f64, points: usize, max_index: usize) -> Self {
        let h = length / (points + 1) as f64;
        let amp = (2.0 / length).sqrt();
        let row = |n: usize, range: std::ops::Range<usize>, deriv: bool| -> Vec<f64> {
            let k = n as f64 * PI / length;
            range
                .map(|j| {
                    let x = j as f64 * h;
                    if deriv {
                        amp * k * (k * x).cos()
                    } else {
                        amp * (k * x).sin()
                    }
                })
                .collect()
        };
        Self {
            interior: (1..=max_index).map(|n| row(n, 1..points + 1, false)).collect(),
            closed: (1..=max_index).map(|n| row(n, 0..points + 2, false)).collect(),
            closed_deriv: (1..=max_index).map(|n| row(n, 0..points + 2, true)).collect(),
        }
    }
}

fn eigenvalue(index: &[usize], lengths: &[f64]) -> f64 {
    index
        .iter()
        .zip(lengths)
        .map(|(&n, &l)| {
            let k = n as f64 * PI / l;
            k * k
        })
        .sum()
}

fn cmp_modes(a: &Mode, b: &Mode) -> std::cmp::Ordering {
    let scale = a.eigenvalue.abs().max(b.eigenvalue.abs());
    if (a.eigenvalue - b.eigenvalue).abs() <= 1e-12 * scale {
        a.index.cmp(&b.index)
    } else {
        a.eigenvalue.total_cmp(&b.eigenvalue)
    }
}

/// First `mode_cap` eigenpairs, nondecreasing in λ with ties broken
/// lexicographically on the multi-index.
///
/// The grid must oversample the retained modes at least twice per axis so
/// that `|u|^{p-2} u` for moderate `p` is resolved.
pub fn build_eigensystem(domain: &DomainSpec, mode_cap: usize) -> Result<EigenSystem> {
    if mode_cap == 0 {
        return Err(Error::Config("mode_cap must be at least 1".into()));
    }
    let dim = domain.dim();
    let candidates: Vec<Vec<usize>> = match dim {
        1 => (1..=mode_cap).map(|n| vec![n]).collect(),
        _ => (1..=mode_cap)
            .flat_map(|a| (1..=mode_cap).map(move |b| vec![a, b]))
            .collect(),
    };
    let mut modes: Vec<Mode> = candidates
        .into_iter()
        .map(|index| {
            let eigenvalue = eigenvalue(&index, domain.lengths());
            Mode { index, eigenvalue }
        })
        .collect();
    modes.sort_by(cmp_modes);
    modes.truncate(mode_cap);

    let mut axes = Vec::with_capacity(dim);
    for axis in 0..dim {
        let max_index = modes.iter().map(|m| m.index[axis]).max().unwrap_or(1);
        let n = domain.grid_points()[axis];
        if n < 2 * max_index {
            return Err(Error::Config(format!(
                "mode_cap {mode_cap} retains index {max_index} on axis {axis}; \
                 need at least {} grid points there, have {n}",
                2 * max_index
            )));
        }
        axes.push(AxisTables::new(domain.lengths()[axis], n, max_index));
    }
    Ok(EigenSystem { domain: domain.clone(), modes, axes })
}

impl EigenSystem {
    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn eigenvalues(&self) -> impl Iterator<Item = f64> + '_ {
        self.modes.iter().map(|m| m.eigenvalue)
    }

    pub fn first_eigenvalue(&self) -> f64 {
        self.modes[0].eigenvalue
    }

    /// Unit coefficient vector of the `k`-th mode (0-based position).
    pub fn basis(&self, k: usize) -> SpectralField {
        let mut c = vec![0.0; self.len()];
        c[k] = 1.0;
        SpectralField(c)
    }

    fn check_len(&self, u: &SpectralField) -> Result<()> {
        contract(u.len() == self.len(), || {
            format!("field has {} coefficients, eigensystem has {}", u.len(), self.len())
        })
    }

    fn check_grid(&self, g: &GridField, layout: GridLayout) -> Result<()> {
        contract(g.layout == layout && g.shape == self.domain.shape(layout), || {
            format!(
                "grid {:?}/{:?} does not match domain {:?}/{:?}",
                g.shape,
                g.layout,
                self.domain.shape(layout),
                layout
            )
        })
    }

    /// Sum `Σ c_n Π_k table_k(n_k)` on the grid of `layout`.
    fn synth(&self, coeffs: &[f64], layout: GridLayout, deriv_axis: Option<usize>) -> GridField {
        let shape = self.domain.shape(layout);
        let mut values = vec![0.0; shape.iter().product()];
        let table = |axis: usize, n: usize| -> &[f64] {
            let t = &self.axes[axis];
            match (layout, deriv_axis == Some(axis)) {
                (GridLayout::Interior, _) => &t.interior[n - 1],
                (GridLayout::Closed, false) => &t.closed[n - 1],
                (GridLayout::Closed, true) => &t.closed_deriv[n - 1],
            }
        };
        for (mode, &c) in self.modes.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            match self.domain.dim() {
                1 => {
                    for (v, t) in values.iter_mut().zip(table(0, mode.index[0])) {
                        *v += c * t;
                    }
                }
                _ => {
                    let (t0, t1) = (table(0, mode.index[0]), table(1, mode.index[1]));
                    for (row, &a) in values.chunks_mut(shape[1]).zip(t0) {
                        let ca = c * a;
                        for (v, &b) in row.iter_mut().zip(t1) {
                            *v += ca * b;
                        }
                    }
                }
            }
        }
        GridField { shape, layout, values }
    }

    fn cell_volume(&self) -> f64 {
        (0..self.domain.dim()).map(|k| self.domain.spacing(k)).product()
    }
}

/// Coefficients of a field in the eigenbasis, aligned with [`EigenSystem::modes`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralField(Vec<f64>);

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// L² inner product by Parseval. Lengths must agree.
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self(self.0.iter().map(|c| a * c).collect())
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        debug_assert_eq!(self.len(), x.len());
        for (s, v) in self.0.iter_mut().zip(&x.0) {
            *s += a * v;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Coefficientwise product with a multiplier sequence.
    pub fn mul_coeffwise(&self, weights: &[f64]) -> Self {
        debug_assert_eq!(self.len(), weights.len());
        Self(self.0.iter().zip(weights).map(|(c, w)| c * w).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridLayout {
    /// Interior nodes only; sine series vanish on the boundary.
    Interior,
    /// Interior plus boundary nodes.
    Closed,
}

/// Row-major samples on the collocation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    shape: Vec<usize>,
    layout: GridLayout,
    values: Vec<f64>,
}

impl GridField {
    pub fn from_values(domain: &DomainSpec, layout: GridLayout, values: Vec<f64>) -> Result<Self> {
        let shape = domain.shape(layout);
        contract(values.len() == shape.iter().product::<usize>(), || {
            format!("{} samples for grid shape {:?}", values.len(), shape)
        })?;
        Ok(Self { shape, layout, values })
    }

    /// Samples `f` at the nodes of `layout`.
    pub fn sample(domain: &DomainSpec, layout: GridLayout, f: impl Fn(&[f64]) -> f64) -> Self {
        let shape = domain.shape(layout);
        let offset = match layout {
            GridLayout::Interior => 1,
            GridLayout::Closed => 0,
        };
        let coord = |axis: usize, j: usize| (j + offset) as f64 * domain.spacing(axis);
        let values = match shape.len() {
            1 => (0..shape[0]).map(|j| f(&[coord(0, j)])).collect(),
            _ => (0..shape[0])
                .flat_map(|a| (0..shape[1]).map(move |b| (a, b)))
                .map(|(a, b)| f(&[coord(0, a), coord(1, b)]))
                .collect(),
        };
        Self { shape, layout, values }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn layout(&self) -> GridLayout {
        self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            layout: self.layout,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two grids of identical shape.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        debug_assert_eq!(self.layout, other.layout);
        Self {
            shape: self.shape.clone(),
            layout: self.layout,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Pointwise values of `u` at the interior collocation nodes.
pub fn synthesize(u: &SpectralField, es: &EigenSystem) -> Result<GridField> {
    es.check_len(u)?;
    Ok(es.synth(u.coeffs(), GridLayout::Interior, None))
}

/// Values of `u` on the closed grid (boundary samples are zero).
pub fn synthesize_closed(u: &SpectralField, es: &EigenSystem) -> Result<GridField> {
    es.check_len(u)?;
    Ok(es.synth(u.coeffs(), GridLayout::Closed, None))
}

/// Discrete sine analysis of interior samples onto the retained modes.
///
/// Exact inverse of [`synthesize`] for in-band fields; for general samples it
/// returns the grid inner products `(g, e_n)_h`.
pub fn analyze(g: &GridField, es: &EigenSystem) -> Result<SpectralField> {
    es.check_grid(g, GridLayout::Interior)?;
    let vol = es.cell_volume();
    let coeffs = es
        .modes
        .iter()
        .map(|mode| {
            let s = match es.domain.dim() {
                1 => g.values.iter().zip(&es.axes[0].interior[mode.index[0] - 1]).map(|(a, b)| a * b).sum(),
                _ => {
                    let t0 = &es.axes[0].interior[mode.index[0] - 1];
                    let t1 = &es.axes[1].interior[mode.index[1] - 1];
                    g.values
                        .chunks(g.shape[1])
                        .zip(t0)
                        .map(|(row, &a)| a * row.iter().zip(t1).map(|(v, b)| v * b).sum::<f64>())
                        .sum::<f64>()
                }
            };
            s * vol
        })
        .collect();
    Ok(SpectralField(coeffs))
}

/// Composite quadrature of grid samples: uniform weights on the interior
/// layout, trapezoid weights (half at the walls) on the closed layout.
pub fn integrate(g: &GridField, domain: &DomainSpec) -> f64 {
    let vol: f64 = (0..domain.dim()).map(|k| domain.spacing(k)).product();
    match g.layout {
        GridLayout::Interior => g.values.iter().sum::<f64>() * vol,
        GridLayout::Closed => {
            let w = |n: usize, j: usize| if j == 0 || j + 1 == n { 0.5 } else { 1.0 };
            let s: f64 = match g.shape.len() {
                1 => g.values.iter().enumerate().map(|(j, v)| w(g.shape[0], j) * v).sum(),
                _ => g
                    .values
                    .chunks(g.shape[1])
                    .enumerate()
                    .map(|(a, row)| {
                        w(g.shape[0], a)
                            * row.iter().enumerate().map(|(b, v)| w(g.shape[1], b) * v).sum::<f64>()
                    })
                    .sum(),
            };
            s * vol
        }
    }
}

pub fn inner_l2(u: &SpectralField, v: &SpectralField) -> Result<f64> {
    contract(u.len() == v.len(), || format!("length mismatch {} vs {}", u.len(), v.len()))?;
    Ok(u.dot(v))
}

/// `‖∇u‖² = Σ λ_n û_n²`
pub fn norm_h1_sq(u: &SpectralField, es: &EigenSystem) -> Result<f64> {
    es.check_len(u)?;
    Ok(u.coeffs().iter().zip(es.eigenvalues()).map(|(c, l)| l * c * c).sum())
}

/// `‖Δu‖² = Σ λ_n² û_n²`
pub fn norm_laplacian_sq(u: &SpectralField, es: &EigenSystem) -> Result<f64> {
    es.check_len(u)?;
    Ok(u.coeffs().iter().zip(es.eigenvalues()).map(|(c, l)| l * l * c * c).sum())
}

/// `(∇u, ∇v) = Σ λ_n û_n v̂_n`
pub fn inner_h1(u: &SpectralField, v: &SpectralField, es: &EigenSystem) -> Result<f64> {
    es.check_len(u)?;
    es.check_len(v)?;
    Ok(u.coeffs().iter().zip(v.coeffs()).zip(es.eigenvalues()).map(|((a, b), l)| l * a * b).sum())
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 2.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("p must be ≥ 2, got {p}")))
    }
}

/// `‖u‖_p^p` by interior-node quadrature.
pub fn lp_norm_pow(u: &SpectralField, p: f64, es: &EigenSystem) -> Result<f64> {
    check_exponent(p)?;
    let g = synthesize(u, es)?;
    Ok(integrate(&g.map(|v| v.abs().powf(p)), es.domain()))
}

pub fn norm_lp(u: &SpectralField, p: f64, es: &EigenSystem) -> Result<f64> {
    Ok(lp_norm_pow(u, p, es)?.powf(1.0 / p))
}

/// Partial derivatives `∂u/∂x_k` on the closed grid, one field per axis.
pub fn gradient_grid(u: &SpectralField, es: &EigenSystem) -> Result<Vec<GridField>> {
    es.check_len(u)?;
    Ok((0..es.domain.dim())
        .map(|axis| es.synth(u.coeffs(), GridLayout::Closed, Some(axis)))
        .collect())
}

/// `Σ_k (∂u/∂x_k)(∂v/∂x_k)` on the closed grid.
pub fn gradient_dot_grid(u: &SpectralField, v: &SpectralField, es: &EigenSystem) -> Result<GridField> {
    let gu = gradient_grid(u, es)?;
    let gv = gradient_grid(v, es)?;
    let mut acc = gu[0].zip_map(&gv[0], |a, b| a * b);
    for (a, b) in gu.iter().zip(&gv).skip(1) {
        let term = a.zip_map(b, |x, y| x * y);
        acc = acc.zip_map(&term, |x, y| x + y);
    }
    Ok(acc)
}

/// `‖|u|^{(p-2)/2} ∇u‖² = ∫ |u|^{p-2} |∇u|²`, trapezoid on the closed grid.
pub fn weighted_gradient_sq(u: &SpectralField, p: f64, es: &EigenSystem) -> Result<f64> {
    check_exponent(p)?;
    let ug = synthesize_closed(u, es)?;
    let grad_sq = gradient_dot_grid(u, u, es)?;
    let integrand = ug.zip_map(&grad_sq, |v, g2| v.abs().powf(p - 2.0) * g2);
    Ok(integrate(&integrand, es.domain()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    fn line(modes: usize, n: usize) -> EigenSystem {
        build_eigensystem(&DomainSpec::interval(PI, n).unwrap(), modes).unwrap()
    }

    fn pseudo_random(len: usize, seed: u64) -> SpectralField {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        SpectralField::new(
            (0..len)
                .map(|k| {
                    s ^= s << 13;
                    s ^= s >> 7;
                    s ^= s << 17;
                    ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) / (1.0 + k as f64)
                })
                .collect(),
        )
    }

    #[test]
    fn eigenvalues_on_interval_of_length_pi() {
        let es = line(3, 8);
        let l: Vec<f64> = es.eigenvalues().collect();
        assert!(close(l[0], 1.0, 1e-14) && close(l[1], 4.0, 1e-14) && close(l[2], 9.0, 1e-14));
    }

    #[test]
    fn eigenvalues_on_interval_of_length_two_pi() {
        let es = build_eigensystem(&DomainSpec::interval(2.0 * PI, 8).unwrap(), 2).unwrap();
        let l: Vec<f64> = es.eigenvalues().collect();
        assert!(close(l[0], 0.25, 1e-14) && close(l[1], 1.0, 1e-14));
    }

    #[test]
    fn square_orders_ties_lexicographically() {
        let d = DomainSpec::rectangle([PI, PI], [8, 8]).unwrap();
        let es = build_eigensystem(&d, 4).unwrap();
        let l: Vec<f64> = es.eigenvalues().collect();
        for (a, b) in l.iter().zip([2.0, 5.0, 5.0, 8.0]) {
            assert!(close(*a, b, 1e-14));
        }
        assert_eq!(es.modes()[1].index, vec![1, 2]);
        assert_eq!(es.modes()[2].index, vec![2, 1]);
    }

    #[test]
    fn rejects_undersampled_grid_and_zero_cap() {
        let d = DomainSpec::interval(PI, 8).unwrap();
        assert!(matches!(build_eigensystem(&d, 5), Err(Error::Config(_))));
        assert!(matches!(build_eigensystem(&d, 0), Err(Error::Config(_))));
        assert!(DomainSpec::interval(PI, 3).is_err());
        assert!(DomainSpec::interval(-1.0, 8).is_err());
        assert!(DomainSpec::new(vec![1.0; 3], vec![8; 3]).is_err());
    }

    #[test]
    fn synthesis_of_single_modes() {
        // N = 9 puts node j = 5 at x = π/2.
        let es = line(3, 9);
        let g = synthesize(&es.basis(0), &es).unwrap();
        assert!(close(g.values()[4], (2.0 / PI).sqrt(), 1e-14));
        let g = synthesize(&es.basis(1), &es).unwrap();
        assert!(g.values()[4].abs() < 1e-14);
        let g = synthesize(&SpectralField::zeros(3), &es).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn size_mismatch_is_a_contract_violation() {
        let es = line(3, 8);
        assert!(matches!(synthesize(&SpectralField::zeros(4), &es), Err(Error::Contract(_))));
        let other = DomainSpec::interval(PI, 10).unwrap();
        let g = GridField::sample(&other, GridLayout::Interior, |_| 0.0);
        assert!(matches!(analyze(&g, &es), Err(Error::Contract(_))));
        assert!(inner_l2(&SpectralField::zeros(2), &SpectralField::zeros(3)).is_err());
    }

    #[test]
    fn analysis_round_trip_and_sampled_mode() {
        let es = line(16, 32);
        for seed in 0..10 {
            let u = pseudo_random(16, seed);
            let back = analyze(&synthesize(&u, &es).unwrap(), &es).unwrap();
            let err = back.sub(&u).norm() / u.norm();
            assert!(err < 1e-12, "round trip error {err}");
        }
        let d = es.domain().clone();
        let e2 = GridField::sample(&d, GridLayout::Interior, |x| (2.0 / PI).sqrt() * (2.0 * x[0]).sin());
        let c = analyze(&e2, &es).unwrap();
        for (k, v) in c.coeffs().iter().enumerate() {
            let want = if k == 1 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12);
        }
        let zero = GridField::sample(&d, GridLayout::Interior, |_| 0.0);
        assert!(analyze(&zero, &es).unwrap().coeffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn round_trip_on_rectangle() {
        let d = DomainSpec::rectangle([PI, 2.0], [16, 20]).unwrap();
        let es = build_eigensystem(&d, 12).unwrap();
        let u = pseudo_random(12, 3);
        let back = analyze(&synthesize(&u, &es).unwrap(), &es).unwrap();
        assert!(back.sub(&u).norm() < 1e-12 * u.norm());
    }

    #[test]
    fn inner_products_and_h1() {
        let es = line(3, 8);
        assert!(close(inner_l2(&es.basis(0), &es.basis(0)).unwrap(), 1.0, 1e-15));
        assert_eq!(inner_l2(&es.basis(0), &es.basis(1)).unwrap(), 0.0);
        let a = SpectralField::new(vec![3.0, 4.0]);
        let b = SpectralField::new(vec![1.0, 1.0]);
        assert_eq!(inner_l2(&a, &b).unwrap(), 7.0);
        assert!(close(norm_h1_sq(&es.basis(0), &es).unwrap(), 1.0, 1e-14));
        assert!(close(norm_h1_sq(&es.basis(2), &es).unwrap(), 9.0, 1e-14));
        let u = SpectralField::new(vec![1.0, 1.0, 0.0]);
        assert!(close(norm_h1_sq(&u, &es).unwrap(), 5.0, 1e-14));
    }

    #[test]
    fn lp_norms() {
        let es = line(3, 16);
        assert!(close(norm_lp(&es.basis(0), 2.0, &es).unwrap(), 1.0, 1e-10));
        // ∫_0^π (2/π)² sin⁴ = (4/π²)(3π/8) = 3/(2π)
        assert!(close(lp_norm_pow(&es.basis(0), 4.0, &es).unwrap(), 1.5 / PI, 1e-10));
        assert_eq!(norm_lp(&SpectralField::zeros(3), 3.0, &es).unwrap(), 0.0);
        assert!(matches!(norm_lp(&es.basis(0), 1.5, &es), Err(Error::Config(_))));
    }

    #[test]
    fn gradients() {
        let es = line(3, 9);
        let g = gradient_grid(&es.basis(0), &es).unwrap();
        // closed node j = 5 sits at π/2
        assert!(g[0].values()[5].abs() < 1e-12);
        for (k, want) in [(0usize, 1.0), (1, 4.0)] {
            let gg = gradient_dot_grid(&es.basis(k), &es.basis(k), &es).unwrap();
            assert!(close(integrate(&gg, es.domain()), want, 1e-10));
        }
    }

    #[test]
    fn quadrature_agrees_with_parseval() {
        let es = line(12, 24);
        for seed in 0..10 {
            let u = pseudo_random(12, seed);
            let v = pseudo_random(12, seed + 100);
            let gu = synthesize(&u, &es).unwrap();
            let gv = synthesize(&v, &es).unwrap();
            let quad = integrate(&gu.zip_map(&gv, |a, b| a * b), es.domain());
            assert!(close(quad, u.dot(&v), 1e-12));
            let lp2 = norm_lp(&u, 2.0, &es).unwrap().powi(2);
            assert!((lp2 - u.norm_sq()).abs() <= 1e-8 * u.norm_sq());
            let h1 = integrate(&gradient_dot_grid(&u, &u, &es).unwrap(), es.domain());
            assert!(close(h1, norm_h1_sq(&u, &es).unwrap(), 1e-11));
        }
    }

    #[test]
    fn weighted_gradient_reduces_to_h1_for_p_two() {
        let d = DomainSpec::rectangle([PI, PI], [16, 16]).unwrap();
        let es = build_eigensystem(&d, 10).unwrap();
        let u = pseudo_random(10, 9);
        let w = weighted_gradient_sq(&u, 2.0, &es).unwrap();
        assert!(close(w, norm_h1_sq(&u, &es).unwrap(), 1e-11));
    }
}
