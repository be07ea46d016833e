//! Galerkin solver for the linearized bubble operator on the disk and the
//! projected fixed point that produces the correction `φ` together with the
//! constants `c₀, c₁, c₂`.
//!
//! Fields are expanded in real Fourier modes `cos nθ`, `sin nθ` times the
//! normalized Zernike radial functions `r^n P_k^{(0,n)}(2r² - 1)`, so every
//! basis function is a polynomial in `(x, y)` and regular at the origin.
//! Per mode the weak form `∫∇u∇ζ = ∫fζ + ∮gζ` becomes a small dense system.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz_residual::AnsatzField;
use crate::curvature_model::CurvatureData;
use crate::disk_geometry::{mobius, BubbleChart, BubbleParams};
use crate::error::{Error, Result};
use crate::quadrature::{circle_grid, disk_grid, graded_disk_grid, PolarTensor, QuadratureGrid, Rule1d};

pub const DEFAULT_MODES: usize = 64;
pub const DEFAULT_RADIAL: usize = 32;

/// Relative defect `|∫f + ∮g| / (∫|f| + ∮|g|)` accepted by the Neumann solve.
pub const COMPATIBILITY_TOL: f64 = 1e-9;

pub const FIELD_CSV_HEADER: &str = "r,theta,phi";

/// Truncation of the modal expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralConfig {
    /// Highest angular frequency `M`.
    pub modes: usize,
    /// Radial functions per angular mode.
    pub radial: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { modes: DEFAULT_MODES, radial: DEFAULT_RADIAL }
    }
}

impl SpectralConfig {
    fn validate(&self) -> Result<()> {
        if self.modes < 2 || self.radial < 2 {
            return Err(Error::InvalidParameter(format!(
                "spectral truncation needs at least 2 modes and 2 radial functions, got {} and {}",
                self.modes, self.radial
            )));
        }
        Ok(())
    }

    /// Gauss–Legendre points in `r`; exact for every stiffness entry.
    fn quadrature_points(&self) -> usize {
        self.modes + 2 * self.radial + 16
    }

    /// Angular points of the uniform sampling grid (3/2 rule on `2M`).
    fn angular_points(&self) -> usize {
        3 * self.modes + 4
    }

    fn block(&self) -> usize {
        (self.modes + 1) * self.radial
    }
}

/// Normalized Zernike radial functions `√(2(n+2k+1)) r^n P_k^{(0,n)}(2r²-1)`
/// and their `r`-derivatives for `k < values.len()`. The functions are
/// orthonormal in `L²(r dr)` on `[0, 1]` and equal `√(2(n+2k+1))` at `r = 1`.
pub fn zernike_family(n: usize, r: f64, values: &mut [f64], derivs: &mut [f64]) {
    debug_assert_eq!(values.len(), derivs.len());
    let b = n as f64;
    let x = 2.0 * r * r - 1.0;
    let rn = r.powi(n as i32);
    let drn = if n == 0 { 0.0 } else { b * r.powi(n as i32 - 1) };
    let (mut p_prev, mut p, mut dp_prev, mut dp) = (0.0, 1.0, 0.0, 0.0);
    for k in 0..values.len() {
        let kf = k as f64;
        let c = (2.0 * (b + 2.0 * kf + 1.0)).sqrt();
        values[k] = c * rn * p;
        derivs[k] = c * (drn * p + rn * 4.0 * r * dp);
        let (p_next, dp_next) = if k == 0 {
            (1.0 + 0.5 * (b + 2.0) * (x - 1.0), 0.5 * (b + 2.0))
        } else {
            let s = 2.0 * kf + b;
            let c1 = 2.0 * (kf + 1.0) * (kf + b + 1.0) * s;
            let lin = (s + 1.0) * (s + 2.0) * s;
            let con = -(s + 1.0) * b * b;
            let c3 = 2.0 * kf * (kf + b) * (s + 2.0);
            (((lin * x + con) * p - c3 * p_prev) / c1, (lin * p + (lin * x + con) * dp - c3 * dp_prev) / c1)
        };
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
}

fn boundary_value(n: usize, k: usize) -> f64 {
    (2.0 * (n + 2 * k + 1) as f64).sqrt()
}

/// `∮ cos² nθ`, `∮ sin² nθ`.
fn angular_norm(n: usize) -> f64 {
    if n == 0 {
        2.0 * PI
    } else {
        PI
    }
}

/// Real field `Σ_n Σ_k (a_{nk} cos nθ + b_{nk} sin nθ) ψ_{nk}(r)`. The `sin`
/// coefficients of mode `0` are kept at zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralField {
    config: SpectralConfig,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(config: SpectralConfig) -> Self {
        Self { config, cos: vec![0.0; config.block()], sin: vec![0.0; config.block()] }
    }

    /// Galerkin (`L²`) projection of `u` onto the truncated basis.
    pub fn from_function(config: SpectralConfig, u: impl Fn(Complex64) -> f64 + Sync) -> Result<Self> {
        config.validate()?;
        let grid = disk_grid(config.quadrature_points(), config.angular_points());
        let values = grid.sample(u);
        let mut field = Self::zeros(config);
        let (cos, sin) = project_tensor(&config, &grid.tensor, &values);
        for n in 0..=config.modes {
            let norm = angular_norm(n);
            for k in 0..config.radial {
                let i = n * config.radial + k;
                field.cos[i] = cos[i] / norm;
                field.sin[i] = if n == 0 { 0.0 } else { sin[i] / norm };
            }
        }
        Ok(field)
    }

    pub fn config(&self) -> SpectralConfig {
        self.config
    }

    pub fn cos_coefficients(&self, n: usize) -> &[f64] {
        let k = self.config.radial;
        &self.cos[n * k..(n + 1) * k]
    }

    pub fn sin_coefficients(&self, n: usize) -> &[f64] {
        let k = self.config.radial;
        &self.sin[n * k..(n + 1) * k]
    }

    fn set_mode(&mut self, n: usize, sine: bool, coeffs: &[f64]) {
        let k = self.config.radial;
        let target = if sine { &mut self.sin } else { &mut self.cos };
        target[n * k..(n + 1) * k].copy_from_slice(coeffs);
    }

    fn mode(&self, n: usize, sine: bool) -> DVector<f64> {
        DVector::from_column_slice(if sine { self.sin_coefficients(n) } else { self.cos_coefficients(n) })
    }

    pub fn is_zero(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|&c| c == 0.0)
    }

    /// `self + scale · other`.
    pub fn add_scaled(&self, other: &SpectralField, scale: f64) -> SpectralField {
        assert_eq!(self.config, other.config, "fields must share a truncation");
        let cos = self.cos.iter().zip(&other.cos).map(|(a, b)| a + scale * b).collect();
        let sin = self.sin.iter().zip(&other.sin).map(|(a, b)| a + scale * b).collect();
        SpectralField { config: self.config, cos, sin }
    }

    /// Radial mode amplitudes `(u_n^c, u_n^s)` and their derivatives at `r`.
    fn radial_profiles(&self, r: f64) -> RadialProfiles {
        let (m, kk) = (self.config.modes, self.config.radial);
        let mut out = RadialProfiles::new(m);
        let mut v = vec![0.0; kk];
        let mut d = vec![0.0; kk];
        for n in 0..=m {
            zernike_family(n, r, &mut v, &mut d);
            let (c, s) = (self.cos_coefficients(n), self.sin_coefficients(n));
            for k in 0..kk {
                out.cos[n] += c[k] * v[k];
                out.sin[n] += s[k] * v[k];
                out.dcos[n] += c[k] * d[k];
                out.dsin[n] += s[k] * d[k];
            }
        }
        out
    }

    pub fn value(&self, z: Complex64) -> f64 {
        let p = self.radial_profiles(z.norm());
        let theta = z.arg();
        (0..=self.config.modes)
            .map(|n| {
                let (s, c) = (n as f64 * theta).sin_cos();
                p.cos[n] * c + p.sin[n] * s
            })
            .sum()
    }

    /// Cartesian gradient `[∂ₓu, ∂ᵧu]`.
    pub fn gradient(&self, z: Complex64) -> [f64; 2] {
        // the polar formulas are regular but need r > 0
        let r = z.norm().max(1e-12);
        let theta = z.arg();
        let p = self.radial_profiles(r);
        let (mut ur, mut ut) = (0.0, 0.0);
        for n in 0..=self.config.modes {
            let nf = n as f64;
            let (s, c) = (nf * theta).sin_cos();
            ur += p.dcos[n] * c + p.dsin[n] * s;
            ut += nf * (p.sin[n] * c - p.cos[n] * s);
        }
        ut /= r;
        let (st, ct) = theta.sin_cos();
        [ur * ct - ut * st, ur * st + ut * ct]
    }

    /// Values at the nodes of a polar tensor, in node order.
    pub fn eval_tensor(&self, tensor: &PolarTensor) -> Vec<f64> {
        let trig = TrigTable::new(&tensor.angles, self.config.modes);
        tensor
            .radii
            .par_iter()
            .flat_map_iter(|&r| {
                let p = self.radial_profiles(r);
                let trig = &trig;
                (0..tensor.angles.len()).map(move |j| {
                    let (c, s) = trig.row(j);
                    (0..=self.config.modes).map(|n| p.cos[n] * c[n] + p.sin[n] * s[n]).sum::<f64>()
                })
            })
            .collect()
    }

    pub fn eval_grid(&self, grid: &QuadratureGrid) -> Vec<f64> {
        self.eval_tensor(&grid.tensor)
    }

    /// `‖∇u‖_{L²}` from the modal radial profiles.
    pub fn h1_norm(&self) -> f64 {
        let rule = Rule1d::gauss_legendre(self.config.quadrature_points(), 0.0, 1.0);
        let total: f64 = rule
            .nodes
            .par_iter()
            .zip(&rule.weights)
            .map(|(&r, &w)| {
                let p = self.radial_profiles(r);
                let mut acc = 0.0;
                for n in 0..=self.config.modes {
                    let n2 = (n * n) as f64;
                    let e =
                        p.dcos[n].powi(2) + p.dsin[n].powi(2) + n2 * (p.cos[n].powi(2) + p.sin[n].powi(2)) / (r * r);
                    acc += angular_norm(n) * e;
                }
                w * r * acc
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        total.max(0.0).sqrt()
    }

    /// Samples `(r, θ, u)` on a uniform polar lattice for CSV export.
    pub fn dump(&self, nr: usize, ntheta: usize) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity((nr + 1) * ntheta);
        for i in 0..=nr {
            let r = i as f64 / nr.max(1) as f64;
            for j in 0..ntheta {
                let theta = 2.0 * PI * j as f64 / ntheta as f64;
                out.push([r, theta, self.value(Complex64::from_polar(r, theta))]);
            }
        }
        out
    }
}

/// `‖∇u‖_{L²(𝔻²)}`.
pub fn h1_norm(field: &SpectralField) -> f64 {
    field.h1_norm()
}

struct RadialProfiles {
    cos: Vec<f64>,
    sin: Vec<f64>,
    dcos: Vec<f64>,
    dsin: Vec<f64>,
}

impl RadialProfiles {
    fn new(modes: usize) -> Self {
        Self {
            cos: vec![0.0; modes + 1],
            sin: vec![0.0; modes + 1],
            dcos: vec![0.0; modes + 1],
            dsin: vec![0.0; modes + 1],
        }
    }
}

struct TrigTable {
    modes: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TrigTable {
    fn new(angles: &[f64], modes: usize) -> Self {
        let mut cos = Vec::with_capacity(angles.len() * (modes + 1));
        let mut sin = Vec::with_capacity(cos.capacity());
        for &t in angles {
            for n in 0..=modes {
                let (s, c) = (n as f64 * t).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Self { modes, cos, sin }
    }

    fn row(&self, j: usize) -> (&[f64], &[f64]) {
        let w = self.modes + 1;
        (&self.cos[j * w..(j + 1) * w], &self.sin[j * w..(j + 1) * w])
    }
}

/// `∫∫ v ψ_{nk}(r) {cos, sin}(nθ) r dr dθ` for every basis function, from
/// samples on a polar tensor (radial weights include `r`).
fn project_tensor(config: &SpectralConfig, tensor: &PolarTensor, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (m, kk) = (config.modes, config.radial);
    let nt = tensor.angles.len();
    assert_eq!(values.len(), tensor.radii.len() * nt, "sample count must match the tensor");
    let trig = TrigTable::new(&tensor.angles, m);
    // per-radius contributions are summed in index order so results do not
    // depend on work stealing
    let rows: Vec<(Vec<f64>, Vec<f64>)> = tensor
        .radii
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let mut cos = vec![0.0; config.block()];
            let mut sin = vec![0.0; config.block()];
            let row = &values[i * nt..(i + 1) * nt];
            let mut ac = vec![0.0; m + 1];
            let mut as_ = vec![0.0; m + 1];
            for (j, (&v, &w)) in row.iter().zip(&tensor.angular_weights).enumerate() {
                let (c, s) = trig.row(j);
                let vw = v * w;
                for n in 0..=m {
                    ac[n] += vw * c[n];
                    as_[n] += vw * s[n];
                }
            }
            let rw = tensor.radial_weights[i];
            let mut psi = vec![0.0; kk];
            let mut dpsi = vec![0.0; kk];
            for n in 0..=m {
                zernike_family(n, r, &mut psi, &mut dpsi);
                for k in 0..kk {
                    cos[n * kk + k] += rw * ac[n] * psi[k];
                    sin[n * kk + k] += rw * as_[n] * psi[k];
                }
            }
            (cos, sin)
        })
        .collect();
    let mut cos = vec![0.0; config.block()];
    let mut sin = vec![0.0; config.block()];
    for (c, s) in rows {
        cos.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
        sin.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
    }
    (cos, sin)
}

/// Galerkin load `∫fζ + ∮gζ` for every basis function `ζ`, with the total
/// mass `∫f + ∮g` and the scale `∫|f| + ∮|g|` used by the compatibility test.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalLoad {
    config: SpectralConfig,
    cos: Vec<f64>,
    sin: Vec<f64>,
    pub mass: f64,
    pub abs_mass: f64,
}

impl ModalLoad {
    fn mode(&self, n: usize, sine: bool) -> DVector<f64> {
        let k = self.config.radial;
        let src = if sine { &self.sin } else { &self.cos };
        DVector::from_column_slice(&src[n * k..(n + 1) * k])
    }

    pub fn compatibility_defect(&self) -> f64 {
        self.mass.abs() / self.abs_mass.max(1.0)
    }
}

/// How the linearized operator `𝓛₀` is inverted on `𝐊^⊥ ∩ 𝐇`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinearMethod {
    /// Neumann-series sweeps around `-Δ` with kernel deflation.
    Picard,
    /// Factored per-mode Galerkin systems.
    Dense,
    /// Picard, falling back to the dense solve when the sweeps stall.
    #[default]
    Auto,
}

const PICARD_MAX_SWEEPS: usize = 400;
const PICARD_TOL: f64 = 1e-14;
const PICARD_STALL: usize = 6;

type Lu = LU<f64, Dyn, Dyn>;

/// Per-mode Galerkin matrices for one bubble `V_ξ`.
#[derive(Debug, Clone)]
pub struct SpectralSolver {
    config: SpectralConfig,
    bubble: BubbleParams,
    xi: Complex64,
    /// `∫∇ψ_k∇ψ_l` per mode.
    stiffness: Vec<DMatrix<f64>>,
    /// Weighted pairing `2K∫e^Vψ_kψ_l + hβ∮ψ_kψ_l` per mode.
    weighted: Vec<DMatrix<f64>>,
    /// `⟨ψ_{0k}, 1⟩` in the weighted pairing: the `𝐇_ξ` constraint row.
    constraint: DVector<f64>,
    /// `∫ψ_{0k} + ∮ψ_{0k}`: load of a unit constant `c₀`.
    constant_load: DVector<f64>,
    /// Coefficients of `ρ(r) = r / (φ² + K r²)` in the mode-1 basis.
    kernel_profile: DVector<f64>,
    laplace: Vec<Lu>,
    linearized: Vec<Lu>,
}

impl SpectralSolver {
    pub fn new(config: SpectralConfig, bubble: BubbleParams, xi: Complex64) -> Result<Self> {
        config.validate()?;
        if !(bubble.phi > 0.0) {
            return Err(Error::Domain(format!("φ(ξ) = {} is not positive", bubble.phi)));
        }
        let (m, kk) = (config.modes, config.radial);
        let rule = Rule1d::gauss_legendre(config.quadrature_points(), 0.0, 1.0);
        let k_xi = bubble.gaussian;
        let boundary_weight = bubble.geodesic * bubble.boundary_scale();

        let mats: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..=m)
            .into_par_iter()
            .map(|n| {
                let norm = angular_norm(n);
                let n2 = (n * n) as f64;
                let mut s = DMatrix::zeros(kk, kk);
                let mut w = DMatrix::zeros(kk, kk);
                let mut v = vec![0.0; kk];
                let mut d = vec![0.0; kk];
                for (&r, &wq) in rule.nodes.iter().zip(&rule.weights) {
                    zernike_family(n, r, &mut v, &mut d);
                    let ev = bubble.bubble_exp(Complex64::new(r, 0.0));
                    let a = wq * r;
                    for k in 0..kk {
                        for l in 0..=k {
                            s[(k, l)] += a * (d[k] * d[l] + n2 * v[k] * v[l] / (r * r));
                            w[(k, l)] += a * 2.0 * k_xi * ev * v[k] * v[l];
                        }
                    }
                }
                for k in 0..kk {
                    for l in 0..=k {
                        w[(k, l)] += boundary_weight * boundary_value(n, k) * boundary_value(n, l);
                        s[(k, l)] *= norm;
                        w[(k, l)] *= norm;
                        s[(l, k)] = s[(k, l)];
                        w[(l, k)] = w[(k, l)];
                    }
                }
                (s, w)
            })
            .collect();
        let (stiffness, weighted): (Vec<_>, Vec<_>) = mats.into_iter().unzip();

        let mut unit = DVector::zeros(kk);
        unit[0] = 1.0 / 2f64.sqrt();
        let constraint = &weighted[0] * &unit;
        let mut constant_load = DVector::zeros(kk);
        let mut kernel_profile = DVector::zeros(kk);
        let mut v = vec![0.0; kk];
        let mut d = vec![0.0; kk];
        for (&r, &wq) in rule.nodes.iter().zip(&rule.weights) {
            zernike_family(0, r, &mut v, &mut d);
            for k in 0..kk {
                constant_load[k] += 2.0 * PI * wq * r * v[k];
            }
            zernike_family(1, r, &mut v, &mut d);
            let rho = r / (bubble.phi * bubble.phi + k_xi * r * r);
            for k in 0..kk {
                kernel_profile[k] += wq * r * rho * v[k];
            }
        }
        for k in 0..kk {
            constant_load[k] += 2.0 * PI * boundary_value(0, k);
        }
        let kernel_load = &weighted[1] * &kernel_profile;

        let laplace = (0..=m)
            .map(|n| match n {
                0 => bordered(&stiffness[0], &constant_load, &constraint),
                _ => stiffness[n].clone().lu(),
            })
            .collect();
        let linearized = (0..=m)
            .map(|n| {
                let a = &stiffness[n] - &weighted[n];
                match n {
                    0 => bordered(&a, &constant_load, &constraint),
                    1 => bordered(&a, &kernel_load, &kernel_load),
                    _ => a.lu(),
                }
            })
            .collect();

        Ok(Self {
            config,
            bubble,
            xi,
            stiffness,
            weighted,
            constraint,
            constant_load,
            kernel_profile,
            laplace,
            linearized,
        })
    }

    pub fn at(config: SpectralConfig, data: &CurvatureData, xi: Complex64) -> Result<Self> {
        Self::new(config, BubbleParams::at(data, xi)?, xi)
    }

    pub fn config(&self) -> SpectralConfig {
        self.config
    }

    pub fn bubble(&self) -> &BubbleParams {
        &self.bubble
    }

    /// Kernel norm `π / A₀`.
    pub fn kernel_norm(&self) -> f64 {
        PI / self.bubble.kernel_constant()
    }

    /// Galerkin load from samples on a disk tensor grid and a circle grid.
    pub fn load_from_samples(
        &self,
        interior: &QuadratureGrid,
        f: &[f64],
        boundary: &QuadratureGrid,
        g: &[f64],
    ) -> ModalLoad {
        let (mut cos, mut sin) = project_tensor(&self.config, &interior.tensor, f);
        let (bc, bs) = project_tensor(&self.config, &boundary.tensor, g);
        cos.iter_mut().zip(&bc).for_each(|(a, b)| *a += b);
        sin.iter_mut().zip(&bs).for_each(|(a, b)| *a += b);
        let abs_f: Vec<f64> = f.iter().map(|v| v.abs()).collect();
        let abs_g: Vec<f64> = g.iter().map(|v| v.abs()).collect();
        ModalLoad {
            config: self.config,
            cos,
            sin,
            mass: interior.integrate_values(f) + boundary.integrate_values(g),
            abs_mass: interior.integrate_values(&abs_f) + boundary.integrate_values(&abs_g),
        }
    }

    /// Galerkin load of smooth data on uniform grids.
    pub fn load_from_fns(&self, f: impl Fn(Complex64) -> f64 + Sync, g: impl Fn(Complex64) -> f64 + Sync) -> ModalLoad {
        let interior = disk_grid(self.config.quadrature_points(), self.config.angular_points());
        let boundary = circle_grid(self.config.angular_points());
        let (fv, gv) = (interior.sample(f), boundary.sample(g));
        self.load_from_samples(&interior, &fv, &boundary, &gv)
    }

    /// `Π_𝐋` on a load: subtracts the constant `(∫f + ∮g)/(3π)` from both data.
    pub fn apply_pi_l(&self, load: &ModalLoad) -> (ModalLoad, f64) {
        let c = load.mass / (3.0 * PI);
        let mut out = load.clone();
        for k in 0..self.config.radial {
            out.cos[k] -= c * self.constant_load[k];
        }
        out.mass -= 3.0 * PI * c;
        (out, c)
    }

    /// `𝒥_ξ`: Neumann problem `-Δu = f`, `∂_ν u = g` normalized into `𝐇_ξ`.
    pub fn solve_neumann_load(&self, load: &ModalLoad) -> Result<SpectralField> {
        let defect = load.compatibility_defect();
        if defect > COMPATIBILITY_TOL {
            return Err(Error::Compatibility { defect, tolerance: COMPATIBILITY_TOL });
        }
        Ok(self.solve_modes(load, &self.laplace)?.0)
    }

    pub fn solve_neumann(
        &self,
        f: impl Fn(Complex64) -> f64 + Sync,
        g: impl Fn(Complex64) -> f64 + Sync,
    ) -> Result<SpectralField> {
        self.solve_neumann_load(&self.load_from_fns(f, g))
    }

    /// Solves every mode with the given factorizations. Returns the field and
    /// the border multipliers `[mode 0, mode 1 cos, mode 1 sin]`.
    fn solve_modes(&self, load: &ModalLoad, lus: &[Lu]) -> Result<(SpectralField, [f64; 3])> {
        let kk = self.config.radial;
        let parts: Vec<(usize, bool)> = (0..=self.config.modes)
            .flat_map(|n| [(n, false), (n, true)])
            .filter(|&(n, sine)| !(n == 0 && sine))
            .collect();
        let solved: Vec<(usize, bool, Vec<f64>, f64)> = parts
            .par_iter()
            .map(|&(n, sine)| {
                let lu = &lus[n];
                let rhs = load.mode(n, sine);
                let rhs = if lu.l().nrows() > kk { rhs.push(0.0) } else { rhs };
                let x = lu
                    .solve(&rhs)
                    .ok_or_else(|| Error::LinearSolver(format!("singular Galerkin system in mode {n}")))?;
                let mult = if x.len() > kk { x[kk] } else { 0.0 };
                Ok((n, sine, x.as_slice()[..kk].to_vec(), mult))
            })
            .collect::<Result<_>>()?;
        let mut field = SpectralField::zeros(self.config);
        let mut mult = [0.0; 3];
        for (n, sine, coeffs, mu) in solved {
            field.set_mode(n, sine, &coeffs);
            match (n, sine) {
                (0, _) => mult[0] = mu,
                (1, false) => mult[1] = mu,
                (1, true) => mult[2] = mu,
                _ => {}
            }
        }
        Ok((field, mult))
    }

    /// Weighted pairing `2K(ξ)∫e^V uv + h(ξ)e^{V/2}∮uv`.
    pub fn pairing(&self, u: &SpectralField, v: &SpectralField) -> f64 {
        (0..=self.config.modes)
            .map(|n| {
                let w = &self.weighted[n];
                let c = u.mode(n, false).dot(&(w * v.mode(n, false)));
                let s = if n == 0 { 0.0 } else { u.mode(n, true).dot(&(w * v.mode(n, true))) };
                c + s
            })
            .sum()
    }

    /// `‖∇u‖²` from the stiffness matrices.
    pub fn energy(&self, u: &SpectralField) -> f64 {
        (0..=self.config.modes)
            .map(|n| {
                let s = &self.stiffness[n];
                let c = u.mode(n, false);
                let mut e = c.dot(&(s * &c));
                if n > 0 {
                    let sn = u.mode(n, true);
                    e += sn.dot(&(s * &sn));
                }
                e
            })
            .sum()
    }

    /// `2K(ξ)∫e^Vφ + h(ξ)e^{V/2}∮φ`; zero on `𝐇_ξ`.
    pub fn normalization_defect(&self, u: &SpectralField) -> f64 {
        self.constraint.dot(&u.mode(0, false))
    }

    /// Kernel function `Z₁` (`which == 1`) or `Z₂` in the modal basis.
    pub fn kernel_field(&self, which: u8) -> SpectralField {
        let (s, c) = self.xi.arg().sin_cos();
        let (a, b) = if which == 1 { (c, s) } else { (-s, c) };
        let mut field = SpectralField::zeros(self.config);
        let profile = self.kernel_profile.as_slice();
        field.set_mode(1, false, &profile.iter().map(|p| a * p).collect::<Vec<_>>());
        field.set_mode(1, true, &profile.iter().map(|p| b * p).collect::<Vec<_>>());
        field
    }

    /// Removes the `Z₁, Z₂` components in the weighted pairing; the returned
    /// coefficients are the removed multiples of `Z_i`.
    pub fn project_out_kernel(&self, u: &SpectralField) -> (SpectralField, [f64; 2]) {
        let mut out = u.clone();
        let mut coeffs = [0.0; 2];
        for (i, which) in [1u8, 2].into_iter().enumerate() {
            let z = self.kernel_field(which);
            coeffs[i] = self.pairing(&out, &z) / self.pairing(&z, &z);
            out = out.add_scaled(&z, -coeffs[i]);
        }
        (out, coeffs)
    }

    /// Inverts `𝓛₀` on `𝐊^⊥ ∩ 𝐇` for a compatible load. Returns the field,
    /// the method actually used and the number of Picard sweeps.
    pub fn solve_linearized(
        &self,
        load: &ModalLoad,
        method: LinearMethod,
    ) -> Result<(SpectralField, LinearMethod, usize)> {
        match method {
            LinearMethod::Dense => Ok((self.solve_modes(load, &self.linearized)?.0, LinearMethod::Dense, 0)),
            LinearMethod::Picard => self.picard(load).map(|(f, n)| (f, LinearMethod::Picard, n)),
            LinearMethod::Auto => match self.picard(load) {
                Ok((f, n)) => Ok((f, LinearMethod::Picard, n)),
                Err(Error::LinearSolver(_)) => {
                    Ok((self.solve_modes(load, &self.linearized)?.0, LinearMethod::Dense, 0))
                }
                Err(e) => Err(e),
            },
        }
    }

    /// `ψ ↦ 𝒥_ξ(2K e^V ψ + f, h e^{V/2} ψ + g)` with kernel deflation.
    fn picard(&self, load: &ModalLoad) -> Result<(SpectralField, usize)> {
        let mut psi = SpectralField::zeros(self.config);
        let mut prev = f64::INFINITY;
        let mut stalls = 0;
        for sweep in 1..=PICARD_MAX_SWEEPS {
            let mut rhs = load.clone();
            for n in 0..=self.config.modes {
                for sine in [false, true] {
                    if n == 0 && sine {
                        continue;
                    }
                    let add = &self.weighted[n] * psi.mode(n, sine);
                    let kk = self.config.radial;
                    let dst = if sine { &mut rhs.sin } else { &mut rhs.cos };
                    dst[n * kk..(n + 1) * kk].iter_mut().zip(add.iter()).for_each(|(a, b)| *a += b);
                }
            }
            let (next, _) = self.solve_modes(&rhs, &self.laplace)?;
            let (next, _) = self.project_out_kernel(&next);
            let diff = self.energy(&next.add_scaled(&psi, -1.0)).sqrt();
            let size = self.energy(&next).sqrt();
            psi = next;
            if diff <= PICARD_TOL * size || size == 0.0 {
                return Ok((psi, sweep));
            }
            stalls = if diff > 0.95 * prev { stalls + 1 } else { 0 };
            if stalls >= PICARD_STALL {
                return Err(Error::LinearSolver(format!("Picard sweeps stalled at step {sweep} (update {diff:e})")));
            }
            prev = diff;
        }
        Err(Error::LinearSolver(format!("Picard sweeps did not converge in {PICARD_MAX_SWEEPS} steps")))
    }
}

fn bordered(a: &DMatrix<f64>, column: &DVector<f64>, row: &DVector<f64>) -> Lu {
    let k = a.nrows();
    let mut b = DMatrix::zeros(k + 1, k + 1);
    b.view_mut((0, 0), (k, k)).copy_from(a);
    for i in 0..k {
        b[(i, k)] = -column[i];
        b[(k, i)] = row[i];
    }
    b.lu()
}

/// `𝒥_ξ` for smooth data with the default truncation.
pub fn solve_neumann(
    f: impl Fn(Complex64) -> f64 + Sync,
    g: impl Fn(Complex64) -> f64 + Sync,
    data: &CurvatureData,
    xi: Complex64,
) -> Result<SpectralField> {
    SpectralSolver::at(SpectralConfig::default(), data, xi)?.solve_neumann(f, g)
}

/// Removes the kernel components of `u`; coefficients are in units of `Z_i`
/// (that is, normalized by the kernel norm `π/A₀`).
pub fn project_out_kernel(u: &SpectralField, data: &CurvatureData, xi: Complex64) -> Result<(SpectralField, [f64; 2])> {
    Ok(SpectralSolver::at(u.config(), data, xi)?.project_out_kernel(u))
}

/// `Π_𝐋` on sampled data: returns `(f̃, g̃, c)` with `c = (∫f + ∮g)/(3π)`.
pub fn apply_pi_l(
    f: &[f64],
    interior: &QuadratureGrid,
    g: &[f64],
    boundary: &QuadratureGrid,
) -> (Vec<f64>, Vec<f64>, f64) {
    let c = (interior.integrate_values(f) + boundary.integrate_values(g)) / (3.0 * PI);
    (f.iter().map(|v| v - c).collect(), g.iter().map(|v| v - c).collect(), c)
}

/// Controls of the projected fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub spectral: SpectralConfig,
    pub linear: LinearMethod,
    /// Lower bounds for the graded projection grid.
    pub grid_nr: usize,
    pub grid_ntheta: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-10,
            spectral: SpectralConfig::default(),
            linear: LinearMethod::Auto,
            grid_nr: 64,
            grid_ntheta: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    pub chart: BubbleChart,
    #[serde(skip)]
    pub phi: SpectralField,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub iterations: usize,
    /// `‖φ_{k+1} - φ_k‖` per step.
    pub steps: Vec<f64>,
    /// `‖φ_{k+1} - φ_k‖ / ‖φ_k - φ_{k-1}‖` from the second step on.
    pub ratios: Vec<f64>,
    pub phi_norm: f64,
    /// `‖𝒯(φ) - φ‖` for the returned `φ`.
    pub projected_residual: f64,
    pub normalization_defect: f64,
    pub linear_method: LinearMethod,
    pub picard_sweeps: usize,
}

impl FixedPointReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Pointwise data of `𝓔 + 𝓛φ + 𝒩(φ)` that do not depend on `φ`.
struct ProjectedProblem {
    solver: SpectralSolver,
    interior: QuadratureGrid,
    boundary: QuadratureGrid,
    /// `𝓔^Int`.
    e_int: Vec<f64>,
    /// `2K_ε(f)e^{V+W+τ}`.
    k_int: Vec<f64>,
    /// `𝓔^∂`.
    e_bdr: Vec<f64>,
    /// `h_ε(f)e^{(V+W+τ)/2}`.
    h_bdr: Vec<f64>,
    /// `h(ξ)e^{V/2}` on the circle.
    h_xi: f64,
    z_int: [Vec<f64>; 2],
    z_bdr: [Vec<f64>; 2],
}

impl ProjectedProblem {
    fn new(chart: &BubbleChart, data: &CurvatureData, options: &FixedPointOptions) -> Result<Self> {
        let ansatz = AnsatzField::new(chart, data)?;
        let xi = chart.xi();
        let bubble = *ansatz.bubble();
        let solver = SpectralSolver::new(options.spectral, bubble, xi)?;
        let interior = graded_disk_grid(options.grid_nr, options.grid_ntheta, xi, chart.delta);
        let boundary = interior.boundary();
        let two_k = 2.0 * bubble.gaussian;
        let (e_int, k_int): (Vec<f64>, Vec<f64>) = ansatz
            .sample_interior(&interior)
            .into_iter()
            .zip(&interior.nodes)
            .map(|((_, e), &z)| (e, e + two_k * bubble.bubble_exp(z)))
            .unzip();
        let beta = bubble.boundary_scale();
        let (e_bdr, h_bdr): (Vec<f64>, Vec<f64>) = ansatz
            .sample_boundary(&boundary)
            .into_iter()
            .zip(&boundary.nodes)
            .map(|((w, e), &z)| {
                let h_eps = data.perturbed_geodesic(mobius(z, chart.delta, xi), chart.epsilon);
                (e, h_eps * (0.5 * (w + chart.tau)).exp() * beta)
            })
            .unzip();
        let z_on = |grid: &QuadratureGrid, which: u8| grid.nodes.iter().map(|&z| bubble.kernel(which, z, xi)).collect();
        Ok(Self {
            z_int: [z_on(&interior, 1), z_on(&interior, 2)],
            z_bdr: [z_on(&boundary, 1), z_on(&boundary, 2)],
            h_xi: bubble.geodesic * beta,
            solver,
            interior,
            boundary,
            e_int,
            k_int,
            e_bdr,
            h_bdr,
        })
    }

    /// `(𝓔 + 𝓛φ + 𝒩(φ))` at the interior and boundary nodes.
    fn right_hand_side(&self, phi: &SpectralField) -> (Vec<f64>, Vec<f64>) {
        if phi.is_zero() {
            return (self.e_int.clone(), self.e_bdr.clone());
        }
        let pi = phi.eval_grid(&self.interior);
        let pb = phi.eval_grid(&self.boundary);
        let f = pi
            .iter()
            .zip(self.e_int.iter().zip(&self.k_int))
            .map(|(&p, (&e, &k))| e + e * p + k * (p.exp_m1() - p))
            .collect();
        let g = pb
            .iter()
            .zip(self.e_bdr.iter().zip(&self.h_bdr))
            .map(|(&p, (&e, &h))| e + (h - self.h_xi) * p + 2.0 * h * ((0.5 * p).exp_m1() - 0.5 * p))
            .collect();
        (f, g)
    }

    /// One application of `𝒯_ξ`.
    fn apply(&self, phi: &SpectralField, method: LinearMethod) -> Result<(SpectralField, LinearMethod, usize)> {
        let (f, g) = self.right_hand_side(phi);
        let load = self.solver.load_from_samples(&self.interior, &f, &self.boundary, &g);
        let (load, _) = self.solver.apply_pi_l(&load);
        let (next, used, sweeps) = self.solver.solve_linearized(&load, method)?;
        Ok((self.solver.project_out_kernel(&next).0, used, sweeps))
    }

    /// `c₀, c₁, c₂` from the integrated projected equation.
    fn constants(&self, phi: &SpectralField) -> [f64; 3] {
        let (f, g) = self.right_hand_side(phi);
        let mass = self.interior.integrate_values(&f) + self.boundary.integrate_values(&g);
        let a0 = self.solver.bubble.kernel_constant();
        let moment = |i: usize| {
            let fi: Vec<f64> = f.iter().zip(&self.z_int[i]).map(|(a, b)| a * b).collect();
            let gi: Vec<f64> = g.iter().zip(&self.z_bdr[i]).map(|(a, b)| a * b).collect();
            self.interior.integrate_values(&fi) + self.boundary.integrate_values(&gi)
        };
        [-mass / (3.0 * PI), -a0 / PI * moment(0), -a0 / PI * moment(1)]
    }
}

/// Iterates `φ_{k+1} = 𝒯_ξ(φ_k)` from `φ₀ = 0` with default options.
pub fn fixed_point_solve(
    chart: &BubbleChart,
    data: &CurvatureData,
    max_iter: usize,
    tol: f64,
) -> Result<FixedPointReport> {
    fixed_point_solve_with(chart, data, &FixedPointOptions { max_iter, tol, ..FixedPointOptions::default() })
}

pub fn fixed_point_solve_with(
    chart: &BubbleChart,
    data: &CurvatureData,
    options: &FixedPointOptions,
) -> Result<FixedPointReport> {
    if options.max_iter == 0 || !(options.tol > 0.0) {
        return Err(Error::InvalidParameter("fixed point needs max_iter ≥ 1 and tol > 0".into()));
    }
    let problem = ProjectedProblem::new(chart, data, options)?;
    let mut phi = SpectralField::zeros(options.spectral);
    let mut steps = Vec::new();
    let mut ratios = Vec::new();
    let mut above_one = 0;
    let mut method = options.linear;
    let mut sweeps = 0;
    for iteration in 1..=options.max_iter {
        let (next, used, n) = problem.apply(&phi, method)?;
        // once the dense path was needed there is no point retrying Picard
        method = if used == LinearMethod::Dense { LinearMethod::Dense } else { method };
        sweeps += n;
        let step = problem.solver.energy(&next.add_scaled(&phi, -1.0)).sqrt();
        if let Some(&last) = steps.last() {
            let ratio = if last > 0.0 { step / last } else { 0.0 };
            ratios.push(ratio);
            above_one = if ratio >= 1.0 { above_one + 1 } else { 0 };
            if above_one >= 3 {
                return Err(Error::Divergence { step: iteration, ratio });
            }
        }
        steps.push(step);
        phi = next;
        if step < options.tol {
            let (check, _, _) = problem.apply(&phi, method)?;
            let [c0, c1, c2] = problem.constants(&phi);
            return Ok(FixedPointReport {
                chart: *chart,
                c0,
                c1,
                c2,
                iterations: iteration,
                phi_norm: problem.solver.energy(&phi).sqrt(),
                projected_residual: problem.solver.energy(&check.add_scaled(&phi, -1.0)).sqrt(),
                normalization_defect: problem.solver.normalization_defect(&phi),
                linear_method: method,
                picard_sweeps: sweeps,
                phi,
                steps,
                ratios,
            });
        }
    }
    Err(Error::Accuracy(format!(
        "fixed point did not reach tol = {:e} in {} iterations (last step {:e})",
        options.tol,
        options.max_iter,
        steps.last().copied().unwrap_or(f64::NAN)
    )))
}
