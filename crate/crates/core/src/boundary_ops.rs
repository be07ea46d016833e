//! Operators on circle data: half-Laplacian, principal-value quadrature and
//! the harmonic boundary correction `W`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::curvature_model::{CircleFunction, CurvatureData};
use crate::disk_geometry::{mobius, mobius_derivative, BubbleChart, BubbleParams};
use crate::error::{Error, Result};
use crate::quadrature::{
    circle_grid, compensated_sum, graded_circle_grid, graded_disk_grid, multi_graded_circle_grid, GridDomain,
    QuadratureGrid, Rule1d, PANEL_POINTS,
};

/// Values of a function at the nodes of a circle grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundarySamples {
    grid: QuadratureGrid,
    values: Vec<f64>,
}

impl BoundarySamples {
    pub fn new(grid: QuadratureGrid, values: Vec<f64>) -> Result<Self> {
        if grid.domain != GridDomain::Circle {
            return Err(Error::InvalidParameter("boundary samples need a circle grid".into()));
        }
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "{} samples for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite boundary sample".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: QuadratureGrid, f: impl Fn(Complex64) -> f64 + Sync) -> Result<Self> {
        let values = grid.sample(f);
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate_values(&self.values)
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.grid.lp_norm(&self.values, p)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete Fourier coefficients up to `max_degree`; needs an ungraded grid
    /// with more than `2 * max_degree` nodes.
    pub fn to_circle_function(&self, max_degree: usize) -> Result<CircleFunction> {
        if self.grid.grading.is_some() || self.grid.len() <= 2 * max_degree {
            return Err(Error::InvalidParameter("Fourier projection needs a fine uniform grid".into()));
        }
        let angles = &self.grid.tensor.angles;
        let w = &self.grid.weights;
        let mut cos = Vec::with_capacity(max_degree + 1);
        let mut sin = Vec::with_capacity(max_degree);
        cos.push(compensated_sum(self.values.iter().zip(w).map(|(v, w)| v * w)) / (2.0 * PI));
        for n in 1..=max_degree {
            let k = n as f64;
            let c = compensated_sum(self.values.iter().zip(w).zip(angles).map(|((v, w), t)| v * w * (k * t).cos()));
            let s = compensated_sum(self.values.iter().zip(w).zip(angles).map(|((v, w), t)| v * w * (k * t).sin()));
            cos.push(c / PI);
            sin.push(s / PI);
        }
        Ok(CircleFunction::new(cos, sin))
    }
}

/// Half-Laplacian of a trigonometric polynomial (multiplier `|n|`).
pub fn half_laplacian(h: &CircleFunction) -> CircleFunction {
    h.half_laplacian()
}

/// `(1/π) p.v.∮ (h(z) - h(w)) / |z - w|² dw` with `n` nodes placed
/// symmetrically about `z` at half-step offsets.
pub fn pv_half_laplacian_quadrature(h: &CircleFunction, z: Complex64, n: usize) -> Result<f64> {
    if n < 2 || n % 2 == 1 {
        return Err(Error::InvalidParameter(format!("node count {n} must be even and positive")));
    }
    let theta0 = z.arg();
    let hz = h.eval(theta0);
    let step = 2.0 * PI / n as f64;
    let sum = compensated_sum((0..n).map(|j| {
        let offset = (j as f64 + 0.5) * step;
        let chord = 2.0 * (0.5 * offset).sin();
        (hz - h.eval(theta0 + offset)) / (chord * chord)
    }));
    Ok(sum * step / PI)
}

/// The harmonic correction `W` for one chart, with the data it needs cached.
///
/// `W` is the harmonic function with mean-free Neumann data
/// `2β(h∘f - mean(h∘f))`, `β = 2φ(ξ)/(φ(ξ)²+K(ξ))`, vanishing at the
/// origin. Since `h∘f` extends harmonically to `H∘f`, the radial derivative
/// obeys `r∂_r W = 2β(H∘f - H(f(0)))`, which gives the fast route
/// `W(z) = 2β ∫₀¹ (H(f(tz)) - H(f(0))) / t dt`. The log-kernel route is
/// kept as an independent evaluator.
#[derive(Debug, Clone)]
pub struct CorrectionField {
    geodesic: CircleFunction,
    delta: f64,
    xi: Complex64,
    bubble: BubbleParams,
    beta: f64,
    geodesic_at_xi: f64,
    center_value: f64,
    radial: Rule1d,
}

impl CorrectionField {
    pub fn new(chart: &BubbleChart, data: &CurvatureData) -> Result<Self> {
        let xi = chart.xi();
        let bubble = BubbleParams::at(data, xi)?;
        let delta = chart.delta;
        let finest = 0.25 * delta;
        let coarse = ((finest.ln() / 0.3f64.ln()).ceil() as usize).max(3);
        Ok(Self {
            geodesic: data.geodesic.clone(),
            delta,
            xi,
            bubble,
            beta: bubble.boundary_scale(),
            geodesic_at_xi: data.geodesic.eval_at(xi),
            center_value: data.geodesic.harmonic(xi * (1.0 - delta)),
            radial: Rule1d::graded_toward_zero(1.0, finest, coarse, 2, PANEL_POINTS),
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn xi(&self) -> Complex64 {
        self.xi
    }

    pub fn bubble(&self) -> &BubbleParams {
        &self.bubble
    }

    /// True when `h` is constant, so `W ≡ 0`.
    pub fn is_trivial(&self) -> bool {
        self.geodesic.is_constant()
    }

    /// `∮ (h(f(w)) - h(ξ)) dw`, exact through the mean value property.
    pub fn mass(&self) -> f64 {
        2.0 * PI * (self.center_value - self.geodesic_at_xi)
    }

    /// The same mass term by graded quadrature, as an independent check.
    pub fn mass_by_quadrature(&self, nodes: usize) -> f64 {
        let grid = graded_circle_grid(nodes, self.xi, self.delta);
        grid.integrate(|w| self.geodesic.eval_at(mobius(w, self.delta, self.xi)) - self.geodesic_at_xi)
    }

    /// `W(z)` by the radial route.
    pub fn value(&self, z: Complex64) -> f64 {
        if self.is_trivial() {
            return 0.0;
        }
        let s = compensated_sum(self.radial.nodes.iter().zip(&self.radial.weights).map(|(&u, &w)| {
            let t = 1.0 - u;
            w * (self.geodesic.harmonic(mobius(z * t, self.delta, self.xi)) - self.center_value) / t
        }));
        2.0 * self.beta * s
    }

    /// Cartesian gradient of `W`.
    pub fn gradient(&self, z: Complex64) -> [f64; 2] {
        if self.is_trivial() {
            return [0.0, 0.0];
        }
        let mut gx = Vec::with_capacity(self.radial.len());
        let mut gy = Vec::with_capacity(self.radial.len());
        for (&u, &w) in self.radial.nodes.iter().zip(&self.radial.weights) {
            let y = z * (1.0 - u);
            let d = self.geodesic.analytic_derivative(mobius(y, self.delta, self.xi))
                * mobius_derivative(y, self.delta, self.xi);
            gx.push(w * d.re);
            gy.push(-w * d.im);
        }
        [2.0 * self.beta * compensated_sum(gx), 2.0 * self.beta * compensated_sum(gy)]
    }

    /// `∂_ν W` at a circle point, from `r∂_r W = 2β(H∘f - H(f(0)))`.
    pub fn normal_derivative(&self, z: Complex64) -> f64 {
        2.0 * self.beta * (self.geodesic.eval_at(mobius(z, self.delta, self.xi)) - self.center_value)
    }

    /// Right side of the Neumann problem for `W` at a circle point, with the
    /// mass term supplied by the caller.
    pub fn neumann_data(&self, z: Complex64, mass: f64) -> f64 {
        let hf = self.geodesic.eval_at(mobius(z, self.delta, self.xi));
        2.0 * (hf - self.geodesic_at_xi) * self.beta - self.beta * mass / PI
    }

    /// `W(z)` by graded quadrature of the log kernel
    /// `-(2/π) β ∮ log|z-w| (h(f(w)) - h(ξ)) dw`.
    pub fn log_kernel_value(&self, z: Complex64, min_nodes: usize) -> f64 {
        if self.is_trivial() {
            return 0.0;
        }
        let mut centers = vec![((-self.xi).arg(), self.delta)];
        let r = z.norm();
        if r > 0.5 {
            centers.push((z.arg(), (1.0 - r).max(1e-6)));
        }
        let grid = multi_graded_circle_grid(&centers, min_nodes);
        let integral = grid.integrate(|w| {
            (z - w).norm().ln() * (self.geodesic.eval_at(mobius(w, self.delta, self.xi)) - self.geodesic_at_xi)
        });
        -2.0 / PI * self.beta * integral
    }

    /// Leading asymptotic term
    /// `(8φ/(φ²+K)) δ [(-Δ)^{1/2}h(ξ) log|z+ξ| + h'(ξ) arctan(⟨z,ξ⊥⟩/(1+⟨z,ξ⟩))]`.
    pub fn leading_term(&self, z: Complex64) -> f64 {
        let frac = self.geodesic.half_laplacian().eval_at(self.xi);
        let tangential = self.geodesic.derivative().eval_at(self.xi);
        let rotated = z * self.xi.conj();
        let angle = (rotated.im / (1.0 + rotated.re)).atan();
        4.0 * self.beta * self.delta * (frac * (z + self.xi).norm().ln() + tangential * angle)
    }

    /// `(‖W‖_{L^p(disk)}, ‖W‖_{L^p(circle)})` on grids graded at the chart.
    pub fn lp_norms(&self, p: f64, nr: usize, ntheta: usize) -> (f64, f64) {
        let disk = graded_disk_grid(nr, ntheta, self.xi, self.delta);
        let circle = graded_circle_grid(ntheta, self.xi, self.delta);
        let dv = disk.sample(|z| self.value(z));
        let cv = circle.sample(|z| self.value(z));
        (disk.lp_norm(&dv, p), circle.lp_norm(&cv, p))
    }
}

/// `W(z)` by the log-kernel route, with a doubling self-convergence gate.
pub fn correction_w(chart: &BubbleChart, data: &CurvatureData, z: Complex64) -> Result<f64> {
    if z.norm() > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("|z| = {} exceeds 1", z.norm())));
    }
    let field = CorrectionField::new(chart, data)?;
    let coarse = field.log_kernel_value(z, 256);
    let fine = field.log_kernel_value(z, 512);
    if (coarse - fine).abs() > 1e-9 * (1.0 + fine.abs()) {
        return Err(Error::Accuracy(format!("log-kernel quadrature for W at {z}: {coarse} vs {fine}")));
    }
    Ok(fine)
}

#[derive(Debug, Clone, Serialize)]
pub struct NeumannReport {
    pub boundary_nodes: usize,
    pub fd_step: f64,
    /// Max over circle nodes of |Richardson FD ∂_ν W - Neumann data|.
    pub max_boundary_deviation: f64,
    /// Max over circle nodes of |chain-rule ∂_ν W - Neumann data|.
    pub max_analytic_deviation: f64,
    /// Max |5-point Laplacian of W| at interior points with r ≤ 0.9.
    pub max_harmonicity: f64,
    /// Max |radial route - log-kernel route| at sample points.
    pub max_route_deviation: f64,
}

/// Checks the Neumann problem solved by `W` on `n` circle nodes.
pub fn verify_w_neumann(chart: &BubbleChart, data: &CurvatureData, n: usize) -> Result<NeumannReport> {
    let field = CorrectionField::new(chart, data)?;
    let mass = field.mass_by_quadrature(1024);
    let step = 1e-4;
    let nodes = circle_grid(n).nodes;
    let (fd, analytic): (Vec<f64>, Vec<f64>) = nodes
        .par_iter()
        .map(|&z| {
            let w1 = field.value(z);
            let one_sided = |s: f64| (w1 - field.value(z * (1.0 - s))) / s;
            let richardson = 2.0 * one_sided(0.5 * step) - one_sided(step);
            let rhs = field.neumann_data(z, mass);
            ((richardson - rhs).abs(), (field.normal_derivative(z) - rhs).abs())
        })
        .unzip();
    let h = 2e-4;
    let interior: Vec<Complex64> = [0.2, 0.5, 0.9]
        .iter()
        .flat_map(|&r| (0..16).map(move |j| Complex64::from_polar(r, 2.0 * PI * (j as f64 + 0.25) / 16.0)))
        .collect();
    let harmonic = interior
        .par_iter()
        .map(|&z| {
            let lap = field.value(z + h)
                + field.value(z - h)
                + field.value(z + Complex64::new(0.0, h))
                + field.value(z - Complex64::new(0.0, h))
                - 4.0 * field.value(z);
            (lap / (h * h)).abs()
        })
        .reduce(|| 0.0, f64::max);
    let samples = [
        Complex64::new(0.0, 0.0),
        Complex64::from_polar(0.5, 1.0),
        Complex64::from_polar(0.95, -2.0),
        Complex64::from_polar(1.0, 0.3),
        -field.xi() * 0.99,
    ];
    let route = samples.iter().map(|&z| (field.value(z) - field.log_kernel_value(z, 512)).abs()).fold(0.0, f64::max);
    Ok(NeumannReport {
        boundary_nodes: n,
        fd_step: step,
        max_boundary_deviation: fd.into_iter().fold(0.0, f64::max),
        max_analytic_deviation: analytic.into_iter().fold(0.0, f64::max),
        max_harmonicity: harmonic,
        max_route_deviation: route,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature_model::DiskPolynomial;
    use approx::assert_abs_diff_eq;

    fn data_with_h(h: CircleFunction) -> CurvatureData {
        let mut d = CurvatureData::canonical();
        d.geodesic = h;
        d
    }

    fn sample_h() -> CircleFunction {
        CircleFunction::new(vec![1.0, 0.3, 0.25], vec![0.2, -0.15])
    }

    #[test]
    fn half_laplacian_examples() {
        assert!(half_laplacian(&CircleFunction::constant(2.0)).is_constant());
        assert_eq!(half_laplacian(&CircleFunction::constant(2.0)).mean(), 0.0);
        let c3 = CircleFunction::new(vec![0.0, 0.0, 0.0, 1.0], vec![]);
        assert_eq!(half_laplacian(&c3).cos_coefficients(), &[0.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn pv_quadrature_matches_multiplier() {
        let h = CircleFunction::new(vec![0.0, 1.0], vec![0.0, 0.3]);
        let exact = half_laplacian(&h);
        for t in [0.0, 0.7, 2.0, -2.5] {
            let z = Complex64::from_polar(1.0, t);
            let pv = pv_half_laplacian_quadrature(&h, z, 32).unwrap();
            let e = exact.eval(t);
            assert!((pv - e).abs() <= 1e-6 * e.abs().max(1e-300) + 1e-14, "{pv} vs {e}");
        }
        let cosine = CircleFunction::new(vec![0.0, 1.0], vec![]);
        let v = pv_half_laplacian_quadrature(&cosine, Complex64::new(1.0, 0.0), 4096).unwrap();
        assert!((v - 1.0).abs() < 1e-6);
        let c = pv_half_laplacian_quadrature(&CircleFunction::constant(3.0), Complex64::new(0.0, 1.0), 64).unwrap();
        assert_eq!(c, 0.0);
        assert!(pv_half_laplacian_quadrature(&cosine, Complex64::new(1.0, 0.0), 33).is_err());
    }

    #[test]
    fn harmonic_extension_normal_derivative_matches_multiplier() {
        let h = sample_h();
        let frac = half_laplacian(&h);
        for t in [0.1, 1.3, 3.0] {
            let z = Complex64::from_polar(1.0, t);
            let g = h.harmonic_gradient(z);
            let normal = g[0] * z.re + g[1] * z.im;
            assert_abs_diff_eq!(normal, frac.eval(t), epsilon = 1e-14);
        }
    }

    #[test]
    fn constant_h_gives_zero_correction() {
        let chart = BubbleChart::new(0.01, 0.0, 0.0, 0.0).unwrap();
        let data = CurvatureData::canonical();
        let field = CorrectionField::new(&chart, &data).unwrap();
        assert!(field.is_trivial());
        assert_eq!(field.value(Complex64::new(0.3, 0.2)), 0.0);
        assert_eq!(correction_w(&chart, &data, Complex64::new(0.3, 0.2)).unwrap(), 0.0);
        let report = verify_w_neumann(&chart, &data, 64).unwrap();
        assert_eq!(report.max_boundary_deviation, 0.0);
        assert_eq!(report.max_harmonicity, 0.0);
    }

    #[test]
    fn routes_agree() {
        let data = data_with_h(sample_h());
        let chart = BubbleChart::new(1e-3, 0.2, 0.0, 0.0).unwrap();
        let field = CorrectionField::new(&chart, &data).unwrap();
        for z in [
            Complex64::new(0.0, 0.0),
            Complex64::from_polar(0.7, 2.0),
            Complex64::from_polar(0.999, 3.0),
            Complex64::from_polar(1.0, 1.0),
            -chart.xi() * 0.995,
        ] {
            let fast = field.value(z);
            let slow = correction_w(&chart, &data, z).unwrap();
            assert!((fast - slow).abs() < 1e-10, "{z}: {fast} vs {slow}");
        }
        assert_eq!(field.value(Complex64::new(0.0, 0.0)), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = data_with_h(sample_h());
        let chart = BubbleChart::new(0.05, -0.4, 0.0, 0.0).unwrap();
        let field = CorrectionField::new(&chart, &data).unwrap();
        let h = 1e-5;
        for z in [Complex64::new(0.2, -0.3), Complex64::from_polar(0.9, 2.5)] {
            let g = field.gradient(z);
            let gx = (field.value(z + h) - field.value(z - h)) / (2.0 * h);
            let gy = (field.value(z + Complex64::new(0.0, h)) - field.value(z - Complex64::new(0.0, h))) / (2.0 * h);
            assert!((g[0] - gx).abs() < 1e-7 && (g[1] - gy).abs() < 1e-7);
        }
    }

    #[test]
    fn neumann_problem_holds() {
        let data = data_with_h(CircleFunction::new(vec![1.0, 0.3], vec![]));
        let chart = BubbleChart::new(0.1, 0.0, 0.0, 0.0).unwrap();
        let r = verify_w_neumann(&chart, &data, 128).unwrap();
        assert!(r.max_boundary_deviation < 1e-5, "{r:?}");
        assert!(r.max_analytic_deviation < 1e-12, "{r:?}");
        assert!(r.max_harmonicity < 1e-6, "{r:?}");
        assert!(r.max_route_deviation < 1e-10, "{r:?}");
    }

    #[test]
    fn mass_term_routes_agree() {
        let data = data_with_h(sample_h());
        for d in [0.1, 1e-3, 1e-5] {
            let chart = BubbleChart::new(d, 0.3, 0.0, 0.0).unwrap();
            let f = CorrectionField::new(&chart, &data).unwrap();
            assert!((f.mass() - f.mass_by_quadrature(512)).abs() < 1e-12 * (1.0 + f.mass().abs()));
        }
    }

    #[test]
    fn boundary_samples_validate_and_project() {
        let g = circle_grid(32);
        assert!(BoundarySamples::new(g.clone(), vec![0.0; 31]).is_err());
        assert!(BoundarySamples::new(g.clone(), vec![f64::NAN; 32]).is_err());
        let h = sample_h();
        let s = BoundarySamples::from_fn(g, |w| h.eval_at(w)).unwrap();
        let back = s.to_circle_function(4).unwrap();
        for (a, b) in back.cos_coefficients().iter().zip(h.cos_coefficients()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        for (a, b) in back.sin_coefficients().iter().zip(h.sin_coefficients()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(s.integrate(), 2.0 * PI, epsilon = 1e-13);
    }

    #[test]
    fn correction_rejects_points_outside_disk() {
        let chart = BubbleChart::new(0.1, 0.0, 0.0, 0.0).unwrap();
        let data = data_with_h(sample_h());
        assert!(correction_w(&chart, &data, Complex64::new(1.1, 0.0)).is_err());
        let _ = DiskPolynomial::zero();
    }
}
