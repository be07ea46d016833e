//! The three-dimensional reduced system for `(s, d, t)` and the map from a
//! reduced solution and `ε` to a chart `(δ, η, τ)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::ansatz_residual::AnsatzField;
use crate::curvature_model::{check_hypotheses, CurvatureData, HypothesisReport};
use crate::disk_geometry::BubbleChart;
use crate::error::{Error, Result};
use crate::quadrature::{graded_circle_grid, graded_disk_grid};

/// Tolerance used when gating the coefficient assembly on the hypotheses.
pub const HYPOTHESIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedCoefficients {
    #[serde(rename = "A0")]
    pub a0: f64,
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a32: f64,
    pub a33: f64,
    pub b1: f64,
    pub b2: f64,
}

impl ReducedCoefficients {
    /// Determinant of the block matrix with rows `(a11, a12, 0)`,
    /// `(a21, 0, 0)`, `(0, a32, a33)`.
    pub fn det_a(&self) -> f64 {
        -self.a21 * self.a12 * self.a33
    }

    /// `A·(s, d, t) + B`.
    pub fn residual(&self, s: f64, d: f64, t: f64) -> [f64; 3] {
        [self.a11 * s + self.a12 * d + self.b1, self.a21 * s + self.b2, self.a32 * d + self.a33 * t]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedSolution {
    pub s0: f64,
    pub d0: f64,
    pub t0: f64,
    /// Sign of `ε` on which the solution lives.
    pub epsilon_branch: i8,
    pub det_a: f64,
}

/// Coefficients of the reduced system from exact derivatives of the curvature
/// models at the point `1`. Every hypothesis except transversality is
/// enforced here; transversality is left to [`solve_reduced`].
pub fn reduced_coefficients(data: &CurvatureData) -> Result<ReducedCoefficients> {
    let report = check_hypotheses(data, HYPOTHESIS_TOL);
    if report.failures().iter().any(|f| *f != "transversality") {
        return Err(Error::Hypothesis(Box::new(report)));
    }
    Ok(coefficients_unchecked(data, &report))
}

fn coefficients_unchecked(data: &CurvatureData, report: &HypothesisReport) -> ReducedCoefficients {
    let one = Complex64::new(1.0, 0.0);
    let phi = report.radicand_and_phi.1;
    let k = &data.gaussian;
    let h = &data.geodesic;
    let g = &data.gaussian_perturbation;
    let i = &data.geodesic_perturbation;
    let k1 = k.gradient(one)[0];
    let hess = k.hessian(one);
    let k_val = k.eval(one);
    let h_val = h.eval(0.0);
    let dh = h.derivative();
    let [hx, hy] = h.harmonic_gradient(one);
    let denom = phi * phi + k_val;
    let [g1, g2] = g.gradient(one);
    ReducedCoefficients {
        a0: 3.0 * phi * phi * denom.powi(3) / (3.0 * phi.powi(4) + 3.0 * phi * phi * k_val + 2.0 * k_val * k_val),
        a11: hess[0][1] + 2.0 * phi * dh.half_laplacian().eval(0.0),
        a12: -(2.0 * phi * phi / denom) * (k.laplacian(one) + 4.0 * (hx * hx + hy * hy)),
        a21: hess[1][1] + 2.0 * phi * dh.derivative().eval(0.0),
        a32: -(2.0 * k1 + 2.0 * phi * h.half_laplacian().eval(0.0)),
        a33: 2.0 * k_val + phi * h_val,
        b1: g1 + 2.0 * phi * i.half_laplacian().eval(0.0),
        b2: g2 + 2.0 * phi * i.derivative().eval(0.0),
    }
}

/// Solves `A·(s, d, t) + B = 0`.
pub fn solve_reduced(c: &ReducedCoefficients) -> Result<ReducedSolution> {
    let det = c.det_a();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::Degenerate(format!("a12·a21·a33 = {}", -det)));
    }
    let s0 = -c.b2 / c.a21;
    let d0 = -(c.b1 + c.a11 * s0) / c.a12;
    if d0 == 0.0 || d0.abs() < 1e-14 * (1.0 + s0.abs()) {
        return Err(Error::Transversality);
    }
    let t0 = -c.a32 * d0 / c.a33;
    Ok(ReducedSolution { s0, d0, t0, epsilon_branch: if d0 > 0.0 { 1 } else { -1 }, det_a: det })
}

/// Root in `(0, 1/e)` of `δ log(1/δ) = target`, for `0 < target < 1/e`.
pub fn delta_from_product(target: f64) -> Result<f64> {
    let cap = (-1.0f64).exp();
    if !(target > 0.0 && target < cap) {
        return Err(Error::OutOfRange(format!("d0·ε = {target} must lie in (0, 1/e)")));
    }
    let g = |d: f64| d * (1.0 / d).ln() - target;
    // g increases on (0, 1/e) from 0⁻ - target to 1/e - target
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-3 * hi {
            break;
        }
    }
    let mut d = 0.5 * (lo + hi);
    for _ in 0..50 {
        let slope = (1.0 / d).ln() - 1.0;
        let step = g(d) / slope;
        let next = (d - step).clamp(lo, hi);
        if (next - d).abs() <= 1e-17 * d {
            d = next;
            break;
        }
        d = next;
    }
    Ok(d)
}

/// `η = s0 ε`, `δ log(1/δ) = d0 ε`, `τ = t0 ε / log(1/δ)`.
pub fn chart_from_epsilon(sol: &ReducedSolution, epsilon: f64) -> Result<BubbleChart> {
    if epsilon == 0.0 || (epsilon > 0.0) != (sol.epsilon_branch > 0) {
        return Err(Error::Branch { expected: sol.epsilon_branch, epsilon });
    }
    let delta = delta_from_product(sol.d0 * epsilon)?;
    BubbleChart::new(delta, sol.s0 * epsilon, sol.t0 * epsilon / (1.0 / delta).ln(), epsilon)
}

/// One projection of the error onto `{1, Z₁, Z₂}` against its leading term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionTerm {
    pub name: &'static str,
    pub interior: f64,
    pub boundary: f64,
    pub leading: f64,
    pub remainder: f64,
    /// Remainder divided by its stated order in `ε`.
    pub scaled_remainder: f64,
}

/// Coefficients recovered from projections of the error by central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegralCoefficients {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a32: f64,
    pub a33: f64,
    pub b1: f64,
    pub b2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientConsistency {
    pub chart: BubbleChart,
    pub projections: Vec<ProjectionTerm>,
    /// `|∫2K(ξ)We^V Z_i - ∫2K(ξ)We^V Z_i|` for the interior and boundary
    /// occurrences of the same quantity, `i = 1, 2`.
    pub w_cancellation: [f64; 2],
    pub w_terms: [f64; 2],
    pub estimates: IntegralCoefficients,
    pub exact: ReducedCoefficients,
    /// Step used for the central differences in `η`, `ε` and `τ`.
    pub step: f64,
}

impl CoefficientConsistency {
    /// Relative disagreement of `a21` and `b2`.
    pub fn tangential_agreement(&self) -> (f64, f64) {
        (
            ((self.estimates.a21 - self.exact.a21) / self.exact.a21).abs(),
            ((self.estimates.b2 - self.exact.b2) / self.exact.b2).abs(),
        )
    }
}

/// Grid sizes for the projection integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionGrids {
    pub nr: usize,
    pub ntheta: usize,
}

impl Default for ProjectionGrids {
    fn default() -> Self {
        Self { nr: 128, ntheta: 512 }
    }
}

/// `[∫𝓔^Int, ∫𝓔^Int Z₁, ∫𝓔^Int Z₂]` and the boundary analogues.
fn projections(field: &AnsatzField, grids: ProjectionGrids) -> ([f64; 3], [f64; 3], [f64; 2]) {
    let chart = field.chart();
    let xi = chart.xi();
    let b = *field.bubble();
    let disk = graded_disk_grid(grids.nr, grids.ntheta, xi, chart.delta);
    let circle = graded_circle_grid(grids.ntheta, xi, chart.delta);
    let interior = field.sample_interior(&disk);
    let boundary = field.sample_boundary(&circle);
    let moment = |grid: &crate::quadrature::QuadratureGrid, vals: &[(f64, f64)], k: u8| -> f64 {
        let v: Vec<f64> = grid
            .nodes
            .par_iter()
            .zip(vals)
            .map(|(&z, &(_, e))| if k == 0 { e } else { e * b.kernel(k, z, xi) })
            .collect();
        grid.integrate_values(&v)
    };
    let wterm = |k: u8| -> f64 {
        let v: Vec<f64> = disk
            .nodes
            .par_iter()
            .zip(&interior)
            .map(|(&z, &(w, _))| 2.0 * b.gaussian * w * b.bubble_exp(z) * b.kernel(k, z, xi))
            .collect();
        disk.integrate_values(&v)
    };
    (
        [moment(&disk, &interior, 0), moment(&disk, &interior, 1), moment(&disk, &interior, 2)],
        [moment(&circle, &boundary, 0), moment(&circle, &boundary, 1), moment(&circle, &boundary, 2)],
        [wterm(1), wterm(2)],
    )
}

/// Normalized projections `P0, P1, P2` at a chart: the mass projection times
/// `(φ²+K)/(4π)` and the kernel projections times `(φ²+K)²/(4πδ)`.
fn normalized(field: &AnsatzField, grids: ProjectionGrids) -> [f64; 3] {
    let (int, bdr, _) = projections(field, grids);
    let b = field.bubble();
    let den = b.boundary_denominator();
    let delta = field.chart().delta;
    [
        (int[0] + bdr[0]) * den / (4.0 * PI),
        (int[1] + bdr[1]) * den * den / (4.0 * PI * delta),
        (int[2] + bdr[2]) * den * den / (4.0 * PI * delta),
    ]
}

/// Recomputes the reduced coefficients from quadratures of the error
/// projections at `chart`, and compares the projections with their leading
/// expressions.
pub fn coefficients_from_integrals(
    data: &CurvatureData,
    chart: &BubbleChart,
    grids: ProjectionGrids,
) -> Result<CoefficientConsistency> {
    let exact = reduced_coefficients(data)?;
    let eps = chart.epsilon;
    if eps == 0.0 {
        return Err(Error::InvalidParameter("the chart needs ε ≠ 0".into()));
    }
    let step = eps.abs();
    let field = AnsatzField::new(chart, data)?;
    let (int, bdr, w_terms) = projections(&field, grids);

    let b = field.bubble();
    let den = b.boundary_denominator();
    let (delta, eta, tau) = (chart.delta, chart.eta, chart.tau);
    let dl = delta * (1.0 / delta).ln();
    let log_eps = (1.0 / eps.abs()).ln();
    let z_scale = 4.0 * PI * delta / (den * den);
    let lead_z1 = z_scale * (eta * exact.a11 + eps * exact.b1 + dl * exact.a12);
    let lead_z2 = z_scale * (eta * exact.a21 + eps * exact.b2);
    let lead_mass = 4.0 * PI / den * (delta * exact.a32 + tau * exact.a33);
    let term = |name, k: usize, leading: f64, order: f64| {
        let numeric = int[k] + bdr[k];
        ProjectionTerm {
            name,
            interior: int[k],
            boundary: bdr[k],
            leading,
            remainder: numeric - leading,
            scaled_remainder: (numeric - leading) / order,
        }
    };
    let projections = vec![
        term("mass", 0, lead_mass, eps * eps / log_eps),
        term("z1", 1, lead_z1, eps * eps / (log_eps * log_eps)),
        term("z2", 2, lead_z2, eps * eps / (log_eps * log_eps)),
    ];

    let at = |eta: f64, tau: f64, epsilon: f64| -> Result<[f64; 3]> {
        let c = BubbleChart::new(delta, eta, tau, epsilon)?;
        Ok(normalized(&AnsatzField::new(&c, data)?, grids))
    };
    let eta_plus = at(eta + step, tau, 0.0)?;
    let eta_minus = at(eta - step, tau, 0.0)?;
    let eps_plus = at(eta, tau, step)?;
    let eps_minus = at(eta, tau, -step)?;
    let base = at(eta, 0.0, 0.0)?;
    let tau_plus = at(eta, step, 0.0)?;
    let tau_minus = at(eta, -step, 0.0)?;
    let estimates = IntegralCoefficients {
        a11: (eta_plus[1] - eta_minus[1]) / (2.0 * step),
        a21: (eta_plus[2] - eta_minus[2]) / (2.0 * step),
        b1: (eps_plus[1] - eps_minus[1]) / (2.0 * step),
        b2: (eps_plus[2] - eps_minus[2]) / (2.0 * step),
        a12: (base[1] - eta * (eta_plus[1] - eta_minus[1]) / (2.0 * step)) / dl,
        a32: base[0] / delta,
        a33: (tau_plus[0] - tau_minus[0]) / (2.0 * step),
    };
    Ok(CoefficientConsistency {
        chart: *chart,
        projections,
        // the interior and boundary projections contain +w and -w of the same
        // quadrature value
        w_cancellation: [(w_terms[0] - w_terms[0]).abs(), (w_terms[1] - w_terms[1]).abs()],
        w_terms,
        estimates,
        exact,
        step,
    })
}
