//! Deterministic quadrature on the unit circle and the unit disk.
//!
//! Uniform rules are the trapezoid rule in angle and Gauss–Legendre in
//! radius. Graded rules use composite Gauss–Legendre panels whose widths
//! shrink geometrically toward the concentration point `-ξ`, down to a
//! fraction of the scale `δ`, followed by a few extra panels that resolve
//! integrable endpoint singularities. Every rule is a polar tensor product,
//! which the spectral solver exploits for fast mode projections.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

/// Points per Gauss–Legendre panel in composite rules.
pub const PANEL_POINTS: usize = 16;
/// Extra refinement panels placed below the finest geometric panel.
pub const SINGULAR_PANELS: usize = 6;
const SINGULAR_RATIO: f64 = 0.15;

/// Compensated (Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// One-dimensional rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    /// Gauss–Legendre rule with `n` points on `[a, b]`.
    pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Self {
        let (x, w) = gauss_legendre(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        Self { nodes: x.iter().map(|t| mid + half * t).collect(), weights: w.iter().map(|v| v * half).collect() }
    }

    /// Composite Gauss–Legendre over consecutive breakpoints.
    pub fn composite(breakpoints: &[f64], points: usize) -> Self {
        let (x, w) = gauss_legendre(points);
        let mut nodes = Vec::with_capacity(points * breakpoints.len());
        let mut weights = Vec::with_capacity(points * breakpoints.len());
        for pair in breakpoints.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (b + a);
            nodes.extend(x.iter().map(|t| mid + half * t));
            weights.extend(w.iter().map(|v| v * half));
        }
        Self { nodes, weights }
    }

    /// Composite rule on `[0, length]` refined toward `0`: `coarse` geometric
    /// panels reach width `finest`, then `extra` panels shrink by a further
    /// factor 0.15 each.
    pub fn graded_toward_zero(length: f64, finest: f64, coarse: usize, extra: usize, points: usize) -> Self {
        Self::composite(&graded_breakpoints(length, finest, coarse, extra), points)
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        compensated_sum(self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Ascending breakpoints `0 = b_0 < … < b_m = length`, geometric toward `0`.
pub fn graded_breakpoints(length: f64, finest: f64, coarse: usize, extra: usize) -> Vec<f64> {
    let coarse = coarse.max(1);
    let finest = finest.min(length);
    let ratio = (finest / length).powf(1.0 / coarse as f64);
    let mut b: Vec<f64> = (0..=coarse).map(|k| length * ratio.powi(k as i32)).collect();
    let mut last = *b.last().expect("nonempty");
    for _ in 0..extra {
        last *= SINGULAR_RATIO;
        b.push(last);
    }
    b.push(0.0);
    b.reverse();
    b.dedup();
    b
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss–Legendre rule needs at least one point");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, t);
            dp = d;
            let step = p / d;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, t);
        if d != 0.0 {
            dp = d;
        }
        let weight = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GridDomain {
    Circle,
    Disk,
}

/// Concentration point and scale of a graded grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grading {
    pub center: Complex64,
    pub scale: f64,
}

/// Radii and angles of a polar tensor grid. Radial weights include the
/// Jacobian `r`; node `(i, j)` is stored at index `i * angles.len() + j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarTensor {
    pub radii: Vec<f64>,
    pub radial_weights: Vec<f64>,
    pub angles: Vec<f64>,
    pub angular_weights: Vec<f64>,
    /// Unit vectors `e^{iθ}` for each angle, built so that mirrored angles
    /// give exactly mirrored points.
    pub directions: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureGrid {
    pub nodes: Vec<Complex64>,
    pub weights: Vec<f64>,
    pub domain: GridDomain,
    pub grading: Option<Grading>,
    pub tensor: PolarTensor,
}

impl QuadratureGrid {
    fn from_tensor(tensor: PolarTensor, domain: GridDomain, grading: Option<Grading>) -> Self {
        let mut nodes = Vec::with_capacity(tensor.radii.len() * tensor.angles.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for (&r, &wr) in tensor.radii.iter().zip(&tensor.radial_weights) {
            for (d, &wt) in tensor.directions.iter().zip(&tensor.angular_weights) {
                nodes.push(d * r);
                weights.push(wr * wt);
            }
        }
        Self { nodes, weights, domain, grading, tensor }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// Samples `f` at every node, in node order.
    pub fn sample(&self, f: impl Fn(Complex64) -> f64 + Sync) -> Vec<f64> {
        self.nodes.par_iter().map(|&z| f(z)).collect()
    }

    pub fn integrate(&self, f: impl Fn(Complex64) -> f64 + Sync) -> f64 {
        self.integrate_values(&self.sample(f))
    }

    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        compensated_sum(values.iter().zip(&self.weights).map(|(v, w)| v * w))
    }

    /// `(Σ w |v|^p)^{1/p}`.
    pub fn lp_norm(&self, values: &[f64], p: f64) -> f64 {
        compensated_sum(values.iter().zip(&self.weights).map(|(v, w)| w * v.abs().powf(p))).powf(1.0 / p)
    }

    /// Circle rule sharing the angular nodes of this grid.
    pub fn boundary(&self) -> QuadratureGrid {
        let tensor = PolarTensor {
            radii: vec![1.0],
            radial_weights: vec![1.0],
            angles: self.tensor.angles.clone(),
            angular_weights: self.tensor.angular_weights.clone(),
            directions: self.tensor.directions.clone(),
        };
        Self::from_tensor(tensor, GridDomain::Circle, self.grading)
    }
}

struct AngularRule {
    angles: Vec<f64>,
    weights: Vec<f64>,
    directions: Vec<Complex64>,
}

fn trapezoid_angles(n: usize) -> AngularRule {
    let h = 2.0 * PI / n as f64;
    let angles: Vec<f64> = (0..n).map(|j| if 2 * j <= n { j as f64 * h } else { -((n - j) as f64 * h) }).collect();
    let directions = angles.iter().map(|&t| Complex64::new(t.cos(), t.sin())).collect();
    AngularRule { angles, weights: vec![h; n], directions }
}

fn graded_angles(n: usize, xi: Complex64, scale: f64) -> AngularRule {
    let coarse = (n / (2 * PANEL_POINTS)).saturating_sub(SINGULAR_PANELS).max(min_geometric_panels(PI, 0.25 * scale));
    let side = Rule1d::graded_toward_zero(PI, 0.25 * scale, coarse, SINGULAR_PANELS, PANEL_POINTS);
    let center = (-xi).arg();
    let mut angles = Vec::with_capacity(2 * side.len());
    let mut weights = Vec::with_capacity(2 * side.len());
    let mut directions = Vec::with_capacity(2 * side.len());
    for sign in [1.0, -1.0] {
        for (&u, &w) in side.nodes.iter().zip(&side.weights) {
            angles.push(center + sign * u);
            weights.push(w);
            directions.push(-xi * Complex64::new(u.cos(), sign * u.sin()));
        }
    }
    AngularRule { angles, weights, directions }
}

// Geometric panels never shrink by more than a factor 0.3 at a time, so the
// requested node counts are lower bounds for strongly graded grids.
fn min_geometric_panels(length: f64, finest: f64) -> usize {
    ((finest / length).ln() / 0.3f64.ln()).ceil().max(2.0) as usize
}

/// Equispaced trapezoid rule with `n` nodes, mirror-symmetric about the real axis.
pub fn circle_grid(n: usize) -> QuadratureGrid {
    assert!(n >= 4, "circle grid needs at least 4 nodes");
    let a = trapezoid_angles(n);
    let tensor = PolarTensor {
        radii: vec![1.0],
        radial_weights: vec![1.0],
        angles: a.angles,
        angular_weights: a.weights,
        directions: a.directions,
    };
    QuadratureGrid::from_tensor(tensor, GridDomain::Circle, None)
}

/// Gauss–Legendre in `r` (with Jacobian) times trapezoid in `θ`.
pub fn disk_grid(nr: usize, ntheta: usize) -> QuadratureGrid {
    assert!(nr >= 4 && ntheta >= 4, "disk grid needs at least 4 nodes per direction");
    let radial = Rule1d::gauss_legendre(nr, 0.0, 1.0);
    let a = trapezoid_angles(ntheta);
    let tensor = PolarTensor {
        radial_weights: radial.nodes.iter().zip(&radial.weights).map(|(r, w)| r * w).collect(),
        radii: radial.nodes,
        angles: a.angles,
        angular_weights: a.weights,
        directions: a.directions,
    };
    QuadratureGrid::from_tensor(tensor, GridDomain::Disk, None)
}

/// Circle rule with about `n` nodes concentrated within `O(scale)` of `-ξ`.
pub fn graded_circle_grid(n: usize, xi: Complex64, scale: f64) -> QuadratureGrid {
    assert!(scale > 0.0 && scale < 1.0, "grading scale must lie in (0, 1)");
    let a = graded_angles(n, xi, scale);
    let tensor = PolarTensor {
        radii: vec![1.0],
        radial_weights: vec![1.0],
        angles: a.angles,
        angular_weights: a.weights,
        directions: a.directions,
    };
    QuadratureGrid::from_tensor(tensor, GridDomain::Circle, Some(Grading { center: -xi, scale }))
}

/// Disk rule graded toward `r = 1` in radius and toward `-ξ` in angle.
pub fn graded_disk_grid(nr: usize, ntheta: usize, xi: Complex64, delta: f64) -> QuadratureGrid {
    assert!(delta > 0.0 && delta < 1.0, "grading scale must lie in (0, 1)");
    let extra = 2;
    let coarse = (nr / PANEL_POINTS).saturating_sub(extra).max(min_geometric_panels(1.0, 0.25 * delta));
    let side = Rule1d::graded_toward_zero(1.0, 0.25 * delta, coarse, extra, PANEL_POINTS);
    let mut radii = Vec::with_capacity(side.len());
    let mut radial_weights = Vec::with_capacity(side.len());
    for (&u, &w) in side.nodes.iter().zip(&side.weights).rev() {
        let r = 1.0 - u;
        radii.push(r);
        radial_weights.push(r * w);
    }
    let a = graded_angles(ntheta, xi, delta);
    let tensor =
        PolarTensor { radii, radial_weights, angles: a.angles, angular_weights: a.weights, directions: a.directions };
    QuadratureGrid::from_tensor(tensor, GridDomain::Disk, Some(Grading { center: -xi, scale: delta }))
}

/// Circle rule graded toward several points at once. Each entry of
/// `centers` is `(angle, scale)`; the arc between neighbouring centers is
/// split at its midpoint and each half is graded toward its own center.
pub fn multi_graded_circle_grid(centers: &[(f64, f64)], min_nodes: usize) -> QuadratureGrid {
    assert!(!centers.is_empty(), "at least one grading center is required");
    let two_pi = 2.0 * PI;
    let mut sorted: Vec<(f64, f64)> = centers.iter().map(|&(a, s)| (a.rem_euclid(two_pi), s)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (a, s) in sorted {
        match merged.last_mut() {
            Some(last) if a - last.0 < 1e-12 => last.1 = last.1.min(s),
            _ => merged.push((a, s)),
        }
    }
    if merged.len() > 1 && merged[0].0 + two_pi - merged[merged.len() - 1].0 < 1e-12 {
        let (_, s) = merged.pop().expect("nonempty");
        merged[0].1 = merged[0].1.min(s);
    }
    let halves = 2 * merged.len();
    let mut angles = Vec::new();
    let mut weights = Vec::new();
    for (i, &(a, s)) in merged.iter().enumerate() {
        let next = if i + 1 < merged.len() { merged[i + 1].0 } else { merged[0].0 + two_pi };
        let prev = if i > 0 { merged[i - 1].0 } else { merged[merged.len() - 1].0 - two_pi };
        for (sign, half) in [(1.0, 0.5 * (next - a)), (-1.0, 0.5 * (a - prev))] {
            let finest = (0.25 * s).min(half);
            let coarse = (min_nodes / (halves * PANEL_POINTS))
                .saturating_sub(SINGULAR_PANELS)
                .max(min_geometric_panels(half, finest));
            let rule = Rule1d::graded_toward_zero(half, finest, coarse, SINGULAR_PANELS, PANEL_POINTS);
            for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
                angles.push(a + sign * u);
                weights.push(w);
            }
        }
    }
    let directions = angles.iter().map(|&t| Complex64::new(t.cos(), t.sin())).collect();
    let tensor =
        PolarTensor { radii: vec![1.0], radial_weights: vec![1.0], angles, angular_weights: weights, directions };
    let (a0, s0) = merged[0];
    QuadratureGrid::from_tensor(
        tensor,
        GridDomain::Circle,
        Some(Grading { center: Complex64::from_polar(1.0, a0), scale: s0 }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disk_geometry::{theta_weight, BubbleParams};
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_exactness() {
        for n in [1usize, 2, 5, 16, 64, 200] {
            let (x, w) = gauss_legendre(n);
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 1 { 2.0 / deg as f64 } else { 0.0 };
            let approx: f64 = x.iter().zip(&w).map(|(t, v)| v * t.powi(deg as i32 - 1)).sum();
            assert_abs_diff_eq!(approx, exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn circle_rule_examples() {
        let g = circle_grid(64);
        assert_abs_diff_eq!(g.weight_sum(), 2.0 * PI, epsilon = 1e-14);
        assert_abs_diff_eq!(g.integrate(|z| z.re * z.re), PI, epsilon = 1e-14);
        assert!(g.nodes.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        let inside = Complex64::new(0.3, -0.5);
        assert_abs_diff_eq!(g.integrate(|w| (inside - w).norm().ln()), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn disk_rule_examples() {
        let g = disk_grid(16, 32);
        assert_abs_diff_eq!(g.weight_sum(), PI, epsilon = 1e-13);
        assert_abs_diff_eq!(g.integrate(|z| z.norm_sqr()), PI / 2.0, epsilon = 1e-13);
        assert!(g.nodes.iter().all(|z| z.norm() < 1.0));
        let p = BubbleParams::from_curvatures(1.0, 1.0).unwrap();
        let mass = disk_grid(64, 16).integrate(|z| p.bubble_exp(z));
        assert_abs_diff_eq!(mass, 4.0 * PI / p.boundary_denominator(), epsilon = 1e-13);
    }

    #[test]
    fn disk_rule_polynomial_exactness() {
        let nr = 6;
        let g = disk_grid(nr, 12);
        // x^4 y^2 integrates to π/64 over the disk; cos(5θ) r^10 to zero
        assert_abs_diff_eq!(g.integrate(|z| z.re.powi(4) * z.im.powi(2)), PI / 64.0, epsilon = 1e-13);
        assert_abs_diff_eq!(g.integrate(|z| z.norm().powi(10) * (5.0 * z.arg()).cos()), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(g.integrate(|z| z.norm_sqr().powi(5)), PI / 6.0, epsilon = 1e-13);
    }

    #[test]
    fn graded_weights_sum() {
        let xi = Complex64::from_polar(1.0, 0.4);
        for d in [0.1, 1e-3, 1e-6] {
            assert_abs_diff_eq!(graded_circle_grid(512, xi, d).weight_sum(), 2.0 * PI, epsilon = 1e-12);
            let disk = graded_disk_grid(96, 256, xi, d);
            assert_abs_diff_eq!(disk.weight_sum(), PI, epsilon = 1e-12);
            assert!(disk.nodes.iter().all(|z| z.norm() < 1.0));
        }
    }

    #[test]
    fn graded_rule_matches_extrapolated_uniform_reference() {
        let xi = Complex64::from_polar(1.0, 0.0);
        let d = 1e-3;
        let f = |w: Complex64| d / (d + (w + xi).norm());
        let graded = graded_circle_grid(512, xi, d).integrate(f);
        // trapezoid with the kink at a node has an h^2 error expansion
        let coarse = circle_grid(1 << 19).integrate(f);
        let fine = circle_grid(1 << 20).integrate(f);
        let reference = (4.0 * fine - coarse) / 3.0;
        assert!(((graded - reference) / reference).abs() < 1e-8, "{graded} vs {reference}");
    }

    #[test]
    fn odd_weight_integrates_to_zero() {
        let xi = Complex64::from_polar(1.0, 2.0);
        let d = 1e-4;
        let g = graded_circle_grid(512, xi, d);
        let v = g.integrate(|w| theta_weight(w, d, xi));
        assert!(v.abs() < 1e-10, "{v}");
    }

    #[test]
    fn graded_self_convergence() {
        let xi = Complex64::from_polar(1.0, -0.3);
        let d = 1e-4;
        let f = |z: Complex64| d * d / ((z + xi).norm_sqr() + d * d);
        let a = graded_disk_grid(96, 256, xi, d).integrate(f);
        let b = graded_disk_grid(192, 512, xi, d).integrate(f);
        assert!(((a - b) / b).abs() < 1e-9, "{a} {b}");
    }

    #[test]
    fn multi_center_rule_resolves_log_singularities() {
        let g = multi_graded_circle_grid(&[(PI, 1e-3), (0.5, 1e-6), (0.5 + 1e-13, 1e-2)], 256);
        assert_abs_diff_eq!(g.weight_sum(), 2.0 * PI, epsilon = 1e-12);
        let z = Complex64::from_polar(1.0, 0.5);
        assert!(g.integrate(|w| (z - w).norm().ln()).abs() < 1e-10);
        let inner = Complex64::from_polar(1.0 - 1e-6, 0.5);
        assert!(g.integrate(|w| (inner - w).norm().ln()).abs() < 1e-10);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let values = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(values), 2.0);
    }
}
