//! Exact function models for the prescribed curvatures and the admissibility
//! checks on the blow-up point `1`.
//!
//! Interior data (Gaussian curvature and its perturbation) are bivariate
//! polynomials, boundary data (geodesic curvature and its perturbation) are
//! real trigonometric polynomials. Every derivative, harmonic extension and
//! half-Laplacian used downstream is obtained by coefficient manipulation.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on the total degree of a [`DiskPolynomial`].
pub const DEFAULT_MAX_DEGREE: u32 = 8;

/// Real polynomial `Σ c_ij x^i y^j` on the closed unit disk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiskPolynomial {
    terms: BTreeMap<(u32, u32), f64>,
}

impl DiskPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(0, 0, c);
        p
    }

    /// Builds a polynomial from `(i, j, c)` triples, rejecting degrees above
    /// [`DEFAULT_MAX_DEGREE`].
    pub fn from_terms<I>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32, f64)>,
    {
        Self::from_terms_bounded(terms, DEFAULT_MAX_DEGREE)
    }

    pub fn from_terms_bounded<I>(terms: I, max_degree: u32) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32, f64)>,
    {
        let mut p = Self::zero();
        for (i, j, c) in terms {
            if i + j > max_degree {
                return Err(Error::Format(format!("monomial x^{i} y^{j} exceeds the degree bound {max_degree}")));
            }
            if !c.is_finite() {
                return Err(Error::Format(format!("non-finite coefficient for x^{i} y^{j}")));
            }
            p.add_term(i, j, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, i: u32, j: u32, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry((i, j)).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(&(i, j));
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.terms.iter().map(|(&(i, j), &c)| (i, j, c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|&(i, j)| i + j).max().unwrap_or(0)
    }

    pub fn eval(&self, z: Complex64) -> f64 {
        self.eval_xy(z.re, z.im)
    }

    pub fn eval_xy(&self, x: f64, y: f64) -> f64 {
        self.terms.iter().map(|(&(i, j), &c)| c * x.powi(i as i32) * y.powi(j as i32)).sum()
    }

    /// Exact mixed partial derivative `∂x^dx ∂y^dy`.
    pub fn partial(&self, dx: u32, dy: u32) -> DiskPolynomial {
        let mut out = DiskPolynomial::zero();
        for (&(i, j), &c) in &self.terms {
            if i < dx || j < dy {
                continue;
            }
            let fx: f64 = ((i - dx + 1)..=i).map(f64::from).product();
            let fy: f64 = ((j - dy + 1)..=j).map(f64::from).product();
            out.add_term(i - dx, j - dy, c * fx * fy);
        }
        out
    }

    pub fn gradient(&self, z: Complex64) -> [f64; 2] {
        [self.partial(1, 0).eval(z), self.partial(0, 1).eval(z)]
    }

    pub fn hessian(&self, z: Complex64) -> [[f64; 2]; 2] {
        let xy = self.partial(1, 1).eval(z);
        [[self.partial(2, 0).eval(z), xy], [xy, self.partial(0, 2).eval(z)]]
    }

    pub fn laplacian(&self, z: Complex64) -> f64 {
        self.partial(2, 0).eval(z) + self.partial(0, 2).eval(z)
    }
}

impl Serialize for DiskPolynomial {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let triples: Vec<(u32, u32, f64)> = self.terms().collect();
        triples.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DiskPolynomial {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let triples: Vec<(u32, u32, f64)> = Vec::deserialize(deserializer)?;
        DiskPolynomial::from_terms(triples).map_err(de::Error::custom)
    }
}

/// Real trigonometric polynomial `a_0 + Σ (a_n cos nθ + b_n sin nθ)`.
///
/// `cos` holds `a_0..a_N` and `sin` holds `b_1..b_N`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCircle")]
pub struct CircleFunction {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCircle {
    #[serde(default)]
    cos: Vec<f64>,
    #[serde(default)]
    sin: Vec<f64>,
}

impl TryFrom<RawCircle> for CircleFunction {
    type Error = Error;

    fn try_from(raw: RawCircle) -> Result<Self> {
        if raw.cos.iter().chain(&raw.sin).any(|c| !c.is_finite()) {
            return Err(Error::Format("non-finite Fourier coefficient".into()));
        }
        Ok(CircleFunction::new(raw.cos, raw.sin))
    }
}

impl CircleFunction {
    pub fn new(mut cos: Vec<f64>, mut sin: Vec<f64>) -> Self {
        let n = cos.len().saturating_sub(1).max(sin.len());
        cos.resize(n + 1, 0.0);
        sin.resize(n, 0.0);
        while cos.len() > 1 && cos[cos.len() - 1] == 0.0 && sin[sin.len() - 1] == 0.0 {
            cos.pop();
            sin.pop();
        }
        Self { cos, sin }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c], vec![])
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn cos_coefficients(&self) -> &[f64] {
        &self.cos
    }

    /// Sine coefficients `b_1..b_N`.
    pub fn sin_coefficients(&self) -> &[f64] {
        &self.sin
    }

    pub fn degree(&self) -> usize {
        self.sin.len()
    }

    pub fn is_constant(&self) -> bool {
        self.cos[1..].iter().chain(&self.sin).all(|&c| c == 0.0)
    }

    pub fn mean(&self) -> f64 {
        self.cos[0]
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let step = Complex64::from_polar(1.0, theta);
        let mut power = Complex64::new(1.0, 0.0);
        let mut acc = self.cos[0];
        for n in 1..=self.degree() {
            power *= step;
            acc += self.cos[n] * power.re + self.sin[n - 1] * power.im;
        }
        acc
    }

    /// Value at a point of the unit circle.
    pub fn eval_at(&self, w: Complex64) -> f64 {
        self.harmonic(w / w.norm())
    }

    /// Exact θ-derivative.
    pub fn derivative(&self) -> CircleFunction {
        let n = self.degree();
        let mut cos = vec![0.0; n + 1];
        let mut sin = vec![0.0; n];
        for k in 1..=n {
            cos[k] = k as f64 * self.sin[k - 1];
            sin[k - 1] = -(k as f64) * self.cos[k];
        }
        CircleFunction::new(cos, sin)
    }

    /// Fourier multiplier `|n|`, i.e. the normal derivative of the harmonic
    /// extension.
    pub fn half_laplacian(&self) -> CircleFunction {
        let n = self.degree();
        let mut cos = vec![0.0; n + 1];
        let mut sin = vec![0.0; n];
        for k in 1..=n {
            cos[k] = k as f64 * self.cos[k];
            sin[k - 1] = k as f64 * self.sin[k - 1];
        }
        CircleFunction::new(cos, sin)
    }

    pub fn scaled(&self, factor: f64) -> CircleFunction {
        CircleFunction::new(
            self.cos.iter().map(|c| c * factor).collect(),
            self.sin.iter().map(|c| c * factor).collect(),
        )
    }

    pub fn add(&self, other: &CircleFunction) -> CircleFunction {
        let n = self.degree().max(other.degree());
        let cos = (0..=n).map(|k| self.cos.get(k).unwrap_or(&0.0) + other.cos.get(k).unwrap_or(&0.0)).collect();
        let sin = (0..n).map(|k| self.sin.get(k).unwrap_or(&0.0) + other.sin.get(k).unwrap_or(&0.0)).collect();
        CircleFunction::new(cos, sin)
    }

    /// Harmonic extension `a_0 + Σ r^n (a_n cos nθ + b_n sin nθ)` at `z`.
    pub fn harmonic(&self, z: Complex64) -> f64 {
        let mut power = Complex64::new(1.0, 0.0);
        let mut acc = self.cos[0];
        for n in 1..=self.degree() {
            power *= z;
            acc += self.cos[n] * power.re + self.sin[n - 1] * power.im;
        }
        acc
    }

    /// `F'(z)` for the analytic `F` with `Re F` equal to the harmonic
    /// extension; `F'` carries `(∂x H, -∂y H)`.
    pub fn analytic_derivative(&self, z: Complex64) -> Complex64 {
        let mut power = Complex64::new(1.0, 0.0);
        let mut dz = Complex64::new(0.0, 0.0);
        for n in 1..=self.degree() {
            let c = Complex64::new(self.cos[n], -self.sin[n - 1]);
            dz += c * power * n as f64;
            power *= z;
        }
        dz
    }

    /// Cartesian gradient of the harmonic extension at `z`.
    pub fn harmonic_gradient(&self, z: Complex64) -> [f64; 2] {
        let dz = self.analytic_derivative(z);
        [dz.re, -dz.im]
    }
}

/// Prescribed curvature data with their perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureData {
    /// Gaussian curvature in the disk.
    #[serde(rename = "K")]
    pub gaussian: DiskPolynomial,
    /// Geodesic curvature on the circle.
    #[serde(rename = "h")]
    pub geodesic: CircleFunction,
    /// Perturbation of the Gaussian curvature.
    #[serde(rename = "G", default)]
    pub gaussian_perturbation: DiskPolynomial,
    /// Perturbation of the geodesic curvature.
    #[serde(rename = "I", default = "CircleFunction::zero")]
    pub geodesic_perturbation: CircleFunction,
}

/// Names accepted by [`CurvatureData::fixture`].
pub const FIXTURE_NAMES: [&str; 5] = ["canonical", "tilted", "constant", "flat", "unperturbed"];

impl CurvatureData {
    pub fn new(
        gaussian: DiskPolynomial,
        geodesic: CircleFunction,
        gaussian_perturbation: DiskPolynomial,
        geodesic_perturbation: CircleFunction,
    ) -> Self {
        Self { gaussian, geodesic, gaussian_perturbation, geodesic_perturbation }
    }

    /// `K = 1 + (x-1)^2 + y^2`, `h = 1`, `G = (x-1) + y`, `I = 0`.
    pub fn canonical() -> Self {
        let gaussian =
            DiskPolynomial::from_terms([(0, 0, 2.0), (1, 0, -2.0), (2, 0, 1.0), (0, 2, 1.0)]).expect("fixture");
        let perturbation = DiskPolynomial::from_terms([(0, 0, -1.0), (1, 0, 1.0), (0, 1, 1.0)]).expect("fixture");
        Self::new(gaussian, CircleFunction::constant(1.0), perturbation, CircleFunction::zero())
    }

    /// Admissible fixture with a tangential geodesic-curvature gradient:
    /// `h = 1 + 0.3 sin θ` and `K` tilted so that `1` stays critical.
    pub fn tilted() -> Self {
        let phi = 1.0 + SQRT_2;
        let gaussian =
            DiskPolynomial::from_terms([(0, 0, 2.0), (1, 0, -2.0), (2, 0, 1.0), (0, 2, 1.0), (0, 1, -0.6 * phi)])
                .expect("fixture");
        let perturbation = DiskPolynomial::from_terms([(0, 0, -1.0), (1, 0, 1.0), (0, 1, 1.0)]).expect("fixture");
        Self::new(gaussian, CircleFunction::new(vec![1.0], vec![0.3]), perturbation, CircleFunction::zero())
    }

    /// Constant curvatures without perturbation.
    pub fn constant(k: f64, h: f64) -> Self {
        Self::new(
            DiskPolynomial::constant(k),
            CircleFunction::constant(h),
            DiskPolynomial::zero(),
            CircleFunction::zero(),
        )
    }

    /// Looks up a built-in fixture by name.
    pub fn fixture(name: &str) -> Option<Self> {
        match name {
            "canonical" => Some(Self::canonical()),
            "tilted" => Some(Self::tilted()),
            "constant" => Some(Self::constant(1.0, 1.0)),
            "flat" => {
                let mut d = Self::canonical();
                d.gaussian = DiskPolynomial::zero();
                Some(d)
            }
            "unperturbed" => {
                let mut d = Self::canonical();
                d.gaussian_perturbation = DiskPolynomial::zero();
                Some(d)
            }
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("curvature data serializes")
    }

    /// `K_ε = K + εG` at an interior point.
    pub fn perturbed_gaussian(&self, z: Complex64, epsilon: f64) -> f64 {
        self.gaussian.eval(z) + epsilon * self.gaussian_perturbation.eval(z)
    }

    /// `h_ε = h + εI` at a point of the circle (or its harmonic extension inside).
    pub fn perturbed_geodesic(&self, w: Complex64, epsilon: f64) -> f64 {
        self.geodesic.harmonic(w) + epsilon * self.geodesic_perturbation.harmonic(w)
    }
}

/// `φ(ξ) = h(ξ) + sqrt(h(ξ)² + K(ξ))` for a boundary point `ξ`.
pub fn phi_at(data: &CurvatureData, xi: Complex64) -> Result<f64> {
    let h = data.geodesic.eval_at(xi);
    let k = data.gaussian.eval(xi);
    let radicand = h * h + k;
    if radicand < 0.0 || !radicand.is_finite() {
        return Err(Error::Domain(format!("h(ξ)² + K(ξ) = {radicand} is negative at ξ = {xi}")));
    }
    Ok(h + radicand.sqrt())
}

/// Values of every admissibility condition at the blow-up point `1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// `(h(1)² + K(1), φ(1))`; both must be positive.
    pub radicand_and_phi: (f64, f64),
    /// Normal and tangential derivatives of `φ` at `1`, up to the factor 2.
    pub criticality_residuals: (f64, f64),
    /// `ΔK(1) + 4|∇H(1)|²`.
    pub laplacian_nondegeneracy: f64,
    /// `∂₂₂K(1) + 2φ(1)h″(1)`.
    pub tangential_nondegeneracy: f64,
    /// `2K(1) + φ(1)h(1)`.
    pub mass_coefficient: f64,
    /// `(G(1), I(1))`.
    pub perturbation_at_point: (f64, f64),
    pub transversality_lhs: f64,
    pub transversality_rhs: f64,
    pub tolerance: f64,
    pub admissible: bool,
}

impl HypothesisReport {
    /// Human-readable list of the violated conditions.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let (rad, phi) = self.radicand_and_phi;
        if !(rad > 0.0) || !(phi > 0.0) {
            out.push("h(1)^2 + K(1) > 0 and phi(1) > 0");
        }
        let (c1, c2) = self.criticality_residuals;
        if !(c1.abs() < self.tolerance && c2.abs() < self.tolerance) {
            out.push("1 is a critical point of phi");
        }
        if self.laplacian_nondegeneracy == 0.0 || !self.laplacian_nondegeneracy.is_finite() {
            out.push("Laplacian nondegeneracy");
        }
        if self.tangential_nondegeneracy == 0.0 || !self.tangential_nondegeneracy.is_finite() {
            out.push("tangential nondegeneracy");
        }
        if self.mass_coefficient == 0.0 || !self.mass_coefficient.is_finite() {
            out.push("mass coefficient nonzero");
        }
        let (g, i) = self.perturbation_at_point;
        if !(g.abs() < self.tolerance && i.abs() < self.tolerance) {
            out.push("perturbations vanish at 1");
        }
        if self.transversality_lhs == self.transversality_rhs
            || !(self.transversality_lhs - self.transversality_rhs).is_finite()
        {
            out.push("transversality");
        }
        out
    }
}

/// Evaluates every admissibility condition at the blow-up point `1`.
pub fn check_hypotheses(data: &CurvatureData, tol: f64) -> HypothesisReport {
    let one = Complex64::new(1.0, 0.0);
    let k = &data.gaussian;
    let h = &data.geodesic;
    let h_val = h.eval(0.0);
    let k_val = k.eval(one);
    let radicand = h_val * h_val + k_val;
    let phi = if radicand >= 0.0 { h_val + radicand.sqrt() } else { f64::NAN };

    let half_h = h.half_laplacian();
    let dh = h.derivative();
    let ddh = dh.derivative();
    let [k1, k2] = k.gradient(one);
    let hess = k.hessian(one);
    let normal_h = half_h.eval(0.0);
    let tangential_h = dh.eval(0.0);

    let criticality = (k1 + 2.0 * phi * normal_h, k2 + 2.0 * phi * tangential_h);
    let laplacian_nondegeneracy = k.laplacian(one) + 4.0 * (normal_h * normal_h + tangential_h * tangential_h);
    let tangential_nondegeneracy = hess[1][1] + 2.0 * phi * ddh.eval(0.0);
    let mass_coefficient = 2.0 * k_val + phi * h_val;

    let g = &data.gaussian_perturbation;
    let i = &data.geodesic_perturbation;
    let [g1, g2] = g.gradient(one);
    let lhs = g1 + 2.0 * phi * i.half_laplacian().eval(0.0);
    let b2 = g2 + 2.0 * phi * i.derivative().eval(0.0);
    let a11 = hess[0][1] + 2.0 * phi * dh.half_laplacian().eval(0.0);
    let rhs = b2 * a11 / tangential_nondegeneracy;

    let mut report = HypothesisReport {
        radicand_and_phi: (radicand, phi),
        criticality_residuals: criticality,
        laplacian_nondegeneracy,
        tangential_nondegeneracy,
        mass_coefficient,
        perturbation_at_point: (g.eval(one), i.eval(0.0)),
        transversality_lhs: lhs,
        transversality_rhs: rhs,
        tolerance: tol,
        admissible: false,
    };
    report.admissible = report.failures().is_empty();
    report
}
