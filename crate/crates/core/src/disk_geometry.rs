//! Möbius normal family, bubble profile and kernel functions of the
//! linearized operator. All evaluators are closed form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curvature_model::{phi_at, CurvatureData};
use crate::error::{Error, Result};

/// Parameters `(δ, η, τ, ε)` selecting one ansatz; the concentration point is
/// `ξ = e^{iη}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleChart {
    pub delta: f64,
    pub eta: f64,
    pub tau: f64,
    pub epsilon: f64,
}

impl BubbleChart {
    pub fn new(delta: f64, eta: f64, tau: f64, epsilon: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta = {delta} must lie in (0, 1)")));
        }
        if !(eta.is_finite() && tau.is_finite() && epsilon.is_finite()) {
            return Err(Error::InvalidParameter("chart parameters must be finite".into()));
        }
        Ok(Self { delta, eta, tau, epsilon })
    }

    pub fn xi(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.eta)
    }
}

/// `f(z) = (z + (1-δ)ξ) / (1 + (1-δ) ξ̄ z)`.
pub fn mobius(z: Complex64, delta: f64, xi: Complex64) -> Complex64 {
    let a = 1.0 - delta;
    (z + xi * a) / (1.0 + xi.conj() * z * a)
}

pub fn mobius_inverse(y: Complex64, delta: f64, xi: Complex64) -> Complex64 {
    let a = 1.0 - delta;
    (y - xi * a) / (1.0 - xi.conj() * y * a)
}

pub fn mobius_derivative(z: Complex64, delta: f64, xi: Complex64) -> Complex64 {
    let den = 1.0 + xi.conj() * z * (1.0 - delta);
    Complex64::new(delta * (2.0 - delta), 0.0) / (den * den)
}

/// `2 log|f'(z)|`.
pub fn mobius_log_deriv(z: Complex64, delta: f64, xi: Complex64) -> f64 {
    let den = (1.0 + xi.conj() * z * (1.0 - delta)).norm();
    2.0 * ((delta * (2.0 - delta)).ln() - 2.0 * den.ln())
}

/// Constants `φ(ξ)`, `K(ξ)`, `h(ξ)` that fix the bubble at `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub phi: f64,
    pub gaussian: f64,
    pub geodesic: f64,
}

impl BubbleParams {
    pub fn at(data: &CurvatureData, xi: Complex64) -> Result<Self> {
        Ok(Self { phi: phi_at(data, xi)?, gaussian: data.gaussian.eval(xi), geodesic: data.geodesic.eval_at(xi) })
    }

    /// Constant bubble data with `φ` recomputed from `(K, h)`.
    pub fn from_curvatures(gaussian: f64, geodesic: f64) -> Result<Self> {
        let radicand = geodesic * geodesic + gaussian;
        if radicand < 0.0 {
            return Err(Error::Domain(format!("h^2 + K = {radicand} is negative")));
        }
        Ok(Self { phi: geodesic + radicand.sqrt(), gaussian, geodesic })
    }

    fn denominator(&self, z: Complex64) -> f64 {
        self.phi * self.phi + self.gaussian * z.norm_sqr()
    }

    /// `φ² + K`, the bubble denominator on the circle.
    pub fn boundary_denominator(&self) -> f64 {
        self.phi * self.phi + self.gaussian
    }

    /// `e^{V/2}` on the circle, `2φ/(φ²+K)`.
    pub fn boundary_scale(&self) -> f64 {
        2.0 * self.phi / self.boundary_denominator()
    }

    /// Kernel normalization `A₀ = 3φ²(φ²+K)³ / (3φ⁴ + 3φ²K + 2K²)`.
    pub fn kernel_constant(&self) -> f64 {
        let a = self.phi * self.phi;
        let k = self.gaussian;
        3.0 * a * (a + k).powi(3) / (3.0 * a * a + 3.0 * a * k + 2.0 * k * k)
    }

    /// `V(z) = 2 log(2φ / (φ² + K|z|²))`.
    pub fn bubble(&self, z: Complex64) -> Result<f64> {
        let den = self.denominator(z);
        let arg = 2.0 * self.phi / den;
        if !(arg > 0.0) || !arg.is_finite() {
            return Err(Error::Domain(format!("bubble logarithm of {arg} at z = {z}")));
        }
        Ok(2.0 * arg.ln())
    }

    /// `e^{V(z)} = 4φ² / (φ² + K|z|²)²`, without the positivity check.
    pub fn bubble_exp(&self, z: Complex64) -> f64 {
        let den = self.denominator(z);
        4.0 * self.phi * self.phi / (den * den)
    }

    /// Exact Laplacian of `V`, `-8Kφ² / (φ² + K|z|²)²`.
    pub fn bubble_laplacian(&self, z: Complex64) -> f64 {
        let den = self.denominator(z);
        -8.0 * self.gaussian * self.phi * self.phi / (den * den)
    }

    /// Exact radial derivative `∂_r V`.
    pub fn bubble_radial_derivative(&self, z: Complex64) -> f64 {
        let r = z.norm();
        -4.0 * self.gaussian * r / self.denominator(z)
    }

    /// `Z₁ = ⟨z,ξ⟩ / (φ² + K|z|²)` for `which == 1`, `Z₂ = ⟨z,iξ⟩ / (…)` for `which == 2`.
    pub fn kernel(&self, which: u8, z: Complex64, xi: Complex64) -> f64 {
        let rotated = z * xi.conj();
        let num = if which == 1 { rotated.re } else { rotated.im };
        num / self.denominator(z)
    }
}

/// `V_ξ(z)` for curvature data evaluated at `ξ`.
pub fn bubble_v(z: Complex64, xi: Complex64, data: &CurvatureData) -> Result<f64> {
    BubbleParams::at(data, xi)?.bubble(z)
}

/// Kernel function `Z_i`, `i ∈ {1, 2}`.
pub fn kernel_z(which: u8, z: Complex64, xi: Complex64, data: &CurvatureData) -> Result<f64> {
    if which != 1 && which != 2 {
        return Err(Error::InvalidParameter(format!("kernel index {which} must be 1 or 2")));
    }
    Ok(BubbleParams::at(data, xi)?.kernel(which, z, xi))
}

/// `Θ(w) = 2⟨w, iξ⟩ / (1 + (1-δ)² + 2(1-δ)⟨w, ξ⟩)` for `|w| = 1`.
pub fn theta_weight(w: Complex64, delta: f64, xi: Complex64) -> f64 {
    let a = 1.0 - delta;
    let rotated = w * xi.conj();
    // 1 + a² + 2a⟨w,ξ⟩ rewritten to avoid cancellation near w = -ξ; points
    // within rounding of the circle are treated as lying on it
    let mut off_circle = 1.0 - w.norm_sqr();
    if off_circle.abs() < 1e-13 {
        off_circle = 0.0;
    }
    let den = delta * delta + a * ((w + xi).norm_sqr() + off_circle);
    2.0 * rotated.im / den
}
