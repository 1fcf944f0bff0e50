//! Quadrature for the Jacobi-ensemble density
//!
//! ```text
//! w(y) = Π_i y_i^{α−(m+1)/2} (1−y_i)^{β−α−(m+1)/2} · Π_{i<j} |y_i − y_j|
//! ```
//!
//! on the ordered region 1 > y_1 > … > y_m > 0, m ∈ {1, 2}.
//!
//! For m = 1 this is a plain Gauss–Jacobi rule. For m = 2 the substitution
//! y = sin²φ turns each one-variable factor into sin^{2a+1}φ cos^{2b+1}φ,
//! which is a trigonometric polynomial for the Grassmannian parameters
//! (2a+1 = 0, 2b+1 = d−2k), and the Vandermonde factor into
//! sin(φ₁+φ₂) sin(φ₁−φ₂). The ordered triangle in φ is then collapsed onto
//! the unit square from its vertex (π/2, π/2), where the closed-form kernels
//! are least smooth, and integrated with tensor Gauss–Legendre. The result
//! converges spectrally and reaches machine precision.

use std::f64::consts::FRAC_PI_2;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use super::onedim::JacobiWeight1d;
use crate::error::{Error, Result};
use crate::sum::DdSum;

/// Jacobi-ensemble weight w_{α,β} in m variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightDensity {
    pub alpha: f64,
    pub beta: f64,
    pub m: usize,
}

impl WeightDensity {
    /// Requires (m−1)/2 < α < β − (m−1)/2.
    pub fn new(alpha: f64, beta: f64, m: usize) -> Result<Self> {
        let h = (m as f64 - 1.0) / 2.0;
        if m == 0 || !(h < alpha && alpha < beta - h) {
            return Err(Error::InvalidParameter(format!(
                "weight parameters outside (m-1)/2 < alpha < beta - (m-1)/2: alpha={alpha}, beta={beta}, m={m}"
            )));
        }
        Ok(Self { alpha, beta, m })
    }

    /// α = k/2, β = d/2, m = k.
    pub fn grassmannian(d: usize, k: usize) -> Result<Self> {
        if 2 * k > d {
            return Err(Error::InvalidDimensions {
                d,
                k,
                reason: "Jacobi weight needs k <= d/2",
            });
        }
        Self::new(k as f64 / 2.0, d as f64 / 2.0, k)
    }

    /// Per-variable exponents (a, b) of y^a (1−y)^b.
    pub fn exponents(&self) -> (f64, f64) {
        let h = (self.m as f64 + 1.0) / 2.0;
        (self.alpha - h, self.beta - self.alpha - h)
    }

    pub fn one_variable_factor(&self) -> JacobiWeight1d {
        let (a, b) = self.exponents();
        JacobiWeight1d { a, b }
    }

    /// Vandermonde degree m(m−1)/2.
    pub fn vandermonde_degree(&self) -> u32 {
        (self.m * (self.m - 1) / 2) as u32
    }
}

/// Nodes on the ordered region with `∫ f w = m! Σ_i weights_i f(nodes_i)` for symmetric f.
#[derive(Debug, Clone)]
pub struct SimplexRule {
    pub density: WeightDensity,
    /// Polynomial degree (excluding the Vandermonde factor) the rule is built for.
    pub degree: u32,
    /// Nodes (y_1, y_2) with y_1 ≥ y_2; for m = 1 the second entry is unused.
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    normalized: Vec<f64>,
}

impl SimplexRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// ∫ w over [0,1]^m.
    pub fn mass(&self) -> f64 {
        let fact = if self.density.m == 2 { 2.0 } else { 1.0 };
        fact * self.weights.iter().copied().collect::<DdSum>().value()
    }

    /// Weights of the normalized measure ν = w / ∫w; they sum to one.
    pub fn normalized_weights(&self) -> &[f64] {
        &self.normalized
    }

    /// ∫ f dν for symmetric f, compensated.
    pub fn integrate_normalized<F: Fn(&[f64; 2]) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.normalized)
            .map(|(y, w)| w * f(y))
            .collect::<DdSum>()
            .value()
    }

    /// Same as [`Self::integrate_normalized`], keeping the double-double pair.
    pub fn integrate_normalized_dd<F: Fn(&[f64; 2]) -> f64>(&self, f: F) -> DdSum {
        self.nodes
            .iter()
            .zip(&self.normalized)
            .map(|(y, w)| w * f(y))
            .collect()
    }
}

fn normalize(weights: &[f64]) -> Vec<f64> {
    let total = weights.iter().copied().collect::<DdSum>().value();
    weights.iter().map(|w| w / total).collect()
}

/// Builds a rule for symmetric polynomials of degree ≤ `degree`.
pub fn ordered_simplex_quadrature(density: &WeightDensity, degree: u32) -> Result<SimplexRule> {
    match density.m {
        1 => {
            let w1 = density.one_variable_factor();
            let n = degree as usize / 2 + 1;
            let (x, wt) = w1.gauss_rule(n);
            let mass = w1.mass();
            let weights: Vec<f64> = wt.iter().map(|w| w * mass).collect();
            Ok(SimplexRule {
                density: *density,
                degree,
                nodes: x.into_iter().map(|y| [y, 0.0]).collect(),
                normalized: normalize(&weights),
                weights,
            })
        }
        2 => Ok(two_variable_rule(density, degree)),
        m => Err(Error::UnsupportedArity(m)),
    }
}

fn two_variable_rule(density: &WeightDensity, degree: u32) -> SimplexRule {
    let (a, b) = density.exponents();
    let (ps, pc) = (2.0 * a + 1.0, 2.0 * b + 1.0);
    // y^D oscillates like cos(πD s) in the collapsed coordinate
    let n = 5 * degree as usize / 4 + 20 + (ps.abs() + pc.abs()).ceil() as usize;
    let gl = GaussLegendre::new(NonZeroUsize::new(n).unwrap());
    let unit: Vec<(f64, f64)> = gl.iter().map(|(x, w)| ((x + 1.0) / 2.0, w / 2.0)).collect();
    let factor = |phi: f64| {
        let (s, c) = phi.sin_cos();
        2.0 * pow_nonneg(s, ps) * pow_nonneg(c, pc)
    };
    let mut nodes = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for &(s, ws) in &unit {
        for &(u, wu) in &unit {
            // collapse from the vertex (π/2, π/2): φ1 = π/2(1 − s(1−u)), φ2 = π/2(1 − s)
            let phi1 = FRAC_PI_2 * (1.0 - s * (1.0 - u));
            let phi2 = FRAC_PI_2 * (1.0 - s);
            let jac = FRAC_PI_2 * FRAC_PI_2 * s;
            let vandermonde = (phi1 + phi2).sin() * (phi1 - phi2).sin();
            let w = ws * wu * jac * vandermonde * factor(phi1) * factor(phi2);
            let y1 = phi1.sin().powi(2);
            let y2 = phi2.sin().powi(2);
            nodes.push([y1, y2]);
            weights.push(w);
        }
    }
    SimplexRule {
        density: *density,
        degree,
        normalized: normalize(&weights),
        nodes,
        weights,
    }
}

#[inline]
fn pow_nonneg(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if p.fract() == 0.0 && p > 0.0 {
        x.powi(p as i32)
    } else {
        x.abs().powf(p)
    }
}
