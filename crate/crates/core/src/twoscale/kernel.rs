//! Smoothing operator `S_ε f = f ∗ ζ_ε` with the polynomial bump
//! `ζ(x) = c (1 - 4|x|²)⁴` on `B(0, 1/2)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fem::quadrature::disk_rule;
use crate::geometry::Point;

/// `c` with `∫ ζ = 1` in two dimensions: `∫ (1-4|x|²)⁴ = π/20`.
pub const PROFILE_CONSTANT: f64 = 20.0 / PI;

/// Polar sampling of the unit-scale kernel.
#[derive(Debug, Clone)]
pub struct SmoothingKernel {
    offsets: Vec<Point>,
    weights: Vec<f64>,
    grad_weights: Vec<Point>,
    raw_mass: f64,
}

impl Default for SmoothingKernel {
    fn default() -> Self {
        Self::new(8, 16).expect("default rule is valid")
    }
}

impl SmoothingKernel {
    /// Gauss–Legendre in `r` times the trapezoid rule in the angle.
    pub fn new(radial: usize, angular: usize) -> Result<Self> {
        if radial * angular < 64 {
            return Err(Error::InvalidArgument(format!(
                "smoothing rule needs at least 64 samples, got {radial} x {angular}"
            )));
        }
        let rule = disk_rule(0.5, radial, angular);
        let raw_mass: f64 = rule.iter().map(|(q, w)| w * profile(*q)).sum();
        let offsets = rule.iter().map(|(q, _)| *q).collect();
        let weights = rule.iter().map(|(q, w)| w * profile(*q) / raw_mass).collect();
        let grad_weights = rule
            .iter()
            .map(|(q, w)| {
                let g = profile_gradient(*q);
                [w * g[0] / raw_mass, w * g[1] / raw_mass]
            })
            .collect();
        Ok(SmoothingKernel { offsets, weights, grad_weights, raw_mass })
    }

    pub fn samples(&self) -> usize {
        self.offsets.len()
    }

    /// `|∫ ζ - 1|` as seen by the rule before normalization.
    pub fn mass_error(&self) -> f64 {
        (self.raw_mass - 1.0).abs()
    }

    /// `S_ε f(x)`; `f` is sampled on `B(x, ε/2)`.
    pub fn smooth<const K: usize>(&self, eps: f64, x: Point, f: impl Fn(Point) -> [f64; K]) -> [f64; K] {
        let mut out = [0.0; K];
        for (q, w) in self.offsets.iter().zip(&self.weights) {
            let v = f([x[0] - eps * q[0], x[1] - eps * q[1]]);
            for k in 0..K {
                out[k] += w * v[k];
            }
        }
        out
    }

    /// `S_ε f(x)` and `∇S_ε f(x) = ε⁻¹ ∫ f(x - εq) ∇ζ(q) dq`, with
    /// `grad[k][j] = ∂_j (S_ε f)_k`.
    pub fn smooth_with_gradient<const K: usize>(
        &self,
        eps: f64,
        x: Point,
        f: impl Fn(Point) -> [f64; K],
    ) -> ([f64; K], [[f64; 2]; K]) {
        let mut val = [0.0; K];
        let mut grad = [[0.0; 2]; K];
        for ((q, w), g) in self.offsets.iter().zip(&self.weights).zip(&self.grad_weights) {
            let v = f([x[0] - eps * q[0], x[1] - eps * q[1]]);
            for k in 0..K {
                val[k] += w * v[k];
                grad[k][0] += g[0] * v[k] / eps;
                grad[k][1] += g[1] * v[k] / eps;
            }
        }
        (val, grad)
    }
}

/// `ζ(x)`.
pub fn profile(x: Point) -> f64 {
    let s = 1.0 - 4.0 * (x[0] * x[0] + x[1] * x[1]);
    if s <= 0.0 {
        0.0
    } else {
        PROFILE_CONSTANT * s.powi(4)
    }
}

/// `∇ζ(x) = -32 c (1 - 4|x|²)³ x`.
pub fn profile_gradient(x: Point) -> Point {
    let s = 1.0 - 4.0 * (x[0] * x[0] + x[1] * x[1]);
    if s <= 0.0 {
        return [0.0, 0.0];
    }
    let f = -32.0 * PROFILE_CONSTANT * s.powi(3);
    [f * x[0], f * x[1]]
}
