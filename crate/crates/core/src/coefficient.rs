//! Periodic elasticity tensors `A(y) = (a_{ij}^{αβ}(y))`.
//!
//! Convention: the flux of a displacement `u` is `(A∇u)_i^α = a_{ij}^{αβ} ∂_j u^β`
//! and the bilinear form is `∫ a_{ij}^{αβ} ∂_j u^β ∂_i v^α`.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

pub const DIM: usize = 2;

/// Dense fourth-order tensor in two dimensions, indexed `(i, j, α, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tensor4(pub [f64; 16]);

#[inline]
fn idx(i: usize, j: usize, a: usize, b: usize) -> usize {
    ((i * DIM + j) * DIM + a) * DIM + b
}

impl Tensor4 {
    pub fn zeros() -> Self {
        Tensor4([0.0; 16])
    }

    pub fn isotropic(lambda: f64, mu: f64) -> Self {
        let d = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
        let mut t = Self::zeros();
        for i in 0..DIM {
            for j in 0..DIM {
                for a in 0..DIM {
                    for b in 0..DIM {
                        t.0[idx(i, j, a, b)] =
                            lambda * d(i, a) * d(j, b) + mu * (d(i, j) * d(a, b) + d(i, b) * d(j, a));
                    }
                }
            }
        }
        t
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        self.0[idx(i, j, a, b)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, a: usize, b: usize, v: f64) {
        self.0[idx(i, j, a, b)] = v;
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut t = *self;
        t.0.iter_mut().for_each(|v| *v *= s);
        t
    }

    /// Flux `(A ξ)_i^α = a_{ij}^{αβ} ξ_j^β`, with `ξ[β][j] = ∂_j u^β`.
    #[inline]
    pub fn apply(&self, grad: &[[f64; DIM]; DIM]) -> [[f64; DIM]; DIM] {
        let mut out = [[0.0; DIM]; DIM];
        for a in 0..DIM {
            for i in 0..DIM {
                let mut s = 0.0;
                for b in 0..DIM {
                    for j in 0..DIM {
                        s += self.get(i, j, a, b) * grad[b][j];
                    }
                }
                out[a][i] = s;
            }
        }
        out
    }

    /// `a_{ij}^{αβ} ξ_i^α ξ_j^β`.
    pub fn quadratic_form(&self, xi: &[[f64; DIM]; DIM]) -> f64 {
        let f = self.apply(xi);
        let mut s = 0.0;
        for a in 0..DIM {
            for i in 0..DIM {
                s += f[a][i] * xi[a][i];
            }
        }
        s
    }

    /// Largest violation of `a_{ij}^{αβ} = a_{ji}^{βα} = a_{αj}^{iβ}`,
    /// relative to the largest entry.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.0.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..DIM {
            for j in 0..DIM {
                for a in 0..DIM {
                    for b in 0..DIM {
                        let v = self.get(i, j, a, b);
                        worst = worst.max((v - self.get(j, i, b, a)).abs());
                        worst = worst.max((v - self.get(a, j, i, b)).abs());
                    }
                }
            }
        }
        worst / scale
    }

    /// Extreme eigenvalues of the quadratic form restricted to symmetric
    /// matrices, in the orthonormal basis `{e11, e22, (e12+e21)/√2}`.
    pub fn symmetric_bounds(&self) -> (f64, f64) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let basis: [[[f64; 2]; 2]; 3] = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]], [[0.0, s], [s, 0.0]]];
        let mut m = Matrix3::zeros();
        for p in 0..3 {
            let f = self.apply(&basis[p]);
            for q in 0..3 {
                let mut v = 0.0;
                for a in 0..DIM {
                    for i in 0..DIM {
                        v += f[a][i] * basis[q][a][i];
                    }
                }
                m[(q, p)] = v;
            }
        }
        let m = (m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(m);
        let ev = eig.eigenvalues;
        (ev.min(), ev.max())
    }
}

/// Coefficient presets. All presets are 1-periodic and isotropic at every point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientField {
    IsotropicLame { lambda: f64, mu: f64 },
    /// `λ(y) = λ̄ (1 + a s(y))`, `μ(y) = μ̄ (1 + a s(y))` with
    /// `s(y) = sin(2π y₁) sin(2π y₂)` and `|a| < 1`.
    PeriodicIsotropic { lambda: f64, mu: f64, amplitude: f64 },
}

impl CoefficientField {
    pub fn isotropic(lambda: f64, mu: f64) -> Self {
        CoefficientField::IsotropicLame { lambda, mu }
    }

    pub fn validate(&self) -> Result<()> {
        let (lambda, mu, amp) = match *self {
            CoefficientField::IsotropicLame { lambda, mu } => (lambda, mu, 0.0),
            CoefficientField::PeriodicIsotropic { lambda, mu, amplitude } => (lambda, mu, amplitude),
        };
        if !(mu > 0.0) || !(lambda >= 0.0) || !(amp.abs() < 1.0) {
            return Err(Error::Coefficient(format!(
                "preset needs mu > 0, lambda >= 0, |amplitude| < 1 (got lambda={lambda}, mu={mu}, amplitude={amp})"
            )));
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            CoefficientField::IsotropicLame { .. } => true,
            CoefficientField::PeriodicIsotropic { amplitude, .. } => amplitude == 0.0,
        }
    }

    fn lame(&self, y: Point) -> (f64, f64) {
        match *self {
            CoefficientField::IsotropicLame { lambda, mu } => (lambda, mu),
            CoefficientField::PeriodicIsotropic { lambda, mu, amplitude } => {
                let tau = 2.0 * std::f64::consts::PI;
                let s = 1.0 + amplitude * (tau * y[0]).sin() * (tau * y[1]).sin();
                (lambda * s, mu * s)
            }
        }
    }

    /// `A(y)` at a cell coordinate.
    pub fn eval(&self, y: Point) -> Tensor4 {
        let (l, m) = self.lame(y);
        Tensor4::isotropic(l, m)
    }

    /// Ellipticity constants `(μ₀, μ₁)` on symmetric matrices.
    ///
    /// For an isotropic tensor the form is `λ (tr ξ)² + 2μ |ξ|²`, whose
    /// eigenvalues are `2μ` (deviatoric) and `2μ + dλ` (spherical).
    pub fn ellipticity(&self) -> (f64, f64) {
        let (lambda, mu, amp) = match *self {
            CoefficientField::IsotropicLame { lambda, mu } => (lambda, mu, 0.0),
            CoefficientField::PeriodicIsotropic { lambda, mu, amplitude } => (lambda, mu, amplitude),
        };
        let lo = 1.0 - amp.abs();
        let hi = 1.0 + amp.abs();
        (2.0 * mu * lo, (2.0 * mu + DIM as f64 * lambda) * hi)
    }

    /// Short label used in cache keys and reports.
    pub fn label(&self) -> String {
        match *self {
            CoefficientField::IsotropicLame { lambda, mu } => format!("iso(l={lambda},m={mu})"),
            CoefficientField::PeriodicIsotropic { lambda, mu, amplitude } => {
                format!("periso(l={lambda},m={mu},a={amplitude})")
            }
        }
    }
}
