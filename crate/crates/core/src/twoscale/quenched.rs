//! Quenched norms `(∫_Ω (⨍_{B_ε(x)∩Ω_ε} |∇u|²)^{p/2} ρ dx)^{1/p}`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::mesh::TriMesh;
use crate::fem::quadrature::TriangleRule;
use crate::geometry::Point;

/// Sub-element sample points of an `Ω_ε` mesh binned for ball queries, and
/// the outer sampling grid over the unit square.
pub struct QuenchedSampler {
    eps: f64,
    points: Vec<Point>,
    weights: Vec<f64>,
    elems: Vec<usize>,
    bins: Vec<Vec<u32>>,
    nb: usize,
    outer: Vec<Point>,
    outer_weight: f64,
}

impl QuenchedSampler {
    /// `subdivisions²` samples per element; outer grid of spacing `ε/outer_per_eps`.
    pub fn new(mesh: &TriMesh, eps: f64, subdivisions: usize, outer_per_eps: usize) -> Result<Self> {
        if subdivisions == 0 || outer_per_eps == 0 || !(eps > 0.0 && eps <= 0.5) {
            return Err(Error::InvalidArgument("quenched sampler needs positive resolutions and 0 < ε ≤ 1/2".into()));
        }
        let rule = TriangleRule::subdivided(subdivisions);
        let mut points = Vec::with_capacity(mesh.num_elements() * rule.weights.len());
        let mut weights = Vec::with_capacity(points.capacity());
        let mut elems = Vec::with_capacity(points.capacity());
        for e in 0..mesh.num_elements() {
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                points.push(mesh.point_at(e, *b));
                weights.push(w * mesh.area(e));
                elems.push(e);
            }
        }
        let nb = (1.0 / eps).round().max(1.0) as usize;
        let mut bins = vec![Vec::new(); nb * nb];
        for (k, p) in points.iter().enumerate() {
            let (i, j) = bin_of(*p, nb);
            bins[j * nb + i].push(k as u32);
        }
        let m = (outer_per_eps as f64 / eps).round() as usize;
        let s = 1.0 / m as f64;
        let outer = (0..m * m).map(|k| [(k % m) as f64 * s + 0.5 * s, (k / m) as f64 * s + 0.5 * s]).collect();
        Ok(QuenchedSampler { eps, points, weights, elems, bins, nb, outer, outer_weight: s * s })
    }

    pub fn sample_points(&self) -> &[Point] {
        &self.points
    }

    /// Densities from a per-element quantity, e.g. `|∇u|²` of a P1 field.
    pub fn densities_from_elements(&self, per_elem: &[f64]) -> Vec<f64> {
        self.elems.iter().map(|&e| per_elem[e]).collect()
    }

    pub fn densities_from_fn(&self, f: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
        self.points.par_iter().map(|p| f(*p)).collect()
    }

    /// `⨍_{B_ε(x)∩Ω_ε} density` at every outer grid point.
    pub fn ball_averages(&self, density: &[f64]) -> Result<Vec<f64>> {
        let r2 = self.eps * self.eps;
        self.outer
            .par_iter()
            .map(|x| {
                let (ci, cj) = bin_of(*x, self.nb);
                let (mut s, mut m) = (0.0, 0.0);
                for j in cj.saturating_sub(1)..=(cj + 1).min(self.nb - 1) {
                    for i in ci.saturating_sub(1)..=(ci + 1).min(self.nb - 1) {
                        for &k in &self.bins[j * self.nb + i] {
                            let p = self.points[k as usize];
                            let d = (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2);
                            if d < r2 {
                                s += self.weights[k as usize] * density[k as usize];
                                m += self.weights[k as usize];
                            }
                        }
                    }
                }
                if m == 0.0 {
                    return Err(Error::Mesh(format!("ball B_ε({:?}) misses Ω_ε", x)));
                }
                Ok(s / m)
            })
            .collect()
    }

    /// `(Σ_x h² avg(x)^{p/2} ρ(x))^{1/p}` over the outer grid.
    pub fn norm(&self, averages: &[f64], p: f64, weight: impl Fn(Point) -> f64) -> Result<f64> {
        if !(p > 1.0) {
            return Err(Error::InvalidArgument(format!("quenched norm needs p > 1, got {p}")));
        }
        let s: f64 = self
            .outer
            .iter()
            .zip(averages)
            .map(|(x, a)| self.outer_weight * a.max(0.0).powf(0.5 * p) * weight(*x))
            .sum();
        Ok(s.powf(1.0 / p))
    }
}

fn bin_of(p: Point, nb: usize) -> (usize, usize) {
    let f = |v: f64| ((v * nb as f64).floor().max(0.0) as usize).min(nb - 1);
    (f(p[0]), f(p[1]))
}
