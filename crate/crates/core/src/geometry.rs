//! Perforated reference cell, macroscopic domain, boundary layers, cut-offs
//! and distance weights.
//!
//! The reference cell is `Y = [-1/2, 1/2)^2`. The macroscopic domain is the
//! unit square `(0,1)^2` tiled by `n x n` cells of size `eps = 1/n`; the cell
//! with lattice index `z` occupies `eps * (z + 1/2 + Y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoleShape {
    Disk,
    None,
}

/// One hole per periodicity cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerforationSpec {
    pub hole_shape: HoleShape,
    pub hole_radius: f64,
    #[serde(default)]
    pub center: Point,
}

impl PerforationSpec {
    pub fn disk(radius: f64) -> Self {
        Self { hole_shape: HoleShape::Disk, hole_radius: radius, center: [0.0, 0.0] }
    }

    pub fn none() -> Self {
        Self { hole_shape: HoleShape::None, hole_radius: 0.0, center: [0.0, 0.0] }
    }

    pub fn has_hole(&self) -> bool {
        self.hole_shape == HoleShape::Disk && self.hole_radius > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.hole_radius;
        if !r.is_finite() || r < 0.0 || r >= 0.5 {
            return Err(Error::Geometry(format!("hole radius {r} must lie in [0, 1/2)")));
        }
        if self.hole_shape == HoleShape::Disk {
            let reach = self.center[0].abs().max(self.center[1].abs()) + r;
            if reach >= 0.5 {
                return Err(Error::Geometry(format!(
                    "hole centered at {:?} with radius {r} touches the cell boundary",
                    self.center
                )));
            }
        }
        Ok(())
    }

    /// Gap between neighbouring holes in cell units, `1 - 2r`.
    /// Infinite for the unperforated case.
    pub fn gap(&self) -> f64 {
        if self.has_hole() {
            1.0 - 2.0 * self.hole_radius
        } else {
            f64::INFINITY
        }
    }

    /// Exact porosity `|Y ∩ ω|`.
    pub fn porosity(&self) -> f64 {
        if self.has_hole() {
            1.0 - std::f64::consts::PI * self.hole_radius * self.hole_radius
        } else {
            1.0
        }
    }

    /// Indicator `l⁺` of the periodic perforated set, evaluated at a cell
    /// coordinate (any point of the plane; wrapped into `Y`).
    pub fn l_plus(&self, y: Point) -> f64 {
        if !self.has_hole() {
            return 1.0;
        }
        let w = wrap_to_cell(y);
        let dx = w[0] - self.center[0];
        let dy = w[1] - self.center[1];
        if dx * dx + dy * dy < self.hole_radius * self.hole_radius {
            0.0
        } else {
            1.0
        }
    }
}

/// Wraps a point into `Y = [-1/2, 1/2)^2`.
pub fn wrap_to_cell(y: Point) -> Point {
    let w = |t: f64| t - (t + 0.5).floor();
    [w(y[0]), w(y[1])]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterDomain {
    UnitSquare,
}

/// `Ω_ε = Ω ∩ εω` for `Ω` the unit square and `ε = 1/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroDomain {
    pub outer: OuterDomain,
    pub n: usize,
    pub epsilon: f64,
    pub perforation: PerforationSpec,
}

pub fn build_macro_domain(outer: OuterDomain, n: usize, perforation: PerforationSpec) -> Result<MacroDomain> {
    if n < 2 {
        return Err(Error::Geometry(format!("n = {n}: at least 2 cells per side are required")));
    }
    perforation.validate()?;
    Ok(MacroDomain { outer, n, epsilon: 1.0 / n as f64, perforation })
}

impl MacroDomain {
    pub fn hole_count(&self) -> usize {
        if self.perforation.has_hole() {
            self.n * self.n
        } else {
            0
        }
    }

    /// Hole centers, row-major over the lattice.
    pub fn hole_centers(&self) -> Vec<Point> {
        if !self.perforation.has_hole() {
            return Vec::new();
        }
        let eps = self.epsilon;
        let c = self.perforation.center;
        let mut out = Vec::with_capacity(self.n * self.n);
        for j in 0..self.n {
            for i in 0..self.n {
                out.push([eps * (i as f64 + 0.5 + c[0]), eps * (j as f64 + 0.5 + c[1])]);
            }
        }
        out
    }

    /// Cell coordinate `y ∈ Y` of a macroscopic point.
    pub fn cell_coordinate(&self, x: Point) -> Point {
        wrap_to_cell([x[0] / self.epsilon - 0.5, x[1] / self.epsilon - 0.5])
    }

    pub fn contains(&self, x: Point) -> bool {
        x[0] >= 0.0 && x[0] <= 1.0 && x[1] >= 0.0 && x[1] <= 1.0
    }

    /// `l⁺_ε(x) = l⁺(x/ε)` in macroscopic coordinates.
    pub fn l_plus(&self, x: Point) -> f64 {
        self.perforation.l_plus(self.cell_coordinate(x))
    }

    /// Minimum distance from any hole to `∂Ω`.
    pub fn hole_boundary_clearance(&self) -> f64 {
        let r = self.perforation.hole_radius * self.epsilon;
        self.hole_centers()
            .iter()
            .map(|c| dist_to_unit_square_boundary(*c) - r)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Distance from a point of the closed unit square to its boundary.
pub fn dist_to_unit_square_boundary(x: Point) -> f64 {
    x[0].min(1.0 - x[0]).min(x[1]).min(1.0 - x[1])
}

/// Inward unit normal of the side of the unit square closest to `x`.
fn nearest_side_normal(x: Point) -> Point {
    let d = [x[0], 1.0 - x[0], x[1], 1.0 - x[1]];
    let mut k = 0;
    for i in 1..4 {
        if d[i] < d[k] {
            k = i;
        }
    }
    match k {
        0 => [1.0, 0.0],
        1 => [-1.0, 0.0],
        2 => [0.0, 1.0],
        _ => [0.0, -1.0],
    }
}

/// Layer bookkeeping around `∂Ω` and the extended square `Ω_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerGeometry {
    pub domain: MacroDomain,
    /// Distance from `∂Ω` to `∂Ω_0`.
    pub extended_offset: f64,
}

impl LayerGeometry {
    /// `Ω_0` is the unit square dilated by `offset_multiplier * ε`.
    pub fn new(domain: MacroDomain, offset_multiplier: f64) -> Self {
        Self { domain, extended_offset: offset_multiplier * domain.epsilon }
    }

    pub fn with_default_offset(domain: MacroDomain) -> Self {
        Self::new(domain, 10.0)
    }

    /// `δ(x) = dist(x, ∂Ω_0)` for `x ∈ Ω_0`.
    pub fn delta(&self, x: Point) -> f64 {
        let o = self.extended_offset;
        (x[0] + o).min(1.0 + o - x[0]).min(x[1] + o).min(1.0 + o - x[1]).max(0.0)
    }

    /// `dist(x, ∂Ω)`.
    pub fn dist_boundary(&self, x: Point) -> f64 {
        dist_to_unit_square_boundary(x)
    }

    /// Membership in the layer `O_{nε}`.
    pub fn in_layer(&self, x: Point, multiple: f64) -> bool {
        self.dist_boundary(x) < multiple * self.domain.epsilon
    }

    /// Membership in the co-layer `Σ_{nε} = Ω \ O_{nε}`.
    pub fn in_colayer(&self, x: Point, multiple: f64) -> bool {
        !self.in_layer(x, multiple)
    }

    /// Exact measure of `O_{nε}` for the unit square.
    pub fn layer_measure(&self, multiple: f64) -> f64 {
        let w = (multiple * self.domain.epsilon).min(0.5);
        1.0 - (1.0 - 2.0 * w).powi(2)
    }

    pub fn cutoff_psi(&self, inner_band: f64, outer_band: f64) -> Result<Cutoff> {
        if !(inner_band > 0.0 && inner_band < outer_band) {
            return Err(Error::InvalidArgument(format!(
                "cut-off bands must satisfy 0 < a < b, got a = {inner_band}, b = {outer_band}"
            )));
        }
        Ok(Cutoff { inner: inner_band, outer: outer_band })
    }

    /// The `ψ_ε` of the first-order corrector: bands `(3ε, 4ε)`.
    pub fn psi_eps(&self) -> Cutoff {
        let e = self.domain.epsilon;
        Cutoff { inner: 3.0 * e, outer: 4.0 * e }
    }

    /// The companion `ψ'_ε`: bands `(7ε, 8ε)`.
    pub fn psi_prime_eps(&self) -> Cutoff {
        let e = self.domain.epsilon;
        Cutoff { inner: 7.0 * e, outer: 8.0 * e }
    }

    pub fn distance_weight(&self, beta: f64) -> DistanceWeight {
        DistanceWeight { beta, layer: *self }
    }
}

/// Piecewise-linear ramp in `dist(x, ∂Ω)`: 0 below `inner`, 1 above `outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub inner: f64,
    pub outer: f64,
}

impl Cutoff {
    pub fn value(&self, x: Point) -> f64 {
        let d = dist_to_unit_square_boundary(x);
        ((d - self.inner) / (self.outer - self.inner)).clamp(0.0, 1.0)
    }

    pub fn gradient(&self, x: Point) -> Point {
        let d = dist_to_unit_square_boundary(x);
        if d <= self.inner || d >= self.outer {
            return [0.0, 0.0];
        }
        let n = nearest_side_normal(x);
        let s = 1.0 / (self.outer - self.inner);
        [n[0] * s, n[1] * s]
    }

    pub fn lipschitz_bound(&self) -> f64 {
        1.0 / (self.outer - self.inner)
    }
}

/// `ρ = δ^β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceWeight {
    pub beta: f64,
    pub layer: LayerGeometry,
}

impl DistanceWeight {
    pub fn value(&self, x: Point) -> f64 {
        if self.beta == 0.0 {
            return 1.0;
        }
        self.layer.delta(x).powf(self.beta)
    }

    /// Whether `δ^β` belongs to the Muckenhoupt class `A_2`.
    pub fn is_a2(&self) -> bool {
        self.beta > -1.0 && self.beta < 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_domain(n: usize, r: f64) -> MacroDomain {
        build_macro_domain(OuterDomain::UnitSquare, n, PerforationSpec::disk(r)).unwrap()
    }

    #[test]
    fn lattice_has_n_squared_holes() {
        let d = disk_domain(4, 0.25);
        assert_eq!(d.hole_count(), 16);
        assert_eq!(d.hole_centers().len(), 16);
        assert!((d.epsilon - 0.25).abs() < 1e-15);
        assert!(d.hole_boundary_clearance() >= d.epsilon * d.perforation.gap() / 2.0 - 1e-15);
    }

    #[test]
    fn unperforated_domain_has_no_holes() {
        let d = build_macro_domain(OuterDomain::UnitSquare, 8, PerforationSpec::none()).unwrap();
        assert_eq!(d.hole_count(), 0);
        assert_eq!(d.l_plus([0.5, 0.5]), 1.0);
        assert_eq!(d.perforation.porosity(), 1.0);
    }

    #[test]
    fn near_touching_holes_gap_matches_sampled_distance() {
        let d = disk_domain(4, 0.49);
        let g = d.perforation.gap();
        assert!((g - 0.02).abs() < 1e-12);
        // sample boundaries of two horizontally adjacent holes
        let c = d.hole_centers();
        let (a, b) = (c[0], c[1]);
        let r = 0.49 * d.epsilon;
        let k = 720;
        let mut best = f64::INFINITY;
        for i in 0..k {
            let t = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            let p = [a[0] + r * t.cos(), a[1] + r * t.sin()];
            for j in 0..k {
                let s = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
                let q = [b[0] + r * s.cos(), b[1] + r * s.sin()];
                best = best.min(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
            }
        }
        assert!((best - g * d.epsilon).abs() < 1e-9, "sampled {best}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_macro_domain(OuterDomain::UnitSquare, 1, PerforationSpec::disk(0.25)).is_err());
        assert!(build_macro_domain(OuterDomain::UnitSquare, 4, PerforationSpec::disk(0.5)).is_err());
        assert!(build_macro_domain(OuterDomain::UnitSquare, 4, PerforationSpec::disk(0.7)).is_err());
    }

    #[test]
    fn cutoff_ramp_values() {
        let d = disk_domain(16, 0.25);
        let layer = LayerGeometry::with_default_offset(d);
        let e = d.epsilon;
        let psi = layer.cutoff_psi(3.0 * e, 4.0 * e).unwrap();
        assert_eq!(psi.value([4.0 * e + 0.01, 0.5]), 1.0);
        assert_eq!(psi.value([3.0 * e, 0.5]), 0.0);
        let x = [3.5 * e, 0.5];
        assert!((psi.value(x) - 0.5).abs() < 1e-14);
        let g = psi.gradient(x);
        assert!(((g[0] * g[0] + g[1] * g[1]).sqrt() - 1.0 / e).abs() < 1e-9);
        assert!(layer.cutoff_psi(0.2, 0.1).is_err());
    }

    #[test]
    fn cutoff_pair_is_nested() {
        let d = disk_domain(8, 0.25);
        let layer = LayerGeometry::with_default_offset(d);
        let (psi, psi_p) = (layer.psi_eps(), layer.psi_prime_eps());
        for i in 0..=200 {
            for j in 0..=200 {
                let x = [i as f64 / 200.0, j as f64 / 200.0];
                assert_eq!((1.0 - psi.value(x)) * psi_p.value(x), 0.0);
            }
        }
    }

    #[test]
    fn delta_is_offset_and_lipschitz() {
        let d = disk_domain(8, 0.25);
        let layer = LayerGeometry::with_default_offset(d);
        let off = 10.0 * d.epsilon;
        assert!((layer.delta([0.0, 0.3]) - off).abs() < 1e-14);
        let w = layer.distance_weight(0.8);
        assert!((w.value([1.0, 0.7]) - off.powf(0.8)).abs() < 1e-14);
        assert_eq!(layer.distance_weight(0.0).value([0.3, 0.3]), 1.0);
        let pts: Vec<Point> = (0..40).map(|i| [(i as f64 * 0.618).fract(), (i as f64 * 0.377).fract()]).collect();
        for p in &pts {
            assert!(layer.delta(*p) >= off - 1e-15);
            for q in &pts {
                let dd = (layer.delta(*p) - layer.delta(*q)).abs();
                let dx = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                assert!(dd <= dx + 1e-14);
            }
        }
    }

    #[test]
    fn layer_measure_scales_with_width() {
        for n in [4usize, 8, 16, 32] {
            let layer = LayerGeometry::with_default_offset(disk_domain(n, 0.25));
            let e = 1.0 / n as f64;
            // |O_{2ε}| by midpoint sampling
            let k = 800;
            let mut count = 0usize;
            for i in 0..k {
                for j in 0..k {
                    let x = [(i as f64 + 0.5) / k as f64, (j as f64 + 0.5) / k as f64];
                    if layer.in_layer(x, 2.0) {
                        count += 1;
                    }
                }
            }
            let measured = count as f64 / (k * k) as f64;
            assert!((measured - layer.layer_measure(2.0)).abs() < 5e-3);
            assert!(measured <= 8.0 * 2.0 * e + 1e-3);
        }
    }
}
