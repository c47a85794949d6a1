//! Quadrature rules on triangles, intervals and disks.

use std::f64::consts::PI;

/// A rule on the reference triangle: barycentric points and weights that sum to one.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn centroid() -> Self {
        TriangleRule { points: vec![[1.0 / 3.0; 3]], weights: vec![1.0] }
    }

    /// Exact for quadratics.
    pub fn degree2() -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        TriangleRule { points: vec![[a, b, b], [b, a, b], [b, b, a]], weights: vec![1.0 / 3.0; 3] }
    }

    /// Seven-point rule, exact for polynomials of degree five.
    pub fn degree5() -> Self {
        let sq = 15f64.sqrt();
        let a1 = (6.0 - sq) / 21.0;
        let b1 = (9.0 + 2.0 * sq) / 21.0;
        let a2 = (6.0 + sq) / 21.0;
        let b2 = (9.0 - 2.0 * sq) / 21.0;
        let w1 = (155.0 - sq) / 1200.0;
        let w2 = (155.0 + sq) / 1200.0;
        TriangleRule {
            points: vec![
                [1.0 / 3.0; 3],
                [a1, a1, b1],
                [a1, b1, a1],
                [b1, a1, a1],
                [a2, a2, b2],
                [a2, b2, a2],
                [b2, a2, a2],
            ],
            weights: vec![9.0 / 40.0, w1, w1, w1, w2, w2, w2],
        }
    }

    /// Barycentric points of a uniform `k x k` subdivision, one per
    /// sub-triangle centroid, equally weighted.
    pub fn subdivided(k: usize) -> Self {
        let kf = k as f64;
        let mut points = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k - i {
                let (fi, fj) = (i as f64, j as f64);
                points.push(bary(((fi + 1.0 / 3.0) / kf, (fj + 1.0 / 3.0) / kf)));
                if i + j + 1 < k {
                    points.push(bary(((fi + 2.0 / 3.0) / kf, (fj + 2.0 / 3.0) / kf)));
                }
            }
        }
        let w = 1.0 / points.len() as f64;
        TriangleRule { weights: vec![w; points.len()], points }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn bary((s, t): (f64, f64)) -> [f64; 3] {
    [1.0 - s - t, s, t]
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Polar rule on the disk of radius `radius` centred at the origin: Gauss in
/// `r` (with the Jacobian) and equispaced in angle. Weights carry the area.
pub fn disk_rule(radius: f64, radial: usize, angular: usize) -> Vec<([f64; 2], f64)> {
    let (x, w) = gauss_legendre(radial);
    let mut out = Vec::with_capacity(radial * angular);
    let dt = 2.0 * PI / angular as f64;
    for (xi, wi) in x.iter().zip(&w) {
        let r = 0.5 * radius * (xi + 1.0);
        let wr = 0.5 * radius * wi * r;
        for k in 0..angular {
            let t = (k as f64 + 0.5) * dt;
            out.push(([r * t.cos(), r * t.sin()], wr * dt));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(rule: &TriangleRule, f: impl Fn(f64, f64) -> f64) -> f64 {
        // reference triangle (0,0), (1,0), (0,1) of area 1/2
        rule.points.iter().zip(&rule.weights).map(|(b, w)| 0.5 * w * f(b[1], b[2])).sum()
    }

    #[test]
    fn triangle_rules_hit_their_degree() {
        // ∫ x^a y^b over the reference triangle = a! b! / (a + b + 2)!
        let fact = |n: u32| (1..=n).product::<u32>().max(1) as f64;
        for (rule, deg) in [(TriangleRule::centroid(), 1), (TriangleRule::degree2(), 2), (TriangleRule::degree5(), 5)] {
            for a in 0..=deg {
                for b in 0..=(deg - a) {
                    let exact = fact(a) * fact(b) / fact(a + b + 2);
                    let got = integrate(&rule, |x, y| x.powi(a as i32) * y.powi(b as i32));
                    assert!((got - exact).abs() < 1e-14, "deg {deg} x^{a} y^{b}");
                }
            }
        }
    }

    #[test]
    fn subdivision_covers_triangle() {
        let r = TriangleRule::subdivided(4);
        assert_eq!(r.len(), 16);
        assert!((integrate(&r, |x, _| x) - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for k in 0..(2 * n) {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn disk_rule_area_and_moment() {
        let q = disk_rule(0.5, 8, 16);
        let area: f64 = q.iter().map(|(_, w)| w).sum();
        assert!((area - PI * 0.25).abs() < 1e-14);
        let m2: f64 = q.iter().map(|(p, w)| w * (p[0] * p[0] + p[1] * p[1])).sum();
        assert!((m2 - PI * 0.5f64.powi(4) / 2.0).abs() < 1e-14);
    }
}
