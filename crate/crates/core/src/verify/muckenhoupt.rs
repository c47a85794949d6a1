//! `A_p` constants of weights over dyadic subcubes of the unit square.

use crate::error::{Error, Result};
use crate::fem::quadrature::gauss_legendre;
use crate::geometry::Point;

/// Per-level sups of `(⨍_Q ρ)(⨍_Q ρ^{-1/(p-1)})^{p-1}` over the dyadic
/// cubes `Q ⊆ [0,1]²` of side `2^{-l}`, `l = 0..=max_level`.
pub fn muckenhoupt_levels(rho: impl Fn(Point) -> f64, p: f64, max_level: usize) -> Result<Vec<f64>> {
    if !(p > 1.0) {
        return Err(Error::InvalidArgument(format!("A_p constant needs p > 1, got {p}")));
    }
    let (t, w) = gauss_legendre(6);
    let q = -1.0 / (p - 1.0);
    let mut out = Vec::with_capacity(max_level + 1);
    for level in 0..=max_level {
        let k = 1usize << level;
        let side = 1.0 / k as f64;
        let mut sup = 0.0f64;
        for b in 0..k {
            for a in 0..k {
                let (mut m1, mut m2) = (0.0, 0.0);
                for (ti, wi) in t.iter().zip(&w) {
                    for (tj, wj) in t.iter().zip(&w) {
                        let x = [side * (a as f64 + 0.5 * (ti + 1.0)), side * (b as f64 + 0.5 * (tj + 1.0))];
                        let r = rho(x);
                        let ww = 0.25 * wi * wj;
                        m1 += ww * r;
                        m2 += ww * r.powf(q);
                    }
                }
                sup = sup.max(m1 * m2.powf(p - 1.0));
            }
        }
        out.push(sup);
    }
    Ok(out)
}

/// Sup over all levels up to `max_level`.
pub fn muckenhoupt_constant(rho: impl Fn(Point) -> f64, p: f64, max_level: usize) -> Result<f64> {
    Ok(muckenhoupt_levels(rho, p, max_level)?.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_macro_domain, LayerGeometry, OuterDomain, PerforationSpec};

    #[test]
    fn constant_weight_has_constant_one() {
        for v in muckenhoupt_levels(|_| 3.0, 2.0, 4).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(muckenhoupt_constant(|_| 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn distance_weights_order_by_exponent() {
        let d = build_macro_domain(OuterDomain::UnitSquare, 8, PerforationSpec::disk(0.25)).unwrap();
        let layer = LayerGeometry::with_default_offset(d);
        let c = |beta: f64| muckenhoupt_constant(|x| layer.delta(x).powf(beta), 2.0, 6).unwrap();
        let (a, b) = (c(0.8), c(0.99));
        assert!(a.is_finite() && a >= 1.0 && a < b, "{a} {b}");
    }

    #[test]
    fn power_weight_is_level_stable() {
        // |x₁|^{1/2} on [0,1]²: dyadic cubes touching x₁ = 0 all share one value
        let l = muckenhoupt_levels(|x| x[0].sqrt(), 2.0, 6).unwrap();
        assert!((l[6] - l[5]).abs() < 1e-2 * l[6]);
    }
}
