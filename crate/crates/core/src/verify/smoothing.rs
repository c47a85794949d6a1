//! Periodic-cancellation ratios of the smoothing operator over an ε sweep.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fem::quadrature::gauss_legendre;
use crate::geometry::{build_macro_domain, Cutoff, LayerGeometry, OuterDomain, PerforationSpec, Point};
use crate::twoscale::SmoothingKernel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingRow {
    pub epsilon: f64,
    /// `max |S_ε c - c|` over the sample points.
    pub constant_error: f64,
    /// `‖ϖ(·/ε) S_ε f‖ / (‖ϖ‖_{L²(Y)} ‖f‖)`.
    pub oscillating_bound: f64,
    /// `‖S_ε f - f‖ / (ε ‖∇f‖)`.
    pub approximation: f64,
    /// Weighted oscillating bound on `Σ_{2ε}` with `δ` and `δ^{-1}`;
    /// `None` when `Σ_{2ε}` is empty.
    pub weighted_plus: Option<f64>,
    pub weighted_minus: Option<f64>,
    /// `(∫_{Σ_{2ε}} |f - S_ε f|² δ)^{1/2} / (ε (∫_{Σ_ε} |∇f|² δ)^{1/2})`.
    pub weighted_approximation: Option<f64>,
    /// `‖S_ε f‖_{L^p} / ‖f‖_{L^p}` for a 1-periodic `f`, `p = 2, 4`.
    pub young_l2: f64,
    pub young_l4: f64,
}

/// Tensor Gauss points and weights on `[0,1]²`, panels of side `ε/4`.
fn square_rule(eps: f64) -> Vec<(Point, f64)> {
    let (t, w) = gauss_legendre(3);
    let k = (4.0 / eps).round() as usize;
    let hp = 1.0 / k as f64;
    let mut out = Vec::with_capacity(k * k * 9);
    for b in 0..k {
        for a in 0..k {
            for (ti, wi) in t.iter().zip(&w) {
                for (tj, wj) in t.iter().zip(&w) {
                    let x = [hp * (a as f64 + 0.5 * (ti + 1.0)), hp * (b as f64 + 0.5 * (tj + 1.0))];
                    out.push((x, 0.25 * hp * hp * wi * wj));
                }
            }
        }
    }
    out
}

fn smooth_data(x: Point) -> f64 {
    (PI * x[0]).cos() * (1.0 + x[1])
}

fn smooth_data_grad(x: Point) -> Point {
    [-PI * (PI * x[0]).sin() * (1.0 + x[1]), (PI * x[0]).cos()]
}

fn ratio(pair: [f64; 2]) -> Option<f64> {
    (pair[0] > 0.0 && pair[1] > 0.0).then(|| (pair[0] / pair[1]).sqrt())
}

/// All ratios at one `ε = 1/n`.
pub fn smoothing_row(kernel: &SmoothingKernel, n: usize) -> Result<SmoothingRow> {
    let domain = build_macro_domain(OuterDomain::UnitSquare, n, PerforationSpec::none())?;
    let eps = domain.epsilon;
    let layer = LayerGeometry::with_default_offset(domain);
    let rule = square_rule(eps);
    let varpi = |x: Point| (2.0 * PI * x[0] / eps).sin();
    let varpi_l2 = 0.5f64.sqrt();
    let sine = |x: Point| (2.0 * PI * x[0]).sin();
    let periodic = |x: Point| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos() + 0.3;
    let band = Cutoff { inner: eps, outer: 2.0 * eps };
    let in_sigma2 = |x: Point| layer.in_colayer(x, 2.0);
    let indicator = |x: Point| if in_sigma2(x) { smooth_data(x) } else { 0.0 };
    let ramped = |x: Point| band.value(x) * smooth_data(x);

    #[derive(Default, Clone, Copy)]
    struct Acc {
        cerr: f64,
        osc: [f64; 2],
        approx: [f64; 2],
        wp: [f64; 2],
        wm: [f64; 2],
        wa: [f64; 2],
        y2: [f64; 2],
        y4: [f64; 2],
    }
    let parts: Vec<Acc> = rule
        .par_iter()
        .map(|&(x, w)| {
            let mut a = Acc::default();
            a.cerr = (kernel.smooth(eps, x, |_| [2.5])[0] - 2.5).abs();
            let f = smooth_data(x);
            let sf = kernel.smooth(eps, x, |p| [smooth_data(p)])[0];
            a.osc = [w * (varpi(x) * sf).powi(2), w * f * f];
            let g = sine(x);
            let sg = kernel.smooth(eps, x, |p| [sine(p)])[0];
            let dg = 2.0 * PI * (2.0 * PI * x[0]).cos();
            a.approx = [w * (sg - g).powi(2), w * dg * dg];
            let d = layer.delta(x);
            let fi = indicator(x);
            if in_sigma2(x) {
                let s = kernel.smooth(eps, x, |p| [indicator(p)])[0];
                let v = (varpi(x) * s).powi(2);
                a.wp[0] = w * v * d;
                a.wm[0] = w * v / d;
                let fr = ramped(x);
                let sr = kernel.smooth(eps, x, |p| [ramped(p)])[0];
                a.wa[0] = w * (fr - sr).powi(2) * d;
            }
            a.wp[1] = w * fi * fi * d;
            a.wm[1] = w * fi * fi / d;
            if layer.in_colayer(x, 1.0) {
                let gb = band.gradient(x);
                let gs = smooth_data_grad(x);
                let s = band.value(x);
                let df = [gb[0] * f + s * gs[0], gb[1] * f + s * gs[1]];
                a.wa[1] = w * (df[0] * df[0] + df[1] * df[1]) * d;
            }
            let p = periodic(x);
            let sp = kernel.smooth(eps, x, |q| [periodic(q)])[0];
            a.y2 = [w * sp * sp, w * p * p];
            a.y4 = [w * sp.powi(4), w * p.powi(4)];
            a
        })
        .collect();
    let mut t = Acc::default();
    for a in &parts {
        t.cerr = t.cerr.max(a.cerr);
        for k in 0..2 {
            t.osc[k] += a.osc[k];
            t.approx[k] += a.approx[k];
            t.wp[k] += a.wp[k];
            t.wm[k] += a.wm[k];
            t.wa[k] += a.wa[k];
            t.y2[k] += a.y2[k];
            t.y4[k] += a.y4[k];
        }
    }
    Ok(SmoothingRow {
        epsilon: eps,
        constant_error: t.cerr,
        oscillating_bound: (t.osc[0] / t.osc[1]).sqrt() / varpi_l2,
        approximation: (t.approx[0] / t.approx[1]).sqrt() / eps,
        weighted_plus: ratio(t.wp).map(|v| v / varpi_l2),
        weighted_minus: ratio(t.wm).map(|v| v / varpi_l2),
        weighted_approximation: ratio(t.wa).map(|v| v / eps),
        young_l2: (t.y2[0] / t.y2[1]).sqrt(),
        young_l4: (t.y4[0] / t.y4[1]).powf(0.25),
    })
}
