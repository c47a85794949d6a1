//! Error functionals of the two-scale expansion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::quadrature::TriangleRule;
use crate::fem::FieldOnMesh;
use crate::geometry::LayerGeometry;
use crate::solve::ProblemData;
use crate::twoscale::corrector::FirstOrderCorrector;

/// Width, in units of `ε`, of the boundary layer used by the layer probes.
pub const PROBE_LAYER: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub epsilon: f64,
    pub h: f64,
    pub tau: f64,
    /// `‖∇w_ε‖_{L²(Ω_ε)}`.
    pub h1_w: f64,
    /// `‖u_ε - u_0‖_{L²(Ω_ε)}`.
    pub l2_err: f64,
    /// `‖u_ε - u_0‖_{L^p(Ω_ε)}` with `p = 4/(1-τ)`.
    pub lp_err_tau: f64,
    /// `‖u_ε - u_0‖_{L⁴(Ω_ε)}`.
    pub l4_err: f64,
    /// `(∫_{Ω_ε} |∇w_ε|² δ)^{1/2}`.
    pub sqfn: f64,
    /// `‖∇(u_ε - u_0)‖_{L²(Ω_ε)}`, the error without the corrector.
    pub h1_u_minus_u0: f64,
    /// `‖∇w_ε‖` over the layer `O_{4ε}` and the co-layer `Σ_{4ε}`.
    pub h1_w_layer: f64,
    pub h1_w_colayer: f64,
    /// `(∫ |∇w_ε|² δ)^{1/2} ≤ ‖δ‖_∞^{1/2} ‖∇w_ε‖` as a ratio; at most 1.
    pub sqfn_bound_ratio: f64,
    pub normalizer_g: f64,
    pub normalizer_f: f64,
    pub normalizer_grad_f: f64,
    pub theta: f64,
}

impl ErrorReport {
    /// `‖g‖ + ‖F‖ + (∫|∇F|²δ)^{1/2}`, the data size the rates are scaled by.
    pub fn data_norm(&self) -> f64 {
        self.normalizer_g + self.normalizer_f + self.normalizer_grad_f
    }

    pub fn is_finite(&self) -> bool {
        [
            self.h1_w,
            self.l2_err,
            self.lp_err_tau,
            self.l4_err,
            self.sqfn,
            self.h1_u_minus_u0,
            self.h1_w_layer,
            self.h1_w_colayer,
            self.normalizer_g,
            self.normalizer_f,
            self.normalizer_grad_f,
            self.theta,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// `p = 2d/(d-1-τ)` in two dimensions.
pub fn lp_exponent(tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")));
    }
    Ok(4.0 / (1.0 - tau))
}

#[derive(Default, Clone, Copy)]
struct Sums {
    h1_w: f64,
    l2: f64,
    lp: f64,
    l4: f64,
    sqfn: f64,
    h1_raw: f64,
    layer: f64,
    colayer: f64,
}

impl Sums {
    fn add(mut self, o: &Sums) -> Sums {
        self.h1_w += o.h1_w;
        self.l2 += o.l2;
        self.lp += o.lp;
        self.l4 += o.l4;
        self.sqfn += o.sqfn;
        self.h1_raw += o.h1_raw;
        self.layer += o.layer;
        self.colayer += o.colayer;
        self
    }
}

/// All functionals of `u_ε` and `w_ε` by element-wise quadrature on `Ω_ε`.
pub fn error_report(
    corrector: &FirstOrderCorrector<'_>,
    u_eps: &FieldOnMesh,
    data: &ProblemData,
    tau: f64,
) -> Result<ErrorReport> {
    let p = lp_exponent(tau)?;
    let mm = corrector.mm;
    let mesh = &mm.perforated;
    let layer = LayerGeometry::with_default_offset(mm.domain);
    let eps = mm.domain.epsilon;
    let grad_rule = TriangleRule::degree2();
    let value_rule = TriangleRule::degree5();
    let per_elem: Vec<Result<Sums>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let area = mesh.area(e);
            let mut s = Sums::default();
            let gu = u_eps.grad(e);
            for (b, w) in grad_rule.points.iter().zip(&grad_rule.weights) {
                let x = mesh.point_at(e, *b);
                let gw = corrector.grad_w(u_eps, e, *b)?;
                let g0 = corrector.u0.grad(x);
                let q: f64 = gw.iter().flatten().map(|v| v * v).sum();
                let mut raw = 0.0;
                for a in 0..2 {
                    for k in 0..2 {
                        raw += (gu[a][k] - g0[a][k]).powi(2);
                    }
                }
                s.h1_w += w * area * q;
                s.h1_raw += w * area * raw;
                s.sqfn += w * area * q * layer.delta(x);
                if layer.in_layer(x, PROBE_LAYER) {
                    s.layer += w * area * q;
                } else {
                    s.colayer += w * area * q;
                }
            }
            for (b, w) in value_rule.points.iter().zip(&value_rule.weights) {
                let x = mesh.point_at(e, *b);
                let u = u_eps.eval(e, *b);
                let v = corrector.u0.value(x);
                let d2 = (u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2);
                s.l2 += w * area * d2;
                s.l4 += w * area * d2 * d2;
                s.lp += w * area * d2.powf(0.5 * p);
            }
            Ok(s)
        })
        .collect();
    let mut tot = Sums::default();
    for s in per_elem {
        tot = tot.add(&s?);
    }
    let offset = layer.extended_offset;
    let delta_max = 0.5 + offset;
    let h1_w = tot.h1_w.sqrt();
    let sqfn = tot.sqfn.sqrt();
    Ok(ErrorReport {
        epsilon: eps,
        h: mm.h(),
        tau,
        h1_w,
        l2_err: tot.l2.sqrt(),
        lp_err_tau: tot.lp.powf(1.0 / p),
        l4_err: tot.l4.powf(0.25),
        sqfn,
        h1_u_minus_u0: tot.h1_raw.sqrt(),
        h1_w_layer: tot.layer.sqrt(),
        h1_w_colayer: tot.colayer.sqrt(),
        sqfn_bound_ratio: if h1_w > 0.0 { sqfn / (delta_max.sqrt() * h1_w) } else { 0.0 },
        normalizer_g: data.norm_g_h1_boundary(),
        normalizer_f: data.norm_f_l2(offset),
        normalizer_grad_f: data.norm_grad_f_weighted(offset),
        theta: corrector.cells.theta,
    })
}
