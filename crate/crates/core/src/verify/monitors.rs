//! Regularity monitors: large-scale Lipschitz ratios, quenched
//! Calderón–Zygmund ratios and extension energies.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cell::{corrector_index, CorrectorSet};
use crate::error::{Error, Result};
use crate::fem::mesh::MacroMesh;
use crate::fem::quadrature::TriangleRule;
use crate::fem::FieldOnMesh;
use crate::geometry::{LayerGeometry, Point};
use crate::solve::{solve_divdata_problem, MatrixData};
use crate::twoscale::{ExtensionEnergy, HoleExtension, QuenchedSampler};

/// `⨍_{B(x0, r) ∩ Ω_ε} |∇u|²` by sub-element sampling.
pub fn ball_energy_average(u: &FieldOnMesh, x0: Point, r: f64) -> Result<f64> {
    let rule = TriangleRule::subdivided(4);
    let mesh = &u.mesh;
    let reach = r + 2.0 * mesh.max_edge();
    let parts: Vec<(f64, f64)> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let c = mesh.centroid(e);
            if (c[0] - x0[0]).hypot(c[1] - x0[1]) > reach {
                return (0.0, 0.0);
            }
            let g = u.grad(e);
            let q: f64 = g.iter().flatten().map(|v| v * v).sum();
            let (mut s, mut m) = (0.0, 0.0);
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                let x = mesh.point_at(e, *b);
                if (x[0] - x0[0]).hypot(x[1] - x0[1]) < r {
                    s += w * mesh.area(e) * q;
                    m += w * mesh.area(e);
                }
            }
            (s, m)
        })
        .collect();
    let (s, m) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if m == 0.0 {
        return Err(Error::Geometry(format!("ball B({x0:?}, {r}) misses the mesh")));
    }
    Ok(s / m)
}

/// Dyadic radii `1/2, 1/4, …` down to `ε`.
pub fn dyadic_radii(eps: f64) -> Vec<f64> {
    let mut r = 0.5;
    let mut out = Vec::new();
    while r >= eps * (1.0 - 1e-12) {
        out.push(r);
        r *= 0.5;
    }
    out
}

/// `(⨍_{D_r}|∇u|²)^{1/2} / (⨍_{D_{1/2}}|∇u|²)^{1/2}` for each dyadic `r`.
pub fn lipschitz_ratios(u: &FieldOnMesh, x0: Point, eps: f64) -> Result<Vec<(f64, f64)>> {
    let radii = dyadic_radii(eps);
    let base = ball_energy_average(u, x0, 0.5)?;
    if base <= 0.0 {
        return Err(Error::InvalidArgument("Lipschitz monitor needs a nonzero solution".into()));
    }
    radii.iter().map(|&r| Ok((r, (ball_energy_average(u, x0, r)? / base).sqrt()))).collect()
}

/// Weight choices of the quenched monitor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuenchedWeight {
    One,
    Delta(f64),
}

impl QuenchedWeight {
    pub fn label(&self) -> String {
        match self {
            QuenchedWeight::One => "1".into(),
            QuenchedWeight::Delta(b) => format!("delta^{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuenchedRow {
    pub preset: usize,
    pub p: f64,
    pub weight: QuenchedWeight,
    /// `None` when the data vanish.
    pub ratio: Option<f64>,
}

/// Ratios `Q(∇φ_ε) / Q(f)` of quenched norms, `φ_ε` solving the
/// divergence-data problem, for every preset, `p` and weight.
pub fn quenched_cz_rows(
    mm: &MacroMesh,
    cells: &CorrectorSet,
    family: &[MatrixData],
    ps: &[f64],
    weights: &[QuenchedWeight],
) -> Result<Vec<QuenchedRow>> {
    let eps = mm.domain.epsilon;
    let layer = LayerGeometry::with_default_offset(mm.domain);
    let sampler = QuenchedSampler::new(&mm.perforated, eps, 2, 4)?;
    let mut rows = Vec::new();
    for (k, f) in family.iter().enumerate() {
        if f.is_zero() {
            for &p in ps {
                for &w in weights {
                    rows.push(QuenchedRow { preset: k, p, weight: w, ratio: None });
                }
            }
            continue;
        }
        let phi = solve_divdata_problem(mm, cells, f)?;
        let per_elem: Vec<f64> =
            (0..phi.mesh.num_elements()).map(|e| phi.grad(e).iter().flatten().map(|v| v * v).sum()).collect();
        let avg_u = sampler.ball_averages(&sampler.densities_from_elements(&per_elem))?;
        let avg_f = sampler.ball_averages(&sampler.densities_from_fn(|x| f.value(x).iter().flatten().map(|v| v * v).sum()))?;
        for &p in ps {
            for &w in weights {
                let rho = |x: Point| match w {
                    QuenchedWeight::One => 1.0,
                    QuenchedWeight::Delta(b) => layer.delta(x).powf(b),
                };
                let den = sampler.norm(&avg_f, p, rho)?;
                let num = sampler.norm(&avg_u, p, rho)?;
                rows.push(QuenchedRow { preset: k, p, weight: w, ratio: (den > 0.0).then(|| num / den) });
            }
        }
    }
    Ok(rows)
}

/// Nodal `ε Σ c_{jβ} χ_j^β(x/ε) sin(πx₁) sin(πx₂)` with seeded coefficients;
/// the bump keeps a zero trace on `∂Ω` at every `ε`.
pub fn random_corrector_field(mm: &MacroMesh, cells: &CorrectorSet, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let eps = mm.domain.epsilon;
    let mut out = Vec::with_capacity(2 * mm.perforated.num_nodes());
    for (n, x) in mm.perforated.nodes.iter().enumerate() {
        let bump = (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin();
        let chi = cells.chi_at_node(mm.node_cell[n]);
        let mut v = [0.0; 2];
        for j in 0..2 {
            for b in 0..2 {
                for a in 0..2 {
                    v[a] += eps * c[corrector_index(j, b)] * chi[j][b][a] * bump;
                }
            }
        }
        // outer-boundary nodes are exactly zero
        if x[0] == 0.0 || x[0] == 1.0 || x[1] == 0.0 || x[1] == 1.0 {
            v = [0.0; 2];
        }
        out.extend(v);
    }
    out
}

/// Extension energies of several zero-trace fields for each `β`.
pub fn extension_energies(mm: &MacroMesh, ext: &HoleExtension, fields: &[Vec<f64>], betas: &[f64]) -> Result<Vec<(f64, ExtensionEnergy)>> {
    let mut out = Vec::new();
    for &b in betas {
        for f in fields {
            out.push((b, ext.energy(mm, f, b)?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::fem::mesh::mesh_unit_square;

    #[test]
    fn dyadic_radii_stop_at_epsilon() {
        assert_eq!(dyadic_radii(0.125), vec![0.5, 0.25, 0.125]);
        assert_eq!(dyadic_radii(0.1), vec![0.5, 0.25, 0.125]);
    }

    #[test]
    fn linear_field_has_unit_ratios() {
        let mesh = Arc::new(mesh_unit_square(32).unwrap());
        let u = FieldOnMesh::interpolate(mesh, |x| [x[0] + 2.0 * x[1], -x[0]]);
        for (r, v) in lipschitz_ratios(&u, [0.5, 0.0], 1.0 / 16.0).unwrap() {
            assert!((v - 1.0).abs() < 1e-12, "r = {r}: {v}");
        }
    }
}
