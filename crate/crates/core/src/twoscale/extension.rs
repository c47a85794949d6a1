//! Discrete extension of fields on `Ω_ε` into the holes.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::coefficient::Tensor4;
use crate::error::{Error, Result};
use crate::fem::assembly::elasticity_element;
use crate::fem::mesh::{BoundaryTag, MacroMesh, Region, TriMesh};
use crate::fem::quadrature::TriangleRule;
use crate::geometry::LayerGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtensionMode {
    /// Hole nodes set to zero.
    Zero,
    /// Per-hole discrete harmonic extension for the isotropic reference operator.
    EnergyMinimizing,
}

/// Factorized hole operator of one cell, shared by all holes.
pub struct HoleExtension {
    interior: Vec<usize>,
    boundary: Vec<usize>,
    chol: Option<Cholesky<f64, Dyn>>,
    coupling: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionEnergy {
    /// `∫_Ω |∇Λw|² δ^β / ∫_{Ω_ε} |∇w|² δ^β`.
    pub weighted_ratio: f64,
    /// Largest per-cell `‖∇Λw‖²_{hole} / ‖∇w‖²_{cell material}`.
    pub hole_to_annulus_max: f64,
}

impl HoleExtension {
    pub fn new(cell_full: &TriMesh) -> Result<Self> {
        let nm = cell_full.material_nodes;
        let interior: Vec<usize> = (nm..cell_full.num_nodes()).collect();
        let mut on_hole = vec![false; nm];
        for (tri, r) in cell_full.elements.iter().zip(&cell_full.regions) {
            if *r == Region::Hole {
                for &v in tri {
                    if v < nm {
                        on_hole[v] = true;
                    }
                }
            }
        }
        let boundary: Vec<usize> = (0..nm).filter(|&v| on_hole[v]).collect();
        let mut local = vec![usize::MAX; cell_full.num_nodes()];
        for (k, &v) in interior.iter().enumerate() {
            local[v] = k;
        }
        for (k, &v) in boundary.iter().enumerate() {
            local[v] = k;
        }
        let (ni, nb) = (2 * interior.len(), 2 * boundary.len());
        let mut kii = DMatrix::zeros(ni, ni);
        let mut kib = DMatrix::zeros(ni, nb);
        let iso = Tensor4::isotropic(1.0, 1.0);
        for e in 0..cell_full.num_elements() {
            if cell_full.regions[e] != Region::Hole {
                continue;
            }
            let k = elasticity_element(cell_full.grads(e), cell_full.area(e), &iso);
            let tri = cell_full.elements[e];
            for p in 0..3 {
                if tri[p] < nm {
                    continue;
                }
                for q in 0..3 {
                    for a in 0..2 {
                        for b in 0..2 {
                            let (r, c) = (2 * local[tri[p]] + a, 2 * local[tri[q]] + b);
                            let v = k[p * 2 + a][q * 2 + b];
                            if tri[q] >= nm {
                                kii[(r, c)] += v;
                            } else {
                                kib[(r, c)] += v;
                            }
                        }
                    }
                }
            }
        }
        let chol = if ni == 0 {
            None
        } else {
            Some(Cholesky::new(kii).ok_or_else(|| Error::Singular("hole stiffness is not positive definite".into()))?)
        };
        Ok(HoleExtension { interior, boundary, chol, coupling: kib })
    }

    /// Extends nodal values on the `Ω_ε` prefix of `mm.full` to all of `mm.full`.
    pub fn extend(&self, mm: &MacroMesh, values: &[f64], mode: ExtensionMode) -> Result<Vec<f64>> {
        let np = mm.perforated.num_nodes();
        if values.len() != 2 * np {
            return Err(Error::InvalidArgument(format!("expected {} nodal values on Ω_ε, got {}", 2 * np, values.len())));
        }
        let mut out = values.to_vec();
        out.resize(2 * mm.full.num_nodes(), 0.0);
        if mode == ExtensionMode::Zero || self.interior.is_empty() {
            return Ok(out);
        }
        let chol = self.chol.as_ref().expect("factorized when holes have interior nodes");
        for map in &mm.local_to_global {
            let ub = DVector::from_iterator(
                2 * self.boundary.len(),
                self.boundary.iter().flat_map(|&v| [values[2 * map[v]], values[2 * map[v] + 1]]),
            );
            let ui = chol.solve(&(-(&self.coupling * ub)));
            for (k, &v) in self.interior.iter().enumerate() {
                out[2 * map[v]] = ui[2 * k];
                out[2 * map[v] + 1] = ui[2 * k + 1];
            }
        }
        Ok(out)
    }

    /// Energy bookkeeping of the harmonic extension of a field with zero
    /// trace on `∂Ω`, with weight `δ^β`.
    pub fn energy(&self, mm: &MacroMesh, values: &[f64], beta: f64) -> Result<ExtensionEnergy> {
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for n in mm.perforated.tagged_nodes(BoundaryTag::DirichletOuter) {
            if values[2 * n].abs().max(values[2 * n + 1].abs()) > 1e-10 * scale.max(1e-300) {
                return Err(Error::InvalidArgument(format!(
                    "energy-minimizing extension needs zero trace on the outer boundary (node {n})"
                )));
            }
        }
        let ext = self.extend(mm, values, ExtensionMode::EnergyMinimizing)?;
        let layer = LayerGeometry::with_default_offset(mm.domain);
        let weight = layer.distance_weight(beta);
        let rule = TriangleRule::degree2();
        let tiles = mm.domain.n * mm.domain.n;
        let (mut hole_e, mut mat_e) = (vec![0.0; tiles], vec![0.0; tiles]);
        let (mut num, mut den) = (0.0, 0.0);
        let full = &mm.full;
        for e in 0..full.num_elements() {
            let g = full.grads(e);
            let tri = full.elements[e];
            let mut q = 0.0;
            for a in 0..2 {
                for k in 0..2 {
                    let d: f64 = (0..3).map(|p| ext[2 * tri[p] + a] * g[p][k]).sum();
                    q += d * d;
                }
            }
            let wavg: f64 = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(b, w)| w * weight.value(full.point_at(e, *b)))
                .sum();
            let en = full.area(e) * q;
            let (i, j) = mm.elem_tile[e];
            let tile = j as usize * mm.domain.n + i as usize;
            num += en * wavg;
            if full.regions[e] == Region::Material {
                den += en * wavg;
                mat_e[tile] += en;
            } else {
                hole_e[tile] += en;
            }
        }
        let hole_to_annulus_max = hole_e
            .iter()
            .zip(&mat_e)
            .filter(|(_, m)| **m > 0.0)
            .map(|(h, m)| h / m)
            .fold(0.0, f64::max);
        Ok(ExtensionEnergy { weighted_ratio: if den > 0.0 { num / den } else { 1.0 }, hole_to_annulus_max })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::mesh_macro;
    use crate::geometry::{build_macro_domain, OuterDomain, PerforationSpec};

    fn macro_mesh() -> MacroMesh {
        let d = build_macro_domain(OuterDomain::UnitSquare, 4, PerforationSpec::disk(0.25)).unwrap();
        mesh_macro(&d, 1.0 / 64.0).unwrap()
    }

    fn cell(mm: &MacroMesh) -> TriMesh {
        crate::fem::mesh::mesh_unit_cell_full(&mm.domain.perforation, 1.0 / mm.cell_segments as f64).unwrap()
    }

    #[test]
    fn zero_field_extends_to_zero() {
        let mm = macro_mesh();
        let ext = HoleExtension::new(&cell(&mm)).unwrap();
        let out = ext.extend(&mm, &vec![0.0; 2 * mm.perforated.num_nodes()], ExtensionMode::EnergyMinimizing).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_fields_are_reproduced() {
        let mm = macro_mesh();
        let ext = HoleExtension::new(&cell(&mm)).unwrap();
        let m = [[0.7, -0.2], [1.3, 0.4]];
        let lin = |p: [f64; 2]| [m[0][0] * p[0] + m[0][1] * p[1], m[1][0] * p[0] + m[1][1] * p[1]];
        let vals: Vec<f64> = mm.perforated.nodes.iter().flat_map(|p| lin(*p)).collect();
        let out = ext.extend(&mm, &vals, ExtensionMode::EnergyMinimizing).unwrap();
        for (n, p) in mm.full.nodes.iter().enumerate() {
            let e = lin(*p);
            assert!((out[2 * n] - e[0]).abs() < 1e-12 && (out[2 * n + 1] - e[1]).abs() < 1e-12);
        }
        let zero = ext.extend(&mm, &vals, ExtensionMode::Zero).unwrap();
        assert!(zero[2 * mm.perforated.num_nodes()..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn nonzero_trace_is_flagged() {
        let mm = macro_mesh();
        let ext = HoleExtension::new(&cell(&mm)).unwrap();
        let vals = vec![1.0; 2 * mm.perforated.num_nodes()];
        assert!(matches!(ext.energy(&mm, &vals, 0.0), Err(Error::InvalidArgument(_))));
    }
}
