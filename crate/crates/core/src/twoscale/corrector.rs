//! The first-order approximating corrector
//! `w_ε = u_ε - u_0 - εχ(x/ε) S_ε(ψ_ε ∇u_0)`.

use crate::cell::{corrector_index, CorrectorSet};
use crate::error::{Error, Result};
use crate::fem::mesh::{locate_in_unit_square, MacroMesh, Region};
use crate::fem::FieldOnMesh;
use crate::geometry::{dist_to_unit_square_boundary, Cutoff, LayerGeometry, Point};
use crate::twoscale::kernel::SmoothingKernel;

/// `u_0` on the structured unit-square mesh, evaluable anywhere in `Ω`.
#[derive(Debug, Clone)]
pub struct HomogenizedField {
    pub field: FieldOnMesh,
    pub segments: usize,
}

impl HomogenizedField {
    pub fn new(field: FieldOnMesh) -> Result<Self> {
        let n = field.mesh.num_nodes();
        let k = (n as f64).sqrt().round() as usize - 1;
        if (k + 1) * (k + 1) != n || field.components != 2 {
            return Err(Error::InvalidArgument("u_0 must be a vector field on a structured unit-square mesh".into()));
        }
        Ok(HomogenizedField { field, segments: k })
    }

    /// Value at `x`; points outside `Ω` are clamped onto it.
    pub fn value(&self, x: Point) -> [f64; 2] {
        let (e, b) = locate_in_unit_square(self.segments, x);
        self.field.eval(e, b)
    }

    /// `g[β][j] = ∂_j u_0^β` on the element containing `x`.
    pub fn grad(&self, x: Point) -> [[f64; 2]; 2] {
        let (e, _) = locate_in_unit_square(self.segments, x);
        self.field.grad(e)
    }
}

/// Evaluator of the corrector term `εχ(x/ε) S_ε(ψ_ε ∇u_0)` on `Ω_ε`.
pub struct FirstOrderCorrector<'a> {
    pub mm: &'a MacroMesh,
    pub cells: &'a CorrectorSet,
    pub u0: &'a HomogenizedField,
    pub kernel: &'a SmoothingKernel,
    pub psi: Cutoff,
    eps: f64,
    /// Cell-submesh element of every element of the full cell mesh.
    sub_elem: Vec<usize>,
}

impl<'a> FirstOrderCorrector<'a> {
    pub fn new(mm: &'a MacroMesh, cells: &'a CorrectorSet, u0: &'a HomogenizedField, kernel: &'a SmoothingKernel) -> Result<Self> {
        if cells.segments() != mm.cell_segments || cells.spec != mm.domain.perforation {
            return Err(Error::InvalidArgument(format!(
                "corrector cell mesh ({} segments) does not match the macro tiling ({} segments)",
                cells.segments(),
                mm.cell_segments
            )));
        }
        let mut sub_elem = vec![usize::MAX; cells.full_mesh.num_elements()];
        let mut next = 0;
        for (e, r) in cells.full_mesh.regions.iter().enumerate() {
            if *r == Region::Material {
                sub_elem[e] = next;
                next += 1;
            }
        }
        let psi = LayerGeometry::with_default_offset(mm.domain).psi_eps();
        Ok(FirstOrderCorrector { mm, cells, u0, kernel, psi, eps: mm.domain.epsilon, sub_elem })
    }

    /// Whether `S_ε(ψ_ε ∇u_0)` vanishes identically near `x`.
    fn outside_support(&self, x: Point) -> bool {
        dist_to_unit_square_boundary(x) <= self.psi.inner - 0.5 * self.eps
    }

    fn cutoff_gradient(&self, p: Point) -> [f64; 4] {
        let s = self.psi.value(p);
        if s == 0.0 {
            return [0.0; 4];
        }
        let g = self.u0.grad(p);
        [s * g[0][0], s * g[0][1], s * g[1][0], s * g[1][1]]
    }

    /// `S_ε(ψ_ε ∇u_0)(x)` flattened as `[β*2 + j]`.
    pub fn smoothed(&self, x: Point) -> [f64; 4] {
        if self.outside_support(x) {
            return [0.0; 4];
        }
        self.kernel.smooth(self.eps, x, |p| self.cutoff_gradient(p))
    }

    fn smoothed_with_gradient(&self, x: Point) -> ([f64; 4], [[f64; 2]; 4]) {
        if self.outside_support(x) {
            return ([0.0; 4], [[0.0; 2]; 4]);
        }
        self.kernel.smooth_with_gradient(self.eps, x, |p| self.cutoff_gradient(p))
    }

    fn cell_element(&self, e: usize) -> Result<usize> {
        let ce = self.mm.elem_cell[e];
        match self.sub_elem.get(ce) {
            Some(&s) if s != usize::MAX => Ok(s),
            _ => Err(Error::Mesh(format!("macro element {e} maps into the hole of the cell mesh"))),
        }
    }

    /// Corrector term at barycentric point `bary` of `Ω_ε` element `e`.
    pub fn term(&self, e: usize, bary: [f64; 3]) -> Result<[f64; 2]> {
        let x = self.mm.perforated.point_at(e, bary);
        let s = self.smoothed(x);
        if s.iter().all(|v| *v == 0.0) {
            return Ok([0.0; 2]);
        }
        let ce = self.cell_element(e)?;
        let mut out = [0.0; 2];
        for j in 0..2 {
            for b in 0..2 {
                let chi = self.cells.chi[corrector_index(j, b)].eval(ce, bary);
                for a in 0..2 {
                    out[a] += self.eps * chi[a] * s[b * 2 + j];
                }
            }
        }
        Ok(out)
    }

    /// `∂_k` of the corrector term by the product rule, as `g[α][k]`.
    pub fn term_gradient(&self, e: usize, bary: [f64; 3]) -> Result<[[f64; 2]; 2]> {
        let x = self.mm.perforated.point_at(e, bary);
        let (s, ds) = self.smoothed_with_gradient(x);
        if s.iter().chain(ds.iter().flatten()).all(|v| *v == 0.0) {
            return Ok([[0.0; 2]; 2]);
        }
        let ce = self.cell_element(e)?;
        let mut out = [[0.0; 2]; 2];
        for j in 0..2 {
            for b in 0..2 {
                let field = &self.cells.chi[corrector_index(j, b)];
                let chi = field.eval(ce, bary);
                let dchi = field.grad(ce);
                let sb = s[b * 2 + j];
                for a in 0..2 {
                    for k in 0..2 {
                        out[a][k] += dchi[a][k] * sb + self.eps * chi[a] * ds[b * 2 + j][k];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Corrector term at node `n` of `Ω_ε`.
    pub fn term_at_node(&self, n: usize) -> [f64; 2] {
        let x = self.mm.perforated.nodes[n];
        let s = self.smoothed(x);
        if s.iter().all(|v| *v == 0.0) {
            return [0.0; 2];
        }
        let chi = self.cells.chi_at_node(self.mm.node_cell[n]);
        let mut out = [0.0; 2];
        for j in 0..2 {
            for b in 0..2 {
                for a in 0..2 {
                    out[a] += self.eps * chi[j][b][a] * s[b * 2 + j];
                }
            }
        }
        out
    }

    /// Nodal `w_ε` on the `Ω_ε` mesh of `u_eps`.
    pub fn assemble_w(&self, u_eps: &FieldOnMesh) -> Result<FieldOnMesh> {
        use rayon::prelude::*;
        if u_eps.mesh.num_nodes() != self.mm.perforated.num_nodes() {
            return Err(Error::InvalidArgument("u_eps must live on the perforated macro mesh".into()));
        }
        let vals: Vec<[f64; 2]> = (0..u_eps.mesh.num_nodes())
            .into_par_iter()
            .map(|n| {
                let x = u_eps.mesh.nodes[n];
                let u = u_eps.at_node(n);
                let v = self.u0.value(x);
                let t = self.term_at_node(n);
                [u[0] - v[0] - t[0], u[1] - v[1] - t[1]]
            })
            .collect();
        Ok(FieldOnMesh::new(u_eps.mesh.clone(), 2, vals.into_iter().flatten().collect()))
    }

    /// `∇w_ε` at a quadrature point of element `e`, by the product rule.
    pub fn grad_w(&self, u_eps: &FieldOnMesh, e: usize, bary: [f64; 3]) -> Result<[[f64; 2]; 2]> {
        let x = self.mm.perforated.point_at(e, bary);
        let gu = u_eps.grad(e);
        let g0 = self.u0.grad(x);
        let gt = self.term_gradient(e, bary)?;
        let mut out = [[0.0; 2]; 2];
        for a in 0..2 {
            for k in 0..2 {
                out[a][k] = gu[a][k] - g0[a][k] - gt[a][k];
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::build_corrector_set;
    use crate::coefficient::CoefficientField;
    use crate::fem::mesh::mesh_macro;
    use crate::geometry::{build_macro_domain, OuterDomain, PerforationSpec};
    use crate::solve::{solve_eps_problem, solve_homogenized, ProblemData};

    fn pipeline(n: usize, spec: PerforationSpec) -> (MacroMesh, CorrectorSet, HomogenizedField, FieldOnMesh) {
        let c = CoefficientField::isotropic(1.0, 1.0);
        let d = build_macro_domain(OuterDomain::UnitSquare, n, spec).unwrap();
        let h = d.epsilon / 8.0;
        let mm = mesh_macro(&d, h).unwrap();
        let cs = build_corrector_set(&spec, &c, 1.0 / 8.0).unwrap();
        let data = ProblemData::boundary_only();
        let u = solve_eps_problem(&mm, &cs, &data).unwrap();
        let u0 = HomogenizedField::new(solve_homogenized(&cs.a_hat, &data, h).unwrap()).unwrap();
        (mm, cs, u0, u)
    }

    #[test]
    fn no_holes_gives_plain_difference() {
        let (mm, cs, u0, u) = pipeline(4, PerforationSpec::none());
        let k = SmoothingKernel::default();
        let fc = FirstOrderCorrector::new(&mm, &cs, &u0, &k).unwrap();
        let w = fc.assemble_w(&u).unwrap();
        for (n, p) in mm.perforated.nodes.iter().enumerate() {
            let v = u0.value(*p);
            let a = u.at_node(n);
            assert!((w.at_node(n)[0] - (a[0] - v[0])).abs() < 1e-12);
            assert!((w.at_node(n)[1] - (a[1] - v[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn corrector_vanishes_near_the_boundary_and_reduces_the_error() {
        let (mm, cs, u0, u) = pipeline(8, PerforationSpec::disk(0.25));
        let k = SmoothingKernel::default();
        let fc = FirstOrderCorrector::new(&mm, &cs, &u0, &k).unwrap();
        let eps = mm.domain.epsilon;
        for n in 0..mm.perforated.num_nodes() {
            let x = mm.perforated.nodes[n];
            if dist_to_unit_square_boundary(x) <= 2.5 * eps {
                assert_eq!(fc.term_at_node(n), [0.0, 0.0]);
            }
        }
        let rule = crate::fem::quadrature::TriangleRule::degree2();
        let (mut with, mut without) = (0.0, 0.0);
        for e in 0..mm.perforated.num_elements() {
            let a = mm.perforated.area(e);
            let gu = u.grad(e);
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                let gw = fc.grad_w(&u, e, *b).unwrap();
                let g0 = u0.grad(mm.perforated.point_at(e, *b));
                with += w * a * gw.iter().flatten().map(|v| v * v).sum::<f64>();
                for al in 0..2 {
                    for kk in 0..2 {
                        without += w * a * (gu[al][kk] - g0[al][kk]).powi(2);
                    }
                }
            }
        }
        assert!(with < without, "‖∇w‖² = {with}, ‖∇(u-u0)‖² = {without}");
    }

    #[test]
    fn mismatched_cell_mesh_is_rejected() {
        let spec = PerforationSpec::disk(0.25);
        let d = build_macro_domain(OuterDomain::UnitSquare, 4, spec).unwrap();
        let mm = mesh_macro(&d, 1.0 / 32.0).unwrap();
        let cs = build_corrector_set(&spec, &CoefficientField::isotropic(1.0, 1.0), 1.0 / 16.0).unwrap();
        let u0 = HomogenizedField::new(FieldOnMesh::zeros(std::sync::Arc::new(crate::fem::mesh::mesh_unit_square(4).unwrap()), 2)).unwrap();
        let k = SmoothingKernel::default();
        assert!(FirstOrderCorrector::new(&mm, &cs, &u0, &k).is_err());
    }
}
