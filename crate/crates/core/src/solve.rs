//! The oscillating problem on `Ω_ε`, the homogenized problem on `Ω` and
//! problems with divergence-form data.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cell::{CorrectorSet, EffectiveTensor};
use crate::coefficient::{CoefficientField, Tensor4};
use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_elasticity, load_divergence, load_volume};
use crate::fem::mesh::{mesh_unit_square, segments_for, BoundaryTag, MacroMesh, TriMesh};
use crate::fem::quadrature::{gauss_legendre, TriangleRule};
use crate::fem::{Constraints, FieldOnMesh, ReducedOperator, SolveMethod};
use crate::geometry::Point;

/// Analytic vector presets for `F` and `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorPreset {
    Zero,
    /// `(sin πx₁ sin πx₂, x₁x₂)`.
    SinProduct,
    /// `(cos 2πx₁, sin 2πx₂)`.
    Trig,
    /// `M x` for a fixed matrix.
    Linear { m: [[f64; 2]; 2] },
}

impl VectorPreset {
    pub fn value(&self, x: Point) -> [f64; 2] {
        match *self {
            VectorPreset::Zero => [0.0, 0.0],
            VectorPreset::SinProduct => [(PI * x[0]).sin() * (PI * x[1]).sin(), x[0] * x[1]],
            VectorPreset::Trig => [(2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).sin()],
            VectorPreset::Linear { m } => [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]],
        }
    }

    /// `g[α][j] = ∂_j v^α`.
    pub fn gradient(&self, x: Point) -> [[f64; 2]; 2] {
        match *self {
            VectorPreset::Zero => [[0.0; 2]; 2],
            VectorPreset::SinProduct => {
                let (s0, c0) = (PI * x[0]).sin_cos();
                let (s1, c1) = (PI * x[1]).sin_cos();
                [[PI * c0 * s1, PI * s0 * c1], [x[1], x[0]]]
            }
            VectorPreset::Trig => [[-2.0 * PI * (2.0 * PI * x[0]).sin(), 0.0], [0.0, 2.0 * PI * (2.0 * PI * x[1]).cos()]],
            VectorPreset::Linear { m } => m,
        }
    }
}

/// Data `(F, g)` of the oscillating and homogenized problems. `scale`
/// multiplies both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemData {
    pub source: VectorPreset,
    pub boundary: VectorPreset,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl ProblemData {
    /// `g = (sin πx₁ sin πx₂, x₁x₂)`, `F = (cos 2πx₁, sin 2πx₂)`.
    pub fn default_presets() -> Self {
        ProblemData { source: VectorPreset::Trig, boundary: VectorPreset::SinProduct, scale: 1.0 }
    }

    /// Boundary data only, `F = 0`.
    pub fn boundary_only() -> Self {
        ProblemData { source: VectorPreset::Zero, ..Self::default_presets() }
    }

    pub fn f(&self, x: Point) -> [f64; 2] {
        let v = self.source.value(x);
        [self.scale * v[0], self.scale * v[1]]
    }

    pub fn g(&self, x: Point) -> [f64; 2] {
        let v = self.boundary.value(x);
        [self.scale * v[0], self.scale * v[1]]
    }

    /// `‖g‖_{H¹(∂Ω)}` on the unit square, by Gauss quadrature per side.
    pub fn norm_g_h1_boundary(&self) -> f64 {
        let (t, w) = gauss_legendre(24);
        let mut s = 0.0;
        // (start point, tangent) for each side
        for (p0, tan) in [([0.0, 0.0], [1.0, 0.0]), ([1.0, 0.0], [0.0, 1.0]), ([0.0, 1.0], [1.0, 0.0]), ([0.0, 0.0], [0.0, 1.0])] {
            for (ti, wi) in t.iter().zip(&w) {
                let u = 0.5 * (ti + 1.0);
                let x = [p0[0] + u * tan[0], p0[1] + u * tan[1]];
                let v = self.boundary.value(x);
                let g = self.boundary.gradient(x);
                let dt = [g[0][0] * tan[0] + g[0][1] * tan[1], g[1][0] * tan[0] + g[1][1] * tan[1]];
                s += 0.5 * wi * (v[0] * v[0] + v[1] * v[1] + dt[0] * dt[0] + dt[1] * dt[1]);
            }
        }
        self.scale * s.sqrt()
    }

    /// `‖F‖_{L²(Ω_0)}` over the square `[-o, 1+o]²`.
    pub fn norm_f_l2(&self, offset: f64) -> f64 {
        square_integral(offset, |x| {
            let v = self.source.value(x);
            v[0] * v[0] + v[1] * v[1]
        })
        .sqrt()
            * self.scale
    }

    /// `(∫_{Ω_0} |∇F|² δ)^{1/2}` with `δ = dist(·, ∂Ω_0)`.
    pub fn norm_grad_f_weighted(&self, offset: f64) -> f64 {
        square_integral(offset, |x| {
            let g = self.source.gradient(x);
            let d = (x[0] + offset).min(1.0 + offset - x[0]).min(x[1] + offset).min(1.0 + offset - x[1]);
            g.iter().flatten().map(|v| v * v).sum::<f64>() * d
        })
        .sqrt()
            * self.scale
    }
}

/// Tensor Gauss quadrature over `[-o, 1+o]²` on a 16 x 16 panel grid.
fn square_integral(offset: f64, f: impl Fn(Point) -> f64) -> f64 {
    let (t, w) = gauss_legendre(6);
    let panels = 16;
    let len = 1.0 + 2.0 * offset;
    let hp = len / panels as f64;
    let mut s = 0.0;
    for a in 0..panels {
        for b in 0..panels {
            for (ti, wi) in t.iter().zip(&w) {
                for (tj, wj) in t.iter().zip(&w) {
                    let x = [-offset + hp * (a as f64 + 0.5 * (ti + 1.0)), -offset + hp * (b as f64 + 0.5 * (tj + 1.0))];
                    s += 0.25 * hp * hp * wi * wj * f(x);
                }
            }
        }
    }
    s
}

/// Symmetric matrix-valued divergence-form data `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixData {
    Zero,
    Constant { m: [[f64; 2]; 2] },
    /// Sum of `amp · sin(2π(k·x) + phase)` modes per entry `(11, 22, 12)`.
    Trig { modes: Vec<TrigMode> },
    /// Piecewise constant on an `n x n` checkerboard of the unit square.
    Checker { n: usize, values: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigMode {
    pub k: [f64; 2],
    pub phase: f64,
    pub amp: [f64; 3],
}

impl MatrixData {
    /// `f[α][i]`.
    pub fn value(&self, x: Point) -> [[f64; 2]; 2] {
        let s = match self {
            MatrixData::Zero => [0.0; 3],
            MatrixData::Constant { m } => return *m,
            MatrixData::Trig { modes } => {
                let mut s = [0.0; 3];
                for md in modes {
                    let v = (2.0 * PI * (md.k[0] * x[0] + md.k[1] * x[1]) + md.phase).sin();
                    for c in 0..3 {
                        s[c] += md.amp[c] * v;
                    }
                }
                s
            }
            MatrixData::Checker { n, values } => {
                let i = ((x[0] * *n as f64).floor().max(0.0) as usize).min(n - 1);
                let j = ((x[1] * *n as f64).floor().max(0.0) as usize).min(n - 1);
                values[j * n + i]
            }
        };
        [[s[0], s[2]], [s[2], s[1]]]
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MatrixData::Zero => true,
            MatrixData::Constant { m } => m.iter().flatten().all(|v| *v == 0.0),
            MatrixData::Trig { modes } => modes.iter().all(|m| m.amp.iter().all(|a| *a == 0.0)),
            MatrixData::Checker { values, .. } => values.iter().flatten().all(|v| *v == 0.0),
        }
    }

    /// Seeded family: `smooth` trigonometric presets and one checkerboard.
    pub fn family(seed: u64, smooth: usize) -> Vec<MatrixData> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(smooth + 1);
        for _ in 0..smooth {
            let modes = (0..3)
                .map(|_| TrigMode {
                    k: [rng.random_range(0..3) as f64, rng.random_range(0..3) as f64],
                    phase: rng.random_range(0.0..2.0 * PI),
                    amp: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                })
                .collect();
            out.push(MatrixData::Trig { modes });
        }
        let n = 4;
        let values = (0..n * n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        out.push(MatrixData::Checker { n, values });
        out
    }
}

/// Coefficient of each element of `Ω` (holes included), read from the cell
/// element it tiles.
pub fn macro_tensors(mm: &MacroMesh, cell_full: &TriMesh, coeff: &CoefficientField) -> Vec<Tensor4> {
    let cell: Vec<Tensor4> = (0..cell_full.num_elements()).map(|e| coeff.eval(cell_full.centroid(e))).collect();
    mm.elem_cell.iter().map(|&c| cell[c]).collect()
}

fn dirichlet_on(mesh: &TriMesh, g: impl Fn(Point) -> [f64; 2]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for n in mesh.tagged_nodes(BoundaryTag::DirichletOuter) {
        let v = g(mesh.nodes[n]);
        out.push((2 * n, v[0]));
        out.push((2 * n + 1, v[1]));
    }
    out
}

/// Stiffness of `Ω_ε` for the oscillating coefficient with Dirichlet data
/// on `∂Ω`, ready for repeated solves.
pub struct EpsOperator {
    pub mesh: Arc<TriMesh>,
    k: crate::fem::sparse::CsrMatrix,
}

impl EpsOperator {
    pub fn new(mm: &MacroMesh, cell_full: &TriMesh, coeff: &CoefficientField) -> Result<Self> {
        coeff.validate()?;
        let tensors = macro_tensors(mm, cell_full, coeff);
        let mesh = Arc::new(mm.perforated.clone());
        let k = assemble_elasticity(&mesh, |e| tensors[e], |_| true)?;
        Ok(EpsOperator { mesh, k })
    }

    /// Solves with Dirichlet data `g` and nodal load `rhs`.
    pub fn solve(&self, g: impl Fn(Point) -> [f64; 2], rhs: &[f64]) -> Result<FieldOnMesh> {
        let constraints = Constraints { dirichlet: dirichlet_on(&self.mesh, g), ..Default::default() };
        let op = ReducedOperator::new(&self.k, 2, &constraints)?;
        let sol = op.solve(rhs, SolveMethod::CgJacobi)?;
        Ok(FieldOnMesh::new(self.mesh.clone(), 2, sol.values))
    }

    pub fn energy(&self, u: &FieldOnMesh) -> f64 {
        let ku = self.k.mul(&u.values);
        ku.iter().zip(&u.values).map(|(a, b)| a * b).sum()
    }
}

/// `u_ε` on `Ω_ε`: oscillating coefficient, `u_ε = g` on `∂Ω`, traction-free holes.
pub fn solve_eps_problem(mm: &MacroMesh, correctors: &CorrectorSet, data: &ProblemData) -> Result<FieldOnMesh> {
    check_gate(mm)?;
    let op = EpsOperator::new(mm, &correctors.full_mesh, &correctors.coeff)?;
    let rhs = load_volume(&op.mesh, |x| data.f(x));
    op.solve(|x| data.g(x), &rhs)
}

fn check_gate(mm: &MacroMesh) -> Result<()> {
    let h = mm.h();
    let limit = mm.domain.epsilon / 8.0;
    if h > limit * (1.0 + 1e-12) {
        return Err(Error::ResolutionGate { h, limit });
    }
    Ok(())
}

/// `u_0` on a structured mesh of the unit square with `round(1/h)` segments.
pub fn solve_homogenized(a_hat: &EffectiveTensor, data: &ProblemData, h: f64) -> Result<FieldOnMesh> {
    let k = segments_for(h);
    let mesh = Arc::new(mesh_unit_square(k)?);
    let stiff = assemble_elasticity(&mesh, |_| a_hat.entries, |_| true)?;
    let rhs = load_volume(&mesh, |x| data.f(x));
    let constraints = Constraints { dirichlet: dirichlet_on(&mesh, |x| data.g(x)), ..Default::default() };
    let op = ReducedOperator::new(&stiff, 2, &constraints)?;
    let sol = op.solve(&rhs, SolveMethod::CgJacobi)?;
    Ok(FieldOnMesh::new(mesh, 2, sol.values))
}

/// Load `-∫ f : ∇φ` with a degree-5 rule per element.
pub fn divergence_load(mesh: &TriMesh, f: &MatrixData) -> Vec<f64> {
    let rule = TriangleRule::degree5();
    load_divergence(mesh, |e| {
        let mut s = [[0.0; 2]; 2];
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let v = f.value(mesh.point_at(e, *b));
            for a in 0..2 {
                for i in 0..2 {
                    s[a][i] += w * mesh.area(e) * v[a][i];
                }
            }
        }
        s
    })
}

/// `φ_ε` with `-∇·A(x/ε)∇φ_ε = ∇·f`, zero on `∂Ω`, `σ(φ_ε) = -n·f` on holes.
pub fn solve_divdata_problem(mm: &MacroMesh, correctors: &CorrectorSet, f: &MatrixData) -> Result<FieldOnMesh> {
    check_gate(mm)?;
    let op = EpsOperator::new(mm, &correctors.full_mesh, &correctors.coeff)?;
    let rhs = divergence_load(&op.mesh, f);
    op.solve(|_| [0.0, 0.0], &rhs)
}

/// `(∫ |f|²)^{1/2}` over a mesh, degree-5 rule.
pub fn matrix_data_l2(mesh: &TriMesh, f: &MatrixData) -> f64 {
    let rule = TriangleRule::degree5();
    let mut s = 0.0;
    for e in 0..mesh.num_elements() {
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let v = f.value(mesh.point_at(e, *b));
            s += w * mesh.area(e) * v.iter().flatten().map(|x| x * x).sum::<f64>();
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::build_corrector_set;
    use crate::fem::mesh::mesh_macro;
    use crate::geometry::{build_macro_domain, OuterDomain, PerforationSpec};

    #[test]
    fn boundary_norm_matches_closed_form() {
        // g₁ vanishes on ∂Ω and g₂ = x₁x₂ is t on two sides: ‖g‖² = 2(1/3 + 1)
        let n = ProblemData::default_presets().norm_g_h1_boundary();
        assert!((n - (8.0f64 / 3.0).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn linear_data_is_reproduced() {
        let c = CoefficientField::isotropic(1.0, 1.0);
        let cs = build_corrector_set(&PerforationSpec::none(), &c, 1.0 / 8.0).unwrap();
        let d = build_macro_domain(OuterDomain::UnitSquare, 4, PerforationSpec::none()).unwrap();
        let mm = mesh_macro(&d, 1.0 / 32.0).unwrap();
        let m = [[0.3, -1.0], [2.0, 0.5]];
        let data = ProblemData { source: VectorPreset::Zero, boundary: VectorPreset::Linear { m }, scale: 1.0 };
        let u = solve_eps_problem(&mm, &cs, &data).unwrap();
        for (n, p) in u.mesh.nodes.iter().enumerate() {
            let v = u.at_node(n);
            let e = VectorPreset::Linear { m }.value(*p);
            assert!((v[0] - e[0]).abs() < 1e-8 && (v[1] - e[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_divergence_data_gives_zero() {
        let c = CoefficientField::isotropic(1.0, 1.0);
        let cs = build_corrector_set(&PerforationSpec::disk(0.25), &c, 1.0 / 8.0).unwrap();
        let d = build_macro_domain(OuterDomain::UnitSquare, 4, PerforationSpec::disk(0.25)).unwrap();
        let mm = mesh_macro(&d, 1.0 / 32.0).unwrap();
        let phi = solve_divdata_problem(&mm, &cs, &MatrixData::Zero).unwrap();
        assert!(phi.max_abs() == 0.0);
    }

    #[test]
    fn family_is_seeded() {
        assert_eq!(MatrixData::family(7, 3), MatrixData::family(7, 3));
        assert_ne!(MatrixData::family(7, 3), MatrixData::family(8, 3));
        assert_eq!(MatrixData::family(7, 3).len(), 4);
    }
}
