//! Periodic cell problems: correctors `χ`, the effective tensor `Â`, the
//! flux corrector `E` and the auxiliary potential `Ψ`.

use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficient::{CoefficientField, Tensor4, DIM};
use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_elasticity, assemble_laplace, load_divergence, load_scalar_piecewise};
use crate::fem::mesh::{mesh_unit_cell_full, segments_for, Region, TriMesh};
use crate::fem::{Constraints, FieldOnMesh, ReducedOperator, SolveMethod};
use crate::geometry::PerforationSpec;

/// Relative residual above which cell solves log a warning.
pub const WARN_RESIDUAL: f64 = 1e-8;

#[inline]
pub fn corrector_index(j: usize, beta: usize) -> usize {
    j * DIM + beta
}

#[inline]
fn t4(i: usize, j: usize, a: usize, b: usize) -> usize {
    ((i * DIM + j) * DIM + a) * DIM + b
}

/// `Â` together with the porosity it was computed with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensor {
    pub entries: Tensor4,
    pub theta: f64,
    /// Extreme eigenvalues of the quadratic form on symmetric matrices.
    pub mu_min: f64,
    pub mu_max: f64,
}

impl EffectiveTensor {
    pub fn new(entries: Tensor4, theta: f64) -> Self {
        let (mu_min, mu_max) = entries.symmetric_bounds();
        EffectiveTensor { entries, theta, mu_min, mu_max }
    }

    pub fn symmetry_defect(&self) -> f64 {
        self.entries.symmetry_defect()
    }
}

/// Residual and normalization checks recorded with every cell solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnostics {
    /// Largest relative residual over the corrector solves.
    pub chi_residual: f64,
    /// `max |∫ χ| / ‖χ‖_{L²}` over components.
    pub chi_mean: f64,
    /// `max |∫_Y b|` over all indices.
    pub b_mean: f64,
    /// Largest relative residual over the potential solves.
    pub flux_potential_residual: f64,
    /// `max_{n} |∫ E_kij ∂_k φ_n + ∫ b_ij φ_n|` over P1 hat functions.
    pub flux_weak_residual: f64,
    /// The same residual measured in the dual norm of `H¹` test functions.
    pub flux_dual_residual: f64,
    pub psi_residual: f64,
    pub psi_mean: f64,
    /// `|∫ |∇Ψ|² - ∫ (l⁺ - θ) Ψ|`.
    pub psi_energy_gap: f64,
}

/// Everything computed from one cell mesh and coefficient.
#[derive(Debug, Clone)]
pub struct CorrectorSet {
    pub spec: PerforationSpec,
    pub coeff: CoefficientField,
    pub h: f64,
    /// Mesh of `Y` with the hole meshed and tagged.
    pub full_mesh: Arc<TriMesh>,
    /// Mesh of `Y ∩ ω`, a node prefix of `full_mesh`.
    pub cell_mesh: Arc<TriMesh>,
    /// `χ_j^β` at [`corrector_index`]`(j, β)`.
    pub chi: Vec<FieldOnMesh>,
    pub theta: f64,
    pub a_hat: EffectiveTensor,
    /// Periodic potentials `f_ij^{αβ}` on `Y`, indexed like [`Tensor4`].
    pub flux_potential: Vec<FieldOnMesh>,
    /// `E_{kij}^{αβ}` per element of `full_mesh`, see [`CorrectorSet::flux_corrector`].
    pub flux: Vec<f64>,
    pub psi: FieldOnMesh,
    pub diagnostics: CellDiagnostics,
}

impl CorrectorSet {
    /// `E_{kij}^{αβ}` on element `e` of the full cell mesh.
    #[inline]
    pub fn flux_corrector(&self, e: usize, k: usize, i: usize, j: usize, a: usize, b: usize) -> f64 {
        self.flux[e * 32 + k * 16 + t4(i, j, a, b)]
    }

    /// `∂_k χ_j^{γβ}` on element `e` of the cell mesh, as `g[j][β][γ][k]`.
    pub fn chi_grad(&self, e: usize) -> [[[[f64; 2]; 2]; 2]; 2] {
        let mut out = [[[[0.0; 2]; 2]; 2]; 2];
        for j in 0..DIM {
            for b in 0..DIM {
                out[j][b] = self.chi[corrector_index(j, b)].grad(e);
            }
        }
        out
    }

    /// `χ_j^β` at node `n` of the cell mesh, as `v[j][β][γ]`.
    pub fn chi_at_node(&self, n: usize) -> [[[f64; 2]; 2]; 2] {
        let mut out = [[[0.0; 2]; 2]; 2];
        for j in 0..DIM {
            for b in 0..DIM {
                out[j][b] = self.chi[corrector_index(j, b)].at_node(n);
            }
        }
        out
    }

    /// Number of segments per side of the cell mesh.
    pub fn segments(&self) -> usize {
        segments_for(self.h)
    }

    /// `∫ A∇χ_j^β·∇χ_j^β` summed over `(j, β)`.
    pub fn corrector_energy(&self) -> f64 {
        let mesh = &self.cell_mesh;
        let mut s = 0.0;
        for e in 0..mesh.num_elements() {
            let a = self.coeff.eval(mesh.centroid(e));
            for field in &self.chi {
                s += mesh.area(e) * a.quadratic_form(&field.grad(e));
            }
        }
        s
    }
}

/// Coefficient at the centroid of each element (one-point quadrature).
pub fn element_coefficients(mesh: &TriMesh, coeff: &CoefficientField) -> Vec<Tensor4> {
    (0..mesh.num_elements()).map(|e| coeff.eval(mesh.centroid(e))).collect()
}

/// Solves the four periodic cell problems on the perforated cell mesh.
/// Returns `χ` indexed by [`corrector_index`] and the largest residual.
pub fn solve_cell_corrector(coeff: &CoefficientField, cell_mesh: &Arc<TriMesh>) -> Result<(Vec<FieldOnMesh>, f64)> {
    coeff.validate()?;
    let mesh = cell_mesh.as_ref();
    if mesh.periodic_pairs.is_empty() {
        return Err(Error::InvalidArgument("cell mesh carries no periodic pairs".into()));
    }
    let tensors = element_coefficients(mesh, coeff);
    let k = assemble_elasticity(mesh, |e| tensors[e], |_| true)?;
    let constraints =
        Constraints { periodic: mesh.periodic_pairs.clone(), mean_zero: Some(mesh.lumped_mass()), ..Default::default() };
    let op = ReducedOperator::new(&k, 2, &constraints)?;
    let results: Vec<Result<(FieldOnMesh, f64)>> = (0..DIM * DIM)
        .into_par_iter()
        .map(|idx| {
            let (j, beta) = (idx / DIM, idx % DIM);
            // a(χ, φ) = -∫ a_{ij}^{αβ} ∂_i φ^α, i.e. divergence data f_i^α = a_{ij}^{αβ}
            let rhs = load_divergence(mesh, |e| {
                let a = &tensors[e];
                let area = mesh.area(e);
                let mut f = [[0.0; 2]; 2];
                for al in 0..DIM {
                    for i in 0..DIM {
                        f[al][i] = area * a.get(i, j, al, beta);
                    }
                }
                f
            });
            let sol = op.solve(&rhs, SolveMethod::CgJacobi)?;
            Ok((FieldOnMesh::new(cell_mesh.clone(), 2, sol.values), sol.outcome.residual))
        })
        .collect();
    let mut chi = Vec::with_capacity(4);
    let mut worst = 0.0f64;
    for r in results {
        let (f, res) = r?;
        worst = worst.max(res);
        chi.push(f);
    }
    if worst > WARN_RESIDUAL {
        warn!("cell corrector residual {worst:e} exceeds {WARN_RESIDUAL:e}");
    }
    Ok((chi, worst))
}

/// `â_{ij}^{αβ} = θ⁻¹ ∫ (a_{ij}^{αβ} + a_{ik}^{αγ} ∂_k χ_j^{γβ})` and `θ`.
pub fn compute_effective_tensor(chi: &[FieldOnMesh], coeff: &CoefficientField) -> EffectiveTensor {
    let mesh = chi[0].mesh.as_ref();
    let theta = mesh.total_area();
    let mut acc = [0.0; 16];
    for e in 0..mesh.num_elements() {
        let a = coeff.eval(mesh.centroid(e));
        let area = mesh.area(e);
        for j in 0..DIM {
            for b in 0..DIM {
                let g = chi[corrector_index(j, b)].grad(e);
                for i in 0..DIM {
                    for al in 0..DIM {
                        let mut v = a.get(i, j, al, b);
                        for k in 0..DIM {
                            for ga in 0..DIM {
                                v += a.get(i, k, al, ga) * g[ga][k];
                            }
                        }
                        acc[t4(i, j, al, b)] += area * v;
                    }
                }
            }
        }
    }
    EffectiveTensor::new(Tensor4(acc).scaled(1.0 / theta), theta)
}

/// `∫_{Y∩ω} A`, the Voigt upper bound for `θ Â`.
pub fn voigt_tensor(mesh: &TriMesh, coeff: &CoefficientField) -> Tensor4 {
    let mut acc = [0.0; 16];
    for e in 0..mesh.num_elements() {
        let a = coeff.eval(mesh.centroid(e));
        for (s, v) in acc.iter_mut().zip(a.0) {
            *s += mesh.area(e) * v;
        }
    }
    Tensor4(acc)
}

/// `b_{ij}^{αβ} = θâ - l⁺a - l⁺a∇χ` per element of the full cell mesh.
pub fn flux_density(full: &TriMesh, chi: &[FieldOnMesh], coeff: &CoefficientField, a_hat: &EffectiveTensor) -> Vec<[f64; 16]> {
    let base = a_hat.entries.scaled(a_hat.theta);
    (0..full.num_elements())
        .map(|e| {
            let mut b = base.0;
            if full.regions[e] == Region::Material {
                // material elements of the full mesh come first and match the cell mesh
                let a = coeff.eval(full.centroid(e));
                for j in 0..DIM {
                    for be in 0..DIM {
                        let g = chi[corrector_index(j, be)].grad(e);
                        for i in 0..DIM {
                            for al in 0..DIM {
                                let mut v = a.get(i, j, al, be);
                                for k in 0..DIM {
                                    for ga in 0..DIM {
                                        v += a.get(i, k, al, ga) * g[ga][k];
                                    }
                                }
                                b[t4(i, j, al, be)] -= v;
                            }
                        }
                    }
                }
            }
            b
        })
        .collect()
}

fn periodic_scalar_operator(full: &TriMesh) -> Result<ReducedOperator> {
    let k = assemble_laplace(full, |_| true);
    let constraints =
        Constraints { periodic: full.periodic_pairs.clone(), mean_zero: Some(full.lumped_mass()), ..Default::default() };
    ReducedOperator::new(&k, 1, &constraints)
}

/// Flux corrector from periodic potentials `-Δf = b`, `E_kij = ∂_i f_kj - ∂_k f_ij`.
/// Returns the potentials, `E` per element and diagnostics.
pub fn compute_flux_corrector(
    full: &Arc<TriMesh>,
    chi: &[FieldOnMesh],
    coeff: &CoefficientField,
    a_hat: &EffectiveTensor,
) -> Result<(Vec<FieldOnMesh>, Vec<f64>, CellDiagnostics)> {
    let mesh = full.as_ref();
    let b = flux_density(mesh, chi, coeff, a_hat);
    let mut diag = CellDiagnostics::default();
    for c in 0..16 {
        let m: f64 = (0..mesh.num_elements()).map(|e| mesh.area(e) * b[e][c]).sum();
        diag.b_mean = diag.b_mean.max(m.abs());
    }
    if diag.b_mean > 1e-8 {
        warn!("flux density has mean {:e}; the effective tensor is inconsistent", diag.b_mean);
    }
    let op = periodic_scalar_operator(mesh)?;
    let results: Vec<Result<(FieldOnMesh, f64)>> = (0..16)
        .into_par_iter()
        .map(|c| {
            let rhs = load_scalar_piecewise(mesh, |e| b[e][c]);
            let sol = op.solve(&rhs, SolveMethod::CgJacobi)?;
            Ok((FieldOnMesh::new(full.clone(), 1, sol.values), sol.outcome.residual))
        })
        .collect();
    let mut potentials = Vec::with_capacity(16);
    for r in results {
        let (f, res) = r?;
        diag.flux_potential_residual = diag.flux_potential_residual.max(res);
        potentials.push(f);
    }
    let ne = mesh.num_elements();
    let mut flux = vec![0.0; ne * 32];
    for e in 0..ne {
        let grads: Vec<[[f64; 2]; 2]> = potentials.iter().map(|f| f.grad(e)).collect();
        for k in 0..DIM {
            for i in 0..DIM {
                for j in 0..DIM {
                    for a in 0..DIM {
                        for bb in 0..DIM {
                            let v = grads[t4(k, j, a, bb)][0][i] - grads[t4(i, j, a, bb)][0][k];
                            flux[e * 32 + k * 16 + t4(i, j, a, bb)] = v;
                        }
                    }
                }
            }
        }
    }
    let (nodal, dual) = flux_weak_residual(mesh, &flux, &b, &op)?;
    diag.flux_weak_residual = nodal;
    diag.flux_dual_residual = dual;
    Ok((potentials, flux, diag))
}

/// Weak residual `r(φ) = ∫ E_kij ∂_k φ + ∫ b_ij φ` of `∂_k E_kij = b_ij`
/// over periodic P1 test functions. Returns the largest hat-function value
/// and the dual norm `sup r(φ)/‖∇φ‖`, the latter via one Laplace solve.
pub fn flux_weak_residual(mesh: &TriMesh, flux: &[f64], b: &[[f64; 16]], op: &ReducedOperator) -> Result<(f64, f64)> {
    let rep = mesh.periodic_representatives();
    let mut nodal_max = 0.0f64;
    let mut dual_max = 0.0f64;
    for i in 0..DIM {
        for j in 0..DIM {
            for a in 0..DIM {
                for bb in 0..DIM {
                    let c = t4(i, j, a, bb);
                    let mut r = vec![0.0; mesh.num_nodes()];
                    for e in 0..mesh.num_elements() {
                        let g = mesh.grads(e);
                        let area = mesh.area(e);
                        let tri = mesh.elements[e];
                        for (p, &n) in tri.iter().enumerate() {
                            let mut v = b[e][c] / 3.0;
                            for k in 0..DIM {
                                v += flux[e * 32 + k * 16 + c] * g[p][k];
                            }
                            r[n] += area * v;
                        }
                    }
                    // fold slaves onto masters: periodic hat functions
                    let mut folded = vec![0.0; mesh.num_nodes()];
                    for (n, v) in r.iter().enumerate() {
                        folded[rep[n]] += v;
                    }
                    nodal_max = nodal_max.max(folded.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                    // Riesz representative: ∫∇z∇φ = r(φ); dual norm = ‖∇z‖ = sqrt(r(z))
                    let z = op.solve(&r, SolveMethod::CgJacobi)?;
                    let rz: f64 = r.iter().zip(&z.values).map(|(p, q)| p * q).sum();
                    dual_max = dual_max.max(rz.max(0.0).sqrt());
                }
            }
        }
    }
    Ok((nodal_max, dual_max))
}

/// Solves `-ΔΨ = l⁺ - θ` on the full cell, periodic with zero mean.
pub fn solve_auxiliary_psi(full: &Arc<TriMesh>) -> Result<(FieldOnMesh, CellDiagnostics)> {
    let mesh = full.as_ref();
    let theta = mesh.region_area(Region::Material);
    let source = |e: usize| if mesh.regions[e] == Region::Material { 1.0 - theta } else { -theta };
    let op = periodic_scalar_operator(mesh)?;
    let rhs = load_scalar_piecewise(mesh, source);
    let sol = op.solve(&rhs, SolveMethod::CgJacobi)?;
    let psi = FieldOnMesh::new(full.clone(), 1, sol.values);
    let mut diag = CellDiagnostics { psi_residual: sol.outcome.residual, ..Default::default() };
    diag.psi_mean = psi.integral_where(|_| true)[0].abs();
    let energy = psi.h1_seminorm().powi(2);
    let work: f64 = rhs.iter().zip(&psi.values).map(|(p, q)| p * q).sum();
    diag.psi_energy_gap = (energy - work).abs();
    Ok((psi, diag))
}

/// Builds the cell meshes at size `h` and runs every cell computation.
pub fn build_corrector_set(spec: &PerforationSpec, coeff: &CoefficientField, h: f64) -> Result<CorrectorSet> {
    let full = Arc::new(mesh_unit_cell_full(spec, h)?);
    build_corrector_set_on(spec, coeff, h, full)
}

pub fn build_corrector_set_on(
    spec: &PerforationSpec,
    coeff: &CoefficientField,
    h: f64,
    full: Arc<TriMesh>,
) -> Result<CorrectorSet> {
    let cell = Arc::new(full.material_submesh()?);
    let (chi, chi_residual) = solve_cell_corrector(coeff, &cell)?;
    let a_hat = compute_effective_tensor(&chi, coeff);
    let (flux_potential, flux, mut diag) = compute_flux_corrector(&full, &chi, coeff, &a_hat)?;
    let (psi, pd) = solve_auxiliary_psi(&full)?;
    diag.chi_residual = chi_residual;
    diag.chi_mean = chi
        .iter()
        .map(|f| {
            let m = f.integral_where(|_| true);
            m[0].abs().max(m[1].abs()) / f.l2_norm().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    diag.psi_residual = pd.psi_residual;
    diag.psi_mean = pd.psi_mean;
    diag.psi_energy_gap = pd.psi_energy_gap;
    Ok(CorrectorSet {
        spec: *spec,
        coeff: *coeff,
        h,
        full_mesh: full,
        cell_mesh: cell,
        chi,
        theta: a_hat.theta,
        a_hat,
        flux_potential,
        flux,
        psi,
        diagnostics: diag,
    })
}
