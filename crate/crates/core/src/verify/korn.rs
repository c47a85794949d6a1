//! Korn constant `C` in `‖w‖_{H¹(Ω_ε)} ≤ C ‖e(w)‖_{L²(Ω_ε)}` for fields with
//! zero trace on `∂Ω`, from the smallest generalized Rayleigh quotient.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coefficient::Tensor4;
use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_elasticity, assemble_laplace, assemble_mass};
use crate::fem::mesh::{mesh_macro, BoundaryTag, TriMesh};
use crate::fem::sparse::{dot, pcg, CgOptions, CsrMatrix};
use crate::fem::{Constraints, ReducedOperator};
use crate::geometry::MacroDomain;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KornEstimate {
    /// Smallest `‖e(w)‖² / ‖w‖²_{H¹}`.
    pub quotient: f64,
    /// `quotient^{-1/2}`.
    pub constant: f64,
    pub iterations: usize,
}

const MAX_ITER: usize = 300;
const REL_TOL: f64 = 1e-10;

/// Reduced `(K_e, B)` with `K_e` the form `∫ e(u):e(v)` and `B` the `H¹` inner product.
fn reduced_pair(mesh: &TriMesh) -> Result<(CsrMatrix, CsrMatrix)> {
    // λ = 0, μ = 1/2 gives a_{ij}^{αβ} ∂_j u^β ∂_i v^α = e(u):e(v)
    let ke = assemble_elasticity(mesh, |_| Tensor4::isotropic(0.0, 0.5), |_| true)?;
    let lap = assemble_laplace(mesh, |_| true);
    let mass = assemble_mass(mesh, |_| true);
    let mut trip = Vec::with_capacity(2 * (lap.nnz() + mass.nnz()));
    for m in [&lap, &mass] {
        for i in 0..m.n {
            for (j, v) in m.row(i) {
                trip.push((2 * i, 2 * j, v));
                trip.push((2 * i + 1, 2 * j + 1, v));
            }
        }
    }
    let b = CsrMatrix::from_triplets(2 * mesh.num_nodes(), trip);
    let mut dirichlet = Vec::new();
    for n in mesh.tagged_nodes(BoundaryTag::DirichletOuter) {
        dirichlet.push((2 * n, 0.0));
        dirichlet.push((2 * n + 1, 0.0));
    }
    if dirichlet.is_empty() {
        return Err(Error::InvalidArgument("Korn estimate needs a zero-trace boundary".into()));
    }
    let c = Constraints { dirichlet, ..Default::default() };
    let ke = ReducedOperator::new(&ke, 2, &c)?.matrix;
    let b = ReducedOperator::new(&b, 2, &c)?.matrix;
    Ok((ke, b))
}

/// Smallest eigenvalue of `K_e x = λ B x` on `mesh` by Lanczos iteration
/// for `K_e⁻¹ B` in the `B` inner product, with full reorthogonalization.
pub fn korn_constant_on(mesh: &TriMesh) -> Result<KornEstimate> {
    let (ke, b) = reduced_pair(mesh)?;
    let n = ke.n;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b6f726e);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut bq = b.mul(&q);
    let s = dot(&q, &bq).sqrt();
    q.iter_mut().for_each(|v| *v /= s);
    bq.iter_mut().for_each(|v| *v /= s);
    let opts = CgOptions { rel_tol: 1e-10, ..Default::default() };
    let (mut qs, mut bqs): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (Vec::new(), Vec::new());
    let (mut alpha, mut beta): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut theta_prev = 0.0;
    for it in 1..=MAX_ITER.min(n) {
        let mut w = vec![0.0; n];
        pcg(&ke, &bq, &mut w, None, opts)?;
        let a = dot(&w, &bq);
        qs.push(q);
        bqs.push(bq);
        for _ in 0..2 {
            for (qi, bqi) in qs.iter().zip(&bqs) {
                let c = dot(&w, bqi);
                w.iter_mut().zip(qi).for_each(|(x, y)| *x -= c * y);
            }
        }
        alpha.push(a);
        let bw = b.mul(&w);
        let bn = dot(&w, &bw).max(0.0).sqrt();
        let theta = largest_ritz(&alpha, &beta);
        let converged = it > 1 && ((theta - theta_prev) / theta).abs() < REL_TOL;
        if converged || bn < 1e-14 || it == MAX_ITER.min(n) {
            let quotient = 1.0 / theta;
            return Ok(KornEstimate { quotient, constant: quotient.powf(-0.5), iterations: it });
        }
        theta_prev = theta;
        beta.push(bn);
        q = w.iter().map(|v| v / bn).collect();
        bq = bw.iter().map(|v| v / bn).collect();
    }
    Err(Error::NotConverged { iterations: MAX_ITER, residual: theta_prev })
}

/// Largest eigenvalue of the Lanczos tridiagonal matrix.
fn largest_ritz(alpha: &[f64], beta: &[f64]) -> f64 {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    SymmetricEigen::new(t).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Korn estimate on the `Ω_ε` mesh of `domain` at mesh size `h`.
pub fn estimate_korn_constant(domain: &MacroDomain, h: f64) -> Result<KornEstimate> {
    let mm = mesh_macro(domain, h)?;
    korn_constant_on(&mm.perforated)
}

/// Dense generalized eigensolve, the oracle for small meshes.
pub fn korn_constant_dense(mesh: &TriMesh) -> Result<f64> {
    let (ke, b) = reduced_pair(mesh)?;
    let n = ke.n;
    if n > 2000 {
        return Err(Error::InvalidArgument(format!("dense Korn oracle limited to 2000 unknowns, got {n}")));
    }
    let to_dense = |m: &CsrMatrix| {
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in m.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    };
    let l = to_dense(&b).cholesky().ok_or_else(|| Error::Singular("H¹ Gram matrix not positive definite".into()))?;
    let linv = l.l().try_inverse().ok_or_else(|| Error::Singular("Cholesky factor not invertible".into()))?;
    let c = &linv * to_dense(&ke) * linv.transpose();
    let c = 0.5 * (&c + c.transpose());
    let min = SymmetricEigen::new(c).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(min.powf(-0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::mesh_unit_square;

    #[test]
    fn inverse_iteration_matches_dense_oracle() {
        let mesh = mesh_unit_square(8).unwrap();
        let dense = korn_constant_dense(&mesh).unwrap();
        let it = korn_constant_on(&mesh).unwrap();
        assert!((it.constant - dense).abs() < 1e-4 * dense, "{} vs {dense}", it.constant);
        // ‖∇w‖² ≤ 2‖e(w)‖² for zero-trace fields gives C ≥ 1 and a finite bound
        assert!(dense > 1.0 && dense.is_finite());
    }

    #[test]
    fn rigid_rotation_is_excluded() {
        // with no zero-trace boundary the rotation would give quotient 0
        let mut mesh = mesh_unit_square(4).unwrap();
        mesh.boundary_edges.clear();
        assert!(korn_constant_on(&mesh).is_err());
    }
}
