//! P1 assembly of elasticity and Laplace operators and their load vectors.

use rayon::prelude::*;

use crate::coefficient::{Tensor4, DIM};
use crate::error::{Error, Result};
use crate::fem::mesh::TriMesh;
use crate::fem::quadrature::TriangleRule;
use crate::fem::sparse::CsrMatrix;
use crate::geometry::Point;

/// Largest tolerated relative symmetry defect of a coefficient tensor.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Element stiffness of `∫ a_{ij}^{αβ} ∂_j φ_b ∂_i φ_a`, row `(a, α)` and
/// column `(b, β)` at position `(a*2+α, b*2+β)`.
pub fn elasticity_element(grads: &[[f64; 2]; 3], area: f64, a: &Tensor4) -> [[f64; 6]; 6] {
    let mut k = [[0.0; 6]; 6];
    for p in 0..3 {
        for q in 0..3 {
            for al in 0..DIM {
                for be in 0..DIM {
                    let mut s = 0.0;
                    for i in 0..DIM {
                        for j in 0..DIM {
                            s += a.get(i, j, al, be) * grads[p][i] * grads[q][j];
                        }
                    }
                    k[p * 2 + al][q * 2 + be] = area * s;
                }
            }
        }
    }
    k
}

fn check_symmetric(a: &Tensor4, e: usize) -> Result<()> {
    let d = a.symmetry_defect();
    if d > SYMMETRY_TOL {
        return Err(Error::Coefficient(format!("coefficient at element {e} violates the elasticity symmetries (defect {d:e})")));
    }
    Ok(())
}

/// Vector stiffness over the elements selected by `active`, with one
/// (midpoint) coefficient per element.
pub fn assemble_elasticity(
    mesh: &TriMesh,
    coeff: impl Fn(usize) -> Tensor4 + Sync,
    active: impl Fn(usize) -> bool + Sync,
) -> Result<CsrMatrix> {
    let locals: Vec<Option<[[f64; 6]; 6]>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            if !active(e) {
                return Ok(None);
            }
            let a = coeff(e);
            check_symmetric(&a, e)?;
            Ok(Some(elasticity_element(mesh.grads(e), mesh.area(e), &a)))
        })
        .collect::<Result<_>>()?;
    let mut triplets = Vec::with_capacity(36 * mesh.num_elements());
    for (e, local) in locals.iter().enumerate() {
        let Some(k) = local else { continue };
        let tri = mesh.elements[e];
        for p in 0..3 {
            for al in 0..2 {
                for q in 0..3 {
                    for be in 0..2 {
                        triplets.push((tri[p] * 2 + al, tri[q] * 2 + be, k[p * 2 + al][q * 2 + be]));
                    }
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(2 * mesh.num_nodes(), triplets))
}

/// Scalar Laplace stiffness `∫ ∇φ_b · ∇φ_a` over the selected elements.
pub fn assemble_laplace(mesh: &TriMesh, active: impl Fn(usize) -> bool) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.num_elements());
    for e in 0..mesh.num_elements() {
        if !active(e) {
            continue;
        }
        let g = mesh.grads(e);
        let tri = mesh.elements[e];
        for p in 0..3 {
            for q in 0..3 {
                triplets.push((tri[p], tri[q], mesh.area(e) * (g[p][0] * g[q][0] + g[p][1] * g[q][1])));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_nodes(), triplets)
}

/// Consistent scalar mass matrix.
pub fn assemble_mass(mesh: &TriMesh, active: impl Fn(usize) -> bool) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.num_elements());
    for e in 0..mesh.num_elements() {
        if !active(e) {
            continue;
        }
        let tri = mesh.elements[e];
        let a = mesh.area(e);
        for p in 0..3 {
            for q in 0..3 {
                triplets.push((tri[p], tri[q], if p == q { a / 6.0 } else { a / 12.0 }));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_nodes(), triplets)
}

/// Vector load `∫ F · φ` with a degree-5 rule.
pub fn load_volume(mesh: &TriMesh, source: impl Fn(Point) -> [f64; 2] + Sync) -> Vec<f64> {
    let rule = TriangleRule::degree5();
    let locals: Vec<[f64; 6]> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let mut l = [0.0; 6];
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                let f = source(mesh.point_at(e, *b));
                for p in 0..3 {
                    for al in 0..2 {
                        l[p * 2 + al] += w * mesh.area(e) * f[al] * b[p];
                    }
                }
            }
            l
        })
        .collect();
    scatter_vector(mesh, &locals)
}

/// Vector load `-∫ f_i^α ∂_i φ^α` for divergence-form data `∇·f`, where
/// `integral(e)` returns `∫_e f` with `f[α][i]`.
pub fn load_divergence(mesh: &TriMesh, integral: impl Fn(usize) -> [[f64; 2]; 2] + Sync) -> Vec<f64> {
    let locals: Vec<[f64; 6]> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let f = integral(e);
            let g = mesh.grads(e);
            let mut l = [0.0; 6];
            for p in 0..3 {
                for al in 0..2 {
                    l[p * 2 + al] = -(f[al][0] * g[p][0] + f[al][1] * g[p][1]);
                }
            }
            l
        })
        .collect();
    scatter_vector(mesh, &locals)
}

/// Scalar load `∫ s φ` for an element-wise constant source.
pub fn load_scalar_piecewise(mesh: &TriMesh, source: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_nodes()];
    for e in 0..mesh.num_elements() {
        let v = source(e) * mesh.area(e) / 3.0;
        for &n in &mesh.elements[e] {
            b[n] += v;
        }
    }
    b
}

fn scatter_vector(mesh: &TriMesh, locals: &[[f64; 6]]) -> Vec<f64> {
    let mut b = vec![0.0; 2 * mesh.num_nodes()];
    for (e, l) in locals.iter().enumerate() {
        for (p, &n) in mesh.elements[e].iter().enumerate() {
            b[2 * n] += l[2 * p];
            b[2 * n + 1] += l[2 * p + 1];
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::{mesh_unit_square, Region};
    use proptest::prelude::*;

    fn reference_triangle() -> TriMesh {
        TriMesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![Region::Material],
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn reference_element_matches_hand_computation() {
        // λ = μ = 1 on the unit right triangle, ∇φ = (-1,-1), (1,0), (0,1), area 1/2.
        // K[(p,α),(q,β)] = ½ (λ g_p^α g_q^β + μ (g_p·g_q) δ_αβ + μ g_p^β g_q^α)
        let g = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        let mut expect = [[0.0; 6]; 6];
        for p in 0..3 {
            for q in 0..3 {
                let gg = g[p][0] * g[q][0] + g[p][1] * g[q][1];
                for a in 0..2 {
                    for b in 0..2 {
                        let d = if a == b { 1.0 } else { 0.0 };
                        expect[p * 2 + a][q * 2 + b] = 0.5 * (g[p][a] * g[q][b] + gg * d + g[p][b] * g[q][a]);
                    }
                }
            }
        }
        let mesh = reference_triangle();
        let k = elasticity_element(mesh.grads(0), mesh.area(0), &Tensor4::isotropic(1.0, 1.0));
        for r in 0..6 {
            for c in 0..6 {
                assert!((k[r][c] - expect[r][c]).abs() < 1e-15, "({r},{c})");
            }
        }
        // spot values: K[(0,x),(0,x)] = ½(1 + 2 + 1) = 2
        assert!((k[0][0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_data_gives_zero_load() {
        let mesh = mesh_unit_square(4).unwrap();
        assert!(load_volume(&mesh, |_| [0.0, 0.0]).iter().all(|&v| v == 0.0));
        assert!(load_divergence(&mesh, |_| [[0.0; 2]; 2]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_asymmetric_tensor() {
        let mesh = reference_triangle();
        let mut a = Tensor4::isotropic(1.0, 1.0);
        a.set(0, 1, 0, 0, 0.3);
        assert!(matches!(assemble_elasticity(&mesh, |_| a, |_| true), Err(Error::Coefficient(_))));
    }

    #[test]
    fn rigid_motions_lie_in_the_kernel() {
        let mesh = mesh_unit_square(5).unwrap();
        let k = assemble_elasticity(&mesh, |_| Tensor4::isotropic(1.0, 1.0), |_| true).unwrap();
        assert!(k.symmetry_defect() < 1e-12);
        for field in [|_: Point| [1.0, 0.0], |_: Point| [0.0, 1.0], |p: Point| [-p[1], p[0]]] {
            let v: Vec<f64> = mesh.nodes.iter().flat_map(|&p| field(p)).collect();
            let kv = k.mul(&v);
            assert!(kv.iter().all(|x| x.abs() < 1e-12));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn stiffness_is_positive_semidefinite(x in proptest::collection::vec(-1.0f64..1.0, 72)) {
            let mesh = mesh_unit_square(5).unwrap();
            let k = assemble_elasticity(&mesh, |_| Tensor4::isotropic(1.0, 1.0), |_| true).unwrap();
            let kx = k.mul(&x);
            let q: f64 = kx.iter().zip(&x).map(|(a, b)| a * b).sum();
            prop_assert!(q >= -1e-12);
        }
    }
}
