//! Linear systems with Dirichlet, periodic and mean-zero constraints.
//!
//! Dirichlet values and periodic identifications are eliminated through a
//! DOF map. Mean-zero solves remove the constant null space inside CG and
//! then subtract the area-weighted mean, which is exact for P1 fields.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::sparse::{pcg, CgOptions, CgOutcome, CsrMatrix, NullSpace};

/// Above this many reduced unknowns the dense method refuses to run.
pub const DIRECT_LIMIT: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    CgJacobi,
    Direct,
}

#[derive(Debug, Clone, Default)]
pub struct Constraints {
    /// `(dof, value)`; DOF `node * components + α`.
    pub dirichlet: Vec<(usize, f64)>,
    /// `(slave, master)` node pairs, applied to every component.
    pub periodic: Vec<(usize, usize)>,
    /// Per-node weights `∫ φ_i`; when present each component has zero mean.
    pub mean_zero: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dof {
    Free(usize),
    Fixed(f64),
}

/// `K` restricted to the free unknowns, reusable for many right-hand sides.
#[derive(Debug, Clone)]
pub struct ReducedOperator {
    pub components: usize,
    pub n_nodes: usize,
    map: Vec<Dof>,
    pub matrix: CsrMatrix,
    /// Couplings from free rows to fixed DOFs, applied to the Dirichlet lift.
    lift: Vec<(usize, f64)>,
    mean_zero: Option<Vec<f64>>,
    null: Option<NullSpace>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Full nodal vector, interleaved by component.
    pub values: Vec<f64>,
    pub outcome: CgOutcome,
}

impl ReducedOperator {
    pub fn new(k: &CsrMatrix, components: usize, constraints: &Constraints) -> Result<Self> {
        if k.n % components != 0 {
            return Err(Error::InvalidArgument("matrix size is not a multiple of the component count".into()));
        }
        let n_nodes = k.n / components;
        let mut rep: Vec<usize> = (0..n_nodes).collect();
        for &(s, m) in &constraints.periodic {
            if s >= n_nodes || m >= n_nodes {
                return Err(Error::InvalidArgument("periodic pair out of range".into()));
            }
            rep[s] = m;
        }
        for i in 0..n_nodes {
            let mut r = rep[i];
            while rep[r] != r {
                r = rep[r];
            }
            rep[i] = r;
        }
        let mut fixed: Vec<Option<f64>> = vec![None; k.n];
        for &(d, v) in &constraints.dirichlet {
            if d >= k.n {
                return Err(Error::InvalidArgument("Dirichlet DOF out of range".into()));
            }
            fixed[d] = Some(v);
        }
        let mut map = vec![Dof::Fixed(0.0); k.n];
        let mut next = 0;
        for node in 0..n_nodes {
            if rep[node] != node {
                continue;
            }
            for a in 0..components {
                let d = node * components + a;
                map[d] = match fixed[d] {
                    Some(v) => Dof::Fixed(v),
                    None => {
                        next += 1;
                        Dof::Free(next - 1)
                    }
                };
            }
        }
        for node in 0..n_nodes {
            if rep[node] != node {
                for a in 0..components {
                    map[node * components + a] = map[rep[node] * components + a];
                }
            }
        }
        let n_free = next;
        let mut triplets = Vec::with_capacity(k.nnz());
        let mut lift = Vec::new();
        for i in 0..k.n {
            let Dof::Free(ri) = map[i] else { continue };
            for (j, v) in k.row(i) {
                match map[j] {
                    Dof::Free(rj) => triplets.push((ri, rj, v)),
                    Dof::Fixed(g) => {
                        if g != 0.0 {
                            lift.push((ri, v * g));
                        }
                    }
                }
            }
        }
        let matrix = CsrMatrix::from_triplets(n_free, triplets);

        let null = if constraints.mean_zero.is_some() {
            if !constraints.dirichlet.is_empty() {
                return Err(Error::InvalidArgument("mean-zero and Dirichlet constraints are exclusive".into()));
            }
            let vecs = (0..components)
                .map(|a| {
                    let mut v = vec![0.0; n_free];
                    for node in 0..n_nodes {
                        if let Dof::Free(r) = map[node * components + a] {
                            v[r] = 1.0;
                        }
                    }
                    v
                })
                .collect();
            Some(NullSpace::new(vecs))
        } else {
            None
        };
        if let Some(w) = &constraints.mean_zero {
            if w.len() != n_nodes {
                return Err(Error::InvalidArgument("mean-zero weights need one entry per node".into()));
            }
        }
        let op = ReducedOperator { components, n_nodes, map, matrix, lift, mean_zero: constraints.mean_zero.clone(), null };
        if op.null.is_none() && constraints.dirichlet.is_empty() {
            op.reject_translation_kernel()?;
        }
        Ok(op)
    }

    pub fn free_dofs(&self) -> usize {
        self.matrix.n
    }

    /// Fails if a rigid translation lies in the kernel.
    fn reject_translation_kernel(&self) -> Result<()> {
        let scale = self.matrix.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for a in 0..self.components {
            let mut t = vec![0.0; self.matrix.n];
            for node in 0..self.n_nodes {
                if let Dof::Free(r) = self.map[node * self.components + a] {
                    t[r] = 1.0;
                }
            }
            let kt = self.matrix.mul(&t);
            let worst = kt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if worst <= 1e-12 * scale {
                return Err(Error::Singular(format!(
                    "component {a} translations are in the kernel; add a Dirichlet set or a mean-zero constraint"
                )));
            }
        }
        Ok(())
    }

    /// Reduced right-hand side `Pᵀ (b - K g)`.
    fn reduce_rhs(&self, b: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.matrix.n];
        for (i, bi) in b.iter().enumerate() {
            if let Dof::Free(ri) = self.map[i] {
                r[ri] += bi;
            }
        }
        for &(ri, v) in &self.lift {
            r[ri] -= v;
        }
        r
    }

    fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full: Vec<f64> = self
            .map
            .iter()
            .map(|d| match *d {
                Dof::Free(r) => x[r],
                Dof::Fixed(g) => g,
            })
            .collect();
        if let Some(w) = &self.mean_zero {
            let total: f64 = w.iter().sum();
            for a in 0..self.components {
                let mean: f64 =
                    (0..self.n_nodes).map(|n| w[n] * full[n * self.components + a]).sum::<f64>() / total;
                for n in 0..self.n_nodes {
                    full[n * self.components + a] -= mean;
                }
            }
        }
        full
    }

    pub fn solve(&self, b: &[f64], method: SolveMethod) -> Result<Solution> {
        if b.len() != self.map.len() {
            return Err(Error::InvalidArgument("right-hand side length mismatch".into()));
        }
        let rhs = self.reduce_rhs(b);
        let (x, outcome) = match method {
            SolveMethod::CgJacobi => {
                let mut x = vec![0.0; self.matrix.n];
                let out = pcg(&self.matrix, &rhs, &mut x, self.null.as_ref(), CgOptions::default())?;
                (x, out)
            }
            SolveMethod::Direct => self.solve_dense(&rhs)?,
        };
        Ok(Solution { values: self.expand(&x), outcome })
    }

    /// Dense LU; mean-zero enters as bordered Lagrange rows.
    fn solve_dense(&self, rhs: &[f64]) -> Result<(Vec<f64>, CgOutcome)> {
        let n = self.matrix.n;
        if n > DIRECT_LIMIT {
            return Err(Error::InvalidArgument(format!("direct solve limited to {DIRECT_LIMIT} unknowns, got {n}")));
        }
        let extra = self.null.as_ref().map_or(0, |ns| ns.basis.len());
        let mut m = DMatrix::<f64>::zeros(n + extra, n + extra);
        for i in 0..n {
            for (j, v) in self.matrix.row(i) {
                m[(i, j)] = v;
            }
        }
        let mut b = DVector::<f64>::zeros(n + extra);
        b.rows_mut(0, n).copy_from_slice(rhs);
        if let Some(ns) = &self.null {
            // project so the bordered system is consistent
            let mut proj = rhs.to_vec();
            ns.project(&mut proj);
            b.rows_mut(0, n).copy_from_slice(&proj);
            for (k, q) in ns.basis.iter().enumerate() {
                for i in 0..n {
                    m[(i, n + k)] = q[i];
                    m[(n + k, i)] = q[i];
                }
            }
        }
        let bn = b.rows(0, n).norm();
        let sol = m
            .clone()
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Singular("dense factorization failed".into()))?;
        let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
        let kx = self.matrix.mul(&x);
        let res = kx.iter().zip(b.rows(0, n).iter()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let residual = if bn > 0.0 { res / bn } else { res };
        Ok((x, CgOutcome { iterations: 0, residual }))
    }
}

/// A stiffness matrix, one load vector and its constraints.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub components: usize,
    pub constraints: Constraints,
}

/// Solves a [`SparseSystem`]; the result is the full interleaved nodal vector.
pub fn solve_system(sys: &SparseSystem, method: SolveMethod) -> Result<Solution> {
    let op = ReducedOperator::new(&sys.matrix, sys.components, &sys.constraints)?;
    let sol = op.solve(&sys.rhs, method)?;
    if sol.outcome.residual > 1e-10 {
        return Err(Error::NotConverged { iterations: sol.outcome.iterations, residual: sol.outcome.residual });
    }
    Ok(sol)
}
