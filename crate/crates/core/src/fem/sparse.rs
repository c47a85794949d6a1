//! Compressed sparse row matrices and a Jacobi-preconditioned conjugate
//! gradient solver.
//!
//! Reductions are summed in fixed-size chunks in index order, so results do
//! not depend on the number of threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

const CHUNK: usize = 8192;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n x n` matrix, summing duplicate entries in input order.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        // stable sort keeps the summation order of duplicates fixed
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[a..b].binary_search(&j) {
            Ok(k) => self.values[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`, rows in parallel.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().with_min_len(1024).for_each(|(i, yi)| {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        });
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `max |a_ij - a_ji|` relative to `max |a_ij|`.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }
}

/// Deterministic parallel dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().zip(x.par_iter()).with_min_len(CHUNK).for_each(|(y, x)| *y += alpha * x);
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { rel_tol: 1e-10, max_iter: 20_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖` of the returned iterate, recomputed explicitly.
    pub residual: f64,
}

/// Orthonormal basis of a known null space of a symmetric matrix. CG then
/// runs on its orthogonal complement.
#[derive(Debug, Clone, Default)]
pub struct NullSpace {
    pub basis: Vec<Vec<f64>>,
}

impl NullSpace {
    pub fn new(vectors: Vec<Vec<f64>>) -> Self {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for mut v in vectors {
            for q in &basis {
                let c = dot(&v, q);
                axpy(-c, q, &mut v);
            }
            let n = norm(&v);
            if n > 0.0 {
                v.iter_mut().for_each(|x| *x /= n);
                basis.push(v);
            }
        }
        NullSpace { basis }
    }

    pub fn project(&self, v: &mut [f64]) {
        for q in &self.basis {
            let c = dot(v, q);
            axpy(-c, q, v);
        }
    }
}

/// Solves `A x = b` by Jacobi-preconditioned CG starting from `x`.
///
/// With a null space the right-hand side is projected onto the range and the
/// returned solution is orthogonal to the null space. The recurrence is
/// restarted if the explicitly recomputed residual misses the tolerance.
pub fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], null: Option<&NullSpace>, opts: CgOptions) -> Result<CgOutcome> {
    let mut rhs = b.to_vec();
    if let Some(ns) = null {
        ns.project(&mut rhs);
        ns.project(x);
    }
    let bnorm = norm(&rhs);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome { iterations: 0, residual: 0.0 });
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for _restart in 0..4 {
        iterations += cg_sweep(a, &rhs, x, &inv_diag, null, bnorm, opts, opts.max_iter.saturating_sub(iterations))?;
        if let Some(ns) = null {
            ns.project(x);
        }
        let r = residual_vector(a, &rhs, x);
        residual = norm(&r) / bnorm;
        if residual <= opts.rel_tol || iterations >= opts.max_iter {
            break;
        }
    }
    if residual > opts.rel_tol {
        return Err(Error::NotConverged { iterations, residual });
    }
    Ok(CgOutcome { iterations, residual })
}

fn residual_vector(a: &CsrMatrix, rhs: &[f64], x: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; a.n];
    a.matvec(x, &mut r);
    r.par_iter_mut().zip(rhs.par_iter()).with_min_len(CHUNK).for_each(|(r, b)| *r = b - *r);
    r
}

#[allow(clippy::too_many_arguments)]
fn cg_sweep(
    a: &CsrMatrix,
    rhs: &[f64],
    x: &mut [f64],
    inv_diag: &[f64],
    null: Option<&NullSpace>,
    bnorm: f64,
    opts: CgOptions,
    budget: usize,
) -> Result<usize> {
    let n = a.n;
    let precondition = |r: &[f64], z: &mut [f64]| {
        z.par_iter_mut().zip(r.par_iter()).zip(inv_diag.par_iter()).with_min_len(CHUNK).for_each(|((z, r), d)| *z = r * d);
        if let Some(ns) = null {
            ns.project(z);
        }
    };
    let mut r = residual_vector(a, rhs, x);
    if let Some(ns) = null {
        ns.project(&mut r);
    }
    // aim a little below the target so the recomputed residual passes
    let target = 0.5 * opts.rel_tol;
    if norm(&r) / bnorm <= target {
        return Ok(0);
    }
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut it = 0;
    while it < budget {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Singular(format!("CG breakdown: pᵀAp = {pap:e} at iteration {it}")));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        it += 1;
        if norm(&r) / bnorm <= target {
            break;
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).with_min_len(CHUNK).for_each(|(p, z)| *p = z + beta * *p);
    }
    Ok(it)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, vec![(1, 0, 1.0), (0, 0, 2.0), (1, 0, 0.5), (0, 1, 3.0)]);
        assert_eq!(m.get(1, 0), 1.5);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 3);
    }

    #[test]
    fn cg_solves_tridiagonal() {
        let n = 200;
        let a = laplace_1d(n);
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let b = a.mul(&exact);
        let mut x = vec![0.0; n];
        let out = pcg(&a, &b, &mut x, None, CgOptions::default()).unwrap();
        assert!(out.residual <= 1e-10);
        for (p, q) in x.iter().zip(&exact) {
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn cg_on_singular_system_with_null_space() {
        // periodic 1D Laplacian: kernel is the constants
        let n = 64;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            t.push((i, (i + 1) % n, -1.0));
            t.push((i, (i + n - 1) % n, -1.0));
        }
        let a = CsrMatrix::from_triplets(n, t);
        let ns = NullSpace::new(vec![vec![1.0; n]]);
        let b: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos() + 0.3).collect();
        let mut x = vec![0.0; n];
        let out = pcg(&a, &b, &mut x, Some(&ns), CgOptions::default()).unwrap();
        assert!(out.residual <= 1e-10);
        assert!(x.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let a = laplace_1d(500);
        let b = vec![1.0; 500];
        let mut x = vec![0.0; 500];
        let err = pcg(&a, &b, &mut x, None, CgOptions { rel_tol: 1e-12, max_iter: 3 }).unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 3, .. }));
    }
}
