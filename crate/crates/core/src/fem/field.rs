//! Piecewise-linear fields and point location.

use std::sync::Arc;

use crate::fem::mesh::TriMesh;
use crate::fem::quadrature::TriangleRule;
use crate::geometry::Point;

/// P1 field with one or two components, values interleaved by node.
#[derive(Debug, Clone)]
pub struct FieldOnMesh {
    pub mesh: Arc<TriMesh>,
    pub components: usize,
    pub values: Vec<f64>,
}

impl FieldOnMesh {
    pub fn new(mesh: Arc<TriMesh>, components: usize, values: Vec<f64>) -> Self {
        assert!(components == 1 || components == 2, "fields have one or two components");
        assert_eq!(values.len(), components * mesh.num_nodes(), "one value per node and component");
        FieldOnMesh { mesh, components, values }
    }

    pub fn zeros(mesh: Arc<TriMesh>, components: usize) -> Self {
        let n = mesh.num_nodes() * components;
        Self::new(mesh, components, vec![0.0; n])
    }

    /// Nodal interpolant of a vector function.
    pub fn interpolate(mesh: Arc<TriMesh>, f: impl Fn(Point) -> [f64; 2]) -> Self {
        let values = mesh.nodes.iter().flat_map(|&p| f(p)).collect();
        Self::new(mesh, 2, values)
    }

    #[inline]
    pub fn at_node(&self, node: usize) -> [f64; 2] {
        if self.components == 1 {
            [self.values[node], 0.0]
        } else {
            [self.values[2 * node], self.values[2 * node + 1]]
        }
    }

    /// Barycentric interpolation inside element `e`.
    #[inline]
    pub fn eval(&self, e: usize, bary: [f64; 3]) -> [f64; 2] {
        let tri = self.mesh.elements[e];
        let mut out = [0.0; 2];
        for (k, &n) in tri.iter().enumerate() {
            let v = self.at_node(n);
            out[0] += bary[k] * v[0];
            out[1] += bary[k] * v[1];
        }
        out
    }

    /// Element gradient, `g[α][j] = ∂_j u^α`; row 1 is zero for scalars.
    #[inline]
    pub fn grad(&self, e: usize) -> [[f64; 2]; 2] {
        let tri = self.mesh.elements[e];
        let g = self.mesh.grads(e);
        let mut out = [[0.0; 2]; 2];
        for k in 0..3 {
            let v = self.at_node(tri[k]);
            for a in 0..self.components {
                out[a][0] += v[a] * g[k][0];
                out[a][1] += v[a] * g[k][1];
            }
        }
        out
    }

    /// `(∫ |u|²)^{1/2}` over the elements with `active(e)`.
    pub fn l2_norm_where(&self, active: impl Fn(usize) -> bool) -> f64 {
        let rule = TriangleRule::degree2();
        let mut s = 0.0;
        for e in 0..self.mesh.num_elements() {
            if !active(e) {
                continue;
            }
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                let v = self.eval(e, *b);
                s += w * self.mesh.area(e) * (v[0] * v[0] + v[1] * v[1]);
            }
        }
        s.sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_where(|_| true)
    }

    /// `(∫ |∇u|²)^{1/2}` over the elements with `active(e)`.
    pub fn h1_seminorm_where(&self, active: impl Fn(usize) -> bool) -> f64 {
        let mut s = 0.0;
        for e in 0..self.mesh.num_elements() {
            if active(e) {
                let g = self.grad(e);
                s += self.mesh.area(e) * g.iter().flatten().map(|v| v * v).sum::<f64>();
            }
        }
        s.sqrt()
    }

    pub fn h1_seminorm(&self) -> f64 {
        self.h1_seminorm_where(|_| true)
    }

    /// `∫ u^α` per component over the elements with `active(e)`.
    pub fn integral_where(&self, active: impl Fn(usize) -> bool) -> [f64; 2] {
        let mut s = [0.0; 2];
        for e in 0..self.mesh.num_elements() {
            if active(e) {
                let c = self.eval(e, [1.0 / 3.0; 3]);
                s[0] += self.mesh.area(e) * c[0];
                s[1] += self.mesh.area(e) * c[1];
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Uniform bin grid over element bounding boxes.
#[derive(Debug, Clone)]
pub struct Locator {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
}

impl Locator {
    pub fn new(mesh: &TriMesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &mesh.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let ne = mesh.num_elements().max(1) as f64;
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300);
        let cell = span / ne.sqrt().ceil().max(1.0);
        let nx = (((hi[0] - lo[0]) / cell).ceil() as usize).max(1);
        let ny = (((hi[1] - lo[1]) / cell).ceil() as usize).max(1);
        let mut bins = vec![Vec::new(); nx * ny];
        for e in 0..mesh.num_elements() {
            let v = mesh.vertices(e);
            let bx = |x: f64| (((x - lo[0]) / cell).floor().max(0.0) as usize).min(nx - 1);
            let by = |y: f64| (((y - lo[1]) / cell).floor().max(0.0) as usize).min(ny - 1);
            let (x0, x1) = (v.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min), v.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max));
            let (y0, y1) = (v.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min), v.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max));
            for j in by(y0)..=by(y1) {
                for i in bx(x0)..=bx(x1) {
                    bins[j * nx + i].push(e as u32);
                }
            }
        }
        Locator { origin: lo, cell, nx, ny, bins }
    }

    /// Element containing `x` and its barycentric coordinates, if any.
    pub fn locate(&self, mesh: &TriMesh, x: Point) -> Option<(usize, [f64; 3])> {
        let i = ((x[0] - self.origin[0]) / self.cell).floor();
        let j = ((x[1] - self.origin[1]) / self.cell).floor();
        if i < -0.5 || j < -0.5 {
            return None;
        }
        let (i, j) = ((i.max(0.0) as usize).min(self.nx - 1), (j.max(0.0) as usize).min(self.ny - 1));
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &e in &self.bins[j * self.nx + i] {
            let e = e as usize;
            let b = barycentric(mesh, e, x);
            let worst = b.iter().fold(f64::INFINITY, |m, v| m.min(*v));
            if worst >= -1e-12 {
                return Some((e, b));
            }
            if best.as_ref().map_or(true, |(_, _, w)| worst > *w) {
                best = Some((e, b, worst));
            }
        }
        // tolerate round-off on shared edges
        best.filter(|(_, _, w)| *w > -1e-9).map(|(e, b, _)| (e, b))
    }
}

pub fn barycentric(mesh: &TriMesh, e: usize, x: Point) -> [f64; 3] {
    let [a, _, _] = mesh.vertices(e);
    let g = mesh.grads(e);
    let d = [x[0] - a[0], x[1] - a[1]];
    let l1 = g[1][0] * d[0] + g[1][1] * d[1];
    let l2 = g[2][0] * d[0] + g[2][1] * d[1];
    [1.0 - l1 - l2, l1, l2]
}
