//! Triangle meshes of the perforated cell, the full cell and the macroscopic
//! domain.
//!
//! Cells with a disk hole use an O-grid: rings of `4m` nodes interpolate
//! between the (polygonal) hole boundary and `∂Y`, so the nodes on opposite
//! faces of `∂Y` coincide exactly. The hole itself is meshed by more rings and
//! a structured core. Nodes touched by material elements always come first,
//! so the perforated mesh is a prefix of the full mesh and both share node
//! numbering.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MacroDomain, PerforationSpec, Point};

/// Elements with a smaller interior angle fail the quality gate.
pub const MIN_ANGLE_DEG: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    DirichletOuter,
    NeumannHole,
    PeriodicMaster,
    PeriodicSlave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Material,
    Hole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// P1 triangle mesh with boundary tags and periodic identifications.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub nodes: Vec<Point>,
    pub elements: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// `(slave, master)`; the slave is the master translated by one period.
    pub periodic_pairs: Vec<(usize, usize)>,
    /// Number of leading nodes that belong to material elements.
    pub material_nodes: usize,
    areas: Vec<f64>,
    grads: Vec<[[f64; 2]; 3]>,
}

impl TriMesh {
    pub fn new(
        nodes: Vec<Point>,
        elements: Vec<[usize; 3]>,
        regions: Vec<Region>,
        boundary_edges: Vec<BoundaryEdge>,
        periodic_pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if regions.len() != elements.len() {
            return Err(Error::Mesh("one region tag per element is required".into()));
        }
        let mut areas = Vec::with_capacity(elements.len());
        let mut grads = Vec::with_capacity(elements.len());
        for (e, tri) in elements.iter().enumerate() {
            if tri.iter().any(|&v| v >= nodes.len()) {
                return Err(Error::Mesh(format!("element {e} references a missing node")));
            }
            let [p0, p1, p2] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
            let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            if !(det > 0.0) {
                return Err(Error::Mesh(format!("element {e} has non-positive signed area {}", det / 2.0)));
            }
            let inv = 1.0 / det;
            // ∇λ_k = rot(p_{k+2} - p_{k+1}) / det
            let g = [
                [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
                [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
                [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
            ];
            areas.push(det / 2.0);
            grads.push(g);
        }
        let mut material_nodes = 0;
        for (tri, reg) in elements.iter().zip(&regions) {
            if *reg == Region::Material {
                for &v in tri {
                    material_nodes = material_nodes.max(v + 1);
                }
            }
        }
        Ok(Self { nodes, elements, regions, boundary_edges, periodic_pairs, material_nodes, areas, grads })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    #[inline]
    pub fn area(&self, e: usize) -> f64 {
        self.areas[e]
    }

    /// Gradients of the three barycentric coordinates of element `e`.
    #[inline]
    pub fn grads(&self, e: usize) -> &[[f64; 2]; 3] {
        &self.grads[e]
    }

    #[inline]
    pub fn vertices(&self, e: usize) -> [Point; 3] {
        let t = self.elements[e];
        [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]]
    }

    pub fn centroid(&self, e: usize) -> Point {
        let [a, b, c] = self.vertices(e);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Maps barycentric coordinates of element `e` to a point.
    #[inline]
    pub fn point_at(&self, e: usize, bary: [f64; 3]) -> Point {
        let [a, b, c] = self.vertices(e);
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn region_area(&self, region: Region) -> f64 {
        self.areas.iter().zip(&self.regions).filter(|(_, r)| **r == region).map(|(a, _)| a).sum()
    }

    pub fn max_edge(&self) -> f64 {
        let mut h = 0.0f64;
        for e in 0..self.num_elements() {
            let v = self.vertices(e);
            for k in 0..3 {
                let (p, q) = (v[k], v[(k + 1) % 3]);
                h = h.max(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
            }
        }
        h
    }

    /// Smallest interior angle over all elements, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        (0..self.num_elements()).map(|e| triangle_min_angle(self.vertices(e))).fold(180.0, f64::min)
    }

    /// Elements of the material region with the leading nodes only.
    pub fn material_submesh(&self) -> Result<TriMesh> {
        let nm = self.material_nodes;
        let mut elements = Vec::new();
        for (tri, reg) in self.elements.iter().zip(&self.regions) {
            if *reg == Region::Material {
                elements.push(*tri);
            }
        }
        let regions = vec![Region::Material; elements.len()];
        let edges = self
            .boundary_edges
            .iter()
            .filter(|b| b.nodes[0] < nm && b.nodes[1] < nm)
            .copied()
            .collect();
        let pairs = self.periodic_pairs.iter().filter(|(s, m)| *s < nm && *m < nm).copied().collect();
        TriMesh::new(self.nodes[..nm].to_vec(), elements, regions, edges, pairs)
    }

    /// Nodes carrying the given boundary tag, sorted and deduplicated.
    pub fn tagged_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|b| b.tag == tag)
            .flat_map(|b| b.nodes)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Representative node of every node after periodic identification.
    pub fn periodic_representatives(&self) -> Vec<usize> {
        let mut rep: Vec<usize> = (0..self.num_nodes()).collect();
        for &(s, m) in &self.periodic_pairs {
            rep[s] = m;
        }
        // masters are never slaves, so one pass resolves every chain
        for i in 0..rep.len() {
            let mut r = rep[i];
            while rep[r] != r {
                r = rep[r];
            }
            rep[i] = r;
        }
        rep
    }

    /// Per-node lumped mass (one third of the adjacent element areas).
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_nodes()];
        for (e, tri) in self.elements.iter().enumerate() {
            let a = self.areas[e] / 3.0;
            for &v in tri {
                m[v] += a;
            }
        }
        m
    }
}

pub fn triangle_min_angle(v: [Point; 3]) -> f64 {
    let mut best = 180.0f64;
    for k in 0..3 {
        let p = v[k];
        let a = [v[(k + 1) % 3][0] - p[0], v[(k + 1) % 3][1] - p[1]];
        let b = [v[(k + 2) % 3][0] - p[0], v[(k + 2) % 3][1] - p[1]];
        let cos = (a[0] * b[0] + a[1] * b[1]) / ((a[0].hypot(a[1])) * (b[0].hypot(b[1])));
        best = best.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
    }
    best
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Splits the counter-clockwise quad `q` along the diagonal that maximizes
/// the smaller of the two triangles' minimum angles.
fn split_quad(nodes: &[Point], q: [usize; 4], out: &mut Vec<[usize; 3]>) {
    let a = [[q[0], q[1], q[2]], [q[0], q[2], q[3]]];
    let b = [[q[0], q[1], q[3]], [q[1], q[2], q[3]]];
    let score = |tris: &[[usize; 3]; 2]| {
        tris.iter()
            .map(|t| {
                let v = [nodes[t[0]], nodes[t[1]], nodes[t[2]]];
                if signed_area(v[0], v[1], v[2]) <= 0.0 {
                    -1.0
                } else {
                    triangle_min_angle(v)
                }
            })
            .fold(180.0, f64::min)
    };
    if score(&a) >= score(&b) {
        out.extend_from_slice(&a);
    } else {
        out.extend_from_slice(&b);
    }
}

/// Number of segments per side of `Y` for a target mesh size.
pub fn segments_for(h: f64) -> usize {
    let inv = 1.0 / h;
    let r = inv.round();
    if (inv - r).abs() < 1e-9 * inv.max(1.0) {
        r as usize
    } else {
        inv.ceil() as usize
    }
}

#[inline]
fn grid_coord(t: usize, m: usize) -> f64 {
    -0.5 + t as f64 / m as f64
}

/// Lattice position `(a, b) ∈ {0..m}²` of the `k`-th node on `∂Y`,
/// counter-clockwise from the corner `(1/2, -1/2)`.
fn square_lattice(k: usize, m: usize) -> (usize, usize) {
    let side = k / m;
    let t = k % m;
    match side {
        0 => (m, t),
        1 => (m - t, m),
        2 => (0, m - t),
        _ => (t, 0),
    }
}

/// Geometric grading of `layers` spacings whose last/first ratio is `ratio`.
fn graded_fractions(layers: usize, ratio: f64) -> Vec<f64> {
    let q = if layers > 1 { ratio.powf(1.0 / (layers - 1) as f64) } else { 1.0 };
    let w: Vec<f64> = (0..layers).map(|l| q.powi(l as i32)).collect();
    let total: f64 = w.iter().sum();
    let mut s = Vec::with_capacity(layers + 1);
    let mut acc = 0.0;
    s.push(0.0);
    for (l, wl) in w.iter().enumerate() {
        acc += wl / total;
        s.push(if l + 1 == layers { 1.0 } else { acc });
    }
    s
}

fn periodic_pairs_from_lattice(lattice: &HashMap<(usize, usize), usize>, m: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut keys: Vec<_> = lattice.keys().copied().collect();
    keys.sort_unstable();
    for (a, b) in keys {
        let (ma, mb) = (a % m, b % m);
        if (ma, mb) != (a, b) {
            pairs.push((lattice[&(a, b)], lattice[&(ma, mb)]));
        }
    }
    pairs
}

fn cell_face_edges(lattice: &HashMap<(usize, usize), usize>, m: usize) -> Vec<BoundaryEdge> {
    let mut edges = Vec::with_capacity(4 * m);
    for t in 0..m {
        // bottom and left are masters, top and right are slaves
        edges.push(BoundaryEdge { nodes: [lattice[&(t, 0)], lattice[&(t + 1, 0)]], tag: BoundaryTag::PeriodicMaster });
        edges.push(BoundaryEdge { nodes: [lattice[&(0, t)], lattice[&(0, t + 1)]], tag: BoundaryTag::PeriodicMaster });
        edges.push(BoundaryEdge { nodes: [lattice[&(t, m)], lattice[&(t + 1, m)]], tag: BoundaryTag::PeriodicSlave });
        edges.push(BoundaryEdge { nodes: [lattice[&(m, t)], lattice[&(m, t + 1)]], tag: BoundaryTag::PeriodicSlave });
    }
    edges
}

/// Mesh of the whole cell `Y` with hole elements tagged [`Region::Hole`].
pub fn mesh_unit_cell_full(spec: &PerforationSpec, h: f64) -> Result<TriMesh> {
    spec.validate()?;
    if !(h > 0.0) {
        return Err(Error::Mesh(format!("mesh size must be positive, got {h}")));
    }
    let m = segments_for(h);
    let mesh = if spec.has_hole() {
        let r = spec.hole_radius;
        if h > r {
            return Err(Error::Mesh(format!("hole under-resolved: h = {h} exceeds the hole radius {r}")));
        }
        if h >= spec.gap() / 2.0 {
            return Err(Error::Mesh(format!("h = {h} must be below half the hole gap {}", spec.gap() / 2.0)));
        }
        ogrid_cell(spec, m)?
    } else {
        structured_cell(m)?
    };
    let angle = mesh.min_angle_deg();
    if angle < MIN_ANGLE_DEG {
        return Err(Error::Mesh(format!("minimum angle {angle:.2}° is below the {MIN_ANGLE_DEG}° gate")));
    }
    Ok(mesh)
}

/// Mesh of the perforated cell `Y ∩ ω`.
pub fn mesh_unit_cell(spec: &PerforationSpec, h: f64) -> Result<TriMesh> {
    mesh_unit_cell_full(spec, h)?.material_submesh()
}

fn structured_cell(m: usize) -> Result<TriMesh> {
    let mut nodes = Vec::with_capacity((m + 1) * (m + 1));
    let mut lattice = HashMap::new();
    for b in 0..=m {
        for a in 0..=m {
            if a == 0 || b == 0 || a == m || b == m {
                lattice.insert((a, b), nodes.len());
            }
            nodes.push([grid_coord(a, m), grid_coord(b, m)]);
        }
    }
    let id = |a: usize, b: usize| b * (m + 1) + a;
    let mut elements = Vec::with_capacity(2 * m * m);
    for b in 0..m {
        for a in 0..m {
            elements.push([id(a, b), id(a + 1, b), id(a + 1, b + 1)]);
            elements.push([id(a, b), id(a + 1, b + 1), id(a, b + 1)]);
        }
    }
    let regions = vec![Region::Material; elements.len()];
    let edges = cell_face_edges(&lattice, m);
    let pairs = periodic_pairs_from_lattice(&lattice, m);
    TriMesh::new(nodes, elements, regions, edges, pairs)
}

fn ogrid_cell(spec: &PerforationSpec, m: usize) -> Result<TriMesh> {
    let r = spec.hole_radius;
    let c = spec.center;
    let k_ring = 4 * m;
    let square: Vec<Point> = (0..k_ring)
        .map(|k| {
            let (a, b) = square_lattice(k, m);
            [grid_coord(a, m), grid_coord(b, m)]
        })
        .collect();
    let circle: Vec<Point> = (0..k_ring)
        .map(|k| {
            let t = -PI / 4.0 + 2.0 * PI * k as f64 / k_ring as f64;
            [c[0] + r * t.cos(), c[1] + r * t.sin()]
        })
        .collect();

    // radial layers between the hole and ∂Y
    let tangential_hole = 2.0 * PI * r / k_ring as f64;
    let tangential_face = 1.0 / m as f64;
    let span = 0.5 * ((0.5 - r) + (0.5f64.hypot(0.5) - r));
    let layers = ((span / (0.5 * (tangential_hole + tangential_face))).round() as usize).max(1);
    let s = graded_fractions(layers, tangential_face / tangential_hole);

    let mut nodes = Vec::new();
    for &sl in &s {
        for k in 0..k_ring {
            let (p, q) = (circle[k], square[k]);
            nodes.push([p[0] + sl * (q[0] - p[0]), p[1] + sl * (q[1] - p[1])]);
        }
    }
    // the outermost ring must reproduce the lattice coordinates bit for bit
    let outer = layers * k_ring;
    for k in 0..k_ring {
        nodes[outer + k] = square[k];
    }
    let ring = |l: usize, k: usize| l * k_ring + (k % k_ring);
    let mut elements = Vec::new();
    for l in 0..layers {
        for k in 0..k_ring {
            split_quad(&nodes, [ring(l, k), ring(l + 1, k), ring(l + 1, k + 1), ring(l, k + 1)], &mut elements);
        }
    }
    let n_material_elems = elements.len();

    let mut lattice = HashMap::new();
    for k in 0..k_ring {
        lattice.insert(square_lattice(k, m), ring(layers, k));
    }
    let mut edges = cell_face_edges(&lattice, m);
    for k in 0..k_ring {
        edges.push(BoundaryEdge { nodes: [ring(0, k), ring(0, k + 1)], tag: BoundaryTag::NeumannHole });
    }
    let pairs = periodic_pairs_from_lattice(&lattice, m);

    // hole: rings from the circle to an inner square, then a structured core
    let half = 0.5 * r;
    let core_spacing = 2.0 * half / m as f64;
    let inner_span = 0.5 * ((r - half) + (r - half * std::f64::consts::SQRT_2));
    let inner_layers = ((inner_span / (0.5 * (tangential_hole + core_spacing))).round() as usize).max(1);
    let inner_sq: Vec<Point> = square.iter().map(|q| [c[0] + 2.0 * half * q[0], c[1] + 2.0 * half * q[1]]).collect();
    let hole_base = nodes.len();
    for l in 1..=inner_layers {
        let sl = l as f64 / inner_layers as f64;
        for k in 0..k_ring {
            let (p, q) = (circle[k], inner_sq[k]);
            nodes.push([p[0] + sl * (q[0] - p[0]), p[1] + sl * (q[1] - p[1])]);
        }
    }
    let hring = |l: usize, k: usize| if l == 0 { ring(0, k) } else { hole_base + (l - 1) * k_ring + (k % k_ring) };
    for l in 0..inner_layers {
        for k in 0..k_ring {
            // moving inwards flips orientation
            split_quad(&nodes, [hring(l, k), hring(l, k + 1), hring(l + 1, k + 1), hring(l + 1, k)], &mut elements);
        }
    }
    let mut core = HashMap::new();
    for k in 0..k_ring {
        core.insert(square_lattice(k, m), hring(inner_layers, k));
    }
    for b in 1..m {
        for a in 1..m {
            core.insert((a, b), nodes.len());
            nodes.push([c[0] + 2.0 * half * grid_coord(a, m), c[1] + 2.0 * half * grid_coord(b, m)]);
        }
    }
    for b in 0..m {
        for a in 0..m {
            let q = [core[&(a, b)], core[&(a + 1, b)], core[&(a + 1, b + 1)], core[&(a, b + 1)]];
            if (a + b) % 2 == 0 {
                elements.push([q[0], q[1], q[2]]);
                elements.push([q[0], q[2], q[3]]);
            } else {
                elements.push([q[0], q[1], q[3]]);
                elements.push([q[1], q[2], q[3]]);
            }
        }
    }
    let mut regions = vec![Region::Material; n_material_elems];
    regions.resize(elements.len(), Region::Hole);
    TriMesh::new(nodes, elements, regions, edges, pairs)
}

/// Structured mesh of the unit square `(0,1)²` with `k` segments per side,
/// all boundary edges tagged Dirichlet.
pub fn mesh_unit_square(k: usize) -> Result<TriMesh> {
    let mut nodes = Vec::with_capacity((k + 1) * (k + 1));
    for b in 0..=k {
        for a in 0..=k {
            nodes.push([a as f64 / k as f64, b as f64 / k as f64]);
        }
    }
    let id = |a: usize, b: usize| b * (k + 1) + a;
    let mut elements = Vec::with_capacity(2 * k * k);
    for b in 0..k {
        for a in 0..k {
            elements.push([id(a, b), id(a + 1, b), id(a + 1, b + 1)]);
            elements.push([id(a, b), id(a + 1, b + 1), id(a, b + 1)]);
        }
    }
    let mut edges = Vec::with_capacity(4 * k);
    for t in 0..k {
        for nodes2 in [
            [id(t, 0), id(t + 1, 0)],
            [id(t, k), id(t + 1, k)],
            [id(0, t), id(0, t + 1)],
            [id(k, t), id(k, t + 1)],
        ] {
            edges.push(BoundaryEdge { nodes: nodes2, tag: BoundaryTag::DirichletOuter });
        }
    }
    let regions = vec![Region::Material; elements.len()];
    TriMesh::new(nodes, elements, regions, edges, Vec::new())
}

/// Locates a point in a [`mesh_unit_square`] mesh with `k` segments.
/// Returns the element and barycentric coordinates.
pub fn locate_in_unit_square(k: usize, x: Point) -> (usize, [f64; 3]) {
    let kf = k as f64;
    let fx = (x[0] * kf).clamp(0.0, kf);
    let fy = (x[1] * kf).clamp(0.0, kf);
    let a = (fx.floor() as usize).min(k - 1);
    let b = (fy.floor() as usize).min(k - 1);
    let (s, t) = (fx - a as f64, fy - b as f64);
    let base = 2 * (b * k + a);
    if s >= t {
        // (a,b), (a+1,b), (a+1,b+1)
        (base, [1.0 - s, s - t, t])
    } else {
        // (a,b), (a+1,b+1), (a,b+1)
        (base + 1, [1.0 - t, s, t - s])
    }
}

/// Macroscopic meshes of `Ω` (holes included) and `Ω_ε`, built by tiling one
/// cell mesh, with the map back to cell elements.
#[derive(Debug, Clone)]
pub struct MacroMesh {
    pub domain: MacroDomain,
    /// Segments per cell side.
    pub cell_segments: usize,
    pub full: TriMesh,
    /// `Ω_ε`: the material prefix of `full`.
    pub perforated: TriMesh,
    /// Cell node of every macro node (valid for material nodes).
    pub node_cell: Vec<usize>,
    /// Cell element of every macro element of `full`.
    pub elem_cell: Vec<usize>,
    /// Lattice cell `(i, j)` of every macro element of `full`.
    pub elem_tile: Vec<(u32, u32)>,
    /// Index of the hole (row-major tile) of every hole-interior node.
    pub node_hole: Vec<Option<usize>>,
    /// Macro node of every `(tile, cell node)`, tiles row-major.
    pub local_to_global: Vec<Vec<usize>>,
}

impl MacroMesh {
    pub fn h(&self) -> f64 {
        self.domain.epsilon / self.cell_segments as f64
    }
}

/// Tiles `cell_full` (a [`mesh_unit_cell_full`] mesh with `m` segments per
/// side) over the `n x n` lattice of `domain`.
pub fn tile_macro(domain: &MacroDomain, cell_full: &TriMesh, m: usize) -> Result<MacroMesh> {
    let n = domain.n;
    let nm = n * m;
    let cell_nodes = cell_full.num_nodes();
    let material = cell_full.material_nodes;
    let lattice_of = |p: Point| -> Option<(usize, usize)> {
        if p[0].abs() == 0.5 || p[1].abs() == 0.5 {
            let a = ((p[0] + 0.5) * m as f64).round() as usize;
            let b = ((p[1] + 0.5) * m as f64).round() as usize;
            Some((a, b))
        } else {
            None
        }
    };
    let cell_lattice: Vec<Option<(usize, usize)>> = cell_full.nodes.iter().map(|p| lattice_of(*p)).collect();

    let mut shared: HashMap<(usize, usize), usize> = HashMap::new();
    let mut nodes: Vec<Point> = Vec::new();
    let mut node_cell: Vec<usize> = Vec::new();
    let mut node_hole: Vec<Option<usize>> = Vec::new();
    let mut local_to_global = vec![vec![usize::MAX; cell_nodes]; n * n];

    // material nodes first, then hole interiors
    for pass in 0..2 {
        for j in 0..n {
            for i in 0..n {
                let tile = j * n + i;
                let range = if pass == 0 { 0..material } else { material..cell_nodes };
                for v in range {
                    let id = if let Some((a, b)) = cell_lattice[v] {
                        let key = (i * m + a, j * m + b);
                        *shared.entry(key).or_insert_with(|| {
                            nodes.push([key.0 as f64 / nm as f64, key.1 as f64 / nm as f64]);
                            node_cell.push(v);
                            node_hole.push(None);
                            nodes.len() - 1
                        })
                    } else {
                        let p = cell_full.nodes[v];
                        nodes.push([(p[0] + 0.5 + i as f64) / n as f64, (p[1] + 0.5 + j as f64) / n as f64]);
                        node_cell.push(v);
                        node_hole.push(if pass == 1 { Some(tile) } else { None });
                        nodes.len() - 1
                    };
                    local_to_global[tile][v] = id;
                }
            }
        }
    }

    let mut elements = Vec::with_capacity(n * n * cell_full.num_elements());
    let mut regions = Vec::with_capacity(elements.capacity());
    let mut elem_cell = Vec::with_capacity(elements.capacity());
    let mut elem_tile = Vec::with_capacity(elements.capacity());
    // material elements first so Ω_ε element numbering is a prefix as well
    for want in [Region::Material, Region::Hole] {
        for j in 0..n {
            for i in 0..n {
                let map = &local_to_global[j * n + i];
                for (e, tri) in cell_full.elements.iter().enumerate() {
                    if cell_full.regions[e] != want {
                        continue;
                    }
                    elements.push([map[tri[0]], map[tri[1]], map[tri[2]]]);
                    regions.push(want);
                    elem_cell.push(e);
                    elem_tile.push((i as u32, j as u32));
                }
            }
        }
    }

    let mut edges = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let map = &local_to_global[j * n + i];
            for be in &cell_full.boundary_edges {
                let g = [map[be.nodes[0]], map[be.nodes[1]]];
                match be.tag {
                    BoundaryTag::NeumannHole => edges.push(BoundaryEdge { nodes: g, tag: BoundaryTag::NeumannHole }),
                    _ => {
                        let (p, q) = (nodes[g[0]], nodes[g[1]]);
                        let on_outer = (p[0] == 0.0 && q[0] == 0.0)
                            || (p[0] == 1.0 && q[0] == 1.0)
                            || (p[1] == 0.0 && q[1] == 0.0)
                            || (p[1] == 1.0 && q[1] == 1.0);
                        if on_outer {
                            edges.push(BoundaryEdge { nodes: g, tag: BoundaryTag::DirichletOuter });
                        }
                    }
                }
            }
        }
    }
    let full = TriMesh::new(nodes, elements, regions, edges, Vec::new())?;
    let perforated = full.material_submesh()?;
    Ok(MacroMesh {
        domain: *domain,
        cell_segments: m,
        full,
        perforated,
        node_cell,
        elem_cell,
        elem_tile,
        node_hole,
        local_to_global,
    })
}

/// Mesh of `Ω_ε` (and of `Ω` with holes meshed) at mesh size `h ≤ ε/8`.
pub fn mesh_macro(domain: &MacroDomain, h: f64) -> Result<MacroMesh> {
    let limit = domain.epsilon / 8.0;
    if h > limit * (1.0 + 1e-12) {
        return Err(Error::ResolutionGate { h, limit });
    }
    let m = segments_for(h / domain.epsilon);
    let cell = mesh_unit_cell_full(&domain.perforation, 1.0 / m as f64)?;
    tile_macro(domain, &cell, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_macro_domain, OuterDomain};

    #[test]
    fn unperforated_cell_is_structured() {
        let mesh = mesh_unit_cell(&PerforationSpec::none(), 1.0 / 8.0).unwrap();
        assert_eq!(mesh.num_elements(), 128);
        assert!(mesh.boundary_edges.iter().all(|b| matches!(
            b.tag,
            BoundaryTag::PeriodicMaster | BoundaryTag::PeriodicSlave
        )));
        assert_eq!(mesh.boundary_edges.len(), 32);
        assert!((mesh.total_area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn perforated_cell_area_matches_polygonal_disk() {
        let h = 1.0 / 32.0;
        let mesh = mesh_unit_cell(&PerforationSpec::disk(0.25), h).unwrap();
        let exact = 1.0 - PI * 0.0625;
        assert!((mesh.total_area() - exact).abs() < 2.0 * h * h);
        // the inscribed 4m-gon is the exact oracle for the mesh area
        let k = 4.0 * 32.0;
        let polygon = 0.5 * k * 0.0625 * (2.0 * PI / k).sin();
        assert!((mesh.total_area() - (1.0 - polygon)).abs() < 1e-12);
    }

    #[test]
    fn coarse_mesh_rejects_small_hole() {
        assert!(matches!(mesh_unit_cell(&PerforationSpec::disk(0.25), 0.4), Err(Error::Mesh(_))));
    }

    #[test]
    fn periodic_pairs_are_exact_translates() {
        for m in [8usize, 16, 64] {
            let mesh = mesh_unit_cell_full(&PerforationSpec::disk(0.25), 1.0 / m as f64).unwrap();
            assert!(!mesh.periodic_pairs.is_empty());
            for &(s, ms) in &mesh.periodic_pairs {
                let d = [mesh.nodes[s][0] - mesh.nodes[ms][0], mesh.nodes[s][1] - mesh.nodes[ms][1]];
                let ok = |t: f64| t == 0.0 || t == 1.0;
                assert!(ok(d[0]) && ok(d[1]) && (d[0] + d[1]) >= 1.0, "{d:?}");
            }
            // 4m face nodes are slaves: m-1 per slave face plus three corners
            assert_eq!(mesh.periodic_pairs.len(), 2 * (m - 1) + 3);
        }
    }

    #[test]
    fn quality_gate_holds_across_resolutions() {
        for m in [8usize, 16, 32, 64, 128] {
            for r in [0.2, 0.25, 0.3] {
                let mesh = mesh_unit_cell_full(&PerforationSpec::disk(r), 1.0 / m as f64).unwrap();
                assert!(mesh.min_angle_deg() >= MIN_ANGLE_DEG, "m={m} r={r}: {}", mesh.min_angle_deg());
                let poly = 0.5 * (4 * m) as f64 * r * r * (2.0 * PI / (4 * m) as f64).sin();
                assert!((mesh.region_area(Region::Hole) - poly).abs() < 1e-12);
                assert!((mesh.total_area() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn material_prefix_shares_numbering() {
        let full = mesh_unit_cell_full(&PerforationSpec::disk(0.25), 1.0 / 16.0).unwrap();
        let sub = full.material_submesh().unwrap();
        assert_eq!(sub.num_nodes(), full.material_nodes);
        assert_eq!(&full.nodes[..sub.num_nodes()], &sub.nodes[..]);
        assert!(sub.num_nodes() < full.num_nodes());
    }

    #[test]
    fn macro_mesh_area_and_tags() {
        let d = build_macro_domain(OuterDomain::UnitSquare, 4, PerforationSpec::disk(0.25)).unwrap();
        let mm = mesh_macro(&d, 1.0 / 32.0).unwrap();
        let exact = 1.0 - 16.0 * PI * (0.25f64 / 4.0).powi(2);
        assert!((mm.perforated.total_area() - exact).abs() < 2e-3);
        assert!((mm.full.total_area() - 1.0).abs() < 1e-12);
        let outer = mm.perforated.tagged_nodes(BoundaryTag::DirichletOuter);
        assert_eq!(outer.len(), 4 * 4 * 8);
        for v in outer {
            let p = mm.perforated.nodes[v];
            assert!(p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0);
        }
        assert_eq!(mm.perforated.tagged_nodes(BoundaryTag::NeumannHole).len(), 16 * 32);
    }

    #[test]
    fn unperforated_macro_mesh_is_the_square() {
        let d = build_macro_domain(OuterDomain::UnitSquare, 4, PerforationSpec::none()).unwrap();
        let mm = mesh_macro(&d, 1.0 / 32.0).unwrap();
        assert!((mm.perforated.total_area() - 1.0).abs() < 1e-13);
        assert_eq!(mm.perforated.num_nodes(), 33 * 33);
        assert!(mm.perforated.tagged_nodes(BoundaryTag::NeumannHole).is_empty());
    }

    #[test]
    fn resolution_gate() {
        let d = build_macro_domain(OuterDomain::UnitSquare, 8, PerforationSpec::disk(0.25)).unwrap();
        assert!(matches!(mesh_macro(&d, 1.0 / 16.0), Err(Error::ResolutionGate { .. })));
    }

    #[test]
    fn unit_square_locator() {
        let k = 7;
        let mesh = mesh_unit_square(k).unwrap();
        for p in [[0.1, 0.2], [0.93, 0.11], [0.5, 0.5], [1.0, 1.0], [0.0, 0.7]] {
            let (e, b) = locate_in_unit_square(k, p);
            let q = mesh.point_at(e, b);
            assert!((q[0] - p[0]).abs() < 1e-14 && (q[1] - p[1]).abs() < 1e-14);
            assert!(b.iter().all(|&t| t >= -1e-14));
        }
    }
}
