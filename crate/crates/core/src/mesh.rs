//! Conforming triangulations of polygonal domains, uniform refinement and the
//! admissibility audit (Xu-Zikatanov cotangent condition, shape regularity).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{abs, cross, dot, norm, sqrt, sub, Vec2};
use crate::{Error, Result};

/// Slack allowed on the cotangent sum so that right-angled meshes, whose
/// diagonal edges have an exactly vanishing sum, are accepted.
pub const XZ_TOLERANCE: f64 = 1e-12;

const AREA_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints, smaller index first.
    pub vertices: [usize; 2],
    pub length: f64,
    /// Unit tangent pointing from `vertices[0]` to `vertices[1]`.
    pub tangent: Vec2,
    triangles: [usize; 2],
    n_triangles: usize,
    /// Edge contains at least one interior vertex.
    pub internal: bool,
}

impl Edge {
    /// Triangles sharing this edge (one for boundary edges, two otherwise).
    pub fn triangles(&self) -> &[usize] {
        &self.triangles[..self.n_triangles]
    }

    pub fn on_boundary(&self) -> bool {
        self.n_triangles == 1
    }
}

/// Immutable 2D conforming simplicial mesh with derived adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// `triangle_edges[t][i]` is the edge opposite local vertex `i`.
    triangle_edges: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    neighbours: Vec<Vec<usize>>,
}

/// Result of [`Mesh::audit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshAudit {
    pub xz_pass: bool,
    /// Minimum over edges shared by two triangles of the sum of cotangents of
    /// the opposite angles; `+inf` when there is no such edge.
    pub worst_edge_cot_sum: f64,
    /// `max_K diam(K) / rho_K`.
    pub shape_regularity_delta: f64,
    pub max_h: f64,
}

impl Mesh {
    /// Builds a mesh from coordinates and vertex triples.
    ///
    /// Clockwise triangles are reoriented. Vertices are flagged as boundary
    /// when `boundary_flags` says so or when they lie on an edge owned by a
    /// single triangle.
    pub fn new(
        vertices: Vec<Vec2>,
        mut triangles: Vec<[usize; 3]>,
        boundary_flags: Option<Vec<bool>>,
    ) -> Result<Self> {
        let nv = vertices.len();
        if nv < 3 || triangles.is_empty() {
            return Err(Error::InvalidMesh(format!(
                "need at least 3 vertices and 1 triangle, got {nv} and {}",
                triangles.len()
            )));
        }
        if let Some(flags) = &boundary_flags {
            if flags.len() != nv {
                return Err(Error::DimensionMismatch { expected: nv, found: flags.len() });
            }
        }
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if abs(area) <= AREA_EPS {
                return Err(Error::DegenerateTriangle { triangle: t, area });
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut lookup: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0usize; 3];
            for (i, slot) in local.iter_mut().enumerate() {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                let key = (a.min(b), a.max(b));
                let e = *lookup.entry(key).or_insert_with(|| {
                    let d = sub(vertices[key.1], vertices[key.0]);
                    let length = norm(d);
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        length,
                        tangent: [d[0] / length, d[1] / length],
                        triangles: [t, usize::MAX],
                        n_triangles: 0,
                        internal: false,
                    });
                    edges.len() - 1
                });
                let edge = &mut edges[e];
                if edge.n_triangles == 2 {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({}, {}) is shared by more than two triangles",
                        key.0, key.1
                    )));
                }
                edge.triangles[edge.n_triangles] = t;
                edge.n_triangles += 1;
                *slot = e;
            }
            triangle_edges.push(local);
        }

        let mut boundary = boundary_flags.unwrap_or_else(|| vec![false; nv]);
        for e in edges.iter().filter(|e| e.on_boundary()) {
            boundary[e.vertices[0]] = true;
            boundary[e.vertices[1]] = true;
        }
        for e in &mut edges {
            e.internal = !boundary[e.vertices[0]] || !boundary[e.vertices[1]];
        }

        let mut neighbours = vec![Vec::new(); nv];
        for e in &edges {
            neighbours[e.vertices[0]].push(e.vertices[1]);
            neighbours[e.vertices[1]].push(e.vertices[0]);
        }
        for list in &mut neighbours {
            list.sort_unstable();
        }
        if neighbours.iter().any(|l| l.is_empty()) {
            return Err(Error::InvalidMesh("mesh has vertices not used by any triangle".into()));
        }

        Ok(Mesh { vertices, triangles, edges, triangle_edges, boundary, neighbours })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edges of triangle `t`, indexed by the opposite local vertex.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    /// Vertices sharing an element with `v`, sorted.
    pub fn neighbours(&self, v: usize) -> &[usize] {
        &self.neighbours[v]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_interior_vertices(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    pub fn corners(&self, t: usize) -> [Vec2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        signed_area(a, b, c)
    }

    pub fn diameter(&self, t: usize) -> f64 {
        self.triangle_edges[t]
            .iter()
            .map(|&e| self.edges[e].length)
            .fold(0.0, f64::max)
    }

    /// Radius of the inscribed circle.
    pub fn inradius(&self, t: usize) -> f64 {
        let perimeter: f64 = self.triangle_edges[t].iter().map(|&e| self.edges[e].length).sum();
        2.0 * self.area(t) / perimeter
    }

    pub fn centroid(&self, t: usize) -> Vec2 {
        let [a, b, c] = self.corners(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Largest element diameter.
    pub fn max_h(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    /// Cotangent of the angle of triangle `t` at local vertex `i`.
    pub fn cot_angle(&self, t: usize, i: usize) -> f64 {
        let p = self.corners(t);
        let u = sub(p[(i + 1) % 3], p[i]);
        let w = sub(p[(i + 2) % 3], p[i]);
        dot(u, w) / abs(cross(u, w))
    }

    /// Sum of cotangents of the angles opposite edge `e` in its triangles.
    pub fn edge_cot_sum(&self, e: usize) -> f64 {
        self.edges[e]
            .triangles()
            .iter()
            .map(|&t| {
                let local = self.triangle_edges[t].iter().position(|&x| x == e).unwrap();
                self.cot_angle(t, local)
            })
            .sum()
    }

    pub fn audit(&self) -> MeshAudit {
        let mut worst = f64::INFINITY;
        // Every edge shared by two triangles is checked. This is a superset of
        // the edges carrying an interior vertex.
        for (e, edge) in self.edges.iter().enumerate() {
            if !edge.on_boundary() {
                worst = worst.min(self.edge_cot_sum(e));
            }
        }
        // Exactly vanishing sums come out as tiny negatives in floating point.
        if (-XZ_TOLERANCE..0.0).contains(&worst) {
            worst = 0.0;
        }
        let delta = (0..self.n_triangles())
            .map(|t| self.diameter(t) / self.inradius(t))
            .fold(0.0, f64::max);
        MeshAudit {
            xz_pass: worst >= 0.0,
            worst_edge_cot_sum: worst,
            shape_regularity_delta: delta,
            max_h: self.max_h(),
        }
    }

    /// Red refinement: every triangle is split into four congruent children
    /// through its edge midpoints. Parent vertices keep their indices, the
    /// midpoint of edge `e` gets index `n_vertices + e`, and the children of
    /// triangle `t` are `4t..4t + 4` (the last one is the middle triangle).
    pub fn refine_uniform(&self) -> Mesh {
        let nv = self.n_vertices();
        let mut vertices = self.vertices.clone();
        let mut flags = self.boundary.clone();
        for e in &self.edges {
            let a = self.vertices[e.vertices[0]];
            let b = self.vertices[e.vertices[1]];
            vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            flags.push(e.on_boundary());
        }
        let mut triangles = Vec::with_capacity(4 * self.n_triangles());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let [ea, eb, ec] = self.triangle_edges[t];
            // midpoint opposite a lies on bc, and so on
            let (mbc, mca, mab) = (nv + ea, nv + eb, nv + ec);
            triangles.push([a, mab, mca]);
            triangles.push([mab, b, mbc]);
            triangles.push([mca, mbc, c]);
            triangles.push([mab, mbc, mca]);
        }
        Mesh::new(vertices, triangles, Some(flags))
            .expect("refinement of a valid mesh is valid")
    }
}

/// Uniform triangulation of the unit square with `n` subdivisions per side.
/// Every grid square is split along its lower-left to upper-right diagonal.
pub fn generate_uniform_unit_square(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("number of subdivisions must be positive".into()));
    }
    let side = n + 1;
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity(side * side);
    let mut flags = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            vertices.push([i as f64 * h, j as f64 * h]);
            flags.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * side + i;
            let v10 = v00 + 1;
            let v01 = v00 + side;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Mesh::new(vertices, triangles, Some(flags))
}

pub fn signed_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * cross(sub(b, a), sub(c, a))
}

/// Inradius of a right triangle with legs `a`, `b` and hypotenuse `c`.
pub fn right_triangle_inradius(a: f64, b: f64) -> f64 {
    (a + b - sqrt(a * a + b * b)) / 2.0
}
