//! P1 finite element space on interior nodes, mass lumping, the edge-based
//! stabilisation tensor and the spatial matrices of the scheme.
//!
//! Boundary vertices are eliminated: every vector and matrix here is indexed
//! by interior degrees of freedom only, which realises the homogeneous
//! Dirichlet condition exactly.

use alloc::vec;
use alloc::vec::Vec;

use crate::linsolve::{SpdSolver, DEFAULT_TOLERANCE};
use crate::math::{dot, sqrt, vdot, Vec2};
use crate::mesh::Mesh;
use crate::quadrature::TriangleRule;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

pub type Mat2 = [[f64; 2]; 2];

/// Continuous piecewise-affine functions vanishing on the boundary.
#[derive(Debug, Clone)]
pub struct FeSpace<'m> {
    mesh: &'m Mesh,
    dof_of_vertex: Vec<Option<usize>>,
    vertex_of_dof: Vec<usize>,
    lumped_mass: Vec<f64>,
    areas: Vec<f64>,
    gradients: Vec<[Vec2; 3]>,
    rule: TriangleRule,
    pattern: Vec<Vec<usize>>,
}

impl<'m> FeSpace<'m> {
    /// Numbers the interior vertices, computes lumped masses
    /// `mu_i = (xi_i, 1) = sum_{K ni x_i} |K| / 3` and the constant basis
    /// gradients, and picks a quadrature rule of at least `quadrature_degree`
    /// for integrating analytic data.
    pub fn new(mesh: &'m Mesh, quadrature_degree: usize) -> Result<Self> {
        let rule = TriangleRule::with_degree(quadrature_degree)?;
        let mut dof_of_vertex = vec![None; mesh.n_vertices()];
        let mut vertex_of_dof = Vec::new();
        for (v, slot) in dof_of_vertex.iter_mut().enumerate() {
            if !mesh.is_boundary_vertex(v) {
                *slot = Some(vertex_of_dof.len());
                vertex_of_dof.push(v);
            }
        }
        let mut lumped_mass = vec![0.0; vertex_of_dof.len()];
        let mut areas = Vec::with_capacity(mesh.n_triangles());
        let mut gradients = Vec::with_capacity(mesh.n_triangles());
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let area = mesh.area(t);
            let p = mesh.corners(t);
            let grads: [Vec2; 3] = core::array::from_fn(|i| {
                let a = p[(i + 1) % 3];
                let b = p[(i + 2) % 3];
                [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)]
            });
            for &v in tri {
                if let Some(d) = dof_of_vertex[v] {
                    lumped_mass[d] += area / 3.0;
                }
            }
            areas.push(area);
            gradients.push(grads);
        }
        let pattern = vertex_of_dof
            .iter()
            .enumerate()
            .map(|(d, &v)| {
                let mut row: Vec<usize> =
                    mesh.neighbours(v).iter().filter_map(|&w| dof_of_vertex[w]).collect();
                row.push(d);
                row.sort_unstable();
                row
            })
            .collect();
        Ok(FeSpace { mesh, dof_of_vertex, vertex_of_dof, lumped_mass, areas, gradients, rule, pattern })
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn n_dofs(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        self.dof_of_vertex[vertex]
    }

    pub fn vertex(&self, dof: usize) -> usize {
        self.vertex_of_dof[dof]
    }

    /// `(xi_i, 1)_Omega` per interior node.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    /// Gradients of the three barycentric coordinates of triangle `t`.
    pub fn gradients(&self, t: usize) -> &[Vec2; 3] {
        &self.gradients[t]
    }

    pub fn rule(&self) -> &TriangleRule {
        &self.rule
    }

    /// Interior dofs of the corners of triangle `t`.
    pub fn local_dofs(&self, t: usize) -> [Option<usize>; 3] {
        self.mesh.triangles()[t].map(|v| self.dof_of_vertex[v])
    }

    /// Zero matrix with the interior-node sparsity pattern.
    pub fn zero_matrix(&self, symmetric: bool) -> CsrMatrix {
        CsrMatrix::from_rows(&self.pattern, symmetric)
    }

    /// Constant gradient of the finite element function with coefficients `v`
    /// on triangle `t`.
    pub fn element_gradient(&self, t: usize, v: &[f64]) -> Vec2 {
        let g = &self.gradients[t];
        let mut out = [0.0; 2];
        for (i, d) in self.local_dofs(t).iter().enumerate() {
            if let Some(d) = d {
                out[0] += v[*d] * g[i][0];
                out[1] += v[*d] * g[i][1];
            }
        }
        out
    }

    /// Value at barycentric coordinates `lambda` of triangle `t`.
    pub fn element_value(&self, t: usize, lambda: &[f64; 3], v: &[f64]) -> f64 {
        self.local_dofs(t)
            .iter()
            .zip(lambda)
            .filter_map(|(d, l)| d.map(|d| l * v[d]))
            .sum()
    }

    /// Nodal interpolant (values at interior vertices).
    pub fn interpolate(&self, f: impl Fn(Vec2) -> f64) -> Vec<f64> {
        let verts = self.mesh.vertices();
        self.vertex_of_dof.iter().map(|&v| f(verts[v])).collect()
    }

    /// Load vector `(xi_i, f)_Omega` by element quadrature.
    pub fn load_vector(&self, f: impl Fn(Vec2) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dofs()];
        self.add_load(1.0, &f, &mut out);
        out
    }

    /// `out_i += scale * (xi_i, f)_Omega`.
    pub fn add_load(&self, scale: f64, f: &impl Fn(Vec2) -> f64, out: &mut [f64]) {
        for t in 0..self.mesh.n_triangles() {
            let dofs = self.local_dofs(t);
            if dofs.iter().all(Option::is_none) {
                continue;
            }
            let corners = self.mesh.corners(t);
            let area = self.areas[t];
            for (x, lambda, w) in self.rule.map(&corners) {
                let fx = scale * area * w * f(x);
                for (i, d) in dofs.iter().enumerate() {
                    if let Some(d) = d {
                        out[*d] += fx * lambda[i];
                    }
                }
            }
        }
    }
}

/// Alias of [`FeSpace::new`].
pub fn build_fespace(mesh: &Mesh, quadrature_degree: usize) -> Result<FeSpace<'_>> {
    FeSpace::new(mesh, quadrature_degree)
}

/// Lower bound factor on the stabilisation weights: `omega_E` must exceed
/// `delta * L_H * diam(E) / (2 (d + 1))` with `d = 2`.
pub fn weight_threshold(shape_regularity_delta: f64) -> f64 {
    shape_regularity_delta / 6.0
}

/// Nonnegative stabilisation weight per mesh edge (zero on edges without an
/// interior vertex).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights(pub Vec<f64>);

impl EdgeWeights {
    pub fn zeros(mesh: &Mesh) -> Self {
        EdgeWeights(vec![0.0; mesh.edges().len()])
    }
}

/// `omega_E = c_w * L_H * diam(E)` on internal edges, after checking that
/// `c_w` clears the DMP threshold `delta / 6`.
pub fn default_weights(mesh: &Mesh, lipschitz: f64, weight_factor: f64) -> Result<EdgeWeights> {
    if lipschitz > 0.0 {
        let threshold = weight_threshold(mesh.audit().shape_regularity_delta);
        if weight_factor <= threshold {
            return Err(Error::InadmissibleWeights { weight_factor, threshold });
        }
    }
    Ok(EdgeWeights(
        mesh.edges()
            .iter()
            .map(|e| if e.internal { weight_factor * lipschitz * e.length } else { 0.0 })
            .collect(),
    ))
}

/// Verifies `omega_E > delta L_H diam(E) / 6` on every internal edge. The
/// returned error reports the smallest ratio `omega_E / (L_H diam E)` found.
pub fn check_weights(mesh: &Mesh, weights: &EdgeWeights, lipschitz: f64) -> Result<()> {
    if weights.0.len() != mesh.edges().len() {
        return Err(Error::DimensionMismatch { expected: mesh.edges().len(), found: weights.0.len() });
    }
    if weights.0.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidArgument("stabilisation weights must be finite and nonnegative".into()));
    }
    if lipschitz <= 0.0 {
        return Ok(());
    }
    let threshold = weight_threshold(mesh.audit().shape_regularity_delta);
    let worst = mesh
        .edges()
        .iter()
        .zip(&weights.0)
        .filter(|(e, _)| e.internal)
        .map(|(e, w)| w / (lipschitz * e.length))
        .fold(f64::INFINITY, f64::min);
    if worst <= threshold {
        return Err(Error::InadmissibleWeights { weight_factor: worst, threshold });
    }
    Ok(())
}

/// Per-element artificial diffusion `D_K = sum_{E in E_K} omega_E t_E t_E^T`
/// over the internal edges of `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizationTensor {
    pub tensors: Vec<Mat2>,
}

impl StabilizationTensor {
    pub fn build(mesh: &Mesh, weights: &EdgeWeights) -> Self {
        let tensors = (0..mesh.n_triangles())
            .map(|t| {
                let mut d = [[0.0; 2]; 2];
                for e in mesh.triangle_edges(t) {
                    let edge = &mesh.edges()[e];
                    if !edge.internal {
                        continue;
                    }
                    let w = weights.0[e];
                    let tan = edge.tangent;
                    for r in 0..2 {
                        for c in 0..2 {
                            d[r][c] += w * tan[r] * tan[c];
                        }
                    }
                }
                d
            })
            .collect();
        StabilizationTensor { tensors }
    }

    pub fn zero(mesh: &Mesh) -> Self {
        StabilizationTensor { tensors: vec![[[0.0; 2]; 2]; mesh.n_triangles()] }
    }

    /// `A_K = nu I + D_K`.
    pub fn combined(&self, t: usize, nu: f64) -> Mat2 {
        let d = self.tensors[t];
        [[nu + d[0][0], d[0][1]], [d[1][0], nu + d[1][1]]]
    }
}

/// Alias of [`StabilizationTensor::build`].
pub fn build_stabilization(mesh: &Mesh, weights: &EdgeWeights) -> StabilizationTensor {
    StabilizationTensor::build(mesh, weights)
}

fn mat_vec(a: &Mat2, v: Vec2) -> Vec2 {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// `int_K A grad(xi_j) . grad(xi_i)` for the local vertices of `t`
/// (row `i`, column `j`).
pub fn element_diffusion(fes: &FeSpace<'_>, t: usize, a: &Mat2) -> [[f64; 3]; 3] {
    let g = fes.gradients(t);
    let area = fes.area(t);
    core::array::from_fn(|i| core::array::from_fn(|j| area * dot(mat_vec(a, g[j]), g[i])))
}

/// `int_K xi_j (b . grad xi_i)` for constant `b` on `t` (row `i`, column `j`).
pub fn element_convection(fes: &FeSpace<'_>, t: usize, b: Vec2) -> [[f64; 3]; 3] {
    let g = fes.gradients(t);
    let third = fes.area(t) / 3.0;
    core::array::from_fn(|i| [third * dot(b, g[i]); 3])
}

fn scatter(fes: &FeSpace<'_>, t: usize, local: &[[f64; 3]; 3], m: &mut CsrMatrix) {
    let dofs = fes.local_dofs(t);
    for (i, di) in dofs.iter().enumerate() {
        let Some(di) = di else { continue };
        for (j, dj) in dofs.iter().enumerate() {
            if let Some(dj) = dj {
                m.add(*di, *dj, local[i][j]);
            }
        }
    }
}

/// Stiffness matrix of `(A_k grad v, grad w)` with `A_k = nu I + D_k`.
pub fn assemble_diffusion(fes: &FeSpace<'_>, stab: &StabilizationTensor, nu: f64) -> CsrMatrix {
    let mut m = fes.zero_matrix(true);
    for t in 0..fes.mesh().n_triangles() {
        let local = element_diffusion(fes, t, &stab.combined(t, nu));
        scatter(fes, t, &local, &mut m);
    }
    m
}

/// Matrix `C_ij = (xi_j b, grad xi_i)` for a field `b` constant on each
/// element.
pub fn assemble_convection(fes: &FeSpace<'_>, b: &[Vec2]) -> CsrMatrix {
    let mut m = fes.zero_matrix(false);
    add_convection(fes, b, &mut m);
    m
}

/// Adds the convection matrix of `b` into `m` (same pattern).
pub fn add_convection(fes: &FeSpace<'_>, b: &[Vec2], m: &mut CsrMatrix) {
    debug_assert_eq!(b.len(), fes.mesh().n_triangles());
    m.set_symmetric(false);
    for (t, bt) in b.iter().enumerate() {
        if bt[0] == 0.0 && bt[1] == 0.0 {
            continue;
        }
        let local = element_convection(fes, t, *bt);
        scatter(fes, t, &local, m);
    }
}

/// Consistent mass matrix `(xi_j, xi_i)_Omega`.
pub fn assemble_mass(fes: &FeSpace<'_>) -> CsrMatrix {
    let mut m = fes.zero_matrix(true);
    for t in 0..fes.mesh().n_triangles() {
        let a = fes.area(t) / 12.0;
        let local = core::array::from_fn(|i| core::array::from_fn(|j| if i == j { 2.0 * a } else { a }));
        scatter(fes, t, &local, &mut m);
    }
    m
}

/// Lumped Riesz map `(R_k w)_i = (xi_i, w)_Omega / (xi_i, 1)_Omega`.
pub fn lumped_riesz(fes: &FeSpace<'_>, w: impl Fn(Vec2) -> f64) -> Vec<f64> {
    let mut out = fes.load_vector(w);
    for (o, mu) in out.iter_mut().zip(fes.lumped_mass()) {
        *o /= mu;
    }
    out
}

/// `(u, v)_{Omega,k} = sum_i mu_i u_i v_i`.
pub fn lumped_inner(fes: &FeSpace<'_>, u: &[f64], v: &[f64]) -> f64 {
    fes.lumped_mass().iter().zip(u).zip(v).map(|((m, a), b)| m * a * b).sum()
}

pub fn lumped_norm(fes: &FeSpace<'_>, v: &[f64]) -> f64 {
    sqrt(lumped_inner(fes, v, v))
}

/// `mu_i v_i`.
pub fn lumped_apply(fes: &FeSpace<'_>, v: &[f64]) -> Vec<f64> {
    fes.lumped_mass().iter().zip(v).map(|(m, x)| m * x).collect()
}

/// Exact `L^2(Omega)` norm of a finite element function.
pub fn l2_norm(fes: &FeSpace<'_>, v: &[f64]) -> f64 {
    let mut s = 0.0;
    for t in 0..fes.mesh().n_triangles() {
        let vals = fes.local_dofs(t).map(|d| d.map_or(0.0, |d| v[d]));
        let sum: f64 = vals.iter().sum();
        let sq: f64 = vals.iter().map(|x| x * x).sum();
        // |K|/12 * (sum^2 + sum of squares)
        s += fes.area(t) / 12.0 * (sum * sum + sq);
    }
    sqrt(s)
}

/// `||grad v||_Omega`.
pub fn h1_seminorm(fes: &FeSpace<'_>, v: &[f64]) -> f64 {
    let s: f64 = (0..fes.mesh().n_triangles())
        .map(|t| {
            let g = fes.element_gradient(t, v);
            fes.area(t) * dot(g, g)
        })
        .sum();
    sqrt(s)
}

/// Discrete dual norm `sup_v (w, v)_{Omega,k} / ||grad v||_A` where the
/// energy is given by the SPD matrix inside `solver`. Returns the norm and
/// the Riesz representative `z` (`K z = M_L w`), which attains the supremum.
pub fn dual_norm_with_maximizer(
    fes: &FeSpace<'_>,
    solver: &SpdSolver,
    w: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let rhs = lumped_apply(fes, w);
    let (z, _) = solver.solve(&rhs, None, DEFAULT_TOLERANCE)?;
    let energy = solver.matrix().bilinear(&z, &z).max(0.0);
    Ok((sqrt(energy), z))
}

/// `||w||_{k,*}` (or its `A_k`-weighted variant, depending on the matrix held
/// by `solver`).
pub fn dual_norm_kstar(fes: &FeSpace<'_>, solver: &SpdSolver, w: &[f64]) -> Result<f64> {
    Ok(dual_norm_with_maximizer(fes, solver, w)?.0)
}

/// The spatial operators shared by both sub-solvers on a fixed mesh.
#[derive(Debug, Clone)]
pub struct Discretization<'m> {
    pub fes: FeSpace<'m>,
    pub stab: StabilizationTensor,
    pub nu: f64,
    /// `(A_k grad v, grad w)`.
    pub stiffness: CsrMatrix,
    /// `(grad v, grad w)` without diffusion coefficient or stabilisation.
    pub laplacian: CsrMatrix,
    /// Consistent mass matrix.
    pub mass: CsrMatrix,
}

impl<'m> Discretization<'m> {
    pub fn new(fes: FeSpace<'m>, stab: StabilizationTensor, nu: f64) -> Self {
        let stiffness = assemble_diffusion(&fes, &stab, nu);
        let laplacian = assemble_diffusion(&fes, &StabilizationTensor::zero(fes.mesh()), 1.0);
        let mass = assemble_mass(&fes);
        Discretization { fes, stab, nu, stiffness, laplacian, mass }
    }

    pub fn n_dofs(&self) -> usize {
        self.fes.n_dofs()
    }

    /// `||grad v||_{A_k}`.
    pub fn energy_norm(&self, v: &[f64]) -> f64 {
        sqrt(self.stiffness.bilinear(v, v).max(0.0))
    }

    /// `(v, w)_Omega` for finite element functions.
    pub fn l2_inner(&self, v: &[f64], w: &[f64]) -> f64 {
        vdot(v, &self.mass.mul_vec(w))
    }
}
