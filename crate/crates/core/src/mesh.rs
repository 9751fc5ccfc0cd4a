//! Conforming triangulations of planar domains with oriented boundary edges.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functions::{polar_angle, wrap_angle, EvalPoint};
use crate::quadrature::GaussLegendre;

/// Which generator produced a mesh; refinement re-projects boundary
/// midpoints for curved domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    UnitSquare,
    UnitDisk,
    Polygon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    /// Endpoints in the counterclockwise order of the adjacent triangle.
    pub vertices: [usize; 2],
    pub triangle: usize,
    pub normal: [f64; 2],
    pub length: f64,
}

/// A point on a boundary edge produced by [`Mesh2D::boundary_quadrature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePoint {
    pub point: [f64; 2],
    pub weight: f64,
    /// Position along the edge: the first endpoint's hat function equals
    /// `1 - t`, the second's equals `t`.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    on_boundary: Vec<bool>,
    domain: Domain,
}

/// Per-triangle area and gradients of the three barycentric hat functions.
#[derive(Debug, Clone, Copy)]
pub struct TriangleGeometry {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl Mesh2D {
    /// Build a mesh from raw parts, deriving boundary edges and normals and
    /// validating orientation and conformity.
    pub fn from_parts(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>, domain: Domain) -> Result<Self> {
        let nv = vertices.len();
        if vertices.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::mesh("non-finite vertex coordinate"));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                return Err(Error::mesh(format!("triangle {t} references a missing vertex")));
            }
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(a > 0.0) {
                return Err(Error::mesh(format!("triangle {t} has non-positive signed area {a:e}")));
            }
        }
        let mut edges: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for l in 0..3 {
                edges.entry(edge_key(tri[l], tri[(l + 1) % 3])).or_default().push((t, l));
            }
        }
        let mut boundary_edges = Vec::new();
        for owners in edges.values() {
            match owners.len() {
                1 => {
                    let (t, l) = owners[0];
                    let a = triangles[t][l];
                    let b = triangles[t][(l + 1) % 3];
                    let (pa, pb) = (vertices[a], vertices[b]);
                    let dx = pb[0] - pa[0];
                    let dy = pb[1] - pa[1];
                    let length = dx.hypot(dy);
                    boundary_edges.push(BoundaryEdge {
                        vertices: [a, b],
                        triangle: t,
                        normal: [dy / length, -dx / length],
                        length,
                    });
                }
                2 => {}
                k => return Err(Error::mesh(format!("edge shared by {k} triangles"))),
            }
        }
        // deterministic order independent of hash iteration
        boundary_edges.sort_by_key(|e| (e.triangle, e.vertices[0]));
        let mut on_boundary = vec![false; nv];
        for e in &boundary_edges {
            on_boundary[e.vertices[0]] = true;
            on_boundary[e.vertices[1]] = true;
        }
        Ok(Self { vertices, triangles, boundary_edges, on_boundary, domain })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.on_boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| self.on_boundary[v]).collect()
    }

    pub fn num_edges(&self) -> usize {
        let interior = (3 * self.triangles.len() - self.boundary_edges.len()) / 2;
        interior + self.boundary_edges.len()
    }

    pub fn geometry(&self, t: usize) -> TriangleGeometry {
        let [i, j, k] = self.triangles[t];
        let (a, b, c) = (self.vertices[i], self.vertices[j], self.vertices[k]);
        let area = signed_area(a, b, c);
        let inv = 1.0 / (2.0 * area);
        // grad of the hat at a vertex is the rotated opposite edge / (2 area)
        let g = |p: [f64; 2], q: [f64; 2]| [(p[1] - q[1]) * inv, (q[0] - p[0]) * inv];
        TriangleGeometry { area, grads: [g(b, c), g(c, a), g(a, b)] }
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.geometry(t).area).sum()
    }

    pub fn perimeter(&self) -> f64 {
        self.boundary_edges.iter().map(|e| e.length).sum()
    }

    /// Longest edge length.
    pub fn mesh_size(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|tri| (0..3).map(move |l| (tri[l], tri[(l + 1) % 3])))
            .map(|(a, b)| {
                let (p, q) = (self.vertices[a], self.vertices[b]);
                (p[0] - q[0]).hypot(p[1] - q[1])
            })
            .fold(0.0, f64::max)
    }

    /// `∫ φ_i` over the domain for every vertex.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_vertices()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let a = self.geometry(t).area / 3.0;
            for &v in tri {
                m[v] += a;
            }
        }
        m
    }

    /// `∮ φ_i` over the boundary for every vertex (zero in the interior).
    pub fn lumped_boundary_measure(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_vertices()];
        for e in &self.boundary_edges {
            m[e.vertices[0]] += 0.5 * e.length;
            m[e.vertices[1]] += 0.5 * e.length;
        }
        m
    }

    /// Gauss–Legendre points mapped onto a boundary edge.
    pub fn boundary_quadrature(&self, edge: &BoundaryEdge, order: usize) -> Result<Vec<EdgePoint>> {
        let rule = GaussLegendre::new(order)?;
        Ok(edge_points(&self.vertices, edge, &rule))
    }

    /// Evaluation point on a boundary edge, carrying the edge normal.
    pub fn boundary_eval_point(edge: &BoundaryEdge, p: &EdgePoint) -> EvalPoint {
        EvalPoint::boundary(p.point[0], p.point[1], edge.normal)
    }

    /// Largest excess over the Delaunay angle conditions: `α + β - π` on
    /// interior edges and `α - π/2` on boundary edges, `α, β` the angles
    /// opposite the edge. Non-positive means the P1 stiffness matrix has no
    /// positive off-diagonal entries.
    pub fn delaunay_excess(&self) -> f64 {
        let mut opposite: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
        for tri in &self.triangles {
            for l in 0..3 {
                let (a, b, c) = (tri[l], tri[(l + 1) % 3], tri[(l + 2) % 3]);
                opposite.entry(edge_key(a, b)).or_default().push(self.angle_at(c, a, b));
            }
        }
        opposite
            .values()
            .map(|angles| match angles.as_slice() {
                [a] => a - PI / 2.0,
                [a, b] => a + b - PI,
                _ => f64::INFINITY,
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn angle_at(&self, apex: usize, a: usize, b: usize) -> f64 {
        let p = self.vertices[apex];
        let u = [self.vertices[a][0] - p[0], self.vertices[a][1] - p[1]];
        let v = [self.vertices[b][0] - p[0], self.vertices[b][1] - p[1]];
        let cross = u[0] * v[1] - u[1] * v[0];
        let dot = u[0] * v[0] + u[1] * v[1];
        cross.abs().atan2(dot)
    }

    /// Check every structural invariant; returns the first violation.
    pub fn validate(&self) -> Result<()> {
        let nv = self.num_vertices();
        let ne = self.num_edges();
        let nf = self.num_triangles();
        if nv + nf != ne + 1 {
            return Err(Error::mesh(format!("Euler characteristic V - E + F = {} != 1", nv as i64 - ne as i64 + nf as i64)));
        }
        for e in &self.boundary_edges {
            let n = e.normal;
            if ((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs() > 1e-12 {
                return Err(Error::mesh("boundary normal is not unit length"));
            }
            let (a, b) = (self.vertices[e.vertices[0]], self.vertices[e.vertices[1]]);
            let tangent = [b[0] - a[0], b[1] - a[1]];
            if (n[0] * tangent[0] + n[1] * tangent[1]).abs() > 1e-12 * e.length.max(1.0) {
                return Err(Error::mesh("boundary normal not orthogonal to its edge"));
            }
            let tri = self.triangles[e.triangle];
            let cx = tri.iter().map(|&v| self.vertices[v][0]).sum::<f64>() / 3.0;
            let cy = tri.iter().map(|&v| self.vertices[v][1]).sum::<f64>() / 3.0;
            let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            if n[0] * (mid[0] - cx) + n[1] * (mid[1] - cy) <= 0.0 {
                return Err(Error::mesh("boundary normal points into its triangle"));
            }
        }
        Ok(())
    }

    /// Split every triangle into four through its edge midpoints. Boundary
    /// midpoints of disk meshes are projected onto the unit circle and the
    /// result is restored to Delaunay by edge flips.
    pub fn refine_uniform(&self) -> Result<Mesh2D> {
        let mut vertices = self.vertices.clone();
        let boundary: std::collections::HashSet<(usize, usize)> =
            self.boundary_edges.iter().map(|e| edge_key(e.vertices[0], e.vertices[1])).collect();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
            let key = edge_key(a, b);
            *midpoint.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                let mut m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
                if self.domain == Domain::UnitDisk && boundary.contains(&key) {
                    let r = m[0].hypot(m[1]);
                    m = [m[0] / r, m[1] / r];
                }
                vertices.push(m);
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        if self.domain == Domain::UnitDisk {
            lawson_flips(&vertices, &mut triangles);
        }
        Mesh2D::from_parts(vertices, triangles, self.domain)
    }

    pub fn into_shared(self) -> Arc<Mesh2D> {
        Arc::new(self)
    }
}

pub(crate) fn edge_points(vertices: &[[f64; 2]], edge: &BoundaryEdge, rule: &GaussLegendre) -> Vec<EdgePoint> {
    let (a, b) = (vertices[edge.vertices[0]], vertices[edge.vertices[1]]);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&t, &w)| EdgePoint {
            point: [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])],
            weight: w * edge.length,
            t,
        })
        .collect()
}

/// Structured triangulation of `[0,1]^2` with `m` cells per side, each cell
/// cut along its lower-left to upper-right diagonal.
pub fn generate_unit_square(m: usize) -> Result<Mesh2D> {
    if m < 2 {
        return Err(Error::invalid(format!("unit square needs m >= 2, got {m}")));
    }
    let h = 1.0 / m as f64;
    let idx = |i: usize, j: usize| j * (m + 1) + i;
    let vertices = (0..=m)
        .flat_map(|j| (0..=m).map(move |i| [i as f64 * h, j as f64 * h]))
        .map(|[x, y]| [if x > 1.0 { 1.0 } else { x }, if y > 1.0 { 1.0 } else { y }])
        .collect();
    let mut triangles = Vec::with_capacity(2 * m * m);
    for j in 0..m {
        for i in 0..m {
            let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Mesh2D::from_parts(vertices, triangles, Domain::UnitSquare)
}

/// Polar angles of the `m` boundary vertices of [`generate_unit_disk`].
///
/// One vertex sits at `theta = pi`; the others are shifted by a third of a
/// step so that `theta = 0` falls at a non-dyadic fraction of its edge and
/// is never hit by uniform refinement.
pub fn disk_boundary_angles(m: usize) -> Vec<f64> {
    let step = 2.0 * PI / m as f64;
    (0..m)
        .map(|j| {
            let offset = if j == 0 { 0.0 } else { 1.0 / 3.0 };
            wrap_angle(PI - step * (j as f64 + offset))
        })
        .map(|t| if t <= -PI { PI } else { t })
        .collect()
}

/// Radially graded Delaunay triangulation of the unit disk with `m`
/// boundary segments.
pub fn generate_unit_disk(m: usize) -> Result<Mesh2D> {
    if m < 4 {
        return Err(Error::invalid(format!("unit disk needs m >= 4, got {m}")));
    }
    let rings = ((m as f64 / (2.0 * PI)).round() as usize).max(1);
    let mut vertices = vec![[0.0, 0.0]];
    let mut ring_ids: Vec<Vec<usize>> = Vec::with_capacity(rings);
    for k in 1..=rings {
        let (angles, r) = if k == rings {
            (disk_boundary_angles(m), 1.0)
        } else {
            let count = ((m as f64 * k as f64 / rings as f64).round() as usize).max(6);
            let shift = if k % 2 == 0 { 0.5 } else { 0.0 };
            let a = (0..count).map(|i| 2.0 * PI * (i as f64 + shift) / count as f64).collect();
            (a, k as f64 / rings as f64)
        };
        let mut ids: Vec<(f64, usize)> = angles
            .into_iter()
            .map(|t: f64| {
                vertices.push([r * t.cos(), r * t.sin()]);
                (t.rem_euclid(2.0 * PI), vertices.len() - 1)
            })
            .collect();
        ids.sort_by(|a, b| a.0.total_cmp(&b.0));
        ring_ids.push(ids.into_iter().map(|(_, v)| v).collect());
    }
    let mut triangles = Vec::new();
    let first = &ring_ids[0];
    if m < 6 {
        // a centre fan would have an obtuse angle opposite the widest
        // boundary edge, so coarse disks use boundary vertices only
        vertices.remove(0);
        for i in 1..m - 1 {
            triangles.push(oriented(&vertices, [first[0] - 1, first[i] - 1, first[i + 1] - 1]));
        }
        lawson_flips(&vertices, &mut triangles);
        return Mesh2D::from_parts(vertices, triangles, Domain::UnitDisk);
    }
    for i in 0..first.len() {
        triangles.push(oriented(&vertices, [0, first[i], first[(i + 1) % first.len()]]));
    }
    for pair in ring_ids.windows(2) {
        zip_rings(&vertices, &pair[0], &pair[1], &mut triangles);
    }
    lawson_flips(&vertices, &mut triangles);
    Mesh2D::from_parts(vertices, triangles, Domain::UnitDisk)
}

fn oriented(vertices: &[[f64; 2]], t: [usize; 3]) -> [usize; 3] {
    if signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
        [t[0], t[2], t[1]]
    } else {
        t
    }
}

/// Triangulate the annulus between two rings sorted by angle.
fn zip_rings(vertices: &[[f64; 2]], inner: &[usize], outer: &[usize], out: &mut Vec<[usize; 3]>) {
    let ang = |v: usize| polar_angle(vertices[v][0], vertices[v][1]);
    let a0 = ang(inner[0]);
    let unwrap = |v: usize, base: f64| base + (ang(v) - base).rem_euclid(2.0 * PI);
    // start the outer ring at the vertex closest in angle to inner[0]
    let j0 = (0..outer.len())
        .min_by(|&x, &y| wrap_angle(ang(outer[x]) - a0).abs().total_cmp(&wrap_angle(ang(outer[y]) - a0).abs()))
        .unwrap_or(0);
    let b0 = a0 + wrap_angle(ang(outer[j0]) - a0);
    let inner_angle = |i: usize| if i == inner.len() { a0 + 2.0 * PI } else { unwrap(inner[i], a0) };
    let outer_at = |j: usize| outer[(j0 + j) % outer.len()];
    let outer_angle = |j: usize| if j == outer.len() { b0 + 2.0 * PI } else { unwrap(outer_at(j), b0) };
    let (mut i, mut j) = (0, 0);
    while i < inner.len() || j < outer.len() {
        let advance_inner = j == outer.len() || (i < inner.len() && inner_angle(i + 1) < outer_angle(j + 1));
        let a = inner[i % inner.len()];
        let b = outer_at(j);
        if advance_inner {
            out.push(oriented(vertices, [a, b, inner[(i + 1) % inner.len()]]));
            i += 1;
        } else {
            out.push(oriented(vertices, [a, b, outer_at(j + 1)]));
            j += 1;
        }
    }
}

/// Flip interior edges until every one satisfies the Delaunay angle
/// condition. Terminates for any valid triangulation of a point set.
pub(crate) fn lawson_flips(vertices: &[[f64; 2]], triangles: &mut [[usize; 3]]) {
    let angle = |apex: usize, a: usize, b: usize| {
        let p = vertices[apex];
        let u = [vertices[a][0] - p[0], vertices[a][1] - p[1]];
        let v = [vertices[b][0] - p[0], vertices[b][1] - p[1]];
        (u[0] * v[1] - u[1] * v[0]).abs().atan2(u[0] * v[0] + u[1] * v[1])
    };
    for _pass in 0..10_000 {
        let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for l in 0..3 {
                edges.entry(edge_key(tri[l], tri[(l + 1) % 3])).or_default().push(t);
            }
        }
        let mut keys: Vec<_> = edges.iter().filter(|(_, ts)| ts.len() == 2).map(|(k, _)| *k).collect();
        keys.sort_unstable();
        let mut touched = vec![false; triangles.len()];
        let mut flipped = false;
        for (a, b) in keys {
            let ts = &edges[&(a, b)];
            let (t1, t2) = (ts[0], ts[1]);
            if touched[t1] || touched[t2] {
                continue;
            }
            let c = *triangles[t1].iter().find(|&&v| v != a && v != b).unwrap();
            let d = *triangles[t2].iter().find(|&&v| v != a && v != b).unwrap();
            if angle(c, a, b) + angle(d, a, b) > PI + 1e-10 {
                let n1 = oriented(vertices, [c, d, a]);
                let n2 = oriented(vertices, [c, d, b]);
                let ok = signed_area(vertices[n1[0]], vertices[n1[1]], vertices[n1[2]]) > 0.0
                    && signed_area(vertices[n2[0]], vertices[n2[1]], vertices[n2[2]]) > 0.0;
                if ok {
                    triangles[t1] = n1;
                    triangles[t2] = n2;
                    touched[t1] = true;
                    touched[t2] = true;
                    flipped = true;
                }
            }
        }
        if !flipped {
            return;
        }
    }
}

/// Nodal field on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    mesh: Arc<Mesh2D>,
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(mesh: Arc<Mesh2D>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::invalid(format!(
                "field has {} values for {} vertices",
                values.len(),
                mesh.num_vertices()
            )));
        }
        if let Some(vertex) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { vertex });
        }
        Ok(Self { mesh, values })
    }

    pub fn constant(mesh: Arc<Mesh2D>, c: f64) -> Self {
        let n = mesh.num_vertices();
        Self { mesh, values: vec![c; n] }
    }

    pub fn interpolate(mesh: Arc<Mesh2D>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = mesh.vertices().iter().map(|v| f(v[0], v[1])).collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh2D> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn boundary_min(&self) -> f64 {
        self.values
            .iter()
            .zip(self.mesh.boundary_flags())
            .filter(|(_, &b)| b)
            .map(|(v, _)| *v)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &DiscreteField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Constant gradient of the P1 interpolant on triangle `t`.
    pub fn gradient(&self, t: usize) -> [f64; 2] {
        gradient_on(&self.mesh, &self.values, t)
    }
}

pub(crate) fn gradient_on(mesh: &Mesh2D, values: &[f64], t: usize) -> [f64; 2] {
    let geo = mesh.geometry(t);
    let tri = mesh.triangles()[t];
    let mut g = [0.0; 2];
    for l in 0..3 {
        g[0] += values[tri[l]] * geo.grads[l][0];
        g[1] += values[tri[l]] * geo.grads[l][1];
    }
    g
}
