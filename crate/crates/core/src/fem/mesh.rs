//! Boundary-fitted triangulations with a nested refinement hierarchy.
//!
//! A coarse constrained Delaunay mesh is built with `h₀ = h·2^k ≤ diam/8`,
//! then refined `k` times by splitting every triangle into four. New
//! boundary vertices are placed on the exact curve at the parametric
//! midpoint, so every level keeps its boundary vertices on the chart.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use crate::error::{HomolabError, Result};
use crate::geometry::SurfaceChart;

/// Mesh edge on `∂Ω` approximating `γ_piece([t0, t1])`, with the domain on
/// its left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub v: [u32; 2],
    pub piece: u32,
    pub t: [f64; 2],
}

/// One level below the finest: vertex count and the parents of every
/// vertex added by the next refinement.
#[derive(Debug, Clone, Default)]
pub struct Level {
    pub n_vertices: usize,
    pub triangles: Vec<[u32; 3]>,
    /// `parents[i]` are the endpoints of the edge whose midpoint became
    /// vertex `n_vertices + i` on the next finer level.
    pub parents: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Default)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[u32; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Requested size.
    pub h_target: f64,
    /// Longest edge.
    pub h: f64,
    /// Coarser levels, coarsest first.
    pub hierarchy: Vec<Level>,
    /// Chart the boundary edges refer to; absent for loaded meshes.
    pub surface: Option<Arc<SurfaceChart>>,
}

/// Upper bound on fine-mesh vertices accepted by `mesh_domain`.
pub const DEFAULT_VERTEX_BUDGET: usize = 12_000_000;

pub fn mesh_domain(surface: &SurfaceChart, h: f64) -> Result<TriMesh> {
    mesh_domain_with_budget(surface, h, DEFAULT_VERTEX_BUDGET)
}

pub fn mesh_domain_with_budget(surface: &SurfaceChart, h: f64, budget: usize) -> Result<TriMesh> {
    if surface.dim() != 2 {
        return Err(HomolabError::InvalidSurface("volume meshes are available for planar domains only".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(HomolabError::Config(format!("mesh size must be positive, got {h}")));
    }
    let bb = surface.bounding_box();
    let diam = (bb[2] - bb[0]).hypot(bb[3] - bb[1]);
    let mut levels = 0u32;
    while h * 2f64.powi(levels as i32 + 1) <= diam / 8.0 {
        levels += 1;
    }
    let h0 = h * 2f64.powi(levels as i32);
    // about (2/√3) area / h² vertices on the fine mesh
    let area = surface.enclosed_measure().abs();
    let estimate = (1.2 * area / (h * h)) as usize;
    if estimate > budget {
        return Err(HomolabError::NodeBudgetExceeded { required: estimate, budget });
    }
    let mut mesh = coarse_mesh(surface, h0)?;
    for _ in 0..levels {
        mesh = refine(surface, mesh);
    }
    mesh.h_target = h;
    mesh.h = mesh.longest_edge();
    mesh.surface = Some(Arc::new(surface.clone()));
    Ok(mesh)
}

/// Parameters `t_k` splitting a piece into `n` arcs of equal length.
fn arc_length_params(surface: &SurfaceChart, piece: usize, n: usize) -> Vec<f64> {
    let p = &surface.pieces()[piece];
    let (t0, t1) = p.interval();
    let samples = 4096;
    let speed = |t: f64| {
        let d = p.jet(t).d1;
        d[0].hypot(d[1])
    };
    let mut cum = vec![0.0; samples + 1];
    let dt = (t1 - t0) / samples as f64;
    // Simpson on each sample cell
    for i in 0..samples {
        let a = t0 + i as f64 * dt;
        cum[i + 1] = cum[i] + dt / 6.0 * (speed(a) + 4.0 * speed(a + 0.5 * dt) + speed(a + dt));
    }
    let total = cum[samples];
    let mut out = Vec::with_capacity(n + 1);
    out.push(t0);
    let mut j = 0;
    for k in 1..n {
        let target = total * k as f64 / n as f64;
        while cum[j + 1] < target {
            j += 1;
        }
        let frac = (target - cum[j]) / (cum[j + 1] - cum[j]);
        out.push(t0 + (j as f64 + frac) * dt);
    }
    out.push(t1);
    out
}

fn coarse_mesh(surface: &SurfaceChart, h0: f64) -> Result<TriMesh> {
    let spacing = 0.9 * h0;
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
    let insert = |cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>, x: [f64; 2]| {
        cdt.insert(Point2::new(x[0], x[1])).map_err(|e| HomolabError::InvalidSurface(format!("mesh insertion failed at {x:?}: {e:?}")))
    };
    // boundary vertices, counterclockwise, with (piece, t) of each arc
    let mut ring: Vec<(spade::handles::FixedVertexHandle, u32, f64, f64)> = Vec::new();
    for piece in 0..surface.pieces().len() {
        let len = surface.piece_measure(piece);
        let n = ((len / spacing).ceil() as usize).max(if surface.pieces().len() == 1 { 8 } else { 1 });
        let ts = arc_length_params(surface, piece, n);
        for k in 0..n {
            let handle = insert(&mut cdt, surface.point(piece, ts[k]))?;
            ring.push((handle, piece as u32, ts[k], ts[k + 1]));
        }
    }
    let nb = ring.len();
    for i in 0..nb {
        let (a, ..) = ring[i];
        let (b, ..) = ring[(i + 1) % nb];
        if a == b {
            return Err(HomolabError::InvalidSurface("boundary vertices coincide; mesh size too coarse".into()));
        }
        if cdt.can_add_constraint(a, b) {
            cdt.add_constraint(a, b);
        } else {
            return Err(HomolabError::InvalidSurface("boundary constraint edges intersect".into()));
        }
    }
    // hexagonal interior lattice away from the boundary
    let bb = surface.bounding_box();
    let dy = spacing * 3f64.sqrt() / 2.0;
    let rows = ((bb[3] - bb[1]) / dy).ceil() as i64 + 1;
    let cols = ((bb[2] - bb[0]) / spacing).ceil() as i64 + 1;
    for r in 0..rows {
        let y = bb[1] + r as f64 * dy;
        let shift = if r % 2 == 0 { 0.0 } else { 0.5 * spacing };
        for c in 0..cols {
            let x = [bb[0] + shift + c as f64 * spacing, y];
            let pr = surface.project(x);
            if pr.signed_distance < -0.55 * h0 {
                insert(&mut cdt, x)?;
            }
        }
    }
    let result = cdt.refine(
        RefinementParameters::<f64>::new()
            .with_angle_limit(AngleLimit::from_deg(25.0))
            .keep_constraint_edges()
            .exclude_outer_faces(true)
            .with_max_additional_vertices(20 * cdt.num_vertices() + 1000),
    );
    let excluded: HashSet<_> = result.excluded_faces.iter().copied().collect();
    // compact vertex numbering over the kept faces, boundary ring first
    let mut index: HashMap<usize, u32> = HashMap::new();
    let mut vertices = Vec::new();
    for (h, ..) in &ring {
        let p = cdt.vertex(*h).position();
        index.insert(h.index(), vertices.len() as u32);
        vertices.push([p.x, p.y]);
    }
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let vs = face.vertices();
        let mut tri = [0u32; 3];
        for (slot, v) in tri.iter_mut().zip(vs.iter()) {
            let next = vertices.len() as u32;
            *slot = *index.entry(v.fix().index()).or_insert_with(|| {
                let p = v.position();
                vertices.push([p.x, p.y]);
                next
            });
        }
        triangles.push(tri);
    }
    // snap ring vertices exactly onto the chart
    for (i, (_, piece, t0, _)) in ring.iter().enumerate() {
        vertices[i] = surface.point(*piece as usize, *t0);
    }
    let boundary_edges = (0..nb)
        .map(|i| {
            let (_, piece, t0, t1) = ring[i];
            BoundaryEdge { v: [i as u32, ((i + 1) % nb) as u32], piece, t: [t0, t1] }
        })
        .collect();
    let mut mesh = TriMesh { vertices, triangles, boundary_edges, h_target: h0, h: 0.0, hierarchy: Vec::new(), surface: None };
    mesh.orient();
    mesh.smooth(3);
    mesh.h = mesh.longest_edge();
    mesh.validate()?;
    Ok(mesh)
}

fn edge_key(a: u32, b: u32) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64
}

/// Splits every triangle into four; boundary midpoints go onto the chart.
fn refine(surface: &SurfaceChart, mesh: TriMesh) -> TriMesh {
    let nv = mesh.vertices.len();
    let mut mid: HashMap<u64, u32> = HashMap::with_capacity(mesh.triangles.len() * 3 / 2 + 16);
    let mut vertices = mesh.vertices.clone();
    let mut parents = Vec::with_capacity(mesh.triangles.len() * 3 / 2);
    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<[f64; 2]>| -> u32 {
        *mid.entry(edge_key(a, b)).or_insert_with(|| {
            let (pa, pb) = (vertices[a as usize], vertices[b as usize]);
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            parents.push([a, b]);
            (vertices.len() - 1) as u32
        })
    };
    for &[a, b, c] in &mesh.triangles {
        let ab = midpoint(a, b, &mut vertices);
        let bc = midpoint(b, c, &mut vertices);
        let ca = midpoint(c, a, &mut vertices);
        triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
    }
    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let m = mid[&edge_key(e.v[0], e.v[1])];
        let tm = 0.5 * (e.t[0] + e.t[1]);
        vertices[m as usize] = surface.point(e.piece as usize, tm);
        boundary_edges.push(BoundaryEdge { v: [e.v[0], m], piece: e.piece, t: [e.t[0], tm] });
        boundary_edges.push(BoundaryEdge { v: [m, e.v[1]], piece: e.piece, t: [tm, e.t[1]] });
    }
    let mut hierarchy = mesh.hierarchy;
    hierarchy.push(Level { n_vertices: nv, triangles: mesh.triangles, parents });
    TriMesh { vertices, triangles, boundary_edges, h_target: 0.5 * mesh.h_target, h: 0.5 * mesh.h, hierarchy, surface: mesh.surface }
}

impl TriMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_points(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Twice the signed area.
    pub fn area2(&self, t: usize) -> f64 {
        let [p, q, r] = self.triangle_points(t);
        (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| 0.5 * self.area2(t)).sum()
    }

    fn orient(&mut self) {
        for t in 0..self.triangles.len() {
            if self.area2(t) < 0.0 {
                self.triangles[t].swap(1, 2);
            }
        }
    }

    pub fn longest_edge(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in 0..self.triangles.len() {
            let p = self.triangle_points(t);
            for i in 0..3 {
                let (a, b) = (p[i], p[(i + 1) % 3]);
                h = h.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        h
    }

    /// Smallest interior angle in degrees.
    pub fn min_angle(&self) -> f64 {
        let mut best = 180.0f64;
        for t in 0..self.triangles.len() {
            let p = self.triangle_points(t);
            for i in 0..3 {
                let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                best = best.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        best
    }

    pub fn is_boundary_vertex(&self) -> Vec<bool> {
        let mut flag = vec![false; self.vertices.len()];
        for e in &self.boundary_edges {
            flag[e.v[0] as usize] = true;
            flag[e.v[1] as usize] = true;
        }
        flag
    }

    /// Laplacian smoothing of interior vertices, undone where it would
    /// invert a triangle.
    fn smooth(&mut self, sweeps: usize) {
        let boundary = self.is_boundary_vertex();
        let mut nbrs: Vec<Vec<u32>> = vec![Vec::new(); self.vertices.len()];
        let mut incident: Vec<Vec<u32>> = vec![Vec::new(); self.vertices.len()];
        for (ti, t) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                incident[t[i] as usize].push(ti as u32);
                for j in 0..3 {
                    if i != j && !nbrs[t[i] as usize].contains(&t[j]) {
                        nbrs[t[i] as usize].push(t[j]);
                    }
                }
            }
        }
        for _ in 0..sweeps {
            for v in 0..self.vertices.len() {
                if boundary[v] || nbrs[v].is_empty() {
                    continue;
                }
                let old = self.vertices[v];
                let k = nbrs[v].len() as f64;
                let cx = nbrs[v].iter().map(|&u| self.vertices[u as usize][0]).sum::<f64>() / k;
                let cy = nbrs[v].iter().map(|&u| self.vertices[u as usize][1]).sum::<f64>() / k;
                let before = incident[v].iter().map(|&t| self.local_quality(t as usize)).fold(f64::INFINITY, f64::min);
                self.vertices[v] = [cx, cy];
                let after = incident[v].iter().map(|&t| self.local_quality(t as usize)).fold(f64::INFINITY, f64::min);
                if after < before {
                    self.vertices[v] = old;
                }
            }
        }
    }

    /// Signed area over squared longest edge; negative when inverted.
    fn local_quality(&self, t: usize) -> f64 {
        let p = self.triangle_points(t);
        let mut l: f64 = 0.0;
        for i in 0..3 {
            let (a, b) = (p[i], p[(i + 1) % 3]);
            l = l.max((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2));
        }
        self.area2(t) / l
    }

    /// Conformity checks: positive areas, each interior edge shared by two
    /// triangles, boundary edges by one.
    pub fn validate(&self) -> Result<()> {
        for t in 0..self.triangles.len() {
            if !(self.area2(t) > 0.0) {
                return Err(HomolabError::InvalidSurface(format!("triangle {t} is inverted or degenerate")));
            }
        }
        let mut count: HashMap<u64, u8> = HashMap::with_capacity(self.triangles.len() * 2);
        for t in &self.triangles {
            for i in 0..3 {
                *count.entry(edge_key(t[i], t[(i + 1) % 3])).or_default() += 1;
            }
        }
        let boundary: HashSet<u64> = self.boundary_edges.iter().map(|e| edge_key(e.v[0], e.v[1])).collect();
        for (k, c) in &count {
            let expect = if boundary.contains(k) { 1 } else { 2 };
            if *c != expect {
                return Err(HomolabError::InvalidSurface(format!("edge {k:x} is shared by {c} triangles")));
            }
        }
        if boundary.iter().any(|k| !count.contains_key(k)) {
            return Err(HomolabError::InvalidSurface("boundary edge without a triangle".into()));
        }
        Ok(())
    }

    /// Largest distance of a boundary vertex from the chart.
    pub fn boundary_deviation(&self, surface: &SurfaceChart) -> f64 {
        self.boundary_edges
            .iter()
            .map(|e| {
                let p = surface.point(e.piece as usize, e.t[0]);
                let v = self.vertices[e.v[0] as usize];
                (p[0] - v[0]).hypot(p[1] - v[1])
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    #[test]
    fn disk_area_and_quality() {
        let c = SurfaceChart::circle(1.0).unwrap();
        let m = mesh_domain(&c, 0.1).unwrap();
        assert!((m.area() - PI).abs() < 5e-3, "{}", m.area());
        assert!(m.min_angle() >= 20.0, "{}", m.min_angle());
        assert!(m.h <= 0.1 * 1.3, "{}", m.h);
        assert!(m.boundary_deviation(&c) < 1e-12);
        m.validate().unwrap();
    }

    #[test]
    fn square_area_is_exact() {
        let sq = SurfaceChart::polygon(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let m = mesh_domain(&sq, 0.25).unwrap();
        assert!((m.area() - 1.0).abs() < 1e-14);
        m.validate().unwrap();
    }

    #[test]
    fn ellipse_area() {
        let e = SurfaceChart::ellipse(2.0, 1.0).unwrap();
        let m = mesh_domain(&e, 0.05).unwrap();
        assert!((m.area() - 2.0 * PI).abs() < 2e-3, "{}", m.area());
        assert!(m.min_angle() >= 20.0, "{}", m.min_angle());
        assert!(m.boundary_deviation(&e) < 1e-12);
    }

    #[test]
    fn hierarchy_is_nested() {
        let c = SurfaceChart::circle(1.0).unwrap();
        let m = mesh_domain(&c, 0.05).unwrap();
        assert_eq!(m.hierarchy.len(), 2);
        let mut nv = m.hierarchy[0].n_vertices;
        for lvl in &m.hierarchy {
            assert_eq!(lvl.n_vertices, nv);
            nv += lvl.parents.len();
        }
        assert_eq!(nv, m.n_vertices());
        assert_eq!(m.triangles.len(), 16 * m.hierarchy[0].triangles.len());
    }

    #[test]
    fn budget_is_enforced() {
        let c = SurfaceChart::circle(1.0).unwrap();
        assert!(matches!(mesh_domain_with_budget(&c, 1e-3, 1000), Err(HomolabError::NodeBudgetExceeded { .. })));
    }
}
