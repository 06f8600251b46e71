//! Assembly of `∫_Ω A∇u·∇φ + ∫_{∂Ω} b u·φ = ∫_Ω F·φ + ∫_{∂Ω} g·φ` with
//! P1 elements, vertex-major dofs `v·m + α`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use super::krylov::{prolongations, Prolongation};
use super::mesh::{BoundaryEdge, TriMesh};
use super::sparse::Csr;
use crate::error::{HomolabError, Result};
use crate::fields::{quadratic_form_matrix, symmetric_extremes, FieldKind, PeriodicField};
use crate::quadrature::{GaussLegendre, TRIANGLE_ORDER4};

/// Pointwise data `x ↦ values`.
pub type PointFn = dyn Fn(&[f64; 2], &mut [f64]) + Send + Sync;

/// Coefficient or source term. Diffusion data of length 1, `d²` or `m²d²`
/// means `a·δ_ij δ^{αβ}`, `a_ij δ^{αβ}` or the full tensor `a_ij^{αβ}`
/// (layout `((α·m + β)·d + i)·d + j`). Robin data of length 1 or `m²` is
/// `b·I` or the matrix `b^{αβ}`. Sources have length `m`.
#[derive(Clone)]
pub enum Coefficient {
    Constant(Vec<f64>),
    /// `field(x/ε) + offset`.
    Oscillating {
        field: PeriodicField,
        eps: f64,
        offset: Vec<f64>,
    },
    Function {
        len: usize,
        f: Arc<PointFn>,
    },
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Coefficient::Oscillating { field, eps, offset } => {
                f.debug_struct("Oscillating").field("kind", &field.kind()).field("eps", eps).field("offset", offset).finish()
            }
            Coefficient::Function { len, .. } => f.debug_struct("Function").field("len", len).finish(),
        }
    }
}

impl Coefficient {
    pub fn oscillating(field: PeriodicField, eps: f64) -> Self {
        let offset = vec![0.0; field.components()];
        Coefficient::Oscillating { field, eps, offset }
    }

    pub fn function(len: usize, f: impl Fn(&[f64; 2], &mut [f64]) + Send + Sync + 'static) -> Self {
        Coefficient::Function { len, f: Arc::new(f) }
    }

    pub fn len(&self) -> usize {
        match self {
            Coefficient::Constant(v) => v.len(),
            Coefficient::Oscillating { field, .. } => field.components(),
            Coefficient::Function { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eval(&self, x: &[f64; 2], out: &mut [f64]) {
        match self {
            Coefficient::Constant(v) => out.copy_from_slice(v),
            Coefficient::Oscillating { field, eps, offset } => {
                field.evaluate_into(&[x[0] / eps, x[1] / eps], out);
                out.iter_mut().zip(offset).for_each(|(o, c)| *o += c);
            }
            Coefficient::Function { f, .. } => f(x, out),
        }
    }

    /// Shortest physical wavelength `ε/|k|_max` of an oscillating term.
    pub fn wavelength(&self) -> Option<f64> {
        match self {
            Coefficient::Oscillating { field, eps, .. } => {
                let k = field.minus_mean().max_wavenumber();
                (k > 0.0).then(|| eps / k)
            }
            _ => None,
        }
    }

    /// The `ε` of a non-constant oscillating term.
    pub fn oscillation_eps(&self) -> Option<f64> {
        match self {
            Coefficient::Oscillating { eps, .. } if self.wavelength().is_some() => Some(*eps),
            _ => None,
        }
    }
}

/// Data of a Robin problem for `m` unknown components.
#[derive(Debug, Clone)]
pub struct RobinProblem {
    pub m: usize,
    pub a: Coefficient,
    pub b: Coefficient,
    pub f: Option<Coefficient>,
    pub g: Option<Coefficient>,
}

impl RobinProblem {
    pub fn scalar(a: Coefficient, b: Coefficient) -> Self {
        Self { m: 1, a, b, f: None, g: None }
    }

    pub fn with_volume_source(mut self, f: Coefficient) -> Self {
        self.f = Some(f);
        self
    }

    pub fn with_boundary_source(mut self, g: Coefficient) -> Self {
        self.g = Some(g);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofMap {
    pub n_vertices: usize,
    pub m: usize,
}

impl DofMap {
    pub fn dof(&self, vertex: usize, component: usize) -> usize {
        vertex * self.m + component
    }

    pub fn len(&self) -> usize {
        self.n_vertices * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Assembled variational system.
#[derive(Debug, Clone)]
pub struct RobinSystem {
    pub mesh: Arc<TriMesh>,
    pub dof_map: DofMap,
    /// Full operator `K + B`.
    pub operator: Csr,
    /// Robin part `B` alone, on its own boundary pattern.
    pub boundary_mass: Csr,
    pub load: Vec<f64>,
    /// `∫_{∂Ω} φ_v dσ` per vertex.
    pub boundary_weights: Vec<f64>,
    pub boundary_measure: f64,
    /// Smallest eigenvalue of the symmetric part of `A` met at a
    /// quadrature point.
    pub a_lower: f64,
    /// Same for `b`; `b ≡ 0` leaves a pure Neumann operator.
    pub b_lower: f64,
    pub prolong: Vec<Prolongation>,
}

impl RobinSystem {
    /// `load − (K + B)u` per dof.
    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; u.len()];
        self.operator.matvec(u, &mut r);
        r.iter().zip(&self.load).map(|(a, l)| l - a).collect()
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.operator.is_symmetric(rel_tol)
    }
}

/// Element chunk size for parallel element computations; chunks are
/// scattered in order so assembly is deterministic.
const CHUNK: usize = 65_536;

/// Gauss points per boundary panel.
const EDGE_NODES: usize = 8;

/// Barycentric gradients and area of a triangle.
pub(crate) fn p1_gradients(p: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let g = [
        [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
        [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
        [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
    ];
    (g, 0.5 * det)
}

/// Expands diffusion data into the full tensor layout.
fn expand_a(raw: &[f64], m: usize, out: &mut [f64]) {
    const D: usize = 2;
    match raw.len() {
        1 => {
            out.iter_mut().for_each(|v| *v = 0.0);
            for a in 0..m {
                for i in 0..D {
                    out[((a * m + a) * D + i) * D + i] = raw[0];
                }
            }
        }
        4 if m > 1 => {
            out.iter_mut().for_each(|v| *v = 0.0);
            for a in 0..m {
                for k in 0..D * D {
                    out[(a * m + a) * D * D + k] = raw[k];
                }
            }
        }
        _ => out.copy_from_slice(raw),
    }
}

fn expand_b(raw: &[f64], m: usize, out: &mut [f64]) {
    if raw.len() == 1 {
        out.iter_mut().for_each(|v| *v = 0.0);
        for a in 0..m {
            out[a * m + a] = raw[0];
        }
    } else {
        out.copy_from_slice(raw);
    }
}

fn check_len(name: &str, c: &Coefficient, allowed: &[usize]) -> Result<()> {
    if allowed.contains(&c.len()) {
        Ok(())
    } else {
        Err(HomolabError::Config(format!("{name} has {} components, expected one of {allowed:?}", c.len())))
    }
}

/// Boundary edge quadrature: `(x, weight, λ0, λ1)` with the basis linear in
/// the chart parameter. Without a chart the edge is straight.
pub(crate) fn edge_nodes(mesh: &TriMesh, e: &BoundaryEdge, max_panel: f64, rule: &GaussLegendre) -> Vec<([f64; 2], f64, f64, f64)> {
    let pa = mesh.vertices[e.v[0] as usize];
    let pb = mesh.vertices[e.v[1] as usize];
    let chord = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
    let panels = ((1.25 * chord / max_panel).ceil() as usize).max(1);
    let mut out = Vec::with_capacity(panels * rule.len());
    match &mesh.surface {
        Some(s) => {
            let piece = &s.pieces()[e.piece as usize];
            let (t0, t1) = (e.t[0], e.t[1]);
            let dt = (t1 - t0) / panels as f64;
            for k in 0..panels {
                let a = t0 + k as f64 * dt;
                for (t, w) in rule.on_interval(a, a + dt) {
                    let j = piece.jet(t);
                    let l1 = (t - t0) / (t1 - t0);
                    out.push((j.x, w * j.d1[0].hypot(j.d1[1]), 1.0 - l1, l1));
                }
            }
        }
        None => {
            for k in 0..panels {
                let a = k as f64 / panels as f64;
                for (s, w) in rule.on_interval(a, a + 1.0 / panels as f64) {
                    let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                    out.push((x, w * chord, 1.0 - s, s));
                }
            }
        }
    }
    out
}

struct ElementOut {
    k: Vec<f64>,
    f: Vec<f64>,
    a_lower: f64,
}

pub fn assemble_robin(mesh: &Arc<TriMesh>, problem: &RobinProblem) -> Result<RobinSystem> {
    const D: usize = 2;
    let m = problem.m;
    if m == 0 {
        return Err(HomolabError::Config("system size must be positive".into()));
    }
    check_len("diffusion coefficient", &problem.a, &[1, D * D, m * m * D * D])?;
    check_len("Robin coefficient", &problem.b, &[1, m * m])?;
    for (name, s) in [("volume source", &problem.f), ("boundary source", &problem.g)] {
        if let Some(s) = s {
            check_len(name, s, &[m])?;
        }
    }
    let terms = [Some(&problem.a), Some(&problem.b), problem.f.as_ref(), problem.g.as_ref()];
    if let Some(eps) = terms.iter().flatten().filter_map(|c| c.oscillation_eps()).reduce(f64::min) {
        if mesh.h > eps / 4.0 {
            return Err(HomolabError::UnderResolved { h: mesh.h, limit: eps / 4.0 });
        }
    }
    let nv = mesh.n_vertices();
    let dofs = DofMap { n_vertices: nv, m };
    let mut operator = Csr::block_pattern(nv, &mesh.triangles, m);
    let mut load = vec![0.0; nv * m];
    let ne = 3 * m;
    let tensor_len = m * m * D * D;
    let mut a_lower = f64::INFINITY;

    let element = |t: usize| -> ElementOut {
        let p = mesh.triangle_points(t);
        let (g, area) = p1_gradients(&p);
        let mut k = vec![0.0; ne * ne];
        let mut f = vec![0.0; ne];
        let mut raw = vec![0.0; problem.a.len()];
        let mut a = vec![0.0; tensor_len];
        let mut src = vec![0.0; m];
        let mut lower = f64::INFINITY;
        for (bary, &w) in TRIANGLE_ORDER4.points.iter().zip(TRIANGLE_ORDER4.weights) {
            let x = [bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0], bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1]];
            let wq = w * area;
            problem.a.eval(&x, &mut raw);
            expand_a(&raw, m, &mut a);
            lower = lower.min(match raw.len() {
                1 => raw[0],
                4 if m > 1 => symmetric_extremes(&raw, 2).0,
                _ => symmetric_extremes(&quadratic_form_matrix(FieldKind::Tensor4(m), D, &a), m * D).0,
            });
            for r in 0..3 {
                for al in 0..m {
                    for c in 0..3 {
                        for be in 0..m {
                            let mut s = 0.0;
                            for i in 0..D {
                                for j in 0..D {
                                    s += a[((al * m + be) * D + i) * D + j] * g[c][j] * g[r][i];
                                }
                            }
                            k[(r * m + al) * ne + c * m + be] += wq * s;
                        }
                    }
                }
            }
            if let Some(fs) = &problem.f {
                fs.eval(&x, &mut src);
                for r in 0..3 {
                    for al in 0..m {
                        f[r * m + al] += wq * bary[r] * src[al];
                    }
                }
            }
        }
        ElementOut { k, f, a_lower: lower }
    };

    let nt = mesh.triangles.len();
    for start in (0..nt).step_by(CHUNK) {
        let end = (start + CHUNK).min(nt);
        let outs: Vec<ElementOut> = (start..end).into_par_iter().map(element).collect();
        for (t, out) in (start..end).zip(outs) {
            a_lower = a_lower.min(out.a_lower);
            let tri = mesh.triangles[t];
            for r in 0..3 {
                for al in 0..m {
                    let row = tri[r] as usize * m + al;
                    load[row] += out.f[r * m + al];
                    for c in 0..3 {
                        for be in 0..m {
                            operator.add(row, tri[c] as usize * m + be, out.k[(r * m + al) * ne + c * m + be]);
                        }
                    }
                }
            }
        }
    }
    if !(a_lower > 0.0) {
        return Err(HomolabError::NotElliptic { mu_lower: a_lower });
    }

    // boundary terms
    let wavelength = terms.iter().flatten().filter_map(|c| c.wavelength()).fold(f64::INFINITY, f64::min);
    let max_panel = (0.5 * wavelength).min(mesh.h.max(f64::MIN_POSITIVE));
    let rule = GaussLegendre::new(EDGE_NODES);
    let mut boundary_trip = Vec::new();
    let mut boundary_weights = vec![0.0; nv];
    let mut b_lower = f64::INFINITY;
    let mut braw = vec![0.0; problem.b.len()];
    let mut bm = vec![0.0; m * m];
    let mut gv = vec![0.0; m];
    for e in &mesh.boundary_edges {
        let v = [e.v[0] as usize, e.v[1] as usize];
        for (x, w, l0, l1) in edge_nodes(mesh, e, max_panel, &rule) {
            let lam = [l0, l1];
            boundary_weights[v[0]] += w * l0;
            boundary_weights[v[1]] += w * l1;
            problem.b.eval(&x, &mut braw);
            expand_b(&braw, m, &mut bm);
            b_lower = b_lower.min(symmetric_extremes(&bm, m).0);
            for r in 0..2 {
                for c in 0..2 {
                    let wl = w * lam[r] * lam[c];
                    for al in 0..m {
                        for be in 0..m {
                            let val = bm[al * m + be];
                            if val != 0.0 {
                                let (i, j) = (v[r] * m + al, v[c] * m + be);
                                operator.add(i, j, wl * val);
                                boundary_trip.push((i as u32, j as u32, wl * val));
                            }
                        }
                    }
                }
            }
            if let Some(g) = &problem.g {
                g.eval(&x, &mut gv);
                for r in 0..2 {
                    for al in 0..m {
                        load[v[r] * m + al] += w * lam[r] * gv[al];
                    }
                }
            }
        }
    }
    if load.iter().any(|v| !v.is_finite()) {
        return Err(HomolabError::InvalidField("non-finite load".into()));
    }
    let boundary_measure = boundary_weights.iter().sum();
    Ok(RobinSystem {
        mesh: Arc::clone(mesh),
        dof_map: dofs,
        operator,
        boundary_mass: Csr::from_triplets(nv * m, boundary_trip),
        load,
        boundary_weights,
        boundary_measure,
        a_lower,
        b_lower,
        prolong: prolongations(mesh, m),
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::fem::mesh::mesh_domain;
    use crate::geometry::SurfaceChart;

    fn disk(h: f64) -> Arc<TriMesh> {
        Arc::new(mesh_domain(&SurfaceChart::circle(1.0).unwrap(), h).unwrap())
    }

    #[test]
    fn boundary_weights_sum_to_perimeter() {
        let mesh = disk(0.1);
        let sys = assemble_robin(&mesh, &RobinProblem::scalar(Coefficient::Constant(vec![1.0]), Coefficient::Constant(vec![1.0]))).unwrap();
        assert!((sys.boundary_measure - 2.0 * PI).abs() < 1e-12);
        assert!(sys.is_symmetric(1e-12));
        // constants lie in the kernel of the stiffness
        let ones = vec![1.0; mesh.n_vertices()];
        let mut k1 = vec![0.0; ones.len()];
        let mut b1 = vec![0.0; ones.len()];
        sys.operator.matvec(&ones, &mut k1);
        sys.boundary_mass.matvec(&ones, &mut b1);
        assert!(k1.iter().zip(&b1).all(|(k, b)| (k - b).abs() < 1e-12));
    }

    #[test]
    fn under_resolved_oscillation_is_rejected() {
        let mesh = disk(0.1);
        let lam = PeriodicField::trig_scalar(2, 2.0, &[(vec![1, 0], 0.0, 1.0)]).unwrap();
        let p = RobinProblem::scalar(Coefficient::oscillating(lam, 0.125), Coefficient::Constant(vec![1.0]));
        assert!(matches!(assemble_robin(&mesh, &p), Err(HomolabError::UnderResolved { .. })));
    }

    #[test]
    fn non_elliptic_diffusion_is_rejected() {
        let mesh = disk(0.2);
        let p = RobinProblem::scalar(Coefficient::function(1, |x, o| o[0] = x[0]), Coefficient::Constant(vec![1.0]));
        assert!(matches!(assemble_robin(&mesh, &p), Err(HomolabError::NotElliptic { .. })));
    }

    #[test]
    fn zero_robin_coefficient_gives_zero_boundary_mass() {
        let mesh = disk(0.2);
        let sys = assemble_robin(&mesh, &RobinProblem::scalar(Coefficient::Constant(vec![1.0]), Coefficient::Constant(vec![0.0]))).unwrap();
        assert_eq!(sys.boundary_mass.frobenius(), 0.0);
        assert_eq!(sys.b_lower, 0.0);
    }

    #[test]
    fn system_blocks_follow_component_layout() {
        let mesh = disk(0.25);
        let a = Coefficient::Constant(vec![1.0]);
        let b = Coefficient::Constant(vec![2.0, 0.5, 0.5, 1.0]);
        let sys = assemble_robin(&mesh, &RobinProblem { m: 2, a, b, f: None, g: None }).unwrap();
        assert!(sys.is_symmetric(1e-12));
        let (c, v) = sys.boundary_mass.row(0);
        let cross: f64 = c.iter().zip(v).filter(|(&j, _)| j % 2 == 1).map(|(_, &x)| x).sum();
        let diag: f64 = c.iter().zip(v).filter(|(&j, _)| j % 2 == 0).map(|(_, &x)| x).sum();
        assert!((cross / diag - 0.25).abs() < 1e-12);
    }
}
