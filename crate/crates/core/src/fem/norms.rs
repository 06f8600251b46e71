//! Norms of P1 fields on the mesh and its boundary.

use serde::{Deserialize, Serialize};

use super::assembly::{edge_nodes, p1_gradients};
use super::solve::FieldOnMesh;
use crate::error::{HomolabError, Result};
use crate::quadrature::{GaussLegendre, TRIANGLE_ORDER4};

/// Pointwise magnitudes are Euclidean over components (and gradient
/// entries).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "norm", content = "p", rename_all = "snake_case")]
pub enum Norm {
    L2,
    H1,
    H1Semi,
    Lp(f64),
    GradLp(f64),
    L2Boundary,
    LpBoundary(f64),
    /// Maximum over vertices, which is the maximum of a P1 field.
    Linf,
}

impl Norm {
    pub fn label(&self) -> String {
        match self {
            Norm::L2 => "l2".into(),
            Norm::H1 => "h1".into(),
            Norm::H1Semi => "h1_semi".into(),
            Norm::Lp(p) => format!("l{p}"),
            Norm::GradLp(p) => format!("grad_l{p}"),
            Norm::L2Boundary => "l2_boundary".into(),
            Norm::LpBoundary(p) => format!("l{p}_boundary"),
            Norm::Linf => "linf".into(),
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(HomolabError::Config(format!("norm exponent must lie in [1, ∞], got {p}")))
    }
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_abs(u: &FieldOnMesh) -> f64 {
    u.values.chunks(u.m).map(euclid).fold(0.0, f64::max)
}

/// `∫_Ω |u|^p` (`grad = false`) or `∫_Ω |∇u|^p`.
fn domain_power(u: &FieldOnMesh, p: f64, grad: bool) -> f64 {
    let mesh = &u.mesh;
    let m = u.m;
    let mut total = 0.0;
    let mut val = vec![0.0; m];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let pts = mesh.triangle_points(t);
        let (g, area) = p1_gradients(&pts);
        if grad {
            let mut s = 0.0;
            for a in 0..m {
                for i in 0..2 {
                    let d: f64 = (0..3).map(|k| g[k][i] * u.values[tri[k] as usize * m + a]).sum();
                    s += d * d;
                }
            }
            total += area * s.sqrt().powf(p);
            continue;
        }
        for (bary, &w) in TRIANGLE_ORDER4.points.iter().zip(TRIANGLE_ORDER4.weights) {
            for (a, v) in val.iter_mut().enumerate() {
                *v = (0..3).map(|k| bary[k] * u.values[tri[k] as usize * m + a]).sum();
            }
            total += w * area * euclid(&val).powf(p);
        }
    }
    total
}

fn boundary_power(u: &FieldOnMesh, p: f64) -> f64 {
    let mesh = &u.mesh;
    let m = u.m;
    let rule = GaussLegendre::new(8);
    let mut total = 0.0;
    let mut val = vec![0.0; m];
    for e in &mesh.boundary_edges {
        for (_, w, l0, l1) in edge_nodes(mesh, e, f64::INFINITY, &rule) {
            for (a, v) in val.iter_mut().enumerate() {
                *v = l0 * u.values[e.v[0] as usize * m + a] + l1 * u.values[e.v[1] as usize * m + a];
            }
            total += w * euclid(&val).powf(p);
        }
    }
    total
}

pub fn norm(u: &FieldOnMesh, which: Norm) -> Result<f64> {
    Ok(match which {
        Norm::L2 => domain_power(u, 2.0, false).sqrt(),
        Norm::H1Semi => domain_power(u, 2.0, true).sqrt(),
        Norm::H1 => (domain_power(u, 2.0, false) + domain_power(u, 2.0, true)).sqrt(),
        Norm::Lp(p) if p.is_infinite() => max_abs(u),
        Norm::Lp(p) => {
            check_p(p)?;
            domain_power(u, p, false).powf(1.0 / p)
        }
        Norm::GradLp(p) if p.is_infinite() => {
            let mut worst: f64 = 0.0;
            let probe = |k: usize| {
                let mut s = 0.0;
                let (g, _) = p1_gradients(&u.mesh.triangle_points(k));
                let tri = u.mesh.triangles[k];
                for a in 0..u.m {
                    for i in 0..2 {
                        let d: f64 = (0..3).map(|c| g[c][i] * u.values[tri[c] as usize * u.m + a]).sum();
                        s += d * d;
                    }
                }
                s.sqrt()
            };
            for k in 0..u.mesh.triangles.len() {
                worst = worst.max(probe(k));
            }
            worst
        }
        Norm::GradLp(p) => {
            check_p(p)?;
            domain_power(u, p, true).powf(1.0 / p)
        }
        Norm::L2Boundary => boundary_power(u, 2.0).sqrt(),
        Norm::LpBoundary(p) if p.is_infinite() => {
            let flags = u.mesh.is_boundary_vertex();
            (0..u.mesh.n_vertices()).filter(|&v| flags[v]).map(|v| euclid(u.at(v))).fold(0.0, f64::max)
        }
        Norm::LpBoundary(p) => {
            check_p(p)?;
            boundary_power(u, p).powf(1.0 / p)
        }
        Norm::Linf => max_abs(u),
    })
}

/// `‖u − u_exact‖_{L²(Ω_h)}` with the exact function sampled at the
/// quadrature points.
pub fn l2_error(u: &FieldOnMesh, exact: impl Fn(&[f64; 2], &mut [f64])) -> f64 {
    let mesh = &u.mesh;
    let m = u.m;
    let mut total = 0.0;
    let mut ex = vec![0.0; m];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let pts = mesh.triangle_points(t);
        let (_, area) = p1_gradients(&pts);
        for (bary, &w) in TRIANGLE_ORDER4.points.iter().zip(TRIANGLE_ORDER4.weights) {
            let x = [
                bary[0] * pts[0][0] + bary[1] * pts[1][0] + bary[2] * pts[2][0],
                bary[0] * pts[0][1] + bary[1] * pts[1][1] + bary[2] * pts[2][1],
            ];
            exact(&x, &mut ex);
            let mut s = 0.0;
            for a in 0..m {
                let uh: f64 = (0..3).map(|k| bary[k] * u.values[tri[k] as usize * m + a]).sum();
                s += (uh - ex[a]).powi(2);
            }
            total += w * area * s;
        }
    }
    total.sqrt()
}

/// `∫_{∂Ω} u dσ` per component.
pub fn boundary_integral(u: &FieldOnMesh) -> Vec<f64> {
    let rule = GaussLegendre::new(8);
    let m = u.m;
    let mut out = vec![0.0; m];
    for e in &u.mesh.boundary_edges {
        for (_, w, l0, l1) in edge_nodes(&u.mesh, e, f64::INFINITY, &rule) {
            for (a, o) in out.iter_mut().enumerate() {
                *o += w * (l0 * u.values[e.v[0] as usize * m + a] + l1 * u.values[e.v[1] as usize * m + a]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::fem::mesh::mesh_domain;
    use crate::geometry::SurfaceChart;

    #[test]
    fn reference_norms_on_the_disk() {
        let mesh = Arc::new(mesh_domain(&SurfaceChart::circle(1.0).unwrap(), 0.05).unwrap());
        let one = FieldOnMesh::interpolate(Arc::clone(&mesh), 1, |_, o| o[0] = 1.0);
        assert!((norm(&one, Norm::L2).unwrap() - PI.sqrt()).abs() < 2e-3);
        assert!((norm(&one, Norm::L2Boundary).unwrap() - (2.0 * PI).sqrt()).abs() < 1e-12);
        assert_eq!(norm(&one, Norm::Linf).unwrap(), 1.0);
        let x1 = FieldOnMesh::interpolate(Arc::clone(&mesh), 1, |x, o| o[0] = x[0]);
        assert!((norm(&x1, Norm::H1Semi).unwrap() - PI.sqrt()).abs() < 2e-3);
        assert!((norm(&x1, Norm::GradLp(1.0)).unwrap() - PI).abs() < 5e-3);
        assert!(matches!(norm(&x1, Norm::Lp(0.5)), Err(HomolabError::Config(_))));
        assert!((boundary_integral(&one)[0] - 2.0 * PI).abs() < 1e-12);
        assert!(l2_error(&x1, |x, o| o[0] = x[0]) < 1e-14);
    }
}
