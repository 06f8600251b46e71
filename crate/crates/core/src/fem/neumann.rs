//! Auxiliary Neumann problem `div(Â∇v) = 0`, `n·Â∇v = f(x/ε) − M` with
//! `M = ⨍_{∂Ω} f(x/ε) dσ` and `∫_{∂Ω} v dσ = 0`, and the duality identity
//! `∫_{∂Ω} f(x/ε)φ dσ = ∫_Ω Â∇v·∇φ + M ∫_{∂Ω} φ dσ`.

use std::sync::Arc;

use serde::Serialize;

use super::assembly::{assemble_robin, p1_gradients, Coefficient, RobinProblem};
use super::mesh::TriMesh;
use super::norms::boundary_integral;
use super::solve::{solve_with, FieldOnMesh, SolveOptions, SolveReport};
use crate::error::{HomolabError, Result};
use crate::fields::{FieldKind, PeriodicField};
use crate::geometry::SurfaceChart;
use crate::oscillatory::{m_epsilon, oscillatory_integral};
use crate::quadrature::TRIANGLE_ORDER4;

/// Discrete compatibility tolerance on `|Σ load|`, relative to `Σ |load|`
/// when that exceeds one.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct NeumannAux {
    pub v: FieldOnMesh,
    /// `⨍ (f̄ − f(x/ε)) dσ`, the boundary constant in the form used for
    /// Robin coefficients.
    pub m_eps: Vec<f64>,
    /// `⨍ f(x/ε) dσ`, subtracted from the Neumann data.
    pub data_mean: Vec<f64>,
    /// `|Σ load|` per component before the final projection.
    pub compatibility: Vec<f64>,
    /// `∫_{∂Ω} v dσ` per component.
    pub boundary_mean: Vec<f64>,
    pub solve: SolveReport,
}

pub(crate) fn chart(mesh: &TriMesh) -> Result<&SurfaceChart> {
    mesh.surface.as_deref().ok_or_else(|| HomolabError::InvalidSurface("mesh carries no boundary chart".into()))
}

fn data_size(f: &PeriodicField) -> Result<usize> {
    match f.kind() {
        FieldKind::Scalar => Ok(1),
        FieldKind::Vector(m) => Ok(m),
        other => Err(HomolabError::InvalidField(format!("Neumann data must be scalar or vector, got {other:?}"))),
    }
}

pub fn solve_neumann_aux(mesh: &Arc<TriMesh>, a_hat: &[f64], f: &PeriodicField, eps: f64) -> Result<NeumannAux> {
    let surface = chart(mesh)?;
    let m = data_size(f)?;
    let m_eps = m_epsilon(surface, f, eps)?;
    let mean = f.mean();
    let data_mean: Vec<f64> = mean.iter().zip(&m_eps).map(|(fb, me)| fb - me).collect();
    let offset: Vec<f64> = data_mean.iter().map(|v| -v).collect();
    let problem = RobinProblem {
        m,
        a: Coefficient::Constant(a_hat.to_vec()),
        b: Coefficient::Constant(vec![0.0]),
        f: None,
        g: Some(Coefficient::Oscillating { field: f.clone(), eps, offset }),
    };
    let mut system = assemble_robin(mesh, &problem)?;
    let mut compatibility = vec![0.0; m];
    for a in 0..m {
        let (sum, abs) = (0..mesh.n_vertices()).map(|v| system.load[v * m + a]).fold((0.0, 0.0), |(s, t), l| (s + l, t + l.abs()));
        compatibility[a] = sum.abs();
        if sum.abs() > COMPATIBILITY_TOL * abs.max(1.0) {
            return Err(HomolabError::Compatibility { residual: sum });
        }
        // remove the roundoff remainder so the data are exactly compatible
        let shift = sum / system.boundary_measure;
        for (v, w) in system.boundary_weights.iter().enumerate() {
            system.load[v * m + a] -= shift * w;
        }
    }
    let (v, report) = solve_with(&system, &SolveOptions { neumann: true, ..Default::default() })?;
    let boundary_mean = boundary_integral(&v);
    Ok(NeumannAux { v, m_eps, data_mean, compatibility, boundary_mean, solve: report })
}

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64; 2]) -> [f64; 2] + Send + Sync>;

/// Smooth scalar test function with its gradient.
#[derive(Clone)]
pub struct TestFunction {
    pub value: ValueFn,
    pub grad: GradFn,
}

impl TestFunction {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64; 2]) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(value), grad: Arc::new(grad) }
    }

    /// `φ(x) = c·x + c0`.
    pub fn affine(c: [f64; 2], c0: f64) -> Self {
        Self::new(move |x| c[0] * x[0] + c[1] * x[1] + c0, move |_| c)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub volume_term: f64,
    pub boundary_term: f64,
    pub lhs_quadrature_error: f64,
    pub compatibility: f64,
    pub solve: SolveReport,
}

/// Compares the oscillatory boundary integral with its volume
/// representation through the auxiliary solution. Scalar `f` only.
pub fn duality_check(mesh: &Arc<TriMesh>, a_hat: &[f64], f: &PeriodicField, phi: &TestFunction, eps: f64) -> Result<DualityCheck> {
    if f.kind() != FieldKind::Scalar {
        return Err(HomolabError::InvalidField("duality check takes a scalar field".into()));
    }
    let surface = chart(mesh)?;
    let phi_value = Arc::clone(&phi.value);
    let osc = oscillatory_integral(surface, f, &move |x: &[f64]| phi_value(x), eps)?;
    let lhs = osc.value[0].re;
    let aux = solve_neumann_aux(mesh, a_hat, f, eps)?;
    let a: [f64; 4] = match a_hat.len() {
        1 => [a_hat[0], 0.0, 0.0, a_hat[0]],
        4 => [a_hat[0], a_hat[1], a_hat[2], a_hat[3]],
        n => return Err(HomolabError::Config(format!("scalar duality needs a 1- or 4-entry Â, got {n}"))),
    };
    let v = &aux.v.values;
    let mut volume_term = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let pts = mesh.triangle_points(t);
        let (g, area) = p1_gradients(&pts);
        let mut gv = [0.0; 2];
        for k in 0..3 {
            gv[0] += g[k][0] * v[tri[k] as usize];
            gv[1] += g[k][1] * v[tri[k] as usize];
        }
        let flux = [a[0] * gv[0] + a[1] * gv[1], a[2] * gv[0] + a[3] * gv[1]];
        for (bary, &w) in TRIANGLE_ORDER4.points.iter().zip(TRIANGLE_ORDER4.weights) {
            let x = [
                bary[0] * pts[0][0] + bary[1] * pts[1][0] + bary[2] * pts[2][0],
                bary[0] * pts[0][1] + bary[1] * pts[1][1] + bary[2] * pts[2][1],
            ];
            let gp = (phi.grad)(&x);
            volume_term += w * area * (flux[0] * gp[0] + flux[1] * gp[1]);
        }
    }
    let boundary_term = aux.data_mean[0] * osc.weight_integral;
    let rhs = volume_term + boundary_term;
    Ok(DualityCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
        volume_term,
        boundary_term,
        lhs_quadrature_error: osc.est_error,
        compatibility: aux.compatibility[0],
        solve: aux.solve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::mesh_domain;
    use crate::fem::norms::{norm, Norm};

    fn disk(h: f64) -> Arc<TriMesh> {
        Arc::new(mesh_domain(&SurfaceChart::circle(1.0).unwrap(), h).unwrap())
    }

    #[test]
    fn constant_data_gives_zero() {
        let mesh = disk(0.125 / 8.0);
        let f = PeriodicField::constant(FieldKind::Scalar, 2, &[3.0]).unwrap();
        let aux = solve_neumann_aux(&mesh, &[1.0], &f, 0.125).unwrap();
        assert!(aux.v.values.iter().all(|&x| x == 0.0));
        assert_eq!(aux.data_mean, vec![3.0]);
    }

    #[test]
    fn cosine_data_is_compatible_and_normalized() {
        let mesh = disk(0.25 / 8.0);
        let f = PeriodicField::trig_scalar(2, 0.0, &[(vec![1, 0], 1.0, 0.0)]).unwrap();
        let aux = solve_neumann_aux(&mesh, &[1.0], &f, 0.25).unwrap();
        assert!(aux.compatibility[0] <= 1e-10, "{:?}", aux.compatibility);
        assert!(aux.boundary_mean[0].abs() <= 1e-8, "{:?}", aux.boundary_mean);
        assert!(norm(&aux.v, Norm::Linf).unwrap() > 0.0);
    }

    #[test]
    fn duality_gap_is_small() {
        let mesh = disk(0.125 / 8.0);
        let f = PeriodicField::trig_scalar(2, 0.0, &[(vec![1, 0], 1.0, 0.0)]).unwrap();
        let phi = TestFunction::new(|x| x[0] + 0.5 * x[1] * x[1], |x| [1.0, x[1]]);
        let d = duality_check(&mesh, &[1.0], &f, &phi, 0.125).unwrap();
        assert!(d.gap <= 1e-4 * (d.lhs.abs() + 1.0), "{d:?}");
    }

    #[test]
    fn zero_test_function_gives_zero_sides() {
        let mesh = disk(0.25 / 8.0);
        let f = PeriodicField::trig_scalar(2, 0.0, &[(vec![1, 0], 1.0, 0.0)]).unwrap();
        let d = duality_check(&mesh, &[1.0], &f, &TestFunction::affine([0.0, 0.0], 0.0), 0.25).unwrap();
        assert_eq!(d.lhs, 0.0);
        assert_eq!(d.volume_term, 0.0);
    }
}
