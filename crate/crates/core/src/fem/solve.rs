//! Linear solves of assembled Robin systems.

use std::sync::Arc;

use serde::Serialize;

use super::assembly::RobinSystem;
use super::krylov::{bicgstab, pcg, KrylovOptions, KrylovStats, Multigrid};
use super::mesh::TriMesh;
use crate::error::{HomolabError, Result};

/// P1 nodal values, vertex-major with `m` components per vertex.
#[derive(Debug, Clone)]
pub struct FieldOnMesh {
    pub mesh: Arc<TriMesh>,
    pub m: usize,
    pub values: Vec<f64>,
}

impl FieldOnMesh {
    pub fn new(mesh: Arc<TriMesh>, m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_vertices() * m {
            return Err(HomolabError::DimensionMismatch { expected: mesh.n_vertices() * m, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(HomolabError::InvalidField(format!("non-finite nodal value at dof {i}")));
        }
        Ok(Self { mesh, m, values })
    }

    pub fn zeros(mesh: Arc<TriMesh>, m: usize) -> Self {
        let n = mesh.n_vertices() * m;
        Self { mesh, m, values: vec![0.0; n] }
    }

    /// Nodal interpolant of `x ↦ u(x)`.
    pub fn interpolate(mesh: Arc<TriMesh>, m: usize, u: impl Fn(&[f64; 2], &mut [f64])) -> Self {
        let mut values = vec![0.0; mesh.n_vertices() * m];
        for (v, x) in mesh.vertices.iter().enumerate() {
            u(x, &mut values[v * m..(v + 1) * m]);
        }
        Self { mesh, m, values }
    }

    pub fn at(&self, vertex: usize) -> &[f64] {
        &self.values[vertex * self.m..(vertex + 1) * self.m]
    }

    fn check_same(&self, other: &FieldOnMesh) -> Result<()> {
        if !Arc::ptr_eq(&self.mesh, &other.mesh) && self.mesh.n_vertices() != other.mesh.n_vertices() {
            return Err(HomolabError::GridMismatch("fields live on different meshes".into()));
        }
        if self.m != other.m {
            return Err(HomolabError::DimensionMismatch { expected: self.m, got: other.m });
        }
        Ok(())
    }

    pub fn minus(&self, other: &FieldOnMesh) -> Result<Self> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { mesh: Arc::clone(&self.mesh), m: self.m, values })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveOptions {
    pub krylov: KrylovOptions,
    /// Solve the pure Neumann problem normalized by `∫_{∂Ω} u dσ = 0`.
    pub neumann: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub rel_residual: f64,
    pub levels: usize,
    pub unknowns: usize,
    pub symmetric: bool,
}

pub fn solve(system: &RobinSystem) -> Result<FieldOnMesh> {
    Ok(solve_with(system, &SolveOptions::default())?.0)
}

/// Multigrid-preconditioned CG, or BiCGSTAB when the operator is not
/// symmetric. In Neumann mode the kernel is removed by adding
/// `Σ_α w_α w_αᵀ` with `w_α = (∫ φ_v dσ) e_α`, which also pins the
/// boundary mean for compatible data.
pub fn solve_with(system: &RobinSystem, opts: &SolveOptions) -> Result<(FieldOnMesh, SolveReport)> {
    let m = system.dof_map.m;
    let n = system.dof_map.len();
    let mesh = Arc::clone(&system.mesh);
    let bn = system.load.iter().map(|v| v * v).sum::<f64>().sqrt();
    let operator = &system.operator;
    let symmetric = operator.is_symmetric(1e-12);
    if bn == 0.0 {
        let levels = system.prolong.len() + 1;
        return Ok((FieldOnMesh::zeros(mesh, m), SolveReport { iterations: 0, rel_residual: 0.0, levels, unknowns: n, symmetric }));
    }
    if !opts.neumann && system.boundary_mass.frobenius() == 0.0 {
        return Err(HomolabError::SingularSystem("zero Robin coefficient leaves constants in the kernel; use the Neumann mode".into()));
    }
    let w = &system.boundary_weights;
    // lumped boundary mass scaled so constants see the same shift
    let shift = opts.neumann.then(|| {
        let mut d = vec![0.0; n];
        for (v, &wv) in w.iter().enumerate() {
            for a in 0..m {
                d[v * m + a] = system.boundary_measure * wv;
            }
        }
        d
    });
    let mg = Multigrid::new(operator, shift, &system.prolong)?;
    let parallel = opts.krylov.parallel;
    let apply = |x: &[f64], y: &mut [f64]| {
        if parallel {
            operator.par_matvec(x, y);
        } else {
            operator.matvec(x, y);
        }
        if opts.neumann {
            for a in 0..m {
                let s: f64 = w.iter().enumerate().map(|(v, wv)| wv * x[v * m + a]).sum();
                for (v, wv) in w.iter().enumerate() {
                    y[v * m + a] += wv * s;
                }
            }
        }
    };
    let prec = |r: &[f64], z: &mut [f64]| mg.apply(r, z);
    let (mut x, stats): (Vec<f64>, KrylovStats) =
        if symmetric { pcg(n, apply, prec, &system.load, &opts.krylov)? } else { bicgstab(n, apply, prec, &system.load, &opts.krylov)? };
    if opts.neumann {
        for a in 0..m {
            let mean: f64 = w.iter().enumerate().map(|(v, wv)| wv * x[v * m + a]).sum::<f64>() / system.boundary_measure;
            for v in 0..w.len() {
                x[v * m + a] -= mean;
            }
        }
    }
    let report =
        SolveReport { iterations: stats.iterations, rel_residual: stats.rel_residual, levels: mg.n_levels(), unknowns: n, symmetric };
    Ok((FieldOnMesh::new(mesh, m, x)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assembly::{assemble_robin, Coefficient, RobinProblem};
    use crate::fem::mesh::mesh_domain;
    use crate::fem::norms::l2_error;
    use crate::geometry::SurfaceChart;

    fn disk(h: f64) -> Arc<TriMesh> {
        Arc::new(mesh_domain(&SurfaceChart::circle(1.0).unwrap(), h).unwrap())
    }

    fn manufactured(h: f64) -> f64 {
        let mesh = disk(h);
        let p = RobinProblem::scalar(Coefficient::Constant(vec![1.0]), Coefficient::Constant(vec![1.0]))
            .with_boundary_source(Coefficient::function(1, |x, o| o[0] = 2.0 * x[0]));
        let sys = assemble_robin(&mesh, &p).unwrap();
        let u = solve(&sys).unwrap();
        l2_error(&u, |x, o| o[0] = x[0])
    }

    #[test]
    fn constants_solve_robin_with_unit_data() {
        let mesh = disk(0.1);
        let p = RobinProblem::scalar(Coefficient::Constant(vec![1.0]), Coefficient::Constant(vec![1.0]))
            .with_boundary_source(Coefficient::Constant(vec![1.0]));
        let sys = assemble_robin(&mesh, &p).unwrap();
        let (u, rep) = solve_with(&sys, &SolveOptions::default()).unwrap();
        assert!(u.values.iter().all(|v| (v - 1.0).abs() < 1e-9), "{rep:?}");
        assert!(rep.levels >= 2);
    }

    #[test]
    fn manufactured_error_is_second_order() {
        let e1 = manufactured(0.1);
        let e2 = manufactured(0.05);
        let rate = (e1 / e2).log2();
        assert!((rate - 2.0).abs() < 0.3, "{e1} {e2} {rate}");
    }

    #[test]
    fn zero_data_gives_zero_and_neumann_needs_mode() {
        let mesh = disk(0.2);
        let sys = assemble_robin(&mesh, &RobinProblem::scalar(Coefficient::Constant(vec![1.0]), Coefficient::Constant(vec![0.0]))).unwrap();
        assert!(solve(&sys).unwrap().values.iter().all(|&v| v == 0.0));
        let p = RobinProblem::scalar(Coefficient::Constant(vec![1.0]), Coefficient::Constant(vec![0.0]))
            .with_boundary_source(Coefficient::function(1, |x, o| o[0] = x[0]));
        let sys = assemble_robin(&mesh, &p).unwrap();
        assert!(matches!(solve(&sys), Err(HomolabError::SingularSystem(_))));
        let (u, _) = solve_with(&sys, &SolveOptions { neumann: true, ..Default::default() }).unwrap();
        // ∂u/∂n = x₁ on the unit circle: u = x₁ with zero boundary mean
        let err = u.values.iter().zip(&mesh.vertices).map(|(v, x)| (v - x[0]).abs()).fold(0.0, f64::max);
        assert!(err < 2e-2, "{err}");
    }

    #[test]
    fn parallel_mode_matches_serial() {
        let mesh = disk(0.05);
        let p = RobinProblem::scalar(Coefficient::function(1, |x, o| o[0] = 2.0 + x[0] * x[1]), Coefficient::Constant(vec![1.5]))
            .with_boundary_source(Coefficient::function(1, |x, o| o[0] = x[1].exp()));
        let sys = assemble_robin(&mesh, &p).unwrap();
        let (a, ra) = solve_with(&sys, &SolveOptions::default()).unwrap();
        let par = SolveOptions { krylov: KrylovOptions { parallel: true, ..Default::default() }, ..Default::default() };
        let (b, rb) = solve_with(&sys, &par).unwrap();
        assert!((ra.rel_residual - rb.rel_residual).abs() < 1e-9);
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn galerkin_orthogonality_after_solve() {
        let mesh = disk(0.05);
        let p = RobinProblem::scalar(Coefficient::Constant(vec![1.0]), Coefficient::Constant(vec![1.0]))
            .with_boundary_source(Coefficient::function(1, |x, o| o[0] = 2.0 * x[0]));
        let sys = assemble_robin(&mesh, &p).unwrap();
        let u = solve(&sys).unwrap();
        let r = sys.residual(&u.values);
        assert!(r.iter().all(|v| v.abs() < 1e-9));
    }
}
