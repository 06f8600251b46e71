//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use homolab_core::fem::{mesh_domain, Coefficient, RobinProblem, TriMesh};
use homolab_core::{PeriodicField, SurfaceChart};

/// `(2 + sin 2πy₁)·I`.
pub fn laminate() -> PeriodicField {
    PeriodicField::trig_scalar(2, 2.0, &[(vec![1, 0], 0.0, 1.0)]).unwrap().isotropic_tensor(1).unwrap()
}

pub fn cos_y1() -> PeriodicField {
    PeriodicField::trig_scalar(2, 0.0, &[(vec![1, 0], 1.0, 0.0)]).unwrap()
}

pub fn unit_circle() -> SurfaceChart {
    SurfaceChart::circle(1.0).unwrap()
}

pub fn unit_disk(h: f64) -> Arc<TriMesh> {
    Arc::new(mesh_domain(&unit_circle(), h).unwrap())
}

/// Oscillating Robin problem with laminate diffusion and `b = 2 + cos 2πy₁`.
pub fn oscillating_robin(eps: f64) -> RobinProblem {
    let b = PeriodicField::trig_scalar(2, 2.0, &[(vec![1, 0], 1.0, 0.0)]).unwrap();
    RobinProblem::scalar(Coefficient::oscillating(laminate(), eps), Coefficient::oscillating(b, eps))
        .with_boundary_source(Coefficient::function(1, |x, o| o[0] = 1.0 + x[0]))
}
