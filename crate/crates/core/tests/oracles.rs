mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::bessel::{j0, j1};
use homolab_core::fem::{duality_check, mesh_domain, TestFunction};
use homolab_core::oscillatory::{m_epsilon, oscillatory_integral};
use homolab_core::{PeriodicField, SurfaceChart};

fn sin_y1() -> PeriodicField {
    PeriodicField::trig_scalar(2, 0.0, &[(vec![1, 0], 0.0, 1.0)]).unwrap()
}

#[test]
fn bessel_tabulated_values() {
    assert!((j0(0.0) - 1.0).abs() < 1e-16);
    assert!((j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
    assert!(j0(2.404_825_557_695_773).abs() < 1e-14);
    assert!((j0(10.0) + 0.245_935_764_451_348_3).abs() < 1e-13);
    assert!((j0(20.0) - 0.167_024_664_340_583).abs() < 1e-13);
    assert!((j0(11.999_999_999) - j0(12.0)).abs() < 1e-9);
    assert!((j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-14);
    assert!((j1(10.0) - 0.043_472_746_168_861_44).abs() < 1e-14);
    assert!(j1(3.831_705_970_207_512).abs() < 1e-14);
}

#[test]
fn weighted_circle_integral_matches_j1() {
    let circle = SurfaceChart::circle(1.0).unwrap();
    let phi = |x: &[f64]| x[0];
    for eps in [0.25, 1.0 / 16.0, 1.0 / 64.0] {
        let v = oscillatory_integral(&circle, &sin_y1(), &phi, eps).unwrap();
        let exact = 2.0 * PI * j1(2.0 * PI / eps);
        assert!((v.value[0].re - exact).abs() < 1e-9, "ε = {eps}: {} vs {exact}", v.value[0].re);
        assert!(v.value[0].im.abs() < 1e-12);
    }
}

#[test]
fn m_eps_scales_with_radius() {
    let b = PeriodicField::trig_scalar(2, 3.0, &[(vec![1, 0], 1.0, 0.0)]).unwrap();
    for r in [0.5, 2.0] {
        let disk = SurfaceChart::circle(r).unwrap();
        for eps in [0.125, 1.0 / 32.0] {
            let m = m_epsilon(&disk, &b, eps).unwrap()[0];
            assert!((m + j0(2.0 * PI * r / eps)).abs() < 1e-9, "r = {r}, ε = {eps}");
        }
    }
}

#[test]
fn duality_identity_with_nonzero_lhs() {
    let circle = SurfaceChart::circle(1.0).unwrap();
    let eps = 0.125;
    let mesh = Arc::new(mesh_domain(&circle, eps / 8.0).unwrap());
    let d = duality_check(&mesh, &[1.0], &sin_y1(), &TestFunction::affine([1.0, 0.0], 0.0), eps).unwrap();
    let exact = 2.0 * PI * j1(2.0 * PI / eps);
    assert!((d.lhs - exact).abs() < 1e-9, "{} vs {exact}", d.lhs);
    assert!(d.lhs.abs() > 0.1);
    assert!(d.gap <= 1e-4 * (d.lhs.abs() + 1.0), "{d:?}");
}
