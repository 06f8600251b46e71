//! First-order two-scale expansion
//! `w_ε = u_ε − u₀ − ε χ_j^{γβ}(x/ε) S_ε(η_ε ∂_j u₀^β)`.
//!
//! `η_ε` vanishes within distance `ε` of `∂Ω` and equals one beyond `2ε`;
//! `S_ε` is convolution with the normalized bump `exp(−1/(1 − |x/r|²))`.
//! Both act on an auxiliary uniform grid, sampled back at the vertices
//! by bilinear interpolation.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assembly::p1_gradients;
use super::neumann::chart;
use super::solve::FieldOnMesh;
use crate::cell::CorrectorSet;
use crate::error::{HomolabError, Result};
use crate::fft::TorusFft;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExpansionOptions {
    /// Mollifier radius; defaults to `ε`.
    pub mollifier_radius: Option<f64>,
    /// Auxiliary grid spacing; defaults to `min(h, ε/8)`.
    pub grid_spacing: Option<f64>,
}

/// Smooth step: 0 for `t ≤ 0`, 1 for `t ≥ 1`, `C^∞` in between.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// `η_ε` as a function of the distance to the boundary.
pub fn cutoff(distance: f64, eps: f64) -> f64 {
    smooth_step((distance - eps) / eps)
}

struct Raster {
    n: usize,
    origin: [f64; 2],
    delta: f64,
}

impl Raster {
    fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.delta, self.origin[1] + j as f64 * self.delta]
    }

    fn bilinear(&self, data: &[f64], x: &[f64; 2]) -> f64 {
        let s = (x[0] - self.origin[0]) / self.delta;
        let t = (x[1] - self.origin[1]) / self.delta;
        let i = (s.floor() as usize).min(self.n - 2);
        let j = (t.floor() as usize).min(self.n - 2);
        let (fs, ft) = (s - i as f64, t - j as f64);
        (1.0 - fs) * (1.0 - ft) * data[self.index(i, j)]
            + fs * (1.0 - ft) * data[self.index(i + 1, j)]
            + (1.0 - fs) * ft * data[self.index(i, j + 1)]
            + fs * ft * data[self.index(i + 1, j + 1)]
    }
}

/// `S_ε(η_ε ∂_j u₀^β)` at the mesh vertices, entry `(j·m + β)` per vertex.
pub fn smoothed_gradient(u0: &FieldOnMesh, eps: f64, opts: &ExpansionOptions) -> Result<Vec<Vec<f64>>> {
    let mesh = &u0.mesh;
    let surface = chart(mesh)?;
    let m = u0.m;
    let radius = opts.mollifier_radius.unwrap_or(eps);
    let delta = opts.grid_spacing.unwrap_or(mesh.h.min(eps / 8.0));
    if !(radius > 0.0 && delta > 0.0) {
        return Err(HomolabError::Config("mollifier radius and grid spacing must be positive".into()));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for x in &mesh.vertices {
        for a in 0..2 {
            lo[a] = lo[a].min(x[a]);
            hi[a] = hi[a].max(x[a]);
        }
    }
    let pad = radius + 2.0 * delta;
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]) + 2.0 * pad;
    let n = ((extent / delta).ceil() as usize + 1).next_power_of_two();
    let raster = Raster { n, origin: [lo[0] - pad, lo[1] - pad], delta };
    let ncomp = 2 * m;

    // η_ε ∇u₀ on the grid, zero outside the mesh
    let mut owner = vec![u32::MAX; n * n];
    for (t, _) in mesh.triangles.iter().enumerate() {
        let p = mesh.triangle_points(t);
        let i0 = ((p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min) - raster.origin[0]) / delta).floor() as usize;
        let i1 = ((p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max) - raster.origin[0]) / delta).ceil() as usize;
        let j0 = ((p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min) - raster.origin[1]) / delta).floor() as usize;
        let j1 = ((p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max) - raster.origin[1]) / delta).ceil() as usize;
        let (g, _) = p1_gradients(&p);
        for i in i0..=i1.min(n - 1) {
            for j in j0..=j1.min(n - 1) {
                let x = raster.point(i, j);
                let lam = [0, 1, 2].map(|k| g[k][0] * (x[0] - p[(k + 1) % 3][0]) + g[k][1] * (x[1] - p[(k + 1) % 3][1]));
                if lam.iter().all(|&l| l >= -1e-12) && owner[raster.index(i, j)] == u32::MAX {
                    owner[raster.index(i, j)] = t as u32;
                }
            }
        }
    }
    let eta: Vec<f64> = owner
        .par_iter()
        .enumerate()
        .map(|(idx, &t)| {
            if t == u32::MAX {
                return 0.0;
            }
            let x = raster.point(idx / n, idx % n);
            let pr = surface.project(x);
            cutoff((-pr.signed_distance).max(0.0), eps)
        })
        .collect();
    let grads: Vec<Vec<f64>> = (0..mesh.triangles.len())
        .map(|t| {
            let (g, _) = p1_gradients(&mesh.triangle_points(t));
            let tri = mesh.triangles[t];
            let mut out = vec![0.0; ncomp];
            for j in 0..2 {
                for b in 0..m {
                    out[j * m + b] = (0..3).map(|k| g[k][j] * u0.values[tri[k] as usize * m + b]).sum();
                }
            }
            out
        })
        .collect();

    // normalized bump, centred at index 0 with wraparound
    let fft = TorusFft::new(n, 2);
    let mut kernel = vec![Complex64::new(0.0, 0.0); n * n];
    let reach = (radius / delta).ceil() as i64;
    let mut mass = 0.0;
    for di in -reach..=reach {
        for dj in -reach..=reach {
            let r2 = ((di * di + dj * dj) as f64) * delta * delta / (radius * radius);
            if r2 < 1.0 {
                let v = (-1.0 / (1.0 - r2)).exp();
                let idx = di.rem_euclid(n as i64) as usize * n + dj.rem_euclid(n as i64) as usize;
                kernel[idx].re += v;
                mass += v;
            }
        }
    }
    kernel.iter_mut().for_each(|k| *k /= mass);
    fft.forward(&mut kernel);

    // two real grids per complex transform
    let mut smoothed = vec![vec![0.0; n * n]; ncomp];
    for pair in (0..ncomp).step_by(2) {
        let mut data: Vec<Complex64> = owner
            .iter()
            .zip(&eta)
            .map(|(&t, &e)| {
                if t == u32::MAX || e == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let g = &grads[t as usize];
                Complex64::new(e * g[pair], if pair + 1 < ncomp { e * g[pair + 1] } else { 0.0 })
            })
            .collect();
        fft.forward(&mut data);
        data.iter_mut().zip(&kernel).for_each(|(d, k)| *d *= k);
        fft.inverse(&mut data);
        for (idx, d) in data.iter().enumerate() {
            smoothed[pair][idx] = d.re;
            if pair + 1 < ncomp {
                smoothed[pair + 1][idx] = d.im;
            }
        }
    }
    Ok(mesh.vertices.iter().map(|x| (0..ncomp).map(|c| raster.bilinear(&smoothed[c], x)).collect()).collect())
}

pub fn first_order_expansion(
    u_eps: &FieldOnMesh,
    u0: &FieldOnMesh,
    chi: &CorrectorSet,
    eps: f64,
    opts: &ExpansionOptions,
) -> Result<FieldOnMesh> {
    let mesh = &u_eps.mesh;
    if !Arc::ptr_eq(mesh, &u0.mesh) && mesh.n_vertices() != u0.mesh.n_vertices() {
        return Err(HomolabError::GridMismatch("u_eps and u0 live on different meshes".into()));
    }
    let m = u_eps.m;
    if u0.m != m || chi.system_size() != m {
        return Err(HomolabError::DimensionMismatch { expected: m, got: chi.system_size() });
    }
    if chi.dim() != 2 {
        return Err(HomolabError::DimensionMismatch { expected: 2, got: chi.dim() });
    }
    if eps < 2.0 * mesh.h {
        return Err(HomolabError::BoundaryLayerUnresolved { eps, two_h: 2.0 * mesh.h });
    }
    let s = smoothed_gradient(u0, eps, opts)?;
    let values: Vec<f64> = mesh
        .vertices
        .par_iter()
        .enumerate()
        .flat_map_iter(|(v, x)| {
            let y = [x[0] / eps, x[1] / eps];
            let mut corr = vec![0.0; m];
            let mut chi_val = vec![0.0; m];
            for j in 0..2 {
                for b in 0..m {
                    let sv = s[v][j * m + b];
                    if sv == 0.0 {
                        continue;
                    }
                    chi.evaluate_into(j, b, &y, &mut chi_val);
                    for g in 0..m {
                        corr[g] += chi_val[g] * sv;
                    }
                }
            }
            (0..m).map(move |g| u_eps.values[v * m + g] - u0.values[v * m + g] - eps * corr[g]).collect::<Vec<_>>()
        })
        .collect();
    FieldOnMesh::new(Arc::clone(mesh), m, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{solve_correctors, zero_correctors, CellDiscretization};
    use crate::fem::mesh::mesh_domain;
    use crate::fields::{FieldKind, PeriodicField};
    use crate::geometry::SurfaceChart;

    fn disk(h: f64) -> Arc<crate::fem::TriMesh> {
        Arc::new(mesh_domain(&SurfaceChart::circle(1.0).unwrap(), h).unwrap())
    }

    #[test]
    fn cutoff_profile() {
        assert_eq!(cutoff(0.5, 1.0), 0.0);
        assert_eq!(cutoff(1.0, 1.0), 0.0);
        assert_eq!(cutoff(2.0, 1.0), 1.0);
        assert!((cutoff(1.5, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_corrector_gives_plain_difference() {
        let mesh = disk(0.02);
        let a = PeriodicField::constant(FieldKind::Scalar, 2, &[1.0]).unwrap().isotropic_tensor(1).unwrap();
        let chi = zero_correctors(&a, 16, CellDiscretization::Spectral).unwrap();
        let ue = FieldOnMesh::interpolate(Arc::clone(&mesh), 1, |x, o| o[0] = x[0] * x[1]);
        let u0 = FieldOnMesh::interpolate(Arc::clone(&mesh), 1, |x, o| o[0] = x[0]);
        let w = first_order_expansion(&ue, &u0, &chi, 0.125, &ExpansionOptions::default()).unwrap();
        let diff = ue.minus(&u0).unwrap();
        assert_eq!(w.values, diff.values);
        let same = first_order_expansion(&u0, &u0, &chi, 0.125, &ExpansionOptions::default()).unwrap();
        assert!(same.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smoothing_preserves_interior_gradient() {
        let mesh = disk(0.02);
        let u0 = FieldOnMesh::interpolate(Arc::clone(&mesh), 1, |x, o| o[0] = 2.0 * x[0] - x[1]);
        let s = smoothed_gradient(&u0, 0.1, &ExpansionOptions::default()).unwrap();
        for (v, x) in mesh.vertices.iter().enumerate() {
            let r = x[0].hypot(x[1]);
            if r < 1.0 - 0.35 {
                assert!((s[v][0] - 2.0).abs() < 1e-9 && (s[v][1] + 1.0).abs() < 1e-9, "{:?}", s[v]);
            }
        }
    }

    #[test]
    fn thin_layers_are_rejected() {
        let mesh = disk(0.1);
        let lam = PeriodicField::trig_scalar(2, 2.0, &[(vec![1, 0], 0.0, 1.0)]).unwrap().isotropic_tensor(1).unwrap();
        let chi = solve_correctors(&lam, 16).unwrap();
        let u = FieldOnMesh::zeros(Arc::clone(&mesh), 1);
        assert!(matches!(
            first_order_expansion(&u, &u, &chi, 0.1, &ExpansionOptions::default()),
            Err(HomolabError::BoundaryLayerUnresolved { .. })
        ));
    }
}
