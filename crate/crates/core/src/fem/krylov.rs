//! Multigrid-preconditioned Krylov solvers.

use std::borrow::Cow;

use nalgebra::DMatrix;

use super::mesh::TriMesh;
pub use super::sparse::Prolongation;
use super::sparse::{dot, norm, Csr};
use crate::error::{HomolabError, Result};

/// Largest level solved by dense factorization.
const DENSE_COARSE_LIMIT: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Row-parallel operator products; results match the serial mode
    /// because reductions stay serial.
    pub parallel: bool,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, max_iter: 2000, parallel: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Nodal interpolation from level `l` to `l + 1` for each stored level.
pub fn prolongations(mesh: &TriMesh, m: usize) -> Vec<Prolongation> {
    let mu = m as u32;
    mesh.hierarchy
        .iter()
        .map(|level| {
            let nc = level.n_vertices;
            let kept = (0..nc * m).map(|d| vec![(d as u32, 1.0)]);
            let mids = level.parents.iter().flat_map(|par| (0..mu).map(move |a| vec![(par[0] * mu + a, 0.5), (par[1] * mu + a, 0.5)]));
            Prolongation::from_rows(nc * m, kept.chain(mids))
        })
        .collect()
}

enum Coarse {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Sweeps,
}

struct MgLevel<'a> {
    a: Cow<'a, Csr>,
    /// Diagonal added to `a`; empty when absent.
    shift: Vec<f64>,
    diag: Vec<f64>,
    /// Prolongation from the next coarser level; `None` on the coarsest.
    prolong: Option<&'a Prolongation>,
}

impl MgLevel<'_> {
    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        self.a.matvec(x, y);
        for ((yi, s), xi) in y.iter_mut().zip(&self.shift).zip(x) {
            *yi += s * xi;
        }
    }

    fn gauss_seidel(&self, b: &[f64], x: &mut [f64], backward: bool) {
        let mut step = |i: usize| {
            let (c, v) = self.a.row(i);
            let mut s: f64 = c.iter().zip(v).map(|(&j, &aij)| aij * x[j as usize]).sum();
            if let Some(sh) = self.shift.get(i) {
                s += sh * x[i];
            }
            x[i] += (b[i] - s) / self.diag[i];
        };
        if backward {
            (0..self.a.n()).rev().for_each(&mut step);
        } else {
            (0..self.a.n()).for_each(&mut step);
        }
    }

    fn sym_gauss_seidel(&self, b: &[f64], x: &mut [f64]) {
        self.gauss_seidel(b, x, false);
        self.gauss_seidel(b, x, true);
    }
}

/// Geometric V-cycle with Galerkin coarse operators and symmetric
/// Gauss-Seidel smoothing, so the preconditioner is symmetric whenever
/// the operator is.
pub struct Multigrid<'a> {
    levels: Vec<MgLevel<'a>>,
    coarse: Coarse,
    sweeps: usize,
}

impl<'a> Multigrid<'a> {
    /// Preconditioner for `a + diag(shift)`; `prolong[l]` maps level `l`
    /// to `l + 1` and the finest level is `a`, which stays borrowed.
    pub fn new(a: &'a Csr, shift: Option<Vec<f64>>, prolong: &'a [Prolongation]) -> Result<Self> {
        let mut top = MgLevel { a: Cow::Borrowed(a), shift: shift.unwrap_or_default(), diag: Vec::new(), prolong: None };
        let mut levels = Vec::with_capacity(prolong.len() + 1);
        for p in prolong.iter().rev() {
            let shift = (!top.shift.is_empty()).then_some(top.shift.as_slice());
            let coarse = top.a.galerkin(shift, p);
            top.prolong = Some(p);
            levels.push(top);
            top = MgLevel { a: Cow::Owned(coarse), shift: Vec::new(), diag: Vec::new(), prolong: None };
        }
        levels.push(top);
        levels.reverse();
        for lev in &mut levels {
            let mut diag = lev.a.diagonal();
            for (d, s) in diag.iter_mut().zip(&lev.shift) {
                *d += s;
            }
            if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
                return Err(HomolabError::SingularSystem(format!("nonpositive diagonal entry {} at dof {i}", diag[i])));
            }
            lev.diag = diag;
        }
        let a0 = &levels[0].a;
        let coarse = if a0.n() <= DENSE_COARSE_LIMIT {
            let mut dense = a0.to_dense();
            for (i, s) in levels[0].shift.iter().enumerate() {
                dense[(i, i)] += s;
            }
            if a0.is_symmetric(1e-12) {
                match dense.clone().cholesky() {
                    Some(c) => Coarse::Cholesky(c),
                    None => Coarse::Lu(dense.lu()),
                }
            } else {
                Coarse::Lu(dense.lu())
            }
        } else {
            Coarse::Sweeps
        };
        Ok(Self { levels, coarse, sweeps: 2 })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let top = self.levels.len() - 1;
        self.vcycle(top, r, z);
    }

    fn vcycle(&self, l: usize, b: &[f64], x: &mut [f64]) {
        let lev = &self.levels[l];
        x.iter_mut().for_each(|v| *v = 0.0);
        if l == 0 {
            match &self.coarse {
                Coarse::Cholesky(c) => x.copy_from_slice(c.solve(&DMatrix::from_column_slice(b.len(), 1, b)).as_slice()),
                Coarse::Lu(lu) => match lu.solve(&DMatrix::from_column_slice(b.len(), 1, b)) {
                    Some(s) => x.copy_from_slice(s.as_slice()),
                    None => (0..50).for_each(|_| lev.sym_gauss_seidel(b, x)),
                },
                Coarse::Sweeps => (0..50).for_each(|_| lev.sym_gauss_seidel(b, x)),
            }
            return;
        }
        for _ in 0..self.sweeps {
            lev.gauss_seidel(b, x, false);
        }
        let mut r = vec![0.0; b.len()];
        lev.matvec(x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let p = lev.prolong.expect("finer levels carry a prolongation");
        let mut rc = vec![0.0; p.n_coarse()];
        p.restrict(&r, &mut rc);
        drop(r);
        let mut ec = vec![0.0; rc.len()];
        self.vcycle(l - 1, &rc, &mut ec);
        p.interpolate_add(&ec, x);
        for _ in 0..self.sweeps {
            lev.gauss_seidel(b, x, true);
        }
    }
}

/// Preconditioned conjugate gradients from a zero initial guess.
pub fn pcg(
    n: usize,
    op: impl Fn(&[f64], &mut [f64]),
    prec: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    opts: &KrylovOptions,
) -> Result<(Vec<f64>, KrylovStats)> {
    let mut x = vec![0.0; n];
    let bn = norm(b);
    if bn == 0.0 {
        return Ok((x, KrylovStats { iterations: 0, rel_residual: 0.0 }));
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    prec(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 1..=opts.max_iter {
        op(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(HomolabError::SingularSystem(format!("operator is not positive definite (pᵀAp = {pq:.3e})")));
        }
        let alpha = rz / pq;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
        let rel = norm(&r) / bn;
        if rel <= opts.rel_tol {
            let rel_residual = true_residual(n, &op, &x, b);
            return Ok((x, KrylovStats { iterations: it, rel_residual }));
        }
        prec(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(HomolabError::NotConverged { iterations: opts.max_iter, residual: norm(&r) / bn })
}

/// Right-preconditioned BiCGSTAB for nonsymmetric operators.
pub fn bicgstab(
    n: usize,
    op: impl Fn(&[f64], &mut [f64]),
    prec: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    opts: &KrylovOptions,
) -> Result<(Vec<f64>, KrylovStats)> {
    let mut x = vec![0.0; n];
    let bn = norm(b);
    if bn == 0.0 {
        return Ok((x, KrylovStats { iterations: 0, rel_residual: 0.0 }));
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let (mut phat, mut shat, mut s, mut t) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        prec(&p, &mut phat);
        op(&phat, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bn <= opts.rel_tol {
            x.iter_mut().zip(&phat).for_each(|(xi, pi)| *xi += alpha * pi);
            return Ok((x.clone(), KrylovStats { iterations: it, rel_residual: true_residual(n, &op, &x, b) }));
        }
        prec(&s, &mut shat);
        op(&shat, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm(&r) / bn;
        if rel <= opts.rel_tol {
            return Ok((x.clone(), KrylovStats { iterations: it, rel_residual: true_residual(n, &op, &x, b) }));
        }
        if omega == 0.0 {
            break;
        }
    }
    Err(HomolabError::NotConverged { iterations: opts.max_iter, residual: norm(&r) / bn })
}

fn true_residual(n: usize, op: &impl Fn(&[f64], &mut [f64]), x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; n];
    op(x, &mut ax);
    let r: f64 = ax.iter().zip(b).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
    r / norm(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1-D Dirichlet Laplacian on `n` interior points.
    fn laplace(n: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..n as u32 {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if (i as usize) + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        Csr::from_triplets(n, t)
    }

    /// Linear interpolation from `nc` to `2nc + 1` interior points.
    fn interp(nc: usize) -> Prolongation {
        let rows: Vec<Vec<(u32, f64)>> = (0..2 * nc + 1)
            .map(|i| {
                if i % 2 == 1 {
                    vec![((i / 2) as u32, 1.0)]
                } else {
                    let mut row = Vec::new();
                    if i / 2 > 0 {
                        row.push(((i / 2 - 1) as u32, 0.5));
                    }
                    if i / 2 < nc {
                        row.push(((i / 2) as u32, 0.5));
                    }
                    row
                }
            })
            .collect();
        Prolongation::from_rows(nc, rows)
    }

    #[test]
    fn multigrid_cg_converges_fast() {
        let a = laplace(255);
        let p = [interp(31), interp(63), interp(127)];
        let mg = Multigrid::new(&a, None, &p).unwrap();
        assert_eq!(mg.n_levels(), 4);
        let b: Vec<f64> = (0..255).map(|i| ((i as f64) * 0.1).sin()).collect();
        let (x, stats) = pcg(255, |x, y| a.matvec(x, y), |r, z| mg.apply(r, z), &b, &KrylovOptions::default()).unwrap();
        assert!(stats.iterations < 30, "{}", stats.iterations);
        assert!(stats.rel_residual < 1e-10);
        let mut ax = vec![0.0; 255];
        a.matvec(&x, &mut ax);
        assert!(ax.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-8));
    }

    #[test]
    fn bicgstab_solves_nonsymmetric() {
        let n = 200;
        let mut t = Vec::new();
        for i in 0..n as u32 {
            t.push((i, i, 3.0));
            if i > 0 {
                t.push((i, i - 1, -1.5));
            }
            if (i as usize) + 1 < n {
                t.push((i, i + 1, -0.5));
            }
        }
        let a = Csr::from_triplets(n, t);
        let mg = Multigrid::new(&a, None, &[]).unwrap();
        let b = vec![1.0; n];
        let (_, stats) = bicgstab(n, |x, y| a.matvec(x, y), |r, z| mg.apply(r, z), &b, &KrylovOptions::default()).unwrap();
        assert!(stats.rel_residual < 1e-10);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = laplace(10);
        let (x, s) = pcg(10, |x, y| a.matvec(x, y), |r, z| z.copy_from_slice(r), &[0.0; 10], &KrylovOptions::default()).unwrap();
        assert!(x.iter().all(|&v| v == 0.0) && s.iterations == 0);
    }
}
