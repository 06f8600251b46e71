//! Periodic cell problems, correctors and the homogenized tensor.
//!
//! For every macroscopic direction `j` and component `β` the corrector
//! `χ_j^β` is the mean-zero periodic solution of
//! `−div(A(∇χ_j^β + e_j e^β)) = 0` on the unit torus. Two discretizations
//! share one preconditioned conjugate-gradient driver:
//!
//! * **Spectral**: Fourier Galerkin on the modes `|k_i| < N/3`, products
//!   with `A` taken pseudo-spectrally on the `N^d` grid. Exact Galerkin when
//!   the modes of `A` stay below `N/3`.
//! * **Q1**: trilinear (bilinear in 2-D) finite elements on the uniform
//!   torus grid with `A` constant on each cell. Robust for discontinuous
//!   coefficients such as checkerboards.
//!
//! Both are preconditioned by the inverse of the constant-coefficient
//! operator with the mean diagonal coefficient, diagonal in Fourier space.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HomolabError, Result};
use crate::fft::TorusFft;
use crate::fields::{grid_indices, quadratic_form_matrix, symmetric_extremes, FieldKind, PeriodicField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellDiscretization {
    Spectral,
    Q1,
}

#[derive(Debug, Clone)]
pub struct CellOptions {
    /// Relative residual tolerance of the conjugate-gradient iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// `None` picks spectral for Fourier fields and Q1 for grid fields.
    pub discretization: Option<CellDiscretization>,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 10_000, discretization: None }
    }
}

/// One retained Fourier mode of a corrector component (upper half lattice).
#[derive(Debug, Clone)]
struct CorrectorMode {
    k: [i64; 3],
    weight: f64,
    amp: Complex64,
}

/// Correctors `χ_j^{γβ}` on the `N^d` torus grid.
#[derive(Debug, Clone)]
pub struct CorrectorSet {
    n: usize,
    dim: usize,
    m: usize,
    discretization: CellDiscretization,
    /// Column `j·m + β`, entries `γ·N^d + p`.
    chi: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    iterations: Vec<usize>,
    /// Sparse spectra per column and component, spectral path only.
    spectra: Vec<Vec<Vec<CorrectorMode>>>,
}

/// Homogenized tensor `â_ij^{αβ}` (tensor4 layout) and, when attached,
/// the effective Robin matrix `b̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedTensor {
    pub m: usize,
    pub d: usize,
    pub a_hat: Vec<f64>,
    pub b_bar: Option<Vec<f64>>,
}

impl HomogenizedTensor {
    pub fn entry(&self, i: usize, j: usize, alpha: usize, beta: usize) -> f64 {
        self.a_hat[((alpha * self.m + beta) * self.d + i) * self.d + j]
    }

    /// Attaches `b̄ = ∫ b(y) dy`.
    pub fn with_boundary_mean(mut self, b: &PeriodicField) -> Result<Self> {
        let bm = match b.kind() {
            FieldKind::Scalar if self.m == 1 => b.mean(),
            FieldKind::Matrix(m) if m == self.m => b.mean(),
            other => {
                return Err(HomolabError::InvalidField(format!(
                    "Robin coefficient of kind {other:?} does not match system size {}",
                    self.m
                )))
            }
        };
        self.b_bar = Some(bm);
        Ok(self)
    }

    /// Extremes of the Legendre quadratic form of `Â` over unit `ξ`.
    pub fn ellipticity_bounds(&self) -> (f64, f64) {
        let q = quadratic_form_matrix(FieldKind::Tensor4(self.m), self.d, &self.a_hat);
        symmetric_extremes(&q, self.m * self.d)
    }

    /// Largest violation of `â_ij^{αβ} = â_ji^{βα}`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.m {
            for b in 0..self.m {
                for i in 0..self.d {
                    for j in 0..self.d {
                        worst = worst.max((self.entry(i, j, a, b) - self.entry(j, i, b, a)).abs());
                    }
                }
            }
        }
        worst
    }
}

impl CorrectorSet {
    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn system_size(&self) -> usize {
        self.m
    }

    pub fn discretization(&self) -> CellDiscretization {
        self.discretization
    }

    /// Grid values of `χ_j^{γβ}`.
    pub fn values(&self, j: usize, gamma: usize, beta: usize) -> &[f64] {
        let npts = self.n.pow(self.dim as u32);
        &self.chi[j * self.m + beta][gamma * npts..(gamma + 1) * npts]
    }

    /// Final relative residual of each `(j, β)` solve.
    pub fn solver_residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn iterations(&self) -> &[usize] {
        &self.iterations
    }

    /// Largest `|mean(χ_j^{γβ})|`.
    pub fn max_abs_mean(&self) -> f64 {
        let npts = self.n.pow(self.dim as u32);
        self.chi.iter().flat_map(|col| col.chunks_exact(npts)).map(|c| (c.iter().sum::<f64>() / npts as f64).abs()).fold(0.0, f64::max)
    }

    /// `χ_j^{·β}(y)` for any `y ∈ R^d`: exact trigonometric evaluation of
    /// the band-limited spectral corrector, multilinear for Q1.
    pub fn evaluate_into(&self, j: usize, beta: usize, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.dim);
        assert_eq!(out.len(), self.m);
        match self.discretization {
            CellDiscretization::Spectral => {
                let col = &self.spectra[j * self.m + beta];
                let wrapped: Vec<f64> = y.iter().map(|c| c.rem_euclid(1.0)).collect();
                for (o, modes) in out.iter_mut().zip(col) {
                    let mut acc = 0.0;
                    for md in modes {
                        let mut t = 0.0;
                        for a in 0..self.dim {
                            t += md.k[a] as f64 * wrapped[a];
                        }
                        let th = 2.0 * PI * t.rem_euclid(1.0);
                        acc += md.weight * (md.amp.re * th.cos() - md.amp.im * th.sin());
                    }
                    *o = acc;
                }
            }
            CellDiscretization::Q1 => {
                let n = self.n;
                let npts = n.pow(self.dim as u32);
                let mut base = [0usize; 3];
                let mut frac = [0.0; 3];
                for a in 0..self.dim {
                    let t = y[a].rem_euclid(1.0) * n as f64;
                    let i = (t.floor() as usize).min(n - 1);
                    base[a] = i;
                    frac[a] = t - i as f64;
                }
                let col = &self.chi[j * self.m + beta];
                out.iter_mut().for_each(|v| *v = 0.0);
                for corner in 0..(1usize << self.dim) {
                    let mut w = 1.0;
                    let mut p = 0;
                    for a in 0..self.dim {
                        let bit = (corner >> (self.dim - 1 - a)) & 1;
                        w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                        p = p * n + (base[a] + bit) % n;
                    }
                    for (g, o) in out.iter_mut().enumerate() {
                        *o += w * col[g * npts + p];
                    }
                }
            }
        }
    }

    fn build_spectra(&mut self, fft: &TorusFft) {
        let npts = fft.len();
        let kv = fft.wavevectors();
        self.spectra = self
            .chi
            .iter()
            .map(|col| {
                col.chunks_exact(npts)
                    .map(|comp| {
                        let mut data: Vec<Complex64> = comp.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                        fft.forward(&mut data);
                        let scale = 1.0 / npts as f64;
                        let peak = data.iter().map(|c| c.norm()).fold(0.0, f64::max) * scale;
                        let mut modes = Vec::new();
                        for (p, c) in data.iter().enumerate() {
                            let k = &kv[p];
                            let upper = match k.iter().find(|&&c| c != 0) {
                                Some(&c) => c > 0,
                                None => false,
                            };
                            let amp = c * scale;
                            if upper && amp.norm() > 1e-13 * peak {
                                let mut kk = [0i64; 3];
                                kk[..k.len()].copy_from_slice(k);
                                modes.push(CorrectorMode { k: kk, weight: 2.0, amp });
                            }
                        }
                        modes
                    })
                    .collect()
            })
            .collect();
    }
}

/// Coefficient layout resolved from a field kind: `(m, accessor)`.
fn system_size_of(a: &PeriodicField) -> Result<usize> {
    let d = a.dim();
    match a.kind() {
        FieldKind::Scalar => Ok(1),
        FieldKind::Matrix(md) if md == d => Ok(1),
        FieldKind::Tensor4(m) => Ok(m),
        other => Err(HomolabError::NonSquareKind(format!("{other:?} cannot act as a cell coefficient"))),
    }
}

/// Coefficient samples expanded to full tensor4 layout, `m²d²` per point.
fn tensor_samples(a: &PeriodicField, n: usize, cell_centred: bool) -> Result<Vec<f64>> {
    let d = a.dim();
    let m = system_size_of(a)?;
    let nt = m * m * d * d;
    let raw = if cell_centred && a.grid_size() != Some(n) {
        // Q1 cells take the value at their centre.
        let nc = a.components();
        let mut out = vec![0.0; n.pow(d as u32) * nc];
        let mut y = vec![0.0; d];
        for (p, idx) in grid_indices(n, d).enumerate() {
            for (yy, &i) in y.iter_mut().zip(&idx) {
                *yy = (i as f64 + 0.5) / n as f64;
            }
            a.evaluate_into(&y, &mut out[p * nc..(p + 1) * nc]);
        }
        out
    } else {
        a.sample_grid(n)
    };
    Ok(match a.kind() {
        FieldKind::Tensor4(_) => raw,
        FieldKind::Scalar => raw
            .iter()
            .flat_map(|&s| {
                let mut t = vec![0.0; nt];
                for i in 0..d {
                    t[i * d + i] = s;
                }
                t
            })
            .collect(),
        FieldKind::Matrix(_) => raw,
        FieldKind::Vector(_) => unreachable!("rejected by system_size_of"),
    })
}

struct CellOperator {
    n: usize,
    dim: usize,
    m: usize,
    disc: CellDiscretization,
    /// `m²d²` coefficient entries per grid point (spectral) or cell (Q1).
    coef: Vec<f64>,
    fft: TorusFft,
    /// Preconditioner eigenvalues per Fourier mode; zero entries are dropped.
    symbol: Vec<f64>,
    /// Spectral: retained modes `|k_i| < N/3`.
    mask: Vec<bool>,
    /// Spectral: `2πk` per mode and axis.
    wave: Vec<Vec<f64>>,
    /// Q1: reference integrals `∫ ∂_iφ_a ∂_jφ_b` on the unit cell.
    q1_stiff: Vec<f64>,
    /// Q1: reference integrals `∫ ∂_iφ_a` on the unit cell.
    q1_grad: Vec<f64>,
}

impl CellOperator {
    fn npts(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    fn coef_at(&self, p: usize, i: usize, j: usize, alpha: usize, beta: usize) -> f64 {
        let (m, d) = (self.m, self.dim);
        self.coef[p * m * m * d * d + ((alpha * m + beta) * d + i) * d + j]
    }

    fn new(a: &PeriodicField, n: usize, disc: CellDiscretization) -> Result<Self> {
        let dim = a.dim();
        let m = system_size_of(a)?;
        if disc == CellDiscretization::Spectral && !n.is_power_of_two() {
            return Err(HomolabError::GridMismatch(format!("spectral cell solve needs a power-of-two grid, got {n}")));
        }
        if n < 4 {
            return Err(HomolabError::GridMismatch(format!("cell grid {n} too coarse")));
        }
        let coef = tensor_samples(a, n, disc == CellDiscretization::Q1)?;
        let fft = TorusFft::new(n, dim);
        let kv = fft.wavevectors();
        let third = n as f64 / 3.0;
        let mask: Vec<bool> = kv.iter().map(|k| k.iter().all(|&c| (c.abs() as f64) < third)).collect();
        let wave: Vec<Vec<f64>> = kv.iter().map(|k| k.iter().map(|&c| 2.0 * PI * c as f64).collect()).collect();
        let (q1_stiff, q1_grad) = q1_reference(dim);
        let mut op = Self { n, dim, m, disc, coef, fft, symbol: Vec::new(), mask, wave, q1_stiff, q1_grad };
        op.check_ellipticity()?;
        op.build_symbol();
        Ok(op)
    }

    fn check_ellipticity(&self) -> Result<()> {
        let nt = self.m * self.m * self.dim * self.dim;
        let mut lower = f64::INFINITY;
        for chunk in self.coef.chunks_exact(nt) {
            let q = quadratic_form_matrix(FieldKind::Tensor4(self.m), self.dim, chunk);
            lower = lower.min(symmetric_extremes(&q, self.m * self.dim).0);
        }
        if !(lower > 0.0) {
            return Err(HomolabError::NotElliptic { mu_lower: lower });
        }
        Ok(())
    }

    fn mean_diagonal(&self) -> f64 {
        let npts = self.npts();
        let mut acc = 0.0;
        for p in 0..npts {
            for a in 0..self.m {
                for i in 0..self.dim {
                    acc += self.coef_at(p, i, i, a, a);
                }
            }
        }
        acc / (npts * self.m * self.dim) as f64
    }

    fn build_symbol(&mut self) {
        let abar = self.mean_diagonal();
        let npts = self.npts();
        self.symbol = match self.disc {
            CellDiscretization::Spectral => {
                (0..npts).map(|p| if self.mask[p] { abar * self.wave[p].iter().map(|w| w * w).sum::<f64>() } else { 0.0 }).collect()
            }
            CellDiscretization::Q1 => {
                // impulse response of the constant-coefficient Q1 Laplacian
                let mut delta = vec![0.0; npts];
                delta[0] = 1.0;
                let mut out = vec![0.0; npts];
                self.q1_scalar_laplacian(abar, &delta, &mut out);
                let mut data: Vec<Complex64> = out.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                self.fft.forward(&mut data);
                data.iter().map(|c| if c.re.abs() < 1e-12 * abar { 0.0 } else { c.re }).collect()
            }
        };
        self.symbol[0] = 0.0;
    }

    fn cell_nodes(&self, p: usize, nodes: &mut [usize]) {
        let n = self.n;
        let d = self.dim;
        let mut idx = [0usize; 3];
        let mut rem = p;
        for a in (0..d).rev() {
            idx[a] = rem % n;
            rem /= n;
        }
        for (corner, node) in nodes.iter_mut().enumerate().take(1 << d) {
            let mut q = 0;
            for a in 0..d {
                let bit = (corner >> (d - 1 - a)) & 1;
                q = q * n + (idx[a] + bit) % n;
            }
            *node = q;
        }
    }

    fn q1_scalar_laplacian(&self, coef: f64, u: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let nloc = 1 << d;
        let h = 1.0 / self.n as f64;
        let scale = coef * h.powi(d as i32 - 2);
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut nodes = [0usize; 8];
        for p in 0..self.npts() {
            self.cell_nodes(p, &mut nodes);
            for a in 0..nloc {
                let mut acc = 0.0;
                for b in 0..nloc {
                    let mut s = 0.0;
                    for i in 0..d {
                        s += self.q1_stiff[((i * d + i) * nloc + a) * nloc + b];
                    }
                    acc += s * u[nodes[b]];
                }
                out[nodes[a]] += scale * acc;
            }
        }
    }

    /// `out = L u`, both `m·N^d` long.
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        match self.disc {
            CellDiscretization::Spectral => self.apply_spectral(u, out),
            CellDiscretization::Q1 => self.apply_q1(u, out),
        }
    }

    fn apply_spectral(&self, u: &[f64], out: &mut [f64]) {
        let (m, d, npts) = (self.m, self.dim, self.npts());
        // gradients on the grid: grads[γ·d + k]
        let mut grads = vec![vec![0.0; npts]; m * d];
        for g in 0..m {
            let mut spec: Vec<Complex64> = u[g * npts..(g + 1) * npts].iter().map(|&v| Complex64::new(v, 0.0)).collect();
            self.fft.forward(&mut spec);
            for k in 0..d {
                let mut buf: Vec<Complex64> = spec
                    .iter()
                    .enumerate()
                    .map(|(p, c)| if self.mask[p] { c * Complex64::new(0.0, self.wave[p][k]) } else { Complex64::new(0.0, 0.0) })
                    .collect();
                self.fft.inverse(&mut buf);
                for (dst, v) in grads[g * d + k].iter_mut().zip(&buf) {
                    *dst = v.re;
                }
            }
        }
        for alpha in 0..m {
            let mut acc = vec![Complex64::new(0.0, 0.0); npts];
            for i in 0..d {
                let mut flux: Vec<Complex64> = (0..npts)
                    .map(|p| {
                        let mut s = 0.0;
                        for g in 0..m {
                            for k in 0..d {
                                s += self.coef_at(p, i, k, alpha, g) * grads[g * d + k][p];
                            }
                        }
                        Complex64::new(s, 0.0)
                    })
                    .collect();
                self.fft.forward(&mut flux);
                for (p, (a, f)) in acc.iter_mut().zip(&flux).enumerate() {
                    if self.mask[p] {
                        *a += f * Complex64::new(0.0, self.wave[p][i]);
                    }
                }
            }
            acc[0] = Complex64::new(0.0, 0.0);
            self.fft.inverse(&mut acc);
            for (dst, v) in out[alpha * npts..(alpha + 1) * npts].iter_mut().zip(&acc) {
                *dst = -v.re;
            }
        }
    }

    fn apply_q1(&self, u: &[f64], out: &mut [f64]) {
        let (m, d, npts) = (self.m, self.dim, self.npts());
        let nloc = 1 << d;
        let h = 1.0 / self.n as f64;
        let scale = h.powi(d as i32 - 2);
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut nodes = [0usize; 8];
        for p in 0..npts {
            self.cell_nodes(p, &mut nodes);
            for alpha in 0..m {
                for a in 0..nloc {
                    let mut acc = 0.0;
                    for beta in 0..m {
                        for b in 0..nloc {
                            let ub = u[beta * npts + nodes[b]];
                            if ub == 0.0 {
                                continue;
                            }
                            let mut s = 0.0;
                            for i in 0..d {
                                for j in 0..d {
                                    s += self.coef_at(p, i, j, alpha, beta) * self.q1_stiff[((i * d + j) * nloc + a) * nloc + b];
                                }
                            }
                            acc += s * ub;
                        }
                    }
                    out[alpha * npts + nodes[a]] += scale * acc;
                }
            }
        }
    }

    /// Right-hand side `div(A e_j e^β)` in the discrete (weak) sense.
    fn rhs(&self, j: usize, beta: usize) -> Vec<f64> {
        let (m, d, npts) = (self.m, self.dim, self.npts());
        let mut out = vec![0.0; m * npts];
        let constant = (0..m).all(|alpha| {
            (0..d).all(|i| {
                let c0 = self.coef_at(0, i, j, alpha, beta);
                (1..npts).all(|p| self.coef_at(p, i, j, alpha, beta) == c0)
            })
        });
        if constant {
            return out;
        }
        match self.disc {
            CellDiscretization::Spectral => {
                for alpha in 0..m {
                    let mut acc = vec![Complex64::new(0.0, 0.0); npts];
                    let mut any = false;
                    for i in 0..d {
                        let col: Vec<f64> = (0..npts).map(|p| self.coef_at(p, i, j, alpha, beta)).collect();
                        if col.iter().all(|&v| v == col[0]) {
                            continue;
                        }
                        any = true;
                        let mut spec: Vec<Complex64> = col.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                        self.fft.forward(&mut spec);
                        for (p, (a, f)) in acc.iter_mut().zip(&spec).enumerate() {
                            if self.mask[p] {
                                *a += f * Complex64::new(0.0, self.wave[p][i]);
                            }
                        }
                    }
                    if !any {
                        continue;
                    }
                    acc[0] = Complex64::new(0.0, 0.0);
                    self.fft.inverse(&mut acc);
                    for (dst, v) in out[alpha * npts..(alpha + 1) * npts].iter_mut().zip(&acc) {
                        *dst = v.re;
                    }
                }
            }
            CellDiscretization::Q1 => {
                let nloc = 1 << d;
                let h = 1.0 / self.n as f64;
                let scale = h.powi(d as i32 - 1);
                let mut nodes = [0usize; 8];
                for p in 0..npts {
                    self.cell_nodes(p, &mut nodes);
                    for alpha in 0..m {
                        for a in 0..nloc {
                            let mut s = 0.0;
                            for i in 0..d {
                                s += self.coef_at(p, i, j, alpha, beta) * self.q1_grad[i * nloc + a];
                            }
                            out[alpha * npts + nodes[a]] -= scale * s;
                        }
                    }
                }
            }
        }
        out
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let npts = self.npts();
        for g in 0..self.m {
            let mut spec: Vec<Complex64> = r[g * npts..(g + 1) * npts].iter().map(|&v| Complex64::new(v, 0.0)).collect();
            self.fft.forward(&mut spec);
            for (c, &s) in spec.iter_mut().zip(&self.symbol) {
                *c = if s > 0.0 { *c / s } else { Complex64::new(0.0, 0.0) };
            }
            self.fft.inverse(&mut spec);
            for (dst, v) in z[g * npts..(g + 1) * npts].iter_mut().zip(&spec) {
                *dst = v.re;
            }
        }
    }

    fn project_mean_zero(&self, u: &mut [f64]) {
        let npts = self.npts();
        for comp in u.chunks_exact_mut(npts) {
            let mean = comp.iter().sum::<f64>() / npts as f64;
            comp.iter_mut().for_each(|v| *v -= mean);
        }
    }

    /// Grid L² norm (`sqrt(mean(Σ_γ v²))`).
    fn grid_norm(&self, v: &[f64]) -> f64 {
        (v.iter().map(|x| x * x).sum::<f64>() / self.npts() as f64).sqrt()
    }

    fn solve_column(&self, j: usize, beta: usize, opts: &CellOptions) -> Result<(Vec<f64>, f64, usize)> {
        let len = self.m * self.npts();
        let mut b = self.rhs(j, beta);
        self.project_mean_zero(&mut b);
        let bnorm = self.grid_norm(&b);
        let mut x = vec![0.0; len];
        if bnorm == 0.0 {
            return Ok((x, 0.0, 0));
        }
        let mut r = b.clone();
        let mut z = vec![0.0; len];
        self.precondition(&r, &mut z);
        self.project_mean_zero(&mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; len];
        let mut rel = 1.0;
        for it in 1..=opts.max_iter {
            self.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(HomolabError::NotConverged { iterations: it, residual: rel });
            }
            let alpha = rz / pap;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            rel = self.grid_norm(&r) / bnorm;
            if rel <= opts.tol {
                self.project_mean_zero(&mut x);
                // report the true residual
                self.apply(&x, &mut ap);
                let true_res: Vec<f64> = b.iter().zip(&ap).map(|(bb, a)| bb - a).collect();
                return Ok((x, self.grid_norm(&true_res) / bnorm, it));
            }
            self.precondition(&r, &mut z);
            self.project_mean_zero(&mut z);
            let rz_new = dot(&r, &z);
            let beta_cg = rz_new / rz;
            rz = rz_new;
            for (pp, zz) in p.iter_mut().zip(&z) {
                *pp = zz + beta_cg * *pp;
            }
        }
        Err(HomolabError::NotConverged { iterations: opts.max_iter, residual: rel })
    }

    /// Cell averages of `A(∇χ + e_j e^β)`, i.e. the column `(j, β)` of `Â`.
    fn flux_mean(&self, chi: &[f64], j: usize, beta: usize, out: &mut [f64]) {
        let (m, d, npts) = (self.m, self.dim, self.npts());
        let grads = self.gradients(chi);
        for alpha in 0..m {
            for i in 0..d {
                let mut acc = 0.0;
                for p in 0..npts {
                    let mut s = self.coef_at(p, i, j, alpha, beta);
                    for g in 0..m {
                        for k in 0..d {
                            s += self.coef_at(p, i, k, alpha, g) * grads[g * d + k][p];
                        }
                    }
                    acc += s;
                }
                out[((alpha * m + beta) * d + i) * d + j] = acc / npts as f64;
            }
        }
    }

    /// Discrete gradients `∂_k χ^γ`: pointwise spectral derivatives, or Q1
    /// cell-mean gradients (indexed by cell).
    fn gradients(&self, chi: &[f64]) -> Vec<Vec<f64>> {
        let (m, d, npts) = (self.m, self.dim, self.npts());
        let mut grads = vec![vec![0.0; npts]; m * d];
        match self.disc {
            CellDiscretization::Spectral => {
                for g in 0..m {
                    let mut spec: Vec<Complex64> = chi[g * npts..(g + 1) * npts].iter().map(|&v| Complex64::new(v, 0.0)).collect();
                    self.fft.forward(&mut spec);
                    for k in 0..d {
                        let mut buf: Vec<Complex64> = spec
                            .iter()
                            .enumerate()
                            .map(|(p, c)| if self.mask[p] { c * Complex64::new(0.0, self.wave[p][k]) } else { Complex64::new(0.0, 0.0) })
                            .collect();
                        self.fft.inverse(&mut buf);
                        for (dst, v) in grads[g * d + k].iter_mut().zip(&buf) {
                            *dst = v.re;
                        }
                    }
                }
            }
            CellDiscretization::Q1 => {
                let nloc = 1 << d;
                let n = self.n as f64;
                let mut nodes = [0usize; 8];
                for p in 0..npts {
                    self.cell_nodes(p, &mut nodes);
                    for g in 0..m {
                        for k in 0..d {
                            let mut s = 0.0;
                            for a in 0..nloc {
                                s += self.q1_grad[k * nloc + a] * chi[g * npts + nodes[a]];
                            }
                            grads[g * d + k][p] = s * n;
                        }
                    }
                }
            }
        }
        grads
    }
}

/// Reference Q1 integrals on `[0,1]^d`: `stiff[((i·d + j)·nloc + a)·nloc + b]`
/// and `grad[i·nloc + a]`. Two-point Gauss per axis is exact here.
fn q1_reference(d: usize) -> (Vec<f64>, Vec<f64>) {
    let nloc = 1 << d;
    let g = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    let mut stiff = vec![0.0; d * d * nloc * nloc];
    let mut grad = vec![0.0; d * nloc];
    let basis_grad = |corner: usize, x: &[f64], i: usize| -> f64 {
        let mut v = 1.0;
        for a in 0..d {
            let bit = (corner >> (d - 1 - a)) & 1;
            v *= if a == i {
                if bit == 1 {
                    1.0
                } else {
                    -1.0
                }
            } else if bit == 1 {
                x[a]
            } else {
                1.0 - x[a]
            };
        }
        v
    };
    let w = 1.0 / nloc as f64;
    for qp in 0..nloc {
        let x: Vec<f64> = (0..d).map(|a| g[(qp >> (d - 1 - a)) & 1]).collect();
        for i in 0..d {
            for a in 0..nloc {
                let ga = basis_grad(a, &x, i);
                grad[i * nloc + a] += w * ga;
                for j in 0..d {
                    for b in 0..nloc {
                        stiff[((i * d + j) * nloc + a) * nloc + b] += w * ga * basis_grad(b, &x, j);
                    }
                }
            }
        }
    }
    (stiff, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yy, xx) in y.iter_mut().zip(x) {
        *yy += alpha * xx;
    }
}

fn pick_discretization(a: &PeriodicField, opts: &CellOptions) -> CellDiscretization {
    opts.discretization.unwrap_or(if a.is_fourier() { CellDiscretization::Spectral } else { CellDiscretization::Q1 })
}

pub fn solve_correctors(a: &PeriodicField, n: usize) -> Result<CorrectorSet> {
    solve_correctors_with(a, n, &CellOptions::default())
}

/// Solves the `d·m` cell problems; columns run concurrently.
pub fn solve_correctors_with(a: &PeriodicField, n: usize, opts: &CellOptions) -> Result<CorrectorSet> {
    let disc = pick_discretization(a, opts);
    let op = CellOperator::new(a, n, disc)?;
    let (d, m) = (op.dim, op.m);
    let solved: Vec<Result<(Vec<f64>, f64, usize)>> =
        (0..d * m).into_par_iter().map(|col| op.solve_column(col / m, col % m, opts)).collect();
    let mut chi = Vec::with_capacity(d * m);
    let mut residuals = Vec::with_capacity(d * m);
    let mut iterations = Vec::with_capacity(d * m);
    for r in solved {
        let (x, res, it) = r?;
        chi.push(x);
        residuals.push(res);
        iterations.push(it);
    }
    let mut set = CorrectorSet { n, dim: d, m, discretization: disc, chi, residuals, iterations, spectra: Vec::new() };
    if disc == CellDiscretization::Spectral {
        set.build_spectra(&op.fft);
    }
    Ok(set)
}

fn operator_for(a: &PeriodicField, chi: &CorrectorSet) -> Result<CellOperator> {
    let m = system_size_of(a)?;
    if a.dim() != chi.dim || m != chi.m {
        return Err(HomolabError::GridMismatch(format!(
            "coefficient (d = {}, m = {m}) does not match correctors (d = {}, m = {})",
            a.dim(),
            chi.dim,
            chi.m
        )));
    }
    CellOperator::new(a, chi.n, chi.discretization)
}

/// `â_ij^{αβ} = ⨍ [a_ij^{αβ} + a_ik^{αγ} ∂_k χ_j^{γβ}]` with the discrete
/// gradient of the cell solve.
pub fn homogenize(a: &PeriodicField, chi: &CorrectorSet) -> Result<HomogenizedTensor> {
    let op = operator_for(a, chi)?;
    let (m, d) = (op.m, op.dim);
    let mut a_hat = vec![0.0; m * m * d * d];
    for j in 0..d {
        for beta in 0..m {
            op.flux_mean(&chi.chi[j * m + beta], j, beta, &mut a_hat);
        }
    }
    Ok(HomogenizedTensor { m, d, a_hat, b_bar: None })
}

/// Largest grid L² norm over columns of `div(A(∇χ_j^β + e_j e^β))`, in
/// the weak sense of the discretization (Q1 residuals are divided by the
/// cell volume so they approximate the strong divergence).
pub fn cell_residual(a: &PeriodicField, chi: &CorrectorSet) -> Result<f64> {
    let op = operator_for(a, chi)?;
    let (m, d) = (op.m, op.dim);
    let len = m * op.npts();
    let scale = match op.disc {
        CellDiscretization::Spectral => 1.0,
        CellDiscretization::Q1 => (op.n as f64).powi(d as i32),
    };
    let mut worst: f64 = 0.0;
    let mut lu = vec![0.0; len];
    for j in 0..d {
        for beta in 0..m {
            let col = &chi.chi[j * m + beta];
            op.apply(col, &mut lu);
            let rhs = op.rhs(j, beta);
            let r: Vec<f64> = rhs.iter().zip(&lu).map(|(b, l)| scale * (b - l)).collect();
            worst = worst.max(op.grid_norm(&r));
        }
    }
    Ok(worst)
}

/// Correctors identically zero at the given resolution (useful to probe
/// residuals of the uncorrected problem).
pub fn zero_correctors(a: &PeriodicField, n: usize, disc: CellDiscretization) -> Result<CorrectorSet> {
    let m = system_size_of(a)?;
    let d = a.dim();
    let npts = n.pow(d as u32);
    Ok(CorrectorSet {
        n,
        dim: d,
        m,
        discretization: disc,
        chi: vec![vec![0.0; m * npts]; d * m],
        residuals: vec![0.0; d * m],
        iterations: vec![0; d * m],
        spectra: vec![vec![Vec::new(); m]; d * m],
    })
}

/// Spectral gradient of a corrector component at the grid points.
pub fn corrector_gradient(chi: &CorrectorSet, j: usize, gamma: usize, beta: usize, k: usize) -> Vec<f64> {
    let fft = TorusFft::new(chi.n, chi.dim);
    let kv = fft.wavevectors();
    let mut spec: Vec<Complex64> = chi.values(j, gamma, beta).iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut spec);
    for (c, kk) in spec.iter_mut().zip(&kv) {
        *c *= Complex64::new(0.0, 2.0 * PI * kk[k] as f64);
    }
    fft.inverse(&mut spec);
    spec.iter().map(|c| c.re).collect()
}
