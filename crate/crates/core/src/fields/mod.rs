//! 1-periodic coefficient fields on the unit torus.
//!
//! A [`PeriodicField`] is either a truncated Fourier series or a table of
//! samples on a uniform `N^d` torus grid. Values are flattened into
//! components; the layout per [`FieldKind`] is:
//!
//! * `Scalar`: one component.
//! * `Vector(m)`: `m` components.
//! * `Matrix(m)`: row-major `m × m`, entry `(α, β)` at `α·m + β`.
//! * `Tensor4(m)`: `a_ij^{αβ}` at `((α·m + β)·d + i)·d + j`.

pub mod io;

pub use io::{load_field, FieldSpec, GridSpec, ModeSpec};

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HomolabError, Result};

const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Scalar,
    Vector(usize),
    Matrix(usize),
    Tensor4(usize),
}

impl FieldKind {
    /// Number of flattened components in dimension `d`.
    pub fn components(&self, d: usize) -> usize {
        match *self {
            FieldKind::Scalar => 1,
            FieldKind::Vector(m) => m,
            FieldKind::Matrix(m) => m * m,
            FieldKind::Tensor4(m) => m * m * d * d,
        }
    }

    /// System size `m` of the kind.
    pub fn system_size(&self) -> usize {
        match *self {
            FieldKind::Scalar => 1,
            FieldKind::Vector(m) | FieldKind::Matrix(m) | FieldKind::Tensor4(m) => m,
        }
    }

    fn label(&self) -> String {
        match self {
            FieldKind::Scalar => "scalar".into(),
            FieldKind::Vector(m) => format!("vector({m})"),
            FieldKind::Matrix(m) => format!("matrix({m}x{m})"),
            FieldKind::Tensor4(m) => format!("tensor4({m}x{m}xdxd)"),
        }
    }
}

/// One Fourier mode `amp · e^{2πi k·y}` with one amplitude per component.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierMode {
    pub k: Vec<i64>,
    pub amp: Vec<Complex64>,
}

#[derive(Debug, Clone)]
enum Spectrum {
    /// Real field: zero mode plus the half lattice (first nonzero entry of
    /// `k` positive); the conjugate half is implied.
    Real(Vec<FourierMode>),
    Complex(Vec<FourierMode>),
}

#[derive(Debug, Clone)]
enum Representation {
    Fourier(Spectrum),
    Grid { n: usize, samples: Vec<f64> },
}

/// A 1-periodic field on `R^d`, immutable after construction.
#[derive(Debug, Clone)]
pub struct PeriodicField {
    kind: FieldKind,
    dim: usize,
    repr: Representation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub mu_lower: f64,
    pub mu_upper: f64,
    pub witness_lower: Vec<f64>,
    pub witness_upper: Vec<f64>,
}

fn is_upper_half(k: &[i64]) -> bool {
    match k.iter().find(|&&c| c != 0) {
        Some(&c) => c > 0,
        None => true,
    }
}

fn negate(k: &[i64]) -> Vec<i64> {
    k.iter().map(|c| -c).collect()
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > 3 {
        return Err(HomolabError::InvalidField(format!("dimension {dim} not in 1..=3")));
    }
    Ok(())
}

impl PeriodicField {
    /// Builds a Fourier-series field. For `real = true` the mode list may
    /// give either or both of `±k`; the missing partner is completed by
    /// conjugation and given pairs must already be conjugate.
    pub fn from_modes(kind: FieldKind, dim: usize, modes: Vec<FourierMode>, real: bool) -> Result<Self> {
        check_dim(dim)?;
        let nc = kind.components(dim);
        let mut acc: BTreeMap<Vec<i64>, Vec<Complex64>> = BTreeMap::new();
        for mode in modes {
            if mode.k.len() != dim {
                return Err(HomolabError::DimensionMismatch { expected: dim, got: mode.k.len() });
            }
            if mode.amp.len() != nc {
                return Err(HomolabError::InvalidField(format!(
                    "mode {:?} has {} amplitudes, kind {} needs {nc}",
                    mode.k,
                    mode.amp.len(),
                    kind.label()
                )));
            }
            let slot = acc.entry(mode.k).or_insert_with(|| vec![Complex64::new(0.0, 0.0); nc]);
            for (s, a) in slot.iter_mut().zip(&mode.amp) {
                *s += a;
            }
        }
        let spectrum = if real {
            let mut half = Vec::new();
            for (k, amp) in &acc {
                let scale = amp.iter().map(|a| a.norm()).fold(0.0, f64::max).max(1.0);
                if k.iter().all(|&c| c == 0) {
                    if amp.iter().any(|a| a.im.abs() > HERMITIAN_TOL * scale) {
                        return Err(HomolabError::InvalidField("zero mode of a real field must be real".into()));
                    }
                    half.push(FourierMode { k: k.clone(), amp: amp.iter().map(|a| Complex64::new(a.re, 0.0)).collect() });
                    continue;
                }
                let partner = negate(k);
                match acc.get(&partner) {
                    Some(p) => {
                        let mismatch = amp.iter().zip(p).any(|(a, b)| (a - b.conj()).norm() > HERMITIAN_TOL * scale);
                        if mismatch {
                            return Err(HomolabError::InvalidField(format!(
                                "modes {k:?} and {partner:?} are not conjugate; field is not real"
                            )));
                        }
                        if is_upper_half(k) {
                            half.push(FourierMode { k: k.clone(), amp: amp.clone() });
                        }
                    }
                    None => {
                        if is_upper_half(k) {
                            half.push(FourierMode { k: k.clone(), amp: amp.clone() });
                        } else {
                            half.push(FourierMode { k: partner, amp: amp.iter().map(|a| a.conj()).collect() });
                        }
                    }
                }
            }
            half.sort_by(|a, b| a.k.cmp(&b.k));
            Spectrum::Real(half)
        } else {
            Spectrum::Complex(acc.into_iter().map(|(k, amp)| FourierMode { k, amp }).collect())
        };
        Ok(Self { kind, dim, repr: Representation::Fourier(spectrum) })
    }

    /// Builds a grid field from `n^dim` points, components innermost.
    pub fn from_grid(kind: FieldKind, dim: usize, n: usize, samples: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        let expected = n.pow(dim as u32) * kind.components(dim);
        if n == 0 || samples.len() != expected {
            return Err(HomolabError::InvalidField(format!(
                "grid of size {n}^{dim} with kind {} needs {expected} samples, got {}",
                kind.label(),
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(HomolabError::InvalidField("grid samples must be finite".into()));
        }
        Ok(Self { kind, dim, repr: Representation::Grid { n, samples } })
    }

    /// Samples a closure at the grid points `idx / n` into a grid field.
    pub fn tabulate(kind: FieldKind, dim: usize, n: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        let nc = kind.components(dim);
        let mut samples = Vec::with_capacity(n.pow(dim as u32) * nc);
        for idx in grid_indices(n, dim) {
            let y: Vec<f64> = idx.iter().map(|&i| i as f64 / n as f64).collect();
            let v = f(&y);
            if v.len() != nc {
                return Err(HomolabError::InvalidField(format!("closure returned {} components, expected {nc}", v.len())));
            }
            samples.extend(v);
        }
        Self::from_grid(kind, dim, n, samples)
    }

    pub fn constant(kind: FieldKind, dim: usize, value: &[f64]) -> Result<Self> {
        let amp = value.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self::from_modes(kind, dim, vec![FourierMode { k: vec![0; dim], amp }], true)
    }

    /// `c + Σ` of real cosine/sine modes: `terms` are `(k, cos_coef, sin_coef)`
    /// for a scalar field `c + Σ a cos(2πk·y) + b sin(2πk·y)`.
    pub fn trig_scalar(dim: usize, constant: f64, terms: &[(Vec<i64>, f64, f64)]) -> Result<Self> {
        let mut modes = vec![FourierMode { k: vec![0; dim], amp: vec![Complex64::new(constant, 0.0)] }];
        for (k, a, b) in terms {
            // a cos θ + b sin θ = (a - i b)/2 e^{iθ} + conj
            modes.push(FourierMode { k: k.clone(), amp: vec![Complex64::new(0.5 * a, -0.5 * b)] });
        }
        Self::from_modes(FieldKind::Scalar, dim, modes, true)
    }

    /// Complex exponential `e^{2πi k·y}`.
    pub fn plane_wave(k: Vec<i64>) -> Result<Self> {
        let dim = k.len();
        Self::from_modes(FieldKind::Scalar, dim, vec![FourierMode { k, amp: vec![Complex64::new(1.0, 0.0)] }], false)
    }

    /// Lifts a scalar field `a(y)` to `a(y)·(constant pattern)` of another kind.
    pub fn times_constant(&self, kind: FieldKind, pattern: &[f64]) -> Result<Self> {
        if self.kind != FieldKind::Scalar {
            return Err(HomolabError::InvalidField("times_constant needs a scalar field".into()));
        }
        let nc = kind.components(self.dim);
        if pattern.len() != nc {
            return Err(HomolabError::InvalidField(format!("pattern has {} entries, kind needs {nc}", pattern.len())));
        }
        let repr = match &self.repr {
            Representation::Fourier(spec) => {
                let lift = |modes: &[FourierMode]| -> Vec<FourierMode> {
                    modes.iter().map(|m| FourierMode { k: m.k.clone(), amp: pattern.iter().map(|&p| m.amp[0] * p).collect() }).collect()
                };
                Representation::Fourier(match spec {
                    Spectrum::Real(m) => Spectrum::Real(lift(m)),
                    Spectrum::Complex(m) => Spectrum::Complex(lift(m)),
                })
            }
            Representation::Grid { n, samples } => {
                Representation::Grid { n: *n, samples: samples.iter().flat_map(|&s| pattern.iter().map(move |&p| s * p)).collect() }
            }
        };
        Ok(Self { kind, dim: self.dim, repr })
    }

    /// `a(y)·δ_ij δ^{αβ}` as a tensor4 field.
    pub fn isotropic_tensor(&self, m: usize) -> Result<Self> {
        let d = self.dim;
        let mut pattern = vec![0.0; m * m * d * d];
        for alpha in 0..m {
            for i in 0..d {
                pattern[((alpha * m + alpha) * d + i) * d + i] = 1.0;
            }
        }
        self.times_constant(FieldKind::Tensor4(m), &pattern)
    }

    /// `a(y)·I_m` as a matrix field.
    pub fn times_identity(&self, m: usize) -> Result<Self> {
        let mut pattern = vec![0.0; m * m];
        for a in 0..m {
            pattern[a * m + a] = 1.0;
        }
        self.times_constant(FieldKind::Matrix(m), &pattern)
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.kind.components(self.dim)
    }

    pub fn is_fourier(&self) -> bool {
        matches!(self.repr, Representation::Fourier(_))
    }

    pub fn is_real(&self) -> bool {
        !matches!(self.repr, Representation::Fourier(Spectrum::Complex(_)))
    }

    /// Grid size for grid fields.
    pub fn grid_size(&self) -> Option<usize> {
        match self.repr {
            Representation::Grid { n, .. } => Some(n),
            Representation::Fourier(_) => None,
        }
    }

    /// Raw grid samples for grid fields.
    pub fn grid_samples(&self) -> Option<&[f64]> {
        match &self.repr {
            Representation::Grid { samples, .. } => Some(samples),
            Representation::Fourier(_) => None,
        }
    }

    /// Full (not half-lattice) mode list; conjugate partners are expanded
    /// for real fields. `None` for grid fields.
    pub fn full_modes(&self) -> Option<Vec<FourierMode>> {
        match &self.repr {
            Representation::Fourier(Spectrum::Complex(m)) => Some(m.clone()),
            Representation::Fourier(Spectrum::Real(half)) => {
                let mut out = Vec::with_capacity(2 * half.len());
                for m in half {
                    out.push(m.clone());
                    if m.k.iter().any(|&c| c != 0) {
                        out.push(FourierMode { k: negate(&m.k), amp: m.amp.iter().map(|a| a.conj()).collect() });
                    }
                }
                out.sort_by(|a, b| a.k.cmp(&b.k));
                Some(out)
            }
            Representation::Grid { .. } => None,
        }
    }

    /// Largest Euclidean wavenumber `|k|` present; sets quadrature density.
    pub fn max_wavenumber(&self) -> f64 {
        match &self.repr {
            Representation::Fourier(Spectrum::Real(m)) | Representation::Fourier(Spectrum::Complex(m)) => {
                m.iter().map(|mode| mode.k.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt()).fold(0.0, f64::max)
            }
            Representation::Grid { n, .. } => 0.5 * *n as f64 * (self.dim as f64).sqrt(),
        }
    }

    fn check_point(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim {
            return Err(HomolabError::DimensionMismatch { expected: self.dim, got: y.len() });
        }
        Ok(())
    }

    pub fn evaluate(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_point(y)?;
        let mut out = vec![0.0; self.components()];
        self.evaluate_into(y, &mut out);
        Ok(out)
    }

    /// Real part of the field at `y` (the field itself when real).
    /// Panics if `y` or `out` has the wrong length.
    pub fn evaluate_into(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.dim);
        assert_eq!(out.len(), self.components());
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.repr {
            Representation::Fourier(Spectrum::Real(half)) => {
                for mode in half {
                    let e = phase(&mode.k, y);
                    let w = if mode.k.iter().all(|&c| c == 0) { 1.0 } else { 2.0 };
                    for (o, a) in out.iter_mut().zip(&mode.amp) {
                        *o += w * (a.re * e.re - a.im * e.im);
                    }
                }
            }
            Representation::Fourier(Spectrum::Complex(modes)) => {
                for mode in modes {
                    let e = phase(&mode.k, y);
                    for (o, a) in out.iter_mut().zip(&mode.amp) {
                        *o += a.re * e.re - a.im * e.im;
                    }
                }
            }
            Representation::Grid { n, samples } => grid_interpolate(*n, self.dim, samples, y, out),
        }
    }

    pub fn evaluate_complex_into(&self, y: &[f64], out: &mut [Complex64]) {
        assert_eq!(y.len(), self.dim);
        assert_eq!(out.len(), self.components());
        match &self.repr {
            Representation::Fourier(Spectrum::Complex(modes)) => {
                out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                for mode in modes {
                    let e = phase(&mode.k, y);
                    for (o, a) in out.iter_mut().zip(&mode.amp) {
                        *o += a * e;
                    }
                }
            }
            _ => {
                let mut re = vec![0.0; out.len()];
                self.evaluate_into(y, &mut re);
                for (o, r) in out.iter_mut().zip(re) {
                    *o = Complex64::new(r, 0.0);
                }
            }
        }
    }

    /// Torus mean; exact zeroth mode or the trapezoidal grid average.
    pub fn mean(&self) -> Vec<f64> {
        self.mean_complex().into_iter().map(|c| c.re).collect()
    }

    pub fn mean_complex(&self) -> Vec<Complex64> {
        let nc = self.components();
        match &self.repr {
            Representation::Fourier(Spectrum::Real(m)) | Representation::Fourier(Spectrum::Complex(m)) => m
                .iter()
                .find(|mode| mode.k.iter().all(|&c| c == 0))
                .map(|mode| mode.amp.clone())
                .unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); nc]),
            Representation::Grid { samples, .. } => {
                let npts = samples.len() / nc;
                let mut acc = vec![0.0; nc];
                for chunk in samples.chunks_exact(nc) {
                    for (a, s) in acc.iter_mut().zip(chunk) {
                        *a += s;
                    }
                }
                acc.into_iter().map(|a| Complex64::new(a / npts as f64, 0.0)).collect()
            }
        }
    }

    /// `f − mean(f)`.
    pub fn minus_mean(&self) -> Self {
        let mean = self.mean_complex();
        let repr = match &self.repr {
            Representation::Fourier(spec) => {
                let strip =
                    |modes: &[FourierMode]| -> Vec<FourierMode> { modes.iter().filter(|m| m.k.iter().any(|&c| c != 0)).cloned().collect() };
                Representation::Fourier(match spec {
                    Spectrum::Real(m) => Spectrum::Real(strip(m)),
                    Spectrum::Complex(m) => Spectrum::Complex(strip(m)),
                })
            }
            Representation::Grid { n, samples } => {
                let nc = mean.len();
                Representation::Grid { n: *n, samples: samples.iter().enumerate().map(|(i, s)| s - mean[i % nc].re).collect() }
            }
        };
        Self { kind: self.kind, dim: self.dim, repr }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let repr = match &self.repr {
            Representation::Fourier(spec) => {
                let scale = |modes: &[FourierMode]| -> Vec<FourierMode> {
                    modes.iter().map(|m| FourierMode { k: m.k.clone(), amp: m.amp.iter().map(|a| a * c).collect() }).collect()
                };
                Representation::Fourier(match spec {
                    Spectrum::Real(m) => Spectrum::Real(scale(m)),
                    Spectrum::Complex(m) => Spectrum::Complex(scale(m)),
                })
            }
            Representation::Grid { n, samples } => Representation::Grid { n: *n, samples: samples.iter().map(|s| s * c).collect() },
        };
        Self { kind: self.kind, dim: self.dim, repr }
    }

    /// The field `y ↦ f(y + shift)`. Grid fields accept only shifts on the
    /// grid lattice `Z^d / n`.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        self.check_point(shift)?;
        let repr = match &self.repr {
            Representation::Fourier(spec) => {
                let rotate = |modes: &[FourierMode]| -> Vec<FourierMode> {
                    modes
                        .iter()
                        .map(|m| {
                            let e = phase(&m.k, shift);
                            FourierMode { k: m.k.clone(), amp: m.amp.iter().map(|a| a * e).collect() }
                        })
                        .collect()
                };
                Representation::Fourier(match spec {
                    Spectrum::Real(m) => Spectrum::Real(rotate(m)),
                    Spectrum::Complex(m) => Spectrum::Complex(rotate(m)),
                })
            }
            Representation::Grid { n, samples } => {
                let n = *n;
                let mut offs = Vec::with_capacity(self.dim);
                for &s in shift {
                    let cells = s * n as f64;
                    if (cells - cells.round()).abs() > 1e-9 {
                        return Err(HomolabError::GridMismatch(format!("shift {s} is not a multiple of the grid spacing 1/{n}")));
                    }
                    offs.push((cells.round() as i64).rem_euclid(n as i64) as usize);
                }
                let nc = self.components();
                let mut out = vec![0.0; samples.len()];
                for (p, idx) in grid_indices(n, self.dim).enumerate() {
                    let mut src = 0;
                    for (&i, &o) in idx.iter().zip(&offs) {
                        src = src * n + (i + o) % n;
                    }
                    out[p * nc..(p + 1) * nc].copy_from_slice(&samples[src * nc..(src + 1) * nc]);
                }
                Representation::Grid { n, samples: out }
            }
        };
        Ok(Self { kind: self.kind, dim: self.dim, repr })
    }

    /// Samples the field at `idx / n`, point-major with components innermost.
    pub fn sample_grid(&self, n: usize) -> Vec<f64> {
        if let Representation::Grid { n: own, samples } = &self.repr {
            if *own == n {
                return samples.clone();
            }
        }
        let nc = self.components();
        let mut out = vec![0.0; n.pow(self.dim as u32) * nc];
        let mut y = vec![0.0; self.dim];
        for (p, idx) in grid_indices(n, self.dim).enumerate() {
            for (yy, &i) in y.iter_mut().zip(&idx) {
                *yy = i as f64 / n as f64;
            }
            self.evaluate_into(&y, &mut out[p * nc..(p + 1) * nc]);
        }
        out
    }

    /// Lower and upper bounds of the quadratic form of the (symmetric part
    /// of the) coefficient over `n_samples` seeded random points `y`. At
    /// each point the extremes over unit `ξ` are exact eigenvalues.
    pub fn check_ellipticity(&self, n_samples: usize, seed: u64) -> Result<EllipticityReport> {
        let d = self.dim;
        let size = match self.kind {
            FieldKind::Scalar => 1,
            FieldKind::Matrix(m) => m,
            FieldKind::Tensor4(m) => m * d,
            FieldKind::Vector(_) => return Err(HomolabError::NonSquareKind(self.kind.label())),
        };
        if !self.is_real() {
            return Err(HomolabError::InvalidField("ellipticity needs a real field".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; self.components()];
        let mut report = EllipticityReport {
            mu_lower: f64::INFINITY,
            mu_upper: f64::NEG_INFINITY,
            witness_lower: vec![0.0; d],
            witness_upper: vec![0.0; d],
        };
        let mut y = vec![0.0; d];
        for _ in 0..n_samples.max(1) {
            for c in y.iter_mut() {
                *c = rng.gen::<f64>();
            }
            self.evaluate_into(&y, &mut values);
            let (lo, hi) = symmetric_extremes(&quadratic_form_matrix(self.kind, d, &values), size);
            if lo < report.mu_lower {
                report.mu_lower = lo;
                report.witness_lower.copy_from_slice(&y);
            }
            if hi > report.mu_upper {
                report.mu_upper = hi;
                report.witness_upper.copy_from_slice(&y);
            }
        }
        Ok(report)
    }
}

/// Matrix of the quadratic form: for tensor4, rows `(α, i)` and columns
/// `(β, j)` hold `a_ij^{αβ}`.
pub(crate) fn quadratic_form_matrix(kind: FieldKind, d: usize, v: &[f64]) -> Vec<f64> {
    match kind {
        FieldKind::Tensor4(m) => {
            let n = m * d;
            let mut q = vec![0.0; n * n];
            for a in 0..m {
                for b in 0..m {
                    for i in 0..d {
                        for j in 0..d {
                            q[(a * d + i) * n + (b * d + j)] = v[((a * m + b) * d + i) * d + j];
                        }
                    }
                }
            }
            q
        }
        _ => v.to_vec(),
    }
}

/// Smallest and largest eigenvalue of the symmetric part of an `n × n` matrix.
pub(crate) fn symmetric_extremes(q: &[f64], n: usize) -> (f64, f64) {
    match n {
        1 => (q[0], q[0]),
        2 => {
            let (a, b, c) = (q[0], 0.5 * (q[1] + q[2]), q[3]);
            let mid = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            (mid - rad, mid + rad)
        }
        _ => {
            let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (q[i * n + j] + q[j * n + i]));
            let eig = m.symmetric_eigenvalues();
            (eig.min(), eig.max())
        }
    }
}

#[inline]
fn phase(k: &[i64], y: &[f64]) -> Complex64 {
    let mut t = 0.0;
    for (&kc, &yc) in k.iter().zip(y) {
        t += kc as f64 * yc.rem_euclid(1.0);
    }
    let theta = 2.0 * PI * t.rem_euclid(1.0);
    Complex64::new(theta.cos(), theta.sin())
}

/// Row-major multi-indices of an `n^dim` grid.
pub(crate) fn grid_indices(n: usize, dim: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = n.pow(dim as u32);
    (0..total).map(move |mut p| {
        let mut idx = vec![0; dim];
        for slot in idx.iter_mut().rev() {
            *slot = p % n;
            p /= n;
        }
        idx
    })
}

/// Periodic sinc weights of trigonometric interpolation with the Nyquist
/// mode split symmetrically (`n` even).
fn dirichlet_weights(n: usize, y: f64) -> Vec<f64> {
    let nf = n as f64;
    let s = (PI * nf * y).sin();
    (0..n)
        .map(|j| {
            let t = y - j as f64 / nf;
            let st = (PI * t).sin();
            if st.abs() < 1e-15 {
                // t is an integer: interpolation node
                1.0
            } else {
                // sin(nπt) = (−1)^j sin(nπy)
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * s * (PI * t).cos() / (nf * st)
            }
        })
        .collect()
}

fn grid_interpolate(n: usize, dim: usize, samples: &[f64], y: &[f64], out: &mut [f64]) {
    let nc = out.len();
    let wrapped: Vec<f64> = y.iter().map(|c| c.rem_euclid(1.0)).collect();
    if n.is_power_of_two() && n >= 2 {
        let weights: Vec<Vec<f64>> = wrapped.iter().map(|&c| dirichlet_weights(n, c)).collect();
        let total = n.pow(dim as u32);
        for p in 0..total {
            let mut w = 1.0;
            let mut rem = p;
            for axis in (0..dim).rev() {
                w *= weights[axis][rem % n];
                rem /= n;
            }
            if w == 0.0 {
                continue;
            }
            for (o, s) in out.iter_mut().zip(&samples[p * nc..(p + 1) * nc]) {
                *o += w * s;
            }
        }
    } else {
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0; dim];
        for a in 0..dim {
            let t = wrapped[a] * n as f64;
            let i = (t.floor() as usize).min(n - 1);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut p = 0;
            for a in 0..dim {
                let bit = (corner >> (dim - 1 - a)) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                p = p * n + (base[a] + bit) % n;
            }
            for (o, s) in out.iter_mut().zip(&samples[p * nc..(p + 1) * nc]) {
                *o += w * s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laminate() -> PeriodicField {
        PeriodicField::trig_scalar(2, 2.0, &[(vec![1, 0], 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn evaluate_wraps_sine() {
        let f = PeriodicField::trig_scalar(2, 0.0, &[(vec![1, 0], 0.0, 1.0)]).unwrap();
        assert_eq!(f.evaluate(&[1.25, 0.0]).unwrap(), vec![1.0]);
        let v = laminate().evaluate(&[0.75, 0.3]).unwrap()[0];
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_matrix_evaluates_to_itself() {
        let m = [2.0, 0.5, 0.5, 3.0];
        let f = PeriodicField::constant(FieldKind::Matrix(2), 2, &m).unwrap();
        assert_eq!(f.evaluate(&[0.37, -4.2]).unwrap(), m.to_vec());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(laminate().evaluate(&[0.1, 0.2, 0.3]), Err(HomolabError::DimensionMismatch { expected: 2, got: 3 })));
    }

    #[test]
    fn means() {
        let b = PeriodicField::from_modes(
            FieldKind::Scalar,
            2,
            vec![
                FourierMode { k: vec![0, 0], amp: vec![Complex64::new(5.0, 0.0)] },
                FourierMode { k: vec![1, 1], amp: vec![Complex64::new(0.25, 0.0)] },
                FourierMode { k: vec![1, -1], amp: vec![Complex64::new(0.25, 0.0)] },
            ],
            true,
        )
        .unwrap();
        assert_eq!(b.mean(), vec![5.0]);
        // the cosine product really is cos(2πy1)cos(2πy2)
        let v = b.evaluate(&[0.1, 0.3]).unwrap()[0];
        let want = 5.0 + (2.0 * PI * 0.1).cos() * (2.0 * PI * 0.3).cos();
        assert!((v - want).abs() < 1e-14);
        let c = PeriodicField::constant(FieldKind::Scalar, 3, &[-1.5]).unwrap();
        assert_eq!(c.mean(), vec![-1.5]);
    }

    #[test]
    fn mean_of_reciprocal_laminate_on_grid() {
        // trapezoid sums of smooth periodic functions converge spectrally
        let a = laminate();
        let inv = PeriodicField::tabulate(FieldKind::Scalar, 2, 64, |y| vec![1.0 / a.evaluate(y).unwrap()[0]]).unwrap();
        assert!((inv.mean()[0] - 1.0 / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn hermitian_partner_mismatch_rejected() {
        let r = PeriodicField::from_modes(
            FieldKind::Scalar,
            1,
            vec![
                FourierMode { k: vec![2], amp: vec![Complex64::new(1.0, 1.0)] },
                FourierMode { k: vec![-2], amp: vec![Complex64::new(1.0, 1.0)] },
            ],
            true,
        );
        assert!(matches!(r, Err(HomolabError::InvalidField(_))));
    }

    #[test]
    fn one_sided_modes_are_completed() {
        // only +k given: field is 2 Re(amp e^{iθ})
        let f =
            PeriodicField::from_modes(FieldKind::Scalar, 1, vec![FourierMode { k: vec![-1], amp: vec![Complex64::new(0.5, 0.0)] }], true)
                .unwrap();
        let v = f.evaluate(&[0.1]).unwrap()[0];
        assert!((v - (2.0 * PI * 0.1).cos()).abs() < 1e-15);
        let full = f.full_modes().unwrap();
        assert_eq!(full.len(), 2);
        assert_eq!(full[0].amp[0], full[1].amp[0].conj());
    }

    #[test]
    fn trig_grid_interpolation_is_exact_for_band_limited_fields() {
        let f = PeriodicField::trig_scalar(2, 1.0, &[(vec![1, 2], 0.3, -0.7), (vec![3, 0], 0.1, 0.2)]).unwrap();
        let g = PeriodicField::from_grid(FieldKind::Scalar, 2, 16, f.sample_grid(16)).unwrap();
        for y in [[0.013, 0.77], [0.5, 0.5], [0.999, 0.001], [-3.2, 7.45]] {
            let a = f.evaluate(&y).unwrap()[0];
            let b = g.evaluate(&y).unwrap()[0];
            assert!((a - b).abs() < 1e-12, "{y:?}: {a} vs {b}");
        }
    }

    #[test]
    fn multilinear_interpolation_reproduces_nodes() {
        let g = PeriodicField::tabulate(FieldKind::Vector(2), 2, 6, |y| vec![y[0] + 2.0 * y[1], 1.0]).unwrap();
        let v = g.evaluate(&[2.0 / 6.0, 1.0 / 6.0]).unwrap();
        assert!((v[0] - 4.0 / 6.0).abs() < 1e-14 && (v[1] - 1.0).abs() < 1e-14);
        let mid = g.evaluate(&[2.5 / 6.0, 1.0 / 6.0]).unwrap();
        assert!((mid[0] - 4.5 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn ellipticity_identity() {
        let id = PeriodicField::constant(FieldKind::Scalar, 2, &[1.0]).unwrap().isotropic_tensor(1).unwrap();
        let r = id.check_ellipticity(100, 7).unwrap();
        assert!((r.mu_lower - 1.0).abs() < 1e-15 && (r.mu_upper - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ellipticity_brackets_laminate() {
        let a = laminate().isotropic_tensor(1).unwrap();
        let r = a.check_ellipticity(10_000, 1).unwrap();
        assert!(r.mu_lower <= r.mu_upper);
        assert!((r.mu_lower - 1.0).abs() < 1e-3, "{}", r.mu_lower);
        assert!((r.mu_upper - 3.0).abs() < 1e-3, "{}", r.mu_upper);
        assert!((r.witness_lower[0] - 0.75).abs() < 0.02);
    }

    #[test]
    fn ellipticity_detects_negative_eigenvalue() {
        // b(y) = diag(1, sin 2πy1) is indefinite near y1 = 3/4
        let s = PeriodicField::trig_scalar(2, 0.0, &[(vec![1, 0], 0.0, 1.0)]).unwrap();
        let b = s.times_constant(FieldKind::Matrix(2), &[0.0, 0.0, 0.0, 1.0]).unwrap();
        let one = PeriodicField::constant(FieldKind::Matrix(2), 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = PeriodicField::from_grid(
            FieldKind::Matrix(2),
            2,
            8,
            b.sample_grid(8).iter().zip(one.sample_grid(8)).map(|(x, y)| x + y).collect(),
        )
        .unwrap();
        let r = b.check_ellipticity(2000, 3).unwrap();
        assert!(r.mu_lower < 0.0);
    }

    #[test]
    fn vector_kind_is_not_square() {
        let v = PeriodicField::constant(FieldKind::Vector(2), 2, &[1.0, 2.0]).unwrap();
        assert!(matches!(v.check_ellipticity(10, 0), Err(HomolabError::NonSquareKind(_))));
    }

    #[test]
    fn grid_translation_by_whole_cells() {
        let g = PeriodicField::tabulate(FieldKind::Scalar, 2, 8, |y| vec![y[0] * 10.0 + y[1]]).unwrap();
        let t = g.translated(&[0.25, -0.125]).unwrap();
        let a = t.evaluate(&[0.0, 0.25]).unwrap()[0];
        let b = g.evaluate(&[0.25, 0.125]).unwrap()[0];
        assert!((a - b).abs() < 1e-12);
        assert!(g.translated(&[0.1, 0.0]).is_err());
    }
}
