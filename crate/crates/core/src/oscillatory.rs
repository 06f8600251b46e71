//! Oscillatory boundary integrals `∫_S f(x/ε) φ(x) dσ`, Weyl defect
//! sweeps, the boundary constant `M_ε` and log-log slope fits.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HomolabError, Result};
use crate::fields::PeriodicField;
use crate::geometry::SurfaceChart;

/// Weight `φ` on the surface.
pub type SurfaceWeight = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Debug, Clone)]
pub struct OscillatoryOptions {
    /// Gauss nodes per shortest oscillation wavelength on the finest pass.
    pub nodes_per_wavelength: f64,
    /// Nodes per unit length regardless of `ε`, for `φ` and the geometry.
    pub min_density: f64,
    pub node_budget: usize,
    /// Accept when `|I(2D) − I(D)| ≤ rel_tol·|I| + abs_tol`.
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for OscillatoryOptions {
    fn default() -> Self {
        Self { nodes_per_wavelength: 16.0, min_density: 64.0, node_budget: 10_000_000, rel_tol: 1e-3, abs_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillatoryValue {
    /// `∫ f(x/ε) φ dσ` per component of `f`.
    pub value: Vec<Complex64>,
    /// `∫ (f − ⟨f⟩)(x/ε) φ dσ`, the part that must vanish as `ε → 0`.
    pub fluctuation: Vec<Complex64>,
    /// `∫ φ dσ` on the same nodes.
    pub weight_integral: f64,
    /// Density-doubling estimate of the quadrature error.
    pub est_error: f64,
    pub nodes: usize,
}

struct Pass {
    fluct: Vec<Complex64>,
    phi: f64,
}

fn pass(surface: &SurfaceChart, fluct: &PeriodicField, phi: &SurfaceWeight, eps: f64, density: f64) -> Pass {
    let d = surface.dim();
    let nc = fluct.components();
    let mut acc = vec![Complex64::new(0.0, 0.0); nc];
    let mut buf = vec![Complex64::new(0.0, 0.0); nc];
    let mut y = vec![0.0; d];
    let mut phi_int = 0.0;
    surface.for_each_node(density, |q| {
        let x = &q.point[..d];
        let w = q.weight * phi(x);
        phi_int += w;
        if w == 0.0 {
            return;
        }
        for (yy, xx) in y.iter_mut().zip(x) {
            *yy = xx / eps;
        }
        fluct.evaluate_complex_into(&y, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b * w;
        }
    });
    Pass { fluct: acc, phi: phi_int }
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn oscillatory_integral(surface: &SurfaceChart, f: &PeriodicField, phi: &SurfaceWeight, eps: f64) -> Result<OscillatoryValue> {
    oscillatory_integral_with(surface, f, phi, eps, &OscillatoryOptions::default())
}

/// Composite Gauss evaluation with at least `nodes_per_wavelength` nodes
/// per period of the fastest mode of `f`, refined by density doubling
/// until the estimate meets the tolerance or the node budget is reached.
pub fn oscillatory_integral_with(
    surface: &SurfaceChart,
    f: &PeriodicField,
    phi: &SurfaceWeight,
    eps: f64,
    opts: &OscillatoryOptions,
) -> Result<OscillatoryValue> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(HomolabError::Config(format!("ε must be positive, got {eps}")));
    }
    if f.dim() != surface.dim() {
        return Err(HomolabError::DimensionMismatch { expected: surface.dim(), got: f.dim() });
    }
    let mean = f.mean_complex();
    let fluct = f.minus_mean();
    let kmax = fluct.max_wavenumber();
    let mut density = (opts.nodes_per_wavelength * kmax / eps).max(opts.min_density) / 2.0;
    let budget_check = |density: f64| -> Result<usize> {
        let n = surface.node_count(density);
        if n > opts.node_budget {
            return Err(HomolabError::NodeBudgetExceeded { required: n, budget: opts.node_budget });
        }
        Ok(n)
    };
    budget_check(2.0 * density)?;
    let mut coarse = pass(surface, &fluct, phi, eps, density);
    loop {
        let nodes = budget_check(2.0 * density)?;
        let fine = pass(surface, &fluct, phi, eps, 2.0 * density);
        let mut est = max_diff(&coarse.fluct, &fine.fluct);
        let value: Vec<Complex64> = mean.iter().zip(&fine.fluct).map(|(m, fl)| m * fine.phi + fl).collect();
        est = est.max(mean.iter().map(|m| m.norm()).fold(0.0, f64::max) * (fine.phi - coarse.phi).abs());
        let scale = value.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let done = est <= opts.rel_tol * scale + opts.abs_tol;
        if done || budget_check(4.0 * density).is_err() {
            return Ok(OscillatoryValue { value, fluctuation: fine.fluct, weight_integral: fine.phi, est_error: est, nodes });
        }
        density *= 2.0;
        coarse = fine;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub eps: f64,
    pub value_re: f64,
    pub value_im: f64,
    pub defect: f64,
    pub est_quad_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorySeries {
    pub f_descriptor: String,
    pub surface_descriptor: String,
    pub entries: Vec<SeriesEntry>,
}

impl OscillatorySeries {
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self {
            f_descriptor: String::new(),
            surface_descriptor: String::new(),
            entries: pairs
                .iter()
                .map(|&(eps, defect)| SeriesEntry { eps, value_re: 0.0, value_im: 0.0, defect, est_quad_err: 0.0 })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,value_re,value_im,defect,est_quad_err\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{},{},{}\n", e.eps, e.value_re, e.value_im, e.defect, e.est_quad_err));
        }
        out
    }
}

pub(crate) fn check_decreasing(eps_list: &[f64]) -> Result<()> {
    if eps_list.is_empty() {
        return Err(HomolabError::Config("empty ε list".into()));
    }
    if eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(HomolabError::Config("ε values must be positive".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HomolabError::Config("ε list must be strictly decreasing".into()));
    }
    Ok(())
}

/// `defect(ε) = |∫ f(x/ε)φ dσ − ⟨f⟩∫φ dσ|` for scalar `f`; the ε-points
/// run in parallel with independent fixed rules.
pub fn weyl_defect_series(surface: &SurfaceChart, f: &PeriodicField, phi: &SurfaceWeight, eps_list: &[f64]) -> Result<OscillatorySeries> {
    check_decreasing(eps_list)?;
    if f.components() != 1 {
        return Err(HomolabError::InvalidField("Weyl sweeps take a scalar field".into()));
    }
    let entries: Result<Vec<SeriesEntry>> = eps_list
        .par_iter()
        .map(|&eps| {
            let v = oscillatory_integral(surface, f, phi, eps).map_err(|e| e.at(eps, "weyl"))?;
            Ok(SeriesEntry {
                eps,
                value_re: v.value[0].re,
                value_im: v.value[0].im,
                defect: v.fluctuation[0].norm(),
                est_quad_err: v.est_error,
            })
        })
        .collect();
    Ok(OscillatorySeries {
        f_descriptor: format!("{:?} field, max |k| = {}", f.kind(), f.max_wavenumber()),
        surface_descriptor: surface.name().to_string(),
        entries: entries?,
    })
}

/// `M_ε = ⨍_{∂Ω} (b̄ − b(x/ε)) dσ`, row-major `m×m` (length 1 for scalar b).
pub fn m_epsilon(surface: &SurfaceChart, b: &PeriodicField, eps: f64) -> Result<Vec<f64>> {
    let one = |_: &[f64]| 1.0;
    let v = oscillatory_integral(surface, b, &one, eps)?;
    let area = v.weight_integral;
    Ok(v.fluctuation.iter().map(|c| -c.re / area).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    /// Decay exponent `γ` in `defect ≈ C ε^γ`; `+∞` when exact.
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    /// All used defects vanish (to 1e−12).
    pub exact: bool,
    pub drop_first: usize,
    pub used: usize,
}

/// Defects at or below this count as exactly zero.
pub const ZERO_DEFECT: f64 = 1e-12;

/// Least-squares line through `(log ε, log defect)` after skipping the
/// first `drop_first` entries.
pub fn fit_decay_slope(series: &OscillatorySeries, drop_first: usize) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = series.entries.iter().skip(drop_first).map(|e| (e.eps, e.defect)).collect();
    fit_pairs(&pts, drop_first)
}

pub fn fit_pairs(pts: &[(f64, f64)], drop_first: usize) -> Result<SlopeFit> {
    if pts.len() < 2 {
        return Err(HomolabError::InsufficientData(format!("{} usable entries, need at least 2", pts.len())));
    }
    if pts.iter().any(|(e, d)| !(*e > 0.0) || !d.is_finite() || *d < 0.0) {
        return Err(HomolabError::InsufficientData("entries need ε > 0 and finite defects".into()));
    }
    let zeros = pts.iter().filter(|(_, d)| *d <= ZERO_DEFECT).count();
    if zeros == pts.len() {
        return Ok(SlopeFit { slope: f64::INFINITY, intercept: 0.0, max_residual: 0.0, exact: true, drop_first, used: pts.len() });
    }
    if zeros > 0 {
        return Err(HomolabError::InsufficientData(format!("{zeros} of {} defects vanish; no log-log fit", pts.len())));
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|(e, _)| e.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, d)| d.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HomolabError::InsufficientData("all ε values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).abs()).fold(0.0, f64::max);
    Ok(SlopeFit { slope, intercept, max_residual, exact: false, drop_first, used: pts.len() })
}

#[cfg(test)]
#[path = "../tests/common/bessel.rs"]
#[allow(dead_code)]
mod bessel;

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::bessel::j0;
    use super::*;
    use crate::fields::FieldKind;

    fn one(_: &[f64]) -> f64 {
        1.0
    }

    #[test]
    fn constant_field_gives_the_measure() {
        let c = SurfaceChart::circle(1.0).unwrap();
        let f = PeriodicField::constant(FieldKind::Scalar, 2, &[1.0]).unwrap();
        for eps in [0.5, 0.01] {
            let v = oscillatory_integral(&c, &f, &one, eps).unwrap();
            assert!((v.value[0].re - 2.0 * PI).abs() < 1e-10);
            assert_eq!(v.fluctuation[0], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn plane_wave_on_circle_is_bessel() {
        let c = SurfaceChart::circle(1.0).unwrap();
        let f = PeriodicField::plane_wave(vec![1, 0]).unwrap();
        for eps in [0.3, 0.125, 1.0 / 64.0, 1.0 / 512.0] {
            let v = oscillatory_integral(&c, &f, &one, eps).unwrap();
            let want = 2.0 * PI * j0(2.0 * PI / eps);
            assert!((v.value[0].re - want).abs() < 1e-9, "ε={eps}: {} vs {want}", v.value[0].re);
            assert!(v.value[0].im.abs() < 1e-10);
            assert!(v.est_error <= 1e-3 * v.value[0].norm() + 1e-10);
        }
    }

    #[test]
    fn plane_wave_on_square_is_two() {
        let sq = SurfaceChart::polygon(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let f = PeriodicField::plane_wave(vec![1, 0]).unwrap();
        for n in [8, 13, 64] {
            let v = oscillatory_integral(&sq, &f, &one, 1.0 / n as f64).unwrap();
            assert!((v.value[0] - Complex64::new(2.0, 0.0)).norm() < 1e-12, "{:?}", v.value);
        }
    }

    #[test]
    fn m_epsilon_matches_bessel() {
        let c = SurfaceChart::circle(1.0).unwrap();
        let b = PeriodicField::trig_scalar(2, 0.0, &[(vec![1, 0], 1.0, 0.0)]).unwrap();
        for k in 3..=9 {
            let eps = 0.5f64.powi(k);
            let m = m_epsilon(&c, &b, eps).unwrap();
            assert!((m[0] + j0(2.0 * PI / eps)).abs() < 1e-10);
        }
        let constant = PeriodicField::constant(FieldKind::Scalar, 2, &[3.0]).unwrap();
        assert_eq!(m_epsilon(&c, &constant, 0.1).unwrap(), vec![0.0]);
    }

    #[test]
    fn node_budget_is_reported() {
        let c = SurfaceChart::circle(1.0).unwrap();
        let f = PeriodicField::plane_wave(vec![1, 0]).unwrap();
        let opts = OscillatoryOptions { node_budget: 1000, ..Default::default() };
        let err = oscillatory_integral_with(&c, &f, &one, 1e-3, &opts).unwrap_err();
        assert!(matches!(err, HomolabError::NodeBudgetExceeded { required, budget: 1000 } if required > 1000));
    }

    #[test]
    fn slope_fit_examples() {
        let s = OscillatorySeries::from_pairs(&[(0.5, 0.5), (0.25, 0.25), (0.125, 0.125)]);
        let fit = fit_decay_slope(&s, 0).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-14 && fit.max_residual < 1e-14);
        let s = OscillatorySeries::from_pairs(&[(0.5, 0.25), (0.25, 0.0625)]);
        assert!((fit_decay_slope(&s, 0).unwrap().slope - 2.0).abs() < 1e-14);
        let s = OscillatorySeries::from_pairs(&[(0.5, 0.0), (0.25, 0.0), (0.1, 0.0)]);
        let fit = fit_decay_slope(&s, 0).unwrap();
        assert!(fit.exact && fit.slope == f64::INFINITY);
        assert!(fit_decay_slope(&s, 2).is_err());
    }

    #[test]
    fn eps_list_must_decrease() {
        let c = SurfaceChart::circle(1.0).unwrap();
        let f = PeriodicField::plane_wave(vec![1, 0]).unwrap();
        assert!(weyl_defect_series(&c, &f, &one, &[0.1, 0.2]).is_err());
    }
}
