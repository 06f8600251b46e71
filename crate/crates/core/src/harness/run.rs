//! Sweep drivers for each experiment kind.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{resolve, ExperimentConfig, ExperimentKind, Polynomial, Rule};
use super::report::{FitReport, RateReport, ReportRow, TheoryTarget};
use crate::cell::{cell_residual, homogenize, solve_correctors_with, CellOptions, CorrectorSet, HomogenizedTensor};
use crate::error::{HomolabError, Result};
use crate::fem::io::write_dump;
use crate::fem::mesh::{mesh_domain_with_budget, DEFAULT_VERTEX_BUDGET};
use crate::fem::{
    assemble_robin, duality_check, first_order_expansion, norm, solve_neumann_aux, solve_with, Coefficient, ExpansionOptions, FieldOnMesh,
    Norm, RobinProblem, SolveOptions, TestFunction, TriMesh,
};
use crate::fields::{FieldKind, PeriodicField};
use crate::geometry::{check_non_resonance, SurfaceChart};
use crate::oscillatory::{m_epsilon, weyl_defect_series};

/// Runs the configured sweep, fits slopes and evaluates the rules.
pub fn run(cfg: &ExperimentConfig) -> Result<RateReport> {
    cfg.validate()?;
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().map_err(|e| HomolabError::Config(format!("worker pool: {e}")))?;
    let mut report = RateReport::new(cfg.kind, cfg.name.clone(), cfg.seed, cfg.drop_first);
    pool.install(|| match cfg.kind {
        ExperimentKind::Cell => run_cell(cfg, &mut report),
        ExperimentKind::Weyl => run_weyl(cfg, &mut report),
        ExperimentKind::MEps => run_m_eps(cfg, &mut report),
        ExperimentKind::NeumannAux => run_neumann_aux(cfg, &mut report),
        ExperimentKind::RobinRate => run_robin_rate(cfg, &mut report),
        ExperimentKind::Duality => run_duality(cfg, &mut report),
    })?;
    fit_and_judge(cfg, &mut report);
    Ok(report)
}

fn fit_and_judge(cfg: &ExperimentConfig, report: &mut RateReport) {
    let mut metrics = cfg.fit_metrics();
    for r in &cfg.rules {
        if let Rule::Slope { metric, .. } = r {
            if !metrics.contains(metric) {
                metrics.push(metric.clone());
            }
        }
    }
    report.fits = metrics
        .iter()
        .map(|m| {
            let mut fit = FitReport::compute(&report.rows, m, cfg.drop_first);
            fit.theory_target = cfg.rules.iter().find_map(|r| match r {
                Rule::Slope { metric, target, tolerance, source, .. } if metric == m => {
                    Some(TheoryTarget { exponent: *target, tolerance: *tolerance, source: *source })
                }
                _ => None,
            });
            fit
        })
        .collect();
    report.evaluate_rules(&cfg.rules);
}

fn tensor_labels(h: &HomogenizedTensor) -> Vec<(String, f64)> {
    if h.m == 1 {
        let mut out = Vec::new();
        for i in 0..h.d {
            for j in 0..h.d {
                out.push((format!("a_hat_{}{}", i + 1, j + 1), h.entry(i, j, 0, 0)));
            }
        }
        out
    } else {
        h.a_hat.iter().enumerate().map(|(k, v)| (format!("a_hat_{k}"), *v)).collect()
    }
}

fn cell_options(cfg: &ExperimentConfig) -> CellOptions {
    CellOptions { discretization: cfg.cell.discretization, ..Default::default() }
}

fn run_cell(cfg: &ExperimentConfig, report: &mut RateReport) -> Result<()> {
    let a = cfg.field_at_grid("A", cfg.cell.grids[0])?;
    let ell = a.check_ellipticity(4096, cfg.seed)?;
    report.summary.insert("sampled_mu_lower".into(), ell.mu_lower);
    report.summary.insert("sampled_mu_upper".into(), ell.mu_upper);
    let opts = cell_options(cfg);
    for &n in &cfg.cell.grids {
        let stage = |e: HomolabError| e.at(1.0 / n as f64, "cell");
        let a = cfg.field_at_grid("A", n)?;
        let chi = solve_correctors_with(&a, n, &opts).map_err(stage)?;
        let hom = homogenize(&a, &chi).map_err(stage)?;
        let mut row = ReportRow::at_grid(n);
        for (k, v) in tensor_labels(&hom) {
            row.set(&k, v);
        }
        row.set("cell_residual", cell_residual(&a, &chi).map_err(stage)?);
        row.set("mean_chi", chi.max_abs_mean());
        row.set("asymmetry", hom.asymmetry());
        let (lo, hi) = hom.ellipticity_bounds();
        row.set("mu_lower", lo);
        row.set("mu_upper", hi);
        row.set("iterations", chi.iterations().iter().copied().max().unwrap_or(0) as f64);
        if let Some(reference) = &cfg.cell.reference {
            let gap = reference_gap(&hom, reference)?;
            row.set("reference_gap", gap);
        }
        report.rows.push(row);
    }
    if let Some(last) = report.rows.last() {
        let tensor: Vec<(String, f64)> =
            last.metrics.iter().filter(|(k, _)| k.starts_with("a_hat_")).map(|(k, v)| (k.clone(), *v)).collect();
        report.summary.extend(tensor);
    }
    Ok(())
}

fn reference_gap(hom: &HomogenizedTensor, reference: &[f64]) -> Result<f64> {
    let full: Vec<f64> = if reference.len() == hom.a_hat.len() {
        reference.to_vec()
    } else if hom.m == 1 && reference.len() == 1 {
        (0..hom.d * hom.d).map(|k| if k % (hom.d + 1) == 0 { reference[0] } else { 0.0 }).collect()
    } else {
        return Err(HomolabError::Config(format!("reference has {} entries, Â has {}", reference.len(), hom.a_hat.len())));
    };
    Ok(hom.a_hat.iter().zip(&full).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

type Weight = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

fn surface_weight(p: Option<&Polynomial>) -> Result<Weight> {
    match p {
        None => Ok(Box::new(|_: &[f64]| 1.0)),
        Some(p) if p.components == 1 => {
            let p = p.clone();
            Ok(Box::new(move |x: &[f64]| {
                let mut v = [0.0];
                p.eval(&[x[0], x[1]], &mut v);
                v[0]
            }))
        }
        Some(_) => Err(HomolabError::Config("surface weight must be scalar".into())),
    }
}

fn record_non_resonance(surface: &SurfaceChart, report: &mut RateReport) {
    match check_non_resonance(surface) {
        Ok(v) => {
            report.summary.insert("non_resonant".into(), if v.satisfies { 1.0 } else { 0.0 });
            report.summary.insert("rational_measure".into(), v.rational_measure);
        }
        Err(_) => report.flags.push("non_resonance_undecided".into()),
    }
}

/// Defects at or above this level mean the surface averages do not
/// converge.
pub const NO_CONVERGENCE_DEFECT: f64 = 0.9;

fn run_weyl(cfg: &ExperimentConfig, report: &mut RateReport) -> Result<()> {
    let surface = cfg.surface()?;
    let f = cfg.field("f")?;
    let eps = cfg.eps_values()?;
    let phi = surface_weight(cfg.polynomial("phi")?)?;
    let series = weyl_defect_series(&surface, &f, &*phi, &eps)?;
    for e in &series.entries {
        let mut row = ReportRow::at_eps(e.eps, None);
        row.set("value_re", e.value_re);
        row.set("value_im", e.value_im);
        row.set("defect", e.defect);
        row.set("est_quad_err", e.est_quad_err);
        report.rows.push(row);
    }
    report.summary.insert("surface_measure".into(), surface.measure());
    record_non_resonance(&surface, report);
    if series.entries.iter().all(|e| e.defect >= NO_CONVERGENCE_DEFECT) {
        report.flags.push("no_convergence".into());
    }
    Ok(())
}

fn run_m_eps(cfg: &ExperimentConfig, report: &mut RateReport) -> Result<()> {
    let surface = cfg.surface()?;
    let b = cfg.field("b")?;
    let eps = cfg.eps_values()?;
    let values: Vec<Result<Vec<f64>>> = eps.par_iter().map(|&e| m_epsilon(&surface, &b, e).map_err(|err| err.at(e, "m_eps"))).collect();
    for (&e, v) in eps.iter().zip(values) {
        let v = v?;
        let mut row = ReportRow::at_eps(e, None);
        if v.len() == 1 {
            row.set("m_eps", v[0]);
        } else {
            for (k, x) in v.iter().enumerate() {
                row.set(&format!("m_eps_{k}"), *x);
            }
        }
        row.set("abs_m_eps", v.iter().map(|x| x.abs()).fold(0.0, f64::max));
        report.rows.push(row);
    }
    record_non_resonance(&surface, report);
    Ok(())
}

fn mesh_for(cfg: &ExperimentConfig, surface: &SurfaceChart, eps: f64) -> Result<Arc<TriMesh>> {
    let h = cfg.mesh.h_at(eps)?;
    let budget = cfg.mesh.budget.unwrap_or(DEFAULT_VERTEX_BUDGET);
    Ok(Arc::new(mesh_domain_with_budget(surface, h, budget).map_err(|e| e.at(eps, "mesh"))?))
}

/// Meshes per `ε`, sharing one mesh when the size is fixed.
fn meshes(cfg: &ExperimentConfig, surface: &SurfaceChart, eps: &[f64]) -> Result<Vec<Arc<TriMesh>>> {
    if cfg.mesh.h.is_some() {
        let shared = mesh_for(cfg, surface, eps[eps.len() - 1])?;
        Ok(eps.iter().map(|_| Arc::clone(&shared)).collect())
    } else {
        eps.iter().map(|&e| mesh_for(cfg, surface, e)).collect()
    }
}

/// Constant effective tensor for the auxiliary problems: the mean of a
/// constant `A`, the homogenized tensor of an oscillating one, or `I`.
fn effective_constant(cfg: &ExperimentConfig, m: usize, report: &mut RateReport) -> Result<Vec<f64>> {
    let Some(_) = &cfg.fields.a else {
        report.summary.insert("a_hat_identity".into(), 1.0);
        return Ok(if m == 1 { vec![1.0] } else { PeriodicField::constant(FieldKind::Scalar, 2, &[1.0])?.isotropic_tensor(m)?.mean() });
    };
    let n = *cfg.cell.grids.last().expect("validated grids");
    let a = cfg.field_at_grid("A", n)?;
    if a.max_wavenumber() == 0.0 {
        return Ok(a.mean());
    }
    let chi = solve_correctors_with(&a, n, &cell_options(cfg)).map_err(|e| e.at(0.0, "cell"))?;
    let hom = homogenize(&a, &chi)?;
    for (k, v) in tensor_labels(&hom) {
        report.summary.insert(k, v);
    }
    Ok(hom.a_hat)
}

fn dump(cfg: &ExperimentConfig, field: &FieldOnMesh, name: &str, eps: f64, norms: BTreeMap<String, f64>) -> Result<()> {
    if let Some(dir) = &cfg.output.dumps {
        let dir = resolve(&cfg.base_dir, dir);
        std::fs::create_dir_all(&dir)?;
        write_dump(field, &dir.join(format!("{name}_eps{eps:e}")), name, Some(eps), norms)?;
    }
    Ok(())
}

fn on_workers<T: Send>(eps: &[f64], meshes: &[Arc<TriMesh>], job: impl Fn(f64, &Arc<TriMesh>) -> Result<T> + Sync) -> Result<Vec<T>> {
    eps.par_iter().zip(meshes.par_iter()).map(|(&e, m)| job(e, m)).collect::<Vec<_>>().into_iter().collect()
}

fn run_neumann_aux(cfg: &ExperimentConfig, report: &mut RateReport) -> Result<()> {
    let surface = cfg.surface()?;
    let f = cfg.field("f")?;
    let eps = cfg.eps_values()?;
    let a_hat = effective_constant(cfg, f.components(), report)?;
    let meshes = meshes(cfg, &surface, &eps)?;
    let rows = on_workers(&eps, &meshes, |e, mesh| {
        let aux = solve_neumann_aux(mesh, &a_hat, &f, e).map_err(|err| err.at(e, "neumann_aux"))?;
        let mut row = ReportRow::at_eps(e, Some(cfg.mesh.h_at(e)?));
        let v = &aux.v;
        let norm_at = |which| norm(v, which).map_err(|err| err.at(e, "norms"));
        row.set("linf", norm_at(Norm::Linf)?);
        row.set("grad_l1", norm_at(Norm::GradLp(1.0))?);
        row.set("l2", norm_at(Norm::L2)?);
        row.set("h1_semi", norm_at(Norm::H1Semi)?);
        row.set("boundary_mean", aux.boundary_mean.iter().map(|x| x.abs()).fold(0.0, f64::max));
        row.set("compatibility", aux.compatibility.iter().copied().fold(0.0, f64::max));
        row.set("m_eps", aux.m_eps[0]);
        row.set("iterations", aux.solve.iterations as f64);
        row.set("rel_residual", aux.solve.rel_residual);
        row.set("n_vertices", mesh.n_vertices() as f64);
        row.set("h_max", mesh.h);
        dump(cfg, v, "v", e, row.metrics.clone())?;
        Ok(row)
    })?;
    report.rows.extend(rows);
    Ok(())
}

fn test_function(p: Option<&Polynomial>) -> Result<TestFunction> {
    match p {
        None => Ok(TestFunction::affine([1.0, 0.0], 0.0)),
        Some(p) if p.components == 1 => {
            let (pv, pg) = (p.clone(), p.clone());
            Ok(TestFunction::new(
                move |x| {
                    let mut v = [0.0];
                    pv.eval(&[x[0], x[1]], &mut v);
                    v[0]
                },
                move |x| pg.gradient(0, x),
            ))
        }
        Some(_) => Err(HomolabError::Config("test function must be scalar".into())),
    }
}

fn run_duality(cfg: &ExperimentConfig, report: &mut RateReport) -> Result<()> {
    let surface = cfg.surface()?;
    let f = cfg.field("f")?;
    let eps = cfg.eps_values()?;
    let a_hat = effective_constant(cfg, 1, report)?;
    let phi = test_function(cfg.polynomial("phi")?)?;
    let meshes = meshes(cfg, &surface, &eps)?;
    let rows = on_workers(&eps, &meshes, |e, mesh| {
        let d = duality_check(mesh, &a_hat, &f, &phi, e).map_err(|err| err.at(e, "duality"))?;
        let mut row = ReportRow::at_eps(e, Some(cfg.mesh.h_at(e)?));
        row.set("lhs", d.lhs);
        row.set("rhs", d.rhs);
        row.set("gap", d.gap);
        row.set("rel_gap", d.gap / (d.lhs.abs() + 1.0));
        row.set("volume_term", d.volume_term);
        row.set("boundary_term", d.boundary_term);
        row.set("lhs_quad_err", d.lhs_quadrature_error);
        row.set("compatibility", d.compatibility);
        row.set("iterations", d.solve.iterations as f64);
        Ok(row)
    })?;
    report.rows.extend(rows);
    Ok(())
}

fn polynomial_coefficient(p: &Polynomial, m: usize, name: &str) -> Result<Coefficient> {
    if p.components != m {
        return Err(HomolabError::Config(format!("{name} has {} components, the system has {m}", p.components)));
    }
    let p = p.clone();
    Ok(Coefficient::function(m, move |x, out| p.eval(x, out)))
}

fn system_size(a: &PeriodicField) -> Result<usize> {
    match a.kind() {
        FieldKind::Scalar => Ok(1),
        FieldKind::Tensor4(m) => Ok(m),
        FieldKind::Matrix(_) => Ok(1),
        FieldKind::Vector(_) => Err(HomolabError::NonSquareKind(format!("{:?}", a.kind()))),
    }
}

/// Homogenized data of the Robin problem.
pub struct Homogenized {
    pub tensor: HomogenizedTensor,
    pub correctors: CorrectorSet,
    pub cell_residual: f64,
}

pub fn homogenized_data(a: &PeriodicField, b: &PeriodicField, n: usize, opts: &CellOptions) -> Result<Homogenized> {
    let correctors = solve_correctors_with(a, n, opts)?;
    let tensor = homogenize(a, &correctors)?.with_boundary_mean(b)?;
    let cell_residual = cell_residual(a, &correctors)?;
    Ok(Homogenized { tensor, correctors, cell_residual })
}

/// Problem with coefficients `A(x/ε)` and `b(x/ε)`, or the homogenized one
/// when `eps` is `None`.
pub fn robin_problem(
    a: &PeriodicField,
    b: &PeriodicField,
    hom: &HomogenizedTensor,
    g: Option<Coefficient>,
    volume: Option<Coefficient>,
    eps: Option<f64>,
) -> RobinProblem {
    let (ac, bc) = match eps {
        Some(e) => (Coefficient::oscillating(a.clone(), e), Coefficient::oscillating(b.clone(), e)),
        None => {
            (Coefficient::Constant(hom.a_hat.clone()), Coefficient::Constant(hom.b_bar.clone().expect("b̄ attached by homogenized_data")))
        }
    };
    RobinProblem { m: hom.m, a: ac, b: bc, f: volume, g }
}

fn run_robin_rate(cfg: &ExperimentConfig, report: &mut RateReport) -> Result<()> {
    let surface = cfg.surface()?;
    let n = *cfg.cell.grids.last().expect("validated grids");
    let a = cfg.field_at_grid("A", n)?;
    let b = cfg.field("b")?;
    let eps = cfg.eps_values()?;
    let m = system_size(&a)?;
    let ell = a.check_ellipticity(4096, cfg.seed)?;
    report.summary.insert("sampled_mu_lower".into(), ell.mu_lower);
    let hom = homogenized_data(&a, &b, n, &cell_options(cfg)).map_err(|e| e.at(eps[0], "cell"))?;
    for (k, v) in tensor_labels(&hom.tensor) {
        report.summary.insert(k, v);
    }
    for (k, v) in hom.tensor.b_bar.iter().flatten().enumerate() {
        report.summary.insert(format!("b_bar_{k}"), *v);
    }
    report.summary.insert("cell_residual".into(), hom.cell_residual);
    report.summary.insert("cell_grid".into(), n as f64);
    let g = cfg.polynomial("g")?.map(|p| polynomial_coefficient(p, m, "g")).transpose()?;
    let volume = cfg.polynomial("F")?.map(|p| polynomial_coefficient(p, m, "F")).transpose()?;
    let meshes = meshes(cfg, &surface, &eps)?;
    let solve_opts = SolveOptions::default();
    let limit_solve = |mesh: &Arc<TriMesh>, e: f64| -> Result<FieldOnMesh> {
        let p = robin_problem(&a, &b, &hom.tensor, g.clone(), volume.clone(), None);
        let sys = assemble_robin(mesh, &p).map_err(|err| err.at(e, "assemble_u0"))?;
        Ok(solve_with(&sys, &solve_opts).map_err(|err| err.at(e, "solve_u0"))?.0)
    };
    let shared_u0 = match cfg.mesh.h {
        Some(_) => Some(limit_solve(&meshes[0], eps[eps.len() - 1])?),
        None => None,
    };
    let rows = on_workers(&eps, &meshes, |e, mesh| {
        let u0 = match &shared_u0 {
            Some(u) => u.clone(),
            None => limit_solve(mesh, e)?,
        };
        let p = robin_problem(&a, &b, &hom.tensor, g.clone(), volume.clone(), Some(e));
        let sys = assemble_robin(mesh, &p).map_err(|err| err.at(e, "assemble"))?;
        let (ue, rep) = solve_with(&sys, &solve_opts).map_err(|err| err.at(e, "solve"))?;
        let diff = ue.minus(&u0)?;
        let w = first_order_expansion(&ue, &u0, &hom.correctors, e, &ExpansionOptions::default()).map_err(|err| err.at(e, "expansion"))?;
        let mut row = ReportRow::at_eps(e, Some(cfg.mesh.h_at(e)?));
        let norm_at = |u: &FieldOnMesh, which| norm(u, which).map_err(|err| err.at(e, "norms"));
        row.set("l2", norm_at(&diff, Norm::L2)?);
        row.set("h1", norm_at(&diff, Norm::H1)?);
        row.set("l2_boundary", norm_at(&diff, Norm::L2Boundary)?);
        row.set("w_l2", norm_at(&w, Norm::L2)?);
        row.set("w_h1", norm_at(&w, Norm::H1)?);
        let me = m_epsilon(&surface, &b, e).map_err(|err| err.at(e, "m_eps"))?;
        row.set("m_eps", me.iter().map(|x| x.abs()).fold(0.0, f64::max));
        row.set("iterations", rep.iterations as f64);
        row.set("rel_residual", rep.rel_residual);
        row.set("n_vertices", mesh.n_vertices() as f64);
        row.set("h_max", mesh.h);
        dump(cfg, &ue, "u_eps", e, row.metrics.clone())?;
        dump(cfg, &w, "w_eps", e, row.metrics.clone())?;
        Ok(row)
    })?;
    if let Some(u0) = &shared_u0 {
        dump(cfg, u0, "u0", eps[eps.len() - 1], BTreeMap::new())?;
    }
    report.rows.extend(rows);
    Ok(())
}
