//! Versioned sweep reports, slope fits and rule verdicts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentKind, Rule, TheorySource};
use crate::error::{HomolabError, Result};
use crate::oscillatory::{fit_pairs, SlopeFit};

pub const REPORT_SCHEMA: &str = "homolab.report/1";

/// One sweep point: an `ε` (or a cell grid size) with its metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub eps: Option<f64>,
    pub grid: Option<usize>,
    /// Target mesh size, recorded so rates can be attributed.
    pub h: Option<f64>,
    pub eps_over_h: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
}

impl ReportRow {
    pub fn at_eps(eps: f64, h: Option<f64>) -> Self {
        Self { eps: Some(eps), grid: None, h, eps_over_h: h.map(|h| eps / h), metrics: BTreeMap::new() }
    }

    pub fn at_grid(n: usize) -> Self {
        Self { eps: None, grid: Some(n), h: None, eps_over_h: None, metrics: BTreeMap::new() }
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    /// Abscissa of slope fits: `ε`, or `1/N` for grid sweeps.
    pub fn scale(&self) -> Option<f64> {
        self.eps.or(self.grid.map(|n| 1.0 / n as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryTarget {
    pub exponent: f64,
    pub tolerance: f64,
    pub source: TheorySource,
}

/// Log-log fit of one metric; `slope` is absent when the metric vanishes
/// identically (`exact`) or the fit failed (`error`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub metric: String,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub max_residual: Option<f64>,
    pub exact: bool,
    pub drop_first: usize,
    pub used: usize,
    pub error: Option<String>,
    pub theory_target: Option<TheoryTarget>,
}

impl FitReport {
    pub fn compute(rows: &[ReportRow], metric: &str, drop_first: usize) -> Self {
        let pts: Vec<(f64, f64)> = rows.iter().skip(drop_first).filter_map(|r| Some((r.scale()?, r.metrics.get(metric)?.abs()))).collect();
        let base = Self {
            metric: metric.to_string(),
            slope: None,
            intercept: None,
            max_residual: None,
            exact: false,
            drop_first,
            used: pts.len(),
            error: None,
            theory_target: None,
        };
        match fit_pairs(&pts, drop_first) {
            Ok(SlopeFit { exact: true, .. }) => Self { exact: true, ..base },
            Ok(fit) => Self { slope: Some(fit.slope), intercept: Some(fit.intercept), max_residual: Some(fit.max_residual), ..base },
            Err(e) => Self { error: Some(e.to_string()), ..base },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryVerdict {
    pub passed: bool,
    pub slope: Option<f64>,
    pub threshold: f64,
    pub exact: bool,
}

/// One-sided comparison: the estimates are upper bounds, so decay at
/// least as fast as `target − tolerance` passes, and identically vanishing
/// data pass any target.
pub fn compare_to_theory(fit: &FitReport, target: f64, tolerance: f64) -> Result<TheoryVerdict> {
    let threshold = target - tolerance;
    if fit.exact {
        return Ok(TheoryVerdict { passed: true, slope: None, threshold, exact: true });
    }
    let slope = fit.slope.ok_or_else(|| {
        HomolabError::InsufficientData(format!("no fitted slope for '{}': {}", fit.metric, fit.error.as_deref().unwrap_or("not fitted")))
    })?;
    Ok(TheoryVerdict { passed: slope >= threshold, slope: Some(slope), threshold, exact: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleVerdict {
    pub rule: Rule,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub schema: String,
    pub kind: ExperimentKind,
    pub name: Option<String>,
    pub seed: u64,
    pub drop_first: usize,
    pub rows: Vec<ReportRow>,
    pub summary: BTreeMap<String, f64>,
    pub flags: Vec<String>,
    pub fits: Vec<FitReport>,
    pub rules: Vec<RuleVerdict>,
    pub passed: bool,
}

/// Preferred CSV column order per kind; other metrics follow sorted.
fn preferred_columns(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::Cell => &["a_hat_11", "a_hat_12", "a_hat_21", "a_hat_22", "reference_gap", "cell_residual", "mean_chi"],
        ExperimentKind::Weyl => &["value_re", "value_im", "defect", "est_quad_err"],
        ExperimentKind::MEps => &["m_eps", "abs_m_eps"],
        ExperimentKind::NeumannAux => &["linf", "grad_l1", "l2", "h1_semi", "boundary_mean", "compatibility", "m_eps"],
        ExperimentKind::RobinRate => &["l2", "h1", "w_l2", "w_h1", "m_eps"],
        ExperimentKind::Duality => &["lhs", "rhs", "gap", "rel_gap"],
    }
}

impl RateReport {
    pub fn new(kind: ExperimentKind, name: Option<String>, seed: u64, drop_first: usize) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            kind,
            name,
            seed,
            drop_first,
            rows: Vec::new(),
            summary: BTreeMap::new(),
            flags: Vec::new(),
            fits: Vec::new(),
            rules: Vec::new(),
            passed: true,
        }
    }

    pub fn fit(&self, metric: &str) -> Option<&FitReport> {
        self.fits.iter().find(|f| f.metric == metric)
    }

    /// Verdict for `metric` against a target exponent.
    pub fn compare_to_theory(&self, metric: &str, target: f64, tolerance: f64) -> Result<TheoryVerdict> {
        let fit = self.fit(metric).ok_or_else(|| HomolabError::InsufficientData(format!("no fit recorded for '{metric}'")))?;
        compare_to_theory(fit, target, tolerance)
    }

    pub fn column(&self, metric: &str) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.metrics.get(metric).copied()).collect()
    }

    /// Row metric, or the summary value when no row carries it.
    fn values(&self, metric: &str) -> Vec<f64> {
        let col: Vec<f64> = self.column(metric).into_iter().flatten().collect();
        if col.is_empty() {
            self.summary.get(metric).copied().into_iter().collect()
        } else {
            col
        }
    }

    pub fn evaluate_rules(&mut self, rules: &[Rule]) {
        let verdicts: Vec<RuleVerdict> = rules.iter().map(|r| self.evaluate(r)).collect();
        self.passed = verdicts.iter().all(|v| v.passed);
        self.rules = verdicts;
    }

    fn evaluate(&self, rule: &Rule) -> RuleVerdict {
        let (passed, detail) = match rule {
            Rule::Slope { metric, target, tolerance, upper, .. } => match self.compare_to_theory(metric, *target, *tolerance) {
                Ok(v) if v.exact => (true, format!("{metric} vanishes identically")),
                Ok(v) => {
                    let s = v.slope.expect("inexact verdicts carry a slope");
                    let below_cap = upper.is_none_or(|u| s <= target + u);
                    (v.passed && below_cap, format!("slope {s:.4} vs threshold {:.4}", v.threshold))
                }
                Err(e) => (false, e.to_string()),
            },
            Rule::Bound { metric, min, max, abs } => {
                let vals = self.values(metric);
                if vals.is_empty() {
                    (false, format!("metric '{metric}' absent"))
                } else {
                    let vals: Vec<f64> = vals.iter().map(|v| if *abs { v.abs() } else { *v }).collect();
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let ok = vals.iter().all(|v| v.is_finite()) && min.is_none_or(|m| lo >= m) && max.is_none_or(|m| hi <= m);
                    let limit = |b: &Option<f64>| b.map_or("-".to_string(), |x| format!("{x:e}"));
                    (ok, format!("{metric} spans [{lo:.6e}, {hi:.6e}], allowed [{}, {}]", limit(min), limit(max)))
                }
            }
            Rule::Oracle { metric, value, tolerance } => match self.values(metric).last() {
                Some(&v) => ((v - value).abs() <= *tolerance, format!("{metric} = {v:.12e}, |diff| = {:.3e}", (v - value).abs())),
                None => (false, format!("metric '{metric}' absent")),
            },
            Rule::Monotone { metric, strict } => {
                let col = self.column(metric);
                if col.iter().any(Option::is_none) || col.len() < 2 {
                    (false, format!("metric '{metric}' missing in some rows"))
                } else {
                    let v: Vec<f64> = col.into_iter().flatten().collect();
                    let bad = v.windows(2).position(|w| if *strict { w[1] >= w[0] } else { w[1] > w[0] });
                    match bad {
                        None => (true, format!("{metric} decreases over {} rows", v.len())),
                        Some(i) => (false, format!("{metric} rises from {:.6e} to {:.6e} at row {}", v[i], v[i + 1], i + 1)),
                    }
                }
            }
            Rule::Dominated { metric, bound_by } => {
                let (a, b) = (self.column(metric), self.column(bound_by));
                if a.is_empty() || a.iter().chain(&b).any(Option::is_none) {
                    (false, format!("metrics '{metric}' or '{bound_by}' missing"))
                } else {
                    let bad = a.iter().zip(&b).position(|(x, y)| x.unwrap() > y.unwrap());
                    match bad {
                        None => (true, format!("{metric} ≤ {bound_by} in every row")),
                        Some(i) => (false, format!("{metric} = {:.6e} > {bound_by} = {:.6e} at row {i}", a[i].unwrap(), b[i].unwrap())),
                    }
                }
            }
        };
        RuleVerdict { rule: rule.clone(), passed, detail }
    }

    pub fn csv_columns(&self) -> Vec<String> {
        let mut present: Vec<String> = Vec::new();
        for r in &self.rows {
            for k in r.metrics.keys() {
                if !present.contains(k) {
                    present.push(k.clone());
                }
            }
        }
        let mut cols: Vec<String> =
            preferred_columns(self.kind).iter().filter(|c| present.iter().any(|p| p == *c)).map(|c| c.to_string()).collect();
        present.sort();
        for p in present {
            if !cols.contains(&p) {
                cols.push(p);
            }
        }
        cols
    }

    /// Fixed leading columns `eps, grid, h, eps_over_h`, then the metrics;
    /// absent values are empty cells.
    pub fn to_csv(&self) -> Result<String> {
        let cols = self.csv_columns();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["eps".to_string(), "grid".into(), "h".into(), "eps_over_h".into()];
        header.extend(cols.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![opt(r.eps), r.grid.map(|n| n.to_string()).unwrap_or_default(), opt(r.h), opt(r.eps_over_h)];
            rec.extend(cols.iter().map(|c| opt(r.metrics.get(c).copied())));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| HomolabError::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> HomolabError {
    HomolabError::Config(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep(values: &[(f64, f64)]) -> RateReport {
        let mut r = RateReport::new(ExperimentKind::Weyl, None, 0, 0);
        for &(e, v) in values {
            let mut row = ReportRow::at_eps(e, None);
            row.set("defect", v);
            r.rows.push(row);
        }
        r.fits.push(FitReport::compute(&r.rows, "defect", 0));
        r
    }

    fn fit_with_slope(slope: f64) -> FitReport {
        FitReport {
            metric: "m".into(),
            slope: Some(slope),
            intercept: Some(0.0),
            max_residual: Some(0.0),
            exact: false,
            drop_first: 2,
            used: 3,
            error: None,
            theory_target: None,
        }
    }

    #[test]
    fn theory_comparison_is_one_sided() {
        assert!(compare_to_theory(&fit_with_slope(0.93), 0.95, 0.1).unwrap().passed);
        assert!(!compare_to_theory(&fit_with_slope(0.3), 0.5, 0.1).unwrap().passed);
        assert!(compare_to_theory(&fit_with_slope(3.0), 0.5, 0.1).unwrap().passed);
        let exact = FitReport { slope: None, exact: true, ..fit_with_slope(0.0) };
        assert!(compare_to_theory(&exact, 10.0, 0.0).unwrap().passed);
        let missing = FitReport { slope: None, error: Some("x".into()), ..fit_with_slope(0.0) };
        assert!(compare_to_theory(&missing, 0.5, 0.1).is_err());
    }

    #[test]
    fn rules_read_rows() {
        let mut r = sweep(&[(0.5, 1.0), (0.25, 0.5), (0.125, 0.3)]);
        r.evaluate_rules(&[
            Rule::Monotone { metric: "defect".into(), strict: true },
            Rule::Bound { metric: "defect".into(), min: Some(0.9), max: None, abs: false },
            Rule::Slope { metric: "defect".into(), target: 0.8, tolerance: 0.0, upper: None, source: TheorySource::Oracle },
        ]);
        assert!(r.rules[0].passed);
        assert!(!r.rules[1].passed);
        assert!(r.rules[2].passed, "{}", r.rules[2].detail);
        assert!(!r.passed);
    }

    #[test]
    fn csv_has_fixed_leading_columns() {
        let r = sweep(&[(0.5, 1.0), (0.25, 0.5)]);
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with("eps,grid,h,eps_over_h,defect\n"), "{csv}");
        assert_eq!(csv.lines().count(), 3);
    }
}
