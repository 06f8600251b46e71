//! Experiment configuration files (TOML).
//!
//! ```toml
//! kind = "neumann_aux"
//! eps = "2^-3..2^-7"
//! surface = { type = "circle", r = 1.0 }
//!
//! [fields]
//! f = { kind = "scalar", d = 2, modes = [{ k = [1, 0], re = 0.5 }, { k = [-1, 0], re = 0.5 }] }
//!
//! [mesh]
//! eps_per_h = 8
//!
//! [[rules]]
//! type = "slope"
//! metric = "linf"
//! target = 0.5
//! tolerance = 0.1
//! ```
//!
//! Surfaces and fields are inline specs or paths relative to the config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HomolabError, Result};
use crate::fields::io::{load_field, parse_spec, FieldSpec};
use crate::fields::PeriodicField;
use crate::geometry::{load_surface, SurfaceChart, SurfaceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Cell,
    Weyl,
    MEps,
    NeumannAux,
    RobinRate,
    Duality,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::Cell => "cell",
            ExperimentKind::Weyl => "weyl",
            ExperimentKind::MEps => "m_eps",
            ExperimentKind::NeumannAux => "neumann_aux",
            ExperimentKind::RobinRate => "robin_rate",
            ExperimentKind::Duality => "duality",
        }
    }

    /// Metrics fitted when the config names none.
    pub fn default_fits(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Cell => &[],
            ExperimentKind::Weyl => &["defect"],
            ExperimentKind::MEps => &["abs_m_eps"],
            ExperimentKind::NeumannAux => &["linf", "grad_l1"],
            ExperimentKind::RobinRate => &["l2", "h1", "w_h1"],
            ExperimentKind::Duality => &[],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SurfaceSource {
    File(PathBuf),
    Inline(SurfaceSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSource {
    File(PathBuf),
    Inline(FieldSpec),
}

impl FieldSource {
    pub fn load(&self, base: &Path) -> Result<PeriodicField> {
        match self {
            FieldSource::File(p) => load_field(&resolve(base, p)),
            FieldSource::Inline(spec) => spec.build(base),
        }
    }

    /// Loads the field tabulated for cell grid `n` (see [`FieldSpec::at_grid`]).
    pub fn load_at_grid(&self, base: &Path, n: usize) -> Result<PeriodicField> {
        match self {
            FieldSource::File(p) => {
                let path = resolve(base, p);
                let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
                parse_spec(&path)?.at_grid(n).build(&dir)
            }
            FieldSource::Inline(spec) => spec.at_grid(n).build(base),
        }
    }
}

/// Monomial `c·x₁^p₁·x₂^p₂` in one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub c: f64,
    #[serde(default)]
    pub p: [u32; 2],
    #[serde(default)]
    pub component: usize,
}

/// Polynomial macroscopic data (`g`, `F`, test functions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Polynomial {
    #[serde(default = "one")]
    pub components: usize,
    pub terms: Vec<Monomial>,
}

fn one() -> usize {
    1
}

fn powi(x: f64, p: u32) -> f64 {
    x.powi(p as i32)
}

impl Polynomial {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(HomolabError::Config("polynomial needs at least one component".into()));
        }
        if let Some(t) = self.terms.iter().find(|t| t.component >= self.components) {
            return Err(HomolabError::Config(format!("term component {} exceeds {}", t.component, self.components)));
        }
        if self.terms.iter().any(|t| !t.c.is_finite()) {
            return Err(HomolabError::Config("non-finite polynomial coefficient".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64; 2], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.terms {
            out[t.component] += t.c * powi(x[0], t.p[0]) * powi(x[1], t.p[1]);
        }
    }

    /// Gradient of component `component`.
    pub fn gradient(&self, component: usize, x: &[f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for t in self.terms.iter().filter(|t| t.component == component) {
            if t.p[0] > 0 {
                g[0] += t.c * t.p[0] as f64 * powi(x[0], t.p[0] - 1) * powi(x[1], t.p[1]);
            }
            if t.p[1] > 0 {
                g[1] += t.c * t.p[1] as f64 * powi(x[0], t.p[0]) * powi(x[1], t.p[1] - 1);
            }
        }
        g
    }
}

/// `ε` values: an explicit list, `"2^-a..2^-b"` (dyadic) or `"1/a..1/b"`
/// (every integer denominator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsSpec {
    List(Vec<f64>),
    Range(String),
}

impl EpsSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            EpsSpec::List(v) => v.clone(),
            EpsSpec::Range(s) => parse_eps_range(s)?,
        };
        check_eps(&v)?;
        Ok(v)
    }
}

pub fn parse_eps_range(s: &str) -> Result<Vec<f64>> {
    let bad = || HomolabError::Config(format!("cannot parse ε range '{s}'; use 2^-a..2^-b or 1/a..1/b"));
    let (lo, hi) = s.split_once("..").ok_or_else(bad)?;
    let (lo, hi) = (lo.trim(), hi.trim());
    let int = |t: &str| t.trim().parse::<i64>().map_err(|_| bad());
    if let (Some(a), Some(b)) = (lo.strip_prefix("2^"), hi.strip_prefix("2^")) {
        let (a, b) = (int(a)?, int(b)?);
        if a.abs() > 60 || b.abs() > 60 {
            return Err(bad());
        }
        let step = if b >= a { 1 } else { -1 };
        let mut out = Vec::new();
        let mut k = a;
        loop {
            out.push(2f64.powi(k as i32));
            if k == b {
                break;
            }
            k += step;
        }
        return Ok(out);
    }
    if let (Some(a), Some(b)) = (lo.strip_prefix("1/"), hi.strip_prefix("1/")) {
        let (a, b) = (int(a)?, int(b)?);
        if a <= 0 || b <= 0 || (a - b).abs() > 1_000_000 {
            return Err(bad());
        }
        let step = if b >= a { 1 } else { -1 };
        let mut out = Vec::new();
        let mut n = a;
        loop {
            out.push(1.0 / n as f64);
            if n == b {
                break;
            }
            n += step;
        }
        return Ok(out);
    }
    Err(bad())
}

pub fn check_eps(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(HomolabError::Config("empty ε list".into()));
    }
    if v.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(HomolabError::Config("ε values must be positive and finite".into()));
    }
    if v.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HomolabError::Config("ε list must be strictly decreasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    /// Fixed mesh size shared by every `ε`.
    #[serde(default)]
    pub h: Option<f64>,
    /// Per-`ε` meshes with `h = ε / eps_per_h`.
    #[serde(default)]
    pub eps_per_h: Option<f64>,
    /// Vertex budget; the mesher refuses larger meshes.
    #[serde(default)]
    pub budget: Option<usize>,
}

impl MeshSpec {
    /// Mesh size used at `eps`.
    pub fn h_at(&self, eps: f64) -> Result<f64> {
        match (self.h, self.eps_per_h) {
            (Some(h), None) if h > 0.0 && h.is_finite() => Ok(h),
            (None, Some(r)) if r > 0.0 && r.is_finite() => Ok(eps / r),
            (None, None) => Err(HomolabError::Config("mesh needs h or eps_per_h".into())),
            (Some(_), Some(_)) => Err(HomolabError::Config("mesh takes h or eps_per_h, not both".into())),
            _ => Err(HomolabError::Config("mesh sizes must be positive".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    /// Torus grid sizes; several sizes give one report row each.
    #[serde(default = "default_grids")]
    pub grids: Vec<usize>,
    #[serde(default)]
    pub discretization: Option<crate::cell::CellDiscretization>,
    /// Reference `Â` (row-major `d×d` for scalar systems, full tensor
    /// layout otherwise) measured by the `reference_gap` metric.
    #[serde(default)]
    pub reference: Option<Vec<f64>>,
}

fn default_grids() -> Vec<usize> {
    vec![64]
}

impl Default for CellSpec {
    fn default() -> Self {
        Self { grids: default_grids(), discretization: None, reference: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheorySource {
    /// Exponent of an asymptotic estimate without a numerical oracle.
    Asymptotic,
    /// Two-dimensional analogue checked against an independent oracle.
    Oracle,
}

/// Acceptance rules; pass/fail is computed from these tolerances only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rule {
    /// Fitted decay slope `≥ target − tolerance`, and `≤ target + upper`
    /// when `upper` is given.
    Slope {
        metric: String,
        target: f64,
        tolerance: f64,
        #[serde(default)]
        upper: Option<f64>,
        #[serde(default = "oracle")]
        source: TheorySource,
    },
    /// Every row satisfies `min ≤ metric ≤ max` (on `|metric|` when `abs`).
    Bound {
        metric: String,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
        #[serde(default)]
        abs: bool,
    },
    /// A summary value matches `value` within `tolerance`.
    Oracle { metric: String, value: f64, tolerance: f64 },
    /// The metric decreases along the rows.
    Monotone {
        metric: String,
        #[serde(default = "yes")]
        strict: bool,
    },
    /// `metric ≤ bound_by` in every row.
    Dominated { metric: String, bound_by: String },
}

fn oracle() -> TheorySource {
    TheorySource::Oracle
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsSpec {
    #[serde(default, rename = "A")]
    pub a: Option<FieldSource>,
    #[serde(default)]
    pub b: Option<FieldSource>,
    #[serde(default)]
    pub f: Option<FieldSource>,
    #[serde(default, rename = "F")]
    pub volume: Option<Polynomial>,
    #[serde(default)]
    pub g: Option<Polynomial>,
    /// Test function of the duality check.
    #[serde(default)]
    pub phi: Option<Polynomial>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub json: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Directory for nodal dumps of the computed fields.
    #[serde(default)]
    pub dumps: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub surface: Option<SurfaceSource>,
    #[serde(default)]
    pub fields: FieldsSpec,
    #[serde(default)]
    pub eps: Option<EpsSpec>,
    #[serde(default = "default_drop_first")]
    pub drop_first: usize,
    #[serde(default)]
    pub mesh: MeshSpec,
    #[serde(default)]
    pub cell: CellSpec,
    /// Metrics to fit; defaults depend on the kind.
    #[serde(default)]
    pub fit: Option<Vec<String>>,
    #[serde(default)]
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub seed: u64,
    /// Concurrent `ε`-points.
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_drop_first() -> usize {
    2
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::error::read_text(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    /// Minimal config for `kind` with everything else defaulted.
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            name: None,
            surface: None,
            fields: FieldsSpec::default(),
            eps: None,
            drop_first: default_drop_first(),
            mesh: MeshSpec::default(),
            cell: CellSpec::default(),
            fit: None,
            rules: Vec::new(),
            seed: 0,
            workers: 1,
            output: OutputSpec::default(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn eps_values(&self) -> Result<Vec<f64>> {
        self.eps.as_ref().ok_or_else(|| HomolabError::Config(format!("{} needs an eps list", self.kind.label())))?.values()
    }

    pub fn surface(&self) -> Result<SurfaceChart> {
        match &self.surface {
            Some(SurfaceSource::File(p)) => load_surface(&resolve(&self.base_dir, p)),
            Some(SurfaceSource::Inline(spec)) => spec.build(),
            None => Err(HomolabError::Config(format!("{} needs a surface", self.kind.label()))),
        }
    }

    pub fn field(&self, name: &str) -> Result<PeriodicField> {
        self.field_source(name)?.load(&self.base_dir)
    }

    /// Field `name` tabulated for cell grid `n`.
    pub fn field_at_grid(&self, name: &str, n: usize) -> Result<PeriodicField> {
        self.field_source(name)?.load_at_grid(&self.base_dir, n)
    }

    fn field_source(&self, name: &str) -> Result<&FieldSource> {
        let src = match name {
            "A" => &self.fields.a,
            "b" => &self.fields.b,
            "f" => &self.fields.f,
            other => return Err(HomolabError::Config(format!("unknown periodic field '{other}'"))),
        };
        src.as_ref().ok_or_else(|| HomolabError::Config(format!("{} needs field {name}", self.kind.label())))
    }

    pub fn polynomial(&self, name: &str) -> Result<Option<&Polynomial>> {
        let p = match name {
            "F" => self.fields.volume.as_ref(),
            "g" => self.fields.g.as_ref(),
            "phi" => self.fields.phi.as_ref(),
            other => return Err(HomolabError::Config(format!("unknown polynomial '{other}'"))),
        };
        if let Some(p) = p {
            p.validate()?;
        }
        Ok(p)
    }

    pub fn fit_metrics(&self) -> Vec<String> {
        match &self.fit {
            Some(v) => v.clone(),
            None => self.kind.default_fits().iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Static checks that need no numerics.
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(HomolabError::Config("workers must be at least 1".into()));
        }
        for r in &self.rules {
            if let Rule::Slope { tolerance, .. } | Rule::Oracle { tolerance, .. } = r {
                if !(*tolerance >= 0.0) {
                    return Err(HomolabError::Config("rule tolerances must be nonnegative".into()));
                }
            }
        }
        match self.kind {
            ExperimentKind::Cell => {
                if self.cell.grids.is_empty() || self.cell.grids.iter().any(|&n| n < 2) {
                    return Err(HomolabError::Config("cell grids must be at least 2".into()));
                }
                if self.cell.grids.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(HomolabError::Config("cell grids must be strictly increasing".into()));
                }
            }
            ExperimentKind::RobinRate => {
                let eps = self.eps_values()?;
                let eps_min = eps[eps.len() - 1];
                for &e in &eps {
                    let h = self.mesh.h_at(e)?;
                    // a shared mesh must resolve the smallest ε
                    let limit = if self.mesh.h.is_some() { eps_min / 8.0 } else { e / 8.0 };
                    if h > limit * (1.0 + 1e-12) {
                        return Err(HomolabError::Config(format!("robin_rate needs h ≤ {limit:e} at ε = {e:e}, got h = {h:e}")));
                    }
                }
            }
            _ => {
                self.eps_values()?;
            }
        }
        Ok(())
    }
}

pub(crate) fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_ranges_parse() {
        assert_eq!(parse_eps_range("2^-3..2^-5").unwrap(), vec![0.125, 0.0625, 0.03125]);
        assert_eq!(parse_eps_range("1/8..1/10").unwrap(), vec![0.125, 1.0 / 9.0, 0.1]);
        assert!(parse_eps_range("0.1..0.2").is_err());
        assert!(EpsSpec::Range("2^-5..2^-3".into()).values().is_err());
        assert!(EpsSpec::List(vec![0.1, 0.1]).values().is_err());
    }

    #[test]
    fn polynomial_value_and_gradient() {
        let p = Polynomial {
            components: 1,
            terms: vec![Monomial { c: 2.0, p: [1, 2], component: 0 }, Monomial { c: 1.0, p: [0, 0], component: 0 }],
        };
        let mut v = [0.0];
        p.eval(&[3.0, 2.0], &mut v);
        assert_eq!(v[0], 25.0);
        assert_eq!(p.gradient(0, &[3.0, 2.0]), [8.0, 24.0]);
    }

    #[test]
    fn config_parses_inline_specs() {
        let text = r#"
kind = "robin_rate"
eps = "2^-2..2^-5"
surface = { type = "circle", r = 1.0 }
[fields]
A = { kind = "tensor4", m = 1, d = 2, isotropic = true, modes = [{ k = [0, 0], re = 2.0 }] }
b = "b.json"
g = { terms = [{ c = 1.0 }, { c = 1.0, p = [1, 0] }] }
[mesh]
h = 0.00390625
[[rules]]
type = "slope"
metric = "l2"
target = 0.5
tolerance = 0.0
"#;
        let cfg = ExperimentConfig::from_toml(text, Path::new("/tmp")).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::RobinRate);
        assert_eq!(cfg.drop_first, 2);
        assert!(matches!(cfg.fields.b, Some(FieldSource::File(_))));
        cfg.validate().unwrap();
        let coarse = text.replace("h = 0.00390625", "h = 0.01");
        let cfg = ExperimentConfig::from_toml(&coarse, Path::new("/tmp")).unwrap();
        assert!(matches!(cfg.validate(), Err(HomolabError::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("kind = \"weyl\"\nepsilon = [0.1]\n", Path::new(".")).is_err());
    }
}
