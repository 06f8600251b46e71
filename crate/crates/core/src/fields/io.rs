//! Field specification files.
//!
//! JSON or TOML, e.g.
//!
//! ```json
//! {"kind": "scalar", "d": 2, "modes": [{"k": [0, 0], "re": 2.0}, {"k": [1, 0], "re": 0.0, "im": -0.5}]}
//! {"kind": "tensor4", "m": 1, "d": 2, "isotropic": true, "modes": [...]}
//! {"kind": "scalar", "d": 2, "grid": {"N": 256, "samples": "a.bin"}}
//! {"kind": "scalar", "d": 2, "checkerboard": {"N": 512, "low": 1.0, "high": 4.0}}
//! ```
//!
//! Binary grid files hold `N^d · components` little-endian `f64`, grid
//! points in row-major order with components innermost.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{FieldKind, FourierMode, PeriodicField};
use crate::error::{HomolabError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Scalar(f64),
    Components(Vec<f64>),
}

impl Default for Amplitude {
    fn default() -> Self {
        Amplitude::Scalar(0.0)
    }
}

impl Amplitude {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            Amplitude::Scalar(v) => vec![*v],
            Amplitude::Components(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSpec {
    pub k: Vec<i64>,
    #[serde(default)]
    pub re: Amplitude,
    #[serde(default)]
    pub im: Amplitude,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "N")]
    pub n: usize,
    pub samples: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckerboardSpec {
    #[serde(rename = "N")]
    pub n: usize,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSpec {
    pub kind: String,
    #[serde(default)]
    pub m: Option<usize>,
    pub d: usize,
    /// Scalar modes/samples lifted to `a(y)·I` of the declared kind.
    #[serde(default)]
    pub isotropic: bool,
    #[serde(default)]
    pub complex: bool,
    #[serde(default)]
    pub modes: Option<Vec<ModeSpec>>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub checkerboard: Option<CheckerboardSpec>,
}

impl FieldSpec {
    fn declared_kind(&self) -> Result<FieldKind> {
        let m = self.m.unwrap_or(1);
        match self.kind.as_str() {
            "scalar" => Ok(FieldKind::Scalar),
            "vector" => Ok(FieldKind::Vector(m)),
            "matrix" => Ok(FieldKind::Matrix(m)),
            "tensor4" => Ok(FieldKind::Tensor4(m)),
            other => Err(HomolabError::Config(format!("unknown field kind '{other}'"))),
        }
    }

    /// Checkerboards are geometric; this retabulates one at grid `n`.
    /// Other sources are fixed data and come back unchanged.
    pub fn at_grid(&self, n: usize) -> FieldSpec {
        let mut out = self.clone();
        if let Some(cb) = out.checkerboard.as_mut() {
            cb.n = n;
        }
        out
    }

    /// Builds the field; relative sample paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<PeriodicField> {
        let kind = self.declared_kind()?;
        let raw_kind = if self.isotropic { FieldKind::Scalar } else { kind };
        let sources = [self.modes.is_some(), self.grid.is_some(), self.checkerboard.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(HomolabError::Config("field spec needs exactly one of modes, grid, checkerboard".into()));
        }
        let raw = if let Some(modes) = &self.modes {
            let mut out = Vec::with_capacity(modes.len());
            for spec in modes {
                let re = spec.re.to_vec();
                let im = match &spec.im {
                    Amplitude::Scalar(v) if *v == 0.0 => vec![0.0; re.len()],
                    other => other.to_vec(),
                };
                if re.len() != im.len() {
                    return Err(HomolabError::Config(format!("mode {:?}: re and im lengths differ", spec.k)));
                }
                out.push(FourierMode { k: spec.k.clone(), amp: re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect() });
            }
            PeriodicField::from_modes(raw_kind, self.d, out, !self.complex)?
        } else if let Some(grid) = &self.grid {
            let path = if grid.samples.is_absolute() { grid.samples.clone() } else { base_dir.join(&grid.samples) };
            let samples = read_grid_binary(&path)?;
            PeriodicField::from_grid(raw_kind, self.d, grid.n, samples)?
        } else {
            let cb = self.checkerboard.as_ref().expect("checked above");
            if raw_kind != FieldKind::Scalar {
                return Err(HomolabError::Config("checkerboard fields are scalar (use isotropic for tensors)".into()));
            }
            checkerboard(self.d, cb.n, cb.low, cb.high)?
        };
        if self.isotropic {
            match kind {
                FieldKind::Tensor4(m) => raw.isotropic_tensor(m),
                FieldKind::Matrix(m) => raw.times_identity(m),
                FieldKind::Scalar => Ok(raw),
                FieldKind::Vector(_) => Err(HomolabError::Config("isotropic vector fields are not defined".into())),
            }
        } else {
            Ok(raw)
        }
    }
}

/// Checkerboard with `low` on cells whose half-index parity is even; grid
/// samples are taken at cell centres so the jump lines fall between
/// samples.
pub fn checkerboard(dim: usize, n: usize, low: f64, high: f64) -> Result<PeriodicField> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(HomolabError::InvalidField("checkerboard grid size must be even".into()));
    }
    let half = 0.5 / n as f64;
    PeriodicField::tabulate(FieldKind::Scalar, dim, n, |y| {
        let parity: usize = y.iter().map(|&c| usize::from(c + half >= 0.5)).sum();
        vec![if parity.is_multiple_of(2) { low } else { high }]
    })
}

pub fn read_grid_binary(path: &Path) -> Result<Vec<f64>> {
    let bytes = crate::error::read_file(path)?;
    if bytes.len() % 8 != 0 {
        return Err(HomolabError::InvalidField(format!("{}: length is not a multiple of 8", path.display())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

pub fn write_grid_binary(path: &Path, samples: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = samples.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes)?;
    Ok(())
}

pub(crate) fn parse_spec(path: &Path) -> Result<FieldSpec> {
    let text = crate::error::read_text(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => Ok(toml::from_str(&text)?),
        _ => Ok(serde_json::from_str(&text)?),
    }
}

/// Loads a field specification file (`.json` or `.toml`).
pub fn load_field(path: &Path) -> Result<PeriodicField> {
    let spec = parse_spec(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    spec.build(base)
}
