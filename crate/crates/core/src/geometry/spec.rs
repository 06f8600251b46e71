//! Surface specification files (JSON or TOML).
//!
//! ```json
//! {"type": "circle", "r": 1.0}
//! {"type": "ellipse", "a": 2.0, "b": 1.0}
//! {"type": "superellipse", "a": 1.0, "b": 1.0, "p": 4.0}
//! {"type": "polygon", "vertices": [[[0, 1], [0, 1]], [[1, 1], [0, 1]], [0.5, "1/2"]]}
//! {"type": "polygon", "sqrt": 2, "vertices": [[{"p": [0, 1], "q": [1, 1]}, 1], ...]}
//! {"type": "sphere", "r": 1.0}
//! {"type": "ellipsoid", "a": 1.0, "b": 2.0, "c": 3.0}
//! ```
//!
//! Polygon coordinates are integers (exact), floats, `[numerator, denominator]`
//! pairs, `"n/d"` strings, or `{"p": [n, d], "q": [n, d]}` for
//! `p + q√sqrt`. When every coordinate is exact, edge normals are decided
//! in exact arithmetic.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::exact::{QuadSurd, Q};
use super::SurfaceChart;
use crate::error::{HomolabError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Coordinate {
    Int(i64),
    Float(f64),
    Pair([i64; 2]),
    Text(String),
    Surd { p: [i64; 2], q: [i64; 2] },
}

impl Coordinate {
    fn exact(&self, s: Option<i64>) -> Result<Option<QuadSurd>> {
        let ratio = |v: [i64; 2]| -> Result<Q> {
            if v[1] == 0 {
                return Err(HomolabError::Config("zero denominator in polygon vertex".into()));
            }
            Ok(Q::new(v[0] as i128, v[1] as i128))
        };
        match self {
            Coordinate::Int(v) => Ok(Some(QuadSurd::rational(Q::from_integer(*v as i128)))),
            Coordinate::Float(_) => Ok(None),
            Coordinate::Pair(v) => Ok(Some(QuadSurd::rational(ratio(*v)?))),
            Coordinate::Text(t) => {
                let (n, d) = t.split_once('/').unwrap_or((t.as_str(), "1"));
                let parse = |x: &str| x.trim().parse::<i64>().map_err(|_| HomolabError::Config(format!("bad rational coordinate '{t}'")));
                Ok(Some(QuadSurd::rational(ratio([parse(n)?, parse(d)?])?)))
            }
            Coordinate::Surd { p, q } => {
                let s = s.ok_or_else(|| HomolabError::Config("surd coordinate without a top-level 'sqrt'".into()))?;
                Ok(Some(QuadSurd::new(ratio(*p)?, ratio(*q)?, s as i128)?))
            }
        }
    }

    fn float(&self, s: Option<i64>) -> Result<f64> {
        match self {
            Coordinate::Float(v) => Ok(*v),
            other => Ok(other.exact(s)?.expect("non-float coordinates are exact").to_f64()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SurfaceSpec {
    Circle {
        r: f64,
        #[serde(default)]
        center: Option<[f64; 2]>,
    },
    Ellipse {
        a: f64,
        b: f64,
        #[serde(default)]
        center: Option<[f64; 2]>,
    },
    Superellipse {
        a: f64,
        b: f64,
        p: f64,
    },
    Polygon {
        vertices: Vec<[Coordinate; 2]>,
        #[serde(default)]
        sqrt: Option<i64>,
    },
    Sphere {
        r: f64,
    },
    Ellipsoid {
        a: f64,
        b: f64,
        c: f64,
    },
}

impl SurfaceSpec {
    pub fn build(&self) -> Result<SurfaceChart> {
        let shifted = |chart: SurfaceChart, c: &Option<[f64; 2]>| match c {
            Some(c) => chart.translated(c),
            None => Ok(chart),
        };
        match self {
            SurfaceSpec::Circle { r, center } => shifted(SurfaceChart::circle(*r)?, center),
            SurfaceSpec::Ellipse { a, b, center } => shifted(SurfaceChart::ellipse(*a, *b)?, center),
            SurfaceSpec::Superellipse { a, b, p } => SurfaceChart::superellipse(*a, *b, *p),
            SurfaceSpec::Sphere { r } => SurfaceChart::sphere(*r),
            SurfaceSpec::Ellipsoid { a, b, c } => SurfaceChart::ellipsoid(*a, *b, *c),
            SurfaceSpec::Polygon { vertices, sqrt } => {
                let mut exact = Vec::with_capacity(vertices.len());
                for v in vertices {
                    match (v[0].exact(*sqrt)?, v[1].exact(*sqrt)?) {
                        (Some(x), Some(y)) => exact.push([x, y]),
                        _ => {
                            exact.clear();
                            break;
                        }
                    }
                }
                if exact.len() == vertices.len() {
                    SurfaceChart::polygon_exact(&exact)
                } else {
                    let fl: Result<Vec<[f64; 2]>> = vertices.iter().map(|v| Ok([v[0].float(*sqrt)?, v[1].float(*sqrt)?])).collect();
                    SurfaceChart::polygon(&fl?)
                }
            }
        }
    }
}

pub fn load_surface(path: &Path) -> Result<SurfaceChart> {
    let text = crate::error::read_text(path)?;
    let spec: SurfaceSpec = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text)?,
        _ => serde_json::from_str(&text)?,
    };
    spec.build()
}

#[cfg(test)]
mod tests {
    use super::super::{check_non_resonance, Piece};
    use super::*;

    #[test]
    fn rational_polygon_is_exact() {
        let spec: SurfaceSpec =
            serde_json::from_str(r#"{"type": "polygon", "vertices": [[[0, 1], "0"], [[1, 1], "0"], [[1, 1], "1/1"], [0, [1, 1]]]}"#)
                .unwrap();
        let chart = spec.build().unwrap();
        assert!(chart.pieces().iter().all(|p| matches!(p, Piece::Segment { exact: Some(_), .. })));
        assert_eq!(check_non_resonance(&chart).unwrap().rational_measure, 4.0);
    }

    #[test]
    fn float_polygon_has_no_exact_metadata() {
        let spec: SurfaceSpec = serde_json::from_str(r#"{"type": "polygon", "vertices": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]}"#).unwrap();
        let chart = spec.build().unwrap();
        assert!(matches!(chart.pieces()[0], Piece::Segment { exact: None, .. }));
    }

    #[test]
    fn surd_polygon_from_json() {
        let spec: SurfaceSpec = serde_json::from_str(
            r#"{"type": "polygon", "sqrt": 2, "vertices": [
                [[0, 1], [0, 1]],
                [[1, 1], {"p": [0, 1], "q": [1, 1]}],
                [{"p": [1, 1], "q": [-1, 1]}, {"p": [1, 1], "q": [1, 1]}],
                [{"p": [0, 1], "q": [-1, 1]}, [1, 1]]]}"#,
        )
        .unwrap();
        let v = check_non_resonance(&spec.build().unwrap()).unwrap();
        assert!(v.satisfies);
    }

    #[test]
    fn toml_circle_with_center() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        std::fs::write(&path, "type = \"circle\"\nr = 2.0\ncenter = [1.0, 0.0]\n").unwrap();
        let c = load_surface(&path).unwrap();
        assert!((c.enclosed_measure() - 4.0 * std::f64::consts::PI).abs() < 1e-10);
        assert!(c.contains([2.5, 0.0]));
    }
}
