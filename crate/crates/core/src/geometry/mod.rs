//! Closed curves (d = 2) and surfaces (d = 3) as unions of parametrized
//! pieces, with quadrature, normals, curvature and closest-point queries.
//!
//! Curves run counterclockwise so that the outward normal is the tangent
//! rotated clockwise, `n = (t₂, −t₁)/|t|`.

mod exact;
mod resonance;
mod spec;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

pub use exact::{ExactDirection, QuadSurd};
pub use resonance::{check_non_resonance, check_non_resonance_with, Lattice, NonResonanceVerdict, OffendingPiece};
pub use spec::{load_surface, SurfaceSpec};

use crate::error::{HomolabError, Result};
use crate::quadrature::GaussLegendre;

/// Gauss points per panel in every composite rule below.
pub const NODES_PER_PANEL: usize = 16;

/// Parametrization `t ↦ [γ(t), γ'(t), γ''(t)]` of a user-supplied curve.
pub type CurveFn = dyn Fn(f64) -> [[f64; 2]; 3] + Send + Sync;

#[derive(Clone)]
pub enum Piece {
    /// Straight segment `a + t(b − a)`, `t ∈ [0, 1]`. `exact` holds the
    /// outward normal direction in exact arithmetic when known.
    Segment { a: [f64; 2], b: [f64; 2], exact: Option<ExactDirection> },
    /// `c + R(θ)(a cos t, b sin t)` for `t ∈ [t0, t1]`.
    EllipseArc { center: [f64; 2], a: f64, b: f64, rotation: f64, t0: f64, t1: f64 },
    /// One eighth of `|x/a|^p + |y/b|^p = 1`, as the graph
    /// `M·(A(1 − u^p)^{1/p}, B u)`, `u ∈ [0, 2^{-1/p}]`, `M` a signed
    /// permutation. `reversed` runs `u` downwards.
    SuperArc { big: f64, small: f64, p: f64, m: [[f64; 2]; 2], reversed: bool },
    /// Arbitrary smooth curve; non-resonance cannot be decided for it.
    Custom { name: String, f: Arc<CurveFn>, t0: f64, t1: f64 },
    /// `c + (a sinθ cosφ, b sinθ sinφ, c cosθ)`, `(θ, φ) ∈ [0, π] × [0, 2π]`.
    Ellipsoid { center: [f64; 3], axes: [f64; 3] },
}

impl fmt::Debug for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Piece::Segment { a, b, exact } => f.debug_struct("Segment").field("a", a).field("b", b).field("exact", exact).finish(),
            Piece::EllipseArc { center, a, b, rotation, t0, t1 } => f
                .debug_struct("EllipseArc")
                .field("center", center)
                .field("a", a)
                .field("b", b)
                .field("rotation", rotation)
                .field("t", &(t0, t1))
                .finish(),
            Piece::SuperArc { big, small, p, m, reversed } => f
                .debug_struct("SuperArc")
                .field("A", big)
                .field("B", small)
                .field("p", p)
                .field("m", m)
                .field("reversed", reversed)
                .finish(),
            Piece::Custom { name, t0, t1, .. } => f.debug_struct("Custom").field("name", name).field("t", &(t0, t1)).finish(),
            Piece::Ellipsoid { center, axes } => f.debug_struct("Ellipsoid").field("center", center).field("axes", axes).finish(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceClass {
    Flat,
    StrictlyCurved,
    Unclassified,
}

/// Quadrature node on the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceNode {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub weight: f64,
    pub piece: usize,
    pub param: [f64; 2],
}

/// Point of a curve piece with its first two derivatives.
#[derive(Debug, Clone, Copy)]
pub struct CurveJet {
    pub x: [f64; 2],
    pub d1: [f64; 2],
    pub d2: [f64; 2],
}

/// Closest boundary point to a query point (curves only).
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    pub piece: usize,
    pub t: f64,
    pub point: [f64; 2],
    pub distance: f64,
    /// Positive outside, negative inside.
    pub signed_distance: f64,
}

#[derive(Debug, Clone)]
pub struct SurfaceChart {
    dim: usize,
    name: String,
    pieces: Vec<Piece>,
}

fn rot(theta: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn matvec(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Piece {
    pub fn is_curve(&self) -> bool {
        !matches!(self, Piece::Ellipsoid { .. })
    }

    pub fn class(&self) -> PieceClass {
        match self {
            Piece::Segment { .. } => PieceClass::Flat,
            Piece::EllipseArc { .. } | Piece::SuperArc { .. } | Piece::Ellipsoid { .. } => PieceClass::StrictlyCurved,
            Piece::Custom { .. } => PieceClass::Unclassified,
        }
    }

    /// Parameter interval of a curve piece.
    pub fn interval(&self) -> (f64, f64) {
        match self {
            Piece::Segment { .. } => (0.0, 1.0),
            Piece::EllipseArc { t0, t1, .. } | Piece::Custom { t0, t1, .. } => (*t0, *t1),
            Piece::SuperArc { p, .. } => (0.0, 0.5f64.powf(1.0 / p)),
            Piece::Ellipsoid { .. } => (0.0, PI),
        }
    }

    /// Point and derivatives of a curve piece. Panics on surface patches.
    pub fn jet(&self, t: f64) -> CurveJet {
        match self {
            Piece::Segment { a, b, .. } => {
                let d = [b[0] - a[0], b[1] - a[1]];
                CurveJet { x: [a[0] + t * d[0], a[1] + t * d[1]], d1: d, d2: [0.0, 0.0] }
            }
            Piece::EllipseArc { center, a, b, rotation, .. } => {
                let (s, c) = t.sin_cos();
                let x = rot(*rotation, [a * c, b * s]);
                CurveJet {
                    x: [center[0] + x[0], center[1] + x[1]],
                    d1: rot(*rotation, [-a * s, b * c]),
                    d2: rot(*rotation, [-a * c, -b * s]),
                }
            }
            Piece::SuperArc { big, small, p, m, reversed } => {
                let (lo, hi) = self.interval();
                let (u, sign) = if *reversed { (hi - (t - lo), -1.0) } else { (t, 1.0) };
                let u = u.clamp(0.0, hi);
                let rest = 1.0 - u.powf(*p);
                let x = [big * rest.powf(1.0 / p), small * u];
                let dx = -big * u.powf(p - 1.0) * rest.powf(1.0 / p - 1.0);
                let ddx =
                    if u == 0.0 && *p < 2.0 { f64::NEG_INFINITY } else { -big * (p - 1.0) * u.powf(p - 2.0) * rest.powf(1.0 / p - 2.0) };
                CurveJet { x: matvec(m, x), d1: matvec(m, [sign * dx, sign * small]), d2: matvec(m, [ddx, 0.0]) }
            }
            Piece::Custom { f, .. } => {
                let [x, d1, d2] = f(t);
                CurveJet { x, d1, d2 }
            }
            Piece::Ellipsoid { .. } => panic!("jet() is defined for curve pieces only"),
        }
    }

    /// Point, outward normal and area element of an ellipsoid patch.
    fn patch_frame(&self, theta: f64, phi: f64) -> ([f64; 3], [f64; 3], f64) {
        let Piece::Ellipsoid { center, axes } = self else { panic!("patch_frame() on a curve piece") };
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let [a, b, c] = *axes;
        let x = [center[0] + a * st * cp, center[1] + b * st * sp, center[2] + c * ct];
        let dt = [a * ct * cp, b * ct * sp, -c * st];
        let dp = [-a * st * sp, b * st * cp, 0.0];
        let nn = cross3(dt, dp);
        let area = dot3(nn, nn).sqrt();
        let n = if area > 0.0 { [nn[0] / area, nn[1] / area, nn[2] / area] } else { [0.0, 0.0, if ct > 0.0 { 1.0 } else { -1.0 }] };
        (x, n, area)
    }

    fn max_speed(&self) -> f64 {
        let (t0, t1) = self.interval();
        (0..=256).map(|i| norm2(self.jet(t0 + (t1 - t0) * i as f64 / 256.0).d1)).filter(|s| s.is_finite()).fold(0.0, f64::max)
    }

    fn translate(&mut self, v: [f64; 3]) {
        match self {
            Piece::Segment { a, b, .. } => {
                for p in [a, b] {
                    p[0] += v[0];
                    p[1] += v[1];
                }
            }
            Piece::EllipseArc { center, .. } => {
                center[0] += v[0];
                center[1] += v[1];
            }
            Piece::SuperArc { .. } | Piece::Custom { .. } => {
                let inner = self.clone();
                *self = Piece::Custom {
                    name: "translated".into(),
                    t0: inner.interval().0,
                    t1: inner.interval().1,
                    f: Arc::new(move |t| {
                        let j = inner.jet(t);
                        [[j.x[0] + v[0], j.x[1] + v[1]], j.d1, j.d2]
                    }),
                };
            }
            Piece::Ellipsoid { center, .. } => {
                for (c, s) in center.iter_mut().zip(v) {
                    *c += s;
                }
            }
        }
    }
}

impl SurfaceChart {
    /// Assembles a chart and checks closure and orientation.
    pub fn new(name: impl Into<String>, pieces: Vec<Piece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(HomolabError::InvalidSurface("surface has no pieces".into()));
        }
        let curves = pieces.iter().filter(|p| p.is_curve()).count();
        let dim = if curves == pieces.len() {
            2
        } else if curves == 0 {
            3
        } else {
            return Err(HomolabError::InvalidSurface("curve and surface pieces cannot be mixed".into()));
        };
        let chart = Self { dim, name: name.into(), pieces };
        chart.check_closed()?;
        Ok(chart)
    }

    pub fn circle(r: f64) -> Result<Self> {
        Self::ellipse(r, r)
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(HomolabError::InvalidSurface(format!("ellipse axes must be positive, got ({a}, {b})")));
        }
        let name = if a == b { format!("circle(r={a})") } else { format!("ellipse(a={a}, b={b})") };
        Self::new(name, vec![Piece::EllipseArc { center: [0.0, 0.0], a, b, rotation: 0.0, t0: 0.0, t1: 2.0 * PI }])
    }

    /// Polygon with floating vertices, reoriented counterclockwise.
    pub fn polygon(vertices: &[[f64; 2]]) -> Result<Self> {
        let exact: Vec<Option<[QuadSurd; 2]>> = vec![None; vertices.len()];
        Self::polygon_inner(vertices.to_vec(), exact)
    }

    /// Polygon whose vertices are exact elements of `Q(√s)`; edge normals
    /// carry exact direction metadata.
    pub fn polygon_exact(vertices: &[[QuadSurd; 2]]) -> Result<Self> {
        let fl: Vec<[f64; 2]> = vertices.iter().map(|v| [v[0].to_f64(), v[1].to_f64()]).collect();
        Self::polygon_inner(fl, vertices.iter().map(|v| Some(v.clone())).collect())
    }

    fn polygon_inner(mut v: Vec<[f64; 2]>, mut exact: Vec<Option<[QuadSurd; 2]>>) -> Result<Self> {
        let n = v.len();
        if n < 3 {
            return Err(HomolabError::InvalidSurface("polygon needs at least three vertices".into()));
        }
        let area2: f64 = (0..n).map(|i| v[i][0] * v[(i + 1) % n][1] - v[(i + 1) % n][0] * v[i][1]).sum();
        if area2 == 0.0 {
            return Err(HomolabError::InvalidSurface("polygon has zero area".into()));
        }
        if area2 < 0.0 {
            v.reverse();
            exact.reverse();
        }
        let mut pieces = Vec::with_capacity(n);
        for i in 0..n {
            let j = (i + 1) % n;
            if v[i] == v[j] {
                return Err(HomolabError::InvalidSurface(format!("polygon vertex {i} repeated")));
            }
            let dir = match (&exact[i], &exact[j]) {
                (Some(a), Some(b)) => {
                    let dx = b[0].sub(&a[0])?;
                    let dy = b[1].sub(&a[1])?;
                    Some(ExactDirection::from_components(&[dy, dx.neg()])?)
                }
                _ => None,
            };
            pieces.push(Piece::Segment { a: v[i], b: v[j], exact: dir });
        }
        Self::new(format!("polygon({n})"), pieces)
    }

    /// `|x/a|^p + |y/b|^p = 1`, `p > 1`, in eight graph pieces.
    pub fn superellipse(a: f64, b: f64, p: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && p > 1.0 && p.is_finite()) {
            return Err(HomolabError::InvalidSurface(format!("superellipse needs a, b > 0 and 1 < p < ∞, got ({a}, {b}, {p})")));
        }
        let rq = [[0.0, -1.0], [1.0, 0.0]];
        let swap = [[0.0, 1.0], [1.0, 0.0]];
        let mul = |x: [[f64; 2]; 2], y: [[f64; 2]; 2]| {
            let mut r = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    r[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
                }
            }
            r
        };
        let mut pieces = Vec::with_capacity(8);
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        for q in 0..4 {
            let (ax, ay) = if q % 2 == 0 { (a, b) } else { (b, a) };
            pieces.push(Piece::SuperArc { big: ax, small: ay, p, m, reversed: false });
            pieces.push(Piece::SuperArc { big: ay, small: ax, p, m: mul(m, swap), reversed: true });
            m = mul(rq, m);
        }
        Self::new(format!("superellipse(a={a}, b={b}, p={p})"), pieces)
    }

    pub fn sphere(r: f64) -> Result<Self> {
        Self::ellipsoid(r, r, r)
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(HomolabError::InvalidSurface("ellipsoid axes must be positive".into()));
        }
        let name = if a == b && b == c { format!("sphere(r={a})") } else { format!("ellipsoid({a}, {b}, {c})") };
        Self::new(name, vec![Piece::Ellipsoid { center: [0.0; 3], axes: [a, b, c] }])
    }

    /// Custom single-piece closed curve.
    pub fn custom(name: &str, t0: f64, t1: f64, f: Arc<CurveFn>) -> Result<Self> {
        Self::new(name, vec![Piece::Custom { name: name.into(), f, t0, t1 }])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn translated(&self, v: &[f64]) -> Result<Self> {
        if v.len() != self.dim {
            return Err(HomolabError::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        let mut shift = [0.0; 3];
        shift[..v.len()].copy_from_slice(v);
        let mut out = self.clone();
        for p in &mut out.pieces {
            p.translate(shift);
        }
        out.name = format!("{} translated", self.name);
        Ok(out)
    }

    /// Rotation of a curve about the origin. Exact normal metadata survives
    /// only quarter turns.
    pub fn rotated(&self, theta: f64) -> Result<Self> {
        if self.dim != 2 {
            return Err(HomolabError::InvalidSurface("rotation is implemented for curves".into()));
        }
        let quarter = (theta / (0.5 * PI)).round();
        let is_quarter = (theta - quarter * 0.5 * PI).abs() < 1e-15;
        let (s, c) = if is_quarter {
            match (quarter as i64).rem_euclid(4) {
                0 => (0.0, 1.0),
                1 => (1.0, 0.0),
                2 => (0.0, -1.0),
                _ => (-1.0, 0.0),
            }
        } else {
            theta.sin_cos()
        };
        let r = move |v: [f64; 2]| [c * v[0] - s * v[1], s * v[0] + c * v[1]];
        let pieces = self
            .pieces
            .iter()
            .map(|p| match p {
                Piece::Segment { a, b, exact } => Piece::Segment {
                    a: r(*a),
                    b: r(*b),
                    exact: if is_quarter { exact.as_ref().map(|e| e.quarter_turns(quarter as i64)) } else { None },
                },
                Piece::EllipseArc { center, a, b, rotation, t0, t1 } => {
                    Piece::EllipseArc { center: r(*center), a: *a, b: *b, rotation: rotation + theta, t0: *t0, t1: *t1 }
                }
                other => {
                    let inner = other.clone();
                    let (t0, t1) = inner.interval();
                    Piece::Custom {
                        name: "rotated".into(),
                        t0,
                        t1,
                        f: Arc::new(move |t| {
                            let j = inner.jet(t);
                            [r(j.x), r(j.d1), r(j.d2)]
                        }),
                    }
                }
            })
            .collect();
        let mut out = Self::new(format!("{} rotated", self.name), pieces)?;
        // rotated superellipse pieces keep their classification
        for (new, old) in out.pieces.iter_mut().zip(&self.pieces) {
            if let (Piece::Custom { name, .. }, Piece::SuperArc { .. }) = (&mut *new, old) {
                *name = "rotated superellipse".into();
            }
        }
        Ok(out)
    }

    /// Class of a piece, accounting for rotated builtin curves.
    pub fn piece_class(&self, i: usize) -> PieceClass {
        match &self.pieces[i] {
            Piece::Custom { name, .. } if name == "rotated superellipse" => PieceClass::StrictlyCurved,
            p => p.class(),
        }
    }

    fn check_closed(&self) -> Result<()> {
        if self.dim == 3 {
            return Ok(());
        }
        let n = self.pieces.len();
        for i in 0..n {
            let (_, t1) = self.pieces[i].interval();
            let j = (i + 1) % n;
            let (s0, _) = self.pieces[j].interval();
            let end = self.pieces[i].jet(t1).x;
            let start = self.pieces[j].jet(s0).x;
            let gap = norm2([end[0] - start[0], end[1] - start[1]]);
            let scale = norm2(end).max(1.0);
            if gap > 1e-12 * scale {
                return Err(HomolabError::NonClosedSurface { piece: i, gap });
            }
        }
        // orientation by the divergence theorem on x
        let flux: f64 = self.nodes(4.0).iter().map(|q| q.weight * (q.point[0] * q.normal[0] + q.point[1] * q.normal[1])).sum();
        if !(flux > 0.0) {
            return Err(HomolabError::InvalidSurface("curve is not counterclockwise".into()));
        }
        Ok(())
    }

    /// Outward unit normal of a curve piece.
    pub fn normal(&self, piece: usize, t: f64) -> [f64; 2] {
        let j = self.pieces[piece].jet(t);
        let s = norm2(j.d1);
        [j.d1[1] / s, -j.d1[0] / s]
    }

    pub fn point(&self, piece: usize, t: f64) -> [f64; 2] {
        self.pieces[piece].jet(t).x
    }

    /// Panel count of a piece for `nodes_per_unit` nodes per unit length.
    fn panels(&self, piece: usize, nodes_per_unit: f64) -> (usize, usize) {
        let p = &self.pieces[piece];
        match p {
            Piece::Ellipsoid { axes, .. } => {
                let rmax = axes.iter().cloned().fold(0.0, f64::max);
                let nt = ((PI * rmax * nodes_per_unit) / NODES_PER_PANEL as f64).ceil().max(2.0) as usize;
                (nt, 2 * nt)
            }
            _ => {
                let (t0, t1) = p.interval();
                let len = p.max_speed() * (t1 - t0);
                (((len * nodes_per_unit) / NODES_PER_PANEL as f64).ceil().max(1.0) as usize, 1)
            }
        }
    }

    /// Total number of nodes `for_each_node` visits at this density.
    pub fn node_count(&self, nodes_per_unit: f64) -> usize {
        (0..self.pieces.len())
            .map(|i| {
                let (a, b) = self.panels(i, nodes_per_unit);
                let per = if self.dim == 2 { NODES_PER_PANEL } else { NODES_PER_PANEL * NODES_PER_PANEL };
                a * b * per
            })
            .sum()
    }

    /// Streams the composite Gauss rule of one piece.
    pub fn for_each_piece_node(&self, piece: usize, nodes_per_unit: f64, mut visit: impl FnMut(&SurfaceNode)) {
        let rule = GaussLegendre::new(NODES_PER_PANEL);
        let (np, nq) = self.panels(piece, nodes_per_unit);
        let p = &self.pieces[piece];
        match p {
            Piece::Ellipsoid { .. } => {
                let ht = PI / np as f64;
                let hp = 2.0 * PI / nq as f64;
                for a in 0..np {
                    for (th, wt) in rule.on_interval(a as f64 * ht, (a + 1) as f64 * ht) {
                        for b in 0..nq {
                            for (ph, wp) in rule.on_interval(b as f64 * hp, (b + 1) as f64 * hp) {
                                let (x, n, area) = p.patch_frame(th, ph);
                                visit(&SurfaceNode { point: x, normal: n, weight: wt * wp * area, piece, param: [th, ph] });
                            }
                        }
                    }
                }
            }
            _ => {
                let (t0, t1) = p.interval();
                let h = (t1 - t0) / np as f64;
                for a in 0..np {
                    let lo = t0 + a as f64 * h;
                    let hi = if a + 1 == np { t1 } else { lo + h };
                    for (t, w) in rule.on_interval(lo, hi) {
                        let j = p.jet(t);
                        let s = norm2(j.d1);
                        visit(&SurfaceNode {
                            point: [j.x[0], j.x[1], 0.0],
                            normal: [j.d1[1] / s, -j.d1[0] / s, 0.0],
                            weight: w * s,
                            piece,
                            param: [t, 0.0],
                        });
                    }
                }
            }
        }
    }

    pub fn for_each_node(&self, nodes_per_unit: f64, mut visit: impl FnMut(&SurfaceNode)) {
        for i in 0..self.pieces.len() {
            self.for_each_piece_node(i, nodes_per_unit, &mut visit);
        }
    }

    fn nodes(&self, nodes_per_unit: f64) -> Vec<SurfaceNode> {
        let mut out = Vec::new();
        self.for_each_node(nodes_per_unit, |q| out.push(*q));
        out
    }

    /// Composite Gauss rule with about `nodes_per_unit` nodes per unit
    /// length: `(point, outward normal, weight)` per node.
    pub fn quadrature(&self, nodes_per_unit: f64) -> Result<Vec<SurfaceNode>> {
        if !(nodes_per_unit > 0.0) {
            return Err(HomolabError::InvalidSurface(format!("quadrature density must be positive, got {nodes_per_unit}")));
        }
        self.check_closed()?;
        Ok(self.nodes(nodes_per_unit))
    }

    /// Length of a curve piece (or area of a patch).
    pub fn piece_measure(&self, piece: usize) -> f64 {
        if let Piece::Segment { a, b, .. } = &self.pieces[piece] {
            return norm2([b[0] - a[0], b[1] - a[1]]);
        }
        let mut s = 0.0;
        self.for_each_piece_node(piece, 64.0, |q| s += q.weight);
        s
    }

    /// Total length (d = 2) or area (d = 3).
    pub fn measure(&self) -> f64 {
        (0..self.pieces.len()).map(|i| self.piece_measure(i)).sum()
    }

    /// Enclosed area (d = 2) or volume (d = 3) via `∮ x·n = d|Ω|`.
    pub fn enclosed_measure(&self) -> f64 {
        let mut s = 0.0;
        self.for_each_node(64.0, |q| s += q.weight * dot3(q.point, q.normal));
        s / self.dim as f64
    }

    /// Signed principal curvatures w.r.t. the outward normal (convex
    /// boundaries are positive). `param` is `[t]` for curves and
    /// `[θ, φ]` for patches.
    pub fn curvature_at(&self, piece: usize, param: &[f64]) -> Result<Vec<f64>> {
        let p = self.pieces.get(piece).ok_or_else(|| HomolabError::InvalidSurface(format!("no piece {piece}")))?;
        if self.piece_class(piece) == PieceClass::Flat {
            return Err(HomolabError::FlatPiece(piece));
        }
        match p {
            Piece::Ellipsoid { axes, .. } => {
                let [th, ph] = [param[0], param[1]];
                let [a, b, c] = *axes;
                let (st, ct) = th.sin_cos();
                let (sp, cp) = ph.sin_cos();
                let xt = [a * ct * cp, b * ct * sp, -c * st];
                let xp = [-a * st * sp, b * st * cp, 0.0];
                let xtt = [-a * st * cp, -b * st * sp, -c * ct];
                let xtp = [-a * ct * sp, b * ct * cp, 0.0];
                let xpp = [-a * st * cp, -b * st * sp, 0.0];
                let (_, n, _) = p.patch_frame(th, ph);
                let inward = [-n[0], -n[1], -n[2]];
                let (e, f, g) = (dot3(xt, xt), dot3(xt, xp), dot3(xp, xp));
                let (l, m, nn) = (dot3(xtt, inward), dot3(xtp, inward), dot3(xpp, inward));
                let det = e * g - f * f;
                if det <= 0.0 {
                    return Err(HomolabError::InvalidSurface("curvature undefined at a pole of the chart".into()));
                }
                // eigenvalues of I^{-1} II
                let mean = (e * nn - 2.0 * f * m + g * l) / (2.0 * det);
                let gauss = (l * nn - m * m) / det;
                let disc = (mean * mean - gauss).max(0.0).sqrt();
                Ok(vec![mean - disc, mean + disc])
            }
            _ => {
                let j = p.jet(param[0]);
                let s = norm2(j.d1);
                Ok(vec![(j.d1[0] * j.d2[1] - j.d1[1] * j.d2[0]) / (s * s * s)])
            }
        }
    }

    /// Closest point on a curve to `x`.
    pub fn project(&self, x: [f64; 2]) -> Projection {
        assert_eq!(self.dim, 2, "project() is defined for curves");
        if let [Piece::EllipseArc { center, a, b, .. }] = self.pieces.as_slice() {
            if a == b {
                let d = [x[0] - center[0], x[1] - center[1]];
                let r = norm2(d);
                let t = if r > 0.0 { d[1].atan2(d[0]).rem_euclid(2.0 * PI) } else { 0.0 };
                let t = self.circle_param(t);
                let point = self.pieces[0].jet(t).x;
                return Projection { piece: 0, t, point, distance: (r - a).abs(), signed_distance: r - a };
            }
        }
        let mut best = Projection { piece: 0, t: 0.0, point: [0.0; 2], distance: f64::INFINITY, signed_distance: 0.0 };
        for (i, p) in self.pieces.iter().enumerate() {
            let (t0, t1) = p.interval();
            let samples = 64;
            let h = (t1 - t0) / samples as f64;
            let dist2 = |t: f64| {
                let y = p.jet(t).x;
                (y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2)
            };
            let mut ib = 0;
            let mut db = f64::INFINITY;
            for k in 0..=samples {
                let d = dist2(t0 + k as f64 * h);
                if d < db {
                    db = d;
                    ib = k;
                }
            }
            // golden section on the bracketing cells
            let mut lo = (t0 + (ib as f64 - 1.0) * h).max(t0);
            let mut hi = (t0 + (ib as f64 + 1.0) * h).min(t1);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = hi - g * (hi - lo);
            let mut d = lo + g * (hi - lo);
            let (mut fc, mut fd) = (dist2(c), dist2(d));
            for _ in 0..80 {
                if fc < fd {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - g * (hi - lo);
                    fc = dist2(c);
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + g * (hi - lo);
                    fd = dist2(d);
                }
                if hi - lo < 1e-15 * (1.0 + hi.abs()) {
                    break;
                }
            }
            let mut t = 0.5 * (lo + hi);
            for cand in [t0, t1] {
                if dist2(cand) < dist2(t) {
                    t = cand;
                }
            }
            let dd = dist2(t).sqrt();
            if dd < best.distance {
                let y = p.jet(t).x;
                best = Projection { piece: i, t, point: y, distance: dd, signed_distance: 0.0 };
            }
        }
        best.signed_distance = if self.contains(x) { -best.distance } else { best.distance };
        best
    }

    fn circle_param(&self, angle: f64) -> f64 {
        match &self.pieces[0] {
            Piece::EllipseArc { rotation, t0, t1, .. } => {
                let t = (angle - rotation).rem_euclid(2.0 * PI);
                let t = if t < *t0 { t + 2.0 * PI } else { t };
                t.min(*t1)
            }
            _ => angle,
        }
    }

    /// Distance to the curve.
    pub fn distance(&self, x: [f64; 2]) -> f64 {
        self.project(x).distance
    }

    /// Winding-number inside test for curves.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        assert_eq!(self.dim, 2);
        if let [Piece::EllipseArc { center, a, b, rotation, .. }] = self.pieces.as_slice() {
            let d = rot(-rotation, [x[0] - center[0], x[1] - center[1]]);
            return (d[0] / a).powi(2) + (d[1] / b).powi(2) < 1.0;
        }
        // angle swept along a fine polyline
        let mut total = 0.0;
        for p in &self.pieces {
            let (t0, t1) = p.interval();
            let k = if matches!(p, Piece::Segment { .. }) { 1 } else { 256 };
            let mut prev = p.jet(t0).x;
            for i in 1..=k {
                let cur = p.jet(t0 + (t1 - t0) * i as f64 / k as f64).x;
                let a = [prev[0] - x[0], prev[1] - x[1]];
                let b = [cur[0] - x[0], cur[1] - x[1]];
                total += (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
                prev = cur;
            }
        }
        total > PI
    }

    /// Bounding box `[xmin, ymin, xmax, ymax]` of a curve.
    pub fn bounding_box(&self) -> [f64; 4] {
        let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in &self.pieces {
            let (t0, t1) = p.interval();
            for i in 0..=512 {
                let x = p.jet(t0 + (t1 - t0) * i as f64 / 512.0).x;
                bb[0] = bb[0].min(x[0]);
                bb[1] = bb[1].min(x[1]);
                bb[2] = bb[2].max(x[0]);
                bb[3] = bb[3].max(x[1]);
            }
        }
        bb
    }
}
