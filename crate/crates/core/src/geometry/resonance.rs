//! Non-resonance of a boundary with respect to a lattice `Γ ⊆ Z^d`: the
//! set of points whose normal lies in `RΓ` must have surface measure zero.
//!
//! Strictly curved pieces have a normal map whose preimage of any single
//! direction is a null set, so they never contribute. Flat pieces carry a
//! constant normal that is tested exactly when the piece knows it in
//! `Q(√s)`, and by continued-fraction reconstruction otherwise.

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::Serialize;

use super::{Piece, PieceClass, SurfaceChart};
use crate::error::{HomolabError, Result};

pub const DEFAULT_MAX_DENOMINATOR: u64 = 1_000_000_000;

/// Sublattice `Γ` spanned by linearly independent integer rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    basis: Vec<Vec<i64>>,
}

impl Lattice {
    pub fn integer(d: usize) -> Self {
        Self { basis: (0..d).map(|i| (0..d).map(|j| i64::from(i == j)).collect()).collect() }
    }

    pub fn new(basis: Vec<Vec<i64>>) -> Result<Self> {
        let d = basis.first().map(Vec::len).unwrap_or(0);
        if basis.is_empty() || d == 0 || basis.iter().any(|b| b.len() != d) {
            return Err(HomolabError::DegenerateLattice("basis rows must be non-empty and equally long".into()));
        }
        if rank(&basis) != basis.len() {
            return Err(HomolabError::DegenerateLattice(format!("{} basis vectors are linearly dependent", basis.len())));
        }
        Ok(Self { basis })
    }

    pub fn dim(&self) -> usize {
        self.basis[0].len()
    }

    pub fn basis(&self) -> &[Vec<i64>] {
        &self.basis
    }

    /// Whether the integer direction `k` lies in `RΓ`.
    pub fn spans(&self, k: &[i64]) -> bool {
        let mut rows = self.basis.clone();
        rows.push(k.to_vec());
        rank(&rows) == self.basis.len()
    }
}

fn rank(rows: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<Ratio<i128>>> = rows.iter().map(|r| r.iter().map(|&v| Ratio::from_integer(v as i128)).collect()).collect();
    let cols = m.first().map(Vec::len).unwrap_or(0);
    let mut r = 0;
    for c in 0..cols {
        let Some(piv) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, piv);
        let inv = Ratio::<i128>::one() / m[r][c];
        for i in 0..m.len() {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c] * inv;
                for j in c..cols {
                    let v = m[r][j];
                    m[i][j] -= f * v;
                }
            }
        }
        r += 1;
    }
    r
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OffendingPiece {
    pub piece: usize,
    pub normal: Vec<f64>,
    pub k: Vec<i64>,
    pub length: f64,
    /// Decided in exact arithmetic rather than by reconstruction.
    pub exact: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct NonResonanceVerdict {
    pub satisfies: bool,
    pub rational_measure: f64,
    pub offending_pieces: Vec<OffendingPiece>,
}

/// Best rational approximation `p/q` with `q ≤ max_den` by continued
/// fractions, accepted only if within `tol` of `x`.
pub(crate) fn reconstruct(x: f64, max_den: u64, tol: f64) -> Option<(i64, u64)> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e18 {
            break;
        }
        let ai = a as i128;
        let h2 = ai * h1 + h0;
        let k2 = ai * k1 + k0;
        if k2 > max_den as i128 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (x - h1 as f64 / k1 as f64).abs() <= tol {
            return Some((h1 as i64, k1 as u64));
        }
        let frac = r - a;
        if frac == 0.0 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

/// Integer vector parallel to a floating direction, if its ratios are
/// rational with denominators `≤ max_den`.
pub(crate) fn float_integer_direction(n: &[f64], max_den: u64) -> Option<Vec<i64>> {
    let (imax, &vmax) = n.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))?;
    if vmax == 0.0 {
        return None;
    }
    let mut fracs = Vec::with_capacity(n.len());
    for (i, &v) in n.iter().enumerate() {
        if i == imax {
            fracs.push((1i64, 1u64));
            continue;
        }
        let r = v / vmax;
        let tol = 64.0 * f64::EPSILON * r.abs().max(1.0);
        fracs.push(reconstruct(r, max_den, tol)?);
    }
    let l = fracs.iter().fold(1u64, |acc, &(_, q)| num_integer::lcm(acc, q));
    let mut k: Vec<i64> = fracs.iter().map(|&(p, q)| p * (l / q) as i64).collect();
    let g = k.iter().fold(0i64, |acc, &x| num_integer::gcd(acc, x));
    k.iter_mut().for_each(|c| *c /= g.max(1));
    if vmax < 0.0 {
        k.iter_mut().for_each(|c| *c = -*c);
    }
    Some(k)
}

pub fn check_non_resonance(surface: &SurfaceChart) -> Result<NonResonanceVerdict> {
    check_non_resonance_with(surface, &Lattice::integer(surface.dim()), DEFAULT_MAX_DENOMINATOR)
}

pub fn check_non_resonance_with(surface: &SurfaceChart, lattice: &Lattice, max_denominator: u64) -> Result<NonResonanceVerdict> {
    if lattice.dim() != surface.dim() {
        return Err(HomolabError::DegenerateLattice(format!(
            "lattice of dimension {} for a surface in R^{}",
            lattice.dim(),
            surface.dim()
        )));
    }
    let mut offending = Vec::new();
    for (i, piece) in surface.pieces().iter().enumerate() {
        match surface.piece_class(i) {
            PieceClass::StrictlyCurved => continue,
            PieceClass::Unclassified => {
                return Err(HomolabError::UndecidablePiece {
                    piece: i,
                    reason: "normal map of a custom piece is unknown; rationality of its normal set cannot be decided".into(),
                })
            }
            PieceClass::Flat => {}
        }
        let Piece::Segment { exact, .. } = piece else { unreachable!("only segments are flat") };
        let normal = surface.normal(i, 0.5).to_vec();
        let (k, is_exact) = match exact {
            Some(e) => (e.integer_direction(), true),
            None => (float_integer_direction(&normal, max_denominator), false),
        };
        if let Some(k) = k {
            if lattice.spans(&k) {
                offending.push(OffendingPiece { piece: i, normal, k, length: surface.piece_measure(i), exact: is_exact });
            }
        }
    }
    let rational_measure = offending.iter().fold(0.0, |acc, o| acc + o.length);
    Ok(NonResonanceVerdict { satisfies: offending.is_empty(), rational_measure, offending_pieces: offending })
}

#[cfg(test)]
mod tests {
    use super::super::exact::Q;
    use super::super::QuadSurd;
    use super::*;

    fn unit_square() -> SurfaceChart {
        SurfaceChart::polygon(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    /// Square with edge directions (1, √2) and (−√2, 1).
    fn tilted_square() -> SurfaceChart {
        let r = |n: i128| QuadSurd::rational(Q::from_integer(n));
        let s = |p: i128, q: i128| QuadSurd::new(Q::from_integer(p), Q::from_integer(q), 2).unwrap();
        SurfaceChart::polygon_exact(&[[r(0), r(0)], [r(1), s(0, 1)], [s(1, -1), s(1, 1)], [s(0, -1), r(1)]]).unwrap()
    }

    #[test]
    fn circle_satisfies() {
        let v = check_non_resonance(&SurfaceChart::circle(1.0).unwrap()).unwrap();
        assert!(v.satisfies && v.rational_measure == 0.0);
    }

    #[test]
    fn axis_square_is_resonant() {
        let v = check_non_resonance(&unit_square()).unwrap();
        assert!(!v.satisfies);
        assert_eq!(v.rational_measure, 4.0);
        let mut ks: Vec<Vec<i64>> = v.offending_pieces.iter().map(|o| o.k.clone()).collect();
        ks.sort();
        assert_eq!(ks, vec![vec![-1, 0], vec![0, -1], vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn tilted_square_is_non_resonant_exactly() {
        let sq = tilted_square();
        assert!((sq.enclosed_measure() - 3.0).abs() < 1e-12);
        let v = check_non_resonance_with(&sq, &Lattice::integer(2), 1_000_000).unwrap();
        assert!(v.satisfies);
        // floating reconstruction agrees at Q = 10⁶
        let float_sq = SurfaceChart::polygon(
            &sq.pieces().iter().map(|p| if let Piece::Segment { a, .. } = p { *a } else { unreachable!() }).collect::<Vec<_>>(),
        )
        .unwrap();
        assert!(check_non_resonance_with(&float_sq, &Lattice::integer(2), 1_000_000).unwrap().satisfies);
    }

    #[test]
    fn sublattice_excludes_directions_outside_its_span() {
        let lat = Lattice::new(vec![vec![2, 0]]).unwrap();
        let v = check_non_resonance_with(&unit_square(), &lat, 1000).unwrap();
        assert_eq!(v.rational_measure, 2.0);
        assert!(v.offending_pieces.iter().all(|o| o.k[1] == 0));
    }

    #[test]
    fn degenerate_lattice_rejected() {
        assert!(matches!(Lattice::new(vec![vec![1, 2], vec![2, 4]]), Err(HomolabError::DegenerateLattice(_))));
        assert!(matches!(Lattice::new(vec![vec![0, 0]]), Err(HomolabError::DegenerateLattice(_))));
    }

    #[test]
    fn continued_fraction_reconstruction() {
        assert_eq!(reconstruct(0.75, 100, 1e-15), Some((3, 4)));
        assert_eq!(reconstruct(-1.0 / 3.0, 100, 1e-15), Some((-1, 3)));
        assert_eq!(reconstruct(2f64.sqrt(), 1_000_000, 1e-14), None);
        assert_eq!(float_integer_direction(&[-0.6, 0.8], 100), Some(vec![-3, 4]));
    }

    #[test]
    fn quarter_turn_keeps_the_verdict() {
        let sq = tilted_square();
        let r = sq.rotated(std::f64::consts::FRAC_PI_2).unwrap();
        assert!(check_non_resonance(&r).unwrap().satisfies);
        let t = unit_square().translated(&[0.25, 0.5]).unwrap();
        assert_eq!(check_non_resonance(&t).unwrap().rational_measure, 4.0);
    }
}
