//! Exact directions in `Q(√s)^d`.

use num_rational::Ratio;
use num_traits::Zero;

use crate::error::{HomolabError, Result};

pub type Q = Ratio<i128>;

/// `p + q√s` with rational `p, q` and square-free-or-not integer `s ≥ 0`
/// (`s` is only compared, never factored; `q` is ignored when `s` is a
/// perfect square after construction).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadSurd {
    pub p: Q,
    pub q: Q,
    pub s: i128,
}

fn perfect_square_root(s: i128) -> Option<i128> {
    if s < 0 {
        return None;
    }
    let r = (s as f64).sqrt().round() as i128;
    (r - 1..=r + 1).find(|&c| c >= 0 && c * c == s)
}

impl QuadSurd {
    pub fn rational(p: Q) -> Self {
        Self { p, q: Q::zero(), s: 0 }
    }

    pub fn new(p: Q, q: Q, s: i128) -> Result<Self> {
        if s < 0 {
            return Err(HomolabError::InvalidSurface(format!("surd of negative number {s}")));
        }
        if let Some(r) = perfect_square_root(s) {
            return Ok(Self::rational(p + q * Q::from_integer(r)));
        }
        if q.is_zero() {
            return Ok(Self::rational(p));
        }
        Ok(Self { p, q, s })
    }

    pub fn is_rational(&self) -> bool {
        self.q.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        let f = |r: &Q| *r.numer() as f64 / *r.denom() as f64;
        f(&self.p) + f(&self.q) * (self.s as f64).sqrt()
    }

    fn common_s(&self, other: &Self) -> Result<i128> {
        match (self.is_rational(), other.is_rational()) {
            (true, true) => Ok(0),
            (false, true) => Ok(self.s),
            (true, false) => Ok(other.s),
            (false, false) if self.s == other.s => Ok(self.s),
            _ => Err(HomolabError::InvalidSurface(format!("mixed surds √{} and √{}", self.s, other.s))),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let s = self.common_s(other)?;
        Self::new(self.p - other.p, self.q - other.q, s)
    }

    pub fn neg(&self) -> Self {
        Self { p: -self.p, q: -self.q, s: self.s }
    }
}

/// Direction `P + √s R` with rational vectors `P`, `R`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactDirection {
    pub rational: Vec<Q>,
    pub surd: Vec<Q>,
    pub s: i128,
}

fn primitive(v: &[Q]) -> Vec<i64> {
    let l = v.iter().fold(1i128, |acc, r| num_integer::lcm(acc, *r.denom()));
    let ints: Vec<i128> = v.iter().map(|r| *r.numer() * (l / *r.denom())).collect();
    let g = ints.iter().fold(0i128, |acc, &x| num_integer::gcd(acc, x));
    ints.iter().map(|&x| (x / g.max(1)) as i64).collect()
}

fn parallel(a: &[Q], b: &[Q]) -> bool {
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if a[i] * b[j] != a[j] * b[i] {
                return false;
            }
        }
    }
    true
}

impl ExactDirection {
    pub fn from_components(c: &[QuadSurd]) -> Result<Self> {
        let mut s = 0;
        for x in c {
            if !x.is_rational() {
                if s != 0 && s != x.s {
                    return Err(HomolabError::InvalidSurface(format!("mixed surds √{s} and √{}", x.s)));
                }
                s = x.s;
            }
        }
        let dir = Self { rational: c.iter().map(|x| x.p).collect(), surd: c.iter().map(|x| x.q).collect(), s };
        if dir.rational.iter().all(Zero::is_zero) && dir.surd.iter().all(Zero::is_zero) {
            return Err(HomolabError::InvalidSurface("zero direction".into()));
        }
        Ok(dir)
    }

    pub fn rational_vector(v: &[Q]) -> Self {
        Self { rational: v.to_vec(), surd: vec![Q::zero(); v.len()], s: 0 }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        let rs = (self.s as f64).sqrt();
        let f = |r: &Q| *r.numer() as f64 / *r.denom() as f64;
        self.rational.iter().zip(&self.surd).map(|(p, q)| f(p) + rs * f(q)).collect()
    }

    /// Primitive integer vector parallel to this direction (same sense),
    /// or `None` when the direction is irrational. `P + √s R` is parallel
    /// to an integer vector iff `P ∥ R`, since `√s` is irrational.
    pub fn integer_direction(&self) -> Option<Vec<i64>> {
        let p_zero = self.rational.iter().all(Zero::is_zero);
        let r_zero = self.surd.iter().all(Zero::is_zero);
        let base: Vec<Q> = if r_zero {
            self.rational.clone()
        } else if p_zero {
            self.surd.clone()
        } else if parallel(&self.rational, &self.surd) {
            self.rational.clone()
        } else {
            return None;
        };
        let mut k = primitive(&base);
        // orient along the actual direction
        let f = self.to_f64();
        let dotp: f64 = k.iter().zip(&f).map(|(&a, &b)| a as f64 * b).sum();
        if dotp < 0.0 {
            k.iter_mut().for_each(|c| *c = -*c);
        }
        Some(k)
    }

    /// Rotation by `n` quarter turns (2-D only).
    pub fn quarter_turns(&self, n: i64) -> Self {
        let mut out = self.clone();
        for _ in 0..n.rem_euclid(4) {
            out = Self { rational: vec![-out.rational[1], out.rational[0]], surd: vec![-out.surd[1], out.surd[0]], s: out.s };
        }
        out
    }
}
