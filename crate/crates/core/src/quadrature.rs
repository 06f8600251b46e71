//! Gauss–Legendre and triangle quadrature rules.

use std::f64::consts::PI;

/// Gauss–Legendre rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi's initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let len = b - a;
        self.nodes.iter().zip(&self.weights).map(move |(&t, &w)| (a + len * t, len * w))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Symmetric triangle rule in barycentric coordinates; weights sum to one.
#[derive(Debug, Clone, Copy)]
pub struct TriangleRule {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
}

const A4: f64 = 0.445_948_490_915_965;
const B4: f64 = 0.091_576_213_509_771;
const W4A: f64 = 0.223_381_589_678_011;
const W4B: f64 = 0.109_951_743_655_322;

/// Dunavant degree-4 rule (6 points).
pub const TRIANGLE_ORDER4: TriangleRule = TriangleRule {
    points: &[
        [1.0 - 2.0 * A4, A4, A4],
        [A4, 1.0 - 2.0 * A4, A4],
        [A4, A4, 1.0 - 2.0 * A4],
        [1.0 - 2.0 * B4, B4, B4],
        [B4, 1.0 - 2.0 * B4, B4],
        [B4, B4, 1.0 - 2.0 * B4],
    ],
    weights: &[W4A, W4A, W4A, W4B, W4B, W4B],
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 32] {
            let rule = GaussLegendre::new(n);
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-14, "n={n}");
            // x^(2n-1) on [0,1] integrates to 1/(2n)
            let deg = 2 * n - 1;
            let s: f64 = rule.on_interval(0.0, 1.0).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((s - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n={n}: {s}");
        }
    }

    #[test]
    fn gauss_nodes_are_sorted_and_interior() {
        let rule = GaussLegendre::new(17);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(rule.nodes[0] > 0.0 && rule.nodes[16] < 1.0);
        assert!((rule.nodes[8] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn triangle_rule_degree_four() {
        let r = TRIANGLE_ORDER4;
        let wsum: f64 = r.weights.iter().sum();
        assert!((wsum - 1.0).abs() < 1e-12);
        // reference triangle (0,0),(1,0),(0,1), area 1/2; ∫ x^2 y^2 = 1/180
        let s: f64 = r
            .points
            .iter()
            .zip(r.weights)
            .map(|(l, w)| {
                let (x, y) = (l[1], l[2]);
                w * 0.5 * x * x * y * y
            })
            .sum();
        assert!((s - 1.0 / 180.0).abs() < 1e-12, "{s}");
    }
}
