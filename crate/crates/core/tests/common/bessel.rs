//! Bessel function J₀ for test oracles: power series for small arguments,
//! Hankel asymptotic expansion for large ones.

use std::f64::consts::PI;

pub fn j0(z: f64) -> f64 {
    let z = z.abs();
    if z < 12.0 {
        let q = 0.25 * z * z;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            term *= -q / (k * k) as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        return sum;
    }
    // t_k = a_k(0) / z^k
    let (mut p, mut q) = (0.0, 0.0);
    let mut t: f64 = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            t *= -odd * odd / (8.0 * k as f64 * z);
        }
        if t.abs() > last || t.abs() < 1e-18 {
            break;
        }
        last = t.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * t;
        } else {
            q += sign * t;
        }
    }
    let chi = z - 0.25 * PI;
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `J₁(z) = (1/π)∫₀^π cos(θ − z sin θ) dθ` by the trapezoid rule, which
/// converges geometrically for this periodic analytic integrand.
pub fn j1(z: f64) -> f64 {
    let n = 4096 + 4 * z.abs().ceil() as usize;
    let h = PI / n as f64;
    let f = |t: f64| (t - z * t.sin()).cos();
    let inner: f64 = (1..n).map(|k| f(k as f64 * h)).sum();
    (inner + 0.5 * (f(0.0) + f(PI))) * h / PI
}
