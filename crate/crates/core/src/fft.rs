//! Multi-dimensional FFT on the periodic `N^d` grid.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct TorusFft {
    n: usize,
    dim: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TorusFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusFft").field("n", &self.n).field("dim", &self.dim).finish()
    }
}

impl TorusFft {
    pub fn new(n: usize, dim: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, dim, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len());
        let n = self.n;
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            if stride == 1 {
                for chunk in data.chunks_exact_mut(n) {
                    plan.process_with_scratch(chunk, &mut scratch);
                }
                continue;
            }
            let block = stride * n;
            for start in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (i, l) in line.iter_mut().enumerate() {
                        *l = data[base + i * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (i, l) in line.iter().enumerate() {
                        data[base + i * stride] = *l;
                    }
                }
            }
        }
    }

    /// Unnormalized forward transform, `Σ_p u_p e^{-2πi k·p/N}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform including the `1/N^d` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    /// Signed wavenumber of each index along one axis (Nyquist as `-N/2`).
    pub fn axis_wavenumbers(&self) -> Vec<i64> {
        let n = self.n as i64;
        (0..n).map(|i| if i < (n + 1) / 2 { i } else { i - n }).collect()
    }

    /// Wavenumber vectors of all grid modes in row-major order.
    pub fn wavevectors(&self) -> Vec<Vec<i64>> {
        let axis = self.axis_wavenumbers();
        crate::fields::grid_indices(self.n, self.dim).map(|idx| idx.iter().map(|&i| axis[i]).collect()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_single_mode() {
        let fft = TorusFft::new(8, 2);
        let mut data: Vec<Complex64> = (0..64)
            .map(|p| {
                let (i, j) = (p / 8, p % 8);
                let t = 2.0 * std::f64::consts::PI * (i as f64 * 1.0 + j as f64 * 3.0) / 8.0;
                Complex64::new(t.cos(), t.sin())
            })
            .collect();
        let orig = data.clone();
        fft.forward(&mut data);
        // mode (1, 3) carries everything
        let k = fft.wavevectors();
        for (p, v) in data.iter().enumerate() {
            let expect = if k[p] == vec![1, 3] { 64.0 } else { 0.0 };
            assert!((v.re - expect).abs() < 1e-10 && v.im.abs() < 1e-10, "{:?} {v}", k[p]);
        }
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-14);
        }
    }
}
