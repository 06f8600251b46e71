//! Compressed sparse row matrices for vertex-major block systems.

use rayon::prelude::*;

/// Square CSR matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Csr {
    /// Pattern of the P1 block operator: dofs `v·m + α` coupled whenever
    /// their vertices share a triangle.
    pub fn block_pattern(n_vertices: usize, triangles: &[[u32; 3]], m: usize) -> Self {
        // upper bound of neighbours per vertex, self included
        let mut bound = vec![1u32; n_vertices + 1];
        for t in triangles {
            for &v in t {
                bound[v as usize + 1] += 2;
            }
        }
        let mut start = vec![0usize; n_vertices + 1];
        for v in 0..n_vertices {
            start[v + 1] = start[v] + bound[v + 1] as usize;
        }
        drop(bound);
        let mut adj = vec![0u32; start[n_vertices]];
        let mut fill: Vec<usize> = start[..n_vertices].to_vec();
        for v in 0..n_vertices {
            adj[fill[v]] = v as u32;
            fill[v] += 1;
        }
        for t in triangles {
            for i in 0..3 {
                let v = t[i] as usize;
                adj[fill[v]] = t[(i + 1) % 3];
                adj[fill[v] + 1] = t[(i + 2) % 3];
                fill[v] += 2;
            }
        }
        drop(fill);
        let mut lens = vec![0usize; n_vertices];
        let mut segs: Vec<&mut [u32]> = Vec::with_capacity(n_vertices);
        let mut rest = adj.as_mut_slice();
        for v in 0..n_vertices {
            let (seg, tail) = rest.split_at_mut(start[v + 1] - start[v]);
            segs.push(seg);
            rest = tail;
        }
        segs.par_iter_mut().zip(lens.par_iter_mut()).for_each(|(seg, len)| {
            seg.sort_unstable();
            let mut k = 0;
            for i in 0..seg.len() {
                if i == 0 || seg[i] != seg[k - 1] {
                    seg[k] = seg[i];
                    k += 1;
                }
            }
            *len = k;
        });
        drop(segs);
        let n = n_vertices * m;
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::with_capacity(lens.iter().sum::<usize>() * m * m);
        for v in 0..n_vertices {
            let a = &adj[start[v]..start[v] + lens[v]];
            for _ in 0..m {
                for &u in a {
                    for beta in 0..m {
                        cols.push(u * m as u32 + beta as u32);
                    }
                }
                row_ptr.push(cols.len());
            }
        }
        let vals = vec![0.0; cols.len()];
        Self { n, row_ptr, cols, vals }
    }

    /// Builds from unsorted `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut trip: Vec<(u32, u32, f64)>) -> Self {
        trip.sort_unstable_by_key(|&(r, c, _)| ((r as u64) << 32) | c as u64);
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].binary_search(&(j as u32)).ok().map(|p| r.start + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.vals[p])
    }

    /// Adds into an existing pattern entry; panics if `(i, j)` is absent.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self.position(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) outside the sparsity pattern"));
        self.vals[p] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j as usize]).sum();
        }
    }

    /// Row-parallel product; each row is summed in the same order as
    /// `matvec`, so results are bitwise identical.
    pub fn par_matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_chunks_mut(4096).enumerate().for_each(|(chunk, ys)| {
            for (k, yi) in ys.iter_mut().enumerate() {
                let (c, v) = self.row(chunk * 4096 + k);
                *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j as usize]).sum();
            }
        });
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            let (c, v) = self.row(i);
            trip.extend(c.iter().zip(v).map(|(&j, &a)| (j, i as u32, a)));
        }
        Self::from_triplets(self.n, trip)
    }

    /// Largest `|a_ij − a_ji|` relative to `max(|a_ij|, |a_ji|)`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                let b = self.get(j as usize, i);
                let scale = a.abs().max(b.abs());
                if scale > 0.0 {
                    worst = worst.max((a - b).abs() / scale);
                }
            }
        }
        worst
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.asymmetry() <= rel_tol
    }

    pub fn frobenius(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `Pᵀ (A + diag(shift)) P`, assembled one coarse row at a time.
    pub fn galerkin(&self, shift: Option<&[f64]>, p: &Prolongation) -> Self {
        const ROWS: usize = 1024;
        let nc = p.n_coarse();
        let (rptr, ridx, rw) = p.transpose_parts();
        let chunks: Vec<(Vec<usize>, Vec<u32>, Vec<f64>)> = (0..nc.div_ceil(ROWS))
            .into_par_iter()
            .map(|chunk| {
                let (mut lens, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
                let mut acc: Vec<(u32, f64)> = Vec::new();
                for ci in chunk * ROWS..((chunk + 1) * ROWS).min(nc) {
                    acc.clear();
                    for k in rptr[ci] as usize..rptr[ci + 1] as usize {
                        let (i, wi) = (ridx[k] as usize, rw[k]);
                        let (c, v) = self.row(i);
                        for (&j, &a) in c.iter().zip(v) {
                            let a = match shift {
                                Some(s) if j as usize == i => a + s[i],
                                _ => a,
                            };
                            let (pc, pv) = p.row(j as usize);
                            acc.extend(pc.iter().zip(pv).map(|(&cj, &wj)| (cj, wi * a * wj)));
                        }
                    }
                    acc.sort_by_key(|e| e.0);
                    let start = cols.len();
                    for &(c, v) in &acc {
                        if cols.len() > start && cols.last() == Some(&c) {
                            *vals.last_mut().unwrap() += v;
                        } else {
                            cols.push(c);
                            vals.push(v);
                        }
                    }
                    lens.push(cols.len() - start);
                }
                (lens, cols, vals)
            })
            .collect();
        let nnz = chunks.iter().map(|c| c.1.len()).sum();
        let mut row_ptr = Vec::with_capacity(nc + 1);
        row_ptr.push(0);
        let (mut cols, mut vals) = (Vec::with_capacity(nnz), Vec::with_capacity(nnz));
        for (lens, c, v) in chunks {
            for l in lens {
                row_ptr.push(row_ptr.last().unwrap() + l);
            }
            cols.extend(c);
            vals.extend(v);
        }
        Self { n: nc, row_ptr, cols, vals }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                d[(i, j as usize)] += a;
            }
        }
        d
    }
}

/// Rectangular interpolation from `n_coarse` dofs, stored by fine rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Prolongation {
    n_coarse: usize,
    row_ptr: Vec<u32>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Prolongation {
    pub fn from_rows<R: IntoIterator<Item = (u32, f64)>>(n_coarse: usize, rows: impl IntoIterator<Item = R>) -> Self {
        let mut out = Self { n_coarse, row_ptr: vec![0], cols: Vec::new(), vals: Vec::new() };
        for row in rows {
            for (c, w) in row {
                assert!((c as usize) < n_coarse, "coarse index {c} out of range");
                out.cols.push(c);
                out.vals.push(w);
            }
            out.row_ptr.push(out.cols.len() as u32);
        }
        out
    }

    pub fn n_fine(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize;
        (&self.cols[r.clone()], &self.vals[r])
    }

    /// `rc = Pᵀ r`.
    pub fn restrict(&self, r: &[f64], rc: &mut [f64]) {
        rc.iter_mut().for_each(|v| *v = 0.0);
        for (i, ri) in r.iter().enumerate() {
            let (c, w) = self.row(i);
            for (&c, &w) in c.iter().zip(w) {
                rc[c as usize] += w * ri;
            }
        }
    }

    /// `x += P e`.
    pub fn interpolate_add(&self, e: &[f64], x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            let (c, w) = self.row(i);
            *xi += c.iter().zip(w).map(|(&c, &w)| w * e[c as usize]).sum::<f64>();
        }
    }

    /// Column-compressed form: pointers, fine indices and weights.
    fn transpose_parts(&self) -> (Vec<u32>, Vec<u32>, Vec<f64>) {
        let mut ptr = vec![0u32; self.n_coarse + 1];
        for &c in &self.cols {
            ptr[c as usize + 1] += 1;
        }
        for c in 0..self.n_coarse {
            ptr[c + 1] += ptr[c];
        }
        let mut fill: Vec<u32> = ptr[..self.n_coarse].to_vec();
        let mut idx = vec![0u32; self.cols.len()];
        let mut w = vec![0.0; self.cols.len()];
        for i in 0..self.n_fine() {
            let (c, v) = self.row(i);
            for (&c, &v) in c.iter().zip(v) {
                let k = fill[c as usize] as usize;
                idx[k] = i as u32;
                w[k] = v;
                fill[c as usize] += 1;
            }
        }
        (ptr, idx, w)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let a = Csr::from_triplets(2, vec![(1, 0, 2.0), (0, 0, 1.0), (1, 0, 3.0), (0, 1, -1.0)]);
        assert_eq!(a.get(1, 0), 5.0);
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.nnz(), 3);
        let mut y = [0.0; 2];
        a.matvec(&[1.0, 2.0], &mut y);
        assert_eq!(y, [-1.0, 5.0]);
        assert_eq!(a.transpose().get(0, 1), 5.0);
    }

    #[test]
    fn block_pattern_couples_components() {
        let p = Csr::block_pattern(3, &[[0, 1, 2]], 2);
        assert_eq!(p.n(), 6);
        assert_eq!(p.nnz(), 36);
    }

    #[test]
    fn galerkin_of_identity_is_normal_matrix() {
        let a = Csr::from_triplets(3, (0..3).map(|i| (i, i, 1.0)).collect());
        let p = Prolongation::from_rows(2, [vec![(0, 1.0)], vec![(0, 0.5), (1, 0.5)], vec![(1, 1.0)]]);
        let c = a.galerkin(None, &p);
        assert_eq!(c.get(0, 0), 1.25);
        assert_eq!(c.get(0, 1), 0.25);
        let shifted = a.galerkin(Some(&[1.0, 0.0, 0.0]), &p);
        assert_eq!(shifted.get(0, 0), 2.25);
        assert_eq!(shifted.get(1, 1), 1.25);
    }

    #[test]
    fn parallel_matvec_is_bitwise_serial() {
        let n = 10_000;
        let trip = (0..n as u32).flat_map(|i| [(i, i, 2.0 + i as f64 * 1e-3), (i, (i * 7 + 3) % n as u32, 0.1)]).collect();
        let a = Csr::from_triplets(n, trip);
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (mut y1, mut y2) = (vec![0.0; n], vec![0.0; n]);
        a.matvec(&x, &mut y1);
        a.par_matvec(&x, &mut y2);
        assert_eq!(y1, y2);
    }
}
