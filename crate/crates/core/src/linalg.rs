//! Sparse row storage and a banded Cholesky factorization.
//!
//! The transform Jacobian has at most `m` nonzeros per row, all within a
//! window of `m` consecutive columns, so `J^T J` is banded with half-bandwidth
//! `m - 1`. Solving the damped normal equations in band storage costs
//! `O(n * m^2)` instead of `O(n^3)`.

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseMatrix {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn with_capacity(ncols: usize, nnz: usize) -> Self {
        SparseMatrix {
            ncols,
            row_ptr: vec![0],
            cols: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
        }
    }

    pub fn clear(&mut self, ncols: usize) {
        self.ncols = ncols;
        self.row_ptr.clear();
        self.row_ptr.push(0);
        self.cols.clear();
        self.vals.clear();
    }

    /// Appends an entry to the row under construction.
    pub fn push(&mut self, col: usize, val: f64) {
        debug_assert!(col < self.ncols);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn end_row(&mut self) {
        self.row_ptr.push(self.cols.len());
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut m = SparseMatrix::with_capacity(ncols, ncols * rows.len());
        for row in rows {
            assert_eq!(row.len(), ncols, "ragged dense matrix");
            for (j, &v) in row.iter().enumerate() {
                m.push(j, v);
            }
            m.end_row();
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.nrows())
            .map(|i| {
                let mut r = vec![0.0; self.ncols];
                let (cols, vals) = self.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    r[c] += v;
                }
                r
            })
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows())
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    /// `self^T * y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (i, &yi) in y.iter().enumerate().take(self.nrows()) {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c] += v * yi;
            }
        }
        out
    }

    /// Largest column spread within a single row, i.e. the half-bandwidth of
    /// `self^T * self`.
    pub fn gram_bandwidth(&self) -> usize {
        (0..self.nrows())
            .filter_map(|i| {
                let (cols, _) = self.row(i);
                let lo = cols.iter().min()?;
                let hi = cols.iter().max()?;
                Some(hi - lo)
            })
            .max()
            .unwrap_or(0)
    }

    /// `self^T * self` in symmetric band storage.
    pub fn gram(&self) -> SymBand {
        let mut band = SymBand::zeros(self.ncols, self.gram_bandwidth());
        for i in 0..self.nrows() {
            let (cols, vals) = self.row(i);
            for (a, (&ca, &va)) in cols.iter().zip(vals).enumerate() {
                for (&cb, &vb) in cols[..=a].iter().zip(&vals[..=a]) {
                    let (hi, lo) = if ca >= cb { (ca, cb) } else { (cb, ca) };
                    *band.get_mut(hi, lo) += va * vb;
                }
            }
        }
        band
    }
}

/// Lower band of a symmetric matrix: entry `(i, j)` with `0 <= i - j <= bw`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        SymBand {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i >= j && i - j <= self.bw);
        self.data[i * (self.bw + 1) + (i - j)]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert!(i >= j && i - j <= self.bw);
        &mut self.data[i * (self.bw + 1) + (i - j)]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn add_diag(&mut self, d: &[f64]) {
        for (i, &x) in d.iter().enumerate() {
            *self.get_mut(i, i) += x;
        }
    }

    /// In-place Cholesky `A = L L^T`. Returns `None` if `A` is not
    /// numerically positive definite.
    pub fn cholesky(mut self) -> Option<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let k0 = i.saturating_sub(bw).max(j.saturating_sub(bw));
                let mut sum = self.get(i, j);
                for k in k0..j {
                    sum -= self.get(i, k) * self.get(j, k);
                }
                if i == j {
                    if !(sum > 0.0 && sum.is_finite()) {
                        return None;
                    }
                    *self.get_mut(i, i) = sum.sqrt();
                } else {
                    *self.get_mut(i, j) = sum / self.get(j, j);
                }
            }
        }
        Some(BandCholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: SymBand,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.l.n, self.l.bw);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut sum = y[i];
            for k in i.saturating_sub(bw)..i {
                sum -= self.l.get(i, k) * y[k];
            }
            y[i] = sum / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                sum -= self.l.get(k, i) * y[k];
            }
            y[i] = sum / self.l.get(i, i);
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_and_products() {
        let a = vec![vec![1.0, 2.0, 0.0], vec![0.0, 3.0, -1.0]];
        let s = SparseMatrix::from_dense(&a);
        assert_eq!(s.to_dense(), a);
        assert_eq!(s.mul_vec(&[1.0, 1.0, 1.0]), vec![3.0, 2.0]);
        assert_eq!(s.tr_mul_vec(&[1.0, 2.0]), vec![1.0, 8.0, -2.0]);
    }

    #[test]
    fn band_solve_matches_dense_system() {
        // Tridiagonal Gram of a bidiagonal matrix plus a shift.
        let n = 7;
        let mut j = SparseMatrix::with_capacity(n, 2 * n);
        for i in 0..n {
            j.push(i, 2.0 + i as f64);
            if i + 1 < n {
                j.push(i + 1, -1.0);
            }
            j.end_row();
        }
        let mut g = j.gram();
        assert_eq!(g.bandwidth(), 1);
        g.add_diag(&vec![0.5; n]);
        let dense = j.to_dense();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        // b = (J^T J + 0.5 I) x
        let jx = j.mul_vec(&x_true);
        let mut b = j.tr_mul_vec(&jx);
        b.iter_mut().zip(&x_true).for_each(|(b, x)| *b += 0.5 * x);
        let x = g.clone().cholesky().unwrap().solve(&b);
        for (a, e) in x.iter().zip(&x_true) {
            assert!((a - e).abs() < 1e-12);
        }
        assert_eq!(dense.len(), n);
    }

    #[test]
    fn singular_band_rejected() {
        let j = SparseMatrix::from_dense(&[vec![1.0, 1.0]]);
        assert!(j.gram().cholesky().is_none());
    }
}
