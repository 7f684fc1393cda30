//! Coordinate-format sparse matrices and a banded Cholesky factorization.
//!
//! Jacobians and Hessians cross module boundaries as [`Triplets`]. Symmetric
//! matrices (Hessians) store only their lower triangle (`row >= col`);
//! duplicate entries are summed.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// Adds a symmetric contribution, keeping only the lower triangle.
    #[inline]
    pub fn push_sym(&mut self, row: usize, col: usize, value: f64) {
        if row >= col {
            self.push(row, col, value);
        } else {
            self.push(col, row, value);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for e in &mut self.entries {
            e.2 *= factor;
        }
    }

    /// Appends all entries of `other`, shifted by the given offsets.
    pub fn append_shifted(&mut self, other: &Triplets, row_off: usize, col_off: usize) {
        for &(r, c, v) in &other.entries {
            self.push(r + row_off, c + col_off, v);
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// Densifies a lower-triangle symmetric matrix into its full form.
    pub fn sym_to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
            if r != c {
                m[(c, r)] += v;
            }
        }
        m
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// y = Aᵀ x
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for &(r, c, v) in &self.entries {
            y[c] += v * x[r];
        }
        y
    }

    /// y = A x for a lower-triangle symmetric matrix.
    pub fn sym_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }

    /// Lower triangle of `scale · AᵀA`, with duplicates left unsummed.
    pub fn gram_lower(&self, scale: f64) -> Triplets {
        let rows = self.row_lists();
        let mut out = Triplets::new(self.ncols, self.ncols);
        for row in &rows {
            for &(ci, vi) in row {
                for &(cj, vj) in row {
                    if ci >= cj {
                        out.push(ci, cj, scale * vi * vj);
                    }
                }
            }
        }
        out
    }

    /// Groups entries per row, preserving insertion order.
    pub fn row_lists(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.nrows];
        for &(r, c, v) in &self.entries {
            rows[r].push((c, v));
        }
        rows
    }

    /// Absolute-value row sums, `|A| · 1`.
    pub fn abs_row_sums(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for &(r, _, v) in &self.entries {
            y[r] += v.abs();
        }
        y
    }
}

/// Symmetric banded matrix in lower band storage, factorized in place.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

/// Cholesky factorization met a non-positive pivot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    pub pivot: usize,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
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
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw + j - i)
    }

    /// Adds `v` at lower position (i, j), `i >= j`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < j {
            return self.get(j, i);
        }
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.add(i, i, v);
        }
    }

    /// In-place `L Lᵀ` factorization. On failure the contents are clobbered.
    pub fn cholesky(mut self) -> Result<BandCholesky, NotPositiveDefinite> {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut sum = self.data[self.idx(i, j)];
                for k in lo..j {
                    sum -= self.data[self.idx(i, k)] * self.data[self.idx(j, k)];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(NotPositiveDefinite { pivot: i });
                    }
                    let k = self.idx(i, i);
                    self.data[k] = sum.sqrt();
                } else {
                    let d = self.data[self.idx(j, j)];
                    let k = self.idx(i, j);
                    self.data[k] = sum / d;
                }
            }
        }
        Ok(BandCholesky { factor: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    factor: SymBand,
}

impl BandCholesky {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let l = &self.factor;
        let (n, bw) = (l.n, l.bw);
        for i in 0..n {
            let mut sum = b[i];
            for k in i.saturating_sub(bw)..i {
                sum -= l.data[l.idx(i, k)] * b[k];
            }
            b[i] = sum / l.data[l.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut sum = b[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                sum -= l.data[l.idx(k, i)] * b[k];
            }
            b[i] = sum / l.data[l.idx(i, i)];
        }
    }
}

/// Half-bandwidth of a lower-triangle symmetric pattern under `perm`, where
/// `inv[old] = new`.
pub fn bandwidth(entries: impl Iterator<Item = (usize, usize)>, inv: &[usize]) -> usize {
    entries
        .map(|(r, c)| inv[r].abs_diff(inv[c]))
        .max()
        .unwrap_or(0)
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
