//! Compressed sparse row matrices and direct factorizations.
//!
//! Assembly produces `(row, col, value)` triplets which are merged into a
//! [`Csr`] with sorted, unique column indices per row. Duplicate triplets are
//! summed in the order they were pushed, so a deterministic triplet order gives
//! bit-identical matrices.
//!
//! Direct solves go through `faer` ([`Cholesky`] for the SPD blocks of the
//! reduced system, [`Lu`] for the full saddle-point system).

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Triplet accumulator.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn extend<I: IntoIterator<Item = (usize, usize, f64)>>(&mut self, iter: I) {
        self.entries.extend(iter);
    }

    pub fn build(self) -> Csr {
        Csr::from_triplets(self.nrows, self.ncols, self.entries)
    }
}

/// Row-compressed sparse matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl Csr {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: diag.to_vec(),
        }
    }

    /// Builds a matrix from triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        // stable: duplicates keep push order, so their sum is reproducible
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut data: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Column indices and values of one row.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[range.clone()], &self.data[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates over stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.iter().collect()
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// `y = Aᵀ x`
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let k = next[j];
                indices[k] = i;
                data[k] = v;
                next[j] += 1;
            }
        }
        Csr {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            data,
        }
    }

    /// Sparse product `A B` (row-by-row Gustavson).
    pub fn matmul(&self, other: &Csr) -> Csr {
        assert_eq!(self.ncols, other.nrows, "dimension mismatch in matmul");
        let n = other.ncols;
        let mut acc = vec![0.0; n];
        let mut mark = vec![usize::MAX; n];
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut row_cols: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            row_cols.clear();
            let (acols, avals) = self.row(i);
            for (&k, &a) in acols.iter().zip(avals) {
                let (bcols, bvals) = other.row(k);
                for (&j, &b) in bcols.iter().zip(bvals) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        row_cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            row_cols.sort_unstable();
            for &j in &row_cols {
                indices.push(j);
                data.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        Csr {
            nrows: self.nrows,
            ncols: n,
            indptr,
            indices,
            data,
        }
    }

    /// `a·A + b·B`
    pub fn add_scaled(&self, a: f64, other: &Csr, b: f64) -> Csr {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0);
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut data = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.nrows {
            let (c1, v1) = self.row(i);
            let (c2, v2) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < c1.len() || q < c2.len() {
                let j1 = c1.get(p).copied().unwrap_or(usize::MAX);
                let j2 = c2.get(q).copied().unwrap_or(usize::MAX);
                if j1 == j2 {
                    indices.push(j1);
                    data.push(a * v1[p] + b * v2[q]);
                    p += 1;
                    q += 1;
                } else if j1 < j2 {
                    indices.push(j1);
                    data.push(a * v1[p]);
                    p += 1;
                } else {
                    indices.push(j2);
                    data.push(b * v2[q]);
                    q += 1;
                }
            }
            indptr.push(indices.len());
        }
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn scaled(&self, s: f64) -> Csr {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Scales row `i` by `d[i]`.
    pub fn scale_rows(&self, d: &[f64]) -> Csr {
        assert_eq!(d.len(), self.nrows);
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in out.indptr[i]..out.indptr[i + 1] {
                out.data[k] *= d[i];
            }
        }
        out
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Removes entries for which `keep(row, col, value)` is false.
    pub fn filter(&self, mut keep: impl FnMut(usize, usize, f64) -> bool) -> Csr {
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if keep(i, j, v) {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            data,
        }
    }

    /// Dense copy of the sub-block with the given row and column index sets.
    pub fn dense_block(&self, rows: &[usize], cols: &[usize]) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.get(rows[a], cols[b]))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            m[(i, j)] += v;
        }
        m
    }

    /// Places blocks into one matrix; `blocks[i][j]` may be `None` for zero blocks.
    pub fn block(blocks: &[Vec<Option<&Csr>>], row_sizes: &[usize], col_sizes: &[usize]) -> Csr {
        let row_off: Vec<usize> = offsets(row_sizes);
        let col_off: Vec<usize> = offsets(col_sizes);
        let nrows = *row_off.last().unwrap();
        let ncols = *col_off.last().unwrap();
        let mut entries = Vec::new();
        for (bi, brow) in blocks.iter().enumerate() {
            for (bj, blk) in brow.iter().enumerate() {
                if let Some(m) = blk {
                    assert_eq!(m.nrows, row_sizes[bi], "block ({bi},{bj}) row size");
                    assert_eq!(m.ncols, col_sizes[bj], "block ({bi},{bj}) col size");
                    entries.extend(m.iter().map(|(i, j, v)| (i + row_off[bi], j + col_off[bj], v)));
                }
            }
        }
        Csr::from_triplets(nrows, ncols, entries)
    }

    /// Writes entries as `row col value` lines.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.iter() {
            writeln!(out, "{i} {j} {v:.17e}")?;
        }
        Ok(())
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trips: Vec<Triplet<usize, usize, f64>> = self.iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(sizes.len() + 1);
    off.push(0);
    for &s in sizes {
        off.push(off.last().unwrap() + s);
    }
    off
}

fn solve_with(n: usize, b: &[f64], solve: impl FnOnce(&mut Mat<f64>)) -> Vec<f64> {
    assert_eq!(b.len(), n);
    let mut x = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    solve(&mut x);
    (0..n).map(|i| x[(i, 0)]).collect()
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct Cholesky {
    n: usize,
    factor: Option<faer::sparse::linalg::solvers::Llt<usize, f64>>,
}

impl Cholesky {
    pub fn new(a: &Csr) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::Factorization("Cholesky of a non-square matrix".into()));
        }
        if a.nrows == 0 {
            return Ok(Self { n: 0, factor: None });
        }
        let lower = a.filter(|i, j, _| j <= i).to_faer()?;
        let factor = lower
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Factorization(format!("cholesky: {e:?}")))?;
        Ok(Self {
            n: a.nrows,
            factor: Some(factor),
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match &self.factor {
            None => Vec::new(),
            Some(f) => solve_with(self.n, b, |x| f.solve_in_place(x.as_mut())),
        }
    }
}

/// Sparse LU factorization with partial pivoting.
pub struct Lu {
    n: usize,
    factor: Option<faer::sparse::linalg::solvers::Lu<usize, f64>>,
}

impl Lu {
    pub fn new(a: &Csr) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::Factorization("LU of a non-square matrix".into()));
        }
        if a.nrows == 0 {
            return Ok(Self { n: 0, factor: None });
        }
        let factor = a
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::Factorization(format!("lu: {e:?}")))?;
        Ok(Self {
            n: a.nrows,
            factor: Some(factor),
        })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let x = match &self.factor {
            None => Vec::new(),
            Some(f) => solve_with(self.n, b, |x| f.solve_in_place(x.as_mut())),
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("singular matrix in LU solve".into()));
        }
        Ok(x)
    }
}

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Csr {
        Csr::from_triplets(
            3,
            3,
            vec![
                (0, 0, 4.0),
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 1, 3.0),
                (2, 2, 2.0),
                (1, 1, 0.5),
            ],
        )
    }

    #[test]
    fn duplicates_are_summed() {
        let a = small();
        assert_eq!(a.get(1, 1), 3.5);
        assert_eq!(a.nnz(), 5);
    }

    #[test]
    fn transpose_and_products() {
        let a = Csr::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]);
        let at = a.transpose();
        assert_eq!(at.get(2, 0), 2.0);
        let ata = at.matmul(&a);
        let dense = a.to_dense().transpose() * a.to_dense();
        assert!((ata.to_dense() - dense).abs().max() < 1e-15);
        let x = [1.0, -1.0];
        assert_eq!(a.mul_vec_transpose(&x), at.mul_vec(&x));
    }

    #[test]
    fn add_scaled_merges_patterns() {
        let a = Csr::from_triplets(2, 2, vec![(0, 0, 1.0)]);
        let b = Csr::from_triplets(2, 2, vec![(0, 1, 1.0), (0, 0, 1.0)]);
        let c = a.add_scaled(2.0, &b, -1.0);
        assert_eq!(c.get(0, 0), 1.0);
        assert_eq!(c.get(0, 1), -1.0);
    }

    #[test]
    fn cholesky_and_lu_solve() {
        let a = small();
        let b = [1.0, 2.0, 3.0];
        let x = Cholesky::new(&a).unwrap().solve(&b);
        let r = a.mul_vec(&x);
        assert!(r.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
        let n = Csr::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let y = Lu::new(&n).unwrap().solve(&[1.0, 3.0]).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-14 && (y[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn triplet_dump_format() {
        let mut buf = Vec::new();
        small().write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().nth(1).unwrap();
        let parts: Vec<&str> = first.split_whitespace().collect();
        assert_eq!(parts[0], "0");
        assert_eq!(parts[1], "0");
        assert_eq!(parts[2].parse::<f64>().unwrap(), 4.0);
    }
}
