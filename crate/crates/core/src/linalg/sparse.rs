use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from raw CSR arrays, validating the structure.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("malformed CSR matrix: {m}")));
        if indptr.len() != n_rows + 1 || indptr[0] != 0 || *indptr.last().unwrap() != indices.len() {
            return bad("row offsets");
        }
        if indices.len() != values.len() {
            return bad("index/value length");
        }
        for r in 0..n_rows {
            if indptr[r] > indptr[r + 1] {
                return bad("offsets decrease");
            }
            let row = &indices[indptr[r]..indptr[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= n_cols) {
                return bad("column indices unsorted or out of bounds");
            }
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    /// Sums duplicate entries and drops exact zeros.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut builder = RowBuilder::new(n_cols);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..n_rows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_unstable_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut s = 0.0;
                while k < row.len() && row[k].0 == c {
                    s += row[k].1;
                    k += 1;
                }
                builder.push(c, s);
            }
            builder.finish_row();
        }
        builder.build()
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut b = RowBuilder::new(n_cols);
        for row in rows {
            for (c, &v) in row.iter().enumerate() {
                b.push(c, v);
            }
            b.finish_row();
        }
        b.build()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: x.len(),
            });
        }
        if y.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                got: y.len(),
            });
        }
        for (r, yr) in y.iter_mut().enumerate() {
            let (a, b) = (self.indptr[r], self.indptr[r + 1]);
            *yr = self.indices[a..b]
                .iter()
                .zip(&self.values[a..b])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
        Ok(())
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                indices[next[c]] = r;
                values[next[c]] = v;
                next[c] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr: counts,
            indices,
            values,
        }
    }

    /// Sparse product `self * other` (row-wise Gustavson). Exact zeros are
    /// dropped.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.n_cols != other.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: other.n_rows,
            });
        }
        let mut acc = vec![0.0; other.n_cols];
        let mut mark = vec![usize::MAX; other.n_cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut b = RowBuilder::new(other.n_cols);
        for r in 0..self.n_rows {
            touched.clear();
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&c, &v) in ocols.iter().zip(ovals) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = 0.0;
                        touched.push(c);
                    }
                    acc[c] += a * v;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                b.push(c, acc[c]);
            }
            b.finish_row();
        }
        Ok(b.build())
    }

    /// `alpha * self + beta * other`, exact zeros dropped.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Result<CsrMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows * self.n_cols,
                got: other.n_rows * other.n_cols,
            });
        }
        let mut b = RowBuilder::new(self.n_cols);
        for r in 0..self.n_rows {
            let (ac, av) = self.row(r);
            let (bc, bv) = other.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ac.len() || j < bc.len() {
                if j == bc.len() || (i < ac.len() && ac[i] < bc[j]) {
                    b.push(ac[i], alpha * av[i]);
                    i += 1;
                } else if i == ac.len() || bc[j] < ac[i] {
                    b.push(bc[j], beta * bv[j]);
                    j += 1;
                } else {
                    b.push(ac[i], alpha * av[i] + beta * bv[j]);
                    i += 1;
                    j += 1;
                }
            }
            b.finish_row();
        }
        Ok(b.build())
    }

    /// Principal-style submatrix: rows `rows`, columns mapped through
    /// `col_map` (global column -> local column); unmapped columns dropped.
    pub fn submatrix(&self, rows: &[usize], col_map: &[Option<usize>], n_cols: usize) -> CsrMatrix {
        let mut b = RowBuilder::new(n_cols);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for &r in rows {
            row.clear();
            let (cols, vals) = self.row(r);
            row.extend(cols.iter().zip(vals).filter_map(|(&c, &v)| col_map[c].map(|lc| (lc, v))));
            row.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &row {
                b.push(c, v);
            }
            b.finish_row();
        }
        b.build()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.17e}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }

    pub fn read_matrix_market<R: BufRead>(r: R) -> Result<CsrMatrix> {
        let perr = |line: usize, m: &str| Error::Parse {
            line,
            message: format!("MatrixMarket: {m}"),
        };
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
        let header = header.map_err(|e| perr(1, &e.to_string()))?.to_ascii_lowercase();
        if !header.starts_with("%%matrixmarket matrix coordinate real") {
            return Err(perr(1, "unsupported header"));
        }
        let symmetric = header.contains("symmetric");
        let mut dims: Option<(usize, usize)> = None;
        let mut trip = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| perr(i + 1, &e.to_string()))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let tok: Vec<&str> = t.split_whitespace().collect();
            if dims.is_none() {
                let p = |s: &str| s.parse::<usize>().map_err(|_| perr(i + 1, "bad size line"));
                if tok.len() != 3 {
                    return Err(perr(i + 1, "bad size line"));
                }
                dims = Some((p(tok[0])?, p(tok[1])?));
                continue;
            }
            if tok.len() != 3 {
                return Err(perr(i + 1, "bad entry"));
            }
            let rr: usize = tok[0].parse().map_err(|_| perr(i + 1, "bad row"))?;
            let cc: usize = tok[1].parse().map_err(|_| perr(i + 1, "bad column"))?;
            let v: f64 = tok[2].parse().map_err(|_| perr(i + 1, "bad value"))?;
            let (nr, nc) = dims.unwrap();
            if rr == 0 || cc == 0 || rr > nr || cc > nc {
                return Err(perr(i + 1, "entry out of range"));
            }
            trip.push((rr - 1, cc - 1, v));
            if symmetric && rr != cc {
                trip.push((cc - 1, rr - 1, v));
            }
        }
        let (nr, nc) = dims.ok_or_else(|| perr(1, "missing size line"))?;
        Ok(CsrMatrix::from_triplets(nr, nc, &trip))
    }
}

/// Incremental CSR construction; entries must be pushed in increasing
/// column order within a row. Exact zeros are skipped.
pub struct RowBuilder {
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl RowBuilder {
    pub fn new(n_cols: usize) -> Self {
        RowBuilder {
            n_cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, col: usize, value: f64) {
        if value != 0.0 {
            self.indices.push(col);
            self.values.push(value);
        }
    }

    pub fn finish_row(&mut self) {
        self.indptr.push(self.indices.len());
    }

    pub fn build(self) -> CsrMatrix {
        CsrMatrix {
            n_rows: self.indptr.len() - 1,
            n_cols: self.n_cols,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spmv_basics() {
        let x = vec![1.0, -2.0, 3.5];
        assert_eq!(CsrMatrix::identity(3).spmv(&x).unwrap(), x);
        assert_eq!(CsrMatrix::zeros(2, 3).spmv(&x).unwrap(), vec![0.0, 0.0]);
        let dense = vec![vec![2.0, 0.0, 1.0], vec![0.0, -1.0, 0.0], vec![4.0, 3.0, 0.5]];
        let a = CsrMatrix::from_dense(&dense);
        let y = a.spmv(&x).unwrap();
        for r in 0..3 {
            let expect: f64 = (0..3).map(|c| dense[r][c] * x[c]).sum();
            assert_eq!(y[r], expect);
        }
        assert!(matches!(a.spmv(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn triplets_merge_and_drop_zeros() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 1.0), (1, 0, -1.0), (0, 0, 5.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.row(0).0, &[0, 1]);
    }

    #[test]
    fn matmul_transpose_add() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0, 0.0], vec![0.0, 1.0, -1.0]]);
        let b = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 3.0], vec![2.0, 1.0]]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.to_dense(), vec![vec![1.0, 6.0], vec![-2.0, 2.0]]);
        assert_eq!(a.transpose().transpose(), a);
        let d = c.add_scaled(1.0, &CsrMatrix::identity(2), -1.0).unwrap();
        assert_eq!(d.to_dense(), vec![vec![0.0, 6.0], vec![-2.0, 1.0]]);
        assert_eq!(d.nnz(), 3);
    }

    #[test]
    fn matrix_market_round_trip() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 0.0, 1e-300], vec![0.0, -2.5, 0.0]]);
        let mut buf = Vec::new();
        a.write_matrix_market(&mut buf).unwrap();
        let b = CsrMatrix::read_matrix_market(buf.as_slice()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn new_validates() {
        assert!(CsrMatrix::new(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 2], vec![0, 1], vec![1.0, 1.0]).is_ok());
    }
}
