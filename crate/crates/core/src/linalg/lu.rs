//! Sparse LU factorization backed by faer (COLAMD column ordering,
//! supernodal elimination, partial row pivoting). Rows are scaled to unit
//! max-norm before factorizing so that pivoting is not misled by rows that
//! are small but well posed.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMat, Triplet};
use faer::MatMut;

use super::CsrMatrix;
use crate::error::{Error, Result};

/// A factorized solve is rejected when its probe residual exceeds this
/// fraction of the probe norm.
pub const PROBE_TOLERANCE: f64 = 1e-8;

/// Cached factorization of a square sparse matrix.
#[derive(Clone, Debug)]
pub struct LuFactorization {
    n: usize,
    row_scale: Vec<f64>,
    inner: Option<faer::sparse::linalg::solvers::Lu<usize, f64>>,
}

impl LuFactorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Overwrites `b` with `A^{-1} b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n, "right-hand side length");
        b.iter_mut().zip(&self.row_scale).for_each(|(v, s)| *v *= s);
        if let Some(lu) = &self.inner {
            lu.solve_in_place(MatMut::from_column_major_slice_mut(b, self.n, 1));
        }
    }
}

/// Factorizes `a` and checks the factors on a deterministic probe vector.
/// The probe is the right-hand side of the row-scaled system.
///
/// Numerically singular matrices surface as a non-finite or inaccurate
/// probe solve rather than through pivot inspection.
pub fn lu_factor(a: &CsrMatrix) -> Result<LuFactorization> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.n_cols(),
        });
    }
    if n == 0 {
        return Ok(LuFactorization {
            n,
            row_scale: Vec::new(),
            inner: None,
        });
    }
    let mut triplets = Vec::with_capacity(a.nnz());
    let mut row_scale = Vec::with_capacity(n);
    for r in 0..n {
        let (cols, vals) = a.row(r);
        let max = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 || !max.is_finite() {
            return Err(Error::SingularMatrix {
                reason: format!("row {r} is empty or not finite"),
            });
        }
        row_scale.push(1.0 / max);
        triplets.extend(cols.iter().zip(vals).map(|(&c, &v)| Triplet::new(r, c, v / max)));
    }
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::SingularMatrix { reason: format!("{e:?}") })?;
    let lu = mat.as_ref().sp_lu().map_err(|e| match e {
        LuError::SymbolicSingular { index } => Error::SingularMatrix {
            reason: format!("structurally singular at column {index}"),
        },
        LuError::Generic(e) => Error::SingularMatrix { reason: format!("{e:?}") },
    })?;
    let factor = LuFactorization {
        n,
        row_scale,
        inner: Some(lu),
    };

    let probe: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0).collect();
    let x = factor.solve(&probe);
    let ax = a.spmv(&x)?;
    let scaled_res: Vec<f64> = ax
        .iter()
        .zip(&probe)
        .zip(&factor.row_scale)
        .map(|((p, q), s)| s * (p - q))
        .collect();
    let res = crate::report::norm2(&scaled_res);
    let scaled_probe: Vec<f64> = probe.iter().zip(&factor.row_scale).map(|(q, s)| q * s).collect();
    let rel = res / crate::report::norm2(&scaled_probe);
    if !rel.is_finite() || rel > PROBE_TOLERANCE {
        return Err(Error::SingularMatrix {
            reason: format!("probe solve relative residual {rel:e}"),
        });
    }
    Ok(factor)
}
