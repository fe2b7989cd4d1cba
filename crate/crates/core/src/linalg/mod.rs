//! Sparse storage, direct factorization and Krylov iteration.

mod gmres;
mod lu;
mod sparse;

pub use gmres::{gmres, GmresOptions};
pub use lu::{lu_factor, LuFactorization, PROBE_TOLERANCE};
pub use sparse::{CsrMatrix, RowBuilder};

/// A square linear map.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Approximate inverse applied as `z = M^{-1} r`.
pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y).expect("operator dimensions");
    }
}

impl Preconditioner for LuFactorization {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.solve_in_place(z);
    }
}
