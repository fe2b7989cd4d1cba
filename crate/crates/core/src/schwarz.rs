//! Stationary restricted Schwarz iteration (RAS with Dirichlet, ORAS with
//! Robin transmission), its one-sweep preconditioner form, and the
//! non-overlapping block-Jacobi baseline.

use web_time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{gmres, lu_factor, CsrMatrix, GmresOptions, LuFactorization, Preconditioner};
use crate::partition::DisjointPartition;
use crate::report::{norm2, SolveReport, Termination};
use crate::subdomain::Subdomain;

/// Residual growth beyond this factor aborts the stationary iteration.
pub const DIVERGENCE_FACTOR: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchwarzOptions {
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for SchwarzOptions {
    fn default() -> Self {
        SchwarzOptions {
            rtol: 1e-6,
            max_iter: 10_000,
        }
    }
}

/// Checks that the owned sets of the subdomains partition `0..n`.
pub fn audit_ownership(subdomains: &[Subdomain], n: usize) -> Result<()> {
    let mut owner = vec![usize::MAX; n];
    for s in subdomains {
        for &(_, g) in s.owned() {
            if g >= n || owner[g] != usize::MAX {
                return Err(Error::InvalidConfig(format!(
                    "node {g} is updated by more than one subdomain or lies outside the problem"
                )));
            }
            owner[g] = s.id();
        }
    }
    match owner.iter().position(|&o| o == usize::MAX) {
        Some(g) => Err(Error::InvalidConfig(format!("node {g} is updated by no subdomain"))),
        None => Ok(()),
    }
}

/// `z = sum_j R~_j^T A_j^{-1} R_j r`: one additive sweep, restricted update.
fn schwarz_sweep(subdomains: &[Subdomain], r: &[f64], z: &mut [f64]) -> Result<()> {
    let corrections = crate::parallel::map(subdomains, |s| s.local_solve(&s.local_rhs(r)));
    for (s, v) in subdomains.iter().zip(corrections) {
        s.scatter_owned(&v?, z);
    }
    Ok(())
}

fn residual(a: &CsrMatrix, f: &[f64], u: &[f64], r: &mut [f64]) -> Result<()> {
    a.spmv_into(u, r)?;
    r.iter_mut().zip(f).for_each(|(ri, fi)| *ri = fi - *ri);
    Ok(())
}

/// Stationary Schwarz iteration in correction form.
///
/// Stops when `||f - A u|| <= rtol ||f - A u0||`. Hitting `max_iter` returns
/// the last iterate with `converged == false`.
pub fn schwarz_solve(
    a: &CsrMatrix,
    f: &[f64],
    subdomains: &[Subdomain],
    opts: &SchwarzOptions,
    u0: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let n = a.n_rows();
    if f.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: f.len() });
    }
    if !(opts.rtol > 0.0 && opts.rtol < 1.0) {
        return Err(Error::InvalidConfig(format!("rtol must lie in (0, 1), got {}", opts.rtol)));
    }
    audit_ownership(subdomains, n)?;
    let mut u = match u0 {
        Some(u0) if u0.len() != n => return Err(Error::DimensionMismatch { expected: n, got: u0.len() }),
        Some(u0) => u0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    residual(a, f, &u, &mut r)?;
    let r0 = norm2(&r);
    let mut history = vec![r0];
    let mut iterations = 0;
    let mut converged = r0 == 0.0;
    while !converged && iterations < opts.max_iter {
        schwarz_sweep(subdomains, &r, &mut u)?;
        iterations += 1;
        residual(a, f, &u, &mut r)?;
        let rn = norm2(&r);
        history.push(rn);
        if !rn.is_finite() || rn > DIVERGENCE_FACTOR * r0 {
            return Err(Error::Diverged {
                iteration: iterations,
                growth: rn / r0,
            });
        }
        converged = rn <= opts.rtol * r0;
    }
    let report = SolveReport {
        iterations,
        residual_history: history,
        converged,
        termination: if converged { Termination::Converged } else { Termination::MaxIterations },
        wall_time: start.elapsed().as_secs_f64(),
        config: None,
    };
    Ok((u, report))
}

/// One Schwarz sweep as a preconditioner for a Krylov method.
pub struct SchwarzPreconditioner<'a> {
    subdomains: &'a [Subdomain],
}

impl<'a> SchwarzPreconditioner<'a> {
    pub fn new(subdomains: &'a [Subdomain], n: usize) -> Result<Self> {
        audit_ownership(subdomains, n)?;
        Ok(SchwarzPreconditioner { subdomains })
    }
}

impl Preconditioner for SchwarzPreconditioner<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
        schwarz_sweep(self.subdomains, r, z).expect("local systems are sized by construction");
    }
}

/// Independent factorized diagonal blocks of `A`, one per part.
pub struct BlockJacobi {
    blocks: Vec<(Vec<usize>, LuFactorization)>,
}

/// Factorizes the principal submatrix of every part.
pub fn block_jacobi_baseline(a: &CsrMatrix, partition: &DisjointPartition) -> Result<BlockJacobi> {
    let n = a.n_rows();
    if partition.labels().len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: partition.labels().len(),
        });
    }
    let parts: Vec<usize> = (0..partition.n_parts()).collect();
    let blocks = crate::parallel::map(&parts, |&j| {
        let members = partition.members(j);
        let mut col_map = vec![None; n];
        for (k, &g) in members.iter().enumerate() {
            col_map[g] = Some(k);
        }
        let block = a.submatrix(&members, &col_map, members.len());
        let lu = lu_factor(&block).map_err(|_| Error::SingularBlock { block: j })?;
        Ok((members, lu))
    });
    Ok(BlockJacobi {
        blocks: blocks.into_iter().collect::<Result<_>>()?,
    })
}

impl Preconditioner for BlockJacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let solved = crate::parallel::map(&self.blocks, |(members, lu)| {
            let local: Vec<f64> = members.iter().map(|&g| r[g]).collect();
            lu.solve(&local)
        });
        for ((members, _), x) in self.blocks.iter().zip(solved) {
            for (&g, v) in members.iter().zip(x) {
                z[g] = v;
            }
        }
    }
}

/// How the global system is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMode {
    Stationary,
    GmresPreconditioned,
    BlockJacobiGmres,
}

impl SolverMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stationary" => Some(SolverMode::Stationary),
            "gmres-preconditioned" => Some(SolverMode::GmresPreconditioned),
            "block-jacobi-gmres" => Some(SolverMode::BlockJacobiGmres),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverMode::Stationary => "stationary",
            SolverMode::GmresPreconditioned => "gmres-preconditioned",
            SolverMode::BlockJacobiGmres => "block-jacobi-gmres",
        }
    }
}

/// Runs `mode` on `A u = f`. Subdomains are only used by the Schwarz modes
/// and the partition only by block-Jacobi.
pub fn solve_with_mode(
    mode: SolverMode,
    a: &CsrMatrix,
    f: &[f64],
    subdomains: &[Subdomain],
    partition: &DisjointPartition,
    rtol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let gmres_opts = GmresOptions {
        rtol,
        max_iter,
        ..GmresOptions::default()
    };
    match mode {
        SolverMode::Stationary => schwarz_solve(a, f, subdomains, &SchwarzOptions { rtol, max_iter }, None),
        SolverMode::GmresPreconditioned => {
            let m = SchwarzPreconditioner::new(subdomains, a.n_rows())?;
            gmres(a, f, Some(&m), &gmres_opts)
        }
        SolverMode::BlockJacobiGmres => {
            let m = block_jacobi_baseline(a, partition)?;
            gmres(a, f, Some(&m), &gmres_opts)
        }
    }
}
