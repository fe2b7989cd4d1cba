//! Restarted GMRES with right preconditioning.
//!
//! Right preconditioning keeps the Arnoldi residual equal to the true
//! residual of the unpreconditioned system, so `rtol` means the same thing
//! with and without a preconditioner.

use web_time::Instant;

use super::{LinearOperator, Preconditioner};
use crate::error::{Error, Result};
use crate::report::{norm2, SolveReport, Termination};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOptions {
    pub rtol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            rtol: 1e-6,
            restart: 30,
            max_iter: 10_000,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Solves `A x = b` from a zero initial guess.
///
/// Reaching `max_iter` is not an error: the last iterate is returned with
/// `converged == false`.
pub fn gmres(
    a: &dyn LinearOperator,
    b: &[f64],
    precond: Option<&dyn Preconditioner>,
    opts: &GmresOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if !(opts.rtol > 0.0 && opts.rtol < 1.0) || opts.restart == 0 {
        return Err(Error::InvalidConfig(format!(
            "GMRES needs 0 < rtol < 1 and restart >= 1 (got rtol {}, restart {})",
            opts.rtol, opts.restart
        )));
    }
    let m = opts.restart;
    let bnorm = norm2(b);
    let target = opts.rtol * bnorm;
    let mut x = vec![0.0; n];
    let mut history = vec![bnorm];
    let mut iterations = 0usize;

    let finish = |x: Vec<f64>, history: Vec<f64>, iterations: usize, converged: bool| {
        let report = SolveReport {
            iterations,
            residual_history: history,
            converged,
            termination: if converged { Termination::Converged } else { Termination::MaxIterations },
            wall_time: start.elapsed().as_secs_f64(),
            config: None,
        };
        Ok((x, report))
    };
    if bnorm == 0.0 {
        return finish(x, history, 0, true);
    }

    let mut r = b.to_vec();
    let mut tmp = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut beta = bnorm;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hess = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
    let mut g = vec![0.0; m + 1];

    loop {
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k = 0;
        let mut breakdown = false;
        while k < m && iterations < opts.max_iter {
            // w = A M^{-1} v_k
            let w_in: &[f64] = match precond {
                Some(p) => {
                    p.apply(&basis[k], &mut z);
                    &z
                }
                None => &basis[k],
            };
            a.apply(w_in, &mut tmp);
            let wnorm0 = norm2(&tmp);
            for i in 0..=k {
                let h = dot(&tmp, &basis[i]);
                hess[i][k] = h;
                tmp.iter_mut().zip(&basis[i]).for_each(|(t, v)| *t -= h * v);
            }
            let hnext = norm2(&tmp);
            hess[k + 1][k] = hnext;
            for i in 0..k {
                let (c, s) = (cs[i], sn[i]);
                let (h0, h1) = (hess[i][k], hess[i + 1][k]);
                hess[i][k] = c * h0 + s * h1;
                hess[i + 1][k] = -s * h0 + c * h1;
            }
            let (c, s) = givens(hess[k][k], hess[k + 1][k]);
            cs[k] = c;
            sn[k] = s;
            hess[k][k] = c * hess[k][k] + s * hess[k + 1][k];
            hess[k + 1][k] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            iterations += 1;
            k += 1;
            history.push(g[k].abs());
            if g[k].abs() <= target {
                break;
            }
            if hnext <= 1e-14 * wnorm0 {
                breakdown = true;
                break;
            }
            basis.push(tmp.iter().map(|v| v / hnext).collect());
        }

        // y = H^{-1} g, x += M^{-1} V y
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        tmp.iter_mut().for_each(|v| *v = 0.0);
        for (yi, vi) in y.iter().zip(&basis) {
            tmp.iter_mut().zip(vi).for_each(|(t, v)| *t += yi * v);
        }
        match precond {
            Some(p) => {
                p.apply(&tmp, &mut z);
                x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
            }
            None => x.iter_mut().zip(&tmp).for_each(|(xi, ti)| *xi += ti),
        }

        a.apply(&x, &mut tmp);
        r.iter_mut().zip(b.iter().zip(&tmp)).for_each(|(ri, (bi, ai))| *ri = bi - ai);
        beta = norm2(&r);
        *history.last_mut().unwrap() = beta;
        if beta <= target {
            return finish(x, history, iterations, true);
        }
        if breakdown {
            return Err(Error::Breakdown { iteration: iterations });
        }
        if iterations >= opts.max_iter {
            return finish(x, history, iterations, false);
        }
    }
}
