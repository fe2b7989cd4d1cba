//! Browser demo on the unit circle: partition roles, a single solve with
//! its residual history, and a Robin weight scan. Each operation has a
//! plain Rust form returning a serializable struct and a wasm-bindgen
//! wrapper returning JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cpm_dd::operators::{sample_rhs, GlobalOperators, RhsPreset};
use cpm_dd::partition::{build_graph, edge_cut, partition, DisjointPartition, PartitionOptions};
use cpm_dd::schwarz::{solve_with_mode, SolverMode};
use cpm_dd::subdomain::{build_subdomains, grow_subdomain, TransmissionCondition};
use cpm_dd::{build_band, Band, Surface};

/// Coarsest and finest grid spacings the demo accepts.
pub const DX_RANGE: (f64, f64) = (0.02, 0.25);
pub const MAX_ITER: usize = 2000;

struct Circle {
    band: Band,
    ops: GlobalOperators,
    f: Vec<f64>,
    part: DisjointPartition,
}

fn setup(dx: f64, n_sub: usize) -> Result<Circle, String> {
    if !(DX_RANGE.0..=DX_RANGE.1).contains(&dx) {
        return Err(format!("dx must lie in [{}, {}]", DX_RANGE.0, DX_RANGE.1));
    }
    let s = Surface::circle([0.0, 0.0], 1.0).map_err(|e| e.to_string())?;
    let band = build_band(&s, dx, 2, &s.default_seeds()).map_err(|e| e.to_string())?;
    let ops = GlobalOperators::assemble(&band, 1.0).map_err(|e| e.to_string())?;
    let f = sample_rhs(&band, |y| RhsPreset::EigenCircle.value(y, 1.0));
    let part = partition(&build_graph(&band), n_sub, &PartitionOptions::default()).map_err(|e| e.to_string())?;
    Ok(Circle { band, ops, f, part })
}

fn transmission(robin: bool, alpha: f64) -> Result<TransmissionCondition, String> {
    let tc = if robin { TransmissionCondition::Robin { alpha } } else { TransmissionCondition::Dirichlet };
    tc.validate().map_err(|e| e.to_string())?;
    Ok(tc)
}

#[derive(Clone, Debug, Serialize)]
pub struct RoleNode {
    pub x: f64,
    pub y: f64,
    /// owning part, absent for ghost nodes
    pub label: Option<usize>,
    pub role: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct RoleView {
    pub dx: f64,
    pub n_active: usize,
    pub n_ghost: usize,
    pub part_sizes: Vec<usize>,
    pub edge_cut: usize,
    pub balance: f64,
    pub nodes: Vec<RoleNode>,
}

/// Every band node with its part label and its role in `subdomain`.
pub fn partition_roles(dx: f64, n_sub: usize, n_overlap: usize, subdomain: usize, robin: bool) -> Result<RoleView, String> {
    let c = setup(dx, n_sub)?;
    if subdomain >= n_sub {
        return Err(format!("subdomain must be below {n_sub}"));
    }
    let tc = transmission(robin, 1.0)?;
    let sets = grow_subdomain(&c.band, &c.part, subdomain, n_overlap, &tc).map_err(|e| e.to_string())?;
    let nodes = sets
        .roles(&c.band)
        .iter()
        .enumerate()
        .map(|(i, role)| {
            let p = c.band.node_position(i);
            RoleNode {
                x: p[0],
                y: p[1],
                label: c.band.is_active(i).then(|| c.part.labels()[i]),
                role: role.label(),
            }
        })
        .collect();
    Ok(RoleView {
        dx,
        n_active: c.band.n_active(),
        n_ghost: c.band.n_ghost(),
        part_sizes: c.part.part_sizes(),
        edge_cut: edge_cut(&build_graph(&c.band), c.part.labels()),
        balance: c.part.balance(),
        nodes,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveView {
    pub iterations: usize,
    pub converged: bool,
    /// `converged`, `max_iterations` or `diverged`
    pub status: String,
    /// residual norms relative to the first one
    pub residuals: Vec<f64>,
    /// closest-point angle and value per active node, sorted by angle
    pub angle: Vec<f64>,
    pub u: Vec<f64>,
    pub exact: Vec<f64>,
    pub max_error: f64,
}

fn mode_of(name: &str) -> Result<SolverMode, String> {
    SolverMode::parse(name).ok_or_else(|| format!("unknown mode {name:?}"))
}

/// Solves `(1 - Delta_S) u = 2 sin(theta)` on the unit circle.
pub fn solve(dx: f64, n_sub: usize, n_overlap: usize, robin: bool, alpha: f64, mode: &str) -> Result<SolveView, String> {
    let mode = mode_of(mode)?;
    let tc = transmission(robin, alpha)?;
    let c = setup(dx, n_sub)?;
    let subs = if mode == SolverMode::BlockJacobiGmres {
        Vec::new()
    } else {
        build_subdomains(&c.band, &c.ops, &c.part, n_overlap, tc).map_err(|e| e.to_string())?
    };
    let (u, rep) = match solve_with_mode(mode, &c.ops.helmholtz, &c.f, &subs, &c.part, 1e-6, MAX_ITER) {
        Ok(out) => out,
        Err(cpm_dd::Error::Diverged { iteration, .. }) => {
            return Ok(SolveView {
                iterations: iteration,
                converged: false,
                status: "diverged".into(),
                residuals: Vec::new(),
                angle: Vec::new(),
                u: Vec::new(),
                exact: Vec::new(),
                max_error: f64::NAN,
            })
        }
        Err(e) => return Err(e.to_string()),
    };
    let r0 = rep.initial_residual();
    let residuals = rep.residual_history.iter().map(|r| if r0 > 0.0 { r / r0 } else { 0.0 }).collect();
    let mut samples: Vec<(f64, f64, f64)> = c
        .band
        .active()
        .iter()
        .zip(&u)
        .map(|(n, &v)| {
            let y = n.query.closest_point;
            (y[1].atan2(y[0]), v, RhsPreset::EigenCircle.exact(y).unwrap_or(f64::NAN))
        })
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let max_error = samples.iter().map(|s| (s.1 - s.2).abs()).fold(0.0, f64::max);
    Ok(SolveView {
        iterations: rep.iterations,
        converged: rep.converged,
        status: if rep.converged { "converged".into() } else { "max_iterations".into() },
        residuals,
        angle: samples.iter().map(|s| s.0).collect(),
        u: samples.iter().map(|s| s.1).collect(),
        exact: samples.iter().map(|s| s.2).collect(),
        max_error,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanPoint {
    pub alpha: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaScan {
    /// stationary RAS iterations on the same partition
    pub ras_iterations: usize,
    pub points: Vec<ScanPoint>,
}

/// Stationary ORAS iterations for each Robin weight, next to RAS.
pub fn alpha_scan(dx: f64, n_sub: usize, n_overlap: usize, alphas: &[f64]) -> Result<AlphaScan, String> {
    if alphas.is_empty() {
        return Err("no alpha values given".into());
    }
    for &a in alphas {
        transmission(true, a)?;
    }
    let c = setup(dx, n_sub)?;
    let run = |tc| -> Result<ScanPoint, String> {
        let subs = build_subdomains(&c.band, &c.ops, &c.part, n_overlap, tc).map_err(|e| e.to_string())?;
        let alpha = match tc {
            TransmissionCondition::Robin { alpha } => alpha,
            TransmissionCondition::Dirichlet => f64::INFINITY,
        };
        Ok(
            match solve_with_mode(SolverMode::Stationary, &c.ops.helmholtz, &c.f, &subs, &c.part, 1e-6, MAX_ITER) {
                Ok((_, rep)) => ScanPoint {
                    alpha,
                    iterations: rep.iterations,
                    converged: rep.converged,
                    status: if rep.converged { "converged".into() } else { "max_iterations".into() },
                },
                Err(cpm_dd::Error::Diverged { iteration, .. }) => ScanPoint {
                    alpha,
                    iterations: iteration,
                    converged: false,
                    status: "diverged".into(),
                },
                Err(e) => return Err(e.to_string()),
            },
        )
    };
    let ras = run(TransmissionCondition::Dirichlet)?;
    let points = alphas
        .iter()
        .map(|&alpha| run(TransmissionCondition::Robin { alpha }))
        .collect::<Result<_, _>>()?;
    Ok(AlphaScan {
        ras_iterations: ras.iterations,
        points,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    let value = r.map_err(|e| JsValue::from_str(&e))?;
    serde_json::to_string(&value).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = partitionRoles)]
pub fn partition_roles_js(dx: f64, n_sub: usize, n_overlap: usize, subdomain: usize, robin: bool) -> Result<String, JsValue> {
    to_js(partition_roles(dx, n_sub, n_overlap, subdomain, robin))
}

#[wasm_bindgen(js_name = solveCircle)]
pub fn solve_js(dx: f64, n_sub: usize, n_overlap: usize, robin: bool, alpha: f64, mode: &str) -> Result<String, JsValue> {
    to_js(solve(dx, n_sub, n_overlap, robin, alpha, mode))
}

#[wasm_bindgen(js_name = alphaScan)]
pub fn alpha_scan_js(dx: f64, n_sub: usize, n_overlap: usize, alphas: Vec<f64>) -> Result<String, JsValue> {
    to_js(alpha_scan(dx, n_sub, n_overlap, &alphas))
}
