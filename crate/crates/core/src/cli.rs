//! Command-line front end: solves, parameter sweeps, partition dumps and
//! matrix export. Configuration comes from a flat `key=value` file plus
//! flags, and flags win.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::band::{build_band, Band};
use crate::error::{Error, Result};
use crate::geometry::{Surface, TriMesh};
use crate::operators::{sample_rhs, GlobalOperators, RhsPreset, MAX_DEGREE};
use crate::partition::{build_graph, edge_cut, import_partition, partition, DisjointPartition, PartitionOptions};
use crate::report::SolveReport;
use crate::schwarz::{solve_with_mode, SolverMode};
use crate::subdomain::{build_subdomains, grow_subdomain, TransmissionCondition};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Axis along which `scale_height` measures a mesh.
const HEIGHT_AXIS: usize = 1;

#[derive(Parser, Debug)]
#[command(name = "cpm-dd", version, about = "Closest point surface Helmholtz solver with RAS/ORAS")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one problem and write solution, residual history and summary.
    Solve(RunArgs),
    /// Solve over every combination of the sweep lists and write sweep.csv.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        lists: SweepArgs,
    },
    /// Write per-node partition labels and subdomain roles.
    PartitionInfo {
        #[command(flatten)]
        run: RunArgs,
        /// Subdomain whose node roles are written.
        #[arg(long, default_value_t = 0)]
        subdomain: usize,
    },
    /// Write the global matrix and right-hand side in MatrixMarket form.
    ExportMatrix(RunArgs),
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to the defaults of [`RunConfig`].
#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// Flat key=value file. Keys are the long flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// circle, sphere, torus or mesh
    #[arg(long)]
    pub surface: Option<String>,
    /// OFF or OBJ file; implies --surface mesh
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Rescale the mesh to this height along y and center its bounding box
    #[arg(long)]
    pub scale_height: Option<f64>,
    /// Circle/sphere radius, torus major radius
    #[arg(long)]
    pub radius: Option<f64>,
    /// Torus minor radius
    #[arg(long)]
    pub minor_radius: Option<f64>,
    #[arg(long)]
    pub dx: Option<f64>,
    /// Interpolation degree
    #[arg(long)]
    pub degree: Option<usize>,
    /// Helmholtz shift
    #[arg(long)]
    pub c: Option<f64>,
    /// eigen-circle, eigen-sphere or bunny-spherical
    #[arg(long)]
    pub rhs: Option<String>,
    /// Number of subdomains
    #[arg(long)]
    pub nsub: Option<usize>,
    /// Number of overlap layers
    #[arg(long)]
    pub noverlap: Option<usize>,
    /// dirichlet (RAS) or robin (ORAS)
    #[arg(long)]
    pub tc: Option<String>,
    /// Robin weight
    #[arg(long)]
    pub alpha: Option<f64>,
    /// stationary, gmres-preconditioned or block-jacobi-gmres
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Partitioner seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cap on worker threads
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use these labels instead of the built-in partitioner
    #[arg(long)]
    pub partition_file: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct SweepArgs {
    /// Subdomain counts, comma separated (default: --nsub)
    #[arg(long, value_delimiter = ',')]
    pub sweep_nsub: Vec<usize>,
    /// Overlap counts (default: --noverlap)
    #[arg(long, value_delimiter = ',')]
    pub sweep_noverlap: Vec<usize>,
    /// Robin weights (default: --alpha)
    #[arg(long, value_delimiter = ',')]
    pub sweep_alpha: Vec<f64>,
    /// Transmission conditions (default: --tc)
    #[arg(long, value_delimiter = ',')]
    pub sweep_tc: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceSpec {
    Circle { radius: f64 },
    Sphere { radius: f64 },
    Torus { major: f64, minor: f64 },
    Mesh { path: PathBuf, scale_height: Option<f64> },
}

/// A validated run description.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub surface: SurfaceSpec,
    pub dx: f64,
    pub degree: usize,
    pub c: f64,
    pub rhs: String,
    pub n_subdomains: usize,
    pub n_overlap: usize,
    pub transmission: String,
    pub alpha: Option<f64>,
    pub mode: String,
    pub rtol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub partition_file: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

/// Reads a flat `key=value` file. Blank lines and `#` comments are skipped,
/// and keys may use `-` or `_`.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        map.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(map)
}

impl RunArgs {
    /// Fills unset flags from a key=value map.
    fn merge_file(mut self, file: &BTreeMap<String, String>) -> Result<Self> {
        fn take<T: std::str::FromStr>(slot: &mut Option<T>, file: &BTreeMap<String, String>, key: &str) -> Result<()> {
            if slot.is_none() {
                if let Some(v) = file.get(key) {
                    *slot = Some(v.parse().map_err(|_| invalid(format!("config key {key}: cannot parse {v:?}")))?);
                }
            }
            Ok(())
        }
        const KNOWN: [&str; 20] = [
            "surface",
            "mesh",
            "scale-height",
            "radius",
            "minor-radius",
            "dx",
            "degree",
            "c",
            "rhs",
            "nsub",
            "noverlap",
            "tc",
            "alpha",
            "mode",
            "rtol",
            "max-iter",
            "seed",
            "threads",
            "out",
            "partition-file",
        ];
        if let Some(k) = file.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(invalid(format!("unknown config key {k:?}")));
        }
        take(&mut self.surface, file, "surface")?;
        take(&mut self.mesh, file, "mesh")?;
        take(&mut self.scale_height, file, "scale-height")?;
        take(&mut self.radius, file, "radius")?;
        take(&mut self.minor_radius, file, "minor-radius")?;
        take(&mut self.dx, file, "dx")?;
        take(&mut self.degree, file, "degree")?;
        take(&mut self.c, file, "c")?;
        take(&mut self.rhs, file, "rhs")?;
        take(&mut self.nsub, file, "nsub")?;
        take(&mut self.noverlap, file, "noverlap")?;
        take(&mut self.tc, file, "tc")?;
        take(&mut self.alpha, file, "alpha")?;
        take(&mut self.mode, file, "mode")?;
        take(&mut self.rtol, file, "rtol")?;
        take(&mut self.max_iter, file, "max-iter")?;
        take(&mut self.seed, file, "seed")?;
        take(&mut self.threads, file, "threads")?;
        take(&mut self.out, file, "out")?;
        take(&mut self.partition_file, file, "partition-file")?;
        Ok(self)
    }

    /// Merges the config file (if any), applies defaults and validates.
    pub fn resolve(&self) -> Result<RunConfig> {
        let args = match &self.config {
            Some(path) => self.clone().merge_file(&read_config_file(path)?)?,
            None => self.clone(),
        };
        let kind = match (&args.surface, &args.mesh) {
            (Some(s), _) => s.clone(),
            (None, Some(_)) => "mesh".to_string(),
            (None, None) => "sphere".to_string(),
        };
        let radius = args.radius.unwrap_or(1.0);
        let surface = match kind.as_str() {
            "circle" => SurfaceSpec::Circle { radius },
            "sphere" => SurfaceSpec::Sphere { radius },
            "torus" => SurfaceSpec::Torus {
                major: radius,
                minor: args.minor_radius.unwrap_or(0.4 * radius),
            },
            "mesh" => SurfaceSpec::Mesh {
                path: args.mesh.clone().ok_or_else(|| invalid("surface mesh needs --mesh"))?,
                scale_height: args.scale_height,
            },
            other => return Err(invalid(format!("unknown surface {other:?}"))),
        };
        let default_rhs = match surface {
            SurfaceSpec::Circle { .. } => "eigen-circle",
            SurfaceSpec::Sphere { .. } => "eigen-sphere",
            _ => "bunny-spherical",
        };
        let cfg = RunConfig {
            surface,
            dx: args.dx.unwrap_or(0.1),
            degree: args.degree.unwrap_or(2),
            c: args.c.unwrap_or(1.0),
            rhs: args.rhs.clone().unwrap_or_else(|| default_rhs.to_string()),
            n_subdomains: args.nsub.unwrap_or(8),
            n_overlap: args.noverlap.unwrap_or(4),
            transmission: args.tc.clone().unwrap_or_else(|| "dirichlet".to_string()),
            alpha: args.alpha,
            mode: args.mode.clone().unwrap_or_else(|| "stationary".to_string()),
            rtol: args.rtol.unwrap_or(1e-6),
            max_iter: args.max_iter.unwrap_or(10_000),
            seed: args.seed.unwrap_or(0),
            threads: args.threads,
            out: args.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            partition_file: args.partition_file.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    /// Checks every constraint that can be checked without building anything.
    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(invalid(format!("dx must be positive (got {})", self.dx)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid(format!("c must be positive (got {})", self.c)));
        }
        if self.degree == 0 || self.degree > MAX_DEGREE {
            return Err(invalid(format!("degree must lie in 1..={MAX_DEGREE} (got {})", self.degree)));
        }
        if self.n_subdomains == 0 {
            return Err(invalid("nsub must be at least 1"));
        }
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(invalid(format!("rtol must lie in (0, 1) (got {})", self.rtol)));
        }
        if self.max_iter == 0 {
            return Err(invalid("max-iter must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads must be at least 1"));
        }
        match &self.surface {
            SurfaceSpec::Circle { radius } | SurfaceSpec::Sphere { radius } if !(*radius > 0.0) => {
                return Err(invalid(format!("radius must be positive (got {radius})")));
            }
            SurfaceSpec::Torus { major, minor } if !(*minor > 0.0 && major > minor) => {
                return Err(invalid(format!("torus radii need 0 < minor < major (got {major}, {minor})")));
            }
            SurfaceSpec::Mesh { scale_height: Some(h), .. } if !(*h > 0.0) => {
                return Err(invalid(format!("scale-height must be positive (got {h})")));
            }
            _ => {}
        }
        RhsPreset::parse(&self.rhs).ok_or_else(|| invalid(format!("unknown rhs preset {:?}", self.rhs)))?;
        let mode = self.solver_mode()?;
        let tc = self.transmission_condition()?;
        if mode != SolverMode::BlockJacobiGmres {
            check_overlap(&tc, self.n_overlap)?;
        }
        Ok(())
    }

    pub fn solver_mode(&self) -> Result<SolverMode> {
        SolverMode::parse(&self.mode).ok_or_else(|| invalid(format!("unknown mode {:?}", self.mode)))
    }

    pub fn transmission_condition(&self) -> Result<TransmissionCondition> {
        TransmissionCondition::from_kind(&self.transmission, self.alpha)
    }

    /// One-line `key=value` echo, enough to repeat the run.
    pub fn echo(&self) -> String {
        let surface = match &self.surface {
            SurfaceSpec::Circle { radius } => format!("surface=circle radius={radius}"),
            SurfaceSpec::Sphere { radius } => format!("surface=sphere radius={radius}"),
            SurfaceSpec::Torus { major, minor } => format!("surface=torus radius={major} minor-radius={minor}"),
            SurfaceSpec::Mesh { path, scale_height } => match scale_height {
                Some(h) => format!("surface=mesh mesh={} scale-height={h}", path.display()),
                None => format!("surface=mesh mesh={}", path.display()),
            },
        };
        let mut s = format!(
            "{surface} dx={} degree={} c={} rhs={} nsub={} noverlap={} tc={}",
            self.dx, self.degree, self.c, self.rhs, self.n_subdomains, self.n_overlap, self.transmission
        );
        if let Some(a) = self.alpha {
            let _ = write!(s, " alpha={a}");
        }
        let _ = write!(s, " mode={} rtol={} max-iter={} seed={}", self.mode, self.rtol, self.max_iter, self.seed);
        if let Some(p) = &self.partition_file {
            let _ = write!(s, " partition-file={}", p.display());
        }
        s
    }

    pub fn build_surface(&self) -> Result<Surface> {
        match &self.surface {
            SurfaceSpec::Circle { radius } => Surface::circle([0.0, 0.0], *radius),
            SurfaceSpec::Sphere { radius } => Surface::sphere([0.0; 3], *radius),
            SurfaceSpec::Torus { major, minor } => Surface::torus([0.0; 3], *major, *minor),
            SurfaceSpec::Mesh { path, scale_height } => {
                let mesh = TriMesh::load(path)?.scaled_and_centered(*scale_height, HEIGHT_AXIS)?;
                Ok(Surface::mesh(mesh))
            }
        }
    }
}

fn check_overlap(tc: &TransmissionCondition, n_overlap: usize) -> Result<()> {
    if matches!(tc, TransmissionCondition::Robin { .. }) && n_overlap < 2 {
        return Err(invalid(format!("robin transmission needs noverlap >= 2 (got {n_overlap})")));
    }
    Ok(())
}

/// Band, operators and right-hand side shared by every subcommand.
struct Problem {
    band: Band,
    ops: GlobalOperators,
    rhs: Vec<f64>,
    preset: RhsPreset,
    band_seconds: f64,
    operator_seconds: f64,
}

impl Problem {
    fn build(cfg: &RunConfig) -> Result<Self> {
        let t = Instant::now();
        let surface = cfg.build_surface()?;
        let band = build_band(&surface, cfg.dx, cfg.degree, &surface.default_seeds())?;
        let band_seconds = t.elapsed().as_secs_f64();
        log::info!("band: N_A={} N_G={} ({band_seconds:.2}s)", band.n_active(), band.n_ghost());
        let t = Instant::now();
        let ops = GlobalOperators::assemble(&band, cfg.c)?;
        let preset = RhsPreset::parse(&cfg.rhs).expect("validated");
        let rhs = sample_rhs(&band, |y| preset.value(y, cfg.c));
        let operator_seconds = t.elapsed().as_secs_f64();
        Ok(Problem {
            band,
            ops,
            rhs,
            preset,
            band_seconds,
            operator_seconds,
        })
    }

}

fn make_partition(cfg: &RunConfig, band: &Band, n_parts: usize) -> Result<DisjointPartition> {
    match &cfg.partition_file {
        Some(path) => import_partition(path, band.n_active(), Some(n_parts)),
        None => partition(
            &build_graph(band),
            n_parts,
            &PartitionOptions {
                seed: cfg.seed,
                ..PartitionOptions::default()
            },
        ),
    }
}

/// Result of one solve as recorded in `summary.json`.
#[derive(Clone, Debug, Serialize)]
pub struct SolveSummary {
    pub config: RunConfig,
    pub config_echo: String,
    pub n_active: usize,
    pub n_ghost: usize,
    pub n_subdomains: usize,
    pub edge_cut: usize,
    pub balance: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `converged`, `max_iterations` or `diverged`
    pub termination: String,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub relative_residual: f64,
    /// Largest error at the closest points, when the preset has an exact solution.
    pub max_error: Option<f64>,
    pub timings: Timings,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub band: f64,
    pub operators: f64,
    pub partition: f64,
    pub subdomains: f64,
    pub solve: f64,
    pub total: f64,
}

/// Outcome of running the solver for one (N_S, N_O, TC) point.
struct RunOutcome {
    solution: Option<Vec<f64>>,
    report: Option<SolveReport>,
    termination: String,
    iterations: usize,
    converged: bool,
    partition: DisjointPartition,
    partition_seconds: f64,
    subdomain_seconds: f64,
    solve_seconds: f64,
}

fn run_point(
    problem: &Problem,
    cfg: &RunConfig,
    n_parts: usize,
    n_overlap: usize,
    tc: TransmissionCondition,
) -> Result<RunOutcome> {
    let mode = cfg.solver_mode()?;
    let t = Instant::now();
    let part = make_partition(cfg, &problem.band, n_parts)?;
    let partition_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let subdomains = if mode == SolverMode::BlockJacobiGmres {
        Vec::new()
    } else {
        build_subdomains(&problem.band, &problem.ops, &part, n_overlap, tc)?
    };
    let subdomain_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let result = solve_with_mode(mode, &problem.ops.helmholtz, &problem.rhs, &subdomains, &part, cfg.rtol, cfg.max_iter);
    let solve_seconds = t.elapsed().as_secs_f64();
    let (solution, report, termination, iterations, converged) = match result {
        Ok((u, rep)) => {
            let term = serde_json::to_value(rep.termination)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            let (it, conv) = (rep.iterations, rep.converged);
            (Some(u), Some(rep), term, it, conv)
        }
        Err(Error::Diverged { iteration, growth }) => {
            log::warn!("diverged at iteration {iteration} (growth {growth:e})");
            (None, None, "diverged".to_string(), iteration, false)
        }
        Err(e) => return Err(e),
    };
    Ok(RunOutcome {
        solution,
        report,
        termination,
        iterations,
        converged,
        partition: part,
        partition_seconds,
        subdomain_seconds,
        solve_seconds,
    })
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_header_echo(cfg: &RunConfig) -> String {
    format!("# {}\n", cfg.echo())
}

/// Builds the problem, runs the configured solver and writes
/// `solution.csv`, `residuals.csv` and `summary.json`.
pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveSummary> {
    let start = Instant::now();
    let tc = cfg.transmission_condition()?;
    let problem = Problem::build(cfg)?;
    let run = run_point(&problem, cfg, cfg.n_subdomains, cfg.n_overlap, tc)?;
    create_out_dir(&cfg.out)?;

    let band = &problem.band;
    let dim = band.dim();
    let mut max_error = None;
    if let Some(u) = &run.solution {
        let mut csv = csv_header_echo(cfg);
        csv.push_str(if dim == 2 { "x,y,u" } else { "x,y,z,u" });
        let has_exact = exact_solution_known(cfg);
        if has_exact {
            csv.push_str(",exact");
        }
        csv.push('\n');
        let mut err = 0.0f64;
        for (node, &v) in band.active().iter().zip(u) {
            let p = node.query.query_point;
            for x in &p[..dim] {
                let _ = write!(csv, "{x:.12e},");
            }
            let _ = write!(csv, "{v:.12e}");
            if has_exact {
                let e = problem.preset.exact(node.query.closest_point).unwrap();
                err = err.max((v - e).abs());
                let _ = write!(csv, ",{e:.12e}");
            }
            csv.push('\n');
        }
        if has_exact {
            max_error = Some(err);
        }
        write_file(&cfg.out.join("solution.csv"), &csv)?;
    }
    if let Some(rep) = &run.report {
        write_file(&cfg.out.join("residuals.csv"), &(csv_header_echo(cfg) + &rep.residual_csv()))?;
    }

    let graph = build_graph(band);
    let (r0, rn) = run
        .report
        .as_ref()
        .map_or((f64::NAN, f64::NAN), |r| (r.initial_residual(), r.final_residual()));
    let summary = SolveSummary {
        config: cfg.clone(),
        config_echo: cfg.echo(),
        n_active: band.n_active(),
        n_ghost: band.n_ghost(),
        n_subdomains: run.partition.n_parts(),
        edge_cut: edge_cut(&graph, run.partition.labels()),
        balance: run.partition.balance(),
        iterations: run.iterations,
        converged: run.converged,
        termination: run.termination.clone(),
        initial_residual: r0,
        final_residual: rn,
        relative_residual: run.report.as_ref().map_or(f64::NAN, SolveReport::relative_residual),
        max_error,
        timings: Timings {
            band: problem.band_seconds,
            operators: problem.operator_seconds,
            partition: run.partition_seconds,
            subdomains: run.subdomain_seconds,
            solve: run.solve_seconds,
            total: start.elapsed().as_secs_f64(),
        },
    };
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// The eigenfunction presets are exact only on the unit circle/sphere.
fn exact_solution_known(cfg: &RunConfig) -> bool {
    matches!(
        (&cfg.surface, cfg.rhs.as_str()),
        (SurfaceSpec::Circle { radius }, "eigen-circle") | (SurfaceSpec::Sphere { radius }, "eigen-sphere") if *radius == 1.0
    )
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| invalid(format!("json: {e}")))?;
    write_file(path, &(text + "\n"))
}

/// One row of `sweep.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_subdomains: usize,
    pub n_overlap: usize,
    pub alpha: Option<f64>,
    pub tc: String,
    pub iterations: usize,
    pub converged: bool,
    /// `converged`, `max_iterations`, `diverged` or an error message
    pub status: String,
    pub solve_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSummary {
    pub config: RunConfig,
    pub config_echo: String,
    pub n_active: usize,
    pub n_ghost: usize,
    pub rows: Vec<SweepRow>,
}

/// Runs every combination of the sweep lists. Failures become rows with
/// `converged = false` and the sweep continues.
pub fn cmd_sweep(cfg: &RunConfig, lists: &SweepArgs) -> Result<SweepSummary> {
    let nsubs = if lists.sweep_nsub.is_empty() { vec![cfg.n_subdomains] } else { lists.sweep_nsub.clone() };
    let novs = if lists.sweep_noverlap.is_empty() { vec![cfg.n_overlap] } else { lists.sweep_noverlap.clone() };
    let alphas: Vec<Option<f64>> = if lists.sweep_alpha.is_empty() {
        vec![cfg.alpha]
    } else {
        lists.sweep_alpha.iter().map(|&a| Some(a)).collect()
    };
    let tcs = if lists.sweep_tc.is_empty() { vec![cfg.transmission.clone()] } else { lists.sweep_tc.clone() };
    // validate every combination before building anything
    let mut points = Vec::new();
    for tc_name in &tcs {
        for &alpha in &alphas {
            let tc = TransmissionCondition::from_kind(tc_name, alpha)?;
            for &ns in &nsubs {
                for &no in &novs {
                    if ns == 0 {
                        return Err(invalid("sweep-nsub entries must be at least 1"));
                    }
                    if cfg.solver_mode()? != SolverMode::BlockJacobiGmres {
                        check_overlap(&tc, no)?;
                    }
                    points.push((ns, no, alpha, tc));
                }
            }
        }
    }
    let problem = Problem::build(cfg)?;
    let mut rows = Vec::with_capacity(points.len());
    for (ns, no, alpha, tc) in points {
        let t = Instant::now();
        let row = match run_point(&problem, cfg, ns, no, tc) {
            Ok(run) => SweepRow {
                n_subdomains: ns,
                n_overlap: no,
                alpha,
                tc: tc.name().to_string(),
                iterations: run.iterations,
                converged: run.converged,
                status: run.termination,
                solve_seconds: run.solve_seconds,
            },
            Err(e) => SweepRow {
                n_subdomains: ns,
                n_overlap: no,
                alpha,
                tc: tc.name().to_string(),
                iterations: 0,
                converged: false,
                status: e.to_string(),
                solve_seconds: t.elapsed().as_secs_f64(),
            },
        };
        log::info!("N_S={ns} N_O={no} tc={} alpha={alpha:?}: {} iterations ({})", row.tc, row.iterations, row.status);
        rows.push(row);
    }
    create_out_dir(&cfg.out)?;
    let mut csv = csv_header_echo(cfg);
    csv.push_str("n_subdomains,n_overlap,alpha,tc,iterations,converged,status,solve_seconds\n");
    for r in &rows {
        let alpha = r.alpha.map(|a| a.to_string()).unwrap_or_default();
        let status = r.status.replace(['"', ','], ";");
        let _ = writeln!(
            csv,
            "{},{},{alpha},{},{},{},{status},{:.3}",
            r.n_subdomains, r.n_overlap, r.tc, r.iterations, r.converged, r.solve_seconds
        );
    }
    write_file(&cfg.out.join("sweep.csv"), &csv)?;
    let summary = SweepSummary {
        config: cfg.clone(),
        config_echo: cfg.echo(),
        n_active: problem.band.n_active(),
        n_ghost: problem.band.n_ghost(),
        rows,
    };
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionSummary {
    pub config: RunConfig,
    pub config_echo: String,
    pub n_active: usize,
    pub n_ghost: usize,
    pub n_subdomains: usize,
    pub part_sizes: Vec<usize>,
    pub balance: f64,
    pub edge_cut: usize,
    pub components_per_part: Vec<usize>,
    pub roles_of_subdomain: usize,
}

/// Writes `partition.csv` (one row per band node with its label and its
/// role in subdomain `subdomain`), `labels.txt` (importable with
/// `--partition-file`) and `summary.json`.
pub fn cmd_partition_info(cfg: &RunConfig, subdomain: usize) -> Result<PartitionSummary> {
    if subdomain >= cfg.n_subdomains {
        return Err(invalid(format!("subdomain {subdomain} is out of range 0..{}", cfg.n_subdomains)));
    }
    let tc = cfg.transmission_condition()?;
    let surface = cfg.build_surface()?;
    let band = build_band(&surface, cfg.dx, cfg.degree, &surface.default_seeds())?;
    let part = make_partition(cfg, &band, cfg.n_subdomains)?;
    let sets = grow_subdomain(&band, &part, subdomain, cfg.n_overlap, &tc)?;
    let roles = sets.roles(&band);
    create_out_dir(&cfg.out)?;

    let mut csv = csv_header_echo(cfg);
    csv.push_str("node,active,x,y,z,label,role,layer\n");
    for (i, role) in roles.iter().enumerate() {
        let p = band.node_position(i);
        let label = if band.is_active(i) { part.labels()[i].to_string() } else { String::new() };
        let layer = match role {
            crate::subdomain::NodeRole::Overlap(k) => k.to_string(),
            _ => String::new(),
        };
        let _ = writeln!(
            csv,
            "{i},{},{:.12e},{:.12e},{:.12e},{label},{},{layer}",
            band.is_active(i) as u8,
            p[0],
            p[1],
            p[2],
            role.label()
        );
    }
    write_file(&cfg.out.join("partition.csv"), &csv)?;
    let labels_path = cfg.out.join("labels.txt");
    crate::partition::export_partition(&part, &labels_path)?;

    let graph = build_graph(&band);
    let summary = PartitionSummary {
        config: cfg.clone(),
        config_echo: cfg.echo(),
        n_active: band.n_active(),
        n_ghost: band.n_ghost(),
        n_subdomains: part.n_parts(),
        part_sizes: part.part_sizes(),
        balance: part.balance(),
        edge_cut: edge_cut(&graph, part.labels()),
        components_per_part: part.components_per_part(&graph),
        roles_of_subdomain: subdomain,
    };
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Writes `matrix.mtx` (the global Helmholtz matrix) and `rhs.mtx`.
pub fn cmd_export_matrix(cfg: &RunConfig) -> Result<(usize, usize)> {
    let problem = Problem::build(cfg)?;
    create_out_dir(&cfg.out)?;
    let a = &problem.ops.helmholtz;
    let path = cfg.out.join("matrix.mtx");
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    a.write_matrix_market(std::io::BufWriter::new(file)).map_err(|e| Error::io(&path, e))?;
    let mut rhs = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(rhs, "% {}", cfg.echo());
    let _ = writeln!(rhs, "{} 1", problem.rhs.len());
    for v in &problem.rhs {
        let _ = writeln!(rhs, "{v:.17e}");
    }
    write_file(&cfg.out.join("rhs.mtx"), &rhs)?;
    Ok((a.n_rows(), a.nnz()))
}

fn configure_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = args.resolve()?;
            configure_threads(cfg.threads);
            let s = cmd_solve(&cfg)?;
            println!(
                "N_A={} N_G={} iterations={} converged={} relative_residual={:.3e} ({})",
                s.n_active, s.n_ghost, s.iterations, s.converged, s.relative_residual, s.termination
            );
            if let Some(e) = s.max_error {
                println!("max_error={e:.6e}");
            }
            Ok(if s.converged { EXIT_CONVERGED } else { EXIT_NOT_CONVERGED })
        }
        Command::Sweep { run, lists } => {
            let cfg = run.resolve()?;
            configure_threads(cfg.threads);
            let s = cmd_sweep(&cfg, &lists)?;
            println!("n_subdomains,n_overlap,alpha,tc,iterations,converged,status");
            for r in &s.rows {
                let alpha = r.alpha.map(|a| a.to_string()).unwrap_or_default();
                println!("{},{},{alpha},{},{},{},{}", r.n_subdomains, r.n_overlap, r.tc, r.iterations, r.converged, r.status);
            }
            Ok(if s.rows.iter().all(|r| r.converged) { EXIT_CONVERGED } else { EXIT_NOT_CONVERGED })
        }
        Command::PartitionInfo { run, subdomain } => {
            let cfg = run.resolve()?;
            configure_threads(cfg.threads);
            let s = cmd_partition_info(&cfg, subdomain)?;
            println!(
                "N_A={} parts={} balance={:.3} edge_cut={} sizes={:?}",
                s.n_active, s.n_subdomains, s.balance, s.edge_cut, s.part_sizes
            );
            Ok(EXIT_CONVERGED)
        }
        Command::ExportMatrix(args) => {
            let cfg = args.resolve()?;
            configure_threads(cfg.threads);
            let (n, nnz) = cmd_export_matrix(&cfg)?;
            println!("wrote {n}x{n} matrix with {nnz} nonzeros");
            Ok(EXIT_CONVERGED)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Command {
        Cli::try_parse_from(std::iter::once("cpm-dd").chain(list.iter().copied())).unwrap().command
    }

    fn resolve(list: &[&str]) -> Result<RunConfig> {
        match args(list) {
            Command::Solve(a) => a.resolve(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn defaults() {
        let cfg = resolve(&["solve"]).unwrap();
        assert_eq!(cfg.surface, SurfaceSpec::Sphere { radius: 1.0 });
        assert_eq!(cfg.rhs, "eigen-sphere");
        assert_eq!((cfg.n_subdomains, cfg.n_overlap, cfg.degree), (8, 4, 2));
        assert_eq!(cfg.transmission, "dirichlet");
        assert_eq!(cfg.rtol, 1e-6);
        let circle = resolve(&["solve", "--surface", "circle"]).unwrap();
        assert_eq!(circle.rhs, "eigen-circle");
    }

    #[test]
    fn validation_names_the_constraint() {
        let cases: [(&[&str], &str); 9] = [
            (&["solve", "--dx", "0"], "dx"),
            (&["solve", "--c=-1"], "c must be positive"),
            (&["solve", "--tc", "robin", "--alpha", "0"], "alpha"),
            (&["solve", "--tc", "robin"], "alpha"),
            (&["solve", "--tc", "robin", "--alpha", "2", "--noverlap", "1"], "noverlap >= 2"),
            (&["solve", "--nsub", "0"], "nsub"),
            (&["solve", "--rhs", "nope"], "rhs"),
            (&["solve", "--surface", "mesh"], "--mesh"),
            (&["solve", "--mode", "fast"], "mode"),
        ];
        for (list, needle) in cases {
            let msg = resolve(list).unwrap_err().to_string();
            assert!(msg.contains(needle), "{list:?}: {msg}");
        }
    }

    #[test]
    fn block_jacobi_ignores_overlap() {
        assert!(resolve(&["solve", "--mode", "block-jacobi-gmres", "--tc", "robin", "--alpha", "1", "--noverlap", "0"]).is_ok());
    }

    #[test]
    fn config_file_and_flag_priority() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# comment\nsurface = circle\ndx=0.05\nnsub=4\nmax_iter=7\n\n").unwrap();
        let p = path.to_str().unwrap();
        let cfg = resolve(&["solve", "--config", p, "--nsub", "6"]).unwrap();
        assert_eq!(cfg.surface, SurfaceSpec::Circle { radius: 1.0 });
        assert_eq!(cfg.dx, 0.05);
        assert_eq!(cfg.n_subdomains, 6);
        assert_eq!(cfg.max_iter, 7);

        fs::write(&path, "dx=abc\n").unwrap();
        assert!(resolve(&["solve", "--config", p]).unwrap_err().to_string().contains("dx"));
        fs::write(&path, "bogus=1\n").unwrap();
        assert!(resolve(&["solve", "--config", p]).unwrap_err().to_string().contains("bogus"));
        fs::write(&path, "just text\n").unwrap();
        assert!(matches!(resolve(&["solve", "--config", p]), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn echo_round_trips_through_config_file() {
        let cfg = resolve(&["solve", "--surface", "circle", "--tc", "robin", "--alpha", "3", "--nsub", "5", "--dx", "0.05"]).unwrap();
        let text = cfg.echo().replace(' ', "\n");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("echo.cfg");
        fs::write(&path, text).unwrap();
        let again = resolve(&["solve", "--config", path.to_str().unwrap()]).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn sweep_lists_parse() {
        match args(&["sweep", "--sweep-nsub", "8,16", "--sweep-alpha", "16,32,64"]) {
            Command::Sweep { lists, .. } => {
                assert_eq!(lists.sweep_nsub, vec![8, 16]);
                assert_eq!(lists.sweep_alpha, vec![16.0, 32.0, 64.0]);
                assert!(lists.sweep_tc.is_empty());
            }
            _ => unreachable!(),
        }
    }
}
