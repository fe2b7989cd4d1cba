use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // geometry
    #[error("query point {point:?} lies on the medial axis of the surface")]
    MedialAxisPoint { point: [f64; 3] },
    #[error("point {point:?} is not on the surface (distance {distance:e})")]
    OffSurface { point: [f64; 3], distance: f64 },
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("invalid surface: {0}")]
    InvalidSurface(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    // band
    #[error("tube radius {gamma} is not below the curvature limit {limit}")]
    TubeTooWide { gamma: f64, limit: f64 },
    #[error("interpolation stencil of node {node} contains a non-active lattice point {missing:?}")]
    StencilIncomplete { node: usize, missing: [i64; 3] },
    #[error("band seed {seed:?} is farther than the tube radius from the surface")]
    SeedOffTube { seed: [f64; 3] },

    // linalg
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is singular ({reason})")]
    SingularMatrix { reason: String },
    #[error("GMRES breakdown at iteration {iteration}")]
    Breakdown { iteration: usize },

    // partition
    #[error("cannot split {n_nodes} nodes into {n_parts} parts")]
    TooManyParts { n_parts: usize, n_nodes: usize },
    #[error("partition label {label} on line {line} is out of range 0..{n_parts}")]
    LabelOutOfRange { line: usize, label: i64, n_parts: usize },
    #[error("partition file has {got} labels, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("partition part {0} is empty")]
    EmptyPart(usize),

    // subdomain
    #[error("subdomain {0} is empty")]
    EmptySubdomain(usize),
    #[error("overlap of subdomain {0} consumes the whole domain")]
    OverlapExceedsDomain(usize),
    #[error("stencil of subdomain {subdomain} needs band node {node}, which is in no local set")]
    StencilEscapesSubdomain { subdomain: usize, node: usize },
    #[error("local operator of subdomain {subdomain} is singular: {source}")]
    SingularLocal {
        subdomain: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("block {block} of the block-Jacobi preconditioner is singular")]
    SingularBlock { block: usize },

    // schwarz
    #[error("Schwarz iteration diverged at iteration {iteration} (residual grew by {growth:e})")]
    Diverged { iteration: usize, growth: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
