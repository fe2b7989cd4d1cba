//! Overlapping subdomains and their local operators.
//!
//! Each disjoint part is grown by breadth-first overlap layers. The nodes
//! needed to close the Laplacian and extension stencils outside the grown
//! set form the boundary set. Values there come from a modified extension:
//! zero for Dirichlet, or the interpolant at the nearest sample of the
//! discrete subdomain boundary scaled by the Robin factor.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::band::Band;
use crate::error::{Error, Result};
use crate::geometry::{dot, norm, scale, sub, Point};
use crate::linalg::{lu_factor, CsrMatrix, LuFactorization, RowBuilder};
use crate::operators::{interpolation_row, GlobalOperators};
use crate::partition::DisjointPartition;

/// Tangential parts shorter than this fraction of `|d|` count as zero.
pub const CONORMAL_EPS: f64 = 1e-10;

/// Shortest conormal difference length for the Robin factor, as a fraction
/// of `dx`. Without it a node on the normal line of its sample keeps factor
/// 1 for every alpha and never reaches the Dirichlet limit.
pub const MIN_CONORMAL_LENGTH: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransmissionCondition {
    Dirichlet,
    Robin { alpha: f64 },
}

impl TransmissionCondition {
    /// Parses `dirichlet` or `robin`; `alpha` is only read for Robin.
    pub fn from_kind(kind: &str, alpha: Option<f64>) -> Result<Self> {
        let tc = match kind {
            "dirichlet" | "ras" => TransmissionCondition::Dirichlet,
            "robin" | "oras" => TransmissionCondition::Robin {
                alpha: alpha.ok_or_else(|| Error::InvalidConfig("robin transmission needs alpha".into()))?,
            },
            other => return Err(Error::InvalidConfig(format!("unknown transmission condition {other:?}"))),
        };
        tc.validate()?;
        Ok(tc)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TransmissionCondition::Robin { alpha } if !(alpha > 0.0 && alpha.is_finite()) => Err(Error::InvalidConfig(
                format!("robin alpha must be positive and finite (got {alpha})"),
            )),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransmissionCondition::Dirichlet => "dirichlet",
            TransmissionCondition::Robin { .. } => "robin",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            TransmissionCondition::Dirichlet => None,
            TransmissionCondition::Robin { alpha } => Some(alpha),
        }
    }
}

/// A point of the discrete subdomain boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySample {
    pub y: Point,
    pub n_hat: Point,
}

/// Geometry attached to one boundary-set node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BcNode {
    /// band index
    pub node: usize,
    /// index of the nearest boundary sample, if any exist
    pub sample: Option<usize>,
    pub d: Point,
    pub q_hat: Point,
    /// `1 / (1 + alpha d.q_hat)` for Robin, with `d.q_hat` floored at
    /// `MIN_CONORMAL_LENGTH * dx`.
    /// Dirichlet uses 0, the `alpha -> infinity` limit.
    pub robin_scale: f64,
    /// added by the extra Robin layer around the boundary set
    pub extra: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeRole {
    Disjoint,
    /// overlap layer, counted from 1
    Overlap(usize),
    Ghost,
    Boundary,
    Outside,
}

impl NodeRole {
    pub fn label(&self) -> &'static str {
        match self {
            NodeRole::Disjoint => "disjoint",
            NodeRole::Overlap(_) => "overlap",
            NodeRole::Ghost => "ghost",
            NodeRole::Boundary => "boundary",
            NodeRole::Outside => "outside",
        }
    }
}

/// Node sets of one subdomain. All indices are band indices, sorted within
/// each list.
#[derive(Clone, Debug)]
pub struct SubdomainSets {
    pub id: usize,
    pub n_overlap: usize,
    pub disjoint: Vec<usize>,
    pub layers: Vec<Vec<usize>>,
    /// disjoint part plus every overlap layer
    pub interior: Vec<usize>,
    pub ghosts: Vec<usize>,
    /// stencil-completing nodes first, then the extra Robin layer
    pub bc: Vec<BcNode>,
    pub lambda: Vec<BoundarySample>,
}

impl SubdomainSets {
    pub fn n_unknowns(&self) -> usize {
        self.interior.len() + self.bc.len()
    }

    /// Boundary nodes that close stencils, excluding the extra Robin layer.
    pub fn n_bc_core(&self) -> usize {
        self.bc.iter().filter(|b| !b.extra).count()
    }

    /// Role of every band node with respect to this subdomain.
    pub fn roles(&self, band: &Band) -> Vec<NodeRole> {
        let mut roles = vec![NodeRole::Outside; band.n_total()];
        for &i in &self.disjoint {
            roles[i] = NodeRole::Disjoint;
        }
        for (k, layer) in self.layers.iter().enumerate() {
            for &i in layer {
                roles[i] = NodeRole::Overlap(k + 1);
            }
        }
        for &i in &self.ghosts {
            roles[i] = NodeRole::Ghost;
        }
        for b in &self.bc {
            roles[b.node] = NodeRole::Boundary;
        }
        roles
    }
}

/// Tangential part of `x - y` with respect to `n_hat`, normalized; zero
/// when it is negligible against `|x - y|`.
pub fn compute_conormal(x: Point, y: Point, n_hat: Point) -> Point {
    let d = sub(x, y);
    let t = sub(d, scale(n_hat, dot(d, n_hat)));
    let tn = norm(t);
    if tn < CONORMAL_EPS * norm(d) || tn == 0.0 {
        [0.0; 3]
    } else {
        scale(t, 1.0 / tn)
    }
}

/// Grows part `j` into an overlapping subdomain with `n_overlap` layers and
/// collects its ghost and boundary sets.
pub fn grow_subdomain(
    band: &Band,
    partition: &DisjointPartition,
    j: usize,
    n_overlap: usize,
    tc: &TransmissionCondition,
) -> Result<SubdomainSets> {
    tc.validate()?;
    if n_overlap < 1 {
        return Err(Error::InvalidConfig("overlap must be at least one layer".into()));
    }
    if matches!(tc, TransmissionCondition::Robin { .. }) && n_overlap < 2 {
        return Err(Error::InvalidConfig(format!(
            "robin transmission needs an overlap of at least 2 layers (got {n_overlap})"
        )));
    }
    let disjoint: Vec<usize> = if j < partition.n_parts() { partition.members(j) } else { Vec::new() };
    if disjoint.is_empty() {
        return Err(Error::EmptySubdomain(j));
    }

    const OUT: u8 = 0;
    const IN: u8 = 1;
    const GHOST: u8 = 2;
    const BC: u8 = 3;
    let mut mark = vec![OUT; band.n_total()];
    for &i in &disjoint {
        mark[i] = IN;
    }
    let mut n_in = disjoint.len();

    let neighbors = |i: usize| band.laplacian_neighbors(band.nodes()[i].coord).filter_map(|c| band.index_of(&c));

    // overlap layers from active neighbors
    let mut layers: Vec<Vec<usize>> = Vec::with_capacity(n_overlap);
    for _ in 0..n_overlap {
        let frontier = layers.last().unwrap_or(&disjoint);
        let mut next = Vec::new();
        for &i in frontier {
            for m in neighbors(i) {
                if band.is_active(m) && mark[m] == OUT {
                    mark[m] = IN;
                    next.push(m);
                }
            }
        }
        next.sort_unstable();
        n_in += next.len();
        layers.push(next);
        if partition.n_parts() > 1 && n_in == band.n_active() {
            return Err(Error::OverlapExceedsDomain(j));
        }
    }
    let mut interior: Vec<usize> = disjoint.iter().chain(layers.iter().flatten()).copied().collect();
    interior.sort_unstable();

    // ghost neighbors, plus active neighbors that start the boundary set
    let mut ghosts = Vec::new();
    let mut bc_core = Vec::new();
    for &i in &interior {
        for m in neighbors(i) {
            match mark[m] {
                OUT if band.is_active(m) => {
                    mark[m] = BC;
                    bc_core.push(m);
                }
                OUT => {
                    mark[m] = GHOST;
                    ghosts.push(m);
                }
                _ => {}
            }
        }
    }
    ghosts.sort_unstable();

    let lambda: Vec<BoundarySample> = layers
        .iter()
        .rev()
        .find(|l| !l.is_empty())
        .map(|l| {
            l.iter()
                .map(|&i| {
                    let q = &band.nodes()[i].query;
                    BoundarySample {
                        y: q.closest_point,
                        n_hat: q.normal,
                    }
                })
                .collect()
        })
        .unwrap_or_default();

    // stencils of the extension at interior/ghost nodes and at boundary samples
    let add_stencil = |cp: Point, mark: &mut [u8], bc_core: &mut Vec<usize>, owner: usize| -> Result<()> {
        let nodes = band
            .stencil_indices(cp)
            .map_err(|_| Error::StencilEscapesSubdomain { subdomain: j, node: owner })?;
        for s in nodes {
            if mark[s] == OUT {
                mark[s] = BC;
                bc_core.push(s);
            }
        }
        Ok(())
    };
    for &m in interior.iter().chain(&ghosts) {
        add_stencil(band.nodes()[m].query.closest_point, &mut mark, &mut bc_core, m)?;
    }
    for (k, s) in lambda.iter().enumerate() {
        add_stencil(s.y, &mut mark, &mut bc_core, k)?;
    }
    bc_core.sort_unstable();

    let mut extra = Vec::new();
    if matches!(tc, TransmissionCondition::Robin { .. }) {
        for &b in &bc_core {
            for m in neighbors(b) {
                if mark[m] == OUT {
                    mark[m] = BC;
                    extra.push(m);
                }
            }
        }
        extra.sort_unstable();
    }

    let bc = bc_core
        .iter()
        .map(|&b| (b, false))
        .chain(extra.iter().map(|&b| (b, true)))
        .map(|(node, is_extra)| boundary_node(band, node, &lambda, tc, is_extra))
        .collect();

    Ok(SubdomainSets {
        id: j,
        n_overlap,
        disjoint,
        layers,
        interior,
        ghosts,
        bc,
        lambda,
    })
}

fn boundary_node(band: &Band, node: usize, lambda: &[BoundarySample], tc: &TransmissionCondition, extra: bool) -> BcNode {
    let x = band.node_position(node);
    let sample = lambda
        .iter()
        .enumerate()
        .map(|(k, s)| (k, norm(sub(x, s.y))))
        .fold(None, |best: Option<(usize, f64)>, (k, dist)| match best {
            Some((_, bd)) if bd <= dist => best,
            _ => Some((k, dist)),
        })
        .map(|(k, _)| k);
    let (d, q_hat) = match sample {
        Some(k) => (sub(x, lambda[k].y), compute_conormal(x, lambda[k].y, lambda[k].n_hat)),
        None => ([0.0; 3], [0.0; 3]),
    };
    let robin_scale = match *tc {
        TransmissionCondition::Robin { alpha } if sample.is_some() => {
            1.0 / (1.0 + alpha * dot(d, q_hat).max(MIN_CONORMAL_LENGTH * band.dx()))
        }
        _ => 0.0,
    };
    BcNode {
        node,
        sample,
        d,
        q_hat,
        robin_scale,
        extra,
    }
}

fn local_index(sets: &SubdomainSets) -> HashMap<usize, usize> {
    let n_int = sets.interior.len();
    let mut local = HashMap::with_capacity(sets.n_unknowns());
    for (k, &g) in sets.interior.iter().enumerate() {
        local.insert(g, k);
    }
    for (k, b) in sets.bc.iter().enumerate() {
        local.insert(b.node, n_int + k);
    }
    local
}

fn extension_row(
    sets: &SubdomainSets,
    band: &Band,
    local: &HashMap<usize, usize>,
    b: &BcNode,
) -> Result<Vec<(usize, f64)>> {
    let escape = || Error::StencilEscapesSubdomain {
        subdomain: sets.id,
        node: b.node,
    };
    match b.sample {
        Some(s) if b.robin_scale != 0.0 => interpolation_row(band, sets.lambda[s].y)
            .map_err(|_| escape())?
            .into_iter()
            .map(|(node, w)| Ok((*local.get(&node).ok_or_else(escape)?, b.robin_scale * w)))
            .collect(),
        _ => Ok(Vec::new()),
    }
}

/// Modified extension over the boundary set: one row per boundary node,
/// columns over the local unknowns.
pub fn modified_extension(sets: &SubdomainSets, band: &Band) -> Result<CsrMatrix> {
    let local = local_index(sets);
    let mut builder = RowBuilder::new(sets.n_unknowns());
    for b in &sets.bc {
        let mut row = extension_row(sets, band, &local, b)?;
        row.sort_unstable_by_key(|e| e.0);
        for (c, v) in row {
            builder.push(c, v);
        }
        builder.finish_row();
    }
    Ok(builder.build())
}

/// Local matrix over interior then boundary unknowns.
///
/// Interior rows and the stencil-completing boundary rows are the stabilized
/// Helmholtz rows, with each Laplacian neighbor evaluated through the global
/// extension (interior and ghost nodes) or the modified extension (boundary
/// nodes). Neighbors outside every local set extend by zero. Rows of the
/// extra Robin layer enforce `v_b = (T v)_b`.
pub fn assemble_local_operator(sets: &SubdomainSets, band: &Band, extension: &CsrMatrix, c: f64) -> Result<CsrMatrix> {
    let n_int = sets.interior.len();
    let n = sets.n_unknowns();
    let local = local_index(sets);
    let t_rows: Vec<Vec<(usize, f64)>> = sets
        .bc
        .iter()
        .map(|b| extension_row(sets, band, &local, b))
        .collect::<Result<_>>()?;
    let mut bc_of = vec![usize::MAX; band.n_total()];
    for (k, b) in sets.bc.iter().enumerate() {
        bc_of[b.node] = k;
    }
    let mut in_ghosts = vec![false; band.n_total()];
    for &g in &sets.ghosts {
        in_ghosts[g] = true;
    }
    let h2 = band.dx() * band.dx();
    let diag = c + 2.0 * band.dim() as f64 / h2;
    let escape = |node| Error::StencilEscapesSubdomain {
        subdomain: sets.id,
        node,
    };

    let mut builder = RowBuilder::new(n);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(128);
    let flush = |row: &mut Vec<(usize, f64)>, builder: &mut RowBuilder| {
        row.sort_unstable_by_key(|e| e.0);
        let mut k = 0;
        while k < row.len() {
            let col = row[k].0;
            let mut v = 0.0;
            while k < row.len() && row[k].0 == col {
                v += row[k].1;
                k += 1;
            }
            builder.push(col, v);
        }
        builder.finish_row();
        row.clear();
    };

    let helmholtz_rows = sets.interior.iter().chain(sets.bc.iter().filter(|b| !b.extra).map(|b| &b.node));
    for (k, &g) in helmholtz_rows.enumerate() {
        row.push((k, diag));
        for nb in band.laplacian_neighbors(band.nodes()[g].coord) {
            let Some(m) = band.index_of(&nb) else {
                continue;
            };
            if bc_of[m] != usize::MAX {
                row.extend(t_rows[bc_of[m]].iter().map(|&(col, w)| (col, -w / h2)));
            } else if local.contains_key(&m) || in_ghosts[m] {
                let (cols, vals) = extension.row(m);
                for (&s, &w) in cols.iter().zip(vals) {
                    let ls = *local.get(&s).ok_or_else(|| escape(m))?;
                    row.push((ls, -w / h2));
                }
            } else if k < n_int {
                return Err(escape(g));
            }
        }
        flush(&mut row, &mut builder);
    }
    for (k, _) in sets.bc.iter().enumerate().filter(|(_, b)| b.extra) {
        row.push((n_int + k, 1.0));
        row.extend(t_rows[k].iter().map(|&(col, w)| (col, -w)));
        flush(&mut row, &mut builder);
    }
    Ok(builder.build())
}

/// A grown subdomain with its factorized local operator.
#[derive(Clone, Debug)]
pub struct Subdomain {
    pub sets: SubdomainSets,
    pub tc: TransmissionCondition,
    pub local_operator: CsrMatrix,
    factorization: LuFactorization,
    /// local index of each disjoint-part node, paired with its band index
    owned: Vec<(usize, usize)>,
}

impl Subdomain {
    pub fn build(
        band: &Band,
        ops: &GlobalOperators,
        partition: &DisjointPartition,
        j: usize,
        n_overlap: usize,
        tc: TransmissionCondition,
    ) -> Result<Self> {
        let sets = grow_subdomain(band, partition, j, n_overlap, &tc)?;
        let local_operator = assemble_local_operator(&sets, band, &ops.extension, ops.c)?;
        let factorization = lu_factor(&local_operator).map_err(|e| Error::SingularLocal {
            subdomain: j,
            source: Box::new(e),
        })?;
        let owned = sets
            .interior
            .iter()
            .enumerate()
            .filter(|(_, g)| sets.disjoint.binary_search(g).is_ok())
            .map(|(k, &g)| (k, g))
            .collect();
        Ok(Subdomain {
            sets,
            tc,
            local_operator,
            factorization,
            owned,
        })
    }

    pub fn id(&self) -> usize {
        self.sets.id
    }

    pub fn n_unknowns(&self) -> usize {
        self.sets.n_unknowns()
    }

    /// Restriction of a global residual: interior entries, zeros on the
    /// boundary rows.
    pub fn local_rhs(&self, residual: &[f64]) -> Vec<f64> {
        let mut rhs = vec![0.0; self.n_unknowns()];
        for (r, &g) in rhs.iter_mut().zip(&self.sets.interior) {
            *r = residual[g];
        }
        rhs
    }

    pub fn local_solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n_unknowns() {
            return Err(Error::DimensionMismatch {
                expected: self.n_unknowns(),
                got: rhs.len(),
            });
        }
        Ok(self.factorization.solve(rhs))
    }

    /// `(band index, local index)` for the nodes this subdomain updates.
    pub fn owned(&self) -> &[(usize, usize)] {
        &self.owned
    }

    /// Adds the disjoint-part entries of a local solution into `u`.
    pub fn scatter_owned(&self, v: &[f64], u: &mut [f64]) {
        for &(k, g) in &self.owned {
            u[g] += v[k];
        }
    }

    /// Node roles, boundary samples and per-node conormal data as CSV.
    pub fn diagnostics_csv(&self, band: &Band) -> String {
        let roles = self.sets.roles(band);
        let bc_of: HashMap<usize, &BcNode> = self.sets.bc.iter().map(|b| (b.node, b)).collect();
        let mut s = String::from("record,index,x,y,z,role,layer,qx,qy,qz,robin_scale\n");
        for (i, role) in roles.iter().enumerate() {
            if *role == NodeRole::Outside {
                continue;
            }
            let p = band.node_position(i);
            let layer = match role {
                NodeRole::Overlap(k) => *k,
                _ => 0,
            };
            let (q, rs) = bc_of.get(&i).map_or(([0.0; 3], 1.0), |b| (b.q_hat, b.robin_scale));
            let _ = writeln!(
                s,
                "node,{i},{},{},{},{},{layer},{},{},{},{rs}",
                p[0],
                p[1],
                p[2],
                role.label(),
                q[0],
                q[1],
                q[2]
            );
        }
        for (k, l) in self.sets.lambda.iter().enumerate() {
            let _ = writeln!(
                s,
                "sample,{k},{},{},{},sample,0,{},{},{},1",
                l.y[0], l.y[1], l.y[2], l.n_hat[0], l.n_hat[1], l.n_hat[2]
            );
        }
        s
    }
}

/// Builds and factorizes every subdomain, in parallel when enabled.
pub fn build_subdomains(
    band: &Band,
    ops: &GlobalOperators,
    partition: &DisjointPartition,
    n_overlap: usize,
    tc: TransmissionCondition,
) -> Result<Vec<Subdomain>> {
    let ids: Vec<usize> = (0..partition.n_parts()).collect();
    crate::parallel::map(&ids, |&j| Subdomain::build(band, ops, partition, j, n_overlap, tc))
        .into_iter()
        .collect()
}
