//! The computational tube: active lattice nodes within the tube radius of the
//! surface, plus the ghost nodes that complete their Laplacian stencils.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{Point, Surface, SurfaceQuery};

/// Integer lattice coordinate; unused trailing axes are zero.
pub type Lattice = [i64; 3];

#[derive(Clone, Debug)]
pub struct BandNode {
    pub coord: Lattice,
    pub query: SurfaceQuery,
}

#[derive(Clone, Debug)]
pub struct Band {
    dx: f64,
    dim: usize,
    degree: usize,
    gamma: f64,
    nodes: Vec<BandNode>,
    n_active: usize,
    lattice_map: HashMap<Lattice, usize>,
}

/// `gamma = dx (p + 2) sqrt(d) / 2`.
pub fn tube_radius(dx: f64, degree: usize, dim: usize) -> f64 {
    dx * (degree as f64 + 2.0) * (dim as f64).sqrt() / 2.0
}

/// The `2d` lattice neighbors used by the centered Laplacian.
pub fn laplacian_neighbors(dim: usize, c: Lattice) -> impl Iterator<Item = Lattice> {
    (0..dim).flat_map(move |axis| {
        [-1, 1].into_iter().map(move |s| {
            let mut n = c;
            n[axis] += s;
            n
        })
    })
}

/// Lower corner of the `(p+1)^d` interpolation stencil around `cp`.
pub fn interp_stencil_base(cp: Point, dx: f64, degree: usize, dim: usize) -> Lattice {
    let mut base = [0i64; 3];
    for k in 0..dim {
        let s = cp[k] / dx;
        base[k] = if degree % 2 == 0 {
            s.round() as i64 - (degree / 2) as i64
        } else {
            s.floor() as i64 - ((degree - 1) / 2) as i64
        };
    }
    base
}

pub(crate) fn stencil_offsets(degree: usize, dim: usize) -> Vec<Lattice> {
    let m = degree as i64 + 1;
    let count = (degree + 1).pow(dim as u32);
    (0..count as i64)
        .map(|mut flat| {
            let mut o = [0i64; 3];
            for axis in (0..dim).rev() {
                o[axis] = flat % m;
                flat /= m;
            }
            o
        })
        .collect()
}

impl Band {
    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_active(&self) -> usize {
        self.n_active
    }

    pub fn n_ghost(&self) -> usize {
        self.nodes.len() - self.n_active
    }

    pub fn n_total(&self) -> usize {
        self.nodes.len()
    }

    /// All nodes: actives at `0..n_active`, then ghosts.
    pub fn nodes(&self) -> &[BandNode] {
        &self.nodes
    }

    pub fn active(&self) -> &[BandNode] {
        &self.nodes[..self.n_active]
    }

    pub fn ghosts(&self) -> &[BandNode] {
        &self.nodes[self.n_active..]
    }

    pub fn is_active(&self, node: usize) -> bool {
        node < self.n_active
    }

    pub fn index_of(&self, coord: &Lattice) -> Option<usize> {
        self.lattice_map.get(coord).copied()
    }

    pub fn position(&self, coord: &Lattice) -> Point {
        [coord[0] as f64 * self.dx, coord[1] as f64 * self.dx, coord[2] as f64 * self.dx]
    }

    pub fn node_position(&self, node: usize) -> Point {
        self.position(&self.nodes[node].coord)
    }

    pub fn laplacian_neighbors(&self, coord: Lattice) -> impl Iterator<Item = Lattice> {
        laplacian_neighbors(self.dim, coord)
    }

    pub fn interp_stencil_base(&self, cp: Point) -> Lattice {
        interp_stencil_base(cp, self.dx, self.degree, self.dim)
    }

    /// Band indices of the interpolation stencil of `cp`, in lexicographic
    /// offset order, or the first missing lattice point.
    pub fn stencil_indices(&self, cp: Point) -> std::result::Result<Vec<usize>, Lattice> {
        let base = self.interp_stencil_base(cp);
        stencil_offsets(self.degree, self.dim)
            .into_iter()
            .map(|o| {
                let c = [base[0] + o[0], base[1] + o[1], base[2] + o[2]];
                match self.lattice_map.get(&c) {
                    Some(&i) if i < self.n_active => Ok(i),
                    _ => Err(c),
                }
            })
            .collect()
    }

    /// Axis-aligned bounds of the active node positions.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for n in self.active() {
            let p = self.position(&n.coord);
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn summary_text(&self) -> String {
        let (lo, hi) = self.bounding_box();
        let mut s = String::new();
        let _ = writeln!(s, "dim        {}", self.dim);
        let _ = writeln!(s, "dx         {}", self.dx);
        let _ = writeln!(s, "degree     {}", self.degree);
        let _ = writeln!(s, "gamma      {}", self.gamma);
        let _ = writeln!(s, "N_A        {}", self.n_active);
        let _ = writeln!(s, "N_G        {}", self.n_ghost());
        let _ = writeln!(s, "bbox_min   {:?}", &lo[..self.dim]);
        let _ = writeln!(s, "bbox_max   {:?}", &hi[..self.dim]);
        s
    }

    pub fn summary_csv(&self) -> String {
        let (lo, hi) = self.bounding_box();
        format!(
            "n_active,n_ghost,gamma,dx,degree,dim,xmin,ymin,zmin,xmax,ymax,zmax\n{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.n_active,
            self.n_ghost(),
            self.gamma,
            self.dx,
            self.degree,
            self.dim,
            lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]
        )
    }

    /// Checks that every node's interpolation stencil is made of active nodes.
    pub fn check_stencils(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if let Err(missing) = self.stencil_indices(n.query.closest_point) {
                return Err(Error::StencilIncomplete { node: i, missing });
            }
        }
        Ok(())
    }
}

/// Flood-fills the tube from the lattice points nearest to `seeds`.
///
/// Needs one seed per connected component of the surface.
pub fn build_band(surface: &Surface, dx: f64, degree: usize, seeds: &[Point]) -> Result<Band> {
    if !(dx > 0.0) {
        return Err(Error::InvalidConfig(format!("grid spacing {dx} must be positive")));
    }
    if !(1..=6).contains(&degree) {
        return Err(Error::InvalidConfig(format!("interpolation degree {degree} outside 1..=6")));
    }
    let dim = surface.dim();
    let gamma = tube_radius(dx, degree, dim);
    match surface.curvature_bound() {
        Some(k) if gamma * k >= 1.0 => {
            return Err(Error::TubeTooWide {
                gamma,
                limit: 1.0 / k,
            })
        }
        Some(_) => {}
        None => log::warn!("no curvature bound for surface; skipping the tube-width check"),
    }

    let mut status: HashMap<Lattice, Option<SurfaceQuery>> = HashMap::new();
    let mut active: Vec<BandNode> = Vec::new();
    let mut ghosts: Vec<BandNode> = Vec::new();
    let mut queue = VecDeque::new();

    for &seed in seeds {
        let mut c = [0i64; 3];
        for k in 0..dim {
            c[k] = (seed[k] / dx).round() as i64;
        }
        if status.contains_key(&c) {
            continue;
        }
        let x = [c[0] as f64 * dx, c[1] as f64 * dx, c[2] as f64 * dx];
        let q = surface.closest_point(x)?;
        if q.distance > gamma {
            return Err(Error::SeedOffTube { seed });
        }
        status.insert(c, Some(q));
        active.push(BandNode { coord: c, query: q });
        queue.push_back(c);
    }

    while let Some(c) = queue.pop_front() {
        for nb in laplacian_neighbors(dim, c) {
            if status.contains_key(&nb) {
                continue;
            }
            let x = [nb[0] as f64 * dx, nb[1] as f64 * dx, nb[2] as f64 * dx];
            let q = surface.closest_point(x)?;
            if q.distance <= gamma {
                status.insert(nb, Some(q));
                active.push(BandNode { coord: nb, query: q });
                queue.push_back(nb);
            } else {
                status.insert(nb, None);
                ghosts.push(BandNode { coord: nb, query: q });
            }
        }
    }

    active.sort_by(|a, b| a.coord.cmp(&b.coord));
    ghosts.sort_by(|a, b| a.coord.cmp(&b.coord));
    let n_active = active.len();
    let mut nodes = active;
    nodes.extend(ghosts);
    let lattice_map = nodes.iter().enumerate().map(|(i, n)| (n.coord, i)).collect();
    let band = Band {
        dx,
        dim,
        degree,
        gamma,
        nodes,
        n_active,
        lattice_map,
    };
    band.check_stencils()?;
    Ok(band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn gamma_formula() {
        let s = Surface::circle([0.0, 0.0], 1.0).unwrap();
        let b = build_band(&s, 0.1, 2, &s.default_seeds()).unwrap();
        assert!((b.gamma() - 0.1 * 4.0 * 2f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((b.gamma() - 0.28284).abs() < 1e-5);
    }

    #[test]
    fn circle_matches_bounding_box_scan() {
        let s = Surface::circle([0.0, 0.0], 1.0).unwrap();
        let dx = 0.1;
        let b = build_band(&s, dx, 2, &s.default_seeds()).unwrap();
        // independent scan of every lattice node in [-2, 2]^2
        let gamma = dx * 4.0 * 2f64.sqrt() / 2.0;
        let mut scan = HashSet::new();
        for i in -20i64..=20 {
            for j in -20i64..=20 {
                let (x, y) = (i as f64 * dx, j as f64 * dx);
                if ((x * x + y * y).sqrt() - 1.0).abs() <= gamma {
                    scan.insert([i, j, 0]);
                }
            }
        }
        let band: HashSet<_> = b.active().iter().map(|n| n.coord).collect();
        assert_eq!(band, scan);
        assert_eq!(b.n_active(), scan.len());
    }

    #[test]
    fn sphere_ghosts_are_outside_and_adjacent() {
        let s = Surface::sphere([0.0; 3], 1.0).unwrap();
        let b = build_band(&s, 0.2, 2, &s.default_seeds()).unwrap();
        for g in b.ghosts() {
            assert!(g.query.distance > b.gamma());
            assert!(b
                .laplacian_neighbors(g.coord)
                .any(|c| b.index_of(&c).is_some_and(|i| b.is_active(i))));
        }
        for a in b.active() {
            assert!(a.query.distance <= b.gamma());
        }
        // lattice map is a bijection with actives first
        for (i, n) in b.nodes().iter().enumerate() {
            assert_eq!(b.index_of(&n.coord), Some(i));
        }
        b.check_stencils().unwrap();
    }

    #[test]
    fn neighbors() {
        let n: Vec<_> = laplacian_neighbors(2, [3, 5, 0]).collect();
        let set: HashSet<_> = n.iter().copied().collect();
        let expect: HashSet<_> = [[2, 5, 0], [4, 5, 0], [3, 4, 0], [3, 6, 0]].into_iter().collect();
        assert_eq!(set, expect);
        assert_eq!(laplacian_neighbors(3, [0, 0, 0]).count(), 6);
        for c in [[1, -4, 9], [0, 0, 0]] {
            assert_eq!(laplacian_neighbors(3, c).count(), 6);
            assert_eq!(laplacian_neighbors(2, c).count(), 4);
        }
    }

    #[test]
    fn stencil_base_centering() {
        assert_eq!(interp_stencil_base([3.4, 0.0, 0.0], 1.0, 2, 1)[0], 2);
        assert_eq!(interp_stencil_base([3.4, 0.0, 0.0], 1.0, 3, 1)[0], 2);
        assert_eq!(interp_stencil_base([0.26, 0.26, 0.0], 0.5, 2, 2), [0, 0, 0]);
        assert_eq!(stencil_offsets(2, 2).len(), 9);
        assert_eq!(stencil_offsets(2, 3).len(), 27);
    }

    #[test]
    fn seed_independence() {
        let s = Surface::torus([0.0; 3], 1.0, 0.5).unwrap();
        let a = build_band(&s, 0.1, 2, &[[1.5, 0.0, 0.0]]).unwrap();
        let b = build_band(&s, 0.1, 2, &[[0.0, -0.5, 0.0], [-1.0, 0.0, 0.5]]).unwrap();
        assert_eq!(a.n_active(), b.n_active());
        assert!(a.nodes().iter().zip(b.nodes()).all(|(x, y)| x.coord == y.coord));
    }

    #[test]
    fn refinement_growth() {
        let c = Surface::circle([0.0, 0.0], 1.0).unwrap();
        let n1 = build_band(&c, 0.1, 2, &c.default_seeds()).unwrap().n_active() as f64;
        let n2 = build_band(&c, 0.05, 2, &c.default_seeds()).unwrap().n_active() as f64;
        assert!(n2 / n1 > 1.8);
        let s = Surface::sphere([0.0; 3], 1.0).unwrap();
        let m1 = build_band(&s, 0.2, 2, &s.default_seeds()).unwrap().n_active() as f64;
        let m2 = build_band(&s, 0.1, 2, &s.default_seeds()).unwrap().n_active() as f64;
        assert!(m2 / m1 > 3.5);
    }

    #[test]
    fn error_paths() {
        let s = Surface::circle([0.0, 0.0], 0.5).unwrap();
        assert!(matches!(
            build_band(&s, 0.2, 2, &s.default_seeds()),
            Err(Error::TubeTooWide { .. })
        ));
        let u = Surface::circle([0.0, 0.0], 1.0).unwrap();
        assert!(matches!(build_band(&u, 0.1, 2, &[[3.0, 0.0, 0.0]]), Err(Error::SeedOffTube { .. })));
        assert!(build_band(&u, -0.1, 2, &u.default_seeds()).is_err());
    }
}
