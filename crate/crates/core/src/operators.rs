//! Discrete operators on the band: centered Laplacian, closest-point
//! extension by tensor-product barycentric Lagrange interpolation, and the
//! stabilized surface Helmholtz matrix
//! `A = (c + 2d/dx^2) I - (2d/dx^2 I + L) E`.

use std::f64::consts::PI;

use crate::band::{stencil_offsets, Band, Lattice};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::linalg::{CsrMatrix, RowBuilder};

pub const MAX_DEGREE: usize = 6;

/// Barycentric Lagrange weights on the uniform nodes `0..=p` at `t`.
pub fn interp_weights_1d(p: usize, t: f64) -> Vec<f64> {
    assert!(p <= MAX_DEGREE, "interpolation degree {p} above {MAX_DEGREE}");
    let mut out = vec![0.0; p + 1];
    if let Some(j) = (0..=p).find(|&j| t == j as f64) {
        out[j] = 1.0;
        return out;
    }
    let mut binom = 1.0;
    let mut sum = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        *o = sign * binom / (t - j as f64);
        sum += *o;
        binom = binom * (p - j) as f64 / (j + 1) as f64;
    }
    out.iter_mut().for_each(|w| *w /= sum);
    out
}

/// Interpolation weights of `cp` over its band stencil, as
/// `(active node, weight)` pairs in stencil order.
pub fn interpolation_row(band: &Band, cp: Point) -> std::result::Result<Vec<(usize, f64)>, Lattice> {
    let (dim, p, dx) = (band.dim(), band.degree(), band.dx());
    let base = band.interp_stencil_base(cp);
    let axis_weights: Vec<Vec<f64>> = (0..dim)
        .map(|k| interp_weights_1d(p, cp[k] / dx - base[k] as f64))
        .collect();
    let nodes = band.stencil_indices(cp)?;
    Ok(stencil_offsets(p, dim)
        .into_iter()
        .zip(nodes)
        .map(|(o, node)| {
            let w: f64 = (0..dim).map(|k| axis_weights[k][o[k] as usize]).product();
            (node, w)
        })
        .collect())
}

/// Extension matrix, `(N_A + N_G) x N_A`.
pub fn assemble_extension(band: &Band) -> Result<CsrMatrix> {
    let mut b = RowBuilder::new(band.n_active());
    for (i, node) in band.nodes().iter().enumerate() {
        let mut row = interpolation_row(band, node.query.closest_point)
            .map_err(|missing| Error::StencilIncomplete { node: i, missing })?;
        row.sort_unstable_by_key(|e| e.0);
        for (c, w) in row {
            b.push(c, w);
        }
        b.finish_row();
    }
    Ok(b.build())
}

/// Centered `2d + 1` point Laplacian, `N_A x (N_A + N_G)`.
pub fn assemble_laplacian(band: &Band) -> Result<CsrMatrix> {
    let h2 = band.dx() * band.dx();
    let diag = -2.0 * band.dim() as f64 / h2;
    let mut b = RowBuilder::new(band.n_total());
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(7);
    for (i, node) in band.active().iter().enumerate() {
        row.clear();
        row.push((i, diag));
        for nb in band.laplacian_neighbors(node.coord) {
            let j = band
                .index_of(&nb)
                .ok_or(Error::StencilIncomplete { node: i, missing: nb })?;
            row.push((j, 1.0 / h2));
        }
        row.sort_unstable_by_key(|e| e.0);
        for &(c, v) in &row {
            b.push(c, v);
        }
        b.finish_row();
    }
    Ok(b.build())
}

/// The assembled global problem.
#[derive(Clone, Debug)]
pub struct GlobalOperators {
    pub laplacian: CsrMatrix,
    pub extension: CsrMatrix,
    pub helmholtz: CsrMatrix,
    pub c: f64,
}

impl GlobalOperators {
    pub fn assemble(band: &Band, c: f64) -> Result<Self> {
        let laplacian = assemble_laplacian(band)?;
        let extension = assemble_extension(band)?;
        let helmholtz = helmholtz_from_parts(band, &laplacian, &extension, c)?;
        Ok(GlobalOperators {
            laplacian,
            extension,
            helmholtz,
            c,
        })
    }
}

fn helmholtz_from_parts(band: &Band, laplacian: &CsrMatrix, extension: &CsrMatrix, c: f64) -> Result<CsrMatrix> {
    if !(c > 0.0) {
        return Err(Error::InvalidConfig(format!("shift c = {c} must be positive")));
    }
    let k = 2.0 * band.dim() as f64 / (band.dx() * band.dx());
    let n = band.n_active();
    // [I 0] padded to the active+ghost columns
    let mut pad = RowBuilder::new(band.n_total());
    for i in 0..n {
        pad.push(i, 1.0);
        pad.finish_row();
    }
    let shifted = laplacian.add_scaled(1.0, &pad.build(), k)?;
    let product = shifted.matmul(extension)?;
    CsrMatrix::identity(n).add_scaled(c + k, &product, -1.0)
}

/// `c I - Delta_S^h` with the stabilized surface Laplacian.
pub fn assemble_helmholtz(band: &Band, c: f64) -> Result<CsrMatrix> {
    let laplacian = assemble_laplacian(band)?;
    let extension = assemble_extension(band)?;
    helmholtz_from_parts(band, &laplacian, &extension, c)
}

/// Samples a surface field at the closest point of every active node.
pub fn sample_rhs<F: Fn(Point) -> f64>(band: &Band, f: F) -> Vec<f64> {
    band.active().iter().map(|n| f(n.query.closest_point)).collect()
}

/// Built-in right-hand sides. The eigenfunction presets assume the unit
/// circle/sphere at the origin and are evaluated on the normalized position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RhsPreset {
    /// `(c + 1) sin(theta)`, exact solution `sin(theta)` on the unit circle.
    EigenCircle,
    /// `(c + 2) z`, exact solution `z` on the unit sphere.
    EigenSphere,
    /// `phi (pi - phi) sin(3 phi) (sin(theta) + cos(10 theta)) / 2` with
    /// `phi` the polar angle from `+z` and `theta` the azimuth.
    BunnySpherical,
}

impl RhsPreset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "eigen-circle" => Some(RhsPreset::EigenCircle),
            "eigen-sphere" => Some(RhsPreset::EigenSphere),
            "bunny-spherical" => Some(RhsPreset::BunnySpherical),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RhsPreset::EigenCircle => "eigen-circle",
            RhsPreset::EigenSphere => "eigen-sphere",
            RhsPreset::BunnySpherical => "bunny-spherical",
        }
    }

    pub fn value(self, y: Point, c: f64) -> f64 {
        match self {
            RhsPreset::EigenCircle => (c + 1.0) * y[1] / y[0].hypot(y[1]),
            RhsPreset::EigenSphere => (c + 2.0) * y[2] / crate::geometry::norm(y),
            RhsPreset::BunnySpherical => {
                let r = crate::geometry::norm(y);
                let phi = if r > 0.0 { (y[2] / r).clamp(-1.0, 1.0).acos() } else { 0.0 };
                let theta = y[1].atan2(y[0]);
                phi * (PI - phi) * (3.0 * phi).sin() * (theta.sin() + (10.0 * theta).cos()) / 2.0
            }
        }
    }

    /// Exact surface solution, where one is known.
    pub fn exact(self, y: Point) -> Option<f64> {
        match self {
            RhsPreset::EigenCircle => Some(y[1] / y[0].hypot(y[1])),
            RhsPreset::EigenSphere => Some(y[2] / crate::geometry::norm(y)),
            RhsPreset::BunnySpherical => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::build_band;
    use crate::geometry::Surface;

    fn circle_band(dx: f64, p: usize) -> Band {
        let s = Surface::circle([0.0, 0.0], 1.0).unwrap();
        build_band(&s, dx, p, &s.default_seeds()).unwrap()
    }

    fn sphere_band(dx: f64, p: usize) -> Band {
        let s = Surface::sphere([0.0; 3], 1.0).unwrap();
        build_band(&s, dx, p, &s.default_seeds()).unwrap()
    }

    /// Lagrange basis evaluated directly from its product form.
    fn lagrange_basis(p: usize, j: usize, t: f64) -> f64 {
        (0..=p).filter(|&k| k != j).map(|k| (t - k as f64) / (j as f64 - k as f64)).product()
    }

    #[test]
    fn weights_1d() {
        assert_eq!(interp_weights_1d(1, 0.5), vec![0.5, 0.5]);
        assert_eq!(interp_weights_1d(2, 1.0), vec![0.0, 1.0, 0.0]);
        let w = interp_weights_1d(2, 0.5);
        let expect = [0.375, 0.75, -0.125];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        for p in 0..=MAX_DEGREE {
            for t in [0.3, 1.7, 2.49, -0.2] {
                let w = interp_weights_1d(p, t);
                for (j, wj) in w.iter().enumerate() {
                    assert!((wj - lagrange_basis(p, j, t)).abs() < 1e-12, "p={p} t={t} j={j}");
                }
            }
        }
    }

    #[test]
    fn extension_rows_partition_unity_and_shape() {
        let band = circle_band(0.1, 2);
        let e = assemble_extension(&band).unwrap();
        assert_eq!((e.n_rows(), e.n_cols()), (band.n_total(), band.n_active()));
        for r in 0..e.n_rows() {
            let (cols, vals) = e.row(r);
            assert!(cols.len() <= 9);
            assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let ones = e.spmv(&vec![1.0; band.n_active()]).unwrap();
        assert!(ones.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn extension_reproduces_polynomials() {
        for (band, p) in [(circle_band(0.1, 2), 2), (circle_band(0.1, 3), 3), (sphere_band(0.2, 2), 2)] {
            let e = assemble_extension(&band).unwrap();
            // total-degree p polynomial in ambient coordinates
            let poly = |x: Point| -> f64 {
                let (a, b, c) = (x[0], x[1], x[2]);
                match p {
                    2 => 1.0 + a - 2.0 * b + 0.5 * a * a + a * b - 3.0 * b * b + c - c * c + a * c,
                    _ => 0.3 + a * a * a - b * b * a + 2.0 * b * b * b - a * b,
                }
            };
            let samples: Vec<f64> = (0..band.n_active()).map(|i| poly(band.node_position(i))).collect();
            let out = e.spmv(&samples).unwrap();
            for (i, node) in band.nodes().iter().enumerate() {
                let exact = poly(node.query.closest_point);
                assert!((out[i] - exact).abs() < 1e-11, "row {i}: {} vs {exact}", out[i]);
            }
        }
    }

    #[test]
    fn laplacian_stencil() {
        let band = circle_band(0.1, 2);
        let l = assemble_laplacian(&band).unwrap();
        let consts = l.spmv(&vec![1.0; band.n_total()]).unwrap();
        assert!(consts.iter().all(|v| v.abs() < 1e-9));
        let x2: Vec<f64> = (0..band.n_total()).map(|i| band.node_position(i)[0].powi(2)).collect();
        let out = l.spmv(&x2).unwrap();
        assert!(out.iter().all(|v| (v - 2.0).abs() < 1e-10));
        for r in 0..l.n_rows() {
            assert!(l.row(r).0.len() <= 5);
            assert!((l.get(r, r) + 400.0).abs() < 1e-9);
        }
    }

    #[test]
    fn helmholtz_annihilates_constants_and_matches_definition() {
        let band = circle_band(0.1, 2);
        let c = 1.5;
        let ops = GlobalOperators::assemble(&band, c).unwrap();
        let a = &ops.helmholtz;
        let out = a.spmv(&vec![1.0; band.n_active()]).unwrap();
        assert!(out.iter().all(|v| (v - c).abs() < 1e-10 * c.max(1.0) * 1e2));
        // entrywise against dense evaluation of the definition
        let k = 4.0 / 0.01;
        let l = ops.laplacian.to_dense();
        let e = ops.extension.to_dense();
        let n = band.n_active();
        for i in (0..n).step_by(17) {
            for j in 0..n {
                let mut m = k * e[i][j];
                for (q, lq) in l[i].iter().enumerate() {
                    m += lq * e[q][j];
                }
                let expect = if i == j { c + k } else { 0.0 } - m;
                assert!((a.get(i, j) - expect).abs() < 1e-9, "({i},{j})");
            }
        }
    }

    #[test]
    fn stabilized_matches_direct_on_extension_subspace() {
        let band = circle_band(0.1, 2);
        let ops = GlobalOperators::assemble(&band, 1.0).unwrap();
        let n = band.n_active();
        let k = 4.0 / 0.01;
        // Delta_S v - Delta E v = k (E v - v) on the active rows
        let v: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.4).collect();
        let ev = ops.extension.spmv(&v).unwrap();
        let direct = ops.laplacian.spmv(&ev).unwrap();
        let av = ops.helmholtz.spmv(&v).unwrap();
        for i in 0..n {
            let stabilized = v[i] - av[i]; // c = 1
            let diff = stabilized - direct[i];
            assert!((diff - k * (ev[i] - v[i])).abs() < 1e-8);
        }
    }

    #[test]
    fn presets() {
        let band = sphere_band(0.2, 2);
        let ones = sample_rhs(&band, |_| 1.0);
        assert!(ones.iter().all(|&v| v == 1.0));
        let z = sample_rhs(&band, |y| RhsPreset::EigenSphere.exact(y).unwrap());
        assert!(z.iter().all(|v| (-1.0..=1.0).contains(v)));
        let y = [0.0, 1.0, 0.0]; // phi = pi/2, theta = pi/2
        let expect = (PI / 2.0) * (PI / 2.0) * (1.5 * PI).sin() * (1.0 + (5.0 * PI).cos()) / 2.0;
        assert!((RhsPreset::BunnySpherical.value(y, 1.0) - expect).abs() < 1e-14);
        assert_eq!(RhsPreset::parse("eigen-circle"), Some(RhsPreset::EigenCircle));
        assert_eq!(RhsPreset::parse("nope"), None);
    }

    #[test]
    fn helmholtz_rejects_nonpositive_shift() {
        let band = circle_band(0.1, 2);
        assert!(assemble_helmholtz(&band, 0.0).is_err());
    }
}
