//! Triangle meshes: ingestion, pseudo-normals and exact closest points.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use super::bvh::Bvh;
use super::{add, cross, dot, norm, normalize, scale, sub, Point, SurfaceQuery};
use crate::error::{Error, Result};

/// Which part of a triangle a closest point landed on. Vertex and edge ids
/// are global vertex indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feature {
    Vertex(usize),
    Edge(usize, usize),
    Face,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct MeshHit {
    pub triangle: usize,
    pub point: Point,
    pub distance: f64,
    pub feature: Feature,
}

#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    index: Bvh,
    face_normals: Vec<Point>,
    vertex_normals: Vec<Point>,
    edge_normals: HashMap<(usize, usize), Point>,
    bbox_min: Point,
    bbox_max: Point,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    /// Builds a mesh and its spatial index. Zero-area triangles are dropped.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= vertices.len()) {
                return Err(Error::InvalidSurface(format!(
                    "triangle {t} references vertex {v}, mesh has {} vertices",
                    vertices.len()
                )));
            }
        }
        let mut bbox_min = [f64::INFINITY; 3];
        let mut bbox_max = [f64::NEG_INFINITY; 3];
        for v in &vertices {
            for k in 0..3 {
                bbox_min[k] = bbox_min[k].min(v[k]);
                bbox_max[k] = bbox_max[k].max(v[k]);
            }
        }
        let diag = norm(sub(bbox_max, bbox_min));
        let n_in = triangles.len();
        let triangles: Vec<[usize; 3]> = triangles
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|i| vertices[i]);
                norm(cross(sub(b, a), sub(c, a))) > 1e-14 * diag * diag
            })
            .collect();
        if triangles.len() < n_in {
            log::warn!("dropped {} zero-area triangles", n_in - triangles.len());
        }
        if triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }

        let face_normals: Vec<Point> = triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| vertices[i]);
                normalize(cross(sub(b, a), sub(c, a)))
            })
            .collect();

        let mut vertex_acc = vec![[0.0; 3]; vertices.len()];
        let mut edge_normals: HashMap<(usize, usize), Point> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            let n = face_normals[t];
            for k in 0..3 {
                let (i, j, l) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let e1 = normalize(sub(vertices[j], vertices[i]));
                let e2 = normalize(sub(vertices[l], vertices[i]));
                let angle = dot(e1, e2).clamp(-1.0, 1.0).acos();
                vertex_acc[i] = add(vertex_acc[i], scale(n, angle));
                let e = edge_normals.entry(edge_key(i, j)).or_insert([0.0; 3]);
                *e = add(*e, n);
            }
        }
        let vertex_normals = vertex_acc
            .into_iter()
            .map(|v| if norm(v) > 0.0 { normalize(v) } else { v })
            .collect();
        for n in edge_normals.values_mut() {
            if norm(*n) > 0.0 {
                *n = normalize(*n);
            }
        }

        let index = Bvh::build(&vertices, &triangles);
        Ok(TriMesh {
            vertices,
            triangles,
            index,
            face_normals,
            vertex_normals,
            edge_normals,
            bbox_min,
            bbox_max,
        })
    }

    /// Loads an OFF or OBJ file, chosen by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = std::io::BufReader::new(file);
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        match ext.as_str() {
            "off" => Self::read_off(reader),
            "obj" => Self::read_obj(reader),
            _ => Err(Error::InvalidSurface(format!(
                "{}: unsupported mesh format (expected .off or .obj)",
                path.display()
            ))),
        }
    }

    pub fn read_off<R: BufRead>(reader: R) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let mut lines = reader.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(l) => {
                let content = l.split('#').next().unwrap_or("").trim().to_string();
                (!content.is_empty()).then_some(Ok((i + 1, content)))
            }
            Err(e) => Some(Err(Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })),
        });
        let (ln, header) = lines.next().ok_or_else(|| parse_err(0, "empty file".into()))??;
        let mut header_tokens = header.split_whitespace();
        if header_tokens.next() != Some("OFF") {
            return Err(parse_err(ln, format!("expected OFF header, found {header:?}")));
        }
        // counts may share the header line
        let rest: Vec<&str> = header_tokens.collect();
        let counts_line;
        let counts: Vec<&str> = if rest.is_empty() {
            let (_, l) = lines.next().ok_or_else(|| parse_err(ln, "missing counts".into()))??;
            counts_line = l;
            counts_line.split_whitespace().collect()
        } else {
            rest
        };
        let parse_usize = |s: &str, line: usize| {
            s.parse::<usize>().map_err(|_| parse_err(line, format!("bad integer {s:?}")))
        };
        if counts.len() < 2 {
            return Err(parse_err(ln, "expected vertex and face counts".into()));
        }
        let nv = parse_usize(counts[0], ln)?;
        let nf = parse_usize(counts[1], ln)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (l, text) = lines.next().ok_or_else(|| parse_err(ln, "truncated vertex list".into()))??;
            let xyz: Vec<f64> = text
                .split_whitespace()
                .take(3)
                .map(|s| s.parse::<f64>().map_err(|_| parse_err(l, format!("bad coordinate {s:?}"))))
                .collect::<Result<_>>()?;
            if xyz.len() != 3 {
                return Err(parse_err(l, "vertex needs three coordinates".into()));
            }
            vertices.push([xyz[0], xyz[1], xyz[2]]);
        }
        let mut triangles = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (l, text) = lines.next().ok_or_else(|| parse_err(ln, "truncated face list".into()))??;
            let ids: Vec<usize> = text
                .split_whitespace()
                .map(|s| parse_usize(s, l))
                .collect::<Result<_>>()?;
            if ids.first() != Some(&3) || ids.len() < 4 {
                return Err(parse_err(l, "only triangular faces are supported".into()));
            }
            triangles.push([ids[1], ids[2], ids[3]]);
        }
        Self::new(vertices, triangles)
    }

    pub fn read_obj<R: BufRead>(reader: R) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let ln = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: ln,
                message: e.to_string(),
            })?;
            let content = line.split('#').next().unwrap_or("").trim();
            let mut tokens = content.split_whitespace();
            match tokens.next() {
                None => {}
                Some("v") => {
                    let xyz: Vec<f64> = tokens
                        .take(3)
                        .map(|s| {
                            s.parse::<f64>().map_err(|_| Error::Parse {
                                line: ln,
                                message: format!("bad coordinate {s:?}"),
                            })
                        })
                        .collect::<Result<_>>()?;
                    if xyz.len() != 3 {
                        return Err(Error::Parse {
                            line: ln,
                            message: "vertex needs three coordinates".into(),
                        });
                    }
                    vertices.push([xyz[0], xyz[1], xyz[2]]);
                }
                Some("f") => {
                    let ids: Vec<usize> = tokens
                        .map(|s| {
                            let first = s.split('/').next().unwrap_or("");
                            let idx: i64 = first.parse().map_err(|_| Error::Parse {
                                line: ln,
                                message: format!("bad face index {s:?}"),
                            })?;
                            let resolved = if idx < 0 { vertices.len() as i64 + idx } else { idx - 1 };
                            usize::try_from(resolved).map_err(|_| Error::Parse {
                                line: ln,
                                message: format!("face index {idx} out of range"),
                            })
                        })
                        .collect::<Result<_>>()?;
                    if ids.len() != 3 {
                        return Err(Error::Parse {
                            line: ln,
                            message: format!("only triangular faces are supported (got {} vertices)", ids.len()),
                        });
                    }
                    triangles.push([ids[0], ids[1], ids[2]]);
                }
                Some(other) => {
                    return Err(Error::Parse {
                        line: ln,
                        message: format!("unsupported OBJ record {other:?}; only 'v' and 'f' are accepted"),
                    })
                }
            }
        }
        Self::new(vertices, triangles)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn index(&self) -> &Bvh {
        &self.index
    }

    pub fn bbox(&self) -> (Point, Point) {
        (self.bbox_min, self.bbox_max)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        norm(sub(self.bbox_max, self.bbox_min))
    }

    /// Uniformly rescales so the bounding-box extent along `axis` equals
    /// `height`, then moves the bounding-box center to the origin.
    pub fn scaled_and_centered(&self, height: Option<f64>, axis: usize) -> Result<Self> {
        let extent = self.bbox_max[axis] - self.bbox_min[axis];
        let s = match height {
            Some(h) if extent > 0.0 => h / extent,
            Some(_) => return Err(Error::InvalidSurface("mesh is flat along the height axis".into())),
            None => 1.0,
        };
        let center = scale(add(self.bbox_min, self.bbox_max), 0.5);
        let vertices = self.vertices.iter().map(|&v| scale(sub(v, center), s)).collect();
        Self::new(vertices, self.triangles.clone())
    }

    /// One vertex per connected component of the triangle graph.
    pub fn component_seeds(&self) -> Vec<Point> {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut used = vec![false; n];
        for t in &self.triangles {
            for &v in t {
                used[v] = true;
            }
            for k in 1..3 {
                let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        let mut seeds = Vec::new();
        for v in 0..n {
            if used[v] && seen.insert(find(&mut parent, v)) {
                seeds.push(self.vertices[v]);
            }
        }
        seeds
    }

    pub(crate) fn closest_point_feature(&self, p: Point) -> MeshHit {
        let (triangle, d2, (point, feature)) = self
            .index
            .nearest(p, |t| {
                let (cp, feature) = closest_on_triangle(p, self.triangles[t], &self.vertices);
                let d = sub(p, cp);
                (dot(d, d), (cp, feature))
            })
            .expect("mesh is nonempty");
        MeshHit {
            triangle,
            point,
            distance: d2.sqrt(),
            feature,
        }
    }

    /// Brute-force scan over all triangles; test oracle for the BVH.
    pub fn closest_point_brute_force(&self, p: Point) -> (Point, f64) {
        let mut best = ([0.0; 3], f64::INFINITY);
        for tri in &self.triangles {
            let (cp, _) = closest_on_triangle(p, *tri, &self.vertices);
            let d = norm(sub(p, cp));
            if d < best.1 {
                best = (cp, d);
            }
        }
        best
    }

    pub(crate) fn pseudo_normal(&self, triangle: usize, feature: Feature) -> Point {
        match feature {
            Feature::Face => self.face_normals[triangle],
            Feature::Edge(a, b) => self.edge_normals[&edge_key(a, b)],
            Feature::Vertex(v) => self.vertex_normals[v],
        }
    }

    pub fn closest_point(&self, x: Point) -> SurfaceQuery {
        let hit = self.closest_point_feature(x);
        let pseudo = self.pseudo_normal(hit.triangle, hit.feature);
        let normal = if hit.distance > 1e-8 * self.bbox_diagonal() {
            let n = scale(sub(x, hit.point), 1.0 / hit.distance);
            if dot(n, pseudo) < 0.0 {
                scale(n, -1.0)
            } else {
                n
            }
        } else {
            pseudo
        };
        SurfaceQuery {
            query_point: x,
            closest_point: hit.point,
            distance: hit.distance,
            normal,
        }
    }
}

/// Closest point on triangle `tri` to `p` by Voronoi-region classification.
pub(crate) fn closest_on_triangle(p: Point, tri: [usize; 3], vertices: &[Point]) -> (Point, Feature) {
    let [ia, ib, ic] = tri;
    let (a, b, c) = (vertices[ia], vertices[ib], vertices[ic]);
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, Feature::Vertex(ia));
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, Feature::Vertex(ib));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (add(a, scale(ab, v)), Feature::Edge(ia, ib));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, Feature::Vertex(ic));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (add(a, scale(ac, w)), Feature::Edge(ia, ic));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (add(b, scale(sub(c, b), w)), Feature::Edge(ib, ic));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (add(a, add(scale(ab, v), scale(ac, w))), Feature::Face)
}
