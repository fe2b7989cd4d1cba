//! Axis-aligned bounding volume hierarchy over triangles, used for
//! closest-point queries.

use super::Point;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
struct Aabb {
    min: Point,
    max: Point,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    fn grow(&mut self, p: Point) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    fn merge(&mut self, other: &Aabb) {
        self.grow(other.min);
        self.grow(other.max);
    }

    fn dist2(&self, p: Point) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Median-split BVH. Triangle ids are stored in leaf order in `order`.
#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(vertices: &[Point], triangles: &[[usize; 3]]) -> Self {
        let boxes: Vec<Aabb> = triangles
            .iter()
            .map(|t| {
                let mut b = Aabb::empty();
                for &v in t {
                    b.grow(vertices[v]);
                }
                b
            })
            .collect();
        let centroids: Vec<Point> = boxes
            .iter()
            .map(|b| {
                [
                    0.5 * (b.min[0] + b.max[0]),
                    0.5 * (b.min[1] + b.max[1]),
                    0.5 * (b.min[2] + b.max[2]),
                ]
            })
            .collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1),
            order: (0..triangles.len()).collect(),
        };
        if !triangles.is_empty() {
            bvh.build_node(&boxes, &centroids, 0, triangles.len());
        }
        bvh
    }

    fn build_node(&mut self, boxes: &[Aabb], centroids: &[Point], start: usize, end: usize) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbox = Aabb::empty();
        for &t in &self.order[start..end] {
            bounds.merge(&boxes[t]);
            cbox.grow(centroids[t]);
        }
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bounds, start, end });
            return id;
        }
        let axis = (0..3)
            .max_by(|&a, &b| {
                (cbox.max[a] - cbox.min[a]).total_cmp(&(cbox.max[b] - cbox.min[b]))
            })
            .unwrap();
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis].total_cmp(&centroids[b][axis])
        });
        // placeholder, patched once children exist
        self.nodes.push(Node::Leaf { bounds, start, end });
        let left = self.build_node(boxes, centroids, start, mid);
        let right = self.build_node(boxes, centroids, mid, end);
        self.nodes[id] = Node::Inner { bounds, left, right };
        id
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Finds the primitive minimizing `dist2(p, tri)`. `dist2` returns the
    /// squared distance together with arbitrary payload.
    pub fn nearest<T, F>(&self, p: Point, mut dist2: F) -> Option<(usize, f64, T)>
    where
        F: FnMut(usize) -> (f64, T),
    {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64, T)> = None;
        let mut best_d2 = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds().dist2(p) > best_d2 {
                continue;
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[*start..*end] {
                        let (d2, payload) = dist2(t);
                        // ties resolve to the lowest triangle id
                        let better = match &best {
                            None => true,
                            Some((bt, _, _)) => d2 < best_d2 || (d2 == best_d2 && t < *bt),
                        };
                        if better {
                            best_d2 = d2;
                            best = Some((t, d2, payload));
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().dist2(p);
                    let dr = self.nodes[*right].bounds().dist2(p);
                    // visit the nearer child first
                    if dl <= dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        best
    }
}
