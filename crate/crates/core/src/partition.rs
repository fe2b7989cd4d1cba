//! Node graph of the active band and its disjoint partitioning.
//!
//! The partitioner places well-spread seeds by farthest-point sampling,
//! grows all regions breadth-first at once (the smallest region claims the
//! next node), then runs a few sweeps of greedy boundary refinement that
//! only accept moves with a strictly positive edge-cut gain.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::band::Band;
use crate::error::{Error, Result};

/// Symmetric adjacency between active nodes, stored compressed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeGraph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl NodeGraph {
    /// Builds a graph from adjacency lists. Lists are sorted and
    /// deduplicated; asymmetric input or self-loops are rejected.
    pub fn from_adjacency(mut lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        for (i, l) in lists.iter_mut().enumerate() {
            l.sort_unstable();
            l.dedup();
            if l.iter().any(|&j| j >= n || j == i) {
                return Err(Error::InvalidConfig(format!("bad adjacency list for node {i}")));
            }
        }
        for (i, l) in lists.iter().enumerate() {
            if l.iter().any(|&j| lists[j].binary_search(&i).is_err()) {
                return Err(Error::InvalidConfig(format!("adjacency of node {i} is not symmetric")));
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        for l in lists {
            targets.extend(l);
            offsets.push(targets.len());
        }
        Ok(NodeGraph { offsets, targets })
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        let lists = (0..n)
            .map(|i| {
                let mut l = Vec::new();
                if i > 0 {
                    l.push(i - 1);
                }
                if i + 1 < n {
                    l.push(i + 1);
                }
                l
            })
            .collect();
        Self::from_adjacency(lists).expect("path graph is valid")
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Edges join active nodes that are neighbors in the Laplacian stencil.
pub fn build_graph(band: &Band) -> NodeGraph {
    let lists = band
        .active()
        .iter()
        .map(|node| {
            let mut l: Vec<usize> = band
                .laplacian_neighbors(node.coord)
                .filter_map(|nb| band.index_of(&nb))
                .filter(|&j| band.is_active(j))
                .collect();
            l.sort_unstable();
            l
        })
        .collect();
    NodeGraph::from_adjacency(lists).expect("lattice adjacency is symmetric")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionOptions {
    /// Largest allowed ratio of biggest to smallest part during refinement.
    pub balance_tol: f64,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            balance_tol: 1.2,
            max_sweeps: 10,
            seed: 0,
        }
    }
}

/// Labels every active node with a part in `0..n_parts`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DisjointPartition {
    labels: Vec<usize>,
    n_parts: usize,
}

impl DisjointPartition {
    /// Validates that every label is in range and every part is nonempty.
    pub fn new(labels: Vec<usize>, n_parts: usize) -> Result<Self> {
        if n_parts == 0 {
            return Err(Error::InvalidConfig("partition needs at least one part".into()));
        }
        let mut sizes = vec![0usize; n_parts];
        for (line, &l) in labels.iter().enumerate() {
            if l >= n_parts {
                return Err(Error::LabelOutOfRange {
                    line: line + 1,
                    label: l as i64,
                    n_parts,
                });
            }
            sizes[l] += 1;
        }
        if let Some(j) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyPart(j));
        }
        Ok(DisjointPartition { labels, n_parts })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_parts(&self) -> usize {
        self.n_parts
    }

    pub fn part_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_parts];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Nodes of part `j` in increasing order.
    pub fn members(&self, j: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == j)
            .map(|(i, _)| i)
            .collect()
    }

    /// Largest over smallest part size.
    pub fn balance(&self) -> f64 {
        let sizes = self.part_sizes();
        let max = *sizes.iter().max().unwrap();
        let min = *sizes.iter().min().unwrap();
        max as f64 / min as f64
    }

    /// Number of connected components each part induces.
    pub fn components_per_part(&self, graph: &NodeGraph) -> Vec<usize> {
        let mut seen = vec![false; self.labels.len()];
        let mut counts = vec![0; self.n_parts];
        let mut queue = VecDeque::new();
        for start in 0..self.labels.len() {
            if seen[start] {
                continue;
            }
            let part = self.labels[start];
            counts[part] += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                for &w in graph.neighbors(v) {
                    if !seen[w] && self.labels[w] == part {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        counts
    }

    /// One label per line, line `i` for active node `i`.
    pub fn write_labels<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for l in &self.labels {
            writeln!(w, "{l}")?;
        }
        Ok(())
    }

    /// Reads a label file for `n_nodes` active nodes. With `n_parts` unset
    /// the part count is one more than the largest label.
    pub fn read_labels<R: BufRead>(r: R, n_nodes: usize, n_parts: Option<usize>) -> Result<Self> {
        let mut raw = Vec::with_capacity(n_nodes);
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v: i64 = t.parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("expected an integer label, got {t:?}"),
            })?;
            raw.push((i + 1, v));
        }
        if raw.len() != n_nodes {
            return Err(Error::WrongLength {
                expected: n_nodes,
                got: raw.len(),
            });
        }
        let n_parts = n_parts.unwrap_or_else(|| raw.iter().map(|&(_, v)| v.max(0) as usize + 1).max().unwrap_or(1));
        let mut labels = Vec::with_capacity(n_nodes);
        for (line, v) in raw {
            if v < 0 || v as usize >= n_parts {
                return Err(Error::LabelOutOfRange { line, label: v, n_parts });
            }
            labels.push(v as usize);
        }
        Self::new(labels, n_parts)
    }
}

/// Number of edges whose endpoints carry different labels.
pub fn edge_cut(graph: &NodeGraph, labels: &[usize]) -> usize {
    (0..graph.n_nodes())
        .map(|i| graph.neighbors(i).iter().filter(|&&j| j > i && labels[j] != labels[i]).count())
        .sum()
}

/// Greedy graph growing followed by boundary refinement.
pub fn partition(graph: &NodeGraph, n_parts: usize, opts: &PartitionOptions) -> Result<DisjointPartition> {
    let n = graph.n_nodes();
    if n_parts == 0 {
        return Err(Error::InvalidConfig("number of subdomains must be at least 1".into()));
    }
    if n_parts > n {
        return Err(Error::TooManyParts { n_parts, n_nodes: n });
    }
    let mut labels = grow_regions(graph, n_parts);
    rebalance(graph, &mut labels, n_parts, opts.balance_tol);
    refine(graph, &mut labels, n_parts, opts);
    let part = DisjointPartition::new(labels, n_parts)?;
    for (j, &c) in part.components_per_part(graph).iter().enumerate() {
        if c > 1 {
            log::warn!("part {j} is split into {c} connected components");
        }
    }
    Ok(part)
}

const UNSET: usize = usize::MAX;

/// Breadth-first hop counts from `sources`; unreachable nodes stay at
/// `usize::MAX`.
fn hop_distances(graph: &NodeGraph, sources: &[usize], dist: &mut [usize]) {
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        for &w in graph.neighbors(v) {
            if dist[w] > dist[v] + 1 {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
}

/// Farthest-point seeds: each new seed maximizes the hop distance to the
/// seeds chosen so far (unreachable nodes first, ties to the lowest index).
fn spread_seeds(graph: &NodeGraph, n_parts: usize) -> Vec<usize> {
    let n = graph.n_nodes();
    let farthest = |dist: &[usize]| (0..n).max_by_key(|&i| (dist[i], Reverse(i))).unwrap();
    let mut dist = vec![usize::MAX; n];
    hop_distances(graph, &[0], &mut dist);
    let mut seeds = vec![farthest(&dist)];
    dist.iter_mut().for_each(|d| *d = usize::MAX);
    hop_distances(graph, &seeds, &mut dist);
    while seeds.len() < n_parts {
        let s = farthest(&dist);
        seeds.push(s);
        hop_distances(graph, &[s], &mut dist);
    }
    seeds
}

fn grow_regions(graph: &NodeGraph, n_parts: usize) -> Vec<usize> {
    let n = graph.n_nodes();
    let mut labels = vec![UNSET; n];
    let seeds = spread_seeds(graph, n_parts);
    let mut sizes = vec![1usize; n_parts];
    let mut queues: Vec<VecDeque<usize>> = seeds.iter().map(|&s| VecDeque::from([s])).collect();
    for (part, &s) in seeds.iter().enumerate() {
        labels[s] = part;
    }
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n_parts).map(|p| Reverse((1, p))).collect();
    while let Some(Reverse((_, part))) = heap.pop() {
        let queue = &mut queues[part];
        while let Some(&v) = queue.front() {
            match graph.neighbors(v).iter().find(|&&w| labels[w] == UNSET) {
                Some(&w) => {
                    labels[w] = part;
                    sizes[part] += 1;
                    queue.push_back(w);
                    heap.push(Reverse((sizes[part], part)));
                    break;
                }
                None => {
                    queue.pop_front();
                }
            }
        }
    }
    // nodes in components without a seed join the part that reaches them
    // first from any labeled node
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| labels[i] != UNSET).collect();
    while let Some(v) = queue.pop_front() {
        for &w in graph.neighbors(v) {
            if labels[w] == UNSET {
                labels[w] = labels[v];
                queue.push_back(w);
            }
        }
    }
    for i in 0..n {
        if labels[i] == UNSET {
            labels[i] = (0..n_parts).min_by_key(|&p| (sizes[p], p)).unwrap();
            sizes[labels[i]] += 1;
        }
    }
    // number parts in order of their lowest node
    let mut rename = vec![UNSET; n_parts];
    let mut next = 0;
    for l in labels.iter_mut() {
        if rename[*l] == UNSET {
            rename[*l] = next;
            next += 1;
        }
        *l = rename[*l];
    }
    labels
}

/// Shifts nodes one at a time along a chain of adjacent parts from the
/// largest part to the smallest until the size ratio is within `tol`.
/// Growth alone can leave a part boxed in early and undersized.
fn rebalance(graph: &NodeGraph, labels: &mut [usize], n_parts: usize, tol: f64) {
    let n = graph.n_nodes();
    let mut sizes = vec![0usize; n_parts];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    let mut seen = HashSet::new();
    for _ in 0..n {
        let big = (0..n_parts).max_by_key(|&p| (sizes[p], Reverse(p))).unwrap();
        let small = (0..n_parts).min_by_key(|&p| (sizes[p], p)).unwrap();
        if sizes[big] as f64 <= tol * sizes[small] as f64 {
            return;
        }
        let Some(path) = part_path(graph, labels, n_parts, big, small) else {
            return;
        };
        let mut moved = false;
        for pair in path.windows(2) {
            let (from, to) = (pair[0], pair[1]);
            let best = (0..n)
                .filter(|&v| labels[v] == from && graph.neighbors(v).iter().any(|&w| labels[w] == to))
                .map(|v| {
                    let nb = graph.neighbors(v);
                    let gain = nb.iter().filter(|&&w| labels[w] == to).count() as i64
                        - nb.iter().filter(|&&w| labels[w] == from).count() as i64;
                    (v, gain)
                })
                .filter(|&(v, _)| sizes[from] > 1 && stays_connected_without(graph, labels, v, &mut seen))
                .max_by_key(|&(v, gain)| (gain, Reverse(v)));
            match best {
                Some((v, _)) => {
                    labels[v] = to;
                    sizes[from] -= 1;
                    sizes[to] += 1;
                    moved = true;
                }
                None => break,
            }
        }
        if !moved {
            return;
        }
    }
}

/// Shortest chain of adjacent parts from `from` to `to`.
fn part_path(graph: &NodeGraph, labels: &[usize], n_parts: usize, from: usize, to: usize) -> Option<Vec<usize>> {
    let mut adjacent = vec![Vec::new(); n_parts];
    for v in 0..graph.n_nodes() {
        for &w in graph.neighbors(v) {
            let (a, b) = (labels[v], labels[w]);
            if a != b && !adjacent[a].contains(&b) {
                adjacent[a].push(b);
            }
        }
    }
    adjacent.iter_mut().for_each(|l| l.sort_unstable());
    let mut prev = vec![UNSET; n_parts];
    prev[from] = from;
    let mut queue = VecDeque::from([from]);
    while let Some(p) = queue.pop_front() {
        if p == to {
            let mut path = vec![to];
            let mut q = to;
            while q != from {
                q = prev[q];
                path.push(q);
            }
            path.reverse();
            return Some(path);
        }
        for &r in &adjacent[p] {
            if prev[r] == UNSET {
                prev[r] = p;
                queue.push_back(r);
            }
        }
    }
    None
}

fn refine(graph: &NodeGraph, labels: &mut [usize], n_parts: usize, opts: &PartitionOptions) {
    if n_parts < 2 {
        return;
    }
    let n = graph.n_nodes();
    let mut sizes = vec![0usize; n_parts];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut counts = vec![0usize; n_parts];
    let mut cut = edge_cut(graph, labels);
    let mut seen = HashSet::new();

    for _ in 0..opts.max_sweeps {
        order.shuffle(&mut rng);
        let mut moved = 0;
        for &v in &order {
            let a = labels[v];
            if sizes[a] <= 1 || graph.neighbors(v).iter().all(|&w| labels[w] == a) {
                continue;
            }
            for &w in graph.neighbors(v) {
                counts[labels[w]] += 1;
            }
            let here = counts[a];
            let mut best: Option<(usize, usize)> = None;
            for &w in graph.neighbors(v) {
                let b = labels[w];
                if b == a || counts[b] <= here {
                    continue;
                }
                let gain = counts[b] - here;
                if best.map_or(true, |(g, pb)| gain > g || (gain == g && b < pb)) && balanced_after(&sizes, a, b, opts.balance_tol) {
                    best = Some((gain, b));
                }
            }
            for &w in graph.neighbors(v) {
                counts[labels[w]] = 0;
            }
            if let Some((_, b)) = best.filter(|_| stays_connected_without(graph, labels, v, &mut seen)) {
                labels[v] = b;
                sizes[a] -= 1;
                sizes[b] += 1;
                moved += 1;
            }
        }
        let new_cut = edge_cut(graph, labels);
        assert!(new_cut <= cut, "refinement increased the edge cut from {cut} to {new_cut}");
        cut = new_cut;
        if moved == 0 {
            break;
        }
    }
}

/// Whether the same-part neighbours of `v` remain connected within their
/// part once `v` leaves it.
fn stays_connected_without(graph: &NodeGraph, labels: &[usize], v: usize, seen: &mut HashSet<usize>) -> bool {
    let a = labels[v];
    let targets: Vec<usize> = graph.neighbors(v).iter().copied().filter(|&w| labels[w] == a).collect();
    let Some(&start) = targets.first() else {
        return true;
    };
    seen.clear();
    seen.insert(v);
    seen.insert(start);
    let mut queue = VecDeque::from([start]);
    let mut remaining = targets.len() - 1;
    while let Some(u) = queue.pop_front() {
        if remaining == 0 {
            return true;
        }
        for &w in graph.neighbors(u) {
            if labels[w] == a && seen.insert(w) {
                if targets.contains(&w) {
                    remaining -= 1;
                }
                queue.push_back(w);
            }
        }
    }
    remaining == 0
}

fn balanced_after(sizes: &[usize], from: usize, to: usize, tol: f64) -> bool {
    let ratio = |s: &[usize], delta: Option<(usize, usize)>| {
        let (mut max, mut min) = (0usize, usize::MAX);
        for (j, &v) in s.iter().enumerate() {
            let v = match delta {
                Some((f, _)) if j == f => v - 1,
                Some((_, t)) if j == t => v + 1,
                _ => v,
            };
            max = max.max(v);
            min = min.min(v);
        }
        max as f64 / min as f64
    };
    let after = ratio(sizes, Some((from, to)));
    after <= tol || after <= ratio(sizes, None)
}

pub fn export_partition(part: &DisjointPartition, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    part.write_labels(&mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a label file. Imbalance is reported as a warning only.
pub fn import_partition(path: &Path, n_nodes: usize, n_parts: Option<usize>) -> Result<DisjointPartition> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let part = DisjointPartition::read_labels(std::io::BufReader::new(file), n_nodes, n_parts)?;
    let balance = part.balance();
    if balance > PartitionOptions::default().balance_tol {
        log::warn!("imported partition has balance {balance:.3}");
    }
    Ok(part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::build_band;
    use crate::geometry::Surface;

    fn circle_band() -> Band {
        let s = Surface::circle([0.0, 0.0], 1.0).unwrap();
        build_band(&s, 0.1, 2, &s.default_seeds()).unwrap()
    }

    #[test]
    fn graph_matches_pair_scan() {
        let band = circle_band();
        let g = build_graph(&band);
        let act = band.active();
        let mut pairs = 0;
        for i in 0..act.len() {
            for j in i + 1..act.len() {
                let d: i64 = (0..3).map(|k| (act[i].coord[k] - act[j].coord[k]).abs()).sum();
                if d == 1 {
                    pairs += 1;
                    assert!(g.neighbors(i).contains(&j));
                }
            }
        }
        assert_eq!(g.n_edges(), pairs);
        for i in 0..g.n_nodes() {
            assert!(!g.neighbors(i).contains(&i));
            assert!(g.neighbors(i).iter().all(|&j| g.neighbors(j).contains(&i)));
        }
    }

    #[test]
    fn adjacency_validation() {
        assert!(NodeGraph::from_adjacency(vec![vec![1], vec![]]).is_err());
        assert!(NodeGraph::from_adjacency(vec![vec![0]]).is_err());
        let g = NodeGraph::from_adjacency(vec![vec![], vec![2], vec![1]]).unwrap();
        assert!(g.neighbors(0).is_empty());
        assert_eq!(g.n_edges(), 1);
    }

    #[test]
    fn single_part() {
        let g = NodeGraph::path(7);
        let p = partition(&g, 1, &PartitionOptions::default()).unwrap();
        assert!(p.labels().iter().all(|&l| l == 0));
        assert_eq!(edge_cut(&g, p.labels()), 0);
    }

    #[test]
    fn path_halves() {
        let g = NodeGraph::path(10);
        let p = partition(&g, 2, &PartitionOptions::default()).unwrap();
        assert_eq!(p.labels(), &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert_eq!(edge_cut(&g, p.labels()), 1);
    }

    #[test]
    fn too_many_parts() {
        let g = NodeGraph::path(3);
        assert!(matches!(
            partition(&g, 4, &PartitionOptions::default()),
            Err(Error::TooManyParts { n_parts: 4, n_nodes: 3 })
        ));
    }

    #[test]
    fn circle_eight_arcs() {
        let band = circle_band();
        let g = build_graph(&band);
        let opts = PartitionOptions::default();
        let p = partition(&g, 8, &opts).unwrap();
        assert!(p.part_sizes().iter().all(|&s| s > 0));
        assert!(p.balance() <= 1.2, "balance {}", p.balance());
        assert!(p.components_per_part(&g).iter().all(|&c| c == 1));
        assert_eq!(partition(&g, 8, &opts).unwrap(), p);
    }

    #[test]
    fn refinement_does_not_increase_cut() {
        let band = circle_band();
        let g = build_graph(&band);
        for k in [2, 3, 5, 8, 13] {
            let grown = grow_regions(&g, k);
            let before = edge_cut(&g, &grown);
            for seed in 0..4 {
                let p = partition(&g, k, &PartitionOptions { seed, ..Default::default() }).unwrap();
                assert!(edge_cut(&g, p.labels()) <= before);
            }
        }
    }

    #[test]
    fn label_file_round_trip() {
        let band = circle_band();
        let g = build_graph(&band);
        let p = partition(&g, 5, &PartitionOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        export_partition(&p, &path).unwrap();
        assert_eq!(import_partition(&path, g.n_nodes(), Some(5)).unwrap(), p);
        assert_eq!(import_partition(&path, g.n_nodes(), None).unwrap(), p);
        assert!(matches!(import_partition(&path, g.n_nodes() + 1, Some(5)), Err(Error::WrongLength { .. })));
        assert!(matches!(
            import_partition(&path, g.n_nodes(), Some(4)),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn read_labels_cases() {
        let zeros = "0\n0\n0\n";
        let p = DisjointPartition::read_labels(zeros.as_bytes(), 3, Some(1)).unwrap();
        assert_eq!(p.n_parts(), 1);
        assert!(matches!(
            DisjointPartition::read_labels("0\n1\n".as_bytes(), 2, Some(1)),
            Err(Error::LabelOutOfRange { line: 2, label: 1, n_parts: 1 })
        ));
        assert!(matches!(
            DisjointPartition::read_labels("0\n-1\n".as_bytes(), 2, None),
            Err(Error::LabelOutOfRange { label: -1, .. })
        ));
        assert!(matches!(
            DisjointPartition::read_labels("0\n2\n".as_bytes(), 2, Some(3)),
            Err(Error::EmptyPart(1))
        ));
        assert!(DisjointPartition::read_labels("0\nx\n".as_bytes(), 2, None).is_err());
    }
}
