//! HDBSCAN over a precomputed distance matrix.
//!
//! Pipeline: core distances, mutual reachability, Prim's minimum spanning
//! tree, single-linkage hierarchy, condensed tree at `min_cluster_size`,
//! excess-of-mass selection.
//!
//! Equal-weight MST edges are merged in one step, so the hierarchy can have
//! nodes with more than two children and the result does not depend on the
//! order of tied edges. The root is eligible for selection, so data without
//! density structure yields one cluster. Points outside every selected
//! cluster are noise and come back as singletons.

use ndarray::Array2;

use super::{Partition, UnionFind};
use crate::similarity::SimilarityMatrix;

/// λ used for a zero distance.
pub const LAMBDA_MAX: f64 = 1e300;

fn lambda(distance: f64) -> f64 {
    if distance > 0.0 {
        (1.0 / distance).min(LAMBDA_MAX)
    } else {
        LAMBDA_MAX
    }
}

/// Distance from each point to its `min_samples`-th nearest neighbour,
/// counting the point itself as the first (so `min_samples = 1` gives 0).
/// Clamped to the farthest point when `min_samples > n`.
pub fn core_distances(d: &Array2<f64>, min_samples: usize) -> Vec<f64> {
    let n = d.nrows();
    let k = min_samples.clamp(1, n.max(1)) - 1;
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = d.row(i).to_vec();
            row.sort_by(f64::total_cmp);
            row[k]
        })
        .collect()
}

pub fn mutual_reachability(d: &Array2<f64>, core: &[f64]) -> Array2<f64> {
    let n = d.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            d[[i, j]].max(core[i]).max(core[j])
        }
    })
}

fn prim_mst(w: &Array2<f64>) -> Vec<(usize, usize, f64)> {
    let n = w.nrows();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if !in_tree[j] && w[[current, j]] < best[j] {
                best[j] = w[[current, j]];
                from[j] = current;
            }
        }
        let next = (0..n)
            .filter(|&j| !in_tree[j])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]).then(a.cmp(&b)))
            .expect("a vertex remains outside the tree");
        edges.push((from[next], next, best[next]));
        in_tree[next] = true;
        current = next;
    }
    edges
}

struct Node {
    children: Vec<usize>,
    /// Distance at which the children merge; unused for leaves.
    level: f64,
    size: usize,
}

/// Leaves `0..n` are the points; the last node is the root.
fn build_hierarchy(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Vec<Node> {
    edges.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut nodes: Vec<Node> = (0..n)
        .map(|_| Node {
            children: Vec::new(),
            level: 0.0,
            size: 1,
        })
        .collect();
    let mut uf = UnionFind::new(n);
    let mut node_of: Vec<usize> = (0..n).collect();

    let mut start = 0;
    while start < edges.len() {
        let level = edges[start].2;
        let end = start + edges[start..].iter().take_while(|e| e.2 == level).count();
        let group = &edges[start..end];

        let mut touched: Vec<(usize, usize)> = Vec::new();
        for &(a, b, _) in group {
            for p in [a, b] {
                let r = uf.find(p);
                touched.push((node_of[r], p));
            }
        }
        touched.sort_unstable();
        touched.dedup_by_key(|t| t.0);
        for &(a, b, _) in group {
            uf.union(a, b);
        }
        let mut by_root: Vec<(usize, usize)> = touched
            .iter()
            .map(|&(node, point)| (uf.find(point), node))
            .collect();
        by_root.sort_unstable();
        let mut k = 0;
        while k < by_root.len() {
            let root = by_root[k].0;
            let children: Vec<usize> = by_root[k..]
                .iter()
                .take_while(|r| r.0 == root)
                .map(|r| r.1)
                .collect();
            k += children.len();
            let size = children.iter().map(|&c| nodes[c].size).sum();
            node_of[root] = nodes.len();
            nodes.push(Node {
                children,
                level,
                size,
            });
        }
        start = end;
    }
    nodes
}

fn leaves(nodes: &[Node], node: usize, out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if nodes[x].children.is_empty() {
            out.push(x);
        } else {
            stack.extend(&nodes[x].children);
        }
    }
}

struct Condensed {
    parent: Vec<Option<usize>>,
    birth: Vec<f64>,
    stability: Vec<f64>,
    children: Vec<Vec<usize>>,
    /// Deepest cluster each point belonged to.
    home: Vec<usize>,
}

impl Condensed {
    fn add(&mut self, parent: Option<usize>, birth: f64) -> usize {
        self.parent.push(parent);
        self.birth.push(birth);
        self.stability.push(0.0);
        self.children.push(Vec::new());
        if let Some(p) = parent {
            self.children[p].push(self.parent.len() - 1);
        }
        self.parent.len() - 1
    }
}

fn condense(nodes: &[Node], n: usize, min_cluster_size: usize) -> Condensed {
    let mut c = Condensed {
        parent: Vec::new(),
        birth: Vec::new(),
        stability: Vec::new(),
        children: Vec::new(),
        home: vec![0; n],
    };
    let root = c.add(None, 0.0);
    let mut stack = vec![(nodes.len() - 1, root)];
    let mut fallen = Vec::new();
    while let Some((node, cluster)) = stack.pop() {
        let nd = &nodes[node];
        if nd.children.is_empty() {
            // Only reachable when a single point is itself a cluster.
            c.home[node] = cluster;
            continue;
        }
        let lam = lambda(nd.level);
        let birth = c.birth[cluster];
        let (big, small): (Vec<usize>, Vec<usize>) = nd
            .children
            .iter()
            .partition(|&&ch| nodes[ch].size >= min_cluster_size);
        for &ch in &small {
            fallen.clear();
            leaves(nodes, ch, &mut fallen);
            for &p in &fallen {
                c.home[p] = cluster;
            }
            c.stability[cluster] += (lam - birth) * fallen.len() as f64;
        }
        match big.len() {
            0 => {}
            1 => stack.push((big[0], cluster)),
            _ => {
                for &ch in &big {
                    c.stability[cluster] += (lam - birth) * nodes[ch].size as f64;
                    let child = c.add(Some(cluster), lam);
                    stack.push((ch, child));
                }
            }
        }
    }
    c
}

/// Excess-of-mass selection; a cluster is kept when its own stability is at
/// least the best total achievable by its descendants.
fn select(c: &Condensed) -> Vec<bool> {
    let k = c.parent.len();
    let mut keep = vec![false; k];
    let mut best = vec![0.0; k];
    for id in (0..k).rev() {
        let below: f64 = c.children[id].iter().map(|&ch| best[ch]).sum();
        if c.children[id].is_empty() || c.stability[id] >= below {
            keep[id] = true;
            best[id] = c.stability[id];
        } else {
            best[id] = below;
        }
    }
    // Children are created after their parents, so a forward pass sees
    // ancestors first.
    let mut selected = vec![false; k];
    let mut covered = vec![false; k];
    for id in 0..k {
        let parent_covered = c.parent[id].is_some_and(|p| covered[p] || selected[p]);
        covered[id] = parent_covered;
        selected[id] = keep[id] && !parent_covered;
    }
    selected
}

pub fn cluster_hdbscan(
    m: &SimilarityMatrix,
    min_cluster_size: usize,
    min_samples: usize,
) -> Partition {
    let n = m.len();
    if n < min_cluster_size.max(2) {
        return Partition::new((0..n).collect(), true);
    }
    let core = core_distances(&m.distances, min_samples);
    let mr = mutual_reachability(&m.distances, &core);
    let nodes = build_hierarchy(n, prim_mst(&mr));
    let condensed = condense(&nodes, n, min_cluster_size);
    let selected = select(&condensed);

    let labels = (0..n)
        .map(|p| {
            let mut at = Some(condensed.home[p]);
            while let Some(c) = at {
                if selected[c] {
                    return c;
                }
                at = condensed.parent[c];
            }
            // Noise: a label no cluster id can collide with.
            condensed.parent.len() + p
        })
        .collect();
    Partition::new(labels, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_points(points: &[[f64; 2]]) -> SimilarityMatrix {
        let n = points.len();
        let d = Array2::from_shape_fn((n, n), |(i, j)| {
            ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt()
        });
        SimilarityMatrix::from_distances((0..n).map(|i| format!("{i:02}")).collect(), d).unwrap()
    }

    #[test]
    fn fewer_points_than_min_cluster_size() {
        let m = from_points(&[[0.0, 0.0], [0.1, 0.0], [0.2, 0.0]]);
        assert_eq!(cluster_hdbscan(&m, 4, 1).labels, vec![0, 1, 2]);
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let m = from_points(&[[1.0, 1.0]; 6]);
        assert_eq!(cluster_hdbscan(&m, 3, 2).labels, vec![0; 6]);
    }

    #[test]
    fn two_separated_blobs() {
        let blob = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.1, 0.1], [0.05, 0.05]];
        let mut pts: Vec<[f64; 2]> = blob.to_vec();
        pts.extend(blob.iter().map(|p| [p[0] + 10.0, p[1]]));
        let m = from_points(&pts);
        let p = cluster_hdbscan(&m, 3, 2);
        assert_eq!(p.labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn core_distance_counts_self() {
        let m = from_points(&[[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]);
        assert_eq!(core_distances(&m.distances, 1), vec![0.0, 0.0, 0.0]);
        assert_eq!(core_distances(&m.distances, 2), vec![1.0, 1.0, 2.0]);
        assert_eq!(core_distances(&m.distances, 10), vec![3.0, 2.0, 3.0]);
    }

    #[test]
    fn tied_merges_become_one_node() {
        // Three points pairwise at distance 1: one node with three leaves.
        let d = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 0.0 } else { 1.0 });
        let nodes = build_hierarchy(3, prim_mst(&d));
        assert_eq!(nodes.len(), 4);
        assert_eq!(nodes[3].children, vec![0, 1, 2]);
        assert_eq!(nodes[3].size, 3);
    }

    #[test]
    fn mst_has_minimal_weight() {
        let m = from_points(&[[0.0, 0.0], [1.0, 0.0], [1.0, 2.0], [5.0, 5.0]]);
        let total: f64 = prim_mst(&m.distances).iter().map(|e| e.2).sum();
        let expected = 1.0 + 2.0 + (16.0f64 + 9.0).sqrt();
        assert!((total - expected).abs() < 1e-12);
    }
}
