//! Reference implementations and instance generators shared by the
//! integration tests. Nothing here calls into the library's algorithms.
#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use ndarray::Array2;
use polypcount::clustering::Linkage;
use polypcount::model::{tracklet_id, BBox, Tracklet, VideoRecord};
use polypcount::similarity::{normalize_similarity, Normalization, SimilarityMatrix};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal as StatNormal};

/// Labels renumbered by first appearance.
pub fn canon(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

pub fn euclid(points: &[Vec<f64>]) -> Array2<f64> {
    let n = points.len();
    Array2::from_shape_fn((n, n), |(i, j)| {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    })
}

pub fn matrix(d: Array2<f64>) -> SimilarityMatrix {
    let n = d.nrows();
    let m =
        SimilarityMatrix::from_distances((0..n).map(|i| format!("t{i:03}")).collect(), d).unwrap();
    normalize_similarity(m, Normalization::OffDiagonal)
}

/// `n` points in `dim` dimensions around up to `blobs` random centers.
pub fn blob_points<R: Rng>(
    rng: &mut R,
    n: usize,
    dim: usize,
    blobs: usize,
    spread: f64,
) -> Vec<Vec<f64>> {
    let centers: Vec<Vec<f64>> = (0..blobs.max(1))
        .map(|_| (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect();
    let noise = Normal::new(0.0, spread).unwrap();
    (0..n)
        .map(|_| {
            let c = &centers[rng.random_range(0..centers.len())];
            c.iter().map(|x| x + noise.sample(rng)).collect()
        })
        .collect()
}

/// Symmetric matrix with zero diagonal and entries drawn from `1..=levels`,
/// producing many exact ties.
pub fn tied_distances<R: Rng>(rng: &mut R, n: usize, levels: u32) -> Array2<f64> {
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v = f64::from(rng.random_range(1..=levels));
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Connected components of the graph on `0..n` with edges where
/// `edge(i, j)`, labelled by smallest member order.
pub fn components(n: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for v in 0..n {
                if v != u && label[v] == usize::MAX && edge(u, v) {
                    label[v] = next;
                    q.push_back(v);
                }
            }
        }
        next += 1;
    }
    label
}

/// Bottom-up merging that recomputes every linkage from cluster members.
pub fn naive_agglomerative(d: &Array2<f64>, linkage: Linkage, cutoff: f64) -> Vec<usize> {
    let n = d.nrows();
    // Kept ordered by smallest member.
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let link = |a: &[usize], b: &[usize]| {
        let pairs = a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j)));
        match linkage {
            Linkage::Single => pairs.map(|(i, j)| d[[i, j]]).fold(f64::INFINITY, f64::min),
            Linkage::Complete => pairs
                .map(|(i, j)| d[[i, j]])
                .fold(f64::NEG_INFINITY, f64::max),
            Linkage::Average => {
                pairs.map(|(i, j)| d[[i, j]]).sum::<f64>() / (a.len() * b.len()) as f64
            }
        }
    };
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let v = link(&clusters[a], &clusters[b]);
                if best.is_none_or(|(bv, _, _)| v < bv) {
                    best = Some((v, a, b));
                }
            }
        }
        match best {
            Some((v, a, b)) if v <= cutoff => {
                let moved = clusters.remove(b);
                clusters[a].extend(moved);
            }
            _ => break,
        }
    }
    let mut labels = vec![0; n];
    for (c, members) in clusters.iter().enumerate() {
        for &p in members {
            labels[p] = c;
        }
    }
    canon(&labels)
}

const ORACLE_LAMBDA_CAP: f64 = 1e300;

fn oracle_lambda(w: f64) -> f64 {
    if w > 0.0 {
        (1.0 / w).min(ORACLE_LAMBDA_CAP)
    } else {
        ORACLE_LAMBDA_CAP
    }
}

struct Tree {
    parent: Vec<Option<usize>>,
    birth: Vec<f64>,
    stability: Vec<f64>,
    children: Vec<Vec<usize>>,
    home: Vec<usize>,
}

/// HDBSCAN by level sets: each cluster is split by dropping every edge at
/// its own connection level, so tied edges split it several ways at once.
pub fn naive_hdbscan(d: &Array2<f64>, min_cluster_size: usize, min_samples: usize) -> Vec<usize> {
    let n = d.nrows();
    if n < min_cluster_size.max(2) {
        return (0..n).collect();
    }
    let k = min_samples.clamp(1, n);
    let core: Vec<f64> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| d[[i, j]]).collect();
            row.sort_by(|a, b| a.partial_cmp(b).unwrap());
            row[k - 1]
        })
        .collect();
    let mr = |i: usize, j: usize| {
        if i == j {
            0.0
        } else {
            d[[i, j]].max(core[i]).max(core[j])
        }
    };

    let mut tree = Tree {
        parent: vec![None],
        birth: vec![0.0],
        stability: vec![0.0],
        children: vec![Vec::new()],
        home: vec![0; n],
    };
    let mut work: Vec<(Vec<usize>, usize)> = vec![((0..n).collect(), 0)];
    while let Some((points, cl)) = work.pop() {
        let m = points.len();
        let mut levels: Vec<f64> = Vec::new();
        for a in 0..m {
            for b in a + 1..m {
                levels.push(mr(points[a], points[b]));
            }
        }
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        levels.dedup();
        let sub = |edge: &dyn Fn(f64) -> bool| {
            let lab = components(m, |a, b| edge(mr(points[a], points[b])));
            let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (a, &l) in lab.iter().enumerate() {
                groups.entry(l).or_default().push(points[a]);
            }
            groups.into_values().collect::<Vec<_>>()
        };
        let w = *levels
            .iter()
            .find(|&&v| sub(&|x| x <= v).len() == 1)
            .expect("complete graph connects at its largest level");
        let lam = oracle_lambda(w);
        let birth = tree.birth[cl];
        let parts = sub(&|x| x < w);
        let big: Vec<Vec<usize>> = parts
            .iter()
            .filter(|p| p.len() >= min_cluster_size)
            .cloned()
            .collect();
        for p in parts.iter().filter(|p| p.len() < min_cluster_size) {
            for &x in p {
                tree.home[x] = cl;
            }
            tree.stability[cl] += (lam - birth) * p.len() as f64;
        }
        if big.len() == 1 {
            work.push((big[0].clone(), cl));
        } else {
            for p in big {
                tree.stability[cl] += (lam - birth) * p.len() as f64;
                let id = tree.parent.len();
                tree.parent.push(Some(cl));
                tree.birth.push(lam);
                tree.stability.push(0.0);
                tree.children.push(Vec::new());
                tree.children[cl].push(id);
                work.push((p, id));
            }
        }
    }

    fn choose(t: &Tree, c: usize, out: &mut Vec<usize>) -> f64 {
        if t.children[c].is_empty() {
            out.push(c);
            return t.stability[c];
        }
        let mut below = Vec::new();
        let total: f64 = t.children[c]
            .iter()
            .map(|&ch| choose(t, ch, &mut below))
            .sum();
        if t.stability[c] >= total {
            out.push(c);
            t.stability[c]
        } else {
            out.extend(below);
            total
        }
    }
    let mut chosen = Vec::new();
    choose(&tree, 0, &mut chosen);

    let labels: Vec<usize> = (0..n)
        .map(|p| {
            let mut at = Some(tree.home[p]);
            while let Some(c) = at {
                if chosen.contains(&c) {
                    return c;
                }
                at = tree.parent[c];
            }
            tree.parent.len() + p
        })
        .collect();
    canon(&labels)
}

/// Largest `sum_i s(i, e(i))` over all exemplar sets, with `s(k, k)` =
/// `preference` and each non-exemplar sent to its most similar exemplar.
pub fn brute_force_ap(s: &Array2<f64>, preference: f64) -> f64 {
    let n = s.nrows();
    let mut best = f64::NEG_INFINITY;
    for mask in 1u32..(1 << n) {
        let mut total = 0.0;
        for i in 0..n {
            if mask & (1 << i) != 0 {
                total += preference;
            } else {
                total += (0..n)
                    .filter(|&e| mask & (1 << e) != 0)
                    .map(|e| s[[i, e]])
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        best = best.max(total);
    }
    best
}

/// `P(|j - i| = d)` for `d = 0..l` when `i` is uniform on `[1, l]` and `j`
/// is a rounded `N(i, sigma)` draw conditioned on `j in [1, l], j != i`.
pub fn frame_gap_law(l: usize, sigma: f64) -> Vec<f64> {
    let phi = StatNormal::new(0.0, 1.0).unwrap();
    let li = l as i64;
    // mass of offset t = j - i under rounding
    let mass = |t: i64| phi.cdf((t as f64 + 0.5) / sigma) - phi.cdf((t as f64 - 0.5) / sigma);
    let offsets: Vec<f64> = (-(li - 1)..=(li - 1)).map(mass).collect();
    let at = |t: i64| offsets[(t + li - 1) as usize];
    let inv_z: Vec<f64> = (1..=li)
        .map(|i| {
            let z: f64 = ((1 - i)..=(li - i)).filter(|&t| t != 0).map(at).sum();
            1.0 / z
        })
        .collect();
    let mut law = vec![0.0; l];
    for i in 1..=li {
        for d in 1..li {
            let mut p = 0.0;
            if i + d <= li {
                p += at(d);
            }
            if i - d >= 1 {
                p += at(-d);
            }
            law[d as usize] += p * inv_z[(i - 1) as usize] / l as f64;
        }
    }
    law
}

/// Pearson statistic and degrees of freedom after pooling adjacent cells
/// until each expected count is at least `min_expected`.
pub fn chi_square(
    observed: &[u64],
    expected_prob: &[f64],
    draws: u64,
    min_expected: f64,
) -> (f64, usize) {
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (obs, p) in observed.iter().zip(expected_prob) {
        o += *obs as f64;
        e += p * draws as f64;
        if e >= min_expected {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    let stat = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    (stat, cells.len() - 1)
}

pub fn chi_square_critical(df: usize, alpha: f64) -> f64 {
    ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - alpha)
}

/// Video whose tracklets are given as `(entity, n_frames)`; tracklet ids are
/// ordered by position in `layout`.
pub fn video(id: &str, layout: &[(String, usize)]) -> VideoRecord {
    let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
    let mut start = 0u64;
    let ts = layout
        .iter()
        .map(|(e, len)| {
            let t = Tracklet {
                tracklet_id: tracklet_id(id, e, start),
                video_id: id.into(),
                entity_id: e.clone(),
                frames: (start..start + *len as u64).map(|f| (f, b)).collect(),
            };
            start += *len as u64 + 1;
            t
        })
        .collect();
    VideoRecord::new(id, ts).unwrap()
}

/// Random video with up to `max_entities` entities and `max_tracklets`
/// tracklets.
pub fn random_video<R: Rng>(
    rng: &mut R,
    id: &str,
    max_entities: usize,
    max_tracklets: usize,
) -> VideoRecord {
    let e = rng.random_range(1..=max_entities);
    let t = rng.random_range(e..=max_tracklets.max(e));
    let mut layout: Vec<(String, usize)> = (0..e)
        .map(|k| (format!("e{k}"), rng.random_range(1..6)))
        .collect();
    for _ in e..t {
        layout.push((
            format!("e{}", rng.random_range(0..e)),
            rng.random_range(1..6),
        ));
    }
    video(id, &layout)
}
