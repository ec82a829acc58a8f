//! Agglomerative clustering with average linkage (UPGMA).
//!
//! Uses the nearest-neighbour chain algorithm, which is exact for reducible
//! linkages such as average linkage and runs in O(n²) time over a condensed
//! distance matrix. Ties are broken toward the lowest cluster index.

use serde::{Deserialize, Serialize};

/// One agglomeration step. Leaves are `0..n`; the cluster created by the
/// `i`-th merge (in distance order) has id `n + i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

/// Upper-triangle pairwise distances.
pub struct Condensed {
    n: usize,
    data: Vec<f64>,
}

impl Condensed {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                data.push(f(i, j));
            }
        }
        Condensed { n, data }
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.index(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.data[k] = v;
    }
}

/// `1 − cos(a, b)`. Two zero vectors are at distance 0; a zero vector and a
/// non-zero one at distance 1.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => (1.0 - dot / (na * nb)).max(0.0),
    }
}

/// Average-linkage dendrogram of the points behind `dist`.
pub fn average_linkage(mut dist: Condensed) -> Dendrogram {
    let n = dist.n;
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    // (slot_a, slot_b, distance); the merged cluster keeps the lower slot.
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::new();
    let mut remaining = n;

    while remaining > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active cluster"));
        }
        let top = *chain.last().expect("non-empty chain");
        let prev = chain.len().checked_sub(2).map(|i| chain[i]);
        let mut best: Option<(usize, f64)> = prev.map(|p| (p, dist.get(top, p)));
        for c in (0..n).filter(|&c| active[c] && c != top) {
            let d = dist.get(top, c);
            match best {
                Some((b, bd)) if d > bd || (d == bd && (Some(b) == prev || b < c)) => {}
                _ => best = Some((c, d)),
            }
        }
        let (nearest, d) = best.expect("at least two active clusters");
        if Some(nearest) == prev {
            chain.pop();
            chain.pop();
            let (keep, gone) = if top < nearest { (top, nearest) } else { (nearest, top) };
            let (sk, sg) = (size[keep] as f64, size[gone] as f64);
            for c in (0..n).filter(|&c| active[c] && c != keep && c != gone) {
                let v = (sk * dist.get(keep, c) + sg * dist.get(gone, c)) / (sk + sg);
                dist.set(keep, c, v);
            }
            active[gone] = false;
            size[keep] += size[gone];
            raw.push((keep, gone, d));
            remaining -= 1;
        } else {
            chain.push(nearest);
        }
    }

    // Distance order (stable), then relabel slots to scipy-style ids.
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].2.total_cmp(&raw[b].2));
    let mut uf = UnionFind::new(n);
    let mut cluster_id: Vec<usize> = (0..n).collect();
    let mut members = vec![1usize; n];
    let mut merges = Vec::with_capacity(raw.len());
    for (step, &idx) in order.iter().enumerate() {
        let (a, b, d) = raw[idx];
        let (ra, rb) = (uf.find(a), uf.find(b));
        let (ia, ib) = (cluster_id[ra], cluster_id[rb]);
        let merged_size = members[ra] + members[rb];
        let root = uf.union(ra, rb);
        cluster_id[root] = n + step;
        members[root] = merged_size;
        merges.push(Merge {
            left: ia.min(ib),
            right: ia.max(ib),
            distance: d,
            size: merged_size,
        });
    }
    Dendrogram { leaves: n, merges }
}

impl Dendrogram {
    /// Flat clustering into `k` groups: apply the `n − k` lowest merges.
    /// Labels are numbered by the smallest leaf in each group.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        let n = self.leaves;
        let k = k.clamp(1, n.max(1));
        let mut uf = UnionFind::new(2 * n);
        for (step, m) in self.merges.iter().take(n - k).enumerate() {
            uf.union(m.left, n + step);
            uf.union(m.right, n + step);
        }
        let mut label_of_root = std::collections::HashMap::new();
        (0..n)
            .map(|leaf| {
                let r = uf.find(leaf);
                let next = label_of_root.len();
                *label_of_root.entry(r).or_insert(next)
            })
            .collect()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        let (keep, gone) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[gone] = keep;
        keep
    }
}
