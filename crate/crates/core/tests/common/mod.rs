//! Random instances and brute-force reference implementations shared by the
//! integration tests. The references work on dense adjacency matrices built
//! from raw edge lists and share no code with the library's fast paths.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nplink::datacube::{CellCounts, Datacube};
use nplink::features::CellKey;
use nplink::{GraphSequence, NodeId};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdos-Renyi snapshots with a per-instance density, plus some persistence
/// so that last-link features are exercised.
pub fn random_sequence(seed: u64, max_n: usize, max_t: usize, directed: bool) -> GraphSequence {
    let mut r = rng(seed);
    let n = r.gen_range(4..=max_n);
    let t = r.gen_range(4..=max_t);
    let p = r.gen_range(0.03..0.3);
    let mut prev: Vec<(NodeId, NodeId)> = Vec::new();
    let mut by_t = Vec::with_capacity(t);
    for _ in 0..t {
        let mut edges = Vec::new();
        for i in 0..n as NodeId {
            for j in 0..n as NodeId {
                if i == j || (!directed && j < i) {
                    continue;
                }
                let keep = prev.contains(&(i, j)) && r.gen_bool(0.5);
                if keep || r.gen_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        prev = edges.clone();
        by_t.push(edges);
    }
    GraphSequence::from_edges(n, directed, by_t).unwrap()
}

/// Dense adjacency matrices of every snapshot, built from raw edge lists.
/// Undirected edges appear in both directions.
pub struct Dense {
    pub n: usize,
    pub directed: bool,
    /// `adj[t - 1][i][j]`.
    pub adj: Vec<Vec<Vec<bool>>>,
    skel: Vec<Vec<Vec<bool>>>,
}

impl Dense {
    pub fn new(g: &GraphSequence) -> Self {
        let n = g.node_count();
        let mut adj = Vec::new();
        let mut skel = Vec::new();
        for t in 1..=g.len() {
            let mut a = vec![vec![false; n]; n];
            for (i, j) in g.snapshot(t).unwrap().edges() {
                a[i as usize][j as usize] = true;
                if !g.is_directed() {
                    a[j as usize][i as usize] = true;
                }
            }
            skel.push((0..n).map(|i| (0..n).map(|j| a[i][j] || a[j][i]).collect()).collect());
            adj.push(a);
        }
        Self { n, directed: g.is_directed(), adj, skel }
    }

    pub fn edge(&self, t: usize, i: NodeId, j: NodeId) -> bool {
        self.adj[t - 1][i as usize][j as usize]
    }

    /// Breadth-first search to depth two on the undirected skeleton.
    fn ball(&self, t: usize, center: NodeId) -> Vec<bool> {
        let s = &self.skel[t - 1];
        let mut dist = vec![usize::MAX; self.n];
        dist[center as usize] = 0;
        let mut frontier = vec![center as usize];
        for d in 1..=2 {
            let mut next = Vec::new();
            for &u in &frontier {
                for v in 0..self.n {
                    if s[u][v] && dist[v] == usize::MAX {
                        dist[v] = d;
                        next.push(v);
                    }
                }
            }
            frontier = next;
        }
        dist.iter().map(|&d| d <= 2).collect()
    }

    fn balls(&self, center: NodeId, times: std::ops::RangeInclusive<usize>) -> Vec<bool> {
        let mut member = vec![false; self.n];
        for tau in times {
            for (v, inside) in self.ball(tau, center).into_iter().enumerate() {
                member[v] |= inside;
            }
        }
        member
    }

    pub fn neighborhood(&self, i: NodeId, t: usize, window: usize) -> Vec<NodeId> {
        let member = self.balls(i, t + 1 - window..=t);
        (0..self.n as NodeId).filter(|&v| member[v as usize]).collect()
    }

    pub fn candidates(&self, i: NodeId, t: usize) -> Vec<NodeId> {
        let member = self.balls(i, 1..=t);
        (0..self.n as NodeId).filter(|&v| v != i && member[v as usize]).collect()
    }

    /// Two-step paths `i -> v -> j` on snapshot `t`.
    pub fn cn(&self, t: usize, i: NodeId, j: NodeId) -> u32 {
        let a = &self.adj[t - 1];
        (0..self.n).filter(|&v| a[i as usize][v] && a[v][j as usize]).count() as u32
    }

    pub fn aa(&self, t: usize, i: NodeId, j: NodeId) -> f64 {
        let a = &self.adj[t - 1];
        (0..self.n)
            .filter(|&v| a[i as usize][v] && a[v][j as usize])
            .map(|v| {
                let deg = self.skel[t - 1][v].iter().filter(|&&x| x).count().max(2);
                1.0 / (deg as f64).ln()
            })
            .sum()
    }

    /// `sum_{l=1..max_len} beta^l (A^l)_{i,.}` by dense matrix powers.
    pub fn katz_row(&self, t: usize, i: NodeId, beta: f64, max_len: usize) -> Vec<f64> {
        let n = self.n;
        let am: Vec<Vec<f64>> = self.adj[t - 1].iter().map(|r| r.iter().map(|&x| x as u8 as f64).collect()).collect();
        let mut power = am.clone();
        let mut total = vec![0.0; n];
        for l in 1..=max_len {
            for j in 0..n {
                total[j] += beta.powi(l as i32) * power[i as usize][j];
            }
            let mut next = vec![vec![0.0; n]; n];
            for (r, row) in power.iter().enumerate() {
                for (k, &x) in row.iter().enumerate() {
                    if x != 0.0 {
                        for c in 0..n {
                            next[r][c] += x * am[k][c];
                        }
                    }
                }
            }
            power = next;
        }
        total
    }

    /// Most recent `tau <= t` with an `(i, j)` link.
    pub fn last_link(&self, i: NodeId, j: NodeId, t: usize) -> Option<usize> {
        (1..=t).rev().find(|&tau| self.edge(tau, i, j))
    }

    /// Cell counts of `d_t(i)` computed pair by pair.
    pub fn datacube(&self, i: NodeId, t: usize, window: usize, max_bin: u8) -> BTreeMap<CellKey, (u32, u32)> {
        let members = self.neighborhood(i, t - 1, window);
        let mut out: BTreeMap<CellKey, (u32, u32)> = BTreeMap::new();
        for &j in &members {
            for &k in &members {
                if j == k || (!self.directed && k < j) {
                    continue;
                }
                let cn = self.cn(t - 1, j, k);
                let ll = self.last_link(j, k, t - 1).map(|tau| t - 1 - tau + 1);
                let e = out.entry(cell_oracle(cn, ll, max_bin)).or_default();
                e.0 += 1;
                e.1 += self.edge(t, j, k) as u32;
            }
        }
        out
    }
}

fn log2_floor(mut v: u32) -> u8 {
    let mut b = 0;
    while v >= 2 {
        v /= 2;
        b += 1;
    }
    b
}

pub fn cell_oracle(cn: u32, ll: Option<usize>, max_bin: u8) -> CellKey {
    let cn_bin = log2_floor(cn + 1).min(max_bin);
    let ll_bin = match ll {
        Some(ll) => log2_floor(ll as u32).min(max_bin - 1),
        None => max_bin,
    };
    CellKey::new(cn_bin, ll_bin)
}

/// Mann-Whitney AUC by comparing every positive with every negative.
pub fn auc_oracle(scores: &[(f64, bool)]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().filter(|s| s.1).map(|s| s.0).collect();
    let neg: Vec<f64> = scores.iter().filter(|s| !s.1).map(|s| s.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &q in &neg {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// A datacube with random cells drawn from a small grid.
pub fn random_cube(r: &mut ChaCha8Rng, owner: NodeId, max_cells: usize) -> Datacube {
    let cells = r.gen_range(0..=max_cells);
    let mut map: BTreeMap<CellKey, CellCounts> = BTreeMap::new();
    for _ in 0..cells {
        let key = CellKey::new(r.gen_range(0..4), r.gen_range(0..4));
        let eta = r.gen_range(1..60);
        let eta_plus = r.gen_range(0..=eta);
        map.insert(key, CellCounts::new(eta, eta_plus));
    }
    Datacube::new(owner, 3, 7, map).unwrap()
}
