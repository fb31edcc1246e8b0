//! Local neighborhoods, pair features and their log-binned cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_store::{GraphSequence, NodeId, Snapshot};

/// 8 common-neighbor bins by 8 last-link bins.
pub const DEFAULT_MAX_BIN: u8 = 7;

/// Nodes within two hops of `center` in any of the snapshots `t-p+1..=t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    pub center: NodeId,
    pub t: usize,
    pub window: usize,
    /// Sorted, always contains `center`.
    pub members: Vec<NodeId>,
}

/// `s_t(i, j)`: common neighbors at `t` and time since the last link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairFeatures {
    pub cn: u32,
    /// `t - tau + 1` for the most recent link time `tau <= t`; `None` if the
    /// pair was never linked.
    pub ll: Option<u32>,
}

/// Discretized pair features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub cn_bin: u8,
    pub ll_bin: u8,
}

impl CellKey {
    pub fn new(cn_bin: u8, ll_bin: u8) -> Self {
        Self { cn_bin, ll_bin }
    }

    /// L1 distance between bin coordinates.
    pub fn bin_distance(&self, other: &CellKey) -> u32 {
        (self.cn_bin as i32 - other.cn_bin as i32).unsigned_abs()
            + (self.ll_bin as i32 - other.ll_bin as i32).unsigned_abs()
    }
}

fn check_window(t: usize, window: usize) -> Result<()> {
    if window == 0 {
        return Err(Error::InvalidParameter("window must be at least 1".into()));
    }
    if t < window {
        return Err(Error::WindowTooLarge { window, t, min_t: window });
    }
    Ok(())
}

fn mark_two_hop(snap: &Snapshot, center: NodeId, marks: &mut [bool]) {
    for &v in snap.neighbors(center) {
        marks[v as usize] = true;
        for &w in snap.neighbors(v) {
            marks[w as usize] = true;
        }
    }
}

/// `N_{t,p}(i)`, using the undirected skeleton of each snapshot.
pub fn neighborhood(g: &GraphSequence, i: NodeId, t: usize, window: usize) -> Result<Neighborhood> {
    check_window(t, window)?;
    g.check_node(i)?;
    g.snapshot(t)?;
    let mut marks = vec![false; g.node_count()];
    marks[i as usize] = true;
    for tau in (t + 1 - window)..=t {
        mark_two_hop(g.snapshot(tau)?, i, &mut marks);
    }
    Ok(Neighborhood { center: i, t, window, members: collect_marks(&marks) })
}

fn collect_marks(marks: &[bool]) -> Vec<NodeId> {
    marks.iter().enumerate().filter_map(|(v, &m)| m.then_some(v as NodeId)).collect()
}

/// Nodes other than `i` that were within two hops of `i` in any of `G_1..G_t`.
pub fn candidate_pairs(g: &GraphSequence, i: NodeId, t: usize, window: usize) -> Result<Vec<NodeId>> {
    check_window(t, window)?;
    g.check_node(i)?;
    g.snapshot(t)?;
    let mut marks = vec![false; g.node_count()];
    for tau in 1..=t {
        mark_two_hop(g.snapshot(tau)?, i, &mut marks);
    }
    marks[i as usize] = false;
    Ok(collect_marks(&marks))
}

fn sorted_intersection_len(a: &[NodeId], b: &[NodeId]) -> u32 {
    let (mut x, mut y, mut count) = (0, 0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                x += 1;
                y += 1;
            }
        }
    }
    count
}

/// Common neighbors of `(i, j)` on one snapshot; in directed mode this counts
/// two-step paths `i -> v -> j`.
pub fn common_neighbors(snap: &Snapshot, i: NodeId, j: NodeId) -> u32 {
    sorted_intersection_len(snap.out_neighbors(i), snap.in_neighbors(j))
}

pub(crate) fn pair_features_unchecked(g: &GraphSequence, snap: &Snapshot, i: NodeId, j: NodeId) -> PairFeatures {
    let t = snap.t();
    PairFeatures { cn: common_neighbors(snap, i, j), ll: g.last_link(i, j, t).map(|tau| (t - tau + 1) as u32) }
}

/// `s_t(i, j)`; `cn` is taken on `G_t` alone and `ll` is uncapped.
pub fn pair_features(g: &GraphSequence, i: NodeId, j: NodeId, t: usize) -> Result<PairFeatures> {
    g.check_node(i)?;
    g.check_node(j)?;
    if i == j {
        return Err(Error::SamePair(i));
    }
    let snap = g.snapshot(t)?;
    Ok(pair_features_unchecked(g, snap, i, j))
}

fn floor_log2(v: u32) -> u8 {
    debug_assert!(v > 0);
    (31 - v.leading_zeros()) as u8
}

/// Log-binning: `cn -> floor(log2(cn + 1))`, `ll -> floor(log2(ll))`, both
/// capped; a pair that never linked gets the terminal last-link bin `max_bin`.
pub fn to_cell(f: PairFeatures, max_bin: u8) -> CellKey {
    let max_bin = max_bin.max(1);
    let cn_bin = floor_log2(f.cn.saturating_add(1)).min(max_bin);
    let ll_bin = match f.ll {
        Some(ll) => floor_log2(ll.max(1)).min(max_bin - 1),
        None => max_bin,
    };
    CellKey { cn_bin, ll_bin }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph() -> GraphSequence {
        GraphSequence::from_edges(4, false, vec![vec![(0, 1), (1, 2), (2, 3)]]).unwrap()
    }

    #[test]
    fn path_neighborhood() {
        let g = path_graph();
        assert_eq!(neighborhood(&g, 0, 1, 1).unwrap().members, vec![0, 1, 2]);
        assert_eq!(neighborhood(&g, 1, 1, 1).unwrap().members, vec![0, 1, 2, 3]);
    }

    #[test]
    fn isolated_center() {
        let g = GraphSequence::from_edges(3, false, vec![vec![(0, 1)]]).unwrap();
        assert_eq!(neighborhood(&g, 2, 1, 1).unwrap().members, vec![2]);
    }

    #[test]
    fn window_must_fit() {
        let g = path_graph();
        assert!(matches!(neighborhood(&g, 0, 1, 2), Err(Error::WindowTooLarge { .. })));
        assert!(candidate_pairs(&g, 0, 1, 2).is_err());
    }

    #[test]
    fn window_union() {
        let g = GraphSequence::from_edges(4, false, vec![vec![(0, 1)], vec![(2, 3)], vec![(0, 3)]]).unwrap();
        assert_eq!(neighborhood(&g, 0, 3, 1).unwrap().members, vec![0, 3]);
        // balls are taken per snapshot: 0 and 2 never meet within two hops
        assert_eq!(neighborhood(&g, 0, 3, 2).unwrap().members, vec![0, 3]);
        assert_eq!(neighborhood(&g, 0, 3, 3).unwrap().members, vec![0, 1, 3]);
    }

    #[test]
    fn triangle_common_neighbors() {
        let g = GraphSequence::from_edges(3, false, vec![vec![(0, 1), (1, 2), (0, 2)]]).unwrap();
        let f = pair_features(&g, 0, 1, 1).unwrap();
        assert_eq!(f.cn, 1);
        assert_eq!(f.ll, Some(1));
        assert!(matches!(pair_features(&g, 1, 1, 1), Err(Error::SamePair(1))));
    }

    #[test]
    fn last_link_counts_from_one() {
        let g = GraphSequence::from_edges(3, false, vec![vec![(0, 1)], vec![], vec![], vec![(1, 2)]]).unwrap();
        assert_eq!(pair_features(&g, 0, 1, 1).unwrap().ll, Some(1));
        assert_eq!(pair_features(&g, 0, 1, 4).unwrap().ll, Some(4));
        assert_eq!(pair_features(&g, 0, 2, 4).unwrap().ll, None);
    }

    #[test]
    fn directed_common_neighbors_follow_paths() {
        let g = GraphSequence::from_edges(3, true, vec![vec![(0, 1), (1, 2)]]).unwrap();
        assert_eq!(pair_features(&g, 0, 2, 1).unwrap().cn, 1);
        assert_eq!(pair_features(&g, 2, 0, 1).unwrap().cn, 0);
        // neighborhoods ignore direction
        assert_eq!(neighborhood(&g, 2, 1, 1).unwrap().members, vec![0, 1, 2]);
    }

    #[test]
    fn binning_examples() {
        let cell = |cn| to_cell(PairFeatures { cn, ll: Some(1) }, 7).cn_bin;
        assert_eq!([cell(0), cell(1), cell(3), cell(7)], [0, 1, 2, 3]);
        assert_eq!(cell(10_000), 7);
        assert_eq!(to_cell(PairFeatures { cn: 0, ll: None }, 7).ll_bin, 7);
        let ll = |v| to_cell(PairFeatures { cn: 0, ll: Some(v) }, 7).ll_bin;
        assert_eq!([ll(1), ll(2), ll(3), ll(4), ll(1000)], [0, 1, 1, 2, 6]);
    }

    #[test]
    fn binning_monotone_sweep() {
        let mut prev = 0;
        for cn in 0..=1000 {
            let bin = to_cell(PairFeatures { cn, ll: None }, 7).cn_bin;
            assert!(bin >= prev);
            prev = bin;
        }
        let mut prev = 0;
        for ll in 1..=1000 {
            let bin = to_cell(PairFeatures { cn: 0, ll: Some(ll) }, 7).ll_bin;
            assert!(bin >= prev && bin < 7);
            prev = bin;
        }
    }

    #[test]
    fn cell_space_is_bounded() {
        let mut seen = std::collections::HashSet::new();
        for cn in 0..300 {
            for ll in (1..300).map(Some).chain([None]) {
                seen.insert(to_cell(PairFeatures { cn, ll }, 7));
            }
        }
        assert!(seen.len() <= 64);
    }

    #[test]
    fn candidates_span_all_history() {
        let g = GraphSequence::from_edges(5, false, vec![vec![(0, 1), (1, 3)], vec![(1, 2)]]).unwrap();
        let c = candidate_pairs(&g, 0, 2, 1).unwrap();
        assert_eq!(c, vec![1, 3]);
        // 0 and 2 are never within two hops inside a single snapshot
        assert!(!c.contains(&2) && !c.contains(&4));
    }
}
