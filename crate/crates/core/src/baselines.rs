//! Last-link, common-neighbor, Adamic-Adar and Katz scores, on the last
//! training snapshot or on the union of all training snapshots.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{FittedPredictor, LinkPredictor, PredictionRanking};
use crate::features::{candidate_pairs, common_neighbors};
use crate::graph_store::{GraphSequence, NodeId, Snapshot};

pub const DEFAULT_KATZ_BETA: f64 = 0.005;
pub const DEFAULT_KATZ_MAX_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BaselineKind {
    Ll,
    Cn,
    Aa,
    Katz,
    CnAll,
    AaAll,
    KatzAll,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 7] = [
        BaselineKind::Ll,
        BaselineKind::Cn,
        BaselineKind::Aa,
        BaselineKind::Katz,
        BaselineKind::CnAll,
        BaselineKind::AaAll,
        BaselineKind::KatzAll,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Ll => "ll",
            BaselineKind::Cn => "cn",
            BaselineKind::Aa => "aa",
            BaselineKind::Katz => "katz",
            BaselineKind::CnAll => "cn-all",
            BaselineKind::AaAll => "aa-all",
            BaselineKind::KatzAll => "katz-all",
        }
    }

    pub fn uses_union(&self) -> bool {
        matches!(self, BaselineKind::CnAll | BaselineKind::AaAll | BaselineKind::KatzAll)
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown baseline '{s}'")))
    }
}

/// `-ll` at snapshot `t` (so recent links score higher); `-inf` if never linked.
pub fn score_ll(g: &GraphSequence, i: NodeId, j: NodeId, t: usize) -> f64 {
    match g.last_link(i, j, t) {
        Some(tau) => -((t - tau + 1) as f64),
        None => f64::NEG_INFINITY,
    }
}

pub fn score_cn(snap: &Snapshot, i: NodeId, j: NodeId) -> f64 {
    common_neighbors(snap, i, j) as f64
}

/// Degree-1 common neighbors are weighted as if they had degree 2.
pub fn score_aa(snap: &Snapshot, i: NodeId, j: NodeId) -> f64 {
    let (a, b) = (snap.out_neighbors(i), snap.in_neighbors(j));
    let (mut x, mut y, mut total) = (0, 0, 0.0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                total += 1.0 / (snap.degree(a[x]).max(2) as f64).ln();
                x += 1;
                y += 1;
            }
        }
    }
    total
}

/// `sum_{l=1..max_len} beta^l * walks_l(i, v)` for every `v`.
pub fn katz_from(snap: &Snapshot, i: NodeId, beta: f64, max_len: usize) -> Vec<f64> {
    let n = snap.node_count();
    let mut walks = vec![0.0; n];
    walks[i as usize] = 1.0;
    let mut scores = vec![0.0; n];
    let mut weight = 1.0;
    for _ in 0..max_len {
        let mut next = vec![0.0; n];
        for (u, &w) in walks.iter().enumerate() {
            if w != 0.0 {
                for &v in snap.out_neighbors(u as NodeId) {
                    next[v as usize] += w;
                }
            }
        }
        walks = next;
        weight *= beta;
        for (s, &w) in scores.iter_mut().zip(&walks) {
            *s += weight * w;
        }
    }
    scores
}

pub fn score_katz(snap: &Snapshot, i: NodeId, j: NodeId, beta: f64, max_len: usize) -> f64 {
    katz_from(snap, i, beta, max_len)[j as usize]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Baseline {
    pub kind: BaselineKind,
    pub katz_beta: f64,
    pub katz_max_len: usize,
}

impl Baseline {
    pub fn new(kind: BaselineKind) -> Self {
        Self { kind, katz_beta: DEFAULT_KATZ_BETA, katz_max_len: DEFAULT_KATZ_MAX_LEN }
    }
}

/// A baseline bound to its training graph.
pub struct FittedBaseline {
    baseline: Baseline,
    graph: GraphSequence,
    scoring: Snapshot,
}

impl Baseline {
    pub fn fit_graph(&self, train: &GraphSequence) -> Result<FittedBaseline> {
        if train.is_empty() {
            return Err(Error::TooShort("baselines need at least one training snapshot".into()));
        }
        if !(self.katz_beta > 0.0 && self.katz_beta < 1.0) {
            return Err(Error::InvalidParameter("Katz beta must lie in (0, 1)".into()));
        }
        let horizon = train.len();
        let scoring =
            if self.kind.uses_union() { train.union_graph(horizon)? } else { train.snapshot(horizon)?.clone() };
        Ok(FittedBaseline { baseline: *self, graph: train.clone(), scoring })
    }
}

impl FittedBaseline {
    /// The snapshot scores are computed on.
    pub fn scoring_graph(&self) -> &Snapshot {
        &self.scoring
    }

    fn rank_source(&self, source: NodeId) -> Result<Vec<(NodeId, f64)>> {
        let horizon = self.graph.len();
        let targets = candidate_pairs(&self.graph, source, horizon, 1)?;
        let snap = &self.scoring;
        let b = &self.baseline;
        Ok(match b.kind {
            BaselineKind::Ll => targets.into_iter().map(|j| (j, score_ll(&self.graph, source, j, horizon))).collect(),
            BaselineKind::Cn | BaselineKind::CnAll => {
                targets.into_iter().map(|j| (j, score_cn(snap, source, j))).collect()
            }
            BaselineKind::Aa | BaselineKind::AaAll => {
                targets.into_iter().map(|j| (j, score_aa(snap, source, j))).collect()
            }
            BaselineKind::Katz | BaselineKind::KatzAll => {
                let all = katz_from(snap, source, b.katz_beta, b.katz_max_len);
                targets.into_iter().map(|j| (j, all[j as usize])).collect()
            }
        })
    }
}

impl FittedPredictor for FittedBaseline {
    fn rank(&self, sources: &[NodeId]) -> Result<PredictionRanking> {
        for &s in sources {
            self.graph.check_node(s)?;
        }
        let scored = sources.par_iter().map(|&s| Ok((s, self.rank_source(s)?))).collect::<Result<Vec<_>>>()?;
        Ok(PredictionRanking::from_scores(self.graph.len(), scored))
    }
}

impl LinkPredictor for Baseline {
    fn name(&self) -> String {
        self.kind.name().into()
    }

    fn fit(&self, train: &GraphSequence) -> Result<Box<dyn FittedPredictor>> {
        Ok(Box::new(self.fit_graph(train)?))
    }
}
