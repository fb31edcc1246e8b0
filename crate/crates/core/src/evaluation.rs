//! Train on `G_1..G_{T-1}`, score against `G_T`.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph_store::{GraphSequence, NodeId, Snapshot};

/// Ranked targets for one source, best first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceRanking {
    pub source: NodeId,
    pub targets: Vec<(NodeId, f64)>,
}

/// Per-source rankings for the snapshot after `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRanking {
    /// Last snapshot the predictor was allowed to read.
    pub horizon: usize,
    pub lists: Vec<SourceRanking>,
    /// Sources with no candidate targets.
    pub empty_sources: Vec<NodeId>,
}

impl PredictionRanking {
    /// Sorts each list by descending score, ties by target id. Sources come
    /// out in ascending id order.
    pub fn from_scores(horizon: usize, mut scored: Vec<(NodeId, Vec<(NodeId, f64)>)>) -> Self {
        scored.sort_by_key(|(s, _)| *s);
        let mut lists = Vec::with_capacity(scored.len());
        let mut empty_sources = Vec::new();
        for (source, mut targets) in scored {
            if targets.is_empty() {
                empty_sources.push(source);
            }
            targets.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            lists.push(SourceRanking { source, targets });
        }
        Self { horizon, lists, empty_sources }
    }

    pub fn score(&self, source: NodeId, target: NodeId) -> Option<f64> {
        let list = self.lists.iter().find(|l| l.source == source)?;
        list.targets.iter().find(|t| t.0 == target).map(|t| t.1)
    }

    /// `source,target,score,rank` with node labels; ranks start at 1.
    pub fn write_csv<W: Write>(&self, mut out: W, labels: &[String]) -> Result<()> {
        writeln!(out, "source,target,score,rank")?;
        for list in &self.lists {
            for (rank, &(target, score)) in list.targets.iter().enumerate() {
                writeln!(out, "{},{},{},{}", labels[list.source as usize], labels[target as usize], score, rank + 1)?;
            }
        }
        Ok(())
    }
}

/// Mann-Whitney AUC; ties count one half.
pub fn auc(scores: &[(f64, bool)]) -> Result<f64> {
    let positives = scores.iter().filter(|s| s.1).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // sum over positives of (negatives strictly below + half the tied negatives)
    let mut wins = 0.0;
    let mut below = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0.total_cmp(&sorted[i].0).is_eq() {
            j += 1;
        }
        let pos = sorted[i..j].iter().filter(|s| s.1).count();
        let neg = (j - i) - pos;
        wins += pos as f64 * (below as f64 + 0.5 * neg as f64);
        below += neg;
        i = j;
    }
    Ok(wins / (positives as f64 * negatives as f64))
}

/// Nodes with at least one edge in `snap`.
pub fn active_sources(snap: &Snapshot) -> Vec<NodeId> {
    (0..snap.node_count() as NodeId).filter(|&v| snap.degree(v) > 0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceAuc {
    pub source: NodeId,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Per-source AUC of a ranking against `truth`. Sources whose candidates are
/// all positive or all negative are returned separately.
pub fn score_ranking(ranking: &PredictionRanking, truth: &Snapshot) -> (Vec<SourceAuc>, Vec<NodeId>) {
    let mut scored = Vec::new();
    let mut excluded = Vec::new();
    for list in &ranking.lists {
        let labeled: Vec<(f64, bool)> =
            list.targets.iter().map(|&(t, s)| (s, truth.has_edge(list.source, t))).collect();
        let positives = labeled.iter().filter(|l| l.1).count();
        match auc(&labeled) {
            Ok(a) => {
                scored.push(SourceAuc { source: list.source, auc: a, positives, negatives: labeled.len() - positives })
            }
            Err(_) => excluded.push(list.source),
        }
    }
    (scored, excluded)
}

/// Macro average of per-source AUCs.
pub fn macro_auc(per_source: &[SourceAuc]) -> Result<f64> {
    if per_source.is_empty() {
        return Err(Error::NoScorableSources);
    }
    Ok(per_source.iter().map(|s| s.auc).sum::<f64>() / per_source.len() as f64)
}

/// Mean and sample standard deviation.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// A link prediction method.
pub trait LinkPredictor: Sync {
    fn name(&self) -> String;

    /// Learns from every snapshot of `train`; the result predicts the snapshot
    /// after the last one.
    fn fit(&self, train: &GraphSequence) -> Result<Box<dyn FittedPredictor>>;
}

pub trait FittedPredictor: Send + Sync {
    fn rank(&self, sources: &[NodeId]) -> Result<PredictionRanking>;
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub method: String,
    pub mean_auc: f64,
    pub per_source: Vec<SourceAuc>,
    /// Sources without both a positive and a negative candidate.
    pub excluded_sources: Vec<NodeId>,
    pub train_seconds: f64,
    pub predict_seconds: f64,
}

/// Fits `method` on `G_1..G_{T-1}` and scores its rankings for the active
/// sources of `G_T`.
pub fn evaluate(g: &GraphSequence, method: &dyn LinkPredictor) -> Result<EvalReport> {
    let t = g.len();
    if t < 2 {
        return Err(Error::TooShort(format!("evaluation needs at least 2 snapshots, got {t}")));
    }
    let train = g.truncated(t - 1)?;
    let truth = g.snapshot(t)?;
    let sources = active_sources(truth);

    let start = Instant::now();
    let fitted = method.fit(&train)?;
    let train_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let ranking = fitted.rank(&sources)?;
    let predict_seconds = start.elapsed().as_secs_f64();

    let (per_source, excluded_sources) = score_ranking(&ranking, truth);
    let mean_auc = macro_auc(&per_source)?;
    Ok(EvalReport { method: method.name(), mean_auc, per_source, excluded_sources, train_seconds, predict_seconds })
}

/// Runs `evaluate` over several sequences in parallel, keeping input order.
pub fn evaluate_many(graphs: &[GraphSequence], method: &dyn LinkPredictor) -> Result<Vec<EvalReport>> {
    graphs.par_iter().map(|g| evaluate(g, method)).collect()
}
