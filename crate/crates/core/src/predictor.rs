//! Nonparametric estimate of the link probability of a pair given its
//! features and the datacube of its source.
//!
//! A datacube `d_t(i)` observed in training is paired with the next one,
//! `d_{t+1}(i)`, whose counts say how pairs with each feature cell fared one
//! step later. For a query, the historical datacubes closest to `d_T(q)`
//! vote with weight `b^D` on the query cell (and, damped, its neighbors).
//! Pairs are ranked by the Wilson lower bound of the pooled counts, shrunk
//! towards the same bound on the pooled training counts.

use rayon::prelude::*;
use serde::Serialize;

use crate::datacube::{
    build_prior, check_bandwidth, kernel_weight, Datacube, DatacubeSet, PriorDatacube, DEFAULT_BUCKETS,
};
use crate::error::{Error, Result};
use crate::evaluation::{active_sources, macro_auc, score_ranking, FittedPredictor, LinkPredictor, PredictionRanking};
use crate::features::{candidate_pairs, pair_features_unchecked, to_cell, CellKey, DEFAULT_MAX_BIN};
use crate::graph_store::{GraphSequence, NodeId};
use crate::lsh::{
    adapt_k, CubeCorpus, ExactSearch, LshIndex, LshParams, Neighbor, NeighborSearch, DEFAULT_B2, DEFAULT_TABLES,
    DEFAULT_TOP_R,
};

pub const BANDWIDTH_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
/// Used when there is too little history to cross-validate.
pub const FALLBACK_BANDWIDTH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Bandwidth {
    Fixed(f64),
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SearchMode {
    Exact,
    /// `k: None` picks k with [`adapt_k`] on the query workload.
    Lsh {
        k: Option<usize>,
        tables: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictorConfig {
    pub window: usize,
    pub max_bin: u8,
    pub buckets: usize,
    pub b2: usize,
    pub bandwidth: Bandwidth,
    pub search: SearchMode,
    /// Neighbors used per query; `usize::MAX` keeps every training datacube.
    pub top_r: usize,
    pub feature_smoothing: f64,
    pub prior_weight: f64,
    pub z: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            window: 2,
            max_bin: DEFAULT_MAX_BIN,
            buckets: DEFAULT_BUCKETS,
            b2: DEFAULT_B2,
            bandwidth: Bandwidth::Auto,
            search: SearchMode::Lsh { k: None, tables: DEFAULT_TABLES, seed: 0 },
            top_r: DEFAULT_TOP_R,
            feature_smoothing: 0.5,
            prior_weight: 5.0,
            z: 1.96,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidParameter("window must be at least 1".into()));
        }
        if let Bandwidth::Fixed(b) = self.bandwidth {
            check_bandwidth(b)?;
        }
        if !(0.0..=1.0).contains(&self.feature_smoothing) {
            return Err(Error::InvalidParameter("feature smoothing must lie in [0, 1]".into()));
        }
        if self.prior_weight.is_nan() || self.prior_weight <= 0.0 {
            return Err(Error::InvalidParameter("prior weight must be positive".into()));
        }
        if self.z.is_nan() || self.z <= 0.0 {
            return Err(Error::InvalidParameter("z must be positive".into()));
        }
        if self.top_r == 0 {
            return Err(Error::InvalidParameter("top_r must be at least 1".into()));
        }
        Ok(())
    }

    /// Fewest snapshots a training sequence needs.
    pub fn min_snapshots(&self) -> usize {
        self.window + 2
    }
}

/// `psi_t(source, target)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub source: NodeId,
    pub target: NodeId,
    pub t: usize,
    pub cell: CellKey,
    pub cube: Datacube,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct AggregatedCounts {
    pub eta_w: f64,
    pub eta_plus_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    /// `None` when no weighted evidence exists.
    pub g_hat: Option<f64>,
    pub wilson_low: f64,
    pub final_score: f64,
}

/// `phi(s', s)`: 1 on the cell, `lambda` one bin step away, else 0.
pub fn feature_kernel(a: CellKey, b: CellKey, lambda: f64) -> f64 {
    match a.bin_distance(&b) {
        0 => 1.0,
        1 => lambda,
        _ => 0.0,
    }
}

/// Lower end of the Wilson score interval for `eta_plus` successes in `eta`
/// (possibly fractional) trials.
pub fn wilson_lower(eta_plus: f64, eta: f64, z: f64) -> Result<f64> {
    if !(eta_plus >= 0.0 && eta >= 0.0) || eta_plus > eta * (1.0 + 1e-12) {
        return Err(Error::InvalidCounts { eta, eta_plus });
    }
    if eta == 0.0 {
        return Ok(0.0);
    }
    let n = eta;
    let p = (eta_plus / eta).min(1.0);
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(((centre - spread) / (1.0 + z2 / n)).clamp(0.0, 1.0))
}

/// Wilson bound of the prior's counts at `cell`; 0 if the cell never occurred.
pub fn prior_score(prior: &PriorDatacube, cell: CellKey, z: f64) -> f64 {
    match prior.get(cell) {
        Some((eta, eta_plus)) => wilson_lower(eta_plus as f64, eta as f64, z).unwrap_or(0.0),
        None => 0.0,
    }
}

/// `w * score + (1 - w) * prior_score` with `w = eta_w / (eta_w + m)`.
pub fn smooth_with_prior(score: f64, prior: &PriorDatacube, cell: CellKey, eta_w: f64, m: f64, z: f64) -> f64 {
    let w = eta_w / (eta_w + m);
    w * score + (1.0 - w) * prior_score(prior, cell, z)
}

/// Wilson bound plus prior smoothing for one set of pooled counts.
pub fn score_counts(
    counts: AggregatedCounts,
    prior: &PriorDatacube,
    cell: CellKey,
    config: &PredictorConfig,
) -> Result<Score> {
    let g_hat = (counts.eta_w > 0.0).then(|| (counts.eta_plus_w / counts.eta_w).min(1.0));
    let wilson_low = wilson_lower(counts.eta_plus_w, counts.eta_w, config.z)?;
    let final_score = smooth_with_prior(wilson_low, prior, cell, counts.eta_w, config.prior_weight, config.z);
    Ok(Score { g_hat, wilson_low, final_score })
}

// Kernel-weighted sum of the neighbors' outcome cubes, per cell.
fn pool_outcomes(neighbors: &[Neighbor], outcomes: &[Datacube], bandwidth: f64) -> Vec<(CellKey, AggregatedCounts)> {
    let mut pooled: Vec<(CellKey, AggregatedCounts)> = Vec::new();
    for n in neighbors {
        let w = kernel_weight(n.distance, bandwidth);
        if w == 0.0 {
            continue;
        }
        for &(key, c) in outcomes[n.index].cells() {
            let slot = match pooled.binary_search_by_key(&key, |e| e.0) {
                Ok(pos) => pos,
                Err(pos) => {
                    pooled.insert(pos, (key, AggregatedCounts::default()));
                    pos
                }
            };
            pooled[slot].1.eta_w += w * c.eta as f64;
            pooled[slot].1.eta_plus_w += w * c.eta_plus as f64;
        }
    }
    pooled
}

fn counts_for_cell(pooled: &[(CellKey, AggregatedCounts)], cell: CellKey, lambda: f64) -> AggregatedCounts {
    let mut out = AggregatedCounts::default();
    for &(key, c) in pooled {
        let phi = feature_kernel(key, cell, lambda);
        if phi > 0.0 {
            out.eta_w += phi * c.eta_w;
            out.eta_plus_w += phi * c.eta_plus_w;
        }
    }
    out
}

/// Weighted counts for a single query against `search`, whose corpus entries
/// are paired index-for-index with `outcomes`.
pub fn estimate(
    q: &Query,
    search: &dyn NeighborSearch,
    outcomes: &[Datacube],
    top_r: usize,
    bandwidth: f64,
    lambda: f64,
) -> Result<AggregatedCounts> {
    check_bandwidth(bandwidth)?;
    if search.corpus().len() != outcomes.len() {
        return Err(Error::InvalidParameter("outcome cubes do not match the index".into()));
    }
    let found = search.search(&q.cube, top_r)?;
    let pooled = pool_outcomes(&found.neighbors, outcomes, bandwidth);
    Ok(counts_for_cell(&pooled, q.cell, lambda))
}

/// `(signature, outcome)` datacube pairs with outcomes at or before `horizon`.
pub fn training_pairs(cubes: &DatacubeSet, horizon: usize) -> (Vec<Datacube>, Vec<Datacube>) {
    let mut signatures = Vec::new();
    let mut outcomes = Vec::new();
    for t in cubes.first_t()..horizon.min(cubes.horizon()) {
        for node in 0..cubes.nodes() as NodeId {
            signatures.push(cubes.get(node, t).expect("cube in range").clone());
            outcomes.push(cubes.get(node, t + 1).expect("cube in range").clone());
        }
    }
    (signatures, outcomes)
}

/// The estimator fitted on snapshots `1..=horizon`, predicting `horizon + 1`.
pub struct NonParamModel {
    config: PredictorConfig,
    graph: GraphSequence,
    cubes: DatacubeSet,
    horizon: usize,
    search: Box<dyn NeighborSearch>,
    outcomes: Vec<Datacube>,
    prior: PriorDatacube,
    bandwidth: f64,
    k: Option<usize>,
}

impl std::fmt::Debug for NonParamModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonParamModel")
            .field("horizon", &self.horizon)
            .field("bandwidth", &self.bandwidth)
            .field("k", &self.k)
            .field("training", &self.outcomes.len())
            .finish()
    }
}

impl NonParamModel {
    /// Fits on every snapshot of `g`.
    pub fn fit(g: &GraphSequence, config: PredictorConfig) -> Result<Self> {
        config.validate()?;
        if g.len() < config.min_snapshots() {
            return Err(Error::TooShort(format!(
                "window {} needs at least {} training snapshots, got {}",
                config.window,
                config.min_snapshots(),
                g.len()
            )));
        }
        let cubes = DatacubeSet::build(g, config.window, config.max_bin)?;
        Self::fit_with_cubes(g, cubes, config)
    }

    /// Fits from precomputed datacubes of `g` (built with the config's window
    /// and binning).
    pub fn fit_with_cubes(g: &GraphSequence, cubes: DatacubeSet, config: PredictorConfig) -> Result<Self> {
        config.validate()?;
        if cubes.window() != config.window || cubes.max_bin() != config.max_bin || cubes.horizon() != g.len() {
            return Err(Error::InvalidParameter("datacubes do not match the graph or configuration".into()));
        }
        let horizon = g.len();
        let bandwidth = match config.bandwidth {
            Bandwidth::Fixed(b) => b,
            Bandwidth::Auto => select_bandwidth(g, &cubes, &config)?,
        };
        Self::at_horizon(g.clone(), cubes, horizon, bandwidth, config)
    }

    /// Fits around a prebuilt LSH index over the training signatures of
    /// `cubes`, as written by [`LshIndex::write`].
    pub fn with_index(g: &GraphSequence, cubes: DatacubeSet, index: LshIndex, config: PredictorConfig) -> Result<Self> {
        config.validate()?;
        if cubes.window() != config.window || cubes.max_bin() != config.max_bin || cubes.horizon() != g.len() {
            return Err(Error::InvalidParameter("datacubes do not match the graph or configuration".into()));
        }
        let (_, outcomes) = training_pairs(&cubes, g.len());
        if index.corpus().len() != outcomes.len() {
            return Err(Error::InvalidParameter(format!(
                "index holds {} datacubes but the graph yields {} training pairs",
                index.corpus().len(),
                outcomes.len()
            )));
        }
        let bandwidth = match config.bandwidth {
            Bandwidth::Fixed(b) => b,
            Bandwidth::Auto => select_bandwidth(g, &cubes, &config)?,
        };
        let k = Some(index.params().k);
        let prior = build_prior(&outcomes)?;
        Ok(Self {
            config,
            graph: g.clone(),
            cubes,
            horizon: g.len(),
            search: Box::new(index),
            outcomes,
            prior,
            bandwidth,
            k,
        })
    }

    fn at_horizon(
        graph: GraphSequence,
        cubes: DatacubeSet,
        horizon: usize,
        bandwidth: f64,
        config: PredictorConfig,
    ) -> Result<Self> {
        let (signatures, outcomes) = training_pairs(&cubes, horizon);
        if signatures.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let prior = build_prior(&outcomes)?;
        let corpus = CubeCorpus::build(&signatures, config.buckets, config.b2)?;
        let (search, k) = build_search(corpus, &cubes, horizon, &config)?;
        Ok(Self { config, graph, cubes, horizon, search, outcomes, prior, bandwidth, k })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Hash length in use, `None` for exact search.
    pub fn k(&self) -> Option<usize> {
        self.k
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn training_size(&self) -> usize {
        self.outcomes.len()
    }

    pub fn prior(&self) -> &PriorDatacube {
        &self.prior
    }

    pub fn search(&self) -> &dyn NeighborSearch {
        self.search.as_ref()
    }

    pub fn outcomes(&self) -> &[Datacube] {
        &self.outcomes
    }

    /// Query for `(source, target)` at the model horizon.
    pub fn query(&self, source: NodeId, target: NodeId) -> Result<Query> {
        self.graph.check_node(source)?;
        self.graph.check_node(target)?;
        if source == target {
            return Err(Error::SamePair(source));
        }
        let snap = self.graph.snapshot(self.horizon)?;
        let cell = to_cell(pair_features_unchecked(&self.graph, snap, source, target), self.config.max_bin);
        let cube = self.cubes.get(source, self.horizon).expect("query cube").clone();
        Ok(Query { source, target, t: self.horizon, cell, cube })
    }

    pub fn score_pair(&self, source: NodeId, target: NodeId) -> Result<Score> {
        let q = self.query(source, target)?;
        let counts = estimate(
            &q,
            self.search.as_ref(),
            &self.outcomes,
            self.config.top_r,
            self.bandwidth,
            self.config.feature_smoothing,
        )?;
        score_counts(counts, &self.prior, q.cell, &self.config)
    }

    fn neighbors_of(&self, source: NodeId) -> Result<Vec<Neighbor>> {
        let cube = self.cubes.get(source, self.horizon).expect("query cube");
        Ok(self.search.search(cube, self.config.top_r)?.neighbors)
    }

    fn rank_source(&self, source: NodeId, neighbors: &[Neighbor], bandwidth: f64) -> Result<Vec<(NodeId, f64)>> {
        let snap = self.graph.snapshot(self.horizon)?;
        let pooled = pool_outcomes(neighbors, &self.outcomes, bandwidth);
        candidate_pairs(&self.graph, source, self.horizon, 1)?
            .into_iter()
            .map(|target| {
                let cell = to_cell(pair_features_unchecked(&self.graph, snap, source, target), self.config.max_bin);
                let counts = counts_for_cell(&pooled, cell, self.config.feature_smoothing);
                Ok((target, score_counts(counts, &self.prior, cell, &self.config)?.final_score))
            })
            .collect()
    }

    fn rank_with(&self, sources: &[NodeId], neighbors: &[Vec<Neighbor>], bandwidth: f64) -> Result<PredictionRanking> {
        let scored = sources
            .par_iter()
            .zip(neighbors)
            .map(|(&s, n)| Ok((s, self.rank_source(s, n, bandwidth)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(PredictionRanking::from_scores(self.horizon, scored))
    }

    fn all_neighbors(&self, sources: &[NodeId]) -> Result<Vec<Vec<Neighbor>>> {
        sources.par_iter().map(|&s| self.neighbors_of(s)).collect()
    }

    /// Ranks every candidate target of each source for snapshot `horizon + 1`.
    pub fn rank(&self, sources: &[NodeId]) -> Result<PredictionRanking> {
        for &s in sources {
            self.graph.check_node(s)?;
        }
        let neighbors = self.all_neighbors(sources)?;
        self.rank_with(sources, &neighbors, self.bandwidth)
    }
}

/// Exact search, or LSH with a given or adapted `k`; falls back to exact
/// search when LSH cannot supply `top_r` candidates.
pub fn build_search(
    corpus: CubeCorpus,
    cubes: &DatacubeSet,
    horizon: usize,
    config: &PredictorConfig,
) -> Result<(Box<dyn NeighborSearch>, Option<usize>)> {
    Ok(match config.search {
        SearchMode::Exact => (Box::new(ExactSearch::new(corpus)), None),
        SearchMode::Lsh { k, tables, seed } => {
            let k = match k {
                Some(k) => Ok(k),
                None => {
                    let workload: Vec<Datacube> =
                        (0..cubes.nodes() as NodeId).filter_map(|v| cubes.get(v, horizon).cloned()).collect();
                    adapt_k(&corpus, &workload, tables, config.top_r.min(corpus.len()), seed)
                }
            };
            match k {
                Ok(k) => {
                    let bits = corpus.layout().bit_len();
                    let k = k.clamp(bits.min(1), bits);
                    let index = LshIndex::build(corpus, LshParams { k, tables, top_r: config.top_r, seed })?;
                    (Box::new(index), Some(k))
                }
                Err(Error::InsufficientCandidates { candidates, r }) => {
                    log::warn!("LSH yields {candidates:.1} mean candidates for r = {r}; using exact search");
                    (Box::new(ExactSearch::new(corpus)), None)
                }
                Err(e) => return Err(e),
            }
        }
    })
}

/// Grid search: fit on everything before the last snapshot, score the last.
fn select_bandwidth(g: &GraphSequence, cubes: &DatacubeSet, config: &PredictorConfig) -> Result<f64> {
    let inner = g.len() - 1;
    if inner < config.min_snapshots() {
        log::info!("too few snapshots for bandwidth selection; using {FALLBACK_BANDWIDTH}");
        return Ok(FALLBACK_BANDWIDTH);
    }
    let truth = g.snapshot(g.len())?;
    let train = g.truncated(inner)?;
    let mut inner_config = *config;
    inner_config.bandwidth = Bandwidth::Fixed(FALLBACK_BANDWIDTH);
    let model = NonParamModel::at_horizon(train, cubes.clone(), inner, FALLBACK_BANDWIDTH, inner_config)?;
    let sources = active_sources(truth);
    let neighbors = model.all_neighbors(&sources)?;
    let mut best = (f64::NEG_INFINITY, FALLBACK_BANDWIDTH);
    for &b in &BANDWIDTH_GRID {
        let ranking = model.rank_with(&sources, &neighbors, b)?;
        let (per_source, _) = score_ranking(&ranking, truth);
        let Ok(auc) = macro_auc(&per_source) else {
            return Ok(FALLBACK_BANDWIDTH);
        };
        log::debug!("bandwidth {b}: validation AUC {auc:.4}");
        if auc > best.0 {
            best = (auc, b);
        }
    }
    Ok(best.1)
}

impl FittedPredictor for NonParamModel {
    fn rank(&self, sources: &[NodeId]) -> Result<PredictionRanking> {
        NonParamModel::rank(self, sources)
    }
}

/// [`LinkPredictor`] adapter.
#[derive(Debug, Clone, Copy)]
pub struct NonParam(pub PredictorConfig);

impl LinkPredictor for NonParam {
    fn name(&self) -> String {
        match self.0.search {
            SearchMode::Exact => "nonparam-exact".into(),
            SearchMode::Lsh { .. } => "nonparam".into(),
        }
    }

    fn fit(&self, train: &GraphSequence) -> Result<Box<dyn FittedPredictor>> {
        Ok(Box::new(NonParamModel::fit(train, self.0)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datacube::CellCounts;

    fn exact_config(bandwidth: f64) -> PredictorConfig {
        PredictorConfig {
            window: 1,
            bandwidth: Bandwidth::Fixed(bandwidth),
            search: SearchMode::Exact,
            ..PredictorConfig::default()
        }
    }

    #[test]
    fn wilson_conventions() {
        assert_eq!(wilson_lower(0.0, 0.0, 1.96).unwrap(), 0.0);
        assert!(wilson_lower(1e9, 1e9, 1.96).unwrap() > 0.9999);
        assert!(wilson_lower(-1.0, 2.0, 1.96).is_err());
        assert!(wilson_lower(3.0, 2.0, 1.96).is_err());
        let mid = wilson_lower(5.0, 10.0, 1.96).unwrap();
        assert!(mid < 0.5 && mid > 0.2);
    }

    #[test]
    fn wilson_monotone_in_successes() {
        let mut prev = -1.0;
        for k in 0..=40 {
            let w = wilson_lower(k as f64 * 0.5, 20.0, 1.96).unwrap();
            assert!(w > prev);
            prev = w;
        }
    }

    #[test]
    fn prior_smoothing_limits() {
        let prior =
            build_prior(&[Datacube::new(0, 2, 7, [(CellKey::new(0, 0), CellCounts::new(50, 10))]).unwrap()]).unwrap();
        let cell = CellKey::new(0, 0);
        let p = prior_score(&prior, cell, 1.96);
        assert_eq!(smooth_with_prior(0.9, &prior, cell, 0.0, 5.0, 1.96), p);
        assert!((smooth_with_prior(0.9, &prior, cell, 1e12, 5.0, 1.96) - 0.9).abs() < 1e-9);
        assert_eq!(prior_score(&prior, CellKey::new(3, 3), 1.96), 0.0);
    }

    #[test]
    fn feature_kernel_rings() {
        let c = CellKey::new(2, 2);
        assert_eq!(feature_kernel(c, c, 0.5), 1.0);
        assert_eq!(feature_kernel(CellKey::new(3, 2), c, 0.5), 0.5);
        assert_eq!(feature_kernel(CellKey::new(3, 3), c, 0.5), 0.0);
    }

    // 0-1 present at every step, everything else silent.
    fn persistent_pair(t: usize) -> GraphSequence {
        let steps = (0..t).map(|_| vec![(0, 1), (2, 3)]).collect();
        GraphSequence::from_edges(5, false, steps).unwrap()
    }

    #[test]
    fn persistent_link_ranked_first() {
        let mut g = persistent_pair(6);
        // give node 0 a second candidate, linked once long ago
        let mut steps: Vec<Vec<(u32, u32)>> = g.snapshots().iter().map(|s| s.edges()).collect();
        steps[0].push((0, 4));
        g = GraphSequence::from_edges(5, false, steps).unwrap();
        let model = NonParamModel::fit(&g, exact_config(0.5)).unwrap();
        let ranking = model.rank(&[0]).unwrap();
        assert_eq!(ranking.lists[0].targets[0].0, 1);
    }

    #[test]
    fn too_short_is_an_error() {
        let g = persistent_pair(2);
        assert!(matches!(NonParamModel::fit(&g, exact_config(0.5)), Err(Error::TooShort(_))));
    }

    #[test]
    fn invalid_bandwidth_rejected() {
        let g = persistent_pair(5);
        let err = NonParamModel::fit(&g, exact_config(1.5)).unwrap_err();
        assert!(err.to_string().contains("(0, 1)"));
    }

    #[test]
    fn all_linked_cells_estimate_one() {
        let g = persistent_pair(6);
        let model = NonParamModel::fit(&g, exact_config(0.5)).unwrap();
        let s = model.score_pair(0, 1).unwrap();
        assert_eq!(s.g_hat, Some(1.0));
        assert!(s.wilson_low <= 1.0 && s.final_score > 0.0);
    }

    #[test]
    fn single_exact_match_reproduces_counts() {
        let sig = Datacube::new(0, 2, 7, [(CellKey::new(0, 0), CellCounts::new(3, 1))]).unwrap();
        let other = Datacube::new(1, 2, 7, [(CellKey::new(0, 0), CellCounts::new(30, 29))]).unwrap();
        let out = vec![
            Datacube::new(0, 3, 7, [(CellKey::new(1, 0), CellCounts::new(7, 4))]).unwrap(),
            Datacube::new(1, 3, 7, [(CellKey::new(1, 0), CellCounts::new(9, 9))]).unwrap(),
        ];
        let search = ExactSearch::new(CubeCorpus::build(&[sig.clone(), other], 10, 8).unwrap());
        let q = Query { source: 0, target: 1, t: 2, cell: CellKey::new(1, 0), cube: sig };
        let c = estimate(&q, &search, &out, 1, 0.5, 0.0).unwrap();
        assert_eq!(c, AggregatedCounts { eta_w: 7.0, eta_plus_w: 4.0 });
    }

    #[test]
    fn scores_are_deterministic_across_thread_counts() {
        let g = crate::simulator::simulate(&crate::simulator::SimConfig {
            n: 30,
            t: 7,
            seed: 3,
            ..crate::simulator::SimConfig::default()
        })
        .unwrap();
        let config = PredictorConfig { bandwidth: Bandwidth::Auto, ..PredictorConfig::default() };
        let sources: Vec<NodeId> = (0..30).collect();
        let a = NonParamModel::fit(&g, config).unwrap().rank(&sources).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| NonParamModel::fit(&g, config).unwrap().rank(&sources).unwrap());
        assert_eq!(a, b);
    }
}
