//! Synthetic snapshot sequences from a seasonal latent-feature model.
//!
//! Every node carries a binary feature vector. Seasons cycle with period
//! `n_seasons`, and season `s` activates its own block of
//! `features_per_season` features. At each step a pair links with
//! probability `p_in` if both endpoints hold a common active feature and with
//! probability `noise * p_in` otherwise; afterwards features drift.
//!
//! Two membership models are available. With [`Membership::Bernoulli`] every
//! bit is drawn independently and drift flips each bit with probability
//! `drift`. With [`Membership::OnePerBlock`] a node holds exactly one feature
//! of every season block and drift moves it, with probability `drift` per
//! block and step, to a uniformly drawn feature of the same block.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_store::{GraphSequence, NodeId};

/// Noise-to-signal ratios swept by the experiments.
pub const NOISE_SWEEP: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Membership {
    /// Each bit set independently with the given probability.
    Bernoulli {
        density: f64,
    },
    OnePerBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub t: usize,
    pub n_seasons: usize,
    pub n_features: usize,
    pub features_per_season: usize,
    pub membership: Membership,
    pub p_in: f64,
    pub noise: f64,
    pub drift: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 100,
            t: 20,
            n_seasons: 3,
            n_features: 12,
            features_per_season: 4,
            membership: Membership::OnePerBlock,
            p_in: 0.3,
            noise: NOISE_SWEEP[0],
            drift: 0.01,
            seed: 0,
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {p}")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.t < 1 {
            return Err(Error::InvalidParameter("need at least 2 nodes and 1 timestep".into()));
        }
        if self.n_seasons == 0 {
            return Err(Error::InvalidParameter("need at least one season".into()));
        }
        if self.n_seasons * self.features_per_season > self.n_features {
            return Err(Error::InvalidParameter(format!(
                "{} seasons of {} features need at least {} features, got {}",
                self.n_seasons,
                self.features_per_season,
                self.n_seasons * self.features_per_season,
                self.n_features
            )));
        }
        if let Membership::Bernoulli { density } = self.membership {
            check_probability("density", density)?;
        }
        if self.features_per_season == 0 {
            return Err(Error::InvalidParameter("need at least one feature per season".into()));
        }
        check_probability("p_in", self.p_in)?;
        check_probability("drift", self.drift)?;
        check_probability("noise * p_in", self.noise * self.p_in)?;
        if self.noise < 0.0 {
            return Err(Error::InvalidParameter("noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Zero-based season of timestep `t`.
    pub fn season(&self, t: usize) -> usize {
        (t - 1) % self.n_seasons
    }

    /// Features active at timestep `t`.
    pub fn active_features(&self, t: usize) -> std::ops::Range<usize> {
        let s = self.season(t);
        s * self.features_per_season..(s + 1) * self.features_per_season
    }

    pub fn p_noise(&self) -> f64 {
        self.noise * self.p_in
    }
}

/// Feature vectors of every node over time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentState {
    /// `features[t - 1][node]` is the vector used to draw `G_t`.
    pub features: Vec<Vec<Vec<bool>>>,
}

impl LatentState {
    pub fn shares_active(&self, cfg: &SimConfig, t: usize, i: NodeId, j: NodeId) -> bool {
        let f = &self.features[t - 1];
        cfg.active_features(t).any(|k| f[i as usize][k] && f[j as usize][k])
    }
}

fn blocks(cfg: &SimConfig) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
    (0..cfg.n_seasons).map(|s| s * cfg.features_per_season..(s + 1) * cfg.features_per_season)
}

fn initial_features(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<bool>> {
    (0..cfg.n)
        .map(|_| match cfg.membership {
            Membership::Bernoulli { density } => (0..cfg.n_features).map(|_| rng.gen_bool(density)).collect(),
            Membership::OnePerBlock => {
                let mut v = vec![false; cfg.n_features];
                for block in blocks(cfg) {
                    v[rng.gen_range(block)] = true;
                }
                v
            }
        })
        .collect()
}

fn apply_drift(cfg: &SimConfig, current: &mut [Vec<bool>], rng: &mut ChaCha8Rng) {
    for node in current.iter_mut() {
        match cfg.membership {
            Membership::Bernoulli { .. } => {
                for bit in node.iter_mut() {
                    if rng.gen::<f64>() < cfg.drift {
                        *bit = !*bit;
                    }
                }
            }
            Membership::OnePerBlock => {
                for block in blocks(cfg) {
                    if rng.gen::<f64>() < cfg.drift {
                        for k in block.clone() {
                            node[k] = false;
                        }
                        node[rng.gen_range(block)] = true;
                    }
                }
            }
        }
    }
}

/// Draws a sequence together with the latent features that produced it.
pub fn simulate_with_state(cfg: &SimConfig) -> Result<(GraphSequence, LatentState)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = initial_features(cfg, &mut rng);
    let mut history = Vec::with_capacity(cfg.t);
    let mut edges_by_t = Vec::with_capacity(cfg.t);
    for t in 1..=cfg.t {
        let active = cfg.active_features(t);
        let mut edges = Vec::new();
        for i in 0..cfg.n {
            for j in i + 1..cfg.n {
                let shared = active.clone().any(|k| current[i][k] && current[j][k]);
                let p = if shared { cfg.p_in } else { cfg.p_noise() };
                if rng.gen::<f64>() < p {
                    edges.push((i as NodeId, j as NodeId));
                }
            }
        }
        edges_by_t.push(edges);
        history.push(current.clone());
        apply_drift(cfg, &mut current, &mut rng);
    }
    let g = GraphSequence::from_edges(cfg.n, false, edges_by_t)?;
    Ok((g, LatentState { features: history }))
}

pub fn simulate(cfg: &SimConfig) -> Result<GraphSequence> {
    Ok(simulate_with_state(cfg)?.0)
}

/// One sequence per seed, generated in parallel.
pub fn simulate_seeds(cfg: &SimConfig, seeds: &[u64]) -> Result<Vec<GraphSequence>> {
    seeds.par_iter().map(|&seed| simulate(&SimConfig { seed, ..*cfg })).collect()
}

/// In-season link probability of the presets.
pub const PRESET_P_IN: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    Seasonal,
    Stationary,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seasonal" => Ok(Preset::Seasonal),
            "stationary" => Ok(Preset::Stationary),
            _ => Err(Error::InvalidParameter(format!("unknown preset '{s}' (seasonal, stationary)"))),
        }
    }
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Seasonal => "seasonal",
            Preset::Stationary => "stationary",
        }
    }

    /// The preset at the lowest noise level. Both presets use one feature
    /// per block and near-certain in-season links, so that every node takes
    /// part in the seasonal structure.
    pub fn config(&self, seed: u64) -> SimConfig {
        let base = SimConfig { membership: Membership::OnePerBlock, p_in: PRESET_P_IN, seed, ..SimConfig::default() };
        match self {
            Preset::Seasonal => SimConfig { n_seasons: 3, ..base },
            Preset::Stationary => SimConfig { n_seasons: 1, ..base },
        }
    }
}

/// Named configurations: each preset at every noise level of the sweep.
pub fn noise_sweep_scenarios(seed: u64) -> Vec<(String, SimConfig)> {
    let mut out = Vec::new();
    for preset in [Preset::Seasonal, Preset::Stationary] {
        for noise in NOISE_SWEEP {
            out.push((format!("{}-noise{}", preset.name(), noise), SimConfig { noise, ..preset.config(seed) }));
        }
    }
    out
}
