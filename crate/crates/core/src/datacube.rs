//! Neighborhood evolution histograms ("datacubes") and the distance between
//! them.
//!
//! A datacube `d_t(i)` records, for every cell `s`, how many pairs of the
//! neighborhood `N_{t-1,p}(i)` had features `s` at `t-1` (`eta`) and how many
//! of those were linked at `t` (`eta_plus`). Two datacubes are compared cell
//! by cell through the total-variation distance between the Beta posteriors
//! of the per-cell link probability, discretized into `B1` buckets.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{neighborhood, pair_features_unchecked, to_cell, CellKey};
use crate::graph_store::{GraphSequence, NodeId};
use crate::special::regularized_incomplete_beta;

pub const DEFAULT_BUCKETS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CellCounts {
    pub eta: u32,
    pub eta_plus: u32,
}

impl CellCounts {
    pub fn new(eta: u32, eta_plus: u32) -> Self {
        Self { eta, eta_plus }
    }
}

/// Sparse map from cell to counts. Cells are kept sorted and cells with
/// `eta == 0` are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datacube {
    owner: NodeId,
    t: usize,
    max_bin: u8,
    cells: Vec<(CellKey, CellCounts)>,
}

impl Datacube {
    pub fn new<I>(owner: NodeId, t: usize, max_bin: u8, cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (CellKey, CellCounts)>,
    {
        let mut cells: Vec<_> = cells.into_iter().collect();
        cells.sort_unstable_by_key(|&(k, _)| k);
        let mut merged: Vec<(CellKey, CellCounts)> = Vec::with_capacity(cells.len());
        for (key, c) in cells {
            match merged.last_mut() {
                Some((last, acc)) if *last == key => {
                    acc.eta += c.eta;
                    acc.eta_plus += c.eta_plus;
                }
                _ => merged.push((key, c)),
            }
        }
        for &(_, c) in &merged {
            if c.eta_plus > c.eta {
                return Err(Error::InvalidCounts { eta: c.eta as f64, eta_plus: c.eta_plus as f64 });
            }
        }
        merged.retain(|(_, c)| c.eta > 0);
        Ok(Self { owner, t, max_bin, cells: merged })
    }

    pub fn empty(owner: NodeId, t: usize, max_bin: u8) -> Self {
        Self { owner, t, max_bin, cells: Vec::new() }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn max_bin(&self) -> u8 {
        self.max_bin
    }

    pub fn cells(&self) -> &[(CellKey, CellCounts)] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, key: CellKey) -> Option<CellCounts> {
        self.cells.binary_search_by_key(&key, |&(k, _)| k).ok().map(|idx| self.cells[idx].1)
    }

    /// Total number of counted pairs.
    pub fn total_eta(&self) -> u64 {
        self.cells.iter().map(|(_, c)| c.eta as u64).sum()
    }
}

/// `d_t(i)`: pairs of `N_{t-1,p}(i)` binned by their features at `t-1`,
/// with `eta_plus` counting the pairs linked at `t`. Undirected sequences
/// count unordered pairs, directed ones count ordered pairs.
pub fn build_datacube(g: &GraphSequence, i: NodeId, t: usize, window: usize, max_bin: u8) -> Result<Datacube> {
    if t <= window {
        return Err(Error::WindowTooLarge { window, t, min_t: window + 1 });
    }
    let members = neighborhood(g, i, t - 1, window)?.members;
    let prev = g.snapshot(t - 1)?;
    let next = g.snapshot(t)?;
    let side = max_bin as usize + 1;
    let mut dense = vec![CellCounts::default(); side * side];
    let mut count = |j: NodeId, k: NodeId| {
        let cell = to_cell(pair_features_unchecked(g, prev, j, k), max_bin);
        let slot = &mut dense[cell.cn_bin as usize * side + cell.ll_bin as usize];
        slot.eta += 1;
        slot.eta_plus += next.has_edge(j, k) as u32;
    };
    for (a, &j) in members.iter().enumerate() {
        for &k in &members[a + 1..] {
            count(j, k);
            if g.is_directed() {
                count(k, j);
            }
        }
    }
    let cells = dense
        .into_iter()
        .enumerate()
        .filter(|(_, c)| c.eta > 0)
        .map(|(idx, c)| (CellKey::new((idx / side) as u8, (idx % side) as u8), c));
    Datacube::new(i, t, max_bin, cells)
}

/// Cell-wise sums of many datacubes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorDatacube {
    max_bin: u8,
    cells: Vec<(CellKey, (u64, u64))>,
}

impl PriorDatacube {
    pub fn get(&self, key: CellKey) -> Option<(u64, u64)> {
        self.cells.binary_search_by_key(&key, |&(k, _)| k).ok().map(|idx| self.cells[idx].1)
    }

    pub fn cells(&self) -> &[(CellKey, (u64, u64))] {
        &self.cells
    }

    pub fn max_bin(&self) -> u8 {
        self.max_bin
    }
}

pub fn build_prior<'a, I>(cubes: I) -> Result<PriorDatacube>
where
    I: IntoIterator<Item = &'a Datacube>,
{
    let mut sums: std::collections::BTreeMap<CellKey, (u64, u64)> = Default::default();
    let mut max_bin = None;
    for cube in cubes {
        match max_bin {
            None => max_bin = Some(cube.max_bin),
            Some(m) if m != cube.max_bin => return Err(Error::BinningMismatch { left: m, right: cube.max_bin }),
            _ => {}
        }
        for &(key, c) in &cube.cells {
            let e = sums.entry(key).or_default();
            e.0 += c.eta as u64;
            e.1 += c.eta_plus as u64;
        }
    }
    let max_bin = max_bin.ok_or(Error::EmptyTrainingSet)?;
    Ok(PriorDatacube { max_bin, cells: sums.into_iter().collect() })
}

/// Parameters of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Laplace-smoothed posterior of a cell's link probability:
/// `Beta(eta_plus + 1, eta - eta_plus + 1)`.
pub fn cell_posterior(eta: u64, eta_plus: u64) -> Result<BetaParams> {
    if eta_plus > eta {
        return Err(Error::InvalidCounts { eta: eta as f64, eta_plus: eta_plus as f64 });
    }
    Ok(BetaParams { alpha: eta_plus as f64 + 1.0, beta: (eta - eta_plus) as f64 + 1.0 })
}

/// Probability masses of a Beta distribution over `B1` equal-width buckets
/// of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellHistogram {
    masses: Vec<f64>,
}

impl CellHistogram {
    pub fn from_masses(masses: Vec<f64>) -> Self {
        Self { masses }
    }

    pub fn uniform(buckets: usize) -> Self {
        Self { masses: vec![1.0 / buckets as f64; buckets] }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn buckets(&self) -> usize {
        self.masses.len()
    }

    /// Half the L1 distance between the two mass vectors.
    pub fn tv(&self, other: &CellHistogram) -> f64 {
        tv_masses(&self.masses, &other.masses)
    }
}

pub(crate) fn tv_masses(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub fn discretize(params: BetaParams, buckets: usize) -> Result<CellHistogram> {
    if !(params.alpha > 0.0 && params.beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Beta parameters must be positive, got ({}, {})",
            params.alpha, params.beta
        )));
    }
    if buckets < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 buckets, got {buckets}")));
    }
    let mut prev = 0.0;
    let masses = (1..=buckets)
        .map(|m| {
            let cdf = if m == buckets {
                1.0
            } else {
                regularized_incomplete_beta(params.alpha, params.beta, m as f64 / buckets as f64)
            };
            let mass = (cdf - prev).max(0.0);
            prev = cdf;
            mass
        })
        .collect();
    Ok(CellHistogram { masses })
}

/// Histogram of the posterior of one cell.
pub fn cell_histogram(counts: CellCounts, buckets: usize) -> Result<CellHistogram> {
    discretize(cell_posterior(counts.eta as u64, counts.eta_plus as u64)?, buckets)
}

/// `D(a, b)`: sum over the union of non-empty cells of the TV distance between
/// the discretized posteriors. A cell missing on one side is compared against
/// the uniform posterior.
pub fn tv_distance(a: &Datacube, b: &Datacube, buckets: usize) -> Result<f64> {
    if a.max_bin != b.max_bin {
        return Err(Error::BinningMismatch { left: a.max_bin, right: b.max_bin });
    }
    let uniform = CellHistogram::uniform(buckets);
    let hist = |c: Option<CellCounts>| match c {
        Some(c) => cell_histogram(c, buckets),
        None => Ok(uniform.clone()),
    };
    let mut total = 0.0;
    let (mut x, mut y) = (0, 0);
    while x < a.cells.len() || y < b.cells.len() {
        let ka = a.cells.get(x).map(|c| c.0);
        let kb = b.cells.get(y).map(|c| c.0);
        let (ca, cb) = match (ka, kb) {
            (Some(p), Some(q)) if p == q => {
                x += 1;
                y += 1;
                (Some(a.cells[x - 1].1), Some(b.cells[y - 1].1))
            }
            (Some(p), Some(q)) if p < q => {
                x += 1;
                (Some(a.cells[x - 1].1), None)
            }
            (Some(_), None) => {
                x += 1;
                (Some(a.cells[x - 1].1), None)
            }
            _ => {
                y += 1;
                (None, Some(b.cells[y - 1].1))
            }
        };
        if ca == cb {
            continue;
        }
        total += hist(ca)?.tv(&hist(cb)?);
    }
    Ok(total)
}

pub fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if bandwidth > 0.0 && bandwidth < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("bandwidth must lie in the open interval (0, 1), got {bandwidth}")))
    }
}

/// `b^D`.
pub fn kernel_weight(distance: f64, bandwidth: f64) -> f64 {
    bandwidth.powf(distance)
}

pub fn kernel(a: &Datacube, b: &Datacube, bandwidth: f64, buckets: usize) -> Result<f64> {
    check_bandwidth(bandwidth)?;
    Ok(kernel_weight(tv_distance(a, b, buckets)?, bandwidth))
}

/// Every datacube `d_t(i)` of a sequence for `t` in `window+1..=T`.
#[derive(Debug, Clone)]
pub struct DatacubeSet {
    window: usize,
    max_bin: u8,
    nodes: usize,
    horizon: usize,
    // indexed by (t - window - 1) * nodes + node
    cubes: Vec<Datacube>,
}

impl DatacubeSet {
    pub fn build(g: &GraphSequence, window: usize, max_bin: u8) -> Result<Self> {
        let n = g.node_count();
        let horizon = g.len();
        let jobs: Vec<(usize, NodeId)> =
            (window + 1..=horizon).flat_map(|t| (0..n as NodeId).map(move |i| (t, i))).collect();
        let cubes =
            jobs.par_iter().map(|&(t, i)| build_datacube(g, i, t, window, max_bin)).collect::<Result<Vec<_>>>()?;
        Ok(Self { window, max_bin, nodes: n, horizon, cubes })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn max_bin(&self) -> u8 {
        self.max_bin
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Last timestep with datacubes.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn first_t(&self) -> usize {
        self.window + 1
    }

    pub fn get(&self, node: NodeId, t: usize) -> Option<&Datacube> {
        if t < self.first_t() || t > self.horizon || node as usize >= self.nodes {
            return None;
        }
        self.cubes.get((t - self.first_t()) * self.nodes + node as usize)
    }

    pub fn cubes(&self) -> &[Datacube] {
        &self.cubes
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CACHE_MAGIC)?;
        out.write_all(&CACHE_VERSION.to_le_bytes())?;
        out.write_all(&[self.max_bin])?;
        out.write_all(&(self.window as u32).to_le_bytes())?;
        out.write_all(&(self.nodes as u32).to_le_bytes())?;
        out.write_all(&(self.horizon as u32).to_le_bytes())?;
        out.write_all(&(self.cubes.len() as u64).to_le_bytes())?;
        for cube in &self.cubes {
            out.write_all(&cube.owner.to_le_bytes())?;
            out.write_all(&(cube.t as u32).to_le_bytes())?;
            out.write_all(&(cube.cells.len() as u32).to_le_bytes())?;
            for &(key, c) in &cube.cells {
                out.write_all(&[key.cn_bin, key.ll_bin])?;
                out.write_all(&c.eta.to_le_bytes())?;
                out.write_all(&c.eta_plus.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::BadCache("not a datacube cache".into()));
        }
        let version = read_u32(&mut input)?;
        if version != CACHE_VERSION {
            return Err(Error::BadCache(format!("unsupported version {version}")));
        }
        let mut mb = [0u8; 1];
        input.read_exact(&mut mb)?;
        let max_bin = mb[0];
        let window = read_u32(&mut input)? as usize;
        let nodes = read_u32(&mut input)? as usize;
        let horizon = read_u32(&mut input)? as usize;
        let mut count = [0u8; 8];
        input.read_exact(&mut count)?;
        let count = u64::from_le_bytes(count) as usize;
        let expected = horizon.saturating_sub(window) * nodes;
        if count != expected {
            return Err(Error::BadCache(format!("expected {expected} cubes, header says {count}")));
        }
        let mut cubes = Vec::with_capacity(count);
        for _ in 0..count {
            let owner = read_u32(&mut input)?;
            let t = read_u32(&mut input)? as usize;
            let ncells = read_u32(&mut input)? as usize;
            let mut cells = Vec::with_capacity(ncells);
            for _ in 0..ncells {
                let mut key = [0u8; 2];
                input.read_exact(&mut key)?;
                let eta = read_u32(&mut input)?;
                let eta_plus = read_u32(&mut input)?;
                cells.push((CellKey::new(key[0], key[1]), CellCounts { eta, eta_plus }));
            }
            cubes.push(Datacube::new(owner, t, max_bin, cells)?);
        }
        Ok(Self { window, max_bin, nodes, horizon, cubes })
    }
}

const CACHE_MAGIC: &[u8; 8] = b"NPLKCUBE";
const CACHE_VERSION: u32 = 1;

pub(crate) fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
