//! Top-r nearest-datacube search.
//!
//! Every cell of the layout is represented by the histogram of its posterior
//! (`B1` buckets), and each bucket mass `p` by `B2` unary bits: the first
//! `floor(p * B2)` are set. The Hamming distance between two such encodings
//! is then roughly `2 * B2` times the TV distance between the datacubes, so
//! plain bit-sampling LSH applies. A hash function reads `k` sampled bit
//! positions straight from the sparse datacube; the full bit vector is only
//! built by [`encode`].
//!
//! Candidates from the `l` tables are re-ranked by their exact TV distance.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicBool, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datacube::{cell_histogram, read_u32, CellCounts, CellHistogram, Datacube};
use crate::error::{Error, Result};
use crate::features::CellKey;
use crate::graph_store::NodeId;

pub const DEFAULT_B2: usize = 8;
pub const DEFAULT_TABLES: usize = 20;
pub const DEFAULT_TOP_R: usize = 20;

/// The cells that receive bits, in key order, and the encoding resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellLayout {
    cells: Vec<CellKey>,
    b1: usize,
    b2: usize,
}

impl CellLayout {
    pub fn new(mut cells: Vec<CellKey>, b1: usize, b2: usize) -> Result<Self> {
        if b1 < 2 || b2 < 1 {
            return Err(Error::InvalidParameter(format!("need B1 >= 2 and B2 >= 1, got {b1}, {b2}")));
        }
        cells.sort_unstable();
        cells.dedup();
        if cells.len() > u16::MAX as usize {
            return Err(Error::InvalidParameter("layout too large".into()));
        }
        Ok(Self { cells, b1, b2 })
    }

    /// Union of the non-empty cells of `cubes`.
    pub fn from_cubes<'a, I>(cubes: I, b1: usize, b2: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Datacube>,
    {
        let mut cells: Vec<CellKey> = cubes.into_iter().flat_map(|c| c.cells().iter().map(|&(k, _)| k)).collect();
        cells.sort_unstable();
        cells.dedup();
        Self::new(cells, b1, b2)
    }

    pub fn cells(&self) -> &[CellKey] {
        &self.cells
    }

    /// `M`.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn b1(&self) -> usize {
        self.b1
    }

    pub fn b2(&self) -> usize {
        self.b2
    }

    /// `M * B1 * B2`.
    pub fn bit_len(&self) -> usize {
        self.cells.len() * self.b1 * self.b2
    }

    pub fn position(&self, key: CellKey) -> Option<usize> {
        self.cells.binary_search(&key).ok()
    }
}

/// Number of leading one bits used for a bucket with mass `p`.
pub fn unary_level(mass: f64, b2: usize) -> u8 {
    ((mass * b2 as f64).floor().max(0.0) as usize).min(b2) as u8
}

/// A materialized bit vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitEncoding {
    words: Vec<u64>,
    len: usize,
}

impl BitEncoding {
    fn zeros(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64)], len }
    }

    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn hamming(&self, other: &BitEncoding) -> u32 {
        self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones()).sum()
    }
}

impl BitEncoding {
    /// Concatenated `b2`-bit unary blocks, one per mass.
    pub fn unary(masses: &[f64], b2: usize) -> Self {
        let mut bits = Self::zeros(masses.len() * b2);
        for (b, &mass) in masses.iter().enumerate() {
            for j in 0..unary_level(mass, b2) as usize {
                bits.set(b * b2 + j);
            }
        }
        bits
    }
}

/// Full `M * B1 * B2`-bit encoding of a datacube. Layout cells absent from the
/// cube encode the uniform posterior.
pub fn encode(cube: &Datacube, layout: &CellLayout) -> Result<BitEncoding> {
    for &(key, _) in cube.cells() {
        if layout.position(key).is_none() {
            return Err(Error::CellOutsideLayout { cn_bin: key.cn_bin, ll_bin: key.ll_bin });
        }
    }
    let uniform = CellHistogram::uniform(layout.b1);
    let mut masses = Vec::with_capacity(layout.len() * layout.b1);
    for &key in &layout.cells {
        match cube.get(key) {
            Some(c) => masses.extend_from_slice(cell_histogram(c, layout.b1)?.masses()),
            None => masses.extend_from_slice(uniform.masses()),
        }
    }
    Ok(BitEncoding::unary(&masses, layout.b2))
}

/// `k` distinct bit positions drawn uniformly without replacement. The
/// positions are a prefix of a seeded permutation, so a function with more
/// bits always refines one with fewer bits from the same seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFunction {
    positions: Vec<u32>,
    seed: u64,
}

impl HashFunction {
    /// `k` must lie in `1..=bit_len`, except that an empty layout admits only
    /// the constant hash `k = 0`.
    pub fn new(bit_len: usize, k: usize, seed: u64) -> Result<Self> {
        if k > bit_len || (k == 0 && bit_len > 0) {
            return Err(Error::InvalidParameter(format!("k must be in 1..={bit_len}, got {k}")));
        }
        let mut positions = permutation(bit_len, seed);
        positions.truncate(k);
        Ok(Self { positions, seed })
    }

    pub fn positions(&self) -> &[u32] {
        &self.positions
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn k(&self) -> usize {
        self.positions.len()
    }
}

fn permutation(bit_len: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<u32> = (0..bit_len as u32).collect();
    all.shuffle(&mut rng);
    all
}

fn table_seed(seed: u64, table: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(table as u64 + 1)
}

// Interned posterior histograms; id 0 is the uniform one.
#[derive(Debug, Clone)]
struct HistogramTable {
    b1: usize,
    b2: usize,
    masses: Vec<f64>,
    levels: Vec<u8>,
    ids: HashMap<CellCounts, u32>,
}

impl HistogramTable {
    fn new(b1: usize, b2: usize) -> Self {
        let uniform = CellHistogram::uniform(b1);
        let levels = uniform.masses().iter().map(|&p| unary_level(p, b2)).collect();
        Self { b1, b2, masses: uniform.masses().to_vec(), levels, ids: HashMap::new() }
    }

    fn extend(&mut self, counts: impl IntoIterator<Item = CellCounts>) -> Result<()> {
        let mut fresh: Vec<CellCounts> = counts.into_iter().filter(|c| !self.ids.contains_key(c)).collect();
        fresh.sort_unstable_by_key(|c| (c.eta, c.eta_plus));
        fresh.dedup();
        let b1 = self.b1;
        let hists = fresh.par_iter().map(|&c| cell_histogram(c, b1)).collect::<Result<Vec<_>>>()?;
        for (c, h) in fresh.into_iter().zip(hists) {
            let id = (self.masses.len() / b1) as u32;
            self.levels.extend(h.masses().iter().map(|&p| unary_level(p, self.b2)));
            self.masses.extend_from_slice(h.masses());
            self.ids.insert(c, id);
        }
        Ok(())
    }

    fn masses(&self, id: u32) -> &[f64] {
        let s = id as usize * self.b1;
        &self.masses[s..s + self.b1]
    }

    fn levels(&self, id: u32) -> &[u8] {
        let s = id as usize * self.b1;
        &self.levels[s..s + self.b1]
    }
}

#[derive(Debug, Clone)]
struct CorpusEntry {
    owner: NodeId,
    t: usize,
    // (layout position, histogram id), sorted by position
    cells: Vec<(u16, u32)>,
}

/// Datacubes prepared for repeated distance evaluation against a layout.
#[derive(Debug, Clone)]
pub struct CubeCorpus {
    layout: CellLayout,
    max_bin: u8,
    hists: HistogramTable,
    entries: Vec<CorpusEntry>,
}

/// A query datacube resolved against a corpus layout.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    positions: Vec<u16>,
    masses: Vec<f64>,
    levels: Vec<u8>,
    // TV against the uniform posterior summed over cells outside the layout
    outside: f64,
    dropped: usize,
}

impl PreparedQuery {
    /// Cells that had to be left out of hashing.
    pub fn dropped_cells(&self) -> usize {
        self.dropped
    }
}

static WARNED_OUTSIDE: AtomicBool = AtomicBool::new(false);

impl CubeCorpus {
    /// Layout is the union of the cubes' non-empty cells.
    pub fn build(cubes: &[Datacube], b1: usize, b2: usize) -> Result<Self> {
        let layout = CellLayout::from_cubes(cubes, b1, b2)?;
        Self::with_layout(cubes, layout)
    }

    pub fn with_layout(cubes: &[Datacube], layout: CellLayout) -> Result<Self> {
        let first = cubes.first().ok_or(Error::EmptyIndex)?;
        let max_bin = first.max_bin();
        let mut hists = HistogramTable::new(layout.b1, layout.b2);
        hists.extend(cubes.iter().flat_map(|c| c.cells().iter().map(|&(_, c)| c)))?;
        let entries = cubes
            .iter()
            .map(|cube| {
                if cube.max_bin() != max_bin {
                    return Err(Error::BinningMismatch { left: max_bin, right: cube.max_bin() });
                }
                let cells = cube
                    .cells()
                    .iter()
                    .map(|&(key, c)| {
                        let pos = layout
                            .position(key)
                            .ok_or(Error::CellOutsideLayout { cn_bin: key.cn_bin, ll_bin: key.ll_bin })?;
                        Ok((pos as u16, hists.ids[&c]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(CorpusEntry { owner: cube.owner(), t: cube.t(), cells })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layout, max_bin, hists, entries })
    }

    pub fn layout(&self) -> &CellLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(owner, t)` of entry `idx`.
    pub fn id(&self, idx: usize) -> (NodeId, usize) {
        let e = &self.entries[idx];
        (e.owner, e.t)
    }

    pub fn prepare(&self, q: &Datacube) -> Result<PreparedQuery> {
        if q.max_bin() != self.max_bin {
            return Err(Error::BinningMismatch { left: self.max_bin, right: q.max_bin() });
        }
        let (b1, b2) = (self.layout.b1, self.layout.b2);
        let uniform = self.hists.masses(0);
        let mut out = PreparedQuery {
            positions: Vec::with_capacity(q.len()),
            masses: Vec::with_capacity(q.len() * b1),
            levels: Vec::with_capacity(q.len() * b1),
            outside: 0.0,
            dropped: 0,
        };
        for &(key, c) in q.cells() {
            let owned;
            let masses: &[f64] = match self.hists.ids.get(&c) {
                Some(&id) => self.hists.masses(id),
                None => {
                    owned = cell_histogram(c, b1)?;
                    owned.masses()
                }
            };
            match self.layout.position(key) {
                Some(pos) => {
                    out.positions.push(pos as u16);
                    out.masses.extend_from_slice(masses);
                    out.levels.extend(masses.iter().map(|&p| unary_level(p, b2)));
                }
                None => {
                    out.outside += crate::datacube::tv_masses(masses, uniform);
                    out.dropped += 1;
                }
            }
        }
        if out.dropped > 0 && !WARNED_OUTSIDE.swap(true, Ordering::Relaxed) {
            log::info!(
                "query datacube has {} cell(s) outside the index layout; they are compared against uniform",
                out.dropped
            );
        }
        Ok(out)
    }

    /// Exact `D(q, entry)`.
    pub fn distance(&self, q: &PreparedQuery, idx: usize) -> f64 {
        let b1 = self.layout.b1;
        let entry = &self.entries[idx];
        let uniform = self.hists.masses(0);
        let qm = |x: usize| &q.masses[x * b1..(x + 1) * b1];
        let mut total = q.outside;
        let (mut x, mut y) = (0, 0);
        while x < q.positions.len() || y < entry.cells.len() {
            let qp = q.positions.get(x).copied();
            let ep = entry.cells.get(y).map(|c| c.0);
            let (a, b) = match (qp, ep) {
                (Some(p), Some(r)) if p == r => {
                    x += 1;
                    y += 1;
                    (qm(x - 1), self.hists.masses(entry.cells[y - 1].1))
                }
                (Some(p), Some(r)) if p < r => {
                    x += 1;
                    (qm(x - 1), uniform)
                }
                (Some(_), None) => {
                    x += 1;
                    (qm(x - 1), uniform)
                }
                _ => {
                    y += 1;
                    (uniform, self.hists.masses(entry.cells[y - 1].1))
                }
            };
            total += crate::datacube::tv_masses(a, b);
        }
        total
    }

    // Dense per-(cell, bucket) unary levels of one entry, M * B1 bytes.
    fn entry_levels(&self, idx: usize, buf: &mut Vec<u8>) {
        let b1 = self.layout.b1;
        let uniform = self.hists.levels(0);
        buf.clear();
        for _ in 0..self.layout.len() {
            buf.extend_from_slice(uniform);
        }
        for &(pos, id) in &self.entries[idx].cells {
            let s = pos as usize * b1;
            buf[s..s + b1].copy_from_slice(self.hists.levels(id));
        }
    }

    fn query_levels(&self, q: &PreparedQuery, buf: &mut Vec<u8>) {
        let b1 = self.layout.b1;
        let uniform = self.hists.levels(0);
        buf.clear();
        for _ in 0..self.layout.len() {
            buf.extend_from_slice(uniform);
        }
        for (x, &pos) in q.positions.iter().enumerate() {
            let s = pos as usize * b1;
            buf[s..s + b1].copy_from_slice(&q.levels[x * b1..(x + 1) * b1]);
        }
    }
}

fn hash_key(levels: &[u8], positions: &[u32], b2: usize) -> Vec<u64> {
    let mut key = vec![0u64; positions.len().div_ceil(64)];
    for (bit, &pos) in positions.iter().enumerate() {
        let pos = pos as usize;
        if (levels[pos / b2] as usize) > pos % b2 {
            key[bit / 64] |= 1 << (bit % 64);
        }
    }
    key
}

/// One neighbor returned by a search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index into the corpus.
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub neighbors: Vec<Neighbor>,
    /// Number of exact distance evaluations performed.
    pub candidates: usize,
}

/// Nearest-datacube search over a [`CubeCorpus`].
pub trait NeighborSearch: Send + Sync {
    fn corpus(&self) -> &CubeCorpus;

    fn search_prepared(&self, q: &PreparedQuery, r: usize) -> SearchResult;

    fn search(&self, q: &Datacube, r: usize) -> Result<SearchResult> {
        if self.corpus().is_empty() {
            return Err(Error::EmptyIndex);
        }
        let prepared = self.corpus().prepare(q)?;
        Ok(self.search_prepared(&prepared, r))
    }
}

fn rank_candidates(corpus: &CubeCorpus, q: &PreparedQuery, ids: impl Iterator<Item = usize>, r: usize) -> SearchResult {
    let mut scored: Vec<Neighbor> = ids.map(|index| Neighbor { index, distance: corpus.distance(q, index) }).collect();
    let candidates = scored.len();
    // ties: earlier timestep, then lower node id
    scored.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| corpus.entries[a.index].t.cmp(&corpus.entries[b.index].t))
            .then_with(|| corpus.entries[a.index].owner.cmp(&corpus.entries[b.index].owner))
    });
    scored.truncate(r);
    SearchResult { neighbors: scored, candidates }
}

/// Linear scan.
#[derive(Debug, Clone)]
pub struct ExactSearch {
    corpus: CubeCorpus,
}

impl ExactSearch {
    pub fn new(corpus: CubeCorpus) -> Self {
        Self { corpus }
    }
}

impl NeighborSearch for ExactSearch {
    fn corpus(&self) -> &CubeCorpus {
        &self.corpus
    }

    fn search_prepared(&self, q: &PreparedQuery, r: usize) -> SearchResult {
        rank_candidates(&self.corpus, q, 0..self.corpus.len(), r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LshParams {
    pub k: usize,
    pub tables: usize,
    pub top_r: usize,
    pub seed: u64,
}

/// `l` bit-sampling hash tables over a corpus.
#[derive(Debug, Clone)]
pub struct LshIndex {
    corpus: CubeCorpus,
    params: LshParams,
    functions: Vec<HashFunction>,
    tables: Vec<HashMap<Vec<u64>, Vec<u32>>>,
}

impl LshIndex {
    pub fn build(corpus: CubeCorpus, params: LshParams) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if params.tables == 0 {
            return Err(Error::InvalidParameter("need at least one hash table".into()));
        }
        let bit_len = corpus.layout.bit_len();
        let functions = (0..params.tables)
            .map(|t| HashFunction::new(bit_len, params.k, table_seed(params.seed, t)))
            .collect::<Result<Vec<_>>>()?;
        let tables = build_tables(&corpus, &functions);
        Ok(Self { corpus, params, functions, tables })
    }

    pub fn params(&self) -> &LshParams {
        &self.params
    }

    pub fn functions(&self) -> &[HashFunction] {
        &self.functions
    }

    /// Bucket sizes of table `t`.
    pub fn bucket_sizes(&self, table: usize) -> Vec<usize> {
        self.tables[table].values().map(Vec::len).collect()
    }

    /// Distinct corpus entries sharing at least one bucket with `q`.
    pub fn candidates(&self, q: &PreparedQuery) -> Vec<usize> {
        let b2 = self.corpus.layout.b2;
        let mut levels = Vec::new();
        self.corpus.query_levels(q, &mut levels);
        let mut seen = vec![false; self.corpus.len()];
        let mut out = Vec::new();
        for (f, table) in self.functions.iter().zip(&self.tables) {
            if let Some(ids) = table.get(&hash_key(&levels, &f.positions, b2)) {
                for &id in ids {
                    if !std::mem::replace(&mut seen[id as usize], true) {
                        out.push(id as usize);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(INDEX_MAGIC)?;
        out.write_all(&INDEX_VERSION.to_le_bytes())?;
        let layout = &self.corpus.layout;
        for v in [layout.b1, layout.b2, self.params.k, self.params.tables, self.params.top_r] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        out.write_all(&self.params.seed.to_le_bytes())?;
        out.write_all(&(self.corpus.len() as u32).to_le_bytes())?;
        out.write_all(&(layout.len() as u32).to_le_bytes())?;
        for key in &layout.cells {
            out.write_all(&[key.cn_bin, key.ll_bin])?;
        }
        for (f, table) in self.functions.iter().zip(&self.tables) {
            out.write_all(&f.seed.to_le_bytes())?;
            for &p in &f.positions {
                out.write_all(&p.to_le_bytes())?;
            }
            let mut buckets: Vec<_> = table.iter().collect();
            buckets.sort();
            out.write_all(&(buckets.len() as u32).to_le_bytes())?;
            for (key, ids) in buckets {
                for w in key {
                    out.write_all(&w.to_le_bytes())?;
                }
                out.write_all(&(ids.len() as u32).to_le_bytes())?;
                for id in ids {
                    out.write_all(&id.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    /// Reads an index written by [`LshIndex::write`]; `cubes` must be the
    /// datacubes it was built from, in the same order.
    pub fn read<R: Read>(mut input: R, cubes: &[Datacube]) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != INDEX_MAGIC {
            return Err(Error::BadCache("not an LSH index file".into()));
        }
        let version = read_u32(&mut input)?;
        if version != INDEX_VERSION {
            return Err(Error::BadCache(format!("unsupported index version {version}")));
        }
        let mut header = [0usize; 5];
        for h in header.iter_mut() {
            *h = read_u32(&mut input)? as usize;
        }
        let [b1, b2, k, tables, top_r] = header;
        let mut seed = [0u8; 8];
        input.read_exact(&mut seed)?;
        let seed = u64::from_le_bytes(seed);
        let count = read_u32(&mut input)? as usize;
        if count != cubes.len() {
            return Err(Error::BadCache(format!("index covers {count} datacubes but {} were supplied", cubes.len())));
        }
        let m = read_u32(&mut input)? as usize;
        let mut cells = Vec::with_capacity(m);
        for _ in 0..m {
            let mut key = [0u8; 2];
            input.read_exact(&mut key)?;
            cells.push(CellKey::new(key[0], key[1]));
        }
        let layout = CellLayout::new(cells, b1, b2)?;
        let corpus = CubeCorpus::with_layout(cubes, layout)?;
        let words = k.div_ceil(64);
        let mut functions = Vec::with_capacity(tables);
        let mut maps = Vec::with_capacity(tables);
        for _ in 0..tables {
            let mut fseed = [0u8; 8];
            input.read_exact(&mut fseed)?;
            let positions = (0..k).map(|_| read_u32(&mut input)).collect::<Result<Vec<_>>>()?;
            functions.push(HashFunction { positions, seed: u64::from_le_bytes(fseed) });
            let nbuckets = read_u32(&mut input)? as usize;
            let mut map = HashMap::with_capacity(nbuckets);
            for _ in 0..nbuckets {
                let mut key = Vec::with_capacity(words);
                for _ in 0..words {
                    let mut w = [0u8; 8];
                    input.read_exact(&mut w)?;
                    key.push(u64::from_le_bytes(w));
                }
                let len = read_u32(&mut input)? as usize;
                let ids = (0..len).map(|_| read_u32(&mut input)).collect::<Result<Vec<_>>>()?;
                map.insert(key, ids);
            }
            maps.push(map);
        }
        Ok(Self { corpus, params: LshParams { k, tables, top_r, seed }, functions, tables: maps })
    }
}

const INDEX_MAGIC: &[u8; 8] = b"NPLKLSH1";
const INDEX_VERSION: u32 = 1;

fn build_tables(corpus: &CubeCorpus, functions: &[HashFunction]) -> Vec<HashMap<Vec<u64>, Vec<u32>>> {
    let b2 = corpus.layout.b2;
    // keys[entry][table]
    let keys: Vec<Vec<Vec<u64>>> = (0..corpus.len())
        .into_par_iter()
        .map_init(Vec::new, |buf, idx| {
            corpus.entry_levels(idx, buf);
            functions.iter().map(|f| hash_key(buf, &f.positions, b2)).collect()
        })
        .collect();
    (0..functions.len())
        .into_par_iter()
        .map(|t| {
            let mut table: HashMap<Vec<u64>, Vec<u32>> = HashMap::new();
            for (idx, entry_keys) in keys.iter().enumerate() {
                table.entry(entry_keys[t].clone()).or_default().push(idx as u32);
            }
            table
        })
        .collect()
}

impl NeighborSearch for LshIndex {
    fn corpus(&self) -> &CubeCorpus {
        &self.corpus
    }

    fn search_prepared(&self, q: &PreparedQuery, r: usize) -> SearchResult {
        let ids = self.candidates(q);
        rank_candidates(&self.corpus, q, ids.into_iter(), r)
    }
}

/// Mean number of distinct candidates per workload query for a given `k`.
pub fn mean_candidates(
    corpus: &CubeCorpus,
    workload: &[PreparedQuery],
    k: usize,
    tables: usize,
    seed: u64,
) -> Result<f64> {
    let index = LshIndex::build(corpus.clone(), LshParams { k, tables, top_r: DEFAULT_TOP_R, seed })?;
    Ok(mean_candidates_of(&index, workload))
}

fn mean_candidates_of(index: &LshIndex, workload: &[PreparedQuery]) -> f64 {
    let total: usize = workload.par_iter().map(|q| index.candidates(q).len()).sum();
    total as f64 / workload.len().max(1) as f64
}

/// Largest `k` whose mean candidate count over `workload` is at least `r`.
///
/// Candidate counts are non-increasing in `k` because every hash function
/// with `k + 1` bits extends the one with `k` bits. The search doubles `k`
/// until the target is missed, then bisects.
pub fn adapt_k(corpus: &CubeCorpus, workload: &[Datacube], tables: usize, r: usize, seed: u64) -> Result<usize> {
    if corpus.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if workload.is_empty() {
        return Err(Error::InvalidParameter("adaptive k needs a non-empty query workload".into()));
    }
    let prepared = workload.iter().map(|q| corpus.prepare(q)).collect::<Result<Vec<_>>>()?;
    if corpus.len() <= r {
        return Err(Error::InsufficientCandidates { candidates: corpus.len() as f64, r });
    }
    let bit_len = corpus.layout.bit_len();
    if bit_len == 0 {
        return Ok(0);
    }
    let enough = |k: usize| -> Result<(bool, f64)> {
        let c = mean_candidates(corpus, &prepared, k, tables, seed)?;
        Ok((c >= r as f64, c))
    };
    let (ok, c1) = enough(1)?;
    if !ok {
        return Err(Error::InsufficientCandidates { candidates: c1, r });
    }
    // lo satisfies the target; hi does not (or is past the end)
    let mut lo = 1;
    let mut hi = bit_len + 1;
    let mut probe = 2;
    while probe <= bit_len {
        if enough(probe)?.0 {
            lo = probe;
            probe *= 2;
        } else {
            hi = probe;
            break;
        }
    }
    if probe > bit_len && hi == bit_len + 1 {
        if enough(bit_len)?.0 {
            return Ok(bit_len);
        }
        hi = bit_len;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if enough(mid)?.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    log::debug!("adaptive k = {lo} over {} datacubes", corpus.len());
    Ok(lo)
}

/// Fraction of the exact top-r found by an approximate search. A returned
/// neighbor counts as a hit when its distance does not exceed the exact
/// r-th distance, so ties at the boundary are not penalized.
pub fn recall_at_r(approx: &SearchResult, exact: &SearchResult, r: usize) -> f64 {
    let want = r.min(exact.neighbors.len());
    if want == 0 {
        return 1.0;
    }
    let cutoff = exact.neighbors[want - 1].distance + 1e-9;
    let hits = approx.neighbors.iter().take(r).filter(|n| n.distance <= cutoff).count();
    hits.min(want) as f64 / want as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    type Cell = ((u8, u8), (u32, u32));

    fn cube(owner: NodeId, cells: &[Cell]) -> Datacube {
        Datacube::new(owner, 3, 7, cells.iter().map(|&((a, b), (e, p))| (CellKey::new(a, b), CellCounts::new(e, p))))
            .unwrap()
    }

    fn sample_cubes() -> Vec<Datacube> {
        vec![
            cube(0, &[((0, 0), (10, 9)), ((1, 7), (30, 1))]),
            cube(1, &[((0, 0), (10, 1)), ((1, 7), (30, 2))]),
            cube(2, &[((0, 0), (12, 9)), ((2, 1), (5, 5))]),
            cube(3, &[((2, 1), (40, 0))]),
        ]
    }

    #[test]
    fn uniform_cell_encodes_to_zero_bits() {
        let layout = CellLayout::new(vec![CellKey::new(0, 0)], 10, 8).unwrap();
        let bits = encode(&Datacube::empty(0, 1, 7), &layout).unwrap();
        assert_eq!(bits.len(), 80);
        assert_eq!(bits.count_ones(), 0);
    }

    #[test]
    fn encode_rejects_unknown_cells() {
        let layout = CellLayout::new(vec![CellKey::new(0, 0)], 10, 8).unwrap();
        let c = cube(0, &[((1, 1), (3, 1))]);
        assert!(matches!(encode(&c, &layout), Err(Error::CellOutsideLayout { .. })));
    }

    #[test]
    fn identical_cubes_identical_bits() {
        let cubes = sample_cubes();
        let layout = CellLayout::from_cubes(&cubes, 10, 8).unwrap();
        let a = encode(&cubes[0], &layout).unwrap();
        let b = encode(&cubes[0].clone(), &layout).unwrap();
        assert_eq!(a.hamming(&b), 0);
        assert!(a.hamming(&encode(&cubes[1], &layout).unwrap()) > 0);
    }

    #[test]
    fn hash_functions_are_distinct_and_nested() {
        let f = HashFunction::new(500, 40, 9).unwrap();
        let mut p = f.positions().to_vec();
        p.sort_unstable();
        p.dedup();
        assert_eq!(p.len(), 40);
        let g = HashFunction::new(500, 60, 9).unwrap();
        assert_eq!(&g.positions()[..40], f.positions());
        assert!(HashFunction::new(500, 0, 9).is_err());
        assert!(HashFunction::new(500, 501, 9).is_err());
    }

    #[test]
    fn sampled_hash_matches_materialized_bits() {
        let cubes = sample_cubes();
        let corpus = CubeCorpus::build(&cubes, 10, 8).unwrap();
        let f = HashFunction::new(corpus.layout().bit_len(), 100, 3).unwrap();
        let mut buf = Vec::new();
        for (idx, c) in cubes.iter().enumerate() {
            let bits = encode(c, corpus.layout()).unwrap();
            corpus.entry_levels(idx, &mut buf);
            let key = hash_key(&buf, f.positions(), 8);
            for (bit, &pos) in f.positions().iter().enumerate() {
                assert_eq!(key[bit / 64] >> (bit % 64) & 1 == 1, bits.get(pos as usize));
            }
        }
    }

    #[test]
    fn corpus_distance_matches_tv_distance() {
        let cubes = sample_cubes();
        let corpus = CubeCorpus::build(&cubes, 10, 8).unwrap();
        let extra = cube(9, &[((0, 0), (10, 9)), ((5, 5), (3, 3))]);
        for q in cubes.iter().chain([&extra]) {
            let prepared = corpus.prepare(q).unwrap();
            for (idx, c) in cubes.iter().enumerate() {
                let want = crate::datacube::tv_distance(q, c, 10).unwrap();
                assert!((corpus.distance(&prepared, idx) - want).abs() < 1e-12);
            }
        }
        assert_eq!(corpus.prepare(&extra).unwrap().dropped_cells(), 1);
    }

    #[test]
    fn full_length_single_table_partitions_by_encoding() {
        let mut cubes = sample_cubes();
        cubes.push(cubes[0].clone());
        let corpus = CubeCorpus::build(&cubes, 10, 8).unwrap();
        let k = corpus.layout().bit_len();
        let index = LshIndex::build(corpus, LshParams { k, tables: 1, top_r: 20, seed: 1 }).unwrap();
        let mut sizes = index.bucket_sizes(0);
        sizes.sort_unstable();
        assert_eq!(sizes.iter().sum::<usize>(), 5);
        assert!(sizes.contains(&2));
    }

    #[test]
    fn one_bit_two_buckets() {
        let corpus = CubeCorpus::build(&sample_cubes(), 10, 8).unwrap();
        for seed in 0..10 {
            let index = LshIndex::build(corpus.clone(), LshParams { k: 1, tables: 3, top_r: 20, seed }).unwrap();
            for t in 0..3 {
                assert!(index.bucket_sizes(t).len() <= 2);
            }
        }
    }

    #[test]
    fn self_query_finds_itself_first() {
        let cubes = sample_cubes();
        let corpus = CubeCorpus::build(&cubes, 10, 8).unwrap();
        let bits = corpus.layout().bit_len();
        for k in [1, 7, 50, bits] {
            let index = LshIndex::build(corpus.clone(), LshParams { k, tables: 2, top_r: 20, seed: 5 }).unwrap();
            for (idx, c) in cubes.iter().enumerate() {
                let res = index.search(c, 20).unwrap();
                assert_eq!(res.neighbors[0].index, idx);
                assert_eq!(res.neighbors[0].distance, 0.0);
            }
        }
    }

    #[test]
    fn small_index_matches_exact_order() {
        let cubes = sample_cubes()[..2].to_vec();
        let corpus = CubeCorpus::build(&cubes, 10, 8).unwrap();
        let exact = ExactSearch::new(corpus.clone());
        let lsh = LshIndex::build(corpus, LshParams { k: 1, tables: 20, top_r: 20, seed: 2 }).unwrap();
        let q = &sample_cubes()[2];
        let a = exact.search(q, 20).unwrap();
        let b = lsh.search(q, 20).unwrap();
        assert_eq!(a.neighbors, b.neighbors);
    }

    #[test]
    fn ties_break_by_time_then_owner() {
        let mut cubes = vec![cube(5, &[((0, 0), (4, 2))]), cube(2, &[((0, 0), (4, 2))])];
        cubes.push(Datacube::new(1, 2, 7, [(CellKey::new(0, 0), CellCounts::new(4, 2))]).unwrap());
        let exact = ExactSearch::new(CubeCorpus::build(&cubes, 10, 8).unwrap());
        let res = exact.search(&cubes[0], 3).unwrap();
        let order: Vec<usize> = res.neighbors.iter().map(|n| n.index).collect();
        assert_eq!(order, vec![2, 1, 0]);
    }

    #[test]
    fn empty_index_errors() {
        assert!(matches!(CubeCorpus::build(&[], 10, 8), Err(Error::EmptyIndex)));
    }

    #[test]
    fn cubes_without_cells_share_one_bucket() {
        let cubes: Vec<Datacube> = (0..30).map(|v| cube(v, &[])).collect();
        let corpus = CubeCorpus::build(&cubes, 10, 8).unwrap();
        assert_eq!(corpus.layout().bit_len(), 0);
        assert!(HashFunction::new(0, 1, 0).is_err());
        assert!(HashFunction::new(4, 0, 0).is_err());
        let k = adapt_k(&corpus, &cubes, 4, 20, 0).unwrap();
        assert_eq!(k, 0);
        let index = LshIndex::build(corpus, LshParams { k, tables: 4, top_r: 20, seed: 0 }).unwrap();
        let res = index.search(&cubes[0], 20).unwrap();
        assert_eq!(res.candidates, 30);
        assert!(res.neighbors.iter().all(|n| n.distance == 0.0));
    }

    #[test]
    fn adapt_k_needs_enough_data() {
        let corpus = CubeCorpus::build(&sample_cubes(), 10, 8).unwrap();
        let err = adapt_k(&corpus, &sample_cubes(), 20, 20, 1).unwrap_err();
        assert!(matches!(err, Error::InsufficientCandidates { .. }));
        assert!(adapt_k(&corpus, &[], 20, 2, 1).is_err());
    }

    #[test]
    fn index_round_trip() {
        let cubes = sample_cubes();
        let corpus = CubeCorpus::build(&cubes, 10, 8).unwrap();
        let index = LshIndex::build(corpus, LshParams { k: 70, tables: 4, top_r: 20, seed: 11 }).unwrap();
        let mut buf = Vec::new();
        index.write(&mut buf).unwrap();
        let back = LshIndex::read(buf.as_slice(), &cubes).unwrap();
        assert_eq!(back.params(), index.params());
        assert_eq!(back.functions(), index.functions());
        for q in &cubes {
            assert_eq!(back.search(q, 20).unwrap(), index.search(q, 20).unwrap());
        }
        assert!(LshIndex::read(buf.as_slice(), &cubes[..2]).is_err());
    }

    #[test]
    fn recall_counts_boundary_ties() {
        let n = |index, distance| Neighbor { index, distance };
        let exact = SearchResult { neighbors: vec![n(0, 0.0), n(1, 1.0), n(2, 1.0)], candidates: 3 };
        let approx = SearchResult { neighbors: vec![n(0, 0.0), n(2, 1.0)], candidates: 2 };
        assert_eq!(recall_at_r(&approx, &exact, 2), 1.0);
        assert!((recall_at_r(&approx, &exact, 3) - 2.0 / 3.0).abs() < 1e-12);
    }
}
