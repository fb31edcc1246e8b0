//! Command-line frontend. Every command writes CSV (or an edge list) plus a
//! JSON manifest next to its output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{Baseline, BaselineKind};
use crate::datacube::{check_bandwidth, DatacubeSet, DEFAULT_BUCKETS};
use crate::evaluation::{active_sources, evaluate, mean_and_std, EvalReport, FittedPredictor, LinkPredictor};
use crate::features::DEFAULT_MAX_BIN;
use crate::graph_store::{ingest, GraphSequence, NodeId};
use crate::lsh::{
    adapt_k, recall_at_r, CubeCorpus, ExactSearch, LshIndex, LshParams, NeighborSearch, DEFAULT_B2, DEFAULT_TABLES,
    DEFAULT_TOP_R,
};
use crate::predictor::{training_pairs, Bandwidth, NonParam, NonParamModel, PredictorConfig, SearchMode};
use crate::simulator::{simulate, Membership, Preset, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "nplink", version, about = "Nonparametric link prediction on graph snapshot sequences")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic snapshot sequence.
    Simulate(SimulateArgs),
    /// Build datacubes and an LSH index and save both.
    TrainIndex(TrainIndexArgs),
    /// Rank candidate links for the step after the input.
    Predict(PredictArgs),
    /// Score methods on the last snapshot of one or more sequences.
    Evaluate(EvaluateArgs),
    /// Compare exact and LSH neighbor search as history grows.
    BenchLsh(BenchArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimArgs {
    /// Start from a preset; explicit flags override it.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seasons: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub features_per_season: Option<usize>,
    /// Independent feature bits with this density instead of one feature
    /// per season block.
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub p_in: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub drift: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum PresetArg {
    Seasonal,
    Stationary,
}

impl SimArgs {
    pub fn config(&self, seed: u64) -> SimConfig {
        let base = match self.preset {
            Some(PresetArg::Seasonal) => Preset::Seasonal.config(seed),
            Some(PresetArg::Stationary) => Preset::Stationary.config(seed),
            None => SimConfig { seed, ..SimConfig::default() },
        };
        SimConfig {
            n: self.nodes.unwrap_or(base.n),
            t: self.steps.unwrap_or(base.t),
            n_seasons: self.seasons.unwrap_or(base.n_seasons),
            n_features: self.features.unwrap_or(base.n_features),
            features_per_season: self.features_per_season.unwrap_or(base.features_per_season),
            membership: match self.density {
                Some(density) => Membership::Bernoulli { density },
                None => base.membership,
            },
            p_in: self.p_in.unwrap_or(base.p_in),
            noise: self.noise.unwrap_or(base.noise),
            drift: self.drift.unwrap_or(base.drift),
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Edge-list file to write.
    #[arg(short, long)]
    pub output: PathBuf,
}

fn parse_bandwidth(s: &str) -> Result<BandwidthArg, String> {
    if s == "auto" {
        return Ok(BandwidthArg(Bandwidth::Auto));
    }
    let b: f64 = s.parse().map_err(|_| format!("expected 'auto' or a number, got '{s}'"))?;
    check_bandwidth(b).map_err(|e| e.to_string())?;
    Ok(BandwidthArg(Bandwidth::Fixed(b)))
}

#[derive(Debug, Clone, Copy)]
pub struct BandwidthArg(pub Bandwidth);

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Neighborhood window p.
    #[arg(long, default_value_t = 2)]
    pub window: usize,
    /// Kernel bandwidth in (0, 1), or 'auto' for cross-validation.
    #[arg(long, default_value = "auto", value_parser = parse_bandwidth)]
    pub bandwidth: BandwidthArg,
    /// Exact neighbor search instead of LSH.
    #[arg(long, conflicts_with = "lsh")]
    pub exact: bool,
    /// LSH neighbor search (the default).
    #[arg(long)]
    pub lsh: bool,
    /// Bits per hash; adapted to the data when omitted.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_TABLES)]
    pub tables: usize,
    #[arg(long, default_value_t = DEFAULT_TOP_R)]
    pub top_r: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_BIN)]
    pub max_bin: u8,
    #[arg(long, default_value_t = DEFAULT_BUCKETS)]
    pub buckets: usize,
    #[arg(long, default_value_t = DEFAULT_B2)]
    pub b2: usize,
    /// Weight of cells one bin away from the query cell.
    #[arg(long, default_value_t = 0.5)]
    pub feature_smoothing: f64,
    /// Pseudo-count controlling shrinkage towards the prior datacube.
    #[arg(long, default_value_t = 5.0)]
    pub prior_weight: f64,
    /// Seed for the hash functions.
    #[arg(long, default_value_t = 0)]
    pub lsh_seed: u64,
}

impl ModelArgs {
    pub fn config(&self) -> PredictorConfig {
        PredictorConfig {
            window: self.window,
            max_bin: self.max_bin,
            buckets: self.buckets,
            b2: self.b2,
            bandwidth: self.bandwidth.0,
            search: if self.exact {
                SearchMode::Exact
            } else {
                SearchMode::Lsh { k: self.k, tables: self.tables, seed: self.lsh_seed }
            },
            top_r: self.top_r,
            feature_smoothing: self.feature_smoothing,
            prior_weight: self.prior_weight,
            ..PredictorConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainIndexArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long)]
    pub directed: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output prefix; writes `<prefix>.cubes` and `<prefix>.lsh`.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Method {
    Nonparam,
    Ll,
    Cn,
    Aa,
    Katz,
    CnAll,
    AaAll,
    KatzAll,
}

impl Method {
    fn baseline(self) -> Option<BaselineKind> {
        Some(match self {
            Method::Nonparam => return None,
            Method::Ll => BaselineKind::Ll,
            Method::Cn => BaselineKind::Cn,
            Method::Aa => BaselineKind::Aa,
            Method::Katz => BaselineKind::Katz,
            Method::CnAll => BaselineKind::CnAll,
            Method::AaAll => BaselineKind::AaAll,
            Method::KatzAll => BaselineKind::KatzAll,
        })
    }

    fn predictor(self, config: PredictorConfig) -> Box<dyn LinkPredictor> {
        match self.baseline() {
            Some(kind) => Box::new(Baseline::new(kind)),
            None => Box::new(NonParam(config)),
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long)]
    pub directed: bool,
    #[arg(long, value_enum, default_value = "nonparam")]
    pub method: Method,
    /// Train on all but the last snapshot and rank for the last one.
    #[arg(long)]
    pub holdout: bool,
    /// Reuse `<prefix>.cubes` / `<prefix>.lsh` from train-index.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Ranking CSV to write.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Edge list to evaluate on; otherwise sequences are simulated.
    #[arg(short, long, conflicts_with = "preset")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub directed: bool,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Simulation seeds, e.g. `0,1,2` or `0..10`.
    #[arg(long, default_value = "0")]
    pub seeds: String,
    /// Methods to run.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "nonparam")]
    pub method: Vec<Method>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Summary CSV to write.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Optional per-source AUC CSV.
    #[arg(long)]
    pub per_source: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// History lengths to sweep.
    #[arg(long, value_delimiter = ',', default_value = "20,50,100,200")]
    pub steps_sweep: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub window: usize,
    /// Query datacubes sampled per length.
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    #[arg(long, default_value_t = DEFAULT_TOP_R)]
    pub top_r: usize,
    #[arg(long, default_value_t = DEFAULT_TABLES)]
    pub tables: usize,
    /// Unary bits per histogram bucket.
    #[arg(long, default_value_t = DEFAULT_B2)]
    pub b2: usize,
    /// Bits per hash; adapted per length when omitted.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
}

impl BenchArgs {
    pub fn params(&self) -> BenchParams {
        BenchParams {
            window: self.window,
            queries: self.queries,
            top_r: self.top_r,
            tables: self.tables,
            b2: self.b2,
            k: self.k,
            seed: self.seed,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a, P: Serialize> {
    subcommand: &'a str,
    version: &'a str,
    argv: Vec<String>,
    parameters: P,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn write_manifest<P: Serialize>(
    subcommand: &str,
    output: &Path,
    parameters: P,
    inputs: &[&Path],
    outputs: &[&Path],
) -> anyhow::Result<()> {
    let manifest = Manifest {
        subcommand,
        version: env!("CARGO_PKG_VERSION"),
        argv: std::env::args().collect(),
        parameters,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = manifest_path(output);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// `3`, `0,4,7` or `0..10`.
pub fn parse_seeds(text: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            bail!("empty seed range '{text}'");
        }
        return Ok((a..b).collect());
    }
    text.split(',').map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed '{s}'"))).collect()
}

fn run_simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let cfg = args.sim.config(args.seed);
    let g = simulate(&cfg)?;
    g.save(&args.output)?;
    write_manifest("simulate", &args.output, cfg, &[], &[&args.output])
}

fn cube_path(prefix: &Path) -> PathBuf {
    prefix.with_extension("cubes")
}

fn index_path(prefix: &Path) -> PathBuf {
    prefix.with_extension("lsh")
}

#[derive(Serialize)]
struct TrainSummary {
    config: PredictorConfig,
    k: usize,
    training_size: usize,
    horizon: usize,
}

fn run_train_index(args: &TrainIndexArgs) -> anyhow::Result<()> {
    let g = ingest(&args.input, args.directed).with_context(|| format!("reading {}", args.input.display()))?;
    let config = args.model.config();
    config.validate()?;
    if g.len() < config.min_snapshots() {
        bail!("window {} needs at least {} snapshots, got {}", config.window, config.min_snapshots(), g.len());
    }
    let cubes = DatacubeSet::build(&g, config.window, config.max_bin)?;
    let (signatures, _) = training_pairs(&cubes, g.len());
    let corpus = CubeCorpus::build(&signatures, config.buckets, config.b2)?;
    let k = match args.model.k {
        Some(k) => k,
        None => {
            let workload: Vec<_> =
                (0..g.node_count() as NodeId).filter_map(|v| cubes.get(v, g.len()).cloned()).collect();
            adapt_k(&corpus, &workload, args.model.tables, config.top_r, args.model.lsh_seed)?
        }
    };
    let training_size = corpus.len();
    let index = LshIndex::build(
        corpus,
        LshParams { k, tables: args.model.tables, top_r: config.top_r, seed: args.model.lsh_seed },
    )?;
    let (cp, ip) = (cube_path(&args.output), index_path(&args.output));
    let mut out = create(&cp)?;
    cubes.write(&mut out)?;
    out.flush()?;
    let mut out = create(&ip)?;
    index.write(&mut out)?;
    out.flush()?;
    log::info!("indexed {training_size} datacubes with k = {k}");
    let summary = TrainSummary { config, k, training_size, horizon: g.len() };
    write_manifest("train-index", &ip, summary, &[&args.input], &[&cp, &ip])
}

fn run_predict(args: &PredictArgs) -> anyhow::Result<()> {
    let full = ingest(&args.input, args.directed).with_context(|| format!("reading {}", args.input.display()))?;
    let (train, source_snapshot) = if args.holdout {
        if full.len() < 2 {
            bail!("--holdout needs at least 2 snapshots");
        }
        (full.truncated(full.len() - 1)?, full.len())
    } else {
        (full.clone(), full.len())
    };
    let sources = active_sources(full.snapshot(source_snapshot)?);
    let config = args.model.config();
    let fitted: Box<dyn FittedPredictor> = match (args.method, &args.index) {
        (Method::Nonparam, Some(prefix)) => {
            let cubes = DatacubeSet::read(std::io::BufReader::new(File::open(cube_path(prefix))?))?;
            if cubes.horizon() != train.len() {
                bail!("index was built on {} snapshots but the training data has {}", cubes.horizon(), train.len());
            }
            let (signatures, _) = training_pairs(&cubes, train.len());
            let index = LshIndex::read(std::io::BufReader::new(File::open(index_path(prefix))?), &signatures)?;
            let config = PredictorConfig { window: cubes.window(), max_bin: cubes.max_bin(), ..config };
            Box::new(NonParamModel::with_index(&train, cubes, index, config)?)
        }
        (method, _) => method.predictor(config).fit(&train)?,
    };
    let ranking = fitted.rank(&sources)?;
    if !ranking.empty_sources.is_empty() {
        log::warn!("{} source(s) have no candidate targets", ranking.empty_sources.len());
    }
    let mut out = create(&args.output)?;
    ranking.write_csv(&mut out, full.labels())?;
    out.flush()?;
    #[derive(Serialize)]
    struct Params {
        method: Method,
        holdout: bool,
        config: PredictorConfig,
    }
    let params = Params { method: args.method, holdout: args.holdout, config };
    write_manifest("predict", &args.output, params, &[&args.input], &[&args.output])
}

fn run_evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let config = args.model.config();
    config.validate()?;
    let seeds = parse_seeds(&args.seeds)?;
    let graphs: Vec<(u64, GraphSequence)> = match &args.input {
        Some(path) => vec![(0, ingest(path, args.directed).with_context(|| format!("reading {}", path.display()))?)],
        None => seeds.iter().map(|&s| Ok((s, simulate(&args.sim.config(s))?))).collect::<anyhow::Result<_>>()?,
    };
    let mut out = create(&args.output)?;
    writeln!(out, "method,seed,mean_auc,std_auc,n_sources,excluded_sources")?;
    let mut detail = match &args.per_source {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "method,seed,source,auc,positives,negatives")?;
            Some(w)
        }
        None => None,
    };
    let mut summary = Vec::new();
    for &method in &args.method {
        let predictor = method.predictor(config);
        let reports: Vec<(u64, EvalReport)> = graphs
            .iter()
            .map(|(seed, g)| Ok((*seed, evaluate(g, predictor.as_ref())?)))
            .collect::<crate::Result<_>>()?;
        for (seed, r) in &reports {
            let per: Vec<f64> = r.per_source.iter().map(|s| s.auc).collect();
            let (_, std) = mean_and_std(&per);
            writeln!(
                out,
                "{},{},{:.6},{:.6},{},{}",
                r.method,
                seed,
                r.mean_auc,
                std,
                r.per_source.len(),
                r.excluded_sources.len()
            )?;
            log::info!("{} seed {seed}: fit {:.3}s, ranking {:.3}s", r.method, r.train_seconds, r.predict_seconds);
            if let Some(w) = detail.as_mut() {
                for s in &r.per_source {
                    writeln!(w, "{},{},{},{:.6},{},{}", r.method, seed, s.source, s.auc, s.positives, s.negatives)?;
                }
            }
        }
        let means: Vec<f64> = reports.iter().map(|(_, r)| r.mean_auc).collect();
        let (m, s) = mean_and_std(&means);
        log::info!("{}: mean AUC {m:.4} +- {s:.4} over {} run(s)", predictor.name(), means.len());
        summary.push((predictor.name(), m, s));
    }
    out.flush()?;
    if let Some(mut w) = detail {
        w.flush()?;
    }
    for (name, m, s) in &summary {
        println!("{name}\t{m:.4}\t{s:.4}");
    }
    #[derive(Serialize)]
    struct Params<'a> {
        methods: &'a [Method],
        seeds: Vec<u64>,
        simulation: Option<SimConfig>,
        config: PredictorConfig,
    }
    let params = Params {
        methods: &args.method,
        seeds: graphs.iter().map(|g| g.0).collect(),
        simulation: args.input.is_none().then(|| args.sim.config(seeds[0])),
        config,
    };
    let mut inputs: Vec<&Path> = Vec::new();
    if let Some(p) = &args.input {
        inputs.push(p);
    }
    let mut outputs: Vec<&Path> = vec![&args.output];
    if let Some(p) = &args.per_source {
        outputs.push(p);
    }
    write_manifest("evaluate", &args.output, params, &inputs, &outputs)
}

/// One row of the bench-lsh table.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub steps: usize,
    pub mode: &'static str,
    pub training_size: usize,
    pub k: Option<usize>,
    pub mean_candidates: f64,
    pub recall_at_r: f64,
    pub mean_query_micros: f64,
}

/// Search settings for [`bench_lsh`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchParams {
    pub window: usize,
    pub queries: usize,
    pub top_r: usize,
    pub tables: usize,
    pub b2: usize,
    /// Bits per hash; adapted when `None`.
    pub k: Option<usize>,
    pub seed: u64,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self { window: 2, queries: 100, top_r: DEFAULT_TOP_R, tables: DEFAULT_TABLES, b2: DEFAULT_B2, k: None, seed: 0 }
    }
}

/// Exact and LSH search over the training datacubes of `g`, queried with
/// datacubes sampled from the last step.
pub fn bench_lsh(g: &GraphSequence, p: &BenchParams) -> anyhow::Result<Vec<BenchRow>> {
    let BenchParams { window, queries, top_r, tables, b2, k, seed } = *p;
    let cubes = DatacubeSet::build(g, window, DEFAULT_MAX_BIN)?;
    let (signatures, _) = training_pairs(&cubes, g.len());
    let corpus = CubeCorpus::build(&signatures, DEFAULT_BUCKETS, b2)?;
    let mut pool: Vec<_> = (0..g.node_count() as NodeId).filter_map(|v| cubes.get(v, g.len()).cloned()).collect();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    pool.truncate(queries.max(1));
    let prepared = pool.iter().map(|q| corpus.prepare(q)).collect::<crate::Result<Vec<_>>>()?;

    let k = match k {
        Some(k) => k,
        None => adapt_k(&corpus, &pool, tables, top_r, seed)?,
    };
    let exact = ExactSearch::new(corpus.clone());
    let lsh = LshIndex::build(corpus, LshParams { k, tables, top_r, seed })?;

    let time = |s: &dyn NeighborSearch| {
        let start = Instant::now();
        let res: Vec<_> = prepared.iter().map(|q| s.search_prepared(q, top_r)).collect();
        (res, start.elapsed().as_secs_f64() * 1e6 / prepared.len() as f64)
    };
    let (exact_res, exact_us) = time(&exact);
    let (lsh_res, lsh_us) = time(&lsh);
    let mean =
        |res: &[crate::lsh::SearchResult]| res.iter().map(|r| r.candidates as f64).sum::<f64>() / res.len() as f64;
    let recall =
        lsh_res.iter().zip(&exact_res).map(|(a, e)| recall_at_r(a, e, top_r)).sum::<f64>() / lsh_res.len() as f64;
    let training_size = lsh.corpus().len();
    Ok(vec![
        BenchRow {
            steps: g.len(),
            mode: "exact",
            training_size,
            k: None,
            mean_candidates: mean(&exact_res),
            recall_at_r: 1.0,
            mean_query_micros: exact_us,
        },
        BenchRow {
            steps: g.len(),
            mode: "lsh",
            training_size,
            k: Some(k),
            mean_candidates: mean(&lsh_res),
            recall_at_r: recall,
            mean_query_micros: lsh_us,
        },
    ])
}

fn run_bench(args: &BenchArgs) -> anyhow::Result<()> {
    let mut out = create(&args.output)?;
    writeln!(out, "steps,mode,training_size,k,mean_candidates,recall_at_r,mean_query_micros")?;
    let base = args.sim.config(args.seed);
    for &steps in &args.steps_sweep {
        let g = simulate(&SimConfig { t: steps, ..base })?;
        for row in bench_lsh(&g, &args.params())? {
            writeln!(
                out,
                "{},{},{},{},{:.2},{:.4},{:.2}",
                row.steps,
                row.mode,
                row.training_size,
                row.k.map(|k| k.to_string()).unwrap_or_default(),
                row.mean_candidates,
                row.recall_at_r,
                row.mean_query_micros
            )?;
        }
    }
    out.flush()?;
    #[derive(Serialize)]
    struct Params<'a> {
        simulation: SimConfig,
        steps: &'a [usize],
        search: BenchParams,
    }
    let params = Params { simulation: base, steps: &args.steps_sweep, search: args.params() };
    write_manifest("bench-lsh", &args.output, params, &[], &[&args.output])
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::TrainIndex(a) => run_train_index(a),
        Command::Predict(a) => run_predict(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::BenchLsh(a) => run_bench(a),
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code:
/// 0 on success, 2 for usage errors, 1 for runtime failures.
pub fn main_with_exit_code() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("0,4, 7").unwrap(), vec![0, 4, 7]);
        assert_eq!(parse_seeds("2..5").unwrap(), vec![2, 3, 4]);
        assert!(parse_seeds("5..5").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn bandwidth_flag_validation() {
        assert!(matches!(parse_bandwidth("auto").unwrap().0, Bandwidth::Auto));
        assert!(matches!(parse_bandwidth("0.3").unwrap().0, Bandwidth::Fixed(b) if b == 0.3));
        assert!(parse_bandwidth("1.5").unwrap_err().contains("(0, 1)"));
        assert!(parse_bandwidth("wide").is_err());
    }

    #[test]
    fn manifest_sits_beside_output() {
        assert_eq!(manifest_path(Path::new("out/run.csv")), PathBuf::from("out/run.csv.manifest.json"));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
