//! Snapshot sequences and the edge-list file format.
//!
//! Each line of an edge-list file is `<timestep> <src> <dst>`. Labels are
//! arbitrary whitespace-free strings and are remapped to dense ids in order of
//! first appearance. Two placeholder forms exist: `<t> - -` declares a
//! timestep without edges and `<t> <node> -` declares a node without adding an
//! edge. Lines starting with `#` are comments.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Dense node index in `0..n`.
pub type NodeId = u32;

/// One observed graph. Edges in undirected mode are stored as `(i, j)` with
/// `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    t: usize,
    directed: bool,
    edges: HashSet<(NodeId, NodeId)>,
    // sorted undirected neighbor lists
    skeleton: Vec<Vec<NodeId>>,
    // sorted successor/predecessor lists, only populated in directed mode
    succ: Vec<Vec<NodeId>>,
    pred: Vec<Vec<NodeId>>,
}

impl Snapshot {
    pub fn new<I>(t: usize, n: usize, directed: bool, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut set = HashSet::new();
        for (i, j) in edges {
            for id in [i, j] {
                if id as usize >= n {
                    return Err(Error::NodeOutOfRange { id, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            set.insert(canonical(directed, i, j));
        }

        let mut skeleton = vec![Vec::new(); n];
        let (mut succ, mut pred) =
            if directed { (vec![Vec::new(); n], vec![Vec::new(); n]) } else { (Vec::new(), Vec::new()) };
        for &(i, j) in &set {
            if directed {
                succ[i as usize].push(j);
                pred[j as usize].push(i);
            }
            skeleton[i as usize].push(j);
            skeleton[j as usize].push(i);
        }
        for list in skeleton.iter_mut().chain(succ.iter_mut()).chain(pred.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }

        Ok(Self { t, directed, edges: set, skeleton, succ, pred })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn node_count(&self) -> usize {
        self.skeleton.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: NodeId, j: NodeId) -> bool {
        i != j && self.edges.contains(&canonical(self.directed, i, j))
    }

    /// Edges in ascending order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out: Vec<_> = self.edges.iter().copied().collect();
        out.sort_unstable();
        out
    }

    /// Neighbors ignoring edge direction.
    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.skeleton[i as usize]
    }

    pub fn out_neighbors(&self, i: NodeId) -> &[NodeId] {
        if self.directed {
            &self.succ[i as usize]
        } else {
            &self.skeleton[i as usize]
        }
    }

    pub fn in_neighbors(&self, i: NodeId) -> &[NodeId] {
        if self.directed {
            &self.pred[i as usize]
        } else {
            &self.skeleton[i as usize]
        }
    }

    /// Undirected degree.
    pub fn degree(&self, i: NodeId) -> usize {
        self.skeleton[i as usize].len()
    }

    pub fn max_degree(&self) -> usize {
        self.skeleton.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Ordered snapshots `G_1..G_T` over a fixed node set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSequence {
    n: usize,
    directed: bool,
    snapshots: Vec<Snapshot>,
    labels: Vec<String>,
    // timesteps at which each (canonical) pair was linked, ascending
    history: HashMap<(NodeId, NodeId), Vec<u32>>,
}

impl GraphSequence {
    /// Builds a sequence from per-timestep edge lists; `edges_by_t[0]` is `G_1`.
    pub fn from_edges(n: usize, directed: bool, edges_by_t: Vec<Vec<(NodeId, NodeId)>>) -> Result<Self> {
        let labels = (0..n).map(|i| i.to_string()).collect();
        Self::with_labels(labels, directed, edges_by_t)
    }

    pub fn with_labels(labels: Vec<String>, directed: bool, edges_by_t: Vec<Vec<(NodeId, NodeId)>>) -> Result<Self> {
        let n = labels.len();
        let snapshots = edges_by_t
            .into_iter()
            .enumerate()
            .map(|(idx, edges)| Snapshot::new(idx + 1, n, directed, edges))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_snapshots(labels, directed, snapshots))
    }

    fn from_snapshots(labels: Vec<String>, directed: bool, snapshots: Vec<Snapshot>) -> Self {
        let mut history: HashMap<(NodeId, NodeId), Vec<u32>> = HashMap::new();
        for snap in &snapshots {
            for &e in &snap.edges {
                history.entry(e).or_default().push(snap.t as u32);
            }
        }
        for times in history.values_mut() {
            times.sort_unstable();
        }
        Self { n: labels.len(), directed, snapshots, labels, history }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Number of snapshots `T`.
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.labels[id as usize]
    }

    pub fn snapshot(&self, t: usize) -> Result<&Snapshot> {
        if t == 0 || t > self.snapshots.len() {
            return Err(Error::TimestepOutOfRange { t, max: self.snapshots.len() });
        }
        Ok(&self.snapshots[t - 1])
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn check_node(&self, id: NodeId) -> Result<()> {
        if (id as usize) < self.n {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { id, n: self.n })
        }
    }

    /// `Y_t(i, j)`.
    pub fn has_edge(&self, t: usize, i: NodeId, j: NodeId) -> Result<bool> {
        self.check_node(i)?;
        self.check_node(j)?;
        Ok(self.snapshot(t)?.has_edge(i, j))
    }

    /// Most recent `tau <= t` at which `(i, j)` was linked.
    pub fn last_link(&self, i: NodeId, j: NodeId, t: usize) -> Option<usize> {
        let times = self.history.get(&canonical(self.directed, i, j))?;
        let idx = times.partition_point(|&tau| tau as usize <= t);
        (idx > 0).then(|| times[idx - 1] as usize)
    }

    /// All timesteps at which `(i, j)` was linked, ascending.
    pub fn link_times(&self, i: NodeId, j: NodeId) -> &[u32] {
        self.history.get(&canonical(self.directed, i, j)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Union of the edge sets of `G_1..G_{t_end}`.
    pub fn union_graph(&self, t_end: usize) -> Result<Snapshot> {
        self.snapshot(t_end)?;
        let edges = self.history.iter().filter(|(_, times)| times[0] as usize <= t_end).map(|(&e, _)| e);
        Snapshot::new(t_end, self.n, self.directed, edges)
    }

    /// The prefix `G_1..G_{t_end}`; later snapshots are dropped entirely.
    pub fn truncated(&self, t_end: usize) -> Result<Self> {
        self.snapshot(t_end)?;
        Ok(Self::from_snapshots(self.labels.clone(), self.directed, self.snapshots[..t_end].to_vec()))
    }

    /// Writes the sequence in edge-list format. Every node is declared up
    /// front so that ids survive a round trip through [`parse_edge_list`].
    pub fn emit<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# n={} T={} directed={}", self.n, self.len(), self.directed)?;
        for label in &self.labels {
            writeln!(out, "1 {label} -")?;
        }
        for snap in &self.snapshots {
            let edges = snap.edges();
            if edges.is_empty() {
                writeln!(out, "{} - -", snap.t)?;
            }
            for (i, j) in edges {
                writeln!(out, "{} {} {}", snap.t, self.label(i), self.label(j))?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.emit(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn canonical(directed: bool, i: NodeId, j: NodeId) -> (NodeId, NodeId) {
    if directed || i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Reads an edge-list file.
pub fn ingest(path: &Path, directed: bool) -> Result<GraphSequence> {
    let file = File::open(path)?;
    parse_edge_list(BufReader::new(file), directed)
}

pub fn parse_edge_list<R: BufRead>(reader: R, directed: bool) -> Result<GraphSequence> {
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut by_t: HashMap<usize, Vec<(NodeId, NodeId)>> = HashMap::new();
    let mut intern = |label: &str| -> NodeId {
        if let Some(&id) = ids.get(label) {
            return id;
        }
        let id = labels.len() as NodeId;
        labels.push(label.to_string());
        ids.insert(label.to_string(), id);
        id
    };

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected `<timestep> <src> <dst>`, got {} fields", fields.len()),
            });
        }
        let t: usize = fields[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("timestep `{}` is not a positive integer", fields[0]),
        })?;
        if t == 0 {
            return Err(Error::Parse { line: lineno, message: "timesteps start at 1".into() });
        }
        let entry = by_t.entry(t).or_default();
        match (fields[1], fields[2]) {
            ("-", "-") => {}
            ("-", _) => {
                return Err(Error::Parse { line: lineno, message: "source `-` is only valid as `<t> - -`".into() })
            }
            (src, "-") => {
                intern(src);
            }
            (src, dst) => {
                if src == dst {
                    return Err(Error::Parse { line: lineno, message: format!("self-loop on `{src}`") });
                }
                let i = intern(src);
                let j = intern(dst);
                entry.push((i, j));
            }
        }
    }

    if by_t.is_empty() {
        return Err(Error::EmptyInput);
    }
    let max_t = *by_t.keys().max().expect("non-empty");
    let mut edges_by_t = Vec::with_capacity(max_t);
    for t in 1..=max_t {
        edges_by_t.push(by_t.remove(&t).ok_or(Error::MissingTimestep(t))?);
    }
    GraphSequence::with_labels(labels, directed, edges_by_t)
}
