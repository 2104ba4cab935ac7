//! Network substrates: balanced trees, Barabási–Albert graphs and edge lists.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::io::{BufRead, Write};
use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

/// Largest node count a generator will build unless told otherwise.
pub const DEFAULT_NODE_CAP: usize = 1 << 22;

/// Directed graph in compressed sparse row form.
///
/// Arc ids are positions in the CSR target array, so arcs are ordered by
/// `(src, dst)` and the successors of `v` occupy `arc_range(v)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Graph {
    /// Builds a graph from an arc list, dropping duplicate arcs.
    pub fn from_arcs<I>(node_count: usize, arcs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if node_count == 0 {
            return Err(Error::Parameter("graph needs at least one node".into()));
        }
        if node_count > u32::MAX as usize {
            return Err(Error::Size(format!("{node_count} nodes exceeds u32 ids")));
        }
        let mut set = BTreeSet::new();
        for (u, v) in arcs {
            if u >= node_count || v >= node_count {
                return Err(Error::Parameter(format!(
                    "arc ({u}, {v}) references a node outside 0..{node_count}"
                )));
            }
            if u == v {
                return Err(Error::Parameter(format!("self-loop on node {u}")));
            }
            set.insert((u, v));
        }
        let mut offsets = vec![0usize; node_count + 1];
        for &(u, _) in &set {
            offsets[u + 1] += 1;
        }
        for i in 0..node_count {
            offsets[i + 1] += offsets[i];
        }
        let targets = set.into_iter().map(|(_, v)| v as u32).collect();
        Ok(Graph {
            node_count,
            offsets,
            targets,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn arc_count(&self) -> usize {
        self.targets.len()
    }

    /// Arc ids leaving `v`.
    #[inline]
    pub fn arc_range(&self, v: usize) -> Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }

    #[inline]
    pub fn arc_target(&self, arc: usize) -> usize {
        self.targets[arc] as usize
    }

    #[inline]
    pub fn successors(&self, v: usize) -> &[u32] {
        &self.targets[self.arc_range(v)]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        (0..self.node_count).map(|v| self.out_degree(v)).collect()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count];
        for &t in &self.targets {
            deg[t as usize] += 1;
        }
        deg
    }

    /// All arcs as `(src, dst)` in arc-id order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count).flat_map(move |u| self.successors(u).iter().map(move |&v| (u, v as usize)))
    }

    pub fn has_arc(&self, u: usize, v: usize) -> bool {
        self.successors(u).binary_search(&(v as u32)).is_ok()
    }

    /// True when every arc has its reverse.
    pub fn is_symmetric(&self) -> bool {
        self.arcs().all(|(u, v)| self.has_arc(v, u))
    }

    /// Writes the edge-list text form, one `src dst` line per arc.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (u, v) in self.arcs() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn to_edge_list(&self) -> String {
        let mut buf = Vec::new();
        self.write_edge_list(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("edge lists are ASCII")
    }
}

/// Seeds with their activation offsets, in activation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSchedule {
    entries: Vec<(usize, usize)>,
}

impl SeedSchedule {
    pub fn new(entries: Vec<(usize, usize)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Schedule("seed schedule is empty".into()));
        }
        let mut seen = HashSet::new();
        for (i, &(node, offset)) in entries.iter().enumerate() {
            if !seen.insert(node) {
                return Err(Error::Schedule(format!("node {node} scheduled twice")));
            }
            if i > 0 && offset < entries[i - 1].1 {
                return Err(Error::Schedule(format!(
                    "offsets must be nondecreasing, got {} after {}",
                    offset,
                    entries[i - 1].1
                )));
            }
        }
        Ok(SeedSchedule { entries })
    }

    /// One seed active from step zero.
    pub fn single(node: usize) -> Self {
        SeedSchedule {
            entries: vec![(node, 0)],
        }
    }

    /// Seeds activated one step apart, in the given order.
    pub fn staggered(nodes: &[usize]) -> Result<Self> {
        Self::new(nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect())
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(v, _)| v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks every seed id against the graph.
    pub fn validate_for(&self, graph: &Graph) -> Result<()> {
        match self.nodes().find(|&v| v >= graph.node_count()) {
            Some(v) => Err(Error::Schedule(format!(
                "seed {v} is not a node of a {}-node graph",
                graph.node_count()
            ))),
            None => Ok(()),
        }
    }
}

/// Rooted tree with arcs directed parent to child; the root is node 0.
pub fn gen_balanced_tree(branching: usize, height: usize) -> Result<Graph> {
    gen_balanced_tree_capped(branching, height, DEFAULT_NODE_CAP)
}

pub fn gen_balanced_tree_capped(branching: usize, height: usize, cap: usize) -> Result<Graph> {
    if branching == 0 {
        return Err(Error::Parameter("branching must be at least 1".into()));
    }
    let mut total: usize = 1;
    let mut level: usize = 1;
    for _ in 0..height {
        level = level
            .checked_mul(branching)
            .filter(|&l| l <= cap)
            .ok_or_else(|| Error::Size(format!("tree level exceeds cap of {cap} nodes")))?;
        total = total
            .checked_add(level)
            .filter(|&t| t <= cap)
            .ok_or_else(|| Error::Size(format!("tree exceeds cap of {cap} nodes")))?;
    }
    // Breadth-first numbering: children of v are branching*v + 1 ..= branching*v + branching.
    let arcs = (1..total).map(|child| ((child - 1) / branching, child));
    Graph::from_arcs(total, arcs)
}

/// Preferential-attachment growth from `m` initial nodes; each undirected
/// edge is emitted as two arcs.
pub fn gen_barabasi_albert(n: usize, m: usize, rng_seed: u64) -> Result<Graph> {
    if m == 0 || n <= m {
        return Err(Error::Parameter(format!(
            "Barabási–Albert needs n > m >= 1, got n={n}, m={m}"
        )));
    }
    if n > DEFAULT_NODE_CAP {
        return Err(Error::Size(format!("{n} nodes exceeds cap {DEFAULT_NODE_CAP}")));
    }
    let mut rng = substream(rng_seed, Purpose::GraphGen, 0);
    let mut edges = Vec::with_capacity(2 * m * (n - m));
    // Every edge endpoint is listed once, so uniform picks are degree-proportional.
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * m * (n - m));
    let mut targets: Vec<usize> = (0..m).collect();
    for source in m..n {
        for &t in &targets {
            edges.push((source, t));
            edges.push((t, source));
        }
        endpoints.extend_from_slice(&targets);
        endpoints.extend(std::iter::repeat_n(source, m));
        let mut chosen = BTreeSet::new();
        while chosen.len() < m {
            chosen.insert(endpoints[rng.random_range(0..endpoints.len())]);
        }
        targets = chosen.into_iter().collect();
    }
    Graph::from_arcs(n, edges)
}

/// Parses the edge-list text format.
pub fn load_edge_list<R: BufRead>(source: R) -> Result<Graph> {
    let mut arcs = Vec::new();
    let mut max_id: Option<usize> = None;
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |tok: Option<&str>| -> Result<usize> {
            let tok = tok.ok_or_else(|| Error::Parse {
                line: lineno,
                message: "expected two node ids".into(),
            })?;
            tok.parse::<usize>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("`{tok}` is not a non-negative integer id"),
            })
        };
        let mut toks = line.split_whitespace();
        let u = parse(toks.next())?;
        let v = parse(toks.next())?;
        if toks.next().is_some() {
            return Err(Error::Parse {
                line: lineno,
                message: "trailing tokens after `src dst`".into(),
            });
        }
        if u == v {
            return Err(Error::Parse {
                line: lineno,
                message: format!("self-loop on node {u}"),
            });
        }
        max_id = Some(max_id.map_or(u.max(v), |mx| mx.max(u).max(v)));
        arcs.push((u, v));
    }
    let node_count = max_id
        .map(|mx| mx + 1)
        .ok_or_else(|| Error::Parameter("edge list contains no arcs".into()))?;
    Graph::from_arcs(node_count, arcs)
}

/// Breadth-first hop distance from the nearest seed; `None` when unreachable.
pub fn hop_distances(graph: &Graph, seeds: &SeedSchedule) -> Result<Vec<Option<usize>>> {
    seeds.validate_for(graph)?;
    let mut dist = vec![None; graph.node_count()];
    let mut queue = VecDeque::new();
    for v in seeds.nodes() {
        dist[v] = Some(0);
        queue.push_back(v);
    }
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("queued nodes have a distance");
        for &w in graph.successors(u) {
            let w = w as usize;
            if dist[w].is_none() {
                dist[w] = Some(du + 1);
                queue.push_back(w);
            }
        }
    }
    Ok(dist)
}

/// Star with `leaves` leaves around node 0, arcs in both directions.
pub fn gen_star(leaves: usize) -> Result<Graph> {
    Graph::from_arcs(leaves + 1, (1..=leaves).flat_map(|l| [(0, l), (l, 0)]))
}
