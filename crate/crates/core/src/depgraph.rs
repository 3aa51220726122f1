//! Rationale-carrying dependency DAG over attribute names.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph contains {0} cycle(s)")]
    CyclicResult(usize),
    #[error("graph is not acyclic")]
    CyclicInput,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("pruned edge {0} -> {1} is neither existing nor proposed")]
    UnknownPrunedEdge(String, String),
    #[error("malformed graph JSON: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeOrigin {
    #[default]
    LlmProposed,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub rationale: String,
    #[serde(default)]
    pub origin: EdgeOrigin,
}

impl Edge {
    pub fn new(from: impl Into<String>, to: impl Into<String>, rationale: impl Into<String>) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            rationale: rationale.into(),
            origin: EdgeOrigin::LlmProposed,
        }
    }

    pub fn manual(from: impl Into<String>, to: impl Into<String>, rationale: impl Into<String>) -> Self {
        Self {
            origin: EdgeOrigin::Manual,
            ..Self::new(from, to, rationale)
        }
    }

    pub fn key(&self) -> EdgeKey {
        (self.from.clone(), self.to.clone())
    }
}

/// Ordered `(from, to)` pair identifying an edge.
pub type EdgeKey = (String, String);

/// Edge collection keyed by `(from, to)`; the first insertion wins.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeSet(BTreeMap<EdgeKey, Edge>);

impl EdgeSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false (and keeps the old rationale) on a duplicate.
    pub fn insert(&mut self, e: Edge) -> bool {
        let key = e.key();
        if self.0.contains_key(&key) {
            return false;
        }
        self.0.insert(key, e);
        true
    }

    pub fn remove(&mut self, from: &str, to: &str) -> Option<Edge> {
        self.0.remove(&(from.to_string(), to.to_string()))
    }

    pub fn contains(&self, from: &str, to: &str) -> bool {
        self.get(from, to).is_some()
    }

    pub fn get(&self, from: &str, to: &str) -> Option<&Edge> {
        self.0.get(&(from.to_string(), to.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Edge> {
        self.0.values()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn union(&self, other: &EdgeSet) -> EdgeSet {
        let mut out = self.clone();
        for e in other.iter() {
            out.insert(e.clone());
        }
        out
    }
}

impl FromIterator<Edge> for EdgeSet {
    fn from_iter<I: IntoIterator<Item = Edge>>(iter: I) -> Self {
        let mut s = EdgeSet::new();
        for e in iter {
            s.insert(e);
        }
        s
    }
}

/// Closed walk with distinct nodes, rotated to start at its smallest node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cycle {
    pub edges: Vec<Edge>,
}

impl Cycle {
    pub fn nodes(&self) -> Vec<&str> {
        self.edges.iter().map(|e| e.from.as_str()).collect()
    }

    pub fn contains_edge(&self, from: &str, to: &str) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to)
    }

    /// `A->B->C` form, used as a stable identifier.
    pub fn label(&self) -> String {
        self.nodes().join("->")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DependencyGraph {
    nodes: BTreeSet<String>,
    edges: EdgeSet,
}

impl DependencyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_nodes<I, S>(nodes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            nodes: nodes.into_iter().map(Into::into).collect(),
            edges: EdgeSet::new(),
        }
    }

    /// Builds a graph from parts, checking endpoints and acyclicity.
    pub fn from_parts(nodes: BTreeSet<String>, edges: EdgeSet) -> Result<Self, GraphError> {
        for e in edges.iter() {
            if e.from == e.to {
                return Err(GraphError::SelfLoop(e.from.clone()));
            }
            for n in [&e.from, &e.to] {
                if !nodes.contains(n) {
                    return Err(GraphError::UnknownNode(n.clone()));
                }
            }
        }
        let cycles = detect_cycles(&nodes, &edges);
        if !cycles.is_empty() {
            return Err(GraphError::CyclicResult(cycles.len()));
        }
        Ok(Self { nodes, edges })
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.edges
    }

    pub fn contains_node(&self, n: &str) -> bool {
        self.nodes.contains(n)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies one discovery step: `(V ∪ new_nodes, (E ∪ accepted) \ pruned)`.
    pub fn commit(
        &self,
        new_nodes: &BTreeSet<String>,
        accepted: &EdgeSet,
        pruned: &BTreeSet<EdgeKey>,
    ) -> Result<DependencyGraph, GraphError> {
        let mut edges = self.edges.union(accepted);
        for (from, to) in pruned {
            if edges.remove(from, to).is_none() {
                return Err(GraphError::UnknownPrunedEdge(from.clone(), to.clone()));
            }
        }
        let mut nodes = self.nodes.clone();
        nodes.extend(new_nodes.iter().cloned());
        for e in edges.iter() {
            nodes.insert(e.from.clone());
            nodes.insert(e.to.clone());
        }
        Self::from_parts(nodes, edges)
    }

    pub fn parents_of(&self, node: &str) -> BTreeSet<String> {
        self.edges
            .iter()
            .filter(|e| e.to == node)
            .map(|e| e.from.clone())
            .collect()
    }

    /// In-neighbours of `targets`, excluding the targets themselves.
    pub fn parents(&self, targets: &BTreeSet<String>) -> Result<BTreeSet<String>, GraphError> {
        self.check_known(targets)?;
        Ok(self
            .edges
            .iter()
            .filter(|e| targets.contains(&e.to) && !targets.contains(&e.from))
            .map(|e| e.from.clone())
            .collect())
    }

    /// Induced subgraph; no transitive edges are added.
    pub fn subgraph(&self, keep: &BTreeSet<String>) -> Result<DependencyGraph, GraphError> {
        self.check_known(keep)?;
        Ok(DependencyGraph {
            nodes: keep.clone(),
            edges: self
                .edges
                .iter()
                .filter(|e| keep.contains(&e.from) && keep.contains(&e.to))
                .cloned()
                .collect(),
        })
    }

    fn check_known(&self, set: &BTreeSet<String>) -> Result<(), GraphError> {
        match set.iter().find(|n| !self.nodes.contains(*n)) {
            Some(n) => Err(GraphError::UnknownNode(n.clone())),
            None => Ok(()),
        }
    }

    /// Longest-path layering: sources sit in layer 0 and every node sits one
    /// past its deepest parent.
    pub fn topological_layers(&self) -> Result<LayerPlan, GraphError> {
        let order = kahn_order(&self.nodes, &self.edges).ok_or(GraphError::CyclicInput)?;
        let mut depth: BTreeMap<&str, usize> = BTreeMap::new();
        for n in &order {
            let d = self
                .edges
                .iter()
                .filter(|e| e.to == *n)
                .map(|e| depth[e.from.as_str()] + 1)
                .max()
                .unwrap_or(0);
            depth.insert(n.as_str(), d);
        }
        let m = depth.values().copied().max().map_or(0, |d| d + 1);
        let mut layers = vec![BTreeSet::new(); m];
        for (n, d) in depth {
            layers[d].insert(n.to_string());
        }
        Ok(LayerPlan { layers })
    }

    pub fn to_json(&self) -> String {
        let wire = GraphWire {
            nodes: self.nodes.iter().cloned().collect(),
            edges: self.edges.iter().cloned().collect(),
        };
        serde_json::to_string_pretty(&wire).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<DependencyGraph, GraphError> {
        let wire: GraphWire = serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))?;
        let mut edges = EdgeSet::new();
        for e in wire.edges {
            let key = e.key();
            if !edges.insert(e) {
                return Err(GraphError::Format(format!("duplicate edge {} -> {}", key.0, key.1)));
            }
        }
        Self::from_parts(wire.nodes.into_iter().collect(), edges)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphWire {
    nodes: Vec<String>,
    edges: Vec<Edge>,
}

pub const EMPTY_GRAPH_SENTINEL: &str = "(no edges yet)";

/// Textual form used in prompts: one block per edge, sorted by `(from, to)`.
pub fn graph_text(g: &DependencyGraph) -> String {
    let mut out = String::from("Current dependency graph structure with rationales:\n");
    if g.edges.is_empty() {
        out.push_str(EMPTY_GRAPH_SENTINEL);
        out.push('\n');
        return out;
    }
    for (i, e) in g.edges.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "- {} -> {}", e.from, e.to);
        let _ = writeln!(out, "Rational: {}", e.rationale);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LayerPlan {
    pub layers: Vec<BTreeSet<String>>,
}

impl LayerPlan {
    pub fn layer_of(&self, node: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.contains(node))
    }

    pub fn order(&self) -> Vec<&str> {
        self.layers.iter().flatten().map(String::as_str).collect()
    }
}

/// Kahn's algorithm with a sorted ready-set; `None` when a cycle exists.
pub fn kahn_order(nodes: &BTreeSet<String>, edges: &EdgeSet) -> Option<Vec<String>> {
    let mut indeg: BTreeMap<&str, usize> = nodes.iter().map(|n| (n.as_str(), 0)).collect();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in edges.iter() {
        *indeg.get_mut(e.to.as_str())? += 1;
        succ.entry(e.from.as_str()).or_default().push(e.to.as_str());
    }
    let mut ready: BTreeSet<&str> = indeg.iter().filter(|(_, &d)| d == 0).map(|(n, _)| *n).collect();
    let mut out = Vec::with_capacity(nodes.len());
    while let Some(n) = ready.pop_first() {
        out.push(n.to_string());
        for &m in succ.get(n).map(Vec::as_slice).unwrap_or_default() {
            let d = indeg.get_mut(m).expect("endpoint present");
            *d -= 1;
            if *d == 0 {
                ready.insert(m);
            }
        }
    }
    (out.len() == nodes.len()).then_some(out)
}

/// Enumerates all elementary cycles (Johnson's algorithm). Each cycle starts at
/// its lexicographically smallest node; the list is sorted by node sequence.
pub fn detect_cycles(nodes: &BTreeSet<String>, edges: &EdgeSet) -> Vec<Cycle> {
    let names: Vec<&str> = nodes
        .iter()
        .map(String::as_str)
        .chain(edges.iter().flat_map(|e| [e.from.as_str(), e.to.as_str()]))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let n = names.len();
    let mut adj = vec![Vec::new(); n];
    for e in edges.iter() {
        if e.from != e.to {
            adj[index[e.from.as_str()]].push(index[e.to.as_str()]);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
    }

    let mut raw: Vec<Vec<usize>> = Vec::new();
    let mut johnson = Johnson {
        adj: &adj,
        allowed: vec![false; n],
        blocked: vec![false; n],
        block_map: vec![BTreeSet::new(); n],
        stack: Vec::new(),
        out: &mut raw,
    };
    for start in 0..n {
        // Restrict to the strongly connected component of `start` within
        // the subgraph induced by nodes >= start.
        let comp = scc_containing(&adj, start);
        if comp.len() < 2 {
            continue;
        }
        for v in 0..n {
            johnson.allowed[v] = comp.contains(&v);
            johnson.blocked[v] = false;
            johnson.block_map[v].clear();
        }
        johnson.circuit(start, start);
    }

    let mut cycles: Vec<Cycle> = raw
        .into_iter()
        .map(|path| {
            let edges_on = (0..path.len())
                .map(|i| {
                    let from = names[path[i]];
                    let to = names[path[(i + 1) % path.len()]];
                    edges.get(from, to).expect("edge on cycle exists").clone()
                })
                .collect();
            Cycle { edges: edges_on }
        })
        .collect();
    cycles.sort_by(|a, b| a.nodes().cmp(&b.nodes()));
    cycles
}

struct Johnson<'a> {
    adj: &'a [Vec<usize>],
    allowed: Vec<bool>,
    blocked: Vec<bool>,
    block_map: Vec<BTreeSet<usize>>,
    stack: Vec<usize>,
    out: &'a mut Vec<Vec<usize>>,
}

impl Johnson<'_> {
    fn unblock(&mut self, u: usize) {
        self.blocked[u] = false;
        let waiting = std::mem::take(&mut self.block_map[u]);
        for w in waiting {
            if self.blocked[w] {
                self.unblock(w);
            }
        }
    }

    fn circuit(&mut self, v: usize, start: usize) -> bool {
        let mut found = false;
        self.stack.push(v);
        self.blocked[v] = true;
        for &w in &self.adj[v] {
            if !self.allowed[w] {
                continue;
            }
            if w == start {
                self.out.push(self.stack.clone());
                found = true;
            } else if !self.blocked[w] && self.circuit(w, start) {
                found = true;
            }
        }
        if found {
            self.unblock(v);
        } else {
            for &w in &self.adj[v] {
                if self.allowed[w] {
                    self.block_map[w].insert(v);
                }
            }
        }
        self.stack.pop();
        found
    }
}

/// Nodes in the same strongly connected component as `start`, considering
/// only nodes with index >= `start`.
fn scc_containing(adj: &[Vec<usize>], start: usize) -> BTreeSet<usize> {
    let reach = |forward: bool| {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let next: Vec<usize> = if forward {
                adj[u].clone()
            } else {
                (0..adj.len()).filter(|&p| adj[p].contains(&u)).collect()
            };
            for w in next {
                if w >= start && seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen
    };
    let fwd = reach(true);
    let bwd = reach(false);
    fwd.intersection(&bwd).copied().collect()
}
