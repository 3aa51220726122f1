//! LLM-guided breadth-first discovery of the dependency graph.
//!
//! Source nodes seed a FIFO queue. Each dequeued attribute is expanded once:
//! its association scores and the current graph go into a link-generation
//! prompt, the proposed edges are merged, every elementary cycle in the
//! candidate edge set is sent to the resolver, and the pruned result is
//! committed before newly reached attributes join the queue.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{association_vector, pair_association};
use crate::dataset::{Dataset, DatasetError, Schema};
use crate::depgraph::{detect_cycles, Cycle, DependencyGraph, Edge, EdgeKey, EdgeSet, GraphError};
use crate::llm::{
    ask, parse_generate_response, parse_resolve_response, parse_source_response,
    render_generate_prompt, render_resolve_prompt, render_source_prompt, Backend, LlmError,
    SuccessorProposal, Transcript,
};

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("the model named no valid source nodes")]
    EmptySourceSet,
    #[error("cycles remain after {0} resolution round(s)")]
    ResolutionExhausted(usize),
    #[error("invalid discovery config: {0}")]
    Config(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryConfig {
    /// Exemplar rows shown in prompts.
    pub few_shot_k: usize,
    pub max_resolution_rounds: usize,
    pub seed: u64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            few_shot_k: 10,
            max_resolution_rounds: 3,
            seed: 42,
        }
    }
}

/// Loop state: committed graph, BFS queue, expanded set and the LLM log.
#[derive(Debug, Clone, Default)]
pub struct DiscoveryState {
    pub graph: DependencyGraph,
    pub queue: VecDeque<String>,
    pub visited: BTreeSet<String>,
    pub transcript: Transcript,
    /// Proposals or answers that were discarded, with the reason.
    pub notes: Vec<String>,
    /// Link-generation prompts issued (re-asks excluded).
    pub expansions: usize,
}

#[derive(Debug, Clone)]
pub struct DiscoveryOutcome {
    pub graph: DependencyGraph,
    pub transcript: Transcript,
    pub notes: Vec<String>,
}

pub struct StructureDiscovery<'a> {
    train: &'a Dataset,
    backend: &'a dyn Backend,
    cfg: DiscoveryConfig,
    few_shot: Dataset,
    state: DiscoveryState,
}

impl<'a> StructureDiscovery<'a> {
    pub fn new(train: &'a Dataset, backend: &'a dyn Backend, cfg: DiscoveryConfig) -> Result<Self, DiscoveryError> {
        if train.is_empty() {
            return Err(DiscoveryError::Config("training data is empty".into()));
        }
        if cfg.few_shot_k > train.len() {
            return Err(DiscoveryError::Config(format!(
                "few_shot_k = {} exceeds the {} training rows",
                cfg.few_shot_k,
                train.len()
            )));
        }
        let few_shot = train.few_shot(cfg.few_shot_k, cfg.seed)?;
        Ok(Self {
            train,
            backend,
            cfg,
            few_shot,
            state: DiscoveryState::default(),
        })
    }

    pub fn state(&self) -> &DiscoveryState {
        &self.state
    }

    pub fn transcript(&self) -> &Transcript {
        &self.state.transcript
    }

    pub fn run(mut self) -> Result<DiscoveryOutcome, (DiscoveryError, DiscoveryState)> {
        match self.run_inner() {
            Ok(()) => Ok(DiscoveryOutcome {
                graph: self.state.graph,
                transcript: self.state.transcript,
                notes: self.state.notes,
            }),
            Err(e) => Err((e, self.state)),
        }
    }

    fn run_inner(&mut self) -> Result<(), DiscoveryError> {
        let sources = self.initial_sources()?;
        self.state.graph = DependencyGraph::with_nodes(sources.iter().cloned());
        self.state.queue = sources.into_iter().collect();

        while let Some(subject) = self.state.queue.pop_front() {
            if !self.state.visited.insert(subject.clone()) {
                continue;
            }
            self.expand(&subject)?;
        }
        Ok(())
    }

    fn initial_sources(&mut self) -> Result<Vec<String>, DiscoveryError> {
        let prompt = render_source_prompt(self.train.schema(), &self.few_shot);
        let schema = self.train.schema().clone();
        let result = ask(self.backend, &prompt, &mut self.state.transcript, |text| {
            let names = parse_source_response(text)?;
            let mut known = Vec::new();
            for n in names {
                if let Some(c) = canonical_name(&schema, &n) {
                    if !known.contains(&c) {
                        known.push(c);
                    }
                }
            }
            if known.is_empty() {
                return Err(LlmError::Unparseable("no known feature names".into()));
            }
            Ok(known)
        });
        match result {
            Ok(v) => Ok(v),
            Err(e) if e.is_format_error() => Err(DiscoveryError::EmptySourceSet),
            Err(e) => Err(e.into()),
        }
    }

    fn expand(&mut self, subject: &str) -> Result<(), DiscoveryError> {
        let scores = association_vector(self.train, subject)?;
        let prompt = render_generate_prompt(subject, &self.state.graph, &scores, &self.few_shot);
        self.state.expansions += 1;
        let proposals = match ask(self.backend, &prompt, &mut self.state.transcript, parse_generate_response) {
            Ok(p) => p,
            Err(e) if e.is_format_error() => {
                self.note(format!("expansion of `{subject}` yielded no usable answer: {e}"));
                Vec::new()
            }
            Err(e) => return Err(e.into()),
        };

        let (proposed, new_nodes) = self.accept_proposals(subject, proposals);
        let candidate = self.state.graph.edges().union(&proposed);
        let mut nodes = self.state.graph.nodes().clone();
        nodes.extend(new_nodes.iter().cloned());
        let pruned = resolve_all_cycles(
            &nodes,
            &candidate,
            self.train,
            self.backend,
            self.cfg.max_resolution_rounds,
            &mut self.state.transcript,
            &mut self.state.notes,
        )?;
        self.state.graph = self.state.graph.commit(&new_nodes, &proposed, &pruned)?;
        for n in new_nodes {
            if !self.state.visited.contains(&n) {
                self.state.queue.push_back(n);
            }
        }
        Ok(())
    }

    /// Filters raw proposals into edges from `subject` plus the set of nodes
    /// not yet in the graph.
    fn accept_proposals(&mut self, subject: &str, proposals: Vec<SuccessorProposal>) -> (EdgeSet, BTreeSet<String>) {
        let mut edges = EdgeSet::new();
        let mut new_nodes = BTreeSet::new();
        for p in proposals {
            let Some(target) = canonical_name(self.train.schema(), &p.successor) else {
                self.note(format!("dropped unknown attribute `{}` proposed for `{subject}`", p.successor));
                continue;
            };
            if target == subject {
                self.note(format!("dropped self-loop on `{subject}`"));
                continue;
            }
            if p.rationale.is_empty() {
                self.note(format!("dropped {subject} -> {target}: no rationale"));
                continue;
            }
            if !self.state.graph.contains_node(&target) {
                new_nodes.insert(target.clone());
            }
            edges.insert(Edge::new(subject, target, p.rationale));
        }
        (edges, new_nodes)
    }

    fn note(&mut self, msg: String) {
        log::info!("{msg}");
        self.state.notes.push(msg);
    }
}

/// Runs discovery to completion, discarding the partial state on failure.
pub fn discover_structure(
    train: &Dataset,
    backend: &dyn Backend,
    cfg: DiscoveryConfig,
) -> Result<DiscoveryOutcome, DiscoveryError> {
    StructureDiscovery::new(train, backend, cfg)?
        .run()
        .map_err(|(e, _)| e)
}

fn canonical_name(schema: &Schema, name: &str) -> Option<String> {
    let name = name.trim();
    schema
        .names()
        .find(|n| *n == name)
        .or_else(|| schema.names().find(|n| n.eq_ignore_ascii_case(name)))
        .map(str::to_string)
}

/// Asks the resolver once per elementary cycle, pruning the named edge (or the
/// weakest-association edge when the answer is unusable), and repeats on the
/// remaining edges until no cycle is left or `max_rounds` is spent.
pub fn resolve_all_cycles(
    nodes: &BTreeSet<String>,
    candidate: &EdgeSet,
    train: &Dataset,
    backend: &dyn Backend,
    max_rounds: usize,
    transcript: &mut Transcript,
    notes: &mut Vec<String>,
) -> Result<BTreeSet<EdgeKey>, DiscoveryError> {
    let mut pruned: BTreeSet<EdgeKey> = BTreeSet::new();
    let remaining = |pruned: &BTreeSet<EdgeKey>| -> EdgeSet {
        candidate
            .iter()
            .filter(|e| !pruned.contains(&e.key()))
            .cloned()
            .collect()
    };
    for _ in 0..max_rounds {
        let cycles = detect_cycles(nodes, &remaining(&pruned));
        if cycles.is_empty() {
            return Ok(pruned);
        }
        for cycle in &cycles {
            let prompt = render_resolve_prompt(cycle)?;
            let answer = match ask(backend, &prompt, transcript, parse_resolve_response) {
                Ok(a) => Some(a),
                Err(e) if e.is_format_error() => None,
                Err(e) => return Err(e.into()),
            };
            let on_cycle = answer.as_ref().and_then(|(from, to)| {
                cycle
                    .edges
                    .iter()
                    .find(|e| e.from.eq_ignore_ascii_case(from) && e.to.eq_ignore_ascii_case(to))
            });
            let edge = match on_cycle {
                Some(e) => e.key(),
                None => {
                    let fallback = weakest_edge(cycle, train)?;
                    let msg = format!(
                        "resolver answer {answer:?} is not on cycle {}; pruning weakest-association edge {} -> {}",
                        cycle.label(),
                        fallback.0,
                        fallback.1
                    );
                    log::info!("{msg}");
                    notes.push(msg);
                    fallback
                }
            };
            pruned.insert(edge);
        }
    }
    if detect_cycles(nodes, &remaining(&pruned)).is_empty() {
        Ok(pruned)
    } else {
        Err(DiscoveryError::ResolutionExhausted(max_rounds))
    }
}

/// Cycle edge whose endpoints have the lowest absolute association on the
/// training data; ties go to the earliest edge in cycle order.
pub fn weakest_edge(cycle: &Cycle, train: &Dataset) -> Result<EdgeKey, DatasetError> {
    let mut best: Option<(f64, EdgeKey)> = None;
    for e in &cycle.edges {
        let s = pair_association(train, &e.from, &e.to)?.value.abs();
        if best.as_ref().is_none_or(|(b, _)| s < *b) {
            best = Some((s, e.key()));
        }
    }
    Ok(best.expect("cycle has edges").1)
}
