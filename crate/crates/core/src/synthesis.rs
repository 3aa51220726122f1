//! Row generation along a learned dependency graph.
//!
//! In the full mode each batch walks the topological layers: layer `i` is
//! generated conditioned on everything produced for layers `< i`, with the
//! induced subgraph over the layer and its parents as context. Attributes
//! outside the graph are then filled in by a single call and the two parts are
//! concatenated. The ablation modes drop the ordering, the structure, or the
//! language model altogether.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::{bin_of, quantile_edges};
use crate::dataset::{AttributeKind, CategoryDomain, Cell, Dataset, DatasetError, PartialRow, Row, Schema};
use crate::depgraph::{DependencyGraph, GraphError};
use crate::llm::{
    ask, parse_table_response, render_data_gen_iso_prompt, render_data_gen_prompt, Backend, LlmError, Prompt,
    Transcript,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("generation stalled: {} of {} requested rows accepted", .0.generated, .0.requested)]
    GenerationStalled(SynthStats),
    #[error("attribute `{0}` is missing from the assembled row")]
    MissingAttribute(String),
    #[error("attribute `{0}` appears in both row parts")]
    OverlappingAttribute(String),
    #[error("graph node `{0}` is not a dataset attribute")]
    UnknownNode(String),
    #[error("invalid synthesis config: {0}")]
    Config(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    NoTopologicalOrder,
    NoStructure,
    BayesianSampler,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoTopologicalOrder => "no_topological_order",
            Ablation::NoStructure => "no_structure",
            Ablation::BayesianSampler => "bayesian_sampler",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "full" => Ok(Ablation::Full),
            "no_topological_order" | "no_order" => Ok(Ablation::NoTopologicalOrder),
            "no_structure" => Ok(Ablation::NoStructure),
            "bayesian_sampler" | "bayesian" => Ok(Ablation::BayesianSampler),
            other => Err(format!("unknown ablation mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Number of rows to produce.
    pub s: usize,
    /// Rows requested per model call.
    pub batch: usize,
    pub ablation: Ablation,
    pub seed: u64,
    /// Consecutive low-yield batches tolerated before giving up.
    pub max_row_retries: usize,
    /// Fraction of requested rows a batch must deliver to count as productive.
    pub min_yield: f64,
    pub few_shot_k: usize,
    pub q_bins: usize,
    pub smoothing: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            s: 1000,
            batch: 20,
            ablation: Ablation::Full,
            seed: 42,
            max_row_retries: 3,
            min_yield: 0.05,
            few_shot_k: 10,
            q_bins: 10,
            smoothing: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.batch == 0 {
            return Err(SynthError::Config("batch must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_yield) {
            return Err(SynthError::Config("min_yield must lie in [0, 1]".into()));
        }
        if self.q_bins == 0 {
            return Err(SynthError::Config("q_bins must be at least 1".into()));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(SynthError::Config("smoothing must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

/// Row accounting written next to the synthetic CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthStats {
    pub requested: usize,
    pub generated: usize,
    pub rejected_by_reason: BTreeMap<String, usize>,
}

impl SynthStats {
    fn reject(&mut self, reason: &str, n: usize) {
        if n > 0 {
            *self.rejected_by_reason.entry(reason.to_string()).or_default() += n;
        }
    }

    fn absorb(&mut self, other: &SynthStats) {
        self.requested += other.requested;
        self.generated += other.generated;
        for (k, v) in &other.rejected_by_reason {
            self.reject(k, *v);
        }
    }

    /// Accepted share of requested rows.
    pub fn acceptance(&self) -> f64 {
        if self.requested == 0 {
            1.0
        } else {
            self.generated as f64 / self.requested as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub data: Dataset,
    pub stats: SynthStats,
    pub transcript: Transcript,
}

/// Concatenates a graph-part and an isolated-part prefix into a full row in
/// schema order.
pub fn assemble_row(schema: &Schema, graph_part: &PartialRow, iso_part: &PartialRow) -> Result<Row, SynthError> {
    if let Some(k) = graph_part.keys().find(|k| iso_part.contains_key(*k)) {
        return Err(SynthError::OverlappingAttribute(k.clone()));
    }
    if let Some(k) = graph_part.keys().chain(iso_part.keys()).find(|k| !schema.contains(k)) {
        return Err(SynthError::Dataset(DatasetError::UnknownColumn(k.clone())));
    }
    schema
        .names()
        .map(|n| {
            graph_part
                .get(n)
                .or_else(|| iso_part.get(n))
                .cloned()
                .ok_or_else(|| SynthError::MissingAttribute(n.to_string()))
        })
        .collect()
}

/// One model call per batch: either a graph layer or the isolated remainder.
#[derive(Debug, Clone)]
enum Step {
    Layer {
        columns: Vec<String>,
        graph: DependencyGraph,
        few_shot: Dataset,
    },
    Isolated {
        columns: Vec<String>,
        few_shot: Dataset,
    },
}

impl Step {
    fn columns(&self) -> &[String] {
        match self {
            Step::Layer { columns, .. } | Step::Isolated { columns, .. } => columns,
        }
    }
}

fn schema_ordered(schema: &Schema, set: &BTreeSet<String>) -> Vec<String> {
    schema.names().filter(|n| set.contains(*n)).map(str::to_string).collect()
}

fn plan_steps(train: &Dataset, g: &DependencyGraph, few_shot: &Dataset, mode: Ablation) -> Result<Vec<Step>, SynthError> {
    let schema = train.schema();
    let in_graph = g.nodes().clone();
    let iso: Vec<String> = schema.names().filter(|n| !in_graph.contains(*n)).map(str::to_string).collect();
    let mut steps = Vec::new();
    match mode {
        Ablation::Full => {
            for layer in g.topological_layers()?.layers {
                let parents = g.parents(&layer)?;
                let context: BTreeSet<String> = layer.union(&parents).cloned().collect();
                steps.push(Step::Layer {
                    columns: schema_ordered(schema, &layer),
                    graph: g.subgraph(&context)?,
                    few_shot: few_shot.project(&schema_ordered(schema, &context))?,
                });
            }
        }
        Ablation::NoTopologicalOrder => {
            if !in_graph.is_empty() {
                let columns = schema_ordered(schema, &in_graph);
                steps.push(Step::Layer {
                    few_shot: few_shot.project(&columns)?,
                    columns,
                    graph: g.clone(),
                });
            }
        }
        Ablation::NoStructure => {
            let columns: Vec<String> = schema.names().map(str::to_string).collect();
            return Ok(vec![Step::Isolated {
                few_shot: few_shot.clone(),
                columns,
            }]);
        }
        Ablation::BayesianSampler => unreachable!("handled without a model"),
    }
    if !iso.is_empty() {
        steps.push(Step::Isolated {
            few_shot: few_shot.project(&iso)?,
            columns: iso,
        });
    }
    Ok(steps)
}

struct BatchResult {
    rows: Vec<Row>,
    stats: SynthStats,
    transcript: Transcript,
}

struct Generator<'a> {
    schema: &'a Schema,
    backend: &'a dyn Backend,
    domains: BTreeMap<String, CategoryDomain>,
    steps: Vec<Step>,
}

impl Generator<'_> {
    fn run_batch(&self, want: usize) -> Result<BatchResult, LlmError> {
        let mut stats = SynthStats {
            requested: want,
            ..SynthStats::default()
        };
        let mut transcript = Transcript::default();
        let mut prefix: Vec<PartialRow> = vec![PartialRow::new(); want];
        let mut iso_part: Option<Vec<PartialRow>> = None;
        let mut done: Vec<String> = Vec::new();

        for step in &self.steps {
            if prefix.is_empty() {
                break;
            }
            let cond_schema = self.schema.project(&done).expect("generated columns come from the schema");
            let conditioning = Dataset::from_partial_rows(cond_schema, &prefix).expect("rows were validated on parse");
            let prompt: Prompt = match step {
                Step::Layer {
                    columns,
                    graph,
                    few_shot,
                } => render_data_gen_prompt(&conditioning, graph, columns, few_shot, prefix.len()),
                Step::Isolated { columns, few_shot } => {
                    render_data_gen_iso_prompt(&conditioning, columns, few_shot, prefix.len())
                }
            };
            let columns = step.columns();
            let parsed = ask(self.backend, &prompt, &mut transcript, |text| {
                parse_table_response(text, columns, self.schema, &self.domains)
            });
            let table = match parsed {
                Ok(t) => t,
                Err(e) if e.is_format_error() => {
                    log::warn!("{}: dropping batch of {}: {e}", prompt.script_key(), prefix.len());
                    stats.reject("unparseable", prefix.len());
                    prefix.clear();
                    break;
                }
                Err(e) => return Err(e),
            };

            let n = prefix.len();
            let mut answers: Vec<Option<PartialRow>> = vec![None; n];
            let mut seen = vec![false; n];
            for (k, row) in table.rows {
                if k < n {
                    seen[k] = true;
                    answers[k] = Some(row);
                }
            }
            for (k, why) in &table.rejected {
                if *k < n {
                    seen[*k] = true;
                    stats.reject(why.reason(), 1);
                }
            }
            stats.reject("short_response", seen.iter().filter(|s| !**s).count());

            match step {
                Step::Layer { .. } => {
                    prefix = prefix
                        .into_iter()
                        .zip(answers)
                        .filter_map(|(mut p, a)| {
                            p.extend(a?);
                            Some(p)
                        })
                        .collect();
                }
                Step::Isolated { .. } => {
                    let (kept, iso): (Vec<_>, Vec<_>) = prefix
                        .into_iter()
                        .zip(answers)
                        .filter_map(|(p, a)| Some((p, a?)))
                        .unzip();
                    prefix = kept;
                    iso_part = Some(iso);
                }
            }
            done.extend(columns.iter().cloned());
        }

        let empty = PartialRow::new();
        let rows = prefix
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let iso = iso_part.as_ref().map_or(&empty, |v| &v[k]);
                assemble_row(self.schema, p, iso).expect("steps cover each attribute exactly once")
            })
            .collect::<Vec<_>>();
        stats.generated = rows.len();
        Ok(BatchResult { rows, stats, transcript })
    }
}

/// Generates `cfg.s` rows shaped like `train`.
pub fn synthesize(
    train: &Dataset,
    g: &DependencyGraph,
    backend: &dyn Backend,
    cfg: &SynthConfig,
) -> Result<SynthOutcome, SynthError> {
    cfg.validate()?;
    if let Some(n) = g.nodes().iter().find(|n| !train.schema().contains(n)) {
        return Err(SynthError::UnknownNode(n.clone()));
    }
    g.topological_layers()?;
    if train.is_empty() {
        return Err(SynthError::Config("training data is empty".into()));
    }

    if cfg.ablation == Ablation::BayesianSampler {
        let data = bayesian_sample(train, g, cfg.s, cfg.q_bins, cfg.smoothing, cfg.seed)?;
        let stats = SynthStats {
            requested: cfg.s,
            generated: cfg.s,
            rejected_by_reason: BTreeMap::new(),
        };
        return Ok(SynthOutcome {
            data,
            stats,
            transcript: Transcript::default(),
        });
    }

    let few_shot = train.few_shot(cfg.few_shot_k.min(train.len()), cfg.seed)?;
    let generator = Generator {
        schema: train.schema(),
        backend,
        domains: train.category_domains(),
        steps: plan_steps(train, g, &few_shot, cfg.ablation)?,
    };

    let lanes = backend.parallelism().max(1);
    let mut rows: Vec<Row> = Vec::with_capacity(cfg.s);
    let mut stats = SynthStats::default();
    let mut transcript = Transcript::default();
    let mut idle_batches = 0;

    while rows.len() < cfg.s {
        let mut wants = Vec::new();
        let mut planned = rows.len();
        while planned < cfg.s && wants.len() < lanes {
            let w = cfg.batch.min(cfg.s - planned);
            wants.push(w);
            planned += w;
        }
        let results: Vec<Result<BatchResult, LlmError>> = if wants.len() == 1 {
            vec![generator.run_batch(wants[0])]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = wants
                    .iter()
                    .map(|&w| {
                        let generator = &generator;
                        scope.spawn(move || generator.run_batch(w))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("batch worker panicked")).collect()
            })
        };

        for r in results {
            let batch = r?;
            transcript.exchanges.extend(batch.transcript.exchanges);
            stats.absorb(&batch.stats);
            let floor = cfg.min_yield * batch.stats.requested as f64;
            if batch.rows.is_empty() || (batch.rows.len() as f64) < floor {
                idle_batches += 1;
            } else {
                idle_batches = 0;
            }
            let room = cfg.s - rows.len();
            rows.extend(batch.rows.into_iter().take(room));
            if idle_batches > cfg.max_row_retries {
                return Err(SynthError::GenerationStalled(stats));
            }
        }
    }

    let data = train.with_rows(rows)?;
    Ok(SynthOutcome { data, stats, transcript })
}

/// Discrete state space of one attribute, plus how to turn a state back into
/// a cell.
#[derive(Debug, Clone)]
enum Coder {
    Categories(Vec<String>),
    Bins { edges: Vec<f64>, ranges: Vec<(f64, f64)>, states: Vec<usize> },
    /// No observed values.
    Empty,
}

impl Coder {
    fn fit(kind: AttributeKind, cells: &[&Cell], q: usize) -> Coder {
        match kind {
            AttributeKind::Categorical => {
                let values: BTreeSet<&str> = cells.iter().filter_map(|c| c.as_category()).collect();
                if values.is_empty() {
                    Coder::Empty
                } else {
                    Coder::Categories(values.into_iter().map(str::to_string).collect())
                }
            }
            AttributeKind::Numerical => {
                let values: Vec<f64> = cells.iter().filter_map(|c| c.as_number()).collect();
                if values.is_empty() {
                    return Coder::Empty;
                }
                let edges = quantile_edges(&values, q);
                let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); edges.len() + 1];
                for &x in &values {
                    let r = &mut ranges[bin_of(&edges, x)];
                    r.0 = r.0.min(x);
                    r.1 = r.1.max(x);
                }
                // Keep only bins that saw data; state i maps to bin states[i].
                let states: Vec<usize> = (0..ranges.len()).filter(|&b| ranges[b].0 <= ranges[b].1).collect();
                Coder::Bins { edges, ranges, states }
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            Coder::Categories(v) => v.len(),
            Coder::Bins { states, .. } => states.len(),
            Coder::Empty => 0,
        }
    }

    fn encode(&self, cell: &Cell) -> Option<usize> {
        match (self, cell) {
            (Coder::Categories(v), Cell::Category(c)) => v.binary_search(c).ok(),
            (Coder::Bins { edges, states, .. }, Cell::Number(x)) => states.binary_search(&bin_of(edges, *x)).ok(),
            _ => None,
        }
    }

    fn decode(&self, state: usize, rng: &mut ChaCha8Rng) -> Cell {
        match self {
            Coder::Categories(v) => Cell::Category(v[state].clone()),
            Coder::Bins { ranges, states, .. } => {
                let (lo, hi) = ranges[states[state]];
                Cell::Number(if lo < hi { rng.gen_range(lo..=hi) } else { lo })
            }
            Coder::Empty => Cell::Missing,
        }
    }
}

/// Conditional frequency table of one attribute given its parents.
#[derive(Debug, Clone)]
struct Cpt {
    parents: Vec<usize>,
    table: HashMap<Vec<usize>, Vec<f64>>,
    marginal: Vec<f64>,
}

impl Cpt {
    fn fit(target: usize, parents: Vec<usize>, encoded: &[Vec<Option<usize>>], states: &[usize]) -> Cpt {
        let mut table: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
        let mut marginal = vec![0.0; states[target]];
        for row in encoded {
            let Some(v) = row[target] else { continue };
            marginal[v] += 1.0;
            let key: Option<Vec<usize>> = parents.iter().map(|&p| row[p]).collect();
            if let Some(key) = key {
                table.entry(key).or_insert_with(|| vec![0.0; states[target]])[v] += 1.0;
            }
        }
        Cpt { parents, table, marginal }
    }

    /// Smoothed weights for the given parent states. Unseen configurations
    /// without smoothing fall back to the marginal.
    fn weights(&self, parent_states: &[usize], smoothing: f64) -> Vec<f64> {
        let counts = self.table.get(parent_states);
        match counts {
            Some(c) => c.iter().map(|x| x + smoothing).collect(),
            None if smoothing > 0.0 => vec![smoothing; self.marginal.len()],
            None => self.marginal.clone(),
        }
    }
}

/// Fits a discrete Bayesian network on `g` and draws `s` rows by ancestral
/// sampling. Attributes outside the graph are drawn from their marginals.
pub fn bayesian_sample(
    train: &Dataset,
    g: &DependencyGraph,
    s: usize,
    q_bins: usize,
    smoothing: f64,
    seed: u64,
) -> Result<Dataset, SynthError> {
    let schema = train.schema();
    if let Some(n) = g.nodes().iter().find(|n| !schema.contains(n)) {
        return Err(SynthError::UnknownNode(n.clone()));
    }
    let plan = g.topological_layers()?;

    let coders: Vec<Coder> = schema
        .attributes()
        .iter()
        .map(|a| Ok(Coder::fit(a.kind, &train.column(&a.name)?, q_bins)))
        .collect::<Result<_, DatasetError>>()?;
    let states: Vec<usize> = coders.iter().map(Coder::len).collect();
    let encoded: Vec<Vec<Option<usize>>> = train
        .rows()
        .iter()
        .map(|r| r.iter().zip(&coders).map(|(c, coder)| coder.encode(c)).collect())
        .collect();

    let mut order: Vec<usize> = plan
        .order()
        .into_iter()
        .map(|n| schema.index_of(n).expect("checked above"))
        .collect();
    order.extend((0..schema.len()).filter(|i| !g.contains_node(&schema.attributes()[*i].name)));

    let cpts: Vec<Cpt> = (0..schema.len())
        .map(|i| {
            let name = &schema.attributes()[i].name;
            let mut parents: Vec<usize> = g
                .parents_of(name)
                .iter()
                .map(|p| schema.index_of(p).expect("checked above"))
                .collect();
            parents.sort_unstable();
            Cpt::fit(i, parents, &encoded, &states)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(s);
    for _ in 0..s {
        let mut drawn: Vec<Option<usize>> = vec![None; schema.len()];
        let mut row = vec![Cell::Missing; schema.len()];
        for &i in &order {
            if states[i] == 0 {
                continue;
            }
            // A parent with no observed values leaves its children on the marginal.
            let parent_states: Option<Vec<usize>> = cpts[i].parents.iter().map(|&p| drawn[p]).collect();
            let weights = match parent_states {
                Some(ps) => cpts[i].weights(&ps, smoothing),
                None => cpts[i].marginal.iter().map(|x| x + smoothing).collect(),
            };
            let state = match WeightedIndex::new(&weights) {
                Ok(dist) => dist.sample(&mut rng),
                Err(_) => rng.gen_range(0..states[i]),
            };
            drawn[i] = Some(state);
            row[i] = coders[i].decode(state, &mut rng);
        }
        rows.push(row);
    }
    Ok(train.with_rows(rows)?)
}
