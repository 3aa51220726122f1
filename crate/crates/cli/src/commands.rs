use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use structsynth::discovery::StructureDiscovery;
use structsynth::evaluation::{evaluate, EvaluationReport};
use structsynth::llm::{Backend, HttpBackend, MockBackend};
use structsynth::synthesis::{synthesize, Ablation};
use structsynth::{Dataset, DependencyGraph, Schema};

use crate::config::PipelineConfig;
use crate::error::CliError;

pub const GRAPH_FILE: &str = "graph.json";
pub const DISCOVERY_TRANSCRIPT_FILE: &str = "discovery_transcript.jsonl";
pub const SYNTH_FILE: &str = "synthetic.csv";
pub const STATS_FILE: &str = "synthesis_stats.json";
pub const SYNTH_TRANSCRIPT_FILE: &str = "synthesis_transcript.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

/// Loads train and test, applying the schema hint and label overrides.
pub fn load_data(cfg: &PipelineConfig) -> Result<Data, CliError> {
    let hint = cfg.schema.as_deref().map(Schema::load_json).transpose()?;
    if let Some(raw) = &cfg.data.raw {
        let all = relabel(Dataset::load_csv(raw, hint.as_ref())?, cfg)?;
        let (train, test) = all.split(cfg.data.test_fraction, cfg.seed)?;
        return Ok(Data { train, test });
    }
    let (Some(train_path), Some(test_path)) = (&cfg.data.train, &cfg.data.test) else {
        return Err(CliError::Config("data needs `train` and `test`".into()));
    };
    let train = relabel(Dataset::load_csv(train_path, hint.as_ref())?, cfg)?;
    let test = Dataset::load_csv(test_path, Some(train.schema()))?;
    Ok(Data { train, test })
}

fn relabel(d: Dataset, cfg: &PipelineConfig) -> Result<Dataset, CliError> {
    if cfg.label.is_none() && cfg.task.is_none() {
        return Ok(d);
    }
    let label = cfg.label.clone().or_else(|| d.schema().label().map(str::to_string));
    let task = cfg.task.unwrap_or(d.schema().task());
    let schema = d.schema().clone().with_label(label, task)?;
    Ok(Dataset::new(schema, d.into_rows())?)
}

fn build_backend(cfg: &PipelineConfig) -> Result<Box<dyn Backend>, CliError> {
    match (&cfg.backend.mock_script, &cfg.backend.http) {
        (Some(path), _) => Ok(Box::new(MockBackend::load(path)?)),
        (None, Some(http)) => Ok(Box::new(HttpBackend::new(http.clone())?)),
        (None, None) => Err(CliError::Config("no backend configured".into())),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn out_dir(cfg: &PipelineConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))?;
    Ok(&cfg.out_dir)
}

/// Runs discovery and writes the graph and transcript. The transcript is
/// written even when discovery fails.
pub fn discover(cfg: &PipelineConfig) -> Result<DependencyGraph, CliError> {
    let data = load_data(cfg)?;
    let backend = build_backend(cfg)?;
    let out = out_dir(cfg)?;
    let run = StructureDiscovery::new(&data.train, backend.as_ref(), cfg.discovery.clone())?.run();
    match run {
        Ok(outcome) => {
            for n in &outcome.notes {
                log::info!("discovery: {n}");
            }
            write(&out.join(DISCOVERY_TRANSCRIPT_FILE), &outcome.transcript.to_jsonl())?;
            write(&out.join(GRAPH_FILE), &(outcome.graph.to_json() + "\n"))?;
            println!(
                "graph: {} nodes, {} edges",
                outcome.graph.nodes().len(),
                outcome.graph.edges().len()
            );
            Ok(outcome.graph)
        }
        Err((e, state)) => {
            write(&out.join(DISCOVERY_TRANSCRIPT_FILE), &state.transcript.to_jsonl())?;
            Err(e.into())
        }
    }
}

pub fn load_graph(path: &Path) -> Result<DependencyGraph, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read graph {}: {e}", path.display())))?;
    Ok(DependencyGraph::from_json(&text)?)
}

/// Generates the synthetic table from a graph file, defaulting to the
/// configured fixed graph and then to the one in the output directory.
pub fn synthesize_cmd(cfg: &PipelineConfig, graph: Option<&Path>) -> Result<Dataset, CliError> {
    let graph_path = graph
        .map(Path::to_path_buf)
        .or_else(|| cfg.graph.clone())
        .unwrap_or_else(|| cfg.out_dir.join(GRAPH_FILE));
    let g = load_graph(&graph_path)?;
    let data = load_data(cfg)?;
    // The offline sampler never touches the backend.
    let backend: Box<dyn Backend> = if cfg.synthesis.ablation == Ablation::BayesianSampler {
        Box::new(MockBackend::default())
    } else {
        build_backend(cfg)?
    };
    let out = out_dir(cfg)?;
    let outcome = synthesize(&data.train, &g, backend.as_ref(), &cfg.synthesis)?;
    let csv = out.join(SYNTH_FILE);
    outcome.data.save_csv(&csv)?;
    println!("wrote {}", csv.display());
    let stats = serde_json::to_string_pretty(&outcome.stats).expect("stats serialize") + "\n";
    write(&out.join(STATS_FILE), &stats)?;
    write(&out.join(SYNTH_TRANSCRIPT_FILE), &outcome.transcript.to_jsonl())?;
    println!(
        "synthesized {} of {} rows (acceptance {:.4})",
        outcome.stats.generated,
        outcome.stats.requested,
        outcome.stats.acceptance()
    );
    Ok(outcome.data)
}

/// Loads a synthetic CSV whose header must list exactly the training columns.
fn load_synth(path: &Path, schema: &Schema) -> Result<Dataset, CliError> {
    let inferred = Dataset::load_csv(path, None)?;
    if let Some(extra) = inferred.schema().names().find(|n| !schema.contains(n)) {
        return Err(CliError::Validation(format!(
            "schema mismatch: synthetic column `{extra}` is not a training column"
        )));
    }
    Ok(Dataset::load_csv(path, Some(schema))?)
}

pub fn evaluate_cmd(cfg: &PipelineConfig, synth: Option<&Path>) -> Result<EvaluationReport, CliError> {
    let synth_path: PathBuf = synth
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_dir.join(SYNTH_FILE));
    let data = load_data(cfg)?;
    let synth = load_synth(&synth_path, data.train.schema())?;
    let report = evaluate(&data.train, &data.test, &synth, &cfg.evaluation)?;
    let out = out_dir(cfg)?;
    write(&out.join(REPORT_FILE), &(report.to_json() + "\n"))?;
    print!("{}", report.to_table());
    Ok(report)
}

#[derive(Debug, Serialize)]
struct Manifest {
    seed: u64,
    ablation: Ablation,
    graph_source: &'static str,
    synthetic_rows: usize,
    artifacts: Vec<&'static str>,
}

/// Discover (or copy the fixed graph), synthesize, evaluate, then write the
/// manifest listing every artifact.
pub fn pipeline(cfg: &PipelineConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?.to_path_buf();
    let mut artifacts = Vec::new();
    let graph_source = match &cfg.graph {
        Some(fixed) => {
            let g = load_graph(fixed).map_err(|e| e.in_stage("discover"))?;
            write(&out.join(GRAPH_FILE), &(g.to_json() + "\n"))?;
            "fixed"
        }
        None => {
            discover(cfg).map_err(|e| e.in_stage("discover"))?;
            artifacts.push(DISCOVERY_TRANSCRIPT_FILE);
            "discovered"
        }
    };
    artifacts.push(GRAPH_FILE);
    let synth = synthesize_cmd(cfg, Some(&out.join(GRAPH_FILE))).map_err(|e| e.in_stage("synthesize"))?;
    artifacts.extend([SYNTH_FILE, STATS_FILE, SYNTH_TRANSCRIPT_FILE]);
    evaluate_cmd(cfg, Some(&out.join(SYNTH_FILE))).map_err(|e| e.in_stage("evaluate"))?;
    artifacts.push(REPORT_FILE);
    let manifest = Manifest {
        seed: cfg.seed,
        ablation: cfg.synthesis.ablation,
        graph_source,
        synthetic_rows: synth.len(),
        artifacts,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write(&out.join(MANIFEST_FILE), &text)
}
