//! The five prompt templates. Each carries its input sections under fixed
//! headers and ends with an output contract matching the parser for its kind.

use std::fmt::Write as _;

use super::{LlmError, Prompt, PromptKind};
use crate::association::{score_text, AssociationVector};
use crate::dataset::{Dataset, Schema};
use crate::depgraph::{graph_text, Cycle, DependencyGraph};

/// Appended when re-asking after an unparseable reply.
pub const REPAIR_SUFFIX: &str =
    "\n\nYour previous answer could not be parsed. Respond with only the requested format.";

fn feature_list(schema: &Schema) -> String {
    let mut out = String::new();
    for a in schema.attributes() {
        let kind = match a.kind {
            crate::dataset::AttributeKind::Numerical => "numerical",
            crate::dataset::AttributeKind::Categorical => "categorical",
        };
        let _ = writeln!(out, "- {} ({kind})", a.name);
    }
    out
}

fn section(out: &mut String, header: &str, body: &str) {
    let _ = write!(out, "{header}\n{}\n\n", body.trim_end());
}

fn table(d: &Dataset) -> String {
    if d.schema().is_empty() {
        return "(none)".to_string();
    }
    d.to_markdown(d.len())
}

pub fn render_source_prompt(features: &Schema, few_shot: &Dataset) -> Prompt {
    let mut t = String::from("You are an expert data analyst. Use the information below.\n\n");
    section(
        &mut t,
        "Task Description:",
        "Find the \"source nodes\" of a dependency graph over this dataset's features. \
         A source node is a root feature: nothing else in the dataset determines it.",
    );
    section(&mut t, "All Feature Descriptions:", &feature_list(features));
    section(&mut t, "Example Data:", &table(few_shot));
    section(
        &mut t,
        "Your Task is to Identify the Source Nodes:",
        "- Look only at the feature descriptions and the example rows.\n\
         - Pick every feature that is most plausibly a source node, i.e. a basic attribute \
           that is not an effect of any other feature.\n\
         - Use the feature names exactly as listed.",
    );
    section(
        &mut t,
        "Output Format:",
        "Return a JSON array of feature names and nothing else, for example: [\"feature_a\", \"feature_b\"]",
    );
    Prompt {
        kind: PromptKind::Source,
        subject: None,
        text: t.trim_end().to_string(),
    }
}

pub fn render_generate_prompt(
    subject: &str,
    g: &DependencyGraph,
    scores: &AssociationVector,
    few_shot: &Dataset,
) -> Prompt {
    let names: Vec<&str> = few_shot.schema().names().collect();
    let mut t = String::from("You are an expert data analyst growing a dependency graph. Use the information below.\n\n");
    section(
        &mut t,
        "Task Description:",
        &format!(
            "Propose the direct successors (effects) of `{subject}`, chosen from the available \
             features. Justify every proposed dependency with a short rationale grounded in evidence."
        ),
    );
    section(&mut t, "Current Graph State:", &graph_text(g));
    section(&mut t, "All Candidate Features:", &feature_list(few_shot.schema()));
    section(&mut t, "Statistical Evidence (Association Scores):", &score_text(scores));
    section(&mut t, "Example Data:", &table(few_shot));
    section(
        &mut t,
        "Your Task is to Propose and Justify New Links:",
        &format!(
            "- Focus on the feature `{subject}`.\n\
             - The Statistical Evidence gives how strongly `{subject}` is associated with each of: {}.\n\
             - Using the scores, the example rows and the current graph, decide which features are \
               most likely direct effects of `{subject}`.\n\
             - Every proposed dependency needs a concise rationale explaining why it holds \
               (e.g. \"Longer schooling usually comes before, and raises, income\").\n\
             - Never propose a link that creates an obvious logical contradiction with the \
               existing graph structure.\n\
             - Propose nothing if `{subject}` has no plausible direct effects.",
            names.join(", ")
        ),
    );
    section(
        &mut t,
        "Output Format:",
        "Return a JSON array and nothing else, one object per proposed edge:\n\
         [{\"successor\": \"<feature name>\", \"rationale\": \"<why>\"}]\n\
         Return [] when there are no successors.",
    );
    Prompt {
        kind: PromptKind::Generate,
        subject: Some(subject.to_string()),
        text: t.trim_end().to_string(),
    }
}

pub fn render_resolve_prompt(c: &Cycle) -> Result<Prompt, LlmError> {
    if c.edges.len() < 2 {
        return Err(LlmError::DegenerateCycle(c.edges.len()));
    }
    let mut cycle = String::new();
    for (i, e) in c.edges.iter().enumerate() {
        if i > 0 {
            cycle.push('\n');
        }
        let _ = writeln!(cycle, "- {} -> {}\nRational: {}", e.from, e.to, e.rationale);
    }
    let mut t = String::from(
        "You are a logical reasoning expert. Your job is to resolve the contradiction \
         that a cycle creates in a dependency graph. Use the information below.\n\n",
    );
    section(
        &mut t,
        "Task Description:",
        "Read every dependency in the cycle together with its rationale. Choose the one \
         dependency whose rationale is weakest or least believable; removing it breaks the cycle.",
    );
    section(&mut t, "Conflicting Cycle with Rationales:", &cycle);
    section(
        &mut t,
        "Your Task is to Identify the Weakest Link:",
        "- The dependencies above form a cycle, which is a logical contradiction.\n\
         - Weigh the rationale given for each edge.\n\
         - The weakest link is the edge whose rationale is least plausible, least supported \
           or most likely spurious.\n\
         - Name exactly one edge from the cycle to remove.",
    );
    section(
        &mut t,
        "Output Format:",
        "Return a JSON object and nothing else: {\"from\": \"<source feature>\", \"to\": \"<target feature>\"}",
    );
    Ok(Prompt {
        kind: PromptKind::Resolve,
        subject: Some(c.label()),
        text: t.trim_end().to_string(),
    })
}

fn table_contract(columns: &[String], batch: usize, conditioned: bool) -> String {
    let header = format!("| {} |", columns.join(" | "));
    let sep = format!("|{}", " --- |".repeat(columns.len()));
    let pairing = if conditioned {
        "\nRow k of your table must correspond to row k of the conditioning table."
    } else {
        ""
    };
    format!(
        "Return a markdown table with exactly {batch} rows and exactly these columns, \
         header first:\n{header}\n{sep}{pairing}\nDo not add other columns, commentary or row numbers."
    )
}

/// Layer generation prompt. `conditioning` holds one row per requested output
/// row (it may have zero columns for the first layer).
pub fn render_data_gen_prompt(
    conditioning: &Dataset,
    gi: &DependencyGraph,
    layer: &[String],
    few_shot_slice: &Dataset,
    batch: usize,
) -> Prompt {
    let conditioned = !conditioning.schema().is_empty();
    let mut t = String::from(
        "You are a helpful AI assistant that generates realistic tabular data following structural dependencies.\n\n",
    );
    section(
        &mut t,
        "Task Description:",
        &format!(
            "Produce a realistic synthetic table whose columns are exactly: {}. The generated values \
             must be conditioned on the given values of their parent features.",
            layer.join(", ")
        ),
    );
    section(
        &mut t,
        "Conditioning Data (Current Results):",
        if conditioned {
            conditioning.to_markdown(conditioning.len())
        } else {
            "(no parent values; these features have no parents)".to_string()
        }
        .as_str(),
    );
    section(&mut t, "Relevant Dependency Structure:", &graph_text(gi));
    section(&mut t, "Example Data:", &table(few_shot_slice));
    section(
        &mut t,
        "Your Task is to Generate the Synthetic Data:",
        &format!(
            "- Generate realistic values for: {}.\n\
             - Each generated row must be conditioned on the matching row of the Conditioning Data; \
               those columns are the parent features of what you generate.\n\
             - The Relevant Dependency Structure shows how the parents relate to the target features.\n\
             - Take formats, ranges and typical values from the Example Data.\n\
             - Keep values plausible and consistent with the dependencies.\n\
             - Exactly {batch} rows are required.",
            layer.join(", ")
        ),
    );
    section(&mut t, "Output Format:", &table_contract(layer, batch, conditioned));
    Prompt {
        kind: PromptKind::DataGen,
        subject: Some(layer.join(",")),
        text: t.trim_end().to_string(),
    }
}

/// Isolated-feature prompt: like the layer prompt but without a structure
/// section.
pub fn render_data_gen_iso_prompt(
    graph_values: &Dataset,
    iso: &[String],
    few_shot_iso: &Dataset,
    batch: usize,
) -> Prompt {
    let conditioned = !graph_values.schema().is_empty();
    let mut t = String::from(
        "You are a helpful AI assistant that completes tabular records by generating the remaining features.\n\n",
    );
    section(
        &mut t,
        "Task Description:",
        "The structurally dependent features of each record are already generated. Generate \
         plausible values for the remaining isolated features so that they stay statistically \
         consistent with those core features.",
    );
    section(
        &mut t,
        "Conditioning Data (Generated Graph-Based Features):",
        if conditioned {
            graph_values.to_markdown(graph_values.len())
        } else {
            "(none)".to_string()
        }
        .as_str(),
    );
    section(&mut t, "Features to Generate (Isolated Features):", &iso.join(", "));
    section(&mut t, "Example Data:", &table(few_shot_iso));
    section(
        &mut t,
        "Your Task is to Generate the Independent Values:",
        &format!(
            "- Generate realistic values for: {}.\n\
             - Condition each row on the matching row of the Conditioning Data.\n\
             - These features have no direct parent-child links in the learned graph, yet each \
               value should stay plausible in the context of the whole record.\n\
             - Take formats and typical values from the Example Data.\n\
             - Exactly {batch} rows are required.",
            iso.join(", ")
        ),
    );
    section(&mut t, "Output Format:", &table_contract(iso, batch, conditioned));
    Prompt {
        kind: PromptKind::DataGenIso,
        subject: Some(iso.join(",")),
        text: t.trim_end().to_string(),
    }
}
