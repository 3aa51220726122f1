use structsynth::dataset::DatasetError;
use structsynth::depgraph::GraphError;
use structsynth::discovery::DiscoveryError;
use structsynth::evaluation::EvalError;
use structsynth::llm::LlmError;
use structsynth::synthesis::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Validation(_) => 4,
            CliError::Stage { source, .. } => source.exit_code(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> CliError {
        CliError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> CliError {
        CliError::Config(format!("cannot write {}: {e}", path.display()))
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Config(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DiscoveryError> for CliError {
    fn from(e: DiscoveryError) -> Self {
        match e {
            DiscoveryError::Llm(e) => e.into(),
            DiscoveryError::Dataset(e) => e.into(),
            DiscoveryError::Graph(e) => e.into(),
            DiscoveryError::Config(_) => CliError::Config(e.to_string()),
            DiscoveryError::EmptySourceSet | DiscoveryError::ResolutionExhausted(_) => {
                CliError::Backend(e.to_string())
            }
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Llm(e) => e.into(),
            SynthError::Dataset(e) => e.into(),
            SynthError::Config(_) => CliError::Config(e.to_string()),
            SynthError::GenerationStalled(_) => CliError::Backend(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Dataset(e) => e.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        assert_eq!(CliError::from(LlmError::Truncated).exit_code(), 3);
        assert_eq!(CliError::from(LlmError::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(DatasetError::SchemaMismatch("c".into())).exit_code(), 4);
        assert_eq!(CliError::from(GraphError::CyclicInput).exit_code(), 4);
        assert_eq!(CliError::from(DiscoveryError::EmptySourceSet).exit_code(), 3);
    }

    #[test]
    fn stage_wrapper_keeps_the_inner_code_and_names_the_stage() {
        let e = CliError::Validation("bad".into()).in_stage("evaluate");
        assert_eq!(e.exit_code(), 4);
        assert!(e.to_string().contains("stage `evaluate`"));
    }
}
