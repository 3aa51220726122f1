use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use structsynth::discovery::DiscoveryConfig;
use structsynth::evaluation::EvalConfig;
use structsynth::llm::HttpConfig;
use structsynth::synthesis::SynthConfig;
use structsynth::Task;

use crate::error::CliError;

fn default_seed() -> u64 {
    42
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_test_fraction() -> f64 {
    0.2
}

/// Either a ready train/test pair or one raw CSV that is split at load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub raw: Option<PathBuf>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
    #[serde(default)]
    pub http: Option<HttpConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    /// Schema hint JSON; when absent the schema is inferred from the CSV.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub backend: BackendConfig,
    /// Fixed graph used by `pipeline` instead of running discovery.
    #[serde(default)]
    pub graph: Option<PathBuf>,
    #[serde(default)]
    pub discovery: DiscoveryConfig,
    #[serde(default)]
    pub synthesis: SynthConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
    /// Overrides the seed of every stage.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_json(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.rebase(base);
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_json(&text, base)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.data.train, &mut self.data.test, &mut self.data.raw, &mut self.schema]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let Some(p) = self.backend.mock_script.as_mut() {
            fix(p);
        }
        if let Some(p) = self.graph.as_mut() {
            fix(p);
        }
        fix(&mut self.out_dir);
    }

    /// Pushes the top-level seed into every stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.discovery.seed = seed;
        self.synthesis.seed = seed;
        self.evaluation.seed = seed;
    }

    pub fn set_mock_script(&mut self, path: PathBuf) {
        self.backend.mock_script = Some(path);
        self.backend.http = None;
    }

    /// Checks the data and backend blocks and that every named path exists.
    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.data.train, &self.data.test, &self.data.raw) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => {}
            _ => {
                return Err(CliError::Config(
                    "data needs either `train` and `test`, or `raw` alone".into(),
                ))
            }
        }
        if self.data.raw.is_some() && !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "test_fraction must lie strictly between 0 and 1, got {}",
                self.data.test_fraction
            )));
        }
        match (&self.backend.mock_script, &self.backend.http) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return Err(CliError::Config(
                    "backend needs exactly one of `mock_script` or `http`".into(),
                ))
            }
        }
        let paths = [
            &self.data.train,
            &self.data.test,
            &self.data.raw,
            &self.schema,
            &self.backend.mock_script,
            &self.graph,
        ];
        for p in paths.into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::Config(format!("path not found: {}", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> PipelineConfig {
        PipelineConfig::from_json(text, Path::new("/base")).unwrap()
    }

    #[test]
    fn relative_paths_resolve_against_the_config_directory() {
        let c = parse(r#"{"data":{"train":"t.csv","test":"/abs/x.csv"},"backend":{"mock_script":"m.json"}}"#);
        assert_eq!(c.data.train.unwrap(), PathBuf::from("/base/t.csv"));
        assert_eq!(c.data.test.unwrap(), PathBuf::from("/abs/x.csv"));
        assert_eq!(c.backend.mock_script.unwrap(), PathBuf::from("/base/m.json"));
        assert_eq!(c.out_dir, PathBuf::from("/base/out"));
    }

    #[test]
    fn defaults_fill_missing_blocks() {
        let c = parse(r#"{"data":{"raw":"r.csv"},"backend":{"mock_script":"m.json"}}"#);
        assert_eq!(c.seed, 42);
        assert_eq!(c.synthesis, SynthConfig::default());
        assert_eq!(c.data.test_fraction, 0.2);
    }

    #[test]
    fn set_seed_reaches_every_stage() {
        let mut c = parse(r#"{"data":{"raw":"r.csv"},"backend":{"mock_script":"m.json"}}"#);
        c.set_seed(7);
        assert_eq!((c.discovery.seed, c.synthesis.seed, c.evaluation.seed), (7, 7, 7));
    }

    #[test]
    fn two_backends_are_rejected() {
        let c = parse(r#"{"data":{"raw":"/"},"backend":{"mock_script":"/","http":{}}}"#);
        assert!(matches!(c.validate(), Err(CliError::Config(m)) if m.contains("exactly one")));
    }

    #[test]
    fn mixed_data_sources_are_rejected() {
        let c = parse(r#"{"data":{"raw":"/","train":"/"},"backend":{"mock_script":"/"}}"#);
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn missing_path_is_named() {
        let c = parse(r#"{"data":{"raw":"nope.csv"},"backend":{"mock_script":"/"}}"#);
        assert!(matches!(c.validate(), Err(CliError::Config(m)) if m.contains("/base/nope.csv")));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(PipelineConfig::from_json(r#"{"data":{"raw":"a"},"bogus":1}"#, Path::new("")).is_err());
    }
}
