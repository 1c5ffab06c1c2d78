use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::extract::{SourceDescriptor, SourceKind};
use crate::vault::DEFAULT_KEY_ENV;

use super::CliError;

/// Pipeline configuration. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_key_env")]
    pub key_env: String,
    pub policy_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alias_path: Option<String>,
    pub output_dir: String,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub sources: Vec<SourceDescriptor>,
}

fn default_key_env() -> String {
    DEFAULT_KEY_ENV.to_string()
}

fn default_parallelism() -> usize {
    1
}

impl PipelineConfig {
    pub fn new(sources: Vec<SourceDescriptor>, policy_path: &str, output_dir: &str) -> Self {
        Self {
            key_env: default_key_env(),
            policy_path: policy_path.into(),
            alias_path: None,
            output_dir: output_dir.into(),
            parallelism: 4,
            sources,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let c: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if c.parallelism < 1 {
            return Err(CliError::Config("parallelism must be at least 1".into()));
        }
        if c.key_env.is_empty() || c.output_dir.is_empty() {
            return Err(CliError::Config("key_env and output_dir must be non-empty".into()));
        }
        Ok(c)
    }

    /// Read a config file and make its paths absolute.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(Self::from_toml(&text)?.rebased(base))
    }

    pub fn rebased(mut self, base: &Path) -> Self {
        let join = |p: &str| base.join(p).to_string_lossy().into_owned();
        self.policy_path = join(&self.policy_path);
        self.alias_path = self.alias_path.as_deref().map(join);
        self.output_dir = join(&self.output_dir);
        for s in &mut self.sources {
            if matches!(s.kind, SourceKind::GitRepo | SourceKind::MarksFile | SourceKind::FixtureDir) {
                s.locator = join(&s.locator);
            }
        }
        self
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.output_dir)
    }
}
