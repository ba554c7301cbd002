//! Service configuration, read from a TOML file.
//!
//! ```toml
//! listen_address = "127.0.0.1:8080"
//! state_path = "model/state.json"
//! n_topics = 20
//! min_cluster_size = 15
//! cors_allowed_origins = ["http://localhost:5173"]
//! allow_mutations_via_chat = true
//!
//! [embedding]
//! kind = "local_deterministic"   # or "remote"
//! local_dim = 512
//!
//! [llm]
//! kind = "mock"                  # or "remote_chat"
//! mock_script_path = "mock.json"
//!
//! [reducer]
//! kind = "pca_like"              # or "umap"
//! target_dim = 5
//! ```
//!
//! API keys never appear here; `api_key_env_var` names the environment
//! variable that holds them.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use topiclens_core::corpus::{
    default_stopwords, load_stopwords, TokenizerConfig, DEFAULT_MIN_TOKEN_LEN,
};
use topiclens_core::embedding::EmbeddingProviderConfig;
use topiclens_core::llm::LlmProviderConfig;
use topiclens_core::pipeline::FitConfig;
use topiclens_core::reduction::ReducerConfig;
use topiclens_core::topicstore::TopicConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen_address: String,
    /// The state manifest; binary matrices live next to it.
    pub state_path: PathBuf,
    pub n_topics: Option<usize>,
    /// `None` uses `max(15, documents / 500)`.
    pub min_cluster_size: Option<usize>,
    /// Origins allowed by CORS; `"*"` allows any.
    pub cors_allowed_origins: Vec<String>,
    pub allow_mutations_via_chat: bool,
    pub min_token_len: usize,
    /// One stopword per line; the built-in English list when absent.
    pub stopwords_path: Option<PathBuf>,
    pub embedding: EmbeddingProviderConfig,
    pub llm: LlmProviderConfig,
    pub reducer: ReducerConfig,
    pub topics: TopicConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen_address: "127.0.0.1:8080".into(),
            state_path: PathBuf::from("topiclens-state/state.json"),
            n_topics: None,
            min_cluster_size: None,
            cors_allowed_origins: Vec::new(),
            allow_mutations_via_chat: true,
            min_token_len: DEFAULT_MIN_TOKEN_LEN,
            stopwords_path: None,
            embedding: EmbeddingProviderConfig::default(),
            llm: LlmProviderConfig::default(),
            reducer: ReducerConfig::default(),
            topics: TopicConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        cfg.resolve_relative_to(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Relative paths in a config file are relative to that file.
    fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.state_path);
        if let Some(p) = self.stopwords_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.embedding.cache_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.llm.mock_script_path.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.listen_address
            .parse::<SocketAddr>()
            .map_err(|e| ConfigError::Invalid(format!("listen_address: {e}")))?;
        if self.n_topics == Some(0) {
            return Err(ConfigError::Invalid("n_topics must be >= 1".into()));
        }
        if self.min_cluster_size.is_some_and(|m| m < 2) {
            return Err(ConfigError::Invalid("min_cluster_size must be >= 2".into()));
        }
        if self.min_token_len == 0 {
            return Err(ConfigError::Invalid("min_token_len must be >= 1".into()));
        }
        if self.state_path.as_os_str().is_empty() || self.state_path.file_name().is_none() {
            return Err(ConfigError::Invalid("state_path must name a file".into()));
        }
        self.embedding
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("embedding: {e}")))?;
        self.llm
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("llm: {e}")))?;
        Ok(())
    }

    /// Creates the state directory and checks that it accepts files.
    pub fn ensure_state_dir(&self) -> Result<(), ConfigError> {
        let dir = self
            .state_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let io = |source| ConfigError::Io {
            path: dir.to_path_buf(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let probe = dir.join(".topiclens-write-probe");
        std::fs::write(&probe, b"").map_err(io)?;
        std::fs::remove_file(&probe).map_err(io)?;
        Ok(())
    }

    pub fn tokenizer(&self) -> Result<TokenizerConfig, ConfigError> {
        let stopwords = match &self.stopwords_path {
            Some(p) => load_stopwords(p).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => default_stopwords(),
        };
        Ok(TokenizerConfig::new(self.min_token_len, stopwords))
    }

    pub fn fit_config(&self) -> Result<FitConfig, ConfigError> {
        Ok(FitConfig {
            tokenizer: self.tokenizer()?,
            reducer: self.reducer.clone(),
            n_topics: self.n_topics,
            min_cluster_size: self.min_cluster_size,
            topics: self.topics.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ServiceConfig::default();
        assert_eq!(ServiceConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ServiceConfig::from_toml("n_topics = 20\n[reducer]\ntarget_dim = 8\n").unwrap();
        assert_eq!(cfg.n_topics, Some(20));
        assert_eq!(cfg.reducer.target_dim, 8);
        assert_eq!(cfg.listen_address, "127.0.0.1:8080");
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "n_topics = 0",
            "min_cluster_size = 1",
            "listen_address = \"nowhere\"",
            "unknown_key = 1",
            "[llm]\nkind = \"mock\"",
            "state_path = \"\"",
        ] {
            assert!(ServiceConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("svc.toml");
        std::fs::write(
            &path,
            "state_path = \"m/state.json\"\n[llm]\nkind = \"mock\"\nmock_script_path = \"mock.json\"\n",
        )
        .unwrap();
        let cfg = ServiceConfig::from_file(&path).unwrap();
        assert_eq!(cfg.state_path, dir.path().join("m/state.json"));
        assert_eq!(cfg.llm.mock_script_path, Some(dir.path().join("mock.json")));
        cfg.ensure_state_dir().unwrap();
        assert!(dir.path().join("m").is_dir());
    }
}
