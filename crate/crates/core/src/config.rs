//! TOML run configuration.
//!
//! Relative paths resolve against the config file's directory. Secrets never
//! live in the file: remote endpoints name the environment variable holding
//! their token, and `ADVRL_<ROLE>_URL` / `ADVRL_<ROLE>_MODEL` (roles `TEACHER`,
//! `STUDENT`, `ORACLE`) override endpoint fields at load time.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::EndpointConfig;
use crate::eval::EvalConfig;
use crate::grpo::GrpoConfig;
use crate::judge::JudgeConfig;
use crate::policy::{Policy, PolicyError, RemotePolicy, SamplingConfig, Script, ScriptedPolicy, ToyPolicyParams};
use crate::reward::{Oracle, OracleError, RemoteOracle, StubOracle};
use crate::training::{Role, SimilarityScope, TrainingSchedule};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path} is invalid: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Scripted {
        #[serde(default)]
        script: Script,
    },
    Toy {
        vocabulary: Vec<String>,
        eos: String,
        /// JSON file with saved parameters; uniform when absent.
        #[serde(default)]
        params: Option<PathBuf>,
    },
    Remote {
        endpoint: EndpointConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleConfig {
    pub policy: BackendConfig,
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub grpo: GrpoConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    Stub(StubOracle),
    Remote {
        endpoint: EndpointConfig,
    },
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig::Stub(StubOracle::default())
    }
}

fn default_teacher() -> RoleConfig {
    RoleConfig { policy: BackendConfig::Scripted { script: Script::default() }, sampling: SamplingConfig::teacher(), grpo: GrpoConfig::default() }
}

fn default_student() -> RoleConfig {
    RoleConfig { policy: BackendConfig::Scripted { script: Script::default() }, sampling: SamplingConfig::student(), grpo: GrpoConfig::default() }
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Required by `train` only.
    #[serde(default)]
    pub schedule: Option<TrainingSchedule>,
    #[serde(default = "default_teacher")]
    pub teacher: RoleConfig,
    #[serde(default = "default_student")]
    pub student: RoleConfig,
    #[serde(default)]
    pub judge: JudgeConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub similarity_scope: SimilarityScope,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Tests materialized per problem when building a corpus.
    #[serde(default = "default_test_count")]
    pub test_count: usize,
}

fn default_test_count() -> usize {
    crate::corpus::DEFAULT_TEST_COUNT
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.into(), message: e.to_string() })?;
        let base = origin.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.apply_env(|k| std::env::var(k).ok());
        if let Some(s) = cfg.schedule.as_mut() {
            s.seed = cfg.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text, path)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.corpus);
        join(&mut self.output);
        for role in [&mut self.teacher, &mut self.student] {
            if let BackendConfig::Toy { params: Some(p), .. } = &mut role.policy {
                join(p);
            }
        }
        if let Some(root) = self.judge.sandbox_root.as_mut() {
            join(root);
        }
    }

    fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        let patch = |role: &str, ep: &mut EndpointConfig| {
            if let Some(url) = get(&format!("ADVRL_{role}_URL")) {
                ep.url = url;
            }
            if let Some(model) = get(&format!("ADVRL_{role}_MODEL")) {
                ep.model = model;
            }
        };
        if let BackendConfig::Remote { endpoint } = &mut self.teacher.policy {
            patch("TEACHER", endpoint);
        }
        if let BackendConfig::Remote { endpoint } = &mut self.student.policy {
            patch("STUDENT", endpoint);
        }
        if let OracleConfig::Remote { endpoint } = &mut self.oracle {
            patch("ORACLE", endpoint);
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Some(s) = self.schedule.as_mut() {
            s.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        if let Some(s) = &self.schedule {
            s.validate().map_err(|e| invalid(e.to_string()))?;
        }
        for (name, role) in [("teacher", &self.teacher), ("student", &self.student)] {
            role.sampling.validate().map_err(|e| invalid(format!("{name}.sampling: {e}")))?;
            if !(role.grpo.epsilon > 0.0 && role.grpo.epsilon < 1.0) {
                return Err(invalid(format!("{name}.grpo.epsilon must lie in (0, 1)")));
            }
            if !(role.grpo.learning_rate >= 0.0 && role.grpo.learning_rate.is_finite()) {
                return Err(invalid(format!("{name}.grpo.learning_rate must be non-negative")));
            }
            if let BackendConfig::Toy { vocabulary, eos, params: None } = &role.policy {
                ToyPolicyParams::uniform(vocabulary.clone(), eos).map_err(|e| invalid(format!("{name}.policy: {e}")))?;
            }
        }
        self.judge.limits.validate().map_err(|e| invalid(format!("judge.limits: {e}")))?;
        if self.judge.compiler.is_empty() {
            return Err(invalid("judge.compiler is empty".into()));
        }
        if self.test_count == 0 {
            return Err(invalid("test_count must be positive".into()));
        }
        self.eval.validate().map_err(|e| invalid(format!("eval: {e}")))?;
        Ok(())
    }

    /// The schedule, which `train` requires.
    pub fn require_schedule(&self) -> Result<&TrainingSchedule, ConfigError> {
        self.schedule
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [schedule] section with required key `iterations`".into()))
    }
}

pub fn build_policy(cfg: &BackendConfig) -> Result<Policy, PolicyError> {
    Ok(match cfg {
        BackendConfig::Scripted { script } => Policy::Scripted(ScriptedPolicy::new(script.clone())),
        BackendConfig::Toy { vocabulary, eos, params: None } => Policy::Toy(ToyPolicyParams::uniform(vocabulary.clone(), eos)?),
        BackendConfig::Toy { vocabulary, params: Some(path), .. } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| PolicyError::InvalidParams(format!("{}: {e}", path.display())))?;
            let params: ToyPolicyParams = serde_json::from_str(&text)
                .map_err(|e| PolicyError::InvalidParams(format!("{}: {e}", path.display())))?;
            params.validate()?;
            if &params.vocabulary != vocabulary {
                return Err(PolicyError::InvalidParams("saved parameters use a different vocabulary".into()));
            }
            Policy::Toy(params)
        }
        BackendConfig::Remote { endpoint } => Policy::Remote(RemotePolicy::new(endpoint.clone())?),
    })
}

pub fn build_role(cfg: &RoleConfig) -> Result<Role, PolicyError> {
    Ok(Role::new(build_policy(&cfg.policy)?, cfg.sampling, cfg.grpo))
}

pub fn build_oracle(cfg: &OracleConfig) -> Result<Arc<dyn Oracle>, OracleError> {
    Ok(match cfg {
        OracleConfig::Stub(stub) => Arc::new(stub.clone()),
        OracleConfig::Remote { endpoint } => Arc::new(RemoteOracle::new(endpoint.clone())?),
    })
}
