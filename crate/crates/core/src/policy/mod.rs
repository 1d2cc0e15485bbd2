//! Policy backends behind one handle: scripted (deterministic fixtures),
//! toy (bigram softmax trained by the GRPO core) and remote (chat endpoint).

mod remote;
mod scripted;
mod toy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::ChatError;
use crate::grpo::{self, GroupSample, GrpoConfig, GrpoError};

pub use remote::RemotePolicy;
pub use scripted::{Pick, Script, ScriptRule, ScriptStage, ScriptedPolicy};
pub use toy::{toy_logprobs, ToyPolicyParams, MAX_VOCABULARY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("prompt exceeds the model context: {0}")]
    ContextOverflow(String),
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("invalid policy parameters: {0}")]
    InvalidParams(String),
    #[error("group size must be at least 1")]
    EmptyGroup,
    #[error(transparent)]
    Grpo(#[from] GrpoError),
}

impl From<ChatError> for PolicyError {
    fn from(e: ChatError) -> Self {
        match e {
            ChatError::Auth(m) => PolicyError::Auth(m),
            ChatError::RateLimited { attempts } => PolicyError::RateLimited { attempts },
            ChatError::ContextOverflow(m) => PolicyError::ContextOverflow(m),
            ChatError::Unavailable(m) | ChatError::Malformed(m) => PolicyError::BackendUnavailable(m),
        }
    }
}

/// One sampled output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub tokens: Vec<String>,
    pub text: String,
    /// Per-token log-probabilities under the generating policy, when the
    /// backend can report them.
    pub logprobs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub max_completion_length: usize,
    pub group_size: usize,
}

impl SamplingConfig {
    pub fn teacher() -> Self {
        Self { temperature: 0.7, max_completion_length: 2000, group_size: 21 }
    }

    pub fn student() -> Self {
        Self { temperature: 0.7, max_completion_length: 1700, group_size: 24 }
    }

    pub fn with_group_size(self, group_size: usize) -> Self {
        Self { group_size, ..self }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.max_completion_length == 0 {
            return Err("max_completion_length must be positive".into());
        }
        if self.group_size == 0 {
            return Err("group_size must be positive".into());
        }
        Ok(())
    }
}

/// Serializable policy state for checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum PolicyState {
    Scripted { version: u64 },
    Toy { params: ToyPolicyParams },
    Remote { skipped_updates: u64 },
}

/// What an update did to the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    /// The backend cannot be updated in-process, or ratios were unavailable.
    Skipped,
}

pub enum Policy {
    Scripted(ScriptedPolicy),
    Toy(ToyPolicyParams),
    Remote(RemotePolicy),
}

impl Policy {
    /// Samples exactly `cfg.group_size` completions. Scripted and toy
    /// backends are deterministic in `(prompt, cfg, seed)`.
    pub fn sample_group(
        &self,
        prompt: &str,
        cfg: &SamplingConfig,
        seed: u64,
    ) -> Result<Vec<Completion>, PolicyError> {
        if cfg.group_size == 0 {
            return Err(PolicyError::EmptyGroup);
        }
        match self {
            Policy::Scripted(p) => Ok(p.sample_group(prompt, cfg, seed)),
            Policy::Toy(params) => Ok((0..cfg.group_size)
                .map(|i| {
                    let mut rng = crate::seed::rng(seed, "toy-sample", &[i as u64]);
                    params.sample(cfg.temperature, cfg.max_completion_length, &mut rng)
                })
                .collect()),
            Policy::Remote(p) => p.sample_group(prompt, cfg),
        }
    }

    /// One optimizer step on `groups`. `temperature` is the sampling
    /// temperature the old log-probabilities were computed at.
    pub fn apply_update(
        &mut self,
        groups: &[GroupSample],
        cfg: &GrpoConfig,
        temperature: f64,
    ) -> Result<UpdateOutcome, PolicyError> {
        match self {
            Policy::Scripted(p) => {
                p.advance();
                Ok(UpdateOutcome::Applied)
            }
            Policy::Toy(params) => {
                if groups.is_empty() {
                    return Ok(UpdateOutcome::Skipped);
                }
                *params = grpo::grpo_step(params, groups, cfg, temperature)?;
                Ok(UpdateOutcome::Applied)
            }
            Policy::Remote(p) => {
                p.skipped_updates += 1;
                Ok(UpdateOutcome::Skipped)
            }
        }
    }

    pub fn state(&self) -> PolicyState {
        match self {
            Policy::Scripted(p) => PolicyState::Scripted { version: p.version() },
            Policy::Toy(params) => PolicyState::Toy { params: params.clone() },
            Policy::Remote(p) => PolicyState::Remote { skipped_updates: p.skipped_updates },
        }
    }

    pub fn restore(&mut self, state: PolicyState) -> Result<(), PolicyError> {
        match (self, state) {
            (Policy::Scripted(p), PolicyState::Scripted { version }) => p.set_version(version),
            (Policy::Toy(params), PolicyState::Toy { params: saved }) => {
                saved.validate()?;
                *params = saved;
            }
            (Policy::Remote(p), PolicyState::Remote { skipped_updates }) => p.skipped_updates = skipped_updates,
            _ => return Err(PolicyError::InvalidParams("checkpoint backend does not match the configured backend".into())),
        }
        Ok(())
    }
}

/// Splits on whitespace and keeps at most `max_len` tokens; the text is cut
/// right after the last kept token so inner whitespace is preserved.
pub(crate) fn truncate_text(text: &str, max_len: usize) -> (Vec<String>, String) {
    let mut tokens = Vec::new();
    let mut end = 0;
    for (start, token) in split_with_offsets(text) {
        if tokens.len() == max_len {
            return (tokens, text[..end].to_string());
        }
        tokens.push(token.to_string());
        end = start + token.len();
    }
    (tokens, text.to_string())
}

fn split_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_whitespace().map(move |t| (t.as_ptr() as usize - text.as_ptr() as usize, t))
}
