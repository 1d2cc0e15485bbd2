//! Equivalence oracle: a remote chat endpoint or a deterministic stub.
//!
//! Replies follow a verdict-token protocol: the first word is `EQUIVALENT`
//! or `NOT_EQUIVALENT`, the rest is a free-text reason.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chat::{ChatClient, ChatError, ChatRequest, EndpointConfig};
use crate::format::fenced_blocks;

pub const EQUIVALENT_TOKEN: &str = "EQUIVALENT";
pub const NOT_EQUIVALENT_TOKEN: &str = "NOT_EQUIVALENT";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
    #[error("oracle reply is malformed: {0}")]
    MalformedReply(String),
}

impl From<ChatError> for OracleError {
    fn from(e: ChatError) -> Self {
        match e {
            ChatError::Malformed(m) => OracleError::MalformedReply(m),
            other => OracleError::Unavailable(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesizedSources {
    pub generator: String,
    pub reference: String,
}

/// External judgment service. Implementations must tolerate concurrent calls.
pub trait Oracle: Send + Sync {
    /// Raw reply to an equivalence query, in the verdict-token protocol.
    fn equivalence_reply(&self, kernel: &str, revision: &str) -> Result<String, OracleError>;

    /// Test generator and reference solution for a kernel problem. Sources
    /// the oracle fails to produce come back empty and fail validation later.
    fn synthesize(&self, kernel: &str) -> Result<SynthesizedSources, OracleError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceJudgment {
    pub equivalent: bool,
    pub reason: String,
}

pub fn parse_equivalence_reply(reply: &str) -> Result<EquivalenceJudgment, OracleError> {
    let trimmed = reply.trim_start();
    let (head, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
    let token = head.trim_end_matches([':', '.', ',']);
    let equivalent = match token {
        EQUIVALENT_TOKEN => true,
        NOT_EQUIVALENT_TOKEN => false,
        _ => return Err(OracleError::MalformedReply(format!("reply starts with {head:?}"))),
    };
    Ok(EquivalenceJudgment { equivalent, reason: rest.trim().to_string() })
}

/// Oracle front-end with a per-run cache keyed by a hash of both texts.
pub struct EquivalenceChecker {
    oracle: Arc<dyn Oracle>,
    cache: Mutex<HashMap<[u8; 32], EquivalenceJudgment>>,
}

impl EquivalenceChecker {
    pub fn new(oracle: Arc<dyn Oracle>) -> Self {
        Self { oracle, cache: Mutex::new(HashMap::new()) }
    }

    pub fn oracle(&self) -> &dyn Oracle {
        self.oracle.as_ref()
    }

    fn key(kernel: &str, revision: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((kernel.len() as u64).to_le_bytes());
        h.update(kernel.as_bytes());
        h.update(revision.as_bytes());
        h.finalize().into()
    }

    pub fn check(&self, kernel: &str, revision: &str) -> Result<EquivalenceJudgment, OracleError> {
        let key = Self::key(kernel, revision);
        if let Some(hit) = self.cache.lock().expect("oracle cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let judgment = parse_equivalence_reply(&self.oracle.equivalence_reply(kernel, revision)?)?;
        Ok(self.cache.lock().expect("oracle cache poisoned").entry(key).or_insert(judgment).clone())
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().expect("oracle cache poisoned").len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubRule {
    /// Matches every kernel when absent.
    #[serde(default)]
    pub kernel_contains: Option<String>,
    pub revision_contains: String,
    /// Raw reply, returned verbatim.
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubSynthesis {
    pub kernel_contains: String,
    pub generator: String,
    pub reference: String,
}

/// Deterministic oracle for tests and desk-scale runs.
///
/// Identical texts are always equivalent. Otherwise the first matching rule
/// answers, then `default_reply`. `fail_after_calls` injects an outage after
/// that many successful calls.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubOracle {
    #[serde(default)]
    pub rules: Vec<StubRule>,
    #[serde(default = "default_reply")]
    pub default_reply: String,
    #[serde(default)]
    pub synthesis: Vec<StubSynthesis>,
    #[serde(default)]
    pub fail_after_calls: Option<u64>,
    #[serde(skip)]
    calls: AtomicU64,
}

fn default_reply() -> String {
    format!("{NOT_EQUIVALENT_TOKEN} no stub rule matched this revision")
}

impl Default for StubOracle {
    fn default() -> Self {
        Self {
            rules: Vec::new(),
            default_reply: default_reply(),
            synthesis: Vec::new(),
            fail_after_calls: None,
            calls: AtomicU64::new(0),
        }
    }
}

impl Clone for StubOracle {
    fn clone(&self) -> Self {
        Self {
            rules: self.rules.clone(),
            default_reply: self.default_reply.clone(),
            synthesis: self.synthesis.clone(),
            fail_after_calls: self.fail_after_calls,
            calls: AtomicU64::new(0),
        }
    }
}

impl StubOracle {
    /// A stub that judges every revision equivalent.
    pub fn permissive() -> Self {
        Self { default_reply: format!("{EQUIVALENT_TOKEN} stub accepts all revisions"), ..Self::default() }
    }

    pub fn with_rule(mut self, kernel_contains: Option<&str>, revision_contains: &str, reply: &str) -> Self {
        self.rules.push(StubRule {
            kernel_contains: kernel_contains.map(str::to_string),
            revision_contains: revision_contains.to_string(),
            reply: reply.to_string(),
        });
        self
    }

    pub fn with_synthesis(mut self, kernel_contains: &str, generator: &str, reference: &str) -> Self {
        self.synthesis.push(StubSynthesis {
            kernel_contains: kernel_contains.to_string(),
            generator: generator.to_string(),
            reference: reference.to_string(),
        });
        self
    }

    pub fn failing_after(mut self, calls: u64) -> Self {
        self.fail_after_calls = Some(calls);
        self
    }

    fn tick(&self) -> Result<(), OracleError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        match self.fail_after_calls {
            Some(limit) if n >= limit => Err(OracleError::Unavailable("stub oracle outage".into())),
            _ => Ok(()),
        }
    }
}

impl Oracle for StubOracle {
    fn equivalence_reply(&self, kernel: &str, revision: &str) -> Result<String, OracleError> {
        self.tick()?;
        if kernel.trim() == revision.trim() {
            return Ok(format!("{EQUIVALENT_TOKEN} the revision is identical to the kernel"));
        }
        let rule = self.rules.iter().find(|r| {
            r.kernel_contains.as_deref().map_or(true, |k| kernel.contains(k)) && revision.contains(&r.revision_contains)
        });
        Ok(rule.map_or_else(|| self.default_reply.clone(), |r| r.reply.clone()))
    }

    fn synthesize(&self, kernel: &str) -> Result<SynthesizedSources, OracleError> {
        self.tick()?;
        Ok(self
            .synthesis
            .iter()
            .find(|s| kernel.contains(&s.kernel_contains))
            .map(|s| SynthesizedSources { generator: s.generator.clone(), reference: s.reference.clone() })
            .unwrap_or_default())
    }
}

const EQUIVALENCE_PROMPT: &str = "Decide whether two programming problem statements are computationally \
equivalent: the same inputs are valid for both and every input requires the same output.

[Original problem]
{kernel}

[Rewritten problem]
{revision}

Answer with EQUIVALENT or NOT_EQUIVALENT as the very first word, then give a short reason.";

const SYNTHESIS_PROMPT: &str = "For the programming problem below, write two C++17 programs.
1. A test-case generator: it takes an integer seed as its only command-line argument and prints one \
random input that satisfies every constraint, covering edge cases for some seeds.
2. A correct reference solution that reads the input from standard input and prints the answer.
Put each program in its own fenced code block, generator first.

[Problem]
{kernel}";

/// Oracle backed by a chat-completion endpoint.
pub struct RemoteOracle {
    client: ChatClient,
}

impl RemoteOracle {
    pub fn new(config: EndpointConfig) -> Result<Self, OracleError> {
        Ok(Self { client: ChatClient::new(config)? })
    }

    fn ask(&self, prompt: &str) -> Result<String, OracleError> {
        let choices = self.client.complete(&ChatRequest { prompt, temperature: 0.0, max_tokens: 4096, n: 1, logprobs: false })?;
        choices
            .into_iter()
            .next()
            .map(|c| c.content)
            .ok_or_else(|| OracleError::MalformedReply("no choices in reply".into()))
    }
}

impl Oracle for RemoteOracle {
    fn equivalence_reply(&self, kernel: &str, revision: &str) -> Result<String, OracleError> {
        self.ask(&EQUIVALENCE_PROMPT.replace("{kernel}", kernel).replace("{revision}", revision))
    }

    fn synthesize(&self, kernel: &str) -> Result<SynthesizedSources, OracleError> {
        let reply = self.ask(&SYNTHESIS_PROMPT.replace("{kernel}", kernel))?;
        let mut blocks = fenced_blocks(&reply).into_iter();
        Ok(SynthesizedSources { generator: blocks.next().unwrap_or_default(), reference: blocks.next().unwrap_or_default() })
    }
}
