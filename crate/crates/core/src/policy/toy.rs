//! Bigram softmax policy over a small closed vocabulary.
//!
//! The context of a token is the token before it (or a start state for the
//! first token). Each context owns one row of logits; probabilities come from
//! a temperature-scaled softmax over that row. Generation stops after the
//! end-of-sequence token or at the length cap.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Completion, PolicyError};

pub const MAX_VOCABULARY: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicyParams {
    pub vocabulary: Vec<String>,
    /// Index into `vocabulary` of the end-of-sequence token.
    pub eos: usize,
    /// `logits[0]` is the start context, `logits[i + 1]` the context after
    /// token `i`.
    pub logits: Vec<Vec<f64>>,
}

impl ToyPolicyParams {
    /// All-zero logits, i.e. the uniform policy.
    pub fn uniform(vocabulary: Vec<String>, eos_token: &str) -> Result<Self, PolicyError> {
        let params = Self {
            eos: vocabulary
                .iter()
                .position(|t| t == eos_token)
                .ok_or_else(|| PolicyError::UnknownToken(eos_token.to_string()))?,
            logits: vec![vec![0.0; vocabulary.len()]; vocabulary.len() + 1],
            vocabulary,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let v = self.vocabulary.len();
        if v == 0 || v > MAX_VOCABULARY {
            return Err(PolicyError::InvalidParams(format!(
                "vocabulary size {v} outside 1..={MAX_VOCABULARY}"
            )));
        }
        if self.vocabulary.iter().any(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return Err(PolicyError::InvalidParams("tokens must be non-empty and whitespace-free".into()));
        }
        if self.eos >= v {
            return Err(PolicyError::InvalidParams("eos index out of range".into()));
        }
        if self.logits.len() != v + 1 || self.logits.iter().any(|row| row.len() != v) {
            return Err(PolicyError::InvalidParams("logits table shape mismatch".into()));
        }
        if self.logits.iter().flatten().any(|x| !x.is_finite()) {
            return Err(PolicyError::InvalidParams("non-finite logit".into()));
        }
        Ok(())
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn context_count(&self) -> usize {
        self.logits.len()
    }

    pub fn token_index(&self, token: &str) -> Result<usize, PolicyError> {
        self.vocabulary
            .iter()
            .position(|t| t == token)
            .ok_or_else(|| PolicyError::UnknownToken(token.to_string()))
    }

    pub fn context_of(previous: Option<usize>) -> usize {
        previous.map_or(0, |i| i + 1)
    }

    /// Temperature-scaled log-softmax of one context row.
    pub fn log_softmax(&self, context: usize, temperature: f64) -> Vec<f64> {
        let scaled: Vec<f64> = self.logits[context].iter().map(|x| x / temperature).collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scaled.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        scaled.iter().map(|x| x - log_z).collect()
    }

    pub fn probabilities(&self, context: usize, temperature: f64) -> Vec<f64> {
        self.log_softmax(context, temperature).into_iter().map(f64::exp).collect()
    }

    /// Maps tokens to indices paired with their contexts.
    pub fn encode(&self, tokens: &[String]) -> Result<Vec<(usize, usize)>, PolicyError> {
        let mut previous = None;
        tokens
            .iter()
            .map(|t| {
                let idx = self.token_index(t)?;
                let ctx = Self::context_of(previous);
                previous = Some(idx);
                Ok((ctx, idx))
            })
            .collect()
    }

    /// Joins tokens with spaces, turning the two-character escape `\n` inside
    /// tokens into a newline. The end-of-sequence token is not rendered.
    pub fn detokenize(&self, tokens: &[String]) -> String {
        tokens
            .iter()
            .filter(|t| **t != self.vocabulary[self.eos])
            .map(|t| t.replace("\\n", "\n"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn sample<R: Rng>(&self, temperature: f64, max_len: usize, rng: &mut R) -> Completion {
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        let mut previous = None;
        while tokens.len() < max_len {
            let lp = self.log_softmax(Self::context_of(previous), temperature);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut choice = lp.len() - 1;
            for (i, l) in lp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    choice = i;
                    break;
                }
            }
            tokens.push(self.vocabulary[choice].clone());
            logprobs.push(lp[choice]);
            previous = Some(choice);
            if choice == self.eos {
                break;
            }
        }
        Completion { text: self.detokenize(&tokens), tokens, logprobs: Some(logprobs) }
    }
}

/// Per-token log-probabilities of `tokens` under `params`. The bigram context
/// does not read the prompt.
pub fn toy_logprobs(
    params: &ToyPolicyParams,
    _prompt: &str,
    tokens: &[String],
    temperature: f64,
) -> Result<Vec<f64>, PolicyError> {
    if !(temperature > 0.0) {
        return Err(PolicyError::InvalidParams(format!("temperature {temperature} must be positive")));
    }
    let encoded = params.encode(tokens)?;
    Ok(encoded.into_iter().map(|(ctx, idx)| params.log_softmax(ctx, temperature)[idx]).collect())
}
