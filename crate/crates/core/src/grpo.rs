//! Group-relative policy optimization without reward standardization and
//! without a KL penalty.
//!
//! For a group of `g` completions with rewards `R_i`, the advantage of every
//! token of completion `i` is `R_i - mean(R)`. The objective is
//!
//! ```text
//! J = 1/g Σ_i 1/|o_i| Σ_t min(r_it · A_i, clip(r_it, 1-ε, 1+ε) · A_i)
//! r_it = exp(logπ_new(o_it) - logπ_old(o_it))
//! ```
//!
//! averaged over groups, and is maximized by plain gradient ascent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{toy_logprobs, Completion, PolicyError, ToyPolicyParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrpoError {
    #[error("group of size {0} is degenerate; at least 2 completions are required")]
    DegenerateGroup(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("old log-probabilities are unavailable for this group")]
    RatioUnavailable,
    #[error("non-finite old log-probability")]
    NonFiniteLogprob,
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

impl From<PolicyError> for GrpoError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::UnknownToken(t) => GrpoError::UnknownToken(t),
            other => GrpoError::InvalidParams(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrpoConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Divide each completion's token sum by its length.
    #[serde(default = "default_true")]
    pub length_normalization: bool,
}

fn default_epsilon() -> f64 {
    0.2
}
fn default_learning_rate() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self { epsilon: default_epsilon(), learning_rate: default_learning_rate(), length_normalization: true }
    }
}

/// `R_i - mean(R)` with no division by the standard deviation. Groups whose
/// rewards are all equal get exact zeros.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::DegenerateGroup(rewards.len()));
    }
    if rewards.iter().all(|r| *r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    Ok(rewards.iter().map(|r| r - mean).collect())
}

/// One prompt, its sampled completions and their rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub prompt: String,
    pub completions: Vec<Completion>,
    pub rewards: Vec<f64>,
    /// Per-completion per-token log-probabilities under the sampling policy;
    /// `None` when the backend did not report them.
    pub old_logprobs: Option<Vec<Vec<f64>>>,
    /// One value per completion, shared by all of its tokens.
    pub advantages: Vec<f64>,
}

impl GroupSample {
    pub fn new(prompt: impl Into<String>, completions: Vec<Completion>, rewards: Vec<f64>) -> Result<Self, GrpoError> {
        if completions.len() != rewards.len() {
            return Err(GrpoError::ShapeMismatch(format!(
                "{} completions but {} rewards",
                completions.len(),
                rewards.len()
            )));
        }
        let advantages = group_advantages(&rewards)?;
        let old_logprobs = completions.iter().map(|c| c.logprobs.clone()).collect::<Option<Vec<_>>>();
        Ok(Self { prompt: prompt.into(), completions, rewards, old_logprobs, advantages })
    }

    fn old(&self) -> Result<&[Vec<f64>], GrpoError> {
        let old = self.old_logprobs.as_deref().ok_or(GrpoError::RatioUnavailable)?;
        if old.len() != self.completions.len() {
            return Err(GrpoError::ShapeMismatch("old log-probabilities per completion".into()));
        }
        Ok(old)
    }
}

fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

fn token_term(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    (ratio * advantage).min(clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage)
}

/// Whether the unclipped branch is the one selected by the `min`, i.e.
/// whether the token passes gradient through its ratio.
fn unclipped_active(ratio: f64, advantage: f64, epsilon: f64) -> bool {
    if advantage > 0.0 {
        ratio <= 1.0 + epsilon
    } else if advantage < 0.0 {
        ratio >= 1.0 - epsilon
    } else {
        false
    }
}

fn completion_weight(len: usize, length_normalization: bool) -> f64 {
    if length_normalization {
        1.0 / len as f64
    } else {
        1.0
    }
}

/// Clipped surrogate of one group.
pub fn clipped_surrogate(
    new_logprobs: &[Vec<f64>],
    old_logprobs: &[Vec<f64>],
    advantages: &[f64],
    epsilon: f64,
    length_normalization: bool,
) -> Result<f64, GrpoError> {
    let g = advantages.len();
    if new_logprobs.len() != g || old_logprobs.len() != g {
        return Err(GrpoError::ShapeMismatch(format!(
            "{} new, {} old, {} advantages",
            new_logprobs.len(),
            old_logprobs.len(),
            g
        )));
    }
    if g == 0 {
        return Err(GrpoError::DegenerateGroup(0));
    }
    let mut total = 0.0;
    for ((new, old), &adv) in new_logprobs.iter().zip(old_logprobs).zip(advantages) {
        if new.len() != old.len() {
            return Err(GrpoError::ShapeMismatch(format!("{} new vs {} old token log-probabilities", new.len(), old.len())));
        }
        if old.iter().any(|x| !x.is_finite()) {
            return Err(GrpoError::NonFiniteLogprob);
        }
        if new.is_empty() {
            continue;
        }
        let sum: f64 = new.iter().zip(old).map(|(n, o)| token_term((n - o).exp(), adv, epsilon)).sum();
        total += completion_weight(new.len(), length_normalization) * sum;
    }
    Ok(total / g as f64)
}

/// Surrogate averaged over groups, with new log-probabilities taken from
/// `params`.
pub fn surrogate_objective(
    params: &ToyPolicyParams,
    groups: &[GroupSample],
    cfg: &GrpoConfig,
    temperature: f64,
) -> Result<f64, GrpoError> {
    if groups.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for group in groups {
        let new = group
            .completions
            .iter()
            .map(|c| toy_logprobs(params, &group.prompt, &c.tokens, temperature))
            .collect::<Result<Vec<_>, _>>()?;
        total += clipped_surrogate(&new, group.old()?, &group.advantages, cfg.epsilon, cfg.length_normalization)?;
    }
    Ok(total / groups.len() as f64)
}

/// Gradient with the same shape as the logits table.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(pub Vec<Vec<f64>>);

impl Gradient {
    fn zeros_like(params: &ToyPolicyParams) -> Self {
        Gradient(vec![vec![0.0; params.vocabulary_len()]; params.context_count()])
    }

    fn add(&mut self, other: &Gradient) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|x| *x == 0.0)
    }
}

fn group_gradient(
    params: &ToyPolicyParams,
    group: &GroupSample,
    cfg: &GrpoConfig,
    temperature: f64,
    scale: f64,
) -> Result<Gradient, GrpoError> {
    let old = group.old()?;
    let g = group.completions.len();
    if group.advantages.len() != g {
        return Err(GrpoError::ShapeMismatch("advantages per completion".into()));
    }
    let mut grad = Gradient::zeros_like(params);
    for ((completion, old_lp), &adv) in group.completions.iter().zip(old).zip(&group.advantages) {
        let encoded = params.encode(&completion.tokens)?;
        if encoded.len() != old_lp.len() {
            return Err(GrpoError::ShapeMismatch("tokens vs old log-probabilities".into()));
        }
        if old_lp.iter().any(|x| !x.is_finite()) {
            return Err(GrpoError::NonFiniteLogprob);
        }
        if encoded.is_empty() || adv == 0.0 {
            continue;
        }
        let weight = scale * completion_weight(encoded.len(), cfg.length_normalization) / g as f64;
        for (&(ctx, tok), &old_t) in encoded.iter().zip(old_lp) {
            let log_p = params.log_softmax(ctx, temperature);
            let ratio = (log_p[tok] - old_t).exp();
            if !unclipped_active(ratio, adv, cfg.epsilon) {
                continue;
            }
            // d/dlogit_j of r·A = r·A·(δ_jk − p_j)/τ
            let coef = weight * adv * ratio / temperature;
            for (j, lp) in log_p.iter().enumerate() {
                let indicator = if j == tok { 1.0 } else { 0.0 };
                grad.0[ctx][j] += coef * (indicator - lp.exp());
            }
        }
    }
    Ok(grad)
}

/// Exact gradient of [`surrogate_objective`] with respect to the logits.
/// Tokens whose clipped branch binds contribute nothing.
pub fn grpo_gradient(
    params: &ToyPolicyParams,
    groups: &[GroupSample],
    cfg: &GrpoConfig,
    temperature: f64,
) -> Result<Gradient, GrpoError> {
    let mut total = Gradient::zeros_like(params);
    if groups.is_empty() {
        return Ok(total);
    }
    let scale = 1.0 / groups.len() as f64;
    // Per-group gradients in parallel, summed in group order so the result
    // does not depend on scheduling.
    let parts = groups
        .par_iter()
        .map(|g| group_gradient(params, g, cfg, temperature, scale))
        .collect::<Result<Vec<_>, _>>()?;
    for p in &parts {
        total.add(p);
    }
    Ok(total)
}

/// `params + learning_rate · gradient`. Zero gradient entries leave the
/// corresponding parameters bit-identical.
pub fn grpo_step(
    params: &ToyPolicyParams,
    groups: &[GroupSample],
    cfg: &GrpoConfig,
    temperature: f64,
) -> Result<ToyPolicyParams, GrpoError> {
    let grad = grpo_gradient(params, groups, cfg, temperature)?;
    let mut next = params.clone();
    for (row, grow) in next.logits.iter_mut().zip(&grad.0) {
        for (x, g) in row.iter_mut().zip(grow) {
            let delta = cfg.learning_rate * g;
            if delta != 0.0 {
                *x += delta;
            }
        }
    }
    Ok(next)
}
