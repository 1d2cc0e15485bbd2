use crate::chat::{ChatClient, ChatRequest, EndpointConfig};

use super::{Completion, PolicyError, SamplingConfig};

/// Policy served by a chat-completion endpoint. Cannot be trained in-process;
/// updates are counted and skipped.
pub struct RemotePolicy {
    client: ChatClient,
    pub(super) skipped_updates: u64,
}

impl RemotePolicy {
    pub fn new(config: EndpointConfig) -> Result<Self, PolicyError> {
        Ok(Self { client: ChatClient::new(config)?, skipped_updates: 0 })
    }

    /// Requests `group_size` completions in one call. Token lists come from
    /// the reported log-probabilities when present, otherwise from
    /// whitespace splitting.
    pub fn sample_group(&self, prompt: &str, cfg: &SamplingConfig) -> Result<Vec<Completion>, PolicyError> {
        let choices = self.client.complete(&ChatRequest {
            prompt,
            temperature: cfg.temperature,
            max_tokens: cfg.max_completion_length,
            n: cfg.group_size,
            logprobs: true,
        })?;
        if choices.len() != cfg.group_size {
            return Err(PolicyError::BackendUnavailable(format!(
                "asked for {} completions, endpoint returned {}",
                cfg.group_size,
                choices.len()
            )));
        }
        Ok(choices
            .into_iter()
            .map(|c| match c.logprobs {
                Some(pairs) if !pairs.is_empty() => {
                    let (tokens, logprobs) = pairs.into_iter().unzip();
                    Completion { tokens, text: c.content, logprobs: Some(logprobs) }
                }
                _ => Completion {
                    tokens: c.content.split_whitespace().map(str::to_string).collect(),
                    text: c.content,
                    logprobs: None,
                },
            })
            .collect())
    }
}
