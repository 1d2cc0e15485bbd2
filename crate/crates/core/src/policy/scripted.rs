//! Deterministic scripted policy.
//!
//! Rules match prompts by substring; each rule holds stages keyed by the
//! number of updates the policy has received, so a fixture can script a
//! policy that "learns" on a fixed schedule.

use serde::{Deserialize, Serialize};

use super::{truncate_text, Completion, SamplingConfig};
use crate::seed;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pick {
    /// Candidate `i` gets `responses[i % len]`.
    #[default]
    Cycle,
    /// Each candidate draws uniformly from a stream keyed by seed, prompt and index.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStage {
    #[serde(default)]
    pub from_version: u64,
    pub responses: Vec<String>,
    #[serde(default)]
    pub pick: Pick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    pub prompt_contains: String,
    pub stages: Vec<ScriptStage>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub fallback: Vec<ScriptStage>,
}

#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    script: Script,
    version: u64,
}

impl ScriptedPolicy {
    pub fn new(script: Script) -> Self {
        Self { script, version: 0 }
    }

    /// A policy that always answers `text`.
    pub fn constant(text: &str) -> Self {
        Self::new(Script {
            rules: Vec::new(),
            fallback: vec![ScriptStage { from_version: 0, responses: vec![text.to_string()], pick: Pick::Cycle }],
        })
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn set_version(&mut self, version: u64) {
        self.version = version;
    }

    pub(super) fn advance(&mut self) {
        self.version += 1;
    }

    fn stage_for(&self, prompt: &str) -> Option<&ScriptStage> {
        let stages = self
            .script
            .rules
            .iter()
            .find(|r| prompt.contains(&r.prompt_contains))
            .map_or(&self.script.fallback, |r| &r.stages);
        stages
            .iter()
            .filter(|s| s.from_version <= self.version && !s.responses.is_empty())
            .max_by_key(|s| s.from_version)
    }

    pub fn sample_group(&self, prompt: &str, cfg: &SamplingConfig, seed: u64) -> Vec<Completion> {
        let stage = self.stage_for(prompt);
        (0..cfg.group_size)
            .map(|i| {
                let text = match stage {
                    None => "",
                    Some(s) => {
                        let idx = match s.pick {
                            Pick::Cycle => i % s.responses.len(),
                            Pick::Random => {
                                let path = [seed::hash_str(prompt), i as u64];
                                (seed::derive(seed, "scripted", &path) % s.responses.len() as u64) as usize
                            }
                        };
                        s.responses[idx].as_str()
                    }
                };
                let (tokens, text) = truncate_text(text, cfg.max_completion_length);
                Completion { tokens, text, logprobs: None }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(g: usize) -> SamplingConfig {
        SamplingConfig::student().with_group_size(g)
    }

    #[test]
    fn constant_policy_repeats() {
        let p = ScriptedPolicy::constant("fixed text");
        let out = p.sample_group("anything", &cfg(3), 9);
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|c| c.text == "fixed text" && c.logprobs.is_none()));
    }

    #[test]
    fn stages_follow_version() {
        let mut p = ScriptedPolicy::new(Script {
            rules: vec![ScriptRule {
                prompt_contains: "sum".into(),
                stages: vec![
                    ScriptStage { from_version: 0, responses: vec!["early".into()], pick: Pick::Cycle },
                    ScriptStage { from_version: 2, responses: vec!["late".into()], pick: Pick::Cycle },
                ],
            }],
            fallback: vec![],
        });
        assert_eq!(p.sample_group("the sum", &cfg(1), 0)[0].text, "early");
        p.advance();
        p.advance();
        assert_eq!(p.sample_group("the sum", &cfg(1), 0)[0].text, "late");
        assert_eq!(p.sample_group("other", &cfg(1), 0)[0].text, "");
    }

    #[test]
    fn random_pick_is_pure() {
        let p = ScriptedPolicy::new(Script {
            rules: vec![],
            fallback: vec![ScriptStage {
                from_version: 0,
                responses: (0..10).map(|i| i.to_string()).collect(),
                pick: Pick::Random,
            }],
        });
        let a = p.sample_group("q", &cfg(8), 5);
        assert_eq!(a, p.sample_group("q", &cfg(8), 5));
        assert_ne!(a, p.sample_group("q", &cfg(8), 6));
    }

    #[test]
    fn cycle_and_truncation() {
        let p = ScriptedPolicy::new(Script {
            rules: vec![],
            fallback: vec![ScriptStage { from_version: 0, responses: vec!["a b c".into(), "d".into()], pick: Pick::Cycle }],
        });
        let c = SamplingConfig { temperature: 0.7, max_completion_length: 2, group_size: 3 };
        let out: Vec<_> = p.sample_group("q", &c, 0).into_iter().map(|c| c.text).collect();
        assert_eq!(out, vec!["a b", "d", "a b"]);
    }
}
