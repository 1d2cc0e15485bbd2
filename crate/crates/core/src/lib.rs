//! Adversarial teacher/student reinforcement learning over kernel programming
//! problems.
//!
//! A teacher policy rewrites kernel problems into computationally equivalent
//! narrative-rich statements, a student policy solves the rewrites, a
//! sandboxed code judge scores the solutions against the kernel's test cases,
//! and a group-relative clipped policy optimizer trains both policies from
//! the resulting scalar rewards.
//!
//! Module map:
//!
//! - [`corpus`]: problem/generator/reference triplets and the validation pipeline
//! - [`format`]: `<think>`/`<answer>` parsing and problem-structure checks
//! - [`judge`]: compile + run + compare, with process-level sandboxing
//! - [`similarity`]: TF-IDF vectors and cosine similarity
//! - [`reward`]: solver and giver rewards, equivalence oracle
//! - [`policy`]: scripted, toy (bigram softmax) and remote policies
//! - [`grpo`]: advantages, clipped surrogate, analytic gradient, update step
//! - [`training`]: the alternating teacher/student loop, logs and checkpoints
//! - [`eval`]: pass@k estimation and the benchmark harness
//! - [`config`]: run configuration

pub mod chat;
mod limit;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod format;
pub mod grpo;
pub mod judge;
pub mod policy;
pub mod reward;
pub mod seed;
pub mod similarity;
pub mod training;
