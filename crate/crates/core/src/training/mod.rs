//! Alternating teacher/student training.
//!
//! Each iteration runs a teacher phase (the teacher rewrites kernels, the
//! student probes each equivalent rewrite once, the teacher is updated on
//! giver rewards) followed by a student phase (the teacher rewrites again,
//! equivalent rewrites become student prompts, the student is updated on
//! solver rewards). An optional iteration 0 runs teacher phases only.
//!
//! Every random draw comes from a sub-stream of the schedule seed keyed by
//! `(iteration, phase, step, problem)`, so scripted and toy runs reproduce
//! their run log byte for byte, including across a resume.

mod checkpoint;
mod log;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ProblemTriplet;
use crate::format::{extract_code, parse_tagged_response, validate_problem_structure, ParsedResponse, ProblemStructure};
use crate::grpo::{GroupSample, GrpoConfig, GrpoError};
use crate::judge::{Aggregate, Judge, JudgeError};
use crate::policy::{Completion, Policy, PolicyError, SamplingConfig, UpdateOutcome};
use crate::reward::{
    giver_reward, solver_reward, EquivalenceChecker, GiverInputs, OracleError, RewardBreakdown, RewardError,
};
use crate::seed;
use crate::similarity::{SimilarityError, TfidfModel};

pub use checkpoint::{latest_checkpoint, Checkpoint, PhaseId, RevisionEntry, CHECKPOINT_DIR, STATE_FILE};
pub use log::{
    export_curves, parse_run_log, phase_component_mean, read_run_log, step_summaries, CandidateRecord, LogRecord,
    Phase, RewriteRecord, StepSummary, CURVE_COLUMNS,
};

use log::{JsonlWriter, TimingRecord};

pub const RUN_LOG_FILE: &str = "run_log.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const REVISED_CORPUS_FILE: &str = "corpus_revised.jsonl";

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("run log line {line} is corrupted: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("curve export failed: {0}")]
    Export(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSchedule {
    /// Number of adversarial iterations; no default.
    pub iterations: u32,
    #[serde(default = "default_teacher_steps")]
    pub teacher_steps: u32,
    #[serde(default = "default_student_steps")]
    pub student_steps: u32,
    #[serde(default = "default_problems_per_step")]
    pub problems_per_step: usize,
    /// Teacher steps of iteration 0; 0 skips teacher pre-training.
    #[serde(default)]
    pub pretrain_teacher_steps: u32,
    /// Filled from the run-level seed.
    #[serde(skip)]
    pub seed: u64,
}

fn default_teacher_steps() -> u32 {
    40
}
fn default_student_steps() -> u32 {
    100
}
fn default_problems_per_step() -> usize {
    1
}

impl TrainingSchedule {
    pub fn new(iterations: u32, teacher_steps: u32, student_steps: u32, problems_per_step: usize, seed: u64) -> Self {
        Self { iterations, teacher_steps, student_steps, problems_per_step, pretrain_teacher_steps: 0, seed }
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        let positive = [
            ("iterations", self.iterations as usize),
            ("teacher_steps", self.teacher_steps as usize),
            ("student_steps", self.student_steps as usize),
            ("problems_per_step", self.problems_per_step),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(TrainingError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Phases in execution order.
    pub fn phases(&self) -> Vec<PhaseId> {
        let mut out = Vec::new();
        if self.pretrain_teacher_steps > 0 {
            out.push(PhaseId { iteration: 0, phase: Phase::Teacher });
        }
        for iteration in 1..=self.iterations {
            out.push(PhaseId { iteration, phase: Phase::Teacher });
            out.push(PhaseId { iteration, phase: Phase::Student });
        }
        out
    }

    fn steps_of(&self, id: PhaseId) -> u32 {
        match (id.iteration, id.phase) {
            (0, _) => self.pretrain_teacher_steps,
            (_, Phase::Teacher) => self.teacher_steps,
            (_, Phase::Student) => self.student_steps,
        }
    }
}

/// Which part of a teacher response is scored for similarity, checked for
/// equivalence and handed to the student.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityScope {
    #[default]
    Answer,
    Full,
}

impl SimilarityScope {
    fn text<'a>(&self, parsed: &'a ParsedResponse) -> &'a str {
        match self {
            SimilarityScope::Answer => parsed.answer_text(),
            SimilarityScope::Full => &parsed.raw,
        }
    }
}

pub struct Services<'a> {
    pub judge: &'a Judge,
    pub equivalence: &'a EquivalenceChecker,
    pub similarity_scope: SimilarityScope,
}

/// A policy with its sampling and optimizer settings.
pub struct Role {
    pub policy: Policy,
    pub sampling: SamplingConfig,
    pub grpo: GrpoConfig,
}

impl Role {
    pub fn new(policy: Policy, sampling: SamplingConfig, grpo: GrpoConfig) -> Self {
        Self { policy, sampling, grpo }
    }
}

pub fn teacher_prompt(kernel: &str, previous: &str) -> String {
    format!(
        "Rewrite the programming problem below as a new problem with a rich story and domain setting. \
The rewrite must stay computationally equivalent: the same inputs are valid and every input has the same \
correct output, so the original test cases still apply. Make it read differently from both the original \
and the previous rewrite. Keep the sections Description, Input, Output, Example and Constraints.\n\
Reply as <think>your reasoning</think><answer>the rewritten problem</answer>.\n\n\
[Original problem]\n{kernel}\n\n[Previous rewrite]\n{previous}\n"
    )
}

struct Revision {
    text: String,
    parsed: ParsedResponse,
    structure: ProblemStructure,
    equivalent: Option<bool>,
    reason: Option<String>,
}

impl Revision {
    fn format_ok(&self) -> bool {
        self.parsed.well_formed && self.structure.complete()
    }

    fn passes_gate(&self) -> bool {
        self.format_ok() && self.equivalent == Some(true)
    }
}

struct Solved {
    verdict: Option<Aggregate>,
    reward: crate::reward::SolverRewardBreakdown,
}

struct Scored {
    completion: Completion,
    revision_text: Option<String>,
    equivalent: Option<bool>,
    reason: Option<String>,
    verdict: Option<Aggregate>,
    reward: RewardBreakdown,
}

struct GroupResult {
    problem: usize,
    prompt: String,
    scored: Vec<Scored>,
}

/// Per-step outcome of one phase, as returned to callers.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLog {
    pub id: PhaseId,
    pub steps: Vec<StepSummary>,
}

/// Result of a full run: every step summary in the run log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub steps: Vec<StepSummary>,
    pub log_path: PathBuf,
}

pub struct Trainer<'a> {
    pub teacher: Role,
    pub student: Role,
    pub corpus: Vec<ProblemTriplet>,
    pub schedule: TrainingSchedule,
    services: Services<'a>,
    output: PathBuf,
    similarity: Option<TfidfModel>,
    log: Option<JsonlWriter>,
    timings: Option<JsonlWriter>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainingError + '_ {
    move |source| TrainingError::Io { path: path.to_path_buf(), source }
}

impl<'a> Trainer<'a> {
    /// Prepares a run in `output`. The run log is replaced when the run
    /// starts, unless a checkpoint was restored first.
    pub fn new(
        teacher: Role,
        student: Role,
        corpus: Vec<ProblemTriplet>,
        schedule: TrainingSchedule,
        services: Services<'a>,
        output: &Path,
    ) -> Result<Self, TrainingError> {
        schedule.validate()?;
        if corpus.is_empty() {
            return Err(TrainingError::Config("training corpus is empty".into()));
        }
        if let Some(p) = corpus.iter().find(|p| p.test_cases.is_empty()) {
            return Err(TrainingError::Config(format!("problem {} has no test cases", p.id)));
        }
        for (name, role) in [("teacher", &teacher), ("student", &student)] {
            role.sampling.validate().map_err(|e| TrainingError::Config(format!("{name} sampling: {e}")))?;
            if role.sampling.group_size < 2 {
                return Err(TrainingError::Config(format!("{name} group_size must be at least 2")));
            }
        }
        Ok(Self {
            teacher,
            student,
            corpus,
            schedule,
            services,
            output: output.to_path_buf(),
            similarity: None,
            log: None,
            timings: None,
        })
    }

    pub fn output(&self) -> &Path {
        &self.output
    }

    pub fn similarity_model(&self) -> Option<&TfidfModel> {
        self.similarity.as_ref()
    }

    /// Restores policies, revision histories and log cursors from a
    /// checkpoint; returns the phase it completed.
    pub fn restore(&mut self, checkpoint: &Checkpoint) -> Result<PhaseId, TrainingError> {
        if checkpoint.seed != self.schedule.seed {
            return Err(TrainingError::Checkpoint(format!(
                "checkpoint was written with seed {}, run uses seed {}",
                checkpoint.seed, self.schedule.seed
            )));
        }
        if !self.schedule.phases().contains(&checkpoint.completed) {
            return Err(TrainingError::Checkpoint(format!(
                "phase {} is not part of this schedule",
                checkpoint.completed.dir_name()
            )));
        }
        self.teacher.policy.restore(checkpoint.teacher.clone())?;
        self.student.policy.restore(checkpoint.student.clone())?;
        let by_id: HashMap<&str, &Vec<String>> =
            checkpoint.revisions.iter().map(|e| (e.id.as_str(), &e.revisions)).collect();
        for p in &mut self.corpus {
            let saved = by_id
                .get(p.id.as_str())
                .ok_or_else(|| TrainingError::Checkpoint(format!("checkpoint has no entry for problem {}", p.id)))?;
            p.revision_history = (*saved).clone();
        }
        self.similarity = checkpoint.similarity.clone();
        let log_path = self.output.join(RUN_LOG_FILE);
        let timings_path = self.output.join(TIMINGS_FILE);
        self.log = Some(JsonlWriter::truncate_to(&log_path, checkpoint.log_cursor).map_err(io_err(&log_path))?);
        self.timings = Some(
            JsonlWriter::truncate_to(&timings_path, checkpoint.timings_cursor)
                .or_else(|_| JsonlWriter::create(&timings_path))
                .map_err(io_err(&timings_path))?,
        );
        Ok(checkpoint.completed)
    }

    fn checkpoint(&self, completed: PhaseId) -> Result<PathBuf, TrainingError> {
        Checkpoint {
            completed,
            seed: self.schedule.seed,
            teacher: self.teacher.policy.state(),
            student: self.student.policy.state(),
            similarity: self.similarity.clone(),
            revisions: self
                .corpus
                .iter()
                .map(|p| RevisionEntry { id: p.id.clone(), revisions: p.revision_history.clone() })
                .collect(),
            log_cursor: self.log.as_ref().map_or(0, JsonlWriter::cursor),
            timings_cursor: self.timings.as_ref().map_or(0, JsonlWriter::cursor),
        }
        .save(&self.output)
    }

    fn open_logs(&mut self) -> Result<(), TrainingError> {
        std::fs::create_dir_all(&self.output).map_err(io_err(&self.output))?;
        if self.log.is_none() {
            let path = self.output.join(RUN_LOG_FILE);
            self.log = Some(JsonlWriter::create(&path).map_err(io_err(&path))?);
        }
        if self.timings.is_none() {
            let path = self.output.join(TIMINGS_FILE);
            self.timings = Some(JsonlWriter::create(&path).map_err(io_err(&path))?);
        }
        Ok(())
    }

    fn write(&mut self, record: LogRecord) -> Result<(), TrainingError> {
        self.open_logs()?;
        let log = self.log.as_mut().expect("run log is open");
        let path = log.path().to_path_buf();
        log.append(&record).map_err(io_err(&path))
    }

    fn write_timing(&mut self, id: PhaseId, step: u32, started: Instant) -> Result<(), TrainingError> {
        self.open_logs()?;
        let timings = self.timings.as_mut().expect("timings log is open");
        let path = timings.path().to_path_buf();
        let rec = TimingRecord { iteration: id.iteration, phase: id.phase, step, wall_secs: started.elapsed().as_secs_f64() };
        timings.append(&rec).map_err(io_err(&path))
    }

    fn pick_problems(&self, id: PhaseId, step: u32) -> Vec<usize> {
        let n = self.corpus.len();
        let amount = self.schedule.problems_per_step.min(n);
        let mut rng = seed::rng(self.schedule.seed, "problems", &[id.iteration as u64, id.phase as u64, step as u64]);
        sample_indices(&mut rng, n, amount).into_vec()
    }

    fn sample_seed(&self, stream: &str, id: PhaseId, step: u32, problem: usize) -> u64 {
        seed::derive(self.schedule.seed, stream, &[id.iteration as u64, id.phase as u64, step as u64, problem as u64])
    }

    /// Parses a teacher response and, when it passes the format gate, asks
    /// the oracle whether it is equivalent to the kernel.
    fn inspect_revision(&self, kernel: &str, completion: &Completion) -> Result<Revision, TrainingError> {
        let parsed = parse_tagged_response(&completion.text);
        let structure =
            if parsed.well_formed { validate_problem_structure(parsed.answer_text()) } else { ProblemStructure::default() };
        let text = self.services.similarity_scope.text(&parsed).to_string();
        let mut rev = Revision { text, parsed, structure, equivalent: None, reason: None };
        if rev.format_ok() {
            let j = self.services.equivalence.check(kernel, rev.parsed.answer_text())?;
            rev.equivalent = Some(j.equivalent);
            rev.reason = Some(j.reason);
        }
        Ok(rev)
    }

    /// Parses, compiles and judges one student response on the problem tests.
    fn solve(&self, problem: &ProblemTriplet, text: &str) -> Result<Solved, TrainingError> {
        let parsed = parse_tagged_response(text);
        let verdict = if parsed.well_formed {
            let code = extract_code(parsed.answer_text());
            Some(self.services.judge.judge(&code, &problem.test_cases, self.services.judge.limits())?)
        } else {
            None
        };
        let reward = solver_reward(&parsed, verdict.as_ref())?;
        Ok(Solved { verdict: verdict.map(|v| v.aggregate), reward })
    }

    fn teacher_group(&self, id: PhaseId, step: u32, pi: usize) -> Result<GroupResult, TrainingError> {
        let problem = &self.corpus[pi];
        let previous = problem.latest_revision();
        let prompt = teacher_prompt(&problem.kernel_text, previous);
        let seed = self.sample_seed("teacher-sample", id, step, pi);
        let completions = self.teacher.policy.sample_group(&prompt, &self.teacher.sampling, seed)?;
        let probe_cfg = self.student.sampling.with_group_size(1);
        let model = self.similarity.as_ref().expect("similarity model is fitted at phase start");
        let scored = completions
            .into_par_iter()
            .enumerate()
            .map(|(ci, completion)| {
                let rev = self.inspect_revision(&problem.kernel_text, &completion)?;
                let mut verdict = None;
                let mut student_acc = None;
                if rev.passes_gate() {
                    let probe_seed = seed::derive(seed, "student-probe", &[ci as u64]);
                    let attempt = self.student.policy.sample_group(&rev.text, &probe_cfg, probe_seed)?;
                    let solved = self.solve(problem, &attempt[0].text)?;
                    verdict = solved.verdict;
                    student_acc = Some(solved.verdict == Some(Aggregate::Accepted));
                }
                let inputs = GiverInputs {
                    kernel: &problem.kernel_text,
                    revision: &rev.text,
                    prev_revision: previous,
                    structure: rev.structure,
                    parsed: &rev.parsed,
                    equivalent: rev.equivalent == Some(true),
                    student_acc,
                };
                let reward = RewardBreakdown::Giver(giver_reward(&inputs, model)?);
                let revision_text = rev.passes_gate().then(|| rev.text.clone());
                Ok(Scored { completion, revision_text, equivalent: rev.equivalent, reason: rev.reason, verdict, reward })
            })
            .collect::<Result<Vec<_>, TrainingError>>()?;
        Ok(GroupResult { problem: pi, prompt, scored })
    }

    /// Refits the similarity model on every kernel and stored revision.
    fn refit_similarity(&mut self) -> Result<(), TrainingError> {
        let docs: Vec<&str> = self
            .corpus
            .iter()
            .flat_map(|p| std::iter::once(p.kernel_text.as_str()).chain(p.revision_history.iter().map(String::as_str)))
            .collect();
        self.similarity = Some(TfidfModel::fit(&docs)?);
        Ok(())
    }

    /// Runs all teacher steps of `iteration`. For iterations ≥ 1 the best
    /// equivalent revision of each kernel (earliest on ties) is appended to
    /// its history; kernels without one repeat their previous entry.
    pub fn run_teacher_phase(&mut self, iteration: u32) -> Result<PhaseLog, TrainingError> {
        let id = PhaseId { iteration, phase: Phase::Teacher };
        self.refit_similarity()?;
        let mut best: Vec<Option<(f64, String)>> = vec![None; self.corpus.len()];
        let mut steps = Vec::new();
        for step in 0..self.schedule.steps_of(id) {
            let started = Instant::now();
            let picks = self.pick_problems(id, step);
            let groups = picks
                .par_iter()
                .map(|&pi| self.teacher_group(id, step, pi))
                .collect::<Result<Vec<_>, TrainingError>>()?;
            for g in &groups {
                for s in &g.scored {
                    if let Some(text) = &s.revision_text {
                        let total = s.reward.total();
                        if best[g.problem].as_ref().map_or(true, |(b, _)| total > *b) {
                            best[g.problem] = Some((total, text.clone()));
                        }
                    }
                }
            }
            let summary = self.finish_step(id, step, groups, TeacherOrStudent::Teacher)?;
            self.write_timing(id, step, started)?;
            steps.push(summary);
        }
        if iteration > 0 {
            for (p, b) in self.corpus.iter_mut().zip(best) {
                let next = b.map_or_else(|| p.latest_revision().to_string(), |(_, text)| text);
                p.revision_history.push(next);
            }
        }
        self.checkpoint(id)?;
        Ok(PhaseLog { id, steps })
    }

    /// Runs all student steps of `iteration`. The teacher writes one rewrite
    /// per sampled problem; only rewrites that pass the format and
    /// equivalence gates become student prompts.
    pub fn run_student_phase(&mut self, iteration: u32) -> Result<PhaseLog, TrainingError> {
        let id = PhaseId { iteration, phase: Phase::Student };
        let mut steps = Vec::new();
        for step in 0..self.schedule.steps_of(id) {
            let started = Instant::now();
            let picks = self.pick_problems(id, step);
            let rewrite_cfg = self.teacher.sampling.with_group_size(1);
            let rewrites = picks
                .par_iter()
                .map(|&pi| {
                    let problem = &self.corpus[pi];
                    let prompt = teacher_prompt(&problem.kernel_text, problem.latest_revision());
                    let seed = self.sample_seed("teacher-rewrite", id, step, pi);
                    let out = self.teacher.policy.sample_group(&prompt, &rewrite_cfg, seed)?;
                    let rev = self.inspect_revision(&problem.kernel_text, &out[0])?;
                    Ok((pi, out[0].text.clone(), rev))
                })
                .collect::<Result<Vec<_>, TrainingError>>()?;
            for (pi, text, rev) in &rewrites {
                self.write(LogRecord::Rewrite(RewriteRecord {
                    iteration,
                    step,
                    problem_id: self.corpus[*pi].id.clone(),
                    text: text.clone(),
                    well_formed: rev.format_ok(),
                    equivalent: rev.equivalent,
                    reason: rev.reason.clone(),
                    used: rev.passes_gate(),
                }))?;
            }
            let groups = rewrites
                .par_iter()
                .filter(|(_, _, rev)| rev.passes_gate())
                .map(|(pi, _, rev)| {
                    let problem = &self.corpus[*pi];
                    let seed = self.sample_seed("student-sample", id, step, *pi);
                    let completions = self.student.policy.sample_group(&rev.text, &self.student.sampling, seed)?;
                    let scored = completions
                        .into_par_iter()
                        .map(|completion| {
                            let solved = self.solve(problem, &completion.text)?;
                            Ok(Scored {
                                completion,
                                revision_text: None,
                                equivalent: None,
                                reason: None,
                                verdict: solved.verdict,
                                reward: RewardBreakdown::Solver(solved.reward),
                            })
                        })
                        .collect::<Result<Vec<_>, TrainingError>>()?;
                    Ok(GroupResult { problem: *pi, prompt: rev.text.clone(), scored })
                })
                .collect::<Result<Vec<_>, TrainingError>>()?;
            let summary = self.finish_step(id, step, groups, TeacherOrStudent::Student)?;
            self.write_timing(id, step, started)?;
            steps.push(summary);
        }
        self.checkpoint(id)?;
        Ok(PhaseLog { id, steps })
    }

    /// Logs candidates, applies one update to the trained role and writes the
    /// step summary.
    fn finish_step(
        &mut self,
        id: PhaseId,
        step: u32,
        groups: Vec<GroupResult>,
        trained: TeacherOrStudent,
    ) -> Result<StepSummary, TrainingError> {
        let mut totals = Vec::new();
        let mut component_sums: Vec<(String, f64)> = Vec::new();
        let mut samples = Vec::new();
        let problem_ids: Vec<String> = groups.iter().map(|g| self.corpus[g.problem].id.clone()).collect();
        for g in groups {
            let problem_id = self.corpus[g.problem].id.clone();
            let mut rewards = Vec::with_capacity(g.scored.len());
            let mut completions = Vec::with_capacity(g.scored.len());
            for (ci, s) in g.scored.into_iter().enumerate() {
                debug_assert!(s.reward.satisfies_gates());
                let total = s.reward.total();
                totals.push(total);
                for (name, v) in s.reward.components() {
                    match component_sums.iter_mut().find(|(n, _)| n == name) {
                        Some((_, sum)) => *sum += v,
                        None => component_sums.push((name.to_string(), v)),
                    }
                }
                self.write(LogRecord::Candidate(CandidateRecord {
                    iteration: id.iteration,
                    phase: id.phase,
                    step,
                    problem_id: problem_id.clone(),
                    candidate: ci,
                    text: s.completion.text.clone(),
                    equivalent: s.equivalent,
                    reason: s.reason,
                    verdict: s.verdict,
                    reward: s.reward,
                }))?;
                rewards.push(total);
                completions.push(s.completion);
            }
            samples.push(GroupSample::new(g.prompt, completions, rewards)?);
        }
        let role = match trained {
            TeacherOrStudent::Teacher => &mut self.teacher,
            TeacherOrStudent::Student => &mut self.student,
        };
        let outcome = role.policy.apply_update(&samples, &role.grpo, role.sampling.temperature)?;
        let n = totals.len();
        let summary = StepSummary {
            iteration: id.iteration,
            phase: id.phase,
            step,
            problem_ids,
            candidates: n,
            mean_reward: (n > 0).then(|| totals.iter().sum::<f64>() / n as f64),
            component_means: component_sums.into_iter().map(|(name, sum)| (name, sum / n as f64)).collect(),
            advantages: samples.iter().map(|s| s.advantages.clone()).collect(),
            update_applied: outcome == UpdateOutcome::Applied,
        };
        self.write(LogRecord::Step(summary.clone()))?;
        Ok(summary)
    }

    fn run_phase(&mut self, id: PhaseId) -> Result<PhaseLog, TrainingError> {
        tracing::info!(iteration = id.iteration, phase = id.phase.as_str(), "phase start");
        match id.phase {
            Phase::Teacher => self.run_teacher_phase(id.iteration),
            Phase::Student => self.run_student_phase(id.iteration),
        }
    }

    /// Runs every phase after `resume_after` (all phases when `None`), then
    /// writes the corpus with its revision histories next to the run log.
    pub fn run(&mut self, resume_after: Option<PhaseId>) -> Result<TrainingLog, TrainingError> {
        self.open_logs()?;
        for id in self.schedule.phases() {
            if resume_after.is_some_and(|done| id <= done) {
                continue;
            }
            self.run_phase(id)?;
        }
        let revised = self.output.join(REVISED_CORPUS_FILE);
        crate::corpus::save_corpus(&revised, &self.corpus).map_err(|e| TrainingError::Checkpoint(e.to_string()))?;
        let log_path = self.output.join(RUN_LOG_FILE);
        Ok(TrainingLog { steps: step_summaries(&read_run_log(&log_path)?), log_path })
    }
}

#[derive(Clone, Copy)]
enum TeacherOrStudent {
    Teacher,
    Student,
}

/// Full run, optionally continuing from a checkpoint directory.
pub fn run_adversarial_training(trainer: &mut Trainer<'_>, resume: Option<&Path>) -> Result<TrainingLog, TrainingError> {
    let after = match resume {
        Some(path) => Some(trainer.restore(&Checkpoint::load(path)?)?),
        None => None,
    };
    trainer.run(after)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_order() {
        let mut s = TrainingSchedule::new(2, 1, 1, 1, 0);
        let names: Vec<String> = s.phases().iter().map(PhaseId::dir_name).collect();
        assert_eq!(names, ["iter001_teacher", "iter001_student", "iter002_teacher", "iter002_student"]);
        s.pretrain_teacher_steps = 3;
        assert_eq!(s.phases()[0], PhaseId { iteration: 0, phase: Phase::Teacher });
        assert!(s.phases().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn schedule_validation() {
        assert!(TrainingSchedule::new(0, 1, 1, 1, 0).validate().is_err());
        assert!(TrainingSchedule::new(1, 1, 0, 1, 0).validate().is_err());
        assert!(TrainingSchedule::new(1, 1, 1, 1, 0).validate().is_ok());
        let parsed: Result<TrainingSchedule, _> = toml::from_str("teacher_steps = 4");
        assert!(parsed.is_err());
        let parsed: TrainingSchedule = toml::from_str("iterations = 3").unwrap();
        assert_eq!((parsed.teacher_steps, parsed.student_steps), (40, 100));
    }

    #[test]
    fn prompt_carries_both_texts() {
        let p = teacher_prompt("KERNEL", "PREVIOUS");
        assert!(p.contains("KERNEL") && p.contains("PREVIOUS") && p.contains("<answer>"));
    }
}
