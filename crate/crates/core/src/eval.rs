//! pass@k benchmark harness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ProblemTriplet;
use crate::format::{extract_code, parse_tagged_response};
use crate::judge::{Aggregate, Judge, JudgeError};
use crate::policy::{Policy, PolicyError, SamplingConfig};
use crate::seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("pass@k domain error: {0}")]
    Domain(String),
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
}

/// Unbiased pass@k estimate `1 - C(n-c, k) / C(n, k)`, as a running product.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, EvalError> {
    if c > n {
        return Err(EvalError::Domain(format!("c={c} exceeds n={n}")));
    }
    if k == 0 || k > n {
        return Err(EvalError::Domain(format!("k={k} outside 1..={n}")));
    }
    if n - c < k {
        return Ok(1.0);
    }
    if k == 1 {
        return Ok(c as f64 / n as f64);
    }
    let mut miss = 1.0;
    for i in 0..k {
        miss *= (n - c - i) as f64 / (n - i) as f64;
    }
    Ok(1.0 - miss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n: usize,
    pub k: usize,
    pub temperature: f64,
    pub max_completion_length: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n: 128, k: 1, temperature: 0.2, max_completion_length: SamplingConfig::student().max_completion_length }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.n < 1 {
            return Err(EvalError::InvalidConfig("n must be at least 1".into()));
        }
        if self.k < 1 || self.k > self.n {
            return Err(EvalError::InvalidConfig(format!("k must lie in 1..={}, got {}", self.n, self.k)));
        }
        self.sampling().validate().map_err(EvalError::InvalidConfig)
    }

    fn sampling(&self) -> SamplingConfig {
        SamplingConfig { temperature: self.temperature, max_completion_length: self.max_completion_length, group_size: self.n }
    }
}

/// Per-sample verdict as recorded in the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleVerdict {
    FormatInvalid,
    CompileError,
    Failed,
    Accepted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemScore {
    pub id: String,
    pub n: usize,
    pub c: usize,
    pub pass_at_k: f64,
    pub verdicts: Vec<SampleVerdict>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub benchmark: String,
    pub k: usize,
    pub problems: Vec<ProblemScore>,
    /// Mean pass@k over problems, in percent.
    pub aggregate: f64,
}

impl EvalReport {
    fn assemble(k: usize, problems: Vec<ProblemScore>) -> Self {
        let aggregate = if problems.is_empty() {
            0.0
        } else {
            problems.iter().map(|p| p.pass_at_k).sum::<f64>() / problems.len() as f64 * 100.0
        };
        Self { method: String::new(), benchmark: String::new(), k, problems, aggregate }
    }

    pub fn labeled(mut self, method: &str, benchmark: &str) -> Self {
        self.method = method.to_string();
        self.benchmark = benchmark.to_string();
        self
    }
}

/// Evaluation that stopped early; `report` holds every problem that finished.
#[derive(Debug, Error)]
#[error("evaluation stopped at problem {problem}: {error}")]
pub struct EvalInterrupted {
    pub problem: String,
    pub error: EvalError,
    pub report: EvalReport,
}

fn score_problem(
    policy: &Policy,
    problem: &ProblemTriplet,
    index: usize,
    cfg: &EvalConfig,
    judge: &Judge,
    run_seed: u64,
) -> Result<ProblemScore, EvalError> {
    let sample_seed = seed::derive(run_seed, "eval", &[index as u64]);
    let samples = policy.sample_group(&problem.kernel_text, &cfg.sampling(), sample_seed)?;
    let verdicts = samples
        .par_iter()
        .map(|s| {
            let parsed = parse_tagged_response(&s.text);
            if !parsed.well_formed {
                return Ok(SampleVerdict::FormatInvalid);
            }
            let code = extract_code(parsed.answer_text());
            let report = judge.judge(&code, &problem.test_cases, judge.limits())?;
            Ok(match report.aggregate {
                Aggregate::Accepted => SampleVerdict::Accepted,
                Aggregate::Failed => SampleVerdict::Failed,
                Aggregate::CompileError => SampleVerdict::CompileError,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let c = verdicts.iter().filter(|v| **v == SampleVerdict::Accepted).count();
    let pass = pass_at_k(cfg.n as u64, c as u64, cfg.k as u64)?;
    Ok(ProblemScore { id: problem.id.clone(), n: cfg.n, c, pass_at_k: pass, verdicts })
}

/// Samples `cfg.n` solutions per problem with the kernel text as prompt and
/// judges each against the problem's tests. Malformed samples count as
/// failed attempts.
pub fn evaluate(
    policy: &Policy,
    problems: &[ProblemTriplet],
    cfg: &EvalConfig,
    judge: &Judge,
    seed: u64,
) -> Result<EvalReport, EvalInterrupted> {
    if let Err(error) = cfg.validate() {
        return Err(EvalInterrupted { problem: String::new(), error, report: EvalReport::assemble(cfg.k, vec![]) });
    }
    let results: Vec<_> = problems
        .par_iter()
        .enumerate()
        .map(|(i, p)| score_problem(policy, p, i, cfg, judge, seed))
        .collect();
    let mut done = Vec::new();
    let mut first_error = None;
    for (problem, result) in problems.iter().zip(results) {
        match result {
            Ok(score) => done.push(score),
            Err(e) if first_error.is_none() => first_error = Some((problem.id.clone(), e)),
            Err(_) => {}
        }
    }
    let report = EvalReport::assemble(cfg.k, done);
    match first_error {
        None => Ok(report),
        Some((problem, error)) => Err(EvalInterrupted { problem, error, report }),
    }
}

/// Pivots reports into a method-by-benchmark table of aggregates, with rows
/// and columns in first-seen order.
pub fn table_csv(reports: &[EvalReport]) -> Result<String, csv::Error> {
    let mut methods: Vec<&str> = Vec::new();
    let mut benchmarks: Vec<&str> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        if !benchmarks.contains(&r.benchmark.as_str()) {
            benchmarks.push(&r.benchmark);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("method").chain(benchmarks.iter().copied()))?;
    for m in &methods {
        let mut row = vec![m.to_string()];
        for b in &benchmarks {
            let cell = reports
                .iter()
                .find(|r| r.method == *m && r.benchmark == *b)
                .map_or(String::new(), |r| format!("{:.3}", r.aggregate));
            row.push(cell);
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
