//! Kernel problems with their test-case generator and reference solution,
//! the JSON Lines corpus format, and the validation pipeline that discards
//! triplets whose generator or reference solution does not work.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::judge::{Judge, JudgeError, ResourceLimits, RunStatus};
use crate::reward::{Oracle, OracleError};
use crate::seed;

pub const DEFAULT_TEST_COUNT: usize = 20;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed record on line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("duplicate problem id {0:?}")]
    DuplicateId(String),
    #[error("test count must be positive")]
    InvalidCount,
    #[error("generator failure: {0}")]
    GeneratorFailure(String),
    #[error("reference failure: {0}")]
    ReferenceFailure(String),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    #[serde(with = "b64")]
    pub input: Vec<u8>,
    #[serde(rename = "output", with = "b64")]
    pub expected_output: Vec<u8>,
}

mod b64 {
    use super::*;

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        B64.decode(text.as_bytes()).map_err(serde::de::Error::custom)
    }
}

/// Trims trailing whitespace on every line and trailing newlines at the end.
/// All other bytes compare exactly.
pub fn normalize_output(bytes: &[u8]) -> Vec<u8> {
    let mut out: Vec<u8> = Vec::with_capacity(bytes.len());
    for (i, line) in bytes.split(|b| *b == b'\n').enumerate() {
        if i > 0 {
            out.push(b'\n');
        }
        let end = line.iter().rposition(|b| !b.is_ascii_whitespace()).map_or(0, |p| p + 1);
        out.extend_from_slice(&line[..end]);
    }
    while out.last() == Some(&b'\n') {
        out.pop();
    }
    out
}

pub fn outputs_match(actual: &[u8], expected: &[u8]) -> bool {
    normalize_output(actual) == normalize_output(expected)
}

/// One kernel problem with its generator, reference solution and tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemTriplet {
    pub id: String,
    pub kernel_text: String,
    pub generator_source: String,
    pub reference_source: String,
    #[serde(rename = "tests")]
    pub test_cases: Vec<TestCase>,
    /// Teacher revisions; index `t - 1` holds the revision of iteration `t`.
    #[serde(rename = "revisions")]
    pub revision_history: Vec<String>,
    /// Seed the test cases were materialized with.
    pub seed: Option<u64>,
}

impl ProblemTriplet {
    pub fn new(id: impl Into<String>, kernel_text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kernel_text: kernel_text.into(),
            generator_source: String::new(),
            reference_source: String::new(),
            test_cases: Vec::new(),
            revision_history: Vec::new(),
            seed: None,
        }
    }

    /// The revision stored for the previous iteration, or the kernel itself
    /// when there is none.
    pub fn latest_revision(&self) -> &str {
        self.revision_history.last().map_or(&self.kernel_text, String::as_str)
    }
}

pub fn parse_corpus(text: &str) -> Result<Vec<ProblemTriplet>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: ProblemTriplet = serde_json::from_str(line)
            .map_err(|e| CorpusError::MalformedRecord { line: i + 1, message: e.to_string() })?;
        if !seen.insert(t.id.clone()) {
            return Err(CorpusError::DuplicateId(t.id));
        }
        out.push(t);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<ProblemTriplet>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.into(), source })?;
    parse_corpus(&text)
}

pub fn render_corpus(triplets: &[ProblemTriplet]) -> String {
    let mut out = String::new();
    for t in triplets {
        out.push_str(&serde_json::to_string(t).expect("triplet serializes"));
        out.push('\n');
    }
    out
}

/// Writes the corpus through a temporary file and a rename, so readers never
/// observe a partial file.
pub fn save_corpus(path: &Path, triplets: &[ProblemTriplet]) -> Result<(), CorpusError> {
    write_atomic(path, render_corpus(triplets).as_bytes())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io { path: path.into(), source };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureStage {
    GeneratorCompile,
    GeneratorRun,
    ReferenceCompile,
    ReferenceRun,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub triplet_id: String,
    pub generator_ok: bool,
    pub reference_ok: bool,
    pub discarded: bool,
    pub failure_stage: FailureStage,
    pub detail: String,
}

impl ValidationReport {
    fn failed(id: &str, stage: FailureStage, detail: impl Into<String>) -> Self {
        let generator_ok = matches!(stage, FailureStage::ReferenceCompile | FailureStage::ReferenceRun);
        Self {
            triplet_id: id.to_string(),
            generator_ok,
            reference_ok: false,
            discarded: true,
            failure_stage: stage,
            detail: detail.into(),
        }
    }

    fn passed(id: &str) -> Self {
        Self {
            triplet_id: id.to_string(),
            generator_ok: true,
            reference_ok: true,
            discarded: false,
            failure_stage: FailureStage::None,
            detail: String::new(),
        }
    }
}

fn generator_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

fn describe(status: RunStatus) -> String {
    match status {
        RunStatus::Exited(c) => format!("exited with status {c}"),
        RunStatus::Signaled(s) => format!("killed by signal {s}"),
        RunStatus::TimeLimit => "time limit exceeded".into(),
        RunStatus::OutputLimit => "output limit exceeded".into(),
    }
}

/// Stage-by-stage outcome of compiling and exercising a triplet.
enum Pipeline {
    Failed(FailureStage, String),
    Done(Vec<TestCase>),
}

fn run_pipeline(
    triplet: &ProblemTriplet,
    count: usize,
    seed: u64,
    judge: &Judge,
    limits: &ResourceLimits,
) -> Result<Pipeline, JudgeError> {
    let gen_dir = judge.scratch_dir()?;
    let gen = judge.compile(&triplet.generator_source, limits, gen_dir.path())?;
    let Some(gen_artifact) = gen.artifact.filter(|_| gen.ok) else {
        return Ok(Pipeline::Failed(FailureStage::GeneratorCompile, gen.log));
    };
    let mut inputs = Vec::with_capacity(count);
    for i in 0..count {
        match judge.run_generator(&gen_artifact, generator_seed(seed, i), limits) {
            Ok(input) => inputs.push(input),
            Err(JudgeError::GeneratorFailure(f)) => {
                return Ok(Pipeline::Failed(FailureStage::GeneratorRun, format!("test {i}: {f}")))
            }
            Err(e) => return Err(e),
        }
    }

    let ref_dir = judge.scratch_dir()?;
    let reference = judge.compile(&triplet.reference_source, limits, ref_dir.path())?;
    let Some(ref_artifact) = reference.artifact.filter(|_| reference.ok) else {
        return Ok(Pipeline::Failed(FailureStage::ReferenceCompile, reference.log));
    };
    let mut tests = Vec::with_capacity(count);
    for (i, input) in inputs.into_iter().enumerate() {
        let run = judge.run_program(&ref_artifact, &[], &input, limits)?;
        if run.outcome != RunStatus::Exited(0) {
            return Ok(Pipeline::Failed(FailureStage::ReferenceRun, format!("test {i}: {}", describe(run.outcome))));
        }
        tests.push(TestCase { input, expected_output: run.stdout });
    }
    if !triplet.test_cases.is_empty() {
        let stored = judge.run_tests(&ref_artifact, &triplet.test_cases, limits)?;
        if let Some(i) = stored.iter().position(|t| t.outcome != crate::judge::Outcome::Pass) {
            return Ok(Pipeline::Failed(
                FailureStage::ReferenceRun,
                format!("stored test {i}: {:?}", stored[i].outcome),
            ));
        }
    }
    Ok(Pipeline::Done(tests))
}

/// Generates `count` inputs with seeds `seed, seed + 1, …` and records the
/// reference solution's output for each.
pub fn materialize_tests(
    triplet: &ProblemTriplet,
    count: usize,
    seed: u64,
    judge: &Judge,
) -> Result<ProblemTriplet, CorpusError> {
    if count == 0 {
        return Err(CorpusError::InvalidCount);
    }
    let limits = *judge.limits();
    let fresh = ProblemTriplet { test_cases: Vec::new(), ..triplet.clone() };
    match run_pipeline(&fresh, count, seed, judge, &limits)? {
        Pipeline::Done(tests) => Ok(ProblemTriplet { test_cases: tests, seed: Some(seed), ..triplet.clone() }),
        Pipeline::Failed(stage, detail) => match stage {
            FailureStage::GeneratorCompile | FailureStage::GeneratorRun => Err(CorpusError::GeneratorFailure(detail)),
            _ => Err(CorpusError::ReferenceFailure(detail)),
        },
    }
}

/// Checks that the generator compiles and runs, that the reference solution
/// compiles and runs on every generated input, and that it passes any stored
/// test cases. The first failing stage is reported.
pub fn validate_triplet(triplet: &ProblemTriplet, judge: &Judge) -> Result<ValidationReport, JudgeError> {
    let count = triplet.test_cases.len().max(1).min(DEFAULT_TEST_COUNT);
    let seed = triplet.seed.unwrap_or(0);
    Ok(match run_pipeline(triplet, count, seed, judge, judge.limits())? {
        Pipeline::Done(_) => ValidationReport::passed(&triplet.id),
        Pipeline::Failed(stage, detail) => ValidationReport::failed(&triplet.id, stage, detail),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub test_count: usize,
    pub seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { test_count: DEFAULT_TEST_COUNT, seed: 0 }
    }
}

/// Synthesizes generator and reference sources for every raw kernel text,
/// materializes tests and keeps only triplets that validate. Synthesis
/// happens for all problems before any validation, so an unreachable oracle
/// yields an error and no corpus.
pub fn build_corpus(
    raw_problems: &[String],
    oracle: &dyn Oracle,
    judge: &Judge,
    opts: BuildOptions,
) -> Result<(Vec<ProblemTriplet>, Vec<ValidationReport>), CorpusError> {
    if opts.test_count == 0 {
        return Err(CorpusError::InvalidCount);
    }
    let mut drafts = Vec::with_capacity(raw_problems.len());
    for (i, kernel) in raw_problems.iter().enumerate() {
        let sources = oracle.synthesize(kernel)?;
        let mut t = ProblemTriplet::new(format!("p{i:04}"), kernel.clone());
        t.generator_source = sources.generator;
        t.reference_source = sources.reference;
        drafts.push(t);
    }
    let limits = *judge.limits();
    let results = drafts
        .into_par_iter()
        .enumerate()
        .map(|(i, t)| {
            let seed = seed::derive(opts.seed, "tests", &[i as u64]);
            Ok(match run_pipeline(&t, opts.test_count, seed, judge, &limits)? {
                Pipeline::Done(tests) => {
                    let report = ValidationReport::passed(&t.id);
                    (report, Some(ProblemTriplet { test_cases: tests, seed: Some(seed), ..t }))
                }
                Pipeline::Failed(stage, detail) => (ValidationReport::failed(&t.id, stage, detail), None),
            })
        })
        .collect::<Result<Vec<_>, JudgeError>>()?;
    let (reports, kept): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((kept.into_iter().flatten().collect(), reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_output(b"1 \n2\t\r\n\n\n"), b"1\n2");
        assert!(outputs_match(b"a b\n", b"a b"));
        assert!(!outputs_match(b"a  b", b"a b"));
        assert!(!outputs_match(b" a", b"a"));
        assert_eq!(normalize_output(b""), b"");
    }

    fn sample(id: &str) -> ProblemTriplet {
        let mut t = ProblemTriplet::new(id, "Description: echo\nwith \"quotes\" and ünïcode");
        t.generator_source = "int main(){}".into();
        t.reference_source = "int main(){}".into();
        t.test_cases = vec![TestCase { input: b"1\n".to_vec(), expected_output: vec![0, 255, b'\n'] }];
        t.revision_history = vec!["first".into()];
        t.seed = Some(3);
        t
    }

    #[test]
    fn parse_cases() {
        assert!(parse_corpus("").unwrap().is_empty());
        let three: String = ["a", "b", "c"].map(sample).iter().map(|t| serde_json::to_string(t).unwrap() + "\n").collect();
        let ids: Vec<_> = parse_corpus(&three).unwrap().into_iter().map(|t| t.id).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);

        let broken = format!("{}\n{{\"id\": \"x\", \"kernel_text\": 5}}\n", serde_json::to_string(&sample("a")).unwrap());
        match parse_corpus(&broken) {
            Err(CorpusError::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }

        let dup = render_corpus(&[sample("a"), sample("a")]);
        assert!(matches!(parse_corpus(&dup), Err(CorpusError::DuplicateId(_))));
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut v: serde_json::Value = serde_json::to_value(sample("a")).unwrap();
        v["extra"] = 1.into();
        assert!(parse_corpus(&v.to_string()).is_err());
    }

    #[test]
    fn wire_field_names() {
        let v: serde_json::Value = serde_json::to_value(sample("a")).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        for k in ["id", "kernel_text", "generator_source", "reference_source", "tests", "revisions", "seed"] {
            assert!(keys.contains(&k.to_string()), "missing {k}");
        }
        assert_eq!(v["tests"][0]["input"], "MQo=");
        assert_eq!(v["tests"][0]["output"], "AP8K");
    }

    #[test]
    fn save_load_roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let corpus = vec![sample("a"), sample("b")];
        save_corpus(&path, &corpus).unwrap();
        let first = fs::read(&path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(loaded, corpus);
        save_corpus(&path, &loaded).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_corpus(Path::new("/nonexistent/x.jsonl")), Err(CorpusError::Io { .. })));
    }

    #[test]
    fn latest_revision_falls_back_to_kernel() {
        let mut t = ProblemTriplet::new("a", "kernel");
        assert_eq!(t.latest_revision(), "kernel");
        t.revision_history.push("y1".into());
        assert_eq!(t.latest_revision(), "y1");
    }
}
