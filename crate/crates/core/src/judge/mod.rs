//! Code judge: compile a submission, run it on each test case in a fresh
//! process and working directory, and compare normalized outputs.
//!
//! Isolation is process-level: cleared environment, per-run temporary
//! directory, its own process group, and rlimits on address space, CPU time
//! and written file size. It is not a security boundary against hostile code.

mod sandbox;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{outputs_match, TestCase};
use crate::limit::Semaphore;
use sandbox::{execute, ExecRequest, ExecResult, ExecStatus};

/// Environment variable naming the directory that holds sandbox directories.
pub const SANDBOX_ROOT_ENV: &str = "ADVRL_SANDBOX_ROOT";

const SOURCE_FILE: &str = "main.cpp";
const ARTIFACT_FILE: &str = "prog";
const COMPILE_LOG_CAP: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("sandbox setup failed: {0}")]
    SandboxSetup(String),
    #[error("generator failed: {0}")]
    GeneratorFailure(GeneratorFailure),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorFailure {
    NonZeroExit(i32),
    Signal(i32),
    TimeLimit,
    OutputLimit,
}

impl std::fmt::Display for GeneratorFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeneratorFailure::NonZeroExit(c) => write!(f, "exited with status {c}"),
            GeneratorFailure::Signal(s) => write!(f, "killed by signal {s}"),
            GeneratorFailure::TimeLimit => f.write_str("time limit exceeded"),
            GeneratorFailure::OutputLimit => f.write_str("output limit exceeded"),
        }
    }
}

fn setup<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> JudgeError + '_ {
    move |e| JudgeError::SandboxSetup(format!("{context}: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceLimits {
    pub compile_timeout_secs: f64,
    pub run_timeout_secs: f64,
    pub memory_limit_bytes: u64,
    pub output_limit_bytes: u64,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            compile_timeout_secs: 10.0,
            run_timeout_secs: 2.0,
            memory_limit_bytes: 256 << 20,
            output_limit_bytes: 1 << 20,
        }
    }
}

impl ResourceLimits {
    pub fn validate(&self) -> Result<(), String> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.compile_timeout_secs) || !positive(self.run_timeout_secs) {
            return Err("timeouts must be positive".into());
        }
        if self.memory_limit_bytes == 0 || self.output_limit_bytes == 0 {
            return Err("memory and output limits must be positive".into());
        }
        Ok(())
    }

    fn compile_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.compile_timeout_secs)
    }

    fn run_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.run_timeout_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Pass,
    WrongAnswer,
    TimeLimit,
    RuntimeError,
    OutputLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub outcome: Outcome,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregate {
    Accepted,
    Failed,
    CompileError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub compile_ok: bool,
    pub compile_log: String,
    pub per_test: Vec<TestOutcome>,
    pub aggregate: Aggregate,
}

impl VerdictReport {
    pub fn accepted(&self) -> bool {
        self.aggregate == Aggregate::Accepted
    }

    pub fn outcomes(&self) -> Vec<Outcome> {
        self.per_test.iter().map(|t| t.outcome).collect()
    }

    fn from_parts(compile_ok: bool, compile_log: String, per_test: Vec<TestOutcome>) -> Self {
        let aggregate = if !compile_ok {
            Aggregate::CompileError
        } else if per_test.iter().all(|t| t.outcome == Outcome::Pass) {
            Aggregate::Accepted
        } else {
            Aggregate::Failed
        };
        Self { compile_ok, compile_log, per_test, aggregate }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileResult {
    pub ok: bool,
    pub log: String,
    pub artifact: Option<PathBuf>,
}

/// Raw result of running a program once.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub outcome: RunStatus,
    pub stdout: Vec<u8>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Exited(i32),
    Signaled(i32),
    TimeLimit,
    OutputLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeConfig {
    /// Compiler argv; `{source}` and `{artifact}` are substituted.
    #[serde(default = "default_compiler")]
    pub compiler: Vec<String>,
    #[serde(default)]
    pub limits: ResourceLimits,
    /// Directory for sandbox directories; falls back to `ADVRL_SANDBOX_ROOT`
    /// and then the system temp directory.
    #[serde(default)]
    pub sandbox_root: Option<PathBuf>,
    /// Concurrent jobs; defaults to the number of logical CPUs.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub fail_fast: bool,
    /// Memoize verdicts by (compiler, source, tests, limits).
    #[serde(default = "default_cache")]
    pub cache: bool,
}

fn default_compiler() -> Vec<String> {
    ["g++", "-O0", "-std=c++17", "-o", "{artifact}", "{source}"].map(String::from).to_vec()
}

fn default_cache() -> bool {
    true
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            compiler: default_compiler(),
            limits: ResourceLimits::default(),
            sandbox_root: None,
            workers: None,
            fail_fast: false,
            cache: true,
        }
    }
}

/// Shareable judge handle with a bounded worker pool.
pub struct Judge {
    config: JudgeConfig,
    sandbox_root: PathBuf,
    pool: Semaphore,
    cache: Mutex<HashMap<[u8; 32], VerdictReport>>,
}

impl std::fmt::Debug for Judge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Judge").field("config", &self.config).finish_non_exhaustive()
    }
}

const COMPILE_PATH: &str = "/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin";

impl Judge {
    pub fn new(config: JudgeConfig) -> Result<Self, JudgeError> {
        config.limits.validate().map_err(JudgeError::SandboxSetup)?;
        if config.compiler.is_empty() {
            return Err(JudgeError::SandboxSetup("empty compiler command".into()));
        }
        let sandbox_root = config
            .sandbox_root
            .clone()
            .or_else(|| std::env::var_os(SANDBOX_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(std::env::temp_dir);
        std::fs::create_dir_all(&sandbox_root).map_err(setup("sandbox root"))?;
        let workers = config
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        Ok(Self { pool: Semaphore::new(workers), sandbox_root, config, cache: Mutex::new(HashMap::new()) })
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.config
    }

    pub fn limits(&self) -> &ResourceLimits {
        &self.config.limits
    }

    /// A fresh private directory under the sandbox root, removed on drop.
    pub fn scratch_dir(&self) -> Result<tempfile::TempDir, JudgeError> {
        tempfile::Builder::new()
            .prefix("advrl-")
            .tempdir_in(&self.sandbox_root)
            .map_err(setup("sandbox directory"))
    }

    pub fn compile(&self, source: &str, limits: &ResourceLimits, workdir: &Path) -> Result<CompileResult, JudgeError> {
        let _permit = self.pool.acquire();
        self.compile_unpooled(source, limits, workdir)
    }

    fn compile_unpooled(&self, source: &str, limits: &ResourceLimits, workdir: &Path) -> Result<CompileResult, JudgeError> {
        let source_path = workdir.join(SOURCE_FILE);
        let artifact = workdir.join(ARTIFACT_FILE);
        std::fs::write(&source_path, source).map_err(setup("writing source"))?;
        let argv: Vec<String> = self
            .config
            .compiler
            .iter()
            .map(|a| {
                a.replace("{source}", &source_path.to_string_lossy())
                    .replace("{artifact}", &artifact.to_string_lossy())
            })
            .collect();
        let env = [
            ("PATH", COMPILE_PATH.to_string()),
            ("TMPDIR", workdir.to_string_lossy().into_owned()),
            ("HOME", workdir.to_string_lossy().into_owned()),
            ("LC_ALL", "C".to_string()),
        ];
        let program = Path::new(&argv[0]);
        let result = execute(&ExecRequest {
            program,
            args: &argv[1..],
            cwd: workdir,
            env: &env,
            stdin: &[],
            timeout: limits.compile_timeout(),
            output_limit: COMPILE_LOG_CAP,
            memory_limit: None,
            confine: false,
        })
        .map_err(setup("spawning compiler"))?;

        let mut log = String::from_utf8_lossy(&result.stdout).into_owned();
        log.push_str(&String::from_utf8_lossy(&result.stderr));
        let ok = match result.status {
            ExecStatus::Exited(0) => artifact.is_file(),
            ExecStatus::TimedOut => {
                log.push_str(&format!("\n[compile timed out after {} s]\n", limits.compile_timeout_secs));
                false
            }
            ExecStatus::OutputExceeded => {
                log.push_str("\n[compiler output limit exceeded]\n");
                false
            }
            _ => false,
        };
        Ok(CompileResult { ok, log, artifact: ok.then_some(artifact) })
    }

    /// Runs `artifact` once with `input` on stdin and `args` as arguments,
    /// in a fresh directory with an empty environment.
    pub fn run_program(
        &self,
        artifact: &Path,
        args: &[String],
        input: &[u8],
        limits: &ResourceLimits,
    ) -> Result<RunResult, JudgeError> {
        let dir = self.scratch_dir()?;
        let r: ExecResult = execute(&ExecRequest {
            program: artifact,
            args,
            cwd: dir.path(),
            env: &[],
            stdin: input,
            timeout: limits.run_timeout(),
            output_limit: limits.output_limit_bytes,
            memory_limit: Some(limits.memory_limit_bytes),
            confine: true,
        })
        .map_err(setup("spawning program"))?;
        let outcome = match r.status {
            ExecStatus::Exited(c) => RunStatus::Exited(c),
            ExecStatus::Signaled(s) => RunStatus::Signaled(s),
            ExecStatus::TimedOut => RunStatus::TimeLimit,
            ExecStatus::OutputExceeded => RunStatus::OutputLimit,
        };
        Ok(RunResult { outcome, stdout: r.stdout, runtime_secs: r.elapsed.as_secs_f64() })
    }

    pub fn run_tests(&self, artifact: &Path, tests: &[TestCase], limits: &ResourceLimits) -> Result<Vec<TestOutcome>, JudgeError> {
        let _permit = self.pool.acquire();
        self.run_tests_unpooled(artifact, tests, limits)
    }

    fn run_tests_unpooled(&self, artifact: &Path, tests: &[TestCase], limits: &ResourceLimits) -> Result<Vec<TestOutcome>, JudgeError> {
        let mut outcomes = Vec::with_capacity(tests.len());
        for test in tests {
            let run = self.run_program(artifact, &[], &test.input, limits)?;
            let outcome = match run.outcome {
                RunStatus::Exited(0) if outputs_match(&run.stdout, &test.expected_output) => Outcome::Pass,
                RunStatus::Exited(0) => Outcome::WrongAnswer,
                RunStatus::Exited(_) | RunStatus::Signaled(_) => Outcome::RuntimeError,
                RunStatus::TimeLimit => Outcome::TimeLimit,
                RunStatus::OutputLimit => Outcome::OutputLimit,
            };
            outcomes.push(TestOutcome { outcome, runtime_secs: run.runtime_secs });
            if self.config.fail_fast && outcome != Outcome::Pass {
                break;
            }
        }
        Ok(outcomes)
    }

    /// Compile, then run every test. Verdicts are memoized when the cache is
    /// enabled.
    pub fn judge(&self, source: &str, tests: &[TestCase], limits: &ResourceLimits) -> Result<VerdictReport, JudgeError> {
        let key = self.config.cache.then(|| self.cache_key(source, tests, limits));
        if let Some(k) = &key {
            if let Some(hit) = self.cache.lock().expect("judge cache poisoned").get(k) {
                return Ok(hit.clone());
            }
        }
        let report = {
            let _permit = self.pool.acquire();
            let dir = self.scratch_dir()?;
            let compiled = self.compile_unpooled(source, limits, dir.path())?;
            match &compiled.artifact {
                Some(artifact) if compiled.ok => {
                    let per_test = self.run_tests_unpooled(artifact, tests, limits)?;
                    VerdictReport::from_parts(true, compiled.log, per_test)
                }
                _ => VerdictReport::from_parts(false, compiled.log, Vec::new()),
            }
        };
        if let Some(k) = key {
            self.cache.lock().expect("judge cache poisoned").entry(k).or_insert_with(|| report.clone());
        }
        Ok(report)
    }

    /// Runs a test generator with `seed` as its only argument and returns its
    /// standard output.
    pub fn run_generator(&self, artifact: &Path, seed: u64, limits: &ResourceLimits) -> Result<Vec<u8>, JudgeError> {
        let _permit = self.pool.acquire();
        let run = self.run_program(artifact, &[seed.to_string()], &[], limits)?;
        match run.outcome {
            RunStatus::Exited(0) => Ok(run.stdout),
            RunStatus::Exited(c) => Err(JudgeError::GeneratorFailure(GeneratorFailure::NonZeroExit(c))),
            RunStatus::Signaled(s) => Err(JudgeError::GeneratorFailure(GeneratorFailure::Signal(s))),
            RunStatus::TimeLimit => Err(JudgeError::GeneratorFailure(GeneratorFailure::TimeLimit)),
            RunStatus::OutputLimit => Err(JudgeError::GeneratorFailure(GeneratorFailure::OutputLimit)),
        }
    }

    fn cache_key(&self, source: &str, tests: &[TestCase], limits: &ResourceLimits) -> [u8; 32] {
        let mut h = Sha256::new();
        let mut field = |bytes: &[u8]| {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        for arg in &self.config.compiler {
            field(arg.as_bytes());
        }
        field(source.as_bytes());
        field(&serde_json::to_vec(limits).expect("limits serialize"));
        field(&[self.config.fail_fast as u8]);
        for t in tests {
            field(&t.input);
            field(&t.expected_output);
        }
        h.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn judge() -> Judge {
        Judge::new(JudgeConfig { cache: false, ..JudgeConfig::default() }).unwrap()
    }

    fn tc(input: &str, output: &str) -> TestCase {
        TestCase { input: input.as_bytes().to_vec(), expected_output: output.as_bytes().to_vec() }
    }

    const ECHO: &str = "#include <cstdio>\nint main(){int x; if(scanf(\"%d\",&x)!=1) return 1; printf(\"%d\\n\",x);}";

    #[test]
    fn compile_good_and_bad() {
        let j = judge();
        let dir = j.scratch_dir().unwrap();
        let ok = j.compile("int main(){return 0;}", j.limits(), dir.path()).unwrap();
        assert!(ok.ok && ok.artifact.as_ref().unwrap().is_file());
        let dir2 = j.scratch_dir().unwrap();
        let bad = j.compile("int main({", j.limits(), dir2.path()).unwrap();
        assert!(!bad.ok && !bad.log.is_empty() && bad.artifact.is_none());
    }

    #[test]
    fn compile_timeout_is_marked() {
        let j = judge();
        let limits = ResourceLimits { compile_timeout_secs: 2.0, ..ResourceLimits::default() };
        let dir = j.scratch_dir().unwrap();
        let src = "constexpr long long fib(int n){return n<2?n:fib(n-1)+fib(n-2);}\nstatic_assert(fib(38)>0);\nint main(){}";
        let start = std::time::Instant::now();
        let r = j.compile(src, &limits, dir.path()).unwrap();
        assert!(!r.ok);
        assert!(r.log.contains("compile timed out"), "{}", r.log);
        assert!(start.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn missing_compiler_is_setup_failure() {
        let j = Judge::new(JudgeConfig { compiler: vec!["/nonexistent/cc".into()], ..JudgeConfig::default() }).unwrap();
        let dir = j.scratch_dir().unwrap();
        assert!(matches!(j.compile("x", j.limits(), dir.path()), Err(JudgeError::SandboxSetup(_))));
    }

    #[test]
    fn run_outcomes() {
        let j = judge();
        let r = j.judge(ECHO, &[tc("1\n", "1\n")], j.limits()).unwrap();
        assert_eq!(r.outcomes(), vec![Outcome::Pass]);
        assert!(r.accepted());

        let wrong = j.judge("#include <cstdio>\nint main(){puts(\"2\");}", &[tc("1\n", "1\n")], j.limits()).unwrap();
        assert_eq!(wrong.outcomes(), vec![Outcome::WrongAnswer]);
        assert_eq!(wrong.aggregate, Aggregate::Failed);

        let crash = j.judge("int main(){return 3;}", &[tc("", "")], j.limits()).unwrap();
        assert_eq!(crash.outcomes(), vec![Outcome::RuntimeError]);
    }

    #[test]
    fn infinite_loop_times_out() {
        let j = judge();
        let limits = ResourceLimits { run_timeout_secs: 1.0, ..ResourceLimits::default() };
        let r = j.judge("int main(){volatile int x=0; while(true){x++;}}", &[tc("", "")], &limits).unwrap();
        assert_eq!(r.outcomes(), vec![Outcome::TimeLimit]);
        assert!(r.per_test[0].runtime_secs >= 1.0);
        assert!(r.per_test[0].runtime_secs < 1.5);
    }

    #[test]
    fn compile_error_has_no_tests() {
        let j = judge();
        let r = j.judge("int main({", &[tc("1", "1")], j.limits()).unwrap();
        assert_eq!(r.aggregate, Aggregate::CompileError);
        assert!(r.per_test.is_empty() && !r.compile_ok);
    }

    #[test]
    fn one_wrong_test_is_localized() {
        let j = judge();
        // Off by one only when the input is 7.
        let src = "#include <cstdio>\nint main(){int x; scanf(\"%d\",&x); printf(\"%d\\n\", x==7 ? x+1 : x);}";
        let r = j.judge(src, &[tc("1\n", "1\n"), tc("7\n", "7\n"), tc("3\n", "3\n")], j.limits()).unwrap();
        assert_eq!(r.outcomes(), vec![Outcome::Pass, Outcome::WrongAnswer, Outcome::Pass]);
        assert_eq!(r.aggregate, Aggregate::Failed);
    }

    #[test]
    fn fail_fast_stops_early() {
        let j = Judge::new(JudgeConfig { fail_fast: true, cache: false, ..JudgeConfig::default() }).unwrap();
        let r = j.judge("#include <cstdio>\nint main(){puts(\"0\");}", &[tc("", "1"), tc("", "0")], j.limits()).unwrap();
        assert_eq!(r.outcomes(), vec![Outcome::WrongAnswer]);
    }

    #[test]
    fn generators() {
        let j = judge();
        let dir = j.scratch_dir().unwrap();
        let gen = "#include <cstdio>\n#include <cstdlib>\nint main(int c,char**v){srand(atoi(v[1])); printf(\"%d\\n\", rand()%1000);}";
        let art = j.compile(gen, j.limits(), dir.path()).unwrap().artifact.unwrap();
        assert_eq!(j.run_generator(&art, 7, j.limits()).unwrap(), j.run_generator(&art, 7, j.limits()).unwrap());

        let dir = j.scratch_dir().unwrap();
        let art = j.compile("int main(){return 1;}", j.limits(), dir.path()).unwrap().artifact.unwrap();
        assert!(matches!(
            j.run_generator(&art, 1, j.limits()),
            Err(JudgeError::GeneratorFailure(GeneratorFailure::NonZeroExit(1)))
        ));

        let dir = j.scratch_dir().unwrap();
        let flood = "#include <cstdio>\nint main(){for(;;) fputs(\"xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx\\n\", stdout);}";
        let art = j.compile(flood, j.limits(), dir.path()).unwrap().artifact.unwrap();
        let limits = ResourceLimits { output_limit_bytes: 1 << 20, ..ResourceLimits::default() };
        assert!(matches!(
            j.run_generator(&art, 1, &limits),
            Err(JudgeError::GeneratorFailure(GeneratorFailure::OutputLimit))
        ));
    }

    #[test]
    fn environment_is_cleared_and_runs_are_isolated() {
        std::env::set_var("ADVRL_TEST_SECRET", "hunter2");
        let j = judge();
        let src = "#include <cstdio>\n#include <cstdlib>\nint main(){const char* s=getenv(\"ADVRL_TEST_SECRET\"); puts(s? s : \"none\");}";
        let r = j.judge(src, &[tc("", "none\n")], j.limits()).unwrap();
        assert!(r.accepted());

        // The first run leaves a marker file; the next run must not see it.
        let src = "#include <cstdio>\nint main(){FILE* f=fopen(\"marker\",\"r\"); if(f){puts(\"seen\");return 0;} f=fopen(\"marker\",\"w\"); fputs(\"x\",f); fclose(f); puts(\"fresh\");}";
        let r = j.judge(src, &[tc("", "fresh"), tc("", "fresh")], j.limits()).unwrap();
        assert!(r.accepted(), "{:?}", r);
    }

    #[test]
    fn cache_returns_identical_reports() {
        let j = Judge::new(JudgeConfig::default()).unwrap();
        let a = j.judge(ECHO, &[tc("5\n", "5\n")], j.limits()).unwrap();
        let b = j.judge(ECHO, &[tc("5\n", "5\n")], j.limits()).unwrap();
        assert_eq!(a, b);
    }
}
