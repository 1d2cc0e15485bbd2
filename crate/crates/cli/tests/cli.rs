use std::net::TcpListener;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use advrl_core::corpus::{save_corpus, ProblemTriplet, TestCase};

const SUM_KERNEL: &str = "Description: Compute the sum of two integers A and B.
Input: One line with two integers A and B.
Output: Print A + B.
Example: for the input 1 2 the output is 3.
Constraints: absolute values are at most one billion.";
const SUM_RIGHT: &str =
    "#include <cstdio>\nint main(){long long a,b;scanf(\"%lld %lld\",&a,&b);printf(\"%lld\\n\",a+b);}";
const SUM_WRONG: &str =
    "#include <cstdio>\nint main(){long long a,b;scanf(\"%lld %lld\",&a,&b);printf(\"%lld\\n\",a-b);}";
const PAIR_GENERATOR: &str = "#include <cstdio>\n#include <cstdlib>\nint main(int argc,char**argv){unsigned s=(unsigned)atoll(argv[1]);printf(\"%d %d\\n\",(int)(s*7919u%2001u)-1000,(int)(s*104729u%2001u)-1000);}";

fn advrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advrl")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn sum_triplet(id: &str) -> ProblemTriplet {
    let mut t = ProblemTriplet::new(id, SUM_KERNEL);
    t.generator_source = PAIR_GENERATOR.into();
    t.reference_source = SUM_RIGHT.into();
    t.test_cases = vec![
        TestCase { input: b"1 2\n".to_vec(), expected_output: b"3\n".to_vec() },
        TestCase { input: b"-5 5\n".to_vec(), expected_output: b"0\n".to_vec() },
    ];
    t
}

fn toml_str(s: &str) -> String {
    serde_json::to_string(s).unwrap()
}

fn tagged(think: &str, answer: &str) -> String {
    format!("<think>{think}</think>\n<answer>{answer}</answer>")
}

fn cpp_answer(code: &str) -> String {
    tagged("solve", &format!("\n```cpp\n{code}\n```\n"))
}

fn scripted(responses: &[String]) -> String {
    let list: Vec<String> = responses.iter().map(|r| toml_str(r)).collect();
    format!("backend = \"scripted\"\n[[{{role}}.policy.script.fallback]]\nresponses = [{}]\n", list.join(", "))
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(corpus: &[ProblemTriplet]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&dir.path().join("corpus.jsonl"), corpus).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Writes `run.toml` with scripted roles and returns its path.
    fn config(&self, extra: &str, teacher: &[String], student: &[String]) -> String {
        let role = |name: &str, responses: &[String]| {
            format!(
                "[{name}]\nsampling = {{ temperature = 0.7, max_completion_length = 2000, group_size = 3 }}\n[{name}.policy]\n{}",
                scripted(responses).replace("{role}", name)
            )
        };
        let text = format!(
            "corpus = \"corpus.jsonl\"\noutput = \"out\"\nseed = 3\n{extra}\n{}\n{}",
            role("teacher", teacher),
            role("student", student)
        );
        let path = self.path("run.toml");
        std::fs::write(&path, text).unwrap();
        path.to_string_lossy().into_owned()
    }

    fn default_config(&self, extra: &str) -> String {
        self.config(extra, &[tagged("same", SUM_KERNEL)], &[cpp_answer(SUM_RIGHT), cpp_answer(SUM_WRONG)])
    }
}

const SMOKE: &str = "[schedule]\niterations = 1\nteacher_steps = 2\nstudent_steps = 3\n";

fn smoke_run(ws: &Workspace) -> PathBuf {
    let cfg = ws.default_config(SMOKE);
    let out = advrl(&["train", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    ws.path("out")
}

#[test]
fn validate_dataset_exit_codes() {
    let ws = Workspace::new(&[sum_triplet("a"), sum_triplet("b")]);
    let cfg = ws.default_config("");
    let out = advrl(&["validate-dataset", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let reports = std::fs::read_to_string(ws.path("out/validation_reports.jsonl")).unwrap();
    assert_eq!(reports.lines().count(), 2);

    let mut broken = sum_triplet("broken");
    broken.reference_source = "int main( {".into();
    let ws = Workspace::new(&[sum_triplet("a"), broken]);
    let cfg = ws.default_config("");
    let out = advrl(&["validate-dataset", "--config", &cfg]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("discarded broken at ReferenceCompile"), "{}", stdout(&out));

    std::fs::remove_file(ws.path("corpus.jsonl")).unwrap();
    assert_eq!(code(&advrl(&["validate-dataset", "--config", &cfg])), 2);
    assert_eq!(code(&advrl(&["validate-dataset"])), 2);
    assert_eq!(code(&advrl(&["validate-dataset", "--config", &ws.path("nope.toml").to_string_lossy()])), 2);
}

#[test]
fn validate_dataset_builds_from_raw_kernels() {
    let ws = Workspace::new(&[]);
    let raw = ws.path("raw.txt");
    std::fs::write(&raw, "[sum] add two numbers\n\n[bad] anything\n").unwrap();
    let oracle = format!(
        "test_count = 3\n[oracle]\nkind = \"stub\"\n[[oracle.synthesis]]\nkernel_contains = \"[sum]\"\ngenerator = {}\nreference = {}\n",
        toml_str(PAIR_GENERATOR),
        toml_str(SUM_RIGHT)
    );
    let cfg = ws.default_config(&oracle);
    let out = advrl(&["validate-dataset", "--config", &cfg, "--raw", &raw.to_string_lossy()]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let built = advrl_core::corpus::load_corpus(&ws.path("out/corpus.jsonl")).unwrap();
    assert_eq!(built.len(), 1);
    assert_eq!(built[0].test_cases.len(), 3);
}

#[test]
fn judge_command() {
    let ws = Workspace::new(&[sum_triplet("sum")]);
    let cfg = ws.default_config("");
    let src = ws.path("a.cpp");
    std::fs::write(&src, SUM_RIGHT).unwrap();
    let out = advrl(&["judge", "--config", &cfg, "--problem", "sum", &src.to_string_lossy()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("\"Accepted\""));
    std::fs::write(&src, SUM_WRONG).unwrap();
    let out = advrl(&["judge", "--config", &cfg, "--problem", "sum", &src.to_string_lossy()]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("WrongAnswer"));
    assert_eq!(code(&advrl(&["judge", "--config", &cfg, "--problem", "nope", &src.to_string_lossy()])), 2);
}

#[test]
fn train_smoke_dry_run_and_resume() {
    let ws = Workspace::new(&[sum_triplet("sum")]);
    let cfg = ws.default_config(SMOKE);
    let out = advrl(&["train", "--config", &cfg, "--dry-run"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("iter001_student"));
    assert!(!ws.path("out").exists());

    let clock = Instant::now();
    let out_dir = smoke_run(&ws);
    assert!(clock.elapsed() < Duration::from_secs(60));
    let log = std::fs::read(out_dir.join("run_log.jsonl")).unwrap();
    assert!(out_dir.join("checkpoints/iter001_student/state.json").exists());

    let resumed = advrl(&[
        "train",
        "--config",
        &cfg,
        "--resume",
        &out_dir.join("checkpoints/iter001_teacher").to_string_lossy(),
    ]);
    assert_eq!(code(&resumed), 0, "{}", stderr(&resumed));
    assert_eq!(std::fs::read(out_dir.join("run_log.jsonl")).unwrap(), log);

    let other_seed = advrl(&[
        "train",
        "--config",
        &cfg,
        "--seed",
        "99",
        "--resume",
        &out_dir.join("checkpoints/iter001_teacher").to_string_lossy(),
    ]);
    assert_eq!(code(&other_seed), 2);
}

#[test]
fn train_config_errors() {
    let ws = Workspace::new(&[sum_triplet("sum")]);
    let cfg = ws.default_config("[schedule]\nteacher_steps = 2\n");
    let out = advrl(&["train", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("iterations"), "{}", stderr(&out));

    let cfg = ws.default_config("");
    assert_eq!(code(&advrl(&["train", "--config", &cfg])), 2);
    let cfg = ws.default_config(&format!("{SMOKE}unknown_key = 1\n"));
    assert_eq!(code(&advrl(&["train", "--config", &cfg])), 2);
    assert_eq!(code(&advrl(&["train", "--bogus-flag"])), 2);
}

#[test]
fn eval_writes_reports() {
    let ws = Workspace::new(&[sum_triplet("sum"), sum_triplet("sum2")]);
    let cfg = ws.config("[eval]\nn = 3\n", &[tagged("same", SUM_KERNEL)], &[cpp_answer(SUM_RIGHT)]);
    let out = advrl(&["eval", "--config", &cfg, "--method", "base", "--benchmark", "fixture"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("out/eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["aggregate"], 100.0);
    assert_eq!(std::fs::read_to_string(ws.path("out/eval_table.csv")).unwrap(), "method,fixture\nbase,100.000\n");

    let cfg = ws.config("[eval]\nn = 0\n", &[tagged("same", SUM_KERNEL)], &[cpp_answer(SUM_RIGHT)]);
    assert_eq!(code(&advrl(&["eval", "--config", &cfg])), 2);
}

#[test]
fn eval_unreachable_backend_persists_partial_report() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    drop(listener);
    let ws = Workspace::new(&[sum_triplet("sum")]);
    let text = format!(
        "corpus = \"corpus.jsonl\"\noutput = \"out\"\n[eval]\nn = 2\n[student]\nsampling = {{ temperature = 0.2, max_completion_length = 100, group_size = 2 }}\n[student.policy]\nbackend = \"remote\"\nendpoint = {{ url = {}, model = \"m\", max_retries = 1, initial_backoff_ms = 1, max_backoff_ms = 2, timeout_secs = 2 }}\n",
        toml_str(&url)
    );
    let cfg = ws.path("remote.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = advrl(&["eval", "--config", &cfg.to_string_lossy()]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(ws.path("out/eval_report.partial.json").exists());
}

#[test]
fn export_curves_command() {
    let ws = Workspace::new(&[sum_triplet("sum")]);
    let out_dir = smoke_run(&ws);
    let out = advrl(&["export-curves", &out_dir.join("run_log.jsonl").to_string_lossy()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = stdout(&out);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("iteration,phase,step,mean_reward"));
    assert_eq!(lines.count(), 2 + 3);

    let empty = ws.path("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let file = ws.path("curves.csv");
    let out = advrl(&["export-curves", &empty.to_string_lossy(), "--out", &file.to_string_lossy()]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read_to_string(&file).unwrap().lines().count(), 1);

    let corrupt = ws.path("corrupt.jsonl");
    let mut text = std::fs::read_to_string(out_dir.join("run_log.jsonl")).unwrap();
    text.push_str("{not json\n");
    let bad_line = text.lines().count();
    std::fs::write(&corrupt, text).unwrap();
    let out = advrl(&["export-curves", &corrupt.to_string_lossy()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains(&format!("line {bad_line}")), "{}", stderr(&out));
    assert_eq!(code(&advrl(&["export-curves", &ws.path("missing.jsonl").to_string_lossy()])), 2);
}
