//! `advrl` command-line entry point.
//!
//! Exit codes: 0 success, 1 domain failure (discarded triplets, rejected
//! solutions, corrupt logs), 2 configuration or usage error, 3 backend or
//! environment failure.

mod failure;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use advrl_core::config::{build_oracle, build_role, RunConfig};
use advrl_core::corpus::{build_corpus, load_corpus, save_corpus, validate_triplet, BuildOptions, ValidationReport};
use advrl_core::eval::{evaluate, table_csv};
use advrl_core::judge::Judge;
use advrl_core::policy::Policy;
use advrl_core::reward::EquivalenceChecker;
use advrl_core::training::{export_curves, run_adversarial_training, Services, Trainer};
use clap::{Parser, Subcommand, ValueEnum};
use tracing::info;

use failure::{Failure, DOMAIN, OK};

#[derive(Parser)]
#[command(name = "advrl", version, about = "Adversarial teacher/student training for competitive-programming kernels")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the corpus triplets, or build a corpus from raw kernels.
    ValidateDataset {
        /// Text file with one raw kernel statement per line; sources are
        /// synthesized by the oracle and the surviving triplets are written
        /// to `<output>/corpus.jsonl`.
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Judge a C++ source file against one corpus problem.
    Judge {
        source: PathBuf,
        #[arg(long)]
        problem: String,
    },
    /// Run adversarial training.
    Train {
        /// Validate the configuration and print the resolved schedule.
        #[arg(long)]
        dry_run: bool,
        /// Checkpoint directory to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Estimate pass@k of one role's policy on the corpus.
    Eval {
        #[arg(long, value_enum, default_value_t = RoleName::Student)]
        role: RoleName,
        #[arg(long, default_value = "model")]
        method: String,
        #[arg(long, default_value = "corpus")]
        benchmark: String,
    },
    /// Convert a run log into per-step reward curves (CSV).
    ExportCurves {
        run_log: PathBuf,
        /// Destination file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleName {
    Teacher,
    Student,
}

const REPORTS_FILE: &str = "validation_reports.jsonl";
const BUILT_CORPUS_FILE: &str = "corpus.jsonl";
const EVAL_REPORT_FILE: &str = "eval_report.json";
const EVAL_PARTIAL_FILE: &str = "eval_report.partial.json";
const EVAL_TABLE_FILE: &str = "eval_table.csv";

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    if let Command::ExportCurves { run_log, out } = &cli.command {
        return cmd_export_curves(run_log, out.as_deref());
    }
    let path = cli.config.as_deref().ok_or_else(|| Failure::usage("this command needs --config"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = cli.output {
        cfg.output = out;
    }
    match cli.command {
        Command::ValidateDataset { raw } => cmd_validate_dataset(&cfg, raw.as_deref()),
        Command::Judge { source, problem } => cmd_judge(&cfg, &source, &problem),
        Command::Train { dry_run, resume } => cmd_train(&cfg, dry_run, resume.as_deref()),
        Command::Eval { role, method, benchmark } => cmd_eval(&cfg, role, &method, &benchmark),
        Command::ExportCurves { .. } => unreachable!(),
    }
}

fn create_output(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::environment(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::environment(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn write_reports(dir: &Path, reports: &[ValidationReport]) -> Result<(), Failure> {
    let mut text = String::new();
    for r in reports {
        text.push_str(&serde_json::to_string(r).expect("report serializes"));
        text.push('\n');
    }
    write_file(&dir.join(REPORTS_FILE), text)
}

fn cmd_validate_dataset(cfg: &RunConfig, raw: Option<&Path>) -> Result<u8, Failure> {
    let judge = Judge::new(cfg.judge.clone())?;
    let reports = match raw {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            let kernels: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
            let oracle = build_oracle(&cfg.oracle)?;
            let opts = BuildOptions { test_count: cfg.test_count, seed: cfg.seed };
            let (corpus, reports) = build_corpus(&kernels, oracle.as_ref(), &judge, opts)?;
            create_output(&cfg.output)?;
            save_corpus(&cfg.output.join(BUILT_CORPUS_FILE), &corpus)?;
            reports
        }
        None => {
            let corpus = load_corpus(&cfg.corpus)?;
            let reports = corpus.iter().map(|t| validate_triplet(t, &judge)).collect::<Result<Vec<_>, _>>()?;
            create_output(&cfg.output)?;
            reports
        }
    };
    write_reports(&cfg.output, &reports)?;
    let discarded: Vec<_> = reports.iter().filter(|r| r.discarded).collect();
    for r in &discarded {
        println!("discarded {} at {:?}: {}", r.triplet_id, r.failure_stage, r.detail);
    }
    println!("{} of {} triplets valid", reports.len() - discarded.len(), reports.len());
    Ok(if discarded.is_empty() { OK } else { DOMAIN })
}

fn cmd_judge(cfg: &RunConfig, source: &Path, problem: &str) -> Result<u8, Failure> {
    let code = std::fs::read_to_string(source).map_err(|e| Failure::usage(format!("{}: {e}", source.display())))?;
    let corpus = load_corpus(&cfg.corpus)?;
    let triplet = corpus
        .iter()
        .find(|t| t.id == problem)
        .ok_or_else(|| Failure::usage(format!("no problem {problem:?} in {}", cfg.corpus.display())))?;
    let judge = Judge::new(cfg.judge.clone())?;
    let report = judge.judge(&code, &triplet.test_cases, judge.limits())?;
    println!("{}", to_json(&report));
    Ok(if report.accepted() { OK } else { DOMAIN })
}

fn cmd_train(cfg: &RunConfig, dry_run: bool, resume: Option<&Path>) -> Result<u8, Failure> {
    let schedule = cfg.require_schedule()?.clone();
    let corpus = load_corpus(&cfg.corpus)?;
    if dry_run {
        println!("{}", to_json(&schedule));
        println!("seed {}, {} problems, phases:", cfg.seed, corpus.len());
        for phase in schedule.phases() {
            println!("  {}", phase.dir_name());
        }
        return Ok(OK);
    }
    let teacher = build_role(&cfg.teacher)?;
    let student = build_role(&cfg.student)?;
    let equivalence = EquivalenceChecker::new(build_oracle(&cfg.oracle)?);
    let judge = Judge::new(cfg.judge.clone())?;
    let services = Services { judge: &judge, equivalence: &equivalence, similarity_scope: cfg.similarity_scope };
    let mut trainer = Trainer::new(teacher, student, corpus, schedule, services, &cfg.output)?;
    let log = run_adversarial_training(&mut trainer, resume)?;
    for (name, role) in [("teacher", &trainer.teacher), ("student", &trainer.student)] {
        if let Policy::Toy(params) = &role.policy {
            write_file(&cfg.output.join(format!("{name}_params.json")), to_json(params))?;
        }
    }
    info!(steps = log.steps.len(), "training finished");
    println!("{} steps logged to {}", log.steps.len(), log.log_path.display());
    Ok(OK)
}

fn cmd_eval(cfg: &RunConfig, role: RoleName, method: &str, benchmark: &str) -> Result<u8, Failure> {
    let corpus = load_corpus(&cfg.corpus)?;
    let role_cfg = match role {
        RoleName::Teacher => &cfg.teacher,
        RoleName::Student => &cfg.student,
    };
    let policy = build_role(role_cfg)?.policy;
    let judge = Judge::new(cfg.judge.clone())?;
    create_output(&cfg.output)?;
    match evaluate(&policy, &corpus, &cfg.eval, &judge, cfg.seed) {
        Ok(report) => {
            let report = report.labeled(method, benchmark);
            write_file(&cfg.output.join(EVAL_REPORT_FILE), to_json(&report))?;
            let table = table_csv(std::slice::from_ref(&report)).map_err(|e| Failure::environment(e.to_string()))?;
            write_file(&cfg.output.join(EVAL_TABLE_FILE), table)?;
            println!("{method} on {benchmark}: pass@{} = {:.3}", report.k, report.aggregate);
            Ok(OK)
        }
        Err(interrupted) => {
            let partial = interrupted.report.labeled(method, benchmark);
            write_file(&cfg.output.join(EVAL_PARTIAL_FILE), to_json(&partial))?;
            let mut failure = Failure::from(interrupted.error);
            failure.message = format!(
                "evaluation stopped at problem {} after {} scored: {}",
                interrupted.problem,
                partial.problems.len(),
                failure.message
            );
            Err(failure)
        }
    }
}

fn cmd_export_curves(run_log: &Path, out: Option<&Path>) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(run_log).map_err(|e| Failure::usage(format!("{}: {e}", run_log.display())))?;
    let csv = export_curves(&text)?;
    match out {
        Some(path) => write_file(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(OK)
}
