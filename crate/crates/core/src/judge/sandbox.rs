//! Child-process execution with wall-clock timeout, output cap and rlimits.
//!
//! Every child becomes the leader of its own process group so a timeout can
//! kill the whole tree (compiler drivers fork helpers).

use std::io::{Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

const POLL: Duration = Duration::from_millis(2);
const STDERR_CAP: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ExecStatus {
    Exited(i32),
    Signaled(i32),
    TimedOut,
    OutputExceeded,
}

#[derive(Debug)]
pub(crate) struct ExecResult {
    pub status: ExecStatus,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub elapsed: Duration,
}

pub(crate) struct ExecRequest<'a> {
    pub program: &'a Path,
    pub args: &'a [String],
    pub cwd: &'a Path,
    pub env: &'a [(&'a str, String)],
    pub stdin: &'a [u8],
    pub timeout: Duration,
    pub output_limit: u64,
    /// Address-space cap; compilers run without one.
    pub memory_limit: Option<u64>,
    /// Caps CPU seconds and written file sizes; used for untrusted programs.
    pub confine: bool,
}

fn set_limit(resource: libc::__rlimit_resource_t, value: u64) -> std::io::Result<()> {
    let lim = libc::rlimit { rlim_cur: value as libc::rlim_t, rlim_max: value as libc::rlim_t };
    // SAFETY: setrlimit only reads the struct we pass.
    if unsafe { libc::setrlimit(resource, &lim) } != 0 {
        return Err(std::io::Error::last_os_error());
    }
    Ok(())
}

fn capped_reader<R: Read + Send + 'static>(
    mut src: R,
    cap: usize,
    exceeded: Option<Arc<AtomicBool>>,
) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match src.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                    if n > room {
                        if let Some(flag) = &exceeded {
                            flag.store(true, Ordering::SeqCst);
                        }
                    }
                }
            }
        }
        kept
    })
}

fn kill_group(pid: u32) {
    // SAFETY: signalling a process group we created; ESRCH is harmless.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

pub(crate) fn execute(req: &ExecRequest<'_>) -> std::io::Result<ExecResult> {
    let mut cmd = Command::new(req.program);
    cmd.args(req.args)
        .current_dir(req.cwd)
        .env_clear()
        .envs(req.env.iter().map(|(k, v)| (*k, v.as_str())))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());

    let memory_limit = req.memory_limit;
    let confine = req.confine;
    let cpu_secs = req.timeout.as_secs() + 2;
    let fsize = req.output_limit;
    // SAFETY: the closure only calls async-signal-safe libc functions.
    unsafe {
        cmd.pre_exec(move || {
            if libc::setpgid(0, 0) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            set_limit(libc::RLIMIT_CORE, 0)?;
            if let Some(bytes) = memory_limit {
                set_limit(libc::RLIMIT_AS, bytes)?;
            }
            if confine {
                set_limit(libc::RLIMIT_CPU, cpu_secs)?;
                set_limit(libc::RLIMIT_FSIZE, fsize)?;
            }
            Ok(())
        });
    }

    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let pid = child.id();

    let mut stdin = child.stdin.take().expect("stdin is piped");
    let input = req.stdin.to_vec();
    let writer = thread::spawn(move || {
        // A program may exit without reading its input; broken pipes are fine.
        let _ = stdin.write_all(&input);
    });
    let exceeded = Arc::new(AtomicBool::new(false));
    let out_cap = usize::try_from(req.output_limit).unwrap_or(usize::MAX);
    let stdout = capped_reader(child.stdout.take().expect("stdout is piped"), out_cap, Some(exceeded.clone()));
    let stderr = capped_reader(child.stderr.take().expect("stderr is piped"), STDERR_CAP, None);

    let status = loop {
        if let Some(st) = child.try_wait()? {
            break match (st.code(), st.signal()) {
                (Some(code), _) => ExecStatus::Exited(code),
                (None, Some(sig)) if sig == libc::SIGXFSZ => ExecStatus::OutputExceeded,
                (None, Some(sig)) if sig == libc::SIGXCPU => ExecStatus::TimedOut,
                (None, Some(sig)) => ExecStatus::Signaled(sig),
                (None, None) => ExecStatus::Signaled(0),
            };
        }
        if exceeded.load(Ordering::SeqCst) {
            kill_group(pid);
            child.wait()?;
            break ExecStatus::OutputExceeded;
        }
        if start.elapsed() > req.timeout {
            kill_group(pid);
            child.wait()?;
            break ExecStatus::TimedOut;
        }
        thread::sleep(POLL);
    };
    let elapsed = start.elapsed();
    // Reap stragglers that escaped the leader's exit.
    kill_group(pid);

    let _ = writer.join();
    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();
    let status = if status != ExecStatus::OutputExceeded && exceeded.load(Ordering::SeqCst) {
        ExecStatus::OutputExceeded
    } else {
        status
    };
    Ok(ExecResult { status, stdout, stderr, elapsed })
}
