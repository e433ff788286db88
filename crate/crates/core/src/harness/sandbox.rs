//! Runs assembled candidate programs in separate process groups.
//!
//! Each candidate gets a fresh temporary working directory, a cleared
//! environment (plus an allowlist), a wall-clock limit and an output cap.
//! On timeout or overflow the whole process group is killed, so forked
//! children do not outlive the verdict.

use std::collections::BTreeMap;
use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Verdict};

/// How to run programs of one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageCommand {
    /// argv with a `{file}` placeholder for the program path.
    pub argv: Vec<String>,
    /// File extension of the written program, without the dot.
    pub extension: String,
    /// Statement appended after the tests to run them.
    pub entry: String,
}

impl LanguageCommand {
    pub fn python() -> Self {
        Self { argv: vec!["python3".into(), "{file}".into()], extension: "py".into(), entry: "test_check()".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    pub commands: BTreeMap<String, LanguageCommand>,
    pub timeout_secs: f64,
    /// Environment variables copied from the parent; everything else is
    /// cleared.
    pub env_allowlist: Vec<String>,
    /// Combined stdout+stderr limit; exceeding it is a crash.
    pub max_output_bytes: usize,
    /// Parent directory for the per-candidate temporary directories
    /// (system temp dir when unset).
    pub work_root: Option<PathBuf>,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            commands: BTreeMap::from([("python".to_string(), LanguageCommand::python())]),
            timeout_secs: 10.0,
            env_allowlist: vec!["PATH".into(), "LANG".into(), "LC_ALL".into(), "SYSTEMROOT".into()],
            max_output_bytes: 1 << 20,
            work_root: None,
        }
    }
}

impl SandboxConfig {
    pub fn command_for(&self, language: &str) -> Result<&LanguageCommand, HarnessError> {
        self.commands.get(language).ok_or_else(|| HarnessError::MissingCommand(language.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.timeout_secs > 0.0) {
            return Err(HarnessError::Config("sandbox timeout must be positive".into()));
        }
        for (lang, cmd) in &self.commands {
            if cmd.argv.is_empty() || !cmd.argv.iter().any(|a| a.contains("{file}")) {
                return Err(HarnessError::Config(format!("command for {lang} needs a {{file}} argument")));
            }
        }
        Ok(())
    }
}

/// Outcome of one sandboxed run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    pub verdict: Verdict,
    /// Deterministic description: exit code, signal, or limit hit.
    pub detail: String,
    pub duration: Duration,
}

/// Writes `program` into a fresh directory and runs it.
///
/// Exit 0 is a pass, exit 1 (failed assertion, uncaught exception) a fail;
/// any other exit code, a signal, or output past the cap is a crash.
pub fn run_program(program: &str, language: &str, cfg: &SandboxConfig) -> Result<Execution, HarnessError> {
    let cmd = cfg.command_for(language)?;
    let mut builder = tempfile::Builder::new();
    builder.prefix("candidate-");
    let dir = match &cfg.work_root {
        Some(root) => builder.tempdir_in(root),
        None => builder.tempdir(),
    }
    .map_err(|e| HarnessError::Io(e.to_string()))?;
    let file = dir.path().join(format!("candidate.{}", cmd.extension));
    std::fs::write(&file, program).map_err(|e| HarnessError::Io(e.to_string()))?;
    let file_arg = file.to_string_lossy();
    let argv: Vec<String> = cmd.argv.iter().map(|a| a.replace("{file}", &file_arg)).collect();

    let mut command = Command::new(&argv[0]);
    command
        .args(&argv[1..])
        .current_dir(dir.path())
        .env_clear()
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    for key in &cfg.env_allowlist {
        if let Some(v) = std::env::var_os(key) {
            command.env(key, v);
        }
    }

    let start = Instant::now();
    let mut child = command.spawn().map_err(|e| HarnessError::Spawn(format!("{}: {e}", argv[0])))?;
    let pgid = child.id() as libc::pid_t;
    let seen = Arc::new(AtomicUsize::new(0));
    let overflow = Arc::new(AtomicBool::new(false));
    let drains: Vec<_> = [
        child.stdout.take().map(|s| Box::new(s) as Box<dyn Read + Send>),
        child.stderr.take().map(|s| Box::new(s) as Box<dyn Read + Send>),
    ]
    .into_iter()
    .flatten()
    .map(|stream| {
        let (seen, overflow, cap) = (seen.clone(), overflow.clone(), cfg.max_output_bytes);
        std::thread::spawn(move || drain(stream, &seen, &overflow, cap))
    })
    .collect();

    let limit = Duration::from_secs_f64(cfg.timeout_secs);
    let mut killed_for: Option<Verdict> = None;
    loop {
        if exited_unreaped(pgid) {
            break;
        }
        if killed_for.is_none() {
            if overflow.load(Ordering::Relaxed) {
                killed_for = Some(Verdict::Crash);
            } else if start.elapsed() >= limit {
                killed_for = Some(Verdict::Timeout);
            }
            if killed_for.is_some() {
                kill_group(pgid);
            }
        }
        std::thread::sleep(Duration::from_millis(2));
    }
    // The leader is a zombie, so the group id cannot have been reused yet;
    // stray members that keep the pipes open are killed here.
    kill_group(pgid);
    let status = child.wait().map_err(|e| HarnessError::Io(e.to_string()))?;
    for d in drains {
        let _ = d.join();
    }
    let duration = start.elapsed();

    let (verdict, detail) = match killed_for {
        Some(Verdict::Timeout) => (Verdict::Timeout, format!("exceeded {}s", cfg.timeout_secs)),
        Some(v) => (v, format!("output exceeded {} bytes", cfg.max_output_bytes)),
        None if overflow.load(Ordering::Relaxed) => {
            (Verdict::Crash, format!("output exceeded {} bytes", cfg.max_output_bytes))
        }
        None => match (status.code(), status.signal()) {
            (Some(0), _) => (Verdict::Pass, "exit 0".into()),
            (Some(1), _) => (Verdict::Fail, "exit 1".into()),
            (Some(c), _) => (Verdict::Crash, format!("exit {c}")),
            (None, Some(sig)) => (Verdict::Crash, format!("signal {sig}")),
            (None, None) => (Verdict::Crash, "unknown exit".into()),
        },
    };
    Ok(Execution { verdict, detail, duration })
}

fn drain(mut stream: Box<dyn Read + Send>, seen: &AtomicUsize, overflow: &AtomicBool, cap: usize) {
    let mut buf = [0u8; 8192];
    loop {
        match stream.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                if seen.fetch_add(n, Ordering::Relaxed) + n > cap {
                    overflow.store(true, Ordering::Relaxed);
                }
            }
        }
    }
}

/// True once the child has exited, without reaping it.
fn exited_unreaped(pid: libc::pid_t) -> bool {
    // SAFETY: waitid writes only into the zeroed siginfo we own.
    unsafe {
        let mut info: libc::siginfo_t = std::mem::zeroed();
        let rc = libc::waitid(libc::P_PID, pid as libc::id_t, &mut info, libc::WEXITED | libc::WNOHANG | libc::WNOWAIT);
        rc == 0 && info.si_pid() != 0
    }
}

fn kill_group(pgid: libc::pid_t) {
    // SAFETY: killpg only sends a signal; a stale group id yields ESRCH.
    unsafe {
        libc::killpg(pgid, libc::SIGKILL);
    }
}
