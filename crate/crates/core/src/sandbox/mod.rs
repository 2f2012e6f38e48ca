//! Child-process execution of generated code.
//!
//! Every execution gets a fresh scratch directory, an allow-listed
//! environment and its own process group, so a timeout can take down the
//! whole tree. When the orchestrator runs as root the child is switched to
//! an unprivileged uid; only the directories it must write are handed over.

mod traceback;

pub use traceback::parse_traceback;

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::os::unix::fs::PermissionsExt;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::model::{to_canonical_json, ExecutionResult, ExitInfo};

/// uid/gid of `nobody` on Linux.
pub const UNPRIVILEGED_ID: u32 = 65534;

const DEFAULT_ENV_ALLOW: &[&str] = &[
    "PATH",
    "LANG",
    "LC_ALL",
    "LC_CTYPE",
    "TZ",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "CUDA_VISIBLE_DEVICES",
];

/// Stream bytes written to disk per execution before the log is truncated.
const MAX_LOG_FILE_BYTES: u64 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    pub interpreter: String,
    pub max_concurrent: usize,
    pub max_output_bytes: usize,
    pub env_allow: Vec<String>,
    /// Switch to `nobody` when running as root.
    pub drop_privileges: bool,
    /// Best effort: a fresh network namespace when the platform allows it.
    pub isolate_network: bool,
    pub memory_limit_mb: Option<u64>,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            interpreter: "python3".into(),
            max_concurrent: 3,
            max_output_bytes: 16 * 1024,
            env_allow: DEFAULT_ENV_ALLOW.iter().map(|s| s.to_string()).collect(),
            drop_privileges: true,
            isolate_network: true,
            memory_limit_mb: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub timeout_s: f64,
    pub max_output_bytes: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ExecRequest {
    pub script: PathBuf,
    pub args: Vec<String>,
    /// Where `stdout.txt`, `stderr.txt` and `result.json` are written.
    pub log_dir: Option<PathBuf>,
    /// Directories the child must be able to write.
    pub writable: Vec<PathBuf>,
    /// Paths the child must be able to read.
    pub readable: Vec<PathBuf>,
    pub env: Vec<(String, String)>,
}

/// Counting semaphore capping concurrent children.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut n = self.free.lock().expect("slots");
        while *n == 0 {
            n = self.cv.wait(n).expect("slots");
        }
        *n -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slots") += 1;
        self.0.cv.notify_one();
    }
}

/// Reentrant executor shared by all track workers of a run.
#[derive(Clone)]
pub struct Sandbox {
    config: SandboxConfig,
    program: PathBuf,
    extra_args: Vec<String>,
    scratch_root: PathBuf,
    slots: Arc<Slots>,
    deadline: Option<Instant>,
    counter: Arc<AtomicU64>,
}

fn resolve_program(name: &str) -> Option<PathBuf> {
    let is_exec = |p: &Path| {
        p.is_file()
            && std::fs::metadata(p)
                .map(|m| m.permissions().mode() & 0o111 != 0)
                .unwrap_or(false)
    };
    if name.contains('/') {
        let p = PathBuf::from(name);
        return is_exec(&p).then_some(p);
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|d| d.join(name))
        .find(|p| is_exec(p))
}

pub fn running_as_root() -> bool {
    // SAFETY: geteuid has no preconditions and cannot fail.
    unsafe { libc::geteuid() == 0 }
}

impl Sandbox {
    /// Resolves the interpreter up front; a missing one is an infrastructure
    /// error, not a script failure.
    pub fn new(config: SandboxConfig, scratch_root: &Path) -> Result<Self> {
        let mut parts = config.interpreter.split_whitespace();
        let first = parts
            .next()
            .ok_or_else(|| Error::InterpreterMissing(config.interpreter.clone()))?;
        let program =
            resolve_program(first).ok_or_else(|| Error::InterpreterMissing(first.to_string()))?;
        let extra_args = parts.map(str::to_string).collect();
        std::fs::create_dir_all(scratch_root)
            .ctx(|| format!("creating scratch root {}", scratch_root.display()))?;
        let slots = Arc::new(Slots {
            free: Mutex::new(config.max_concurrent.max(1)),
            cv: Condvar::new(),
        });
        Ok(Sandbox {
            program,
            extra_args,
            scratch_root: scratch_root.to_path_buf(),
            slots,
            deadline: None,
            counter: Arc::new(AtomicU64::new(0)),
            config,
        })
    }

    /// Clamp every later execution so none runs past `deadline`.
    pub fn with_deadline(mut self, deadline: Instant) -> Self {
        self.deadline = Some(deadline);
        self
    }

    pub fn deadline(&self) -> Option<Instant> {
        self.deadline
    }

    pub fn remaining(&self) -> Option<Duration> {
        self.deadline.map(|d| d.saturating_duration_since(Instant::now()))
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    pub fn limits(&self, timeout_s: f64) -> Limits {
        Limits {
            timeout_s,
            max_output_bytes: self.config.max_output_bytes,
        }
    }

    pub fn drops_privileges(&self) -> bool {
        self.config.drop_privileges && running_as_root()
    }

    fn new_scratch(&self) -> Result<PathBuf> {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let dir = self
            .scratch_root
            .join(format!("exec_{}_{n:05}", std::process::id()));
        std::fs::create_dir_all(&dir).ctx(|| format!("creating scratch {}", dir.display()))?;
        Ok(dir)
    }

    /// Runs `req.script` under the interpreter. Script failures, timeouts and
    /// signals are reported in the result, never as errors.
    pub fn execute(&self, req: &ExecRequest, limits: Limits) -> Result<ExecutionResult> {
        let _slot = self.slots.acquire();
        let scratch = self.new_scratch()?;
        let drop_privs = self.drops_privileges();
        if drop_privs {
            let mut owned = req.writable.clone();
            owned.push(scratch.clone());
            if let Some(l) = &req.log_dir {
                std::fs::create_dir_all(l).ctx(|| format!("creating {}", l.display()))?;
            }
            for w in &owned {
                chown_tree(w, UNPRIVILEGED_ID)?;
                grant_traverse(w)?;
            }
            for r in req.readable.iter().chain(std::iter::once(&req.script)) {
                grant_traverse(r)?;
            }
        }

        let mut timeout = Duration::from_secs_f64(limits.timeout_s.max(0.0));
        let mut clamped = false;
        if let Some(rem) = self.remaining() {
            if rem < timeout {
                timeout = rem;
                clamped = true;
            }
        }

        let mut cmd = Command::new(&self.program);
        cmd.args(&self.extra_args)
            .arg(&req.script)
            .args(&req.args)
            .current_dir(&scratch)
            .env_clear()
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        for key in &self.config.env_allow {
            if let Ok(v) = std::env::var(key) {
                cmd.env(key, v);
            }
        }
        cmd.env("HOME", &scratch)
            .env("TMPDIR", &scratch)
            .env("MPLCONFIGDIR", &scratch)
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONUNBUFFERED", "1")
            .env("PYTHONHASHSEED", "0");
        for (k, v) in &req.env {
            cmd.env(k, v);
        }
        let isolate = self.config.isolate_network;
        let mem = self.config.memory_limit_mb;
        // SAFETY: the closure runs between fork and exec and only makes
        // async-signal-safe libc calls on plain integers.
        unsafe {
            cmd.pre_exec(move || {
                if libc::setpgid(0, 0) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                if isolate {
                    // Ignored when the platform refuses (no privilege, no support).
                    let _ = libc::unshare(libc::CLONE_NEWNET);
                }
                let core = libc::rlimit { rlim_cur: 0, rlim_max: 0 };
                libc::setrlimit(libc::RLIMIT_CORE, &core);
                if let Some(mb) = mem {
                    let bytes = mb.saturating_mul(1 << 20) as libc::rlim_t;
                    let lim = libc::rlimit { rlim_cur: bytes, rlim_max: bytes };
                    libc::setrlimit(libc::RLIMIT_AS, &lim);
                }
                if drop_privs {
                    if libc::setgroups(0, std::ptr::null()) != 0
                        || libc::setgid(UNPRIVILEGED_ID) != 0
                        || libc::setuid(UNPRIVILEGED_ID) != 0
                    {
                        return Err(std::io::Error::last_os_error());
                    }
                }
                Ok(())
            });
        }

        let started = Instant::now();
        let mut child = cmd
            .spawn()
            .ctx(|| format!("spawning {} {}", self.program.display(), req.script.display()))?;
        let pgid = child.id() as i32;
        let log_file = |name: &str| -> Result<Option<std::fs::File>> {
            match &req.log_dir {
                Some(d) => {
                    std::fs::create_dir_all(d).ctx(|| format!("creating {}", d.display()))?;
                    let p = d.join(name);
                    Ok(Some(std::fs::File::create(&p).ctx(|| format!("creating {}", p.display()))?))
                }
                None => Ok(None),
            }
        };
        let out_reader = spawn_reader(child.stdout.take(), log_file("stdout.txt")?, limits.max_output_bytes);
        let err_reader = spawn_reader(child.stderr.take(), log_file("stderr.txt")?, limits.max_output_bytes);

        let (status, timed_out) = wait_with_deadline(&mut child, started + timeout);
        // Kill anything the script left behind in its group.
        // SAFETY: signalling a process group id we created.
        unsafe {
            libc::killpg(pgid, libc::SIGKILL);
        }
        let wall_time = started.elapsed().as_secs_f64();
        let stdout_tail = out_reader.join().unwrap_or_default();
        let stderr_tail = err_reader.join().unwrap_or_default();

        let exit_status = match (timed_out, status) {
            (true, _) => ExitInfo {
                code: None,
                signal: Some(libc::SIGKILL),
            },
            (false, Some(s)) => ExitInfo {
                code: s.code(),
                signal: s.signal(),
            },
            (false, None) => ExitInfo::failed(),
        };
        let frames = parse_traceback(&stderr_tail);
        let mut notes = Vec::new();
        if timed_out {
            notes.push(if clamped {
                format!("killed at the run deadline after {wall_time:.1}s")
            } else {
                format!("killed after the {:.1}s stage timeout", limits.timeout_s)
            });
        }
        let result = ExecutionResult {
            stage: None,
            exit_status,
            wall_time,
            stdout_tail,
            stderr_tail,
            traceback: (!frames.is_empty()).then_some(frames),
            artifact_report: None,
            timed_out,
            last_stage_started: None,
            notes,
            passed: false,
        };
        if let Some(d) = &req.log_dir {
            let p = d.join("result.json");
            std::fs::write(&p, to_canonical_json(&result)?).ctx(|| format!("writing {}", p.display()))?;
        }
        let _ = std::fs::remove_dir_all(&scratch);
        Ok(result)
    }
}

fn wait_with_deadline(child: &mut Child, deadline: Instant) -> (Option<std::process::ExitStatus>, bool) {
    let mut sleep = Duration::from_millis(2);
    loop {
        match child.try_wait() {
            Ok(Some(s)) => return (Some(s), false),
            Ok(None) => {}
            Err(_) => return (None, false),
        }
        let now = Instant::now();
        if now >= deadline {
            // SAFETY: the child is its own process group leader.
            unsafe {
                libc::killpg(child.id() as i32, libc::SIGKILL);
            }
            let _ = child.kill();
            let _ = child.wait();
            return (None, true);
        }
        std::thread::sleep(sleep.min(deadline - now));
        sleep = (sleep * 2).min(Duration::from_millis(50));
    }
}

/// Copies a stream to an optional log file and returns its last `cap` bytes.
fn spawn_reader<R: Read + Send + 'static>(
    stream: Option<R>,
    mut file: Option<std::fs::File>,
    cap: usize,
) -> JoinHandle<String> {
    std::thread::spawn(move || {
        let Some(mut stream) = stream else { return String::new() };
        let mut tail: VecDeque<u8> = VecDeque::with_capacity(cap.min(1 << 16));
        let mut written = 0u64;
        let mut buf = [0u8; 8192];
        loop {
            let n = match stream.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            if let Some(f) = file.as_mut() {
                if written < MAX_LOG_FILE_BYTES {
                    let take = n.min((MAX_LOG_FILE_BYTES - written) as usize);
                    let _ = f.write_all(&buf[..take]);
                    written += take as u64;
                }
            }
            tail.extend(&buf[..n]);
            while tail.len() > cap {
                tail.pop_front();
            }
        }
        let bytes: Vec<u8> = tail.into_iter().collect();
        String::from_utf8_lossy(&bytes).into_owned()
    })
}

fn chown_tree(path: &Path, id: u32) -> Result<()> {
    if !path.exists() {
        std::fs::create_dir_all(path).ctx(|| format!("creating {}", path.display()))?;
    }
    std::os::unix::fs::lchown(path, Some(id), Some(id)).ctx(|| format!("chown {}", path.display()))?;
    if path.is_dir() && !path.is_symlink() {
        for e in std::fs::read_dir(path).ctx(|| format!("listing {}", path.display()))? {
            let e = e.ctx(|| format!("listing {}", path.display()))?;
            chown_tree(&e.path(), id)?;
        }
    }
    Ok(())
}

/// Adds search permission for others on every ancestor we own that lacks
/// it, so an unprivileged child can reach `path`. Listing is not granted.
fn grant_traverse(path: &Path) -> Result<()> {
    let abs = std::path::absolute(path).ctx(|| format!("resolving {}", path.display()))?;
    // SAFETY: no preconditions.
    let me = unsafe { libc::geteuid() };
    for dir in abs.ancestors().skip(1) {
        let Ok(meta) = std::fs::metadata(dir) else { continue };
        use std::os::unix::fs::MetadataExt;
        if meta.uid() == me && meta.mode() & 0o001 == 0 {
            let mut perms = meta.permissions();
            perms.set_mode(meta.mode() | 0o001);
            std::fs::set_permissions(dir, perms).ctx(|| format!("chmod {}", dir.display()))?;
        }
    }
    Ok(())
}

/// True when `path` resolves to a location under `root`.
pub fn is_contained(path: &Path, root: &Path) -> bool {
    match (path.canonicalize(), root.canonicalize()) {
        (Ok(p), Ok(r)) => p.starts_with(r),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sandbox(dir: &Path) -> Sandbox {
        Sandbox::new(SandboxConfig::default(), &dir.join("scratch")).unwrap()
    }

    fn script(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("s.py");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn ok_script_prints() {
        let d = tempfile::tempdir().unwrap();
        let sb = sandbox(d.path());
        let req = ExecRequest {
            script: script(d.path(), "print('ok')\n"),
            ..Default::default()
        };
        let r = sb.execute(&req, sb.limits(30.0)).unwrap();
        assert!(r.exit_ok(), "{r:?}");
        assert_eq!(r.stdout_tail.trim(), "ok");
    }

    #[test]
    fn timeout_kills_quickly() {
        let d = tempfile::tempdir().unwrap();
        let sb = sandbox(d.path());
        let req = ExecRequest {
            script: script(d.path(), "import time\ntime.sleep(10)\n"),
            ..Default::default()
        };
        let r = sb.execute(&req, sb.limits(1.0)).unwrap();
        assert!(r.timed_out);
        assert!(!r.exit_ok());
        assert!(r.wall_time < 3.0, "{}", r.wall_time);
        assert!(r.is_consistent());
    }

    #[test]
    fn raise_parses_innermost() {
        let d = tempfile::tempdir().unwrap();
        let sb = sandbox(d.path());
        let req = ExecRequest {
            script: script(d.path(), "def inner():\n    raise ValueError('bad')\n\ndef outer():\n    inner()\n\nouter()\n"),
            ..Default::default()
        };
        let r = sb.execute(&req, sb.limits(30.0)).unwrap();
        assert_eq!(r.exit_status.code, Some(1));
        let f = r.innermost_frame().unwrap();
        assert_eq!(f.function, "inner");
        assert_eq!(f.line, 2);
        assert_eq!(r.exception_message(), Some("ValueError: bad"));
    }

    #[test]
    fn missing_interpreter_is_preflight_error() {
        let d = tempfile::tempdir().unwrap();
        let cfg = SandboxConfig {
            interpreter: "definitely-not-a-python-3".into(),
            ..Default::default()
        };
        let e = Sandbox::new(cfg, d.path()).err().unwrap();
        assert_eq!(e.code(), "INTERPRETER_MISSING");
    }

    #[test]
    fn env_is_allow_listed_and_tails_capped() {
        let d = tempfile::tempdir().unwrap();
        std::env::set_var("PIPEWRIGHT_SECRET_TEST", "leak");
        let sb = sandbox(d.path());
        let req = ExecRequest {
            script: script(
                d.path(),
                "import os\nprint(os.environ.get('PIPEWRIGHT_SECRET_TEST', 'absent'))\nprint('x' * 100000)\n",
            ),
            log_dir: Some(d.path().join("logs")),
            ..Default::default()
        };
        let r = sb.execute(&req, sb.limits(30.0)).unwrap();
        assert!(r.stdout_tail.len() <= 16 * 1024);
        let full = std::fs::read_to_string(d.path().join("logs/stdout.txt")).unwrap();
        assert!(full.starts_with("absent\n"));
        assert!(d.path().join("logs/result.json").exists());
    }

    #[test]
    fn deadline_clamps_timeout() {
        let d = tempfile::tempdir().unwrap();
        let sb = sandbox(d.path()).with_deadline(Instant::now() + Duration::from_millis(800));
        let req = ExecRequest {
            script: script(d.path(), "import time\ntime.sleep(10)\n"),
            ..Default::default()
        };
        let r = sb.execute(&req, sb.limits(600.0)).unwrap();
        assert!(r.timed_out);
        assert!(r.wall_time < 2.5);
    }
}
