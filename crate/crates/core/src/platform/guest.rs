//! Subprocess guest runtimes. Each function runs as a child process that
//! serves the handler through an injected HTTP shim on an OS-assigned
//! loopback port.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Stdio;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use tokio::io::{AsyncBufReadExt, AsyncRead, BufReader};
use tokio::process::{Child, Command};

use super::adapter::{AdapterError, Invocation, InvocationResponse, PreparedUnit, RunningUnit, RuntimeAdapter};
use super::descriptor::FunctionDescriptor;
use super::logs::{LogSink, LogStream};
use crate::runtime::{GuestLanguage, NODEJS, PYTHON3};

const LISTENING: &str = "FORGE_LISTENING ";
const STDERR_TAIL: usize = 16 * 1024;

/// Adapter that runs guests as supervised subprocesses.
#[derive(Debug, Clone)]
pub struct SubprocessAdapter {
    id: String,
    language: GuestLanguage,
    program: String,
    install_dependencies: bool,
}

impl SubprocessAdapter {
    pub fn python3() -> Self {
        Self { id: PYTHON3.into(), language: GuestLanguage::Python, program: "python3".into(), install_dependencies: true }
    }

    pub fn nodejs() -> Self {
        Self { id: NODEJS.into(), language: GuestLanguage::JavaScript, program: "node".into(), install_dependencies: true }
    }

    /// Registers the same guest contract under a different identifier or
    /// interpreter path.
    pub fn custom(id: impl Into<String>, language: GuestLanguage, program: impl Into<String>) -> Self {
        Self { id: id.into(), language, program: program.into(), install_dependencies: true }
    }

    pub fn with_dependency_install(mut self, enabled: bool) -> Self {
        self.install_dependencies = enabled;
        self
    }

    pub fn language(&self) -> GuestLanguage {
        self.language
    }

    fn shim(&self) -> (&'static str, &'static str) {
        match self.language {
            GuestLanguage::Python => ("_forge_shim.py", include_str!("../../assets/python3/shim.py")),
            GuestLanguage::JavaScript => ("_forge_shim.js", include_str!("../../assets/nodejs/shim.js")),
        }
    }

    fn handler_file(&self, descriptor: &FunctionDescriptor) -> Result<String, AdapterError> {
        let conventional = self.language.handler_file();
        if descriptor.source_bundle.contains_key(conventional) {
            return Ok(conventional.to_string());
        }
        let ext = match self.language {
            GuestLanguage::Python => ".py",
            GuestLanguage::JavaScript => ".js",
        };
        let client = self.language.client_file();
        let candidates: Vec<&String> =
            descriptor.source_bundle.keys().filter(|k| k.ends_with(ext) && k.as_str() != client).collect();
        match candidates.as_slice() {
            [only] => Ok((*only).clone()),
            _ => Err(AdapterError::Prepare(format!(
                "bundle needs {conventional} (found {} candidate source files)",
                candidates.len()
            ))),
        }
    }

    async fn install(&self, deps: &[String], workdir: &Path, deadline: Duration) -> Result<BTreeMap<String, String>, AdapterError> {
        let mut env = BTreeMap::new();
        if deps.is_empty() || !self.install_dependencies {
            return Ok(env);
        }
        let mut cmd = match self.language {
            GuestLanguage::Python => {
                let target = workdir.join(".deps");
                env.insert("FORGE_DEPS".into(), target.display().to_string());
                let mut c = Command::new(&self.program);
                c.args(["-m", "pip", "install", "--disable-pip-version-check", "--no-input", "--no-cache-dir", "--target"])
                    .arg(&target)
                    .args(deps);
                c
            }
            GuestLanguage::JavaScript => {
                let mut c = Command::new("npm");
                c.args(["install", "--no-audit", "--no-fund", "--no-save", "--prefix"])
                    .arg(workdir)
                    .args(deps)
                    .env("npm_config_cache", workdir.join(".npm-cache"));
                c
            }
        };
        cmd.current_dir(workdir).stdin(Stdio::null()).kill_on_drop(true);
        let out = tokio::time::timeout(deadline, cmd.output())
            .await
            .map_err(|_| AdapterError::Prepare(format!("dependency installation exceeded {deadline:?}")))?
            .map_err(|e| AdapterError::Prepare(format!("cannot run installer: {e}")))?;
        if !out.status.success() {
            let mut detail = String::from_utf8_lossy(&out.stderr).into_owned();
            if detail.trim().is_empty() {
                detail = String::from_utf8_lossy(&out.stdout).into_owned();
            }
            return Err(AdapterError::Prepare(format!("dependency installation failed: {}", detail.trim())));
        }
        Ok(env)
    }
}

#[async_trait]
impl RuntimeAdapter for SubprocessAdapter {
    fn identifier(&self) -> &str {
        &self.id
    }

    async fn prepare(&self, descriptor: &FunctionDescriptor, workdir: &Path) -> Result<PreparedUnit, AdapterError> {
        let io = |e: std::io::Error| AdapterError::Prepare(format!("writing bundle: {e}"));
        if descriptor.source_bundle.is_empty() {
            return Err(AdapterError::Prepare("source bundle is empty".into()));
        }
        tokio::fs::create_dir_all(workdir).await.map_err(io)?;
        for (rel, bytes) in &descriptor.source_bundle {
            let path = workdir.join(rel);
            if let Some(parent) = path.parent() {
                tokio::fs::create_dir_all(parent).await.map_err(io)?;
            }
            tokio::fs::write(&path, bytes).await.map_err(io)?;
        }
        let (shim_name, shim_src) = self.shim();
        tokio::fs::write(workdir.join(shim_name), shim_src).await.map_err(io)?;
        let handler = self.handler_file(descriptor)?;

        let mut env = descriptor.env.clone();
        env.extend(self.install(&descriptor.dependencies, workdir, Duration::from_secs(300)).await?);
        env.insert("FORGE_HANDLER".into(), workdir.join(&handler).display().to_string());
        env.insert("FORGE_ENTRY".into(), descriptor.entry_point.clone());
        if self.language == GuestLanguage::Python {
            env.insert("PYTHONUNBUFFERED".into(), "1".into());
            env.insert("PYTHONDONTWRITEBYTECODE".into(), "1".into());
        }

        let mut args = Vec::new();
        if self.language == GuestLanguage::Python {
            args.push("-u".into());
        }
        args.push(workdir.join(shim_name).display().to_string());
        Ok(PreparedUnit { workdir: workdir.to_path_buf(), program: self.program.clone(), args, env })
    }

    async fn start(&self, unit: PreparedUnit, timeout: Duration, logs: LogSink) -> Result<Arc<dyn RunningUnit>, AdapterError> {
        let started = Instant::now();
        let mut child = Command::new(&unit.program)
            .args(&unit.args)
            .envs(&unit.env)
            .current_dir(&unit.workdir)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .kill_on_drop(true)
            .spawn()
            .map_err(|e| AdapterError::Start(format!("cannot spawn {}: {e}", unit.program)))?;
        let pid = child.id();

        let tail = Arc::new(Mutex::new(String::new()));
        let stderr_task = tokio::spawn(pump_stderr(child.stderr.take().expect("piped"), logs.clone(), tail.clone()));
        let mut stdout = BufReader::new(child.stdout.take().expect("piped")).lines();

        let port = tokio::time::timeout(timeout, async {
            while let Ok(Some(line)) = stdout.next_line().await {
                if let Some(p) = line.strip_prefix(LISTENING) {
                    return p.trim().parse::<u16>().ok();
                }
                logs.lock().unwrap().push(LogStream::Stdout, line);
            }
            None
        })
        .await;

        let port = match port {
            Ok(Some(port)) => port,
            Ok(None) => {
                // The guest exited (or closed stdout) before listening.
                let _ = tokio::time::timeout(Duration::from_secs(2), child.wait()).await;
                let _ = child.kill().await;
                let _ = tokio::time::timeout(Duration::from_secs(2), stderr_task).await;
                let status = child.try_wait().ok().flatten().map(|s| s.to_string()).unwrap_or_else(|| "unknown status".into());
                let stderr = tail.lock().unwrap().clone();
                return Err(AdapterError::Start(format!("guest exited before listening ({status})\n{}", stderr.trim_end())));
            }
            Err(_) => {
                let _ = child.kill().await;
                let _ = tokio::time::timeout(Duration::from_secs(2), stderr_task).await;
                let stderr = tail.lock().unwrap().clone();
                return Err(AdapterError::Start(format!(
                    "guest did not become healthy within {timeout:?}\n{}",
                    stderr.trim_end()
                )));
            }
        };

        let stdout_logs = logs.clone();
        tokio::spawn(async move {
            while let Ok(Some(line)) = stdout.next_line().await {
                stdout_logs.lock().unwrap().push(LogStream::Stdout, line);
            }
        });

        let process = Arc::new(GuestProcess {
            child: tokio::sync::Mutex::new(Some(child)),
            pid,
            port,
            client: reqwest::Client::builder().no_proxy().build().map_err(|e| AdapterError::Start(e.to_string()))?,
            running: AtomicBool::new(true),
            stderr_tail: tail,
        });

        while started.elapsed() < timeout {
            if process.probe().await {
                return Ok(process);
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
        let stderr = process.stderr_tail.lock().unwrap().clone();
        process.stop().await;
        Err(AdapterError::Start(format!("health probe failed within {timeout:?}\n{}", stderr.trim_end())))
    }
}

async fn pump_stderr(stream: impl AsyncRead + Unpin, logs: LogSink, tail: Arc<Mutex<String>>) {
    let mut lines = BufReader::new(stream).lines();
    while let Ok(Some(line)) = lines.next_line().await {
        {
            let mut t = tail.lock().unwrap();
            t.push_str(&line);
            t.push('\n');
            if t.len() > STDERR_TAIL {
                let mut cut = t.len() - STDERR_TAIL;
                while !t.is_char_boundary(cut) {
                    cut += 1;
                }
                t.drain(..cut);
            }
        }
        logs.lock().unwrap().push(LogStream::Stderr, line);
    }
}

struct GuestProcess {
    child: tokio::sync::Mutex<Option<Child>>,
    pid: Option<u32>,
    port: u16,
    client: reqwest::Client,
    running: AtomicBool,
    stderr_tail: Arc<Mutex<String>>,
}

impl GuestProcess {
    fn url(&self, path: &str) -> String {
        format!("http://127.0.0.1:{}{path}", self.port)
    }

    async fn exited(&self) -> bool {
        let mut guard = self.child.lock().await;
        match guard.as_mut() {
            Some(c) => matches!(c.try_wait(), Ok(Some(_))),
            None => true,
        }
    }
}

#[async_trait]
impl RunningUnit for GuestProcess {
    async fn probe(&self) -> bool {
        if !self.running.load(Ordering::SeqCst) {
            return false;
        }
        match self.client.get(self.url("/health")).timeout(Duration::from_secs(2)).send().await {
            Ok(r) => r.status().is_success(),
            Err(_) => false,
        }
    }

    async fn invoke(&self, request: Invocation, timeout: Duration) -> Result<InvocationResponse, AdapterError> {
        if !self.running.load(Ordering::SeqCst) {
            return Err(AdapterError::NotRunning);
        }
        let mut req = self.client.post(self.url("/invoke")).timeout(timeout).body(request.body);
        if let Some(ct) = request.content_type {
            req = req.header("content-type", ct);
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Err(AdapterError::Timeout(timeout)),
            Err(e) => {
                if !self.running.load(Ordering::SeqCst) {
                    return Err(AdapterError::NotRunning);
                }
                let detail = if self.exited().await {
                    format!("guest process exited\n{}", self.stderr_tail.lock().unwrap().trim_end())
                } else {
                    e.to_string()
                };
                return Err(AdapterError::Guest(detail));
            }
        };
        let status = resp.status().as_u16();
        let guest_error = resp.headers().contains_key("x-guest-error");
        let content_type = resp.headers().get("content-type").and_then(|v| v.to_str().ok()).map(str::to_string);
        let body = match resp.bytes().await {
            Ok(b) => b,
            Err(e) if e.is_timeout() => return Err(AdapterError::Timeout(timeout)),
            Err(e) => return Err(AdapterError::Guest(e.to_string())),
        };
        if guest_error {
            return Err(AdapterError::Guest(String::from_utf8_lossy(&body).into_owned()));
        }
        Ok(InvocationResponse { status, body, content_type })
    }

    async fn stop(&self) {
        self.running.store(false, Ordering::SeqCst);
        if let Some(mut child) = self.child.lock().await.take() {
            let _ = child.kill().await;
            let _ = child.wait().await;
        }
    }

    fn pid(&self) -> Option<u32> {
        self.pid
    }

    fn port(&self) -> Option<u16> {
        Some(self.port)
    }
}
