//! Uniform driving of agents under test.
//!
//! Two transports share one session API: in-process agents implement
//! [`InProcessAgent`]; external agents are child processes speaking a
//! line protocol on stdin/stdout. The protocol, in order:
//!
//! * agent starts and writes `READY`
//! * runner sends `U <text>`, agent answers `A <text>`
//! * runner may send `Q`, agent answers `S <state doc>` (wire form, see
//!   [`crate::state`])
//! * runner sends `BYE` and the agent exits
//!
//! One line each way per turn; anything else is a protocol violation.
//! Every exchange is recorded in a [`Transcript`] with send-to-receive
//! latency.

use std::fmt;
use std::io::{self, BufRead, BufReader, Write as _};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::state::StateDoc;
use crate::utterance::Utterance;

pub const DEFAULT_RESPONSE_TIMEOUT: Duration = Duration::from_secs(10);
const CLOSE_GRACE: Duration = Duration::from_secs(2);
const EXIT_POLL: Duration = Duration::from_millis(10);

static SESSION_COUNTER: AtomicU64 = AtomicU64::new(1);

/// Agent implemented inside the test process.
pub trait InProcessAgent: Send {
    /// One reply per user line.
    fn respond(&mut self, user: &str) -> String;

    /// Current visible state; the default has none.
    fn state(&mut self) -> StateDoc {
        StateDoc::empty()
    }
}

pub type InProcessFactory = Arc<dyn Fn() -> Box<dyn InProcessAgent> + Send + Sync>;

#[derive(Clone)]
pub enum AgentTransport {
    /// Factory so each session gets a fresh agent instance.
    InProcess(InProcessFactory),
    /// Command line of a child process speaking the line protocol.
    Subprocess { command: Vec<String> },
}

impl fmt::Debug for AgentTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentTransport::InProcess(_) => f.write_str("InProcess(..)"),
            AgentTransport::Subprocess { command } => {
                f.debug_struct("Subprocess").field("command", command).finish()
            }
        }
    }
}

/// How to reach an agent and what it supports.
#[derive(Debug, Clone)]
pub struct AgentSpec {
    transport: AgentTransport,
    supports_state: bool,
    response_timeout: Duration,
}

impl AgentSpec {
    pub fn in_process<F>(factory: F) -> Self
    where
        F: Fn() -> Box<dyn InProcessAgent> + Send + Sync + 'static,
    {
        Self {
            transport: AgentTransport::InProcess(Arc::new(factory)),
            supports_state: false,
            response_timeout: DEFAULT_RESPONSE_TIMEOUT,
        }
    }

    pub fn subprocess(command: Vec<String>) -> Self {
        Self {
            transport: AgentTransport::Subprocess { command },
            supports_state: false,
            response_timeout: DEFAULT_RESPONSE_TIMEOUT,
        }
    }

    pub fn with_state_support(mut self, supported: bool) -> Self {
        self.supports_state = supported;
        self
    }

    pub fn with_response_timeout(mut self, timeout: Duration) -> Self {
        self.response_timeout = timeout;
        self
    }

    pub fn supports_state(&self) -> bool {
        self.supports_state
    }

    pub fn response_timeout(&self) -> Duration {
        self.response_timeout
    }
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("failed to launch agent: {0}")]
    LaunchFailure(String),
    #[error("agent did not announce READY within {0:?}")]
    HandshakeTimeout(Duration),
    #[error("agent did not respond within {0:?}")]
    ResponseTimeout(Duration),
    #[error("session closed: {0}")]
    SessionClosed(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("turn limit of {0} reached")]
    MaxTurnsExceeded(usize),
    #[error("agent does not support state queries")]
    StateUnsupported,
    #[error("malformed state document: {0}")]
    MalformedState(String),
}

/// One user-agent round trip.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub user: Utterance,
    pub agent: Utterance,
    pub latency: Duration,
    /// Zero-based position in the session transcript.
    pub index: usize,
}

/// Ordered record of a session's exchanges.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    session_id: String,
    exchanges: Vec<Exchange>,
}

impl Transcript {
    fn new(session_id: String) -> Self {
        Self {
            session_id,
            exchanges: Vec::new(),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn exchanges(&self) -> &[Exchange] {
        &self.exchanges
    }

    pub fn len(&self) -> usize {
        self.exchanges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exchanges.is_empty()
    }

    pub fn last(&self) -> Option<&Exchange> {
        self.exchanges.last()
    }

    /// Most recent user utterance, the anchor for breakdown checks.
    pub fn last_user(&self) -> Option<&Utterance> {
        self.exchanges.last().map(|e| &e.user)
    }
}

enum Transport {
    InProcess(Box<dyn InProcessAgent>),
    Subprocess(SubprocessLink),
}

struct SubprocessLink {
    child: Child,
    stdin: ChildStdin,
    lines: mpsc::Receiver<io::Result<String>>,
}

impl SubprocessLink {
    fn next_line(&self, timeout: Duration) -> Result<String, AdapterError> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(AdapterError::SessionClosed(format!(
                "read from agent failed: {e}"
            ))),
            Err(mpsc::RecvTimeoutError::Timeout) => Err(AdapterError::ResponseTimeout(timeout)),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(AdapterError::SessionClosed("agent exited".to_owned()))
            }
        }
    }

    fn send_line(&mut self, line: &str) -> Result<(), AdapterError> {
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| AdapterError::SessionClosed(format!("write to agent failed: {e}")))
    }

    fn shutdown(mut self, graceful: bool) {
        if graceful {
            let _ = writeln!(self.stdin, "BYE");
            let _ = self.stdin.flush();
        }
        drop(self.stdin);
        let deadline = Instant::now() + CLOSE_GRACE;
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) => {
                    if Instant::now() >= deadline || !graceful {
                        break;
                    }
                    thread::sleep(EXIT_POLL);
                }
                Err(_) => break,
            }
        }
        if self.child.kill().is_ok() {
            log::warn!("agent did not exit after BYE; killed");
        }
        let _ = self.child.wait();
    }
}

/// Live session. Dropping an unclosed session force-kills a subprocess
/// agent; call [`AgentHandle::close`] for the graceful path.
pub struct AgentHandle {
    inner: Option<Transport>,
    supports_state: bool,
    timeout: Duration,
    max_turns: usize,
    transcript: Transcript,
}

impl fmt::Debug for AgentHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentHandle")
            .field("session_id", &self.transcript.session_id())
            .field("turns", &self.transcript.len())
            .field("open", &self.inner.is_some())
            .finish()
    }
}

/// Starts a session. Subprocess agents are launched and must announce
/// `READY` within `spec.response_timeout`. `max_turns` bounds how many
/// exchanges [`AgentHandle::send`] will allow.
pub fn open_session(spec: &AgentSpec, max_turns: usize) -> Result<AgentHandle, AdapterError> {
    let session_id = format!("session-{}", SESSION_COUNTER.fetch_add(1, Ordering::Relaxed));
    let transport = match &spec.transport {
        AgentTransport::InProcess(factory) => Transport::InProcess(factory()),
        AgentTransport::Subprocess { command } => {
            let link = launch_subprocess(command, spec.response_timeout)?;
            Transport::Subprocess(link)
        }
    };
    Ok(AgentHandle {
        inner: Some(transport),
        supports_state: spec.supports_state,
        timeout: spec.response_timeout,
        max_turns,
        transcript: Transcript::new(session_id),
    })
}

fn launch_subprocess(command: &[String], timeout: Duration) -> Result<SubprocessLink, AdapterError> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| AdapterError::LaunchFailure("empty command".to_owned()))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| AdapterError::LaunchFailure(format!("{program}: {e}")))?;
    let stdin = child.stdin.take().expect("stdin was piped");
    let stdout = child.stdout.take().expect("stdout was piped");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let reader = BufReader::new(stdout);
        for line in reader.lines() {
            if tx.send(line).is_err() {
                return;
            }
        }
    });
    let link = SubprocessLink {
        child,
        stdin,
        lines: rx,
    };
    match link.next_line(timeout) {
        Ok(line) if line == "READY" => Ok(link),
        Ok(line) => {
            link.shutdown(false);
            Err(AdapterError::ProtocolViolation(format!(
                "expected READY, got {line:?}"
            )))
        }
        Err(AdapterError::ResponseTimeout(t)) => {
            link.shutdown(false);
            Err(AdapterError::HandshakeTimeout(t))
        }
        Err(e) => {
            link.shutdown(false);
            Err(AdapterError::LaunchFailure(e.to_string()))
        }
    }
}

impl AgentHandle {
    fn transport(&mut self) -> Result<&mut Transport, AdapterError> {
        self.inner
            .as_mut()
            .ok_or_else(|| AdapterError::SessionClosed("session was closed".to_owned()))
    }

    /// Delivers one user utterance and waits for the reply. The exchange
    /// is appended to the transcript and returned.
    pub fn send(&mut self, user: &Utterance) -> Result<Exchange, AdapterError> {
        if self.transcript.len() >= self.max_turns {
            return Err(AdapterError::MaxTurnsExceeded(self.max_turns));
        }
        if user.raw().contains(['\n', '\r']) {
            return Err(AdapterError::ProtocolViolation(
                "user utterance contains a line break".to_owned(),
            ));
        }
        let timeout = self.timeout;
        let start = Instant::now();
        let reply = match self.transport()? {
            Transport::InProcess(agent) => agent.respond(user.raw()),
            Transport::Subprocess(link) => {
                link.send_line(&format!("U {}", user.raw()))?;
                let line = link.next_line(timeout)?;
                parse_reply(&line)?
            }
        };
        if reply.contains(['\n', '\r']) {
            return Err(AdapterError::ProtocolViolation(
                "agent reply contains a line break".to_owned(),
            ));
        }
        let exchange = Exchange {
            user: user.clone(),
            agent: Utterance::new(reply),
            latency: start.elapsed(),
            index: self.transcript.len(),
        };
        self.transcript.exchanges.push(exchange.clone());
        Ok(exchange)
    }

    /// Fetches the agent's visible state. Requires state support in the
    /// agent spec.
    pub fn query_state(&mut self) -> Result<StateDoc, AdapterError> {
        if !self.supports_state {
            return Err(AdapterError::StateUnsupported);
        }
        let timeout = self.timeout;
        match self.transport()? {
            Transport::InProcess(agent) => Ok(agent.state()),
            Transport::Subprocess(link) => {
                link.send_line("Q")?;
                let line = link.next_line(timeout)?;
                let doc = if line == "S" {
                    ""
                } else {
                    line.strip_prefix("S ").ok_or_else(|| {
                        AdapterError::ProtocolViolation(format!("expected state line, got {line:?}"))
                    })?
                };
                StateDoc::from_wire(doc).map_err(|e| AdapterError::MalformedState(e.detail))
            }
        }
    }

    /// Read access to the transcript while the session is live.
    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    /// Ends the session (subprocesses get `BYE`, a grace period, then a
    /// kill if still alive) and hands back the transcript.
    pub fn close(mut self) -> Transcript {
        if let Some(Transport::Subprocess(link)) = self.inner.take() {
            link.shutdown(true);
        } else {
            self.inner = None;
        }
        std::mem::take(&mut self.transcript)
    }
}

impl Drop for AgentHandle {
    fn drop(&mut self) {
        if let Some(Transport::Subprocess(link)) = self.inner.take() {
            link.shutdown(false);
        }
    }
}

fn parse_reply(line: &str) -> Result<String, AdapterError> {
    if line == "A" {
        return Ok(String::new());
    }
    line.strip_prefix("A ")
        .map(str::to_owned)
        .ok_or_else(|| AdapterError::ProtocolViolation(format!("expected answer line, got {line:?}")))
}
