//! Scorers running in a child process, spoken to over newline-delimited
//! JSON on the child's stdin/stdout.
//!
//! ```text
//! scorer -> harness (first line)  {"name": "lstm-650", "perplexity": 52.1}
//! harness -> scorer               {"id": 0, "prefix": ["the", "dog"], "candidates": ["runs", "run"]}
//! scorer -> harness               {"id": 0, "logprobs": [-3.2, -5.9]}
//! ```
//!
//! Requests are strictly serialized: one request, then its response. The
//! harness ends the session by closing the child's stdin; the child must
//! then exit with status 0.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, ExitStatus, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ScoreError, Scorer};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("failed to start scorer `{command}`: {source}")]
    Spawn { command: String, source: io::Error },
    #[error("bad handshake: {0}")]
    Handshake(String),
    #[error("malformed response `{line}`: {reason}")]
    Malformed { line: String, reason: String },
    #[error("response id {got} does not match request id {expected}")]
    IdMismatch { expected: u64, got: u64 },
    #[error("non-finite log-probability in response to request {id}")]
    NonFinite { id: u64 },
    #[error("scorer closed its output (exit status: {status})")]
    Closed { status: String },
    #[error("scorer exited with {0}")]
    ExitStatus(ExitStatus),
    #[error("scorer i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub name: String,
    pub perplexity: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Request<'a> {
    pub id: u64,
    pub prefix: &'a [String],
    pub candidates: [&'a str; 2],
}

#[derive(Debug, Deserialize)]
pub struct Response {
    pub id: u64,
    pub logprobs: Vec<f64>,
}

/// Parses one response line and checks it against the request id.
pub fn parse_response(line: &str, expected_id: u64) -> Result<[f64; 2], ProtocolError> {
    let resp: Response = serde_json::from_str(line).map_err(|e| {
        let lower = line.to_ascii_lowercase();
        if lower.contains("nan") || lower.contains("infinity") {
            return ProtocolError::NonFinite { id: expected_id };
        }
        ProtocolError::Malformed { line: line.to_owned(), reason: e.to_string() }
    })?;
    if resp.id != expected_id {
        return Err(ProtocolError::IdMismatch { expected: expected_id, got: resp.id });
    }
    let [a, b] = <[f64; 2]>::try_from(resp.logprobs.as_slice()).map_err(|_| ProtocolError::Malformed {
        line: line.to_owned(),
        reason: format!("expected 2 log-probabilities, got {}", resp.logprobs.len()),
    })?;
    if !a.is_finite() || !b.is_finite() {
        return Err(ProtocolError::NonFinite { id: expected_id });
    }
    Ok([a, b])
}

pub fn parse_handshake(line: &str) -> Result<Handshake, ProtocolError> {
    let h: Handshake =
        serde_json::from_str(line).map_err(|e| ProtocolError::Handshake(format!("`{}`: {}", line.trim_end(), e)))?;
    if let Some(p) = h.perplexity {
        if !p.is_finite() {
            return Err(ProtocolError::Handshake("perplexity is not finite".into()));
        }
    }
    Ok(h)
}

pub struct ExternalScorer {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    handshake: Handshake,
    next_id: u64,
    line: String,
}

impl ExternalScorer {
    /// Runs `command` through `sh -c` with extra environment variables and
    /// reads the handshake.
    pub fn spawn(command: &str, env: &[(String, String)]) -> Result<Self, ProtocolError> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(command);
        Self::spawn_command(cmd, command, env)
    }

    pub fn spawn_command(mut cmd: Command, label: &str, env: &[(String, String)]) -> Result<Self, ProtocolError> {
        cmd.envs(env.iter().map(|(k, v)| (k, v))).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::inherit());
        let mut child = cmd.spawn().map_err(|source| ProtocolError::Spawn { command: label.to_owned(), source })?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut scorer = ExternalScorer {
            child,
            stdin,
            stdout,
            handshake: Handshake { name: String::new(), perplexity: None },
            next_id: 0,
            line: String::new(),
        };
        let line = scorer.read_line()?;
        scorer.handshake = parse_handshake(&line)?;
        Ok(scorer)
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    fn read_line(&mut self) -> Result<String, ProtocolError> {
        self.line.clear();
        let n = self.stdout.read_line(&mut self.line)?;
        if n == 0 {
            let status = match self.child.try_wait() {
                Ok(Some(s)) => s.to_string(),
                _ => "still running".to_owned(),
            };
            return Err(ProtocolError::Closed { status });
        }
        Ok(self.line.trim_end_matches(['\n', '\r']).to_owned())
    }

    pub fn request(&mut self, prefix: &[String], candidates: [&str; 2]) -> Result<[f64; 2], ProtocolError> {
        let id = self.next_id;
        self.next_id += 1;
        let stdin = self.stdin.as_mut().ok_or(ProtocolError::Closed { status: "input closed".into() })?;
        let mut buf = serde_json::to_vec(&Request { id, prefix, candidates }).expect("request serializes");
        buf.push(b'\n');
        if let Err(e) = stdin.write_all(&buf).and_then(|_| stdin.flush()) {
            if e.kind() == io::ErrorKind::BrokenPipe {
                let status = self.child.try_wait().ok().flatten().map(|s| s.to_string());
                return Err(ProtocolError::Closed { status: status.unwrap_or_else(|| "broken pipe".into()) });
            }
            return Err(e.into());
        }
        let line = self.read_line()?;
        parse_response(&line, id)
    }

    /// Closes the child's input and waits for a zero exit status.
    pub fn shutdown(mut self) -> Result<(), ProtocolError> {
        drop(self.stdin.take());
        let status = self.child.wait()?;
        if status.success() {
            Ok(())
        } else {
            Err(ProtocolError::ExitStatus(status))
        }
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if self.stdin.take().is_some() {
            let _ = self.child.wait();
        }
    }
}

impl Scorer for ExternalScorer {
    fn name(&self) -> &str {
        &self.handshake.name
    }

    fn perplexity(&self) -> Option<f64> {
        self.handshake.perplexity
    }

    fn score(&mut self, prefix: &[String], candidates: [&str; 2]) -> Result<[f64; 2], ScoreError> {
        Ok(self.request(prefix, candidates)?)
    }
}
