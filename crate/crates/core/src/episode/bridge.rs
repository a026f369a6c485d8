//! Newline-delimited JSON bridge to an out-of-process agent.
//!
//! Each step the environment writes one request line and reads one response
//! line:
//!
//! ```text
//! > {"v":1,"task":"...","step_index":0,"page":{"page_id":"P1","xml":"...","screenshot_ref":null},"action_space":[...],"history":[...]}
//! < {"action":{"kind":"click","name":"search","bounds":[273,84,324,180]}}
//! ```

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, AgentRequest};
use crate::model::Action;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WirePage {
    pub page_id: String,
    pub xml: String,
    pub screenshot_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub v: u32,
    pub task: String,
    pub step_index: usize,
    pub page: WirePage,
    pub action_space: Vec<Action>,
    pub history: Vec<Action>,
}

impl WireRequest {
    pub fn from_request(req: &AgentRequest<'_>) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            task: req.task.to_string(),
            step_index: req.step_index,
            page: WirePage {
                page_id: req.page.page_id().to_string(),
                xml: req.page.xml().to_string(),
                screenshot_ref: req.page.screenshot_ref().map(str::to_string),
            },
            action_space: req.action_space.to_vec(),
            history: req.history.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireResponse {
    pub action: Action,
}

/// Parses one response line.
pub fn parse_response(line: &str) -> Result<Action, AgentError> {
    let value: serde_json::Value =
        serde_json::from_str(line.trim()).map_err(|e| AgentError::MalformedResponse(e.to_string()))?;
    let action = value
        .get("action")
        .ok_or_else(|| AgentError::MalformedResponse("missing \"action\" field".into()))?;
    serde_json::from_value(action.clone()).map_err(|e| AgentError::MalformedResponse(e.to_string()))
}

/// Agent on the far side of a line-oriented byte stream.
pub struct BridgeAgent {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    timeout: Duration,
    child: Option<Child>,
    socket: Option<TcpStream>,
}

impl BridgeAgent {
    /// Wraps arbitrary streams; a background thread reads response lines so
    /// the per-step timeout can be enforced.
    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Self { writer: Box::new(writer), lines: rx, timeout, child: None, socket: None }
    }

    /// Launches `program args...` and talks over its standard streams.
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> io::Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut agent = Self::from_streams(stdout, stdin, timeout);
        agent.child = Some(child);
        Ok(agent)
    }

    /// Splits `command` on whitespace and spawns it.
    pub fn spawn_command(command: &str, timeout: Duration) -> io::Result<Self> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty agent command"))?;
        let args: Vec<String> = parts.collect();
        Self::spawn(&program, &args, timeout)
    }

    pub fn connect_tcp(addr: impl ToSocketAddrs, timeout: Duration) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        let handle = stream.try_clone()?;
        let mut agent = Self::from_streams(reader, stream, timeout);
        agent.socket = Some(handle);
        Ok(agent)
    }
}

impl Agent for BridgeAgent {
    fn decide(&mut self, req: &AgentRequest<'_>) -> Result<Action, AgentError> {
        let mut line = serde_json::to_string(&WireRequest::from_request(req)).expect("requests serialize");
        line.push('\n');
        let sent = self.writer.write_all(line.as_bytes()).and_then(|_| self.writer.flush());
        if let Err(e) = sent {
            return Err(match e.kind() {
                io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset => AgentError::TransportClosed,
                _ => AgentError::Io(e.to_string()),
            });
        }
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(resp)) => parse_response(&resp),
            Ok(Err(e)) => Err(AgentError::Io(e.to_string())),
            Err(RecvTimeoutError::Timeout) => Err(AgentError::Timeout(self.timeout.as_secs_f64())),
            Err(RecvTimeoutError::Disconnected) => Err(AgentError::TransportClosed),
        }
    }
}

impl Drop for BridgeAgent {
    fn drop(&mut self) {
        // The reader thread owns a clone of the socket, so close it explicitly.
        if let Some(socket) = self.socket.take() {
            let _ = socket.shutdown(std::net::Shutdown::Both);
        }
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Agent-side loop: answers each request line with `decide`'s action until
/// the input ends. Blank lines are ignored.
pub fn serve<R, W, F>(reader: R, mut writer: W, mut decide: F) -> io::Result<usize>
where
    R: BufRead,
    W: Write,
    F: FnMut(&WireRequest) -> Action,
{
    let mut served = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: WireRequest =
            serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let resp = WireResponse { action: decide(&req) };
        serde_json::to_writer(&mut writer, &resp)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        served += 1;
    }
    Ok(served)
}

/// Picks the first action of the offered space.
pub fn echo_decision(req: &WireRequest) -> Action {
    req.action_space.first().cloned().unwrap_or_else(Action::complete)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{run_episode, EpisodeConfig, EpisodeError};
    use crate::fixtures;
    use std::net::TcpListener;

    /// In-process pipe pair.
    fn pipe() -> (io::PipeReader, io::PipeWriter) {
        io::pipe().unwrap()
    }

    #[test]
    fn response_parsing() {
        let a = parse_response(r#"{"action":{"kind":"complete","text":"STATUS_TASK_COMPLETE"}}"#).unwrap();
        assert!(a.is_complete());
        assert!(matches!(parse_response(r#"{"act":{}}"#), Err(AgentError::MalformedResponse(_))));
        assert!(matches!(parse_response("nope"), Err(AgentError::MalformedResponse(_))));
    }

    #[test]
    fn in_process_echo_round_trip() {
        let (req_r, req_w) = pipe();
        let (resp_r, resp_w) = pipe();
        let server = thread::spawn(move || serve(BufReader::new(req_r), resp_w, echo_decision).unwrap());
        let g = fixtures::shopping_graph();
        let mut agent = BridgeAgent::from_streams(resp_r, req_w, Duration::from_secs(5));
        let trace = run_episode(&g, &mut agent, "t", "P1", EpisodeConfig::default()).unwrap();
        drop(agent);
        assert_eq!(server.join().unwrap(), trace.visited.len());
    }

    #[test]
    fn tcp_echo_round_trip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let reader = BufReader::new(stream.try_clone().unwrap());
            serve(reader, stream, echo_decision).unwrap()
        });
        let g = fixtures::shopping_graph();
        let mut agent = BridgeAgent::connect_tcp(addr, Duration::from_secs(5)).unwrap();
        let trace = run_episode(&g, &mut agent, "t", "P1", EpisodeConfig::default()).unwrap();
        drop(agent);
        assert_eq!(server.join().unwrap(), trace.visited.len());
    }

    #[test]
    fn silent_agent_times_out() {
        let (_req_r, req_w) = pipe();
        let (resp_r, _resp_w) = pipe();
        let g = fixtures::shopping_graph();
        let mut agent = BridgeAgent::from_streams(resp_r, req_w, Duration::from_millis(50));
        let err = run_episode(&g, &mut agent, "t", "P1", EpisodeConfig::default()).unwrap_err();
        assert!(matches!(err, EpisodeError::Agent { step: 0, source: AgentError::Timeout(_) }));
    }

    #[test]
    fn closed_agent_is_reported() {
        let (req_r, req_w) = pipe();
        let (resp_r, resp_w) = pipe();
        drop(resp_w);
        drop(req_r);
        let g = fixtures::shopping_graph();
        let mut agent = BridgeAgent::from_streams(resp_r, req_w, Duration::from_secs(1));
        let err = run_episode(&g, &mut agent, "t", "P1", EpisodeConfig::default()).unwrap_err();
        assert!(matches!(err, EpisodeError::Agent { source: AgentError::TransportClosed, .. }));
    }

    #[test]
    fn wrong_shape_is_malformed() {
        let (req_r, req_w) = pipe();
        let (resp_r, mut resp_w) = pipe();
        let server = thread::spawn(move || {
            let mut lines = BufReader::new(req_r).lines();
            lines.next();
            writeln!(resp_w, r#"{{"choice":0}}"#).unwrap();
        });
        let g = fixtures::shopping_graph();
        let mut agent = BridgeAgent::from_streams(resp_r, req_w, Duration::from_secs(5));
        let err = run_episode(&g, &mut agent, "t", "P1", EpisodeConfig::default()).unwrap_err();
        assert!(matches!(err, EpisodeError::Agent { source: AgentError::MalformedResponse(_), .. }));
        server.join().unwrap();
    }
}
