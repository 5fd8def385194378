//! Newline-delimited JSON protocol for decoders running in a child process.
//!
//! The client writes `{"type":"hello","protocol":1}` and expects the same
//! message back. Each `decode` request is answered by exactly one `result`
//! (or `error`) line. `{"type":"shutdown"}` ends the conversation.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{decode, DecodeError, DecodeRequest, DecodeResult, Decoder};
use crate::corpus::TimedChunk;
use crate::schedule::{InterleavePolicy, LanguagePair};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub session: String,
    pub gamma: f64,
    pub beam: usize,
    pub max_tokens: usize,
    pub source_chunks: Vec<TimedChunk>,
    pub forced_transcript: Vec<String>,
    pub forced_translation: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResult {
    pub session: String,
    pub transcript: Vec<String>,
    pub translation: Vec<String>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        protocol: u32,
    },
    Decode(WireRequest),
    Result(WireResult),
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        message: String,
    },
    Shutdown,
}

impl Message {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("protocol messages always serialize")
    }
}

impl From<&DecodeRequest> for WireRequest {
    fn from(r: &DecodeRequest) -> Self {
        Self {
            session: r.session.clone(),
            gamma: r.policy.gamma(),
            beam: r.beam_size,
            max_tokens: r.max_tokens,
            source_chunks: r.source_prefix.clone(),
            forced_transcript: r.forced_transcript.clone(),
            forced_translation: r.forced_translation.clone(),
        }
    }
}

impl WireRequest {
    pub fn into_request(self, langs: &LanguagePair) -> Result<DecodeRequest, DecodeError> {
        let policy =
            InterleavePolicy::new(self.gamma).map_err(|e| DecodeError::Argument(e.to_string()))?;
        Ok(DecodeRequest {
            session: self.session,
            source_prefix: self.source_chunks,
            forced_transcript: self.forced_transcript,
            forced_translation: self.forced_translation,
            policy,
            beam_size: self.beam,
            max_tokens: self.max_tokens,
            langs: langs.clone(),
        })
    }
}

/// A decoder living in a child process, spoken to over its stdin/stdout.
///
/// One instance serves one session at a time.
pub struct ExternalDecoder {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl ExternalDecoder {
    /// Runs `command` through `sh -c` and performs the handshake.
    pub fn spawn(command: &str) -> Result<Self, DecodeError> {
        let transport = |message: String| DecodeError::Transport {
            session: "<handshake>".into(),
            message,
        };
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| transport(format!("cannot start {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut dec = Self {
            command: command.to_string(),
            child,
            stdin: Some(stdin),
            stdout,
        };
        dec.send("<handshake>", &Message::Hello {
            protocol: PROTOCOL_VERSION,
        })?;
        match dec.receive("<handshake>")? {
            Message::Hello { protocol } if protocol == PROTOCOL_VERSION => Ok(dec),
            other => Err(DecodeError::Protocol {
                session: "<handshake>".into(),
                message: format!("expected hello with protocol {PROTOCOL_VERSION}, got {other:?}"),
            }),
        }
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn send(&mut self, session: &str, msg: &Message) -> Result<(), DecodeError> {
        let stdin = self.stdin.as_mut().ok_or_else(|| DecodeError::Transport {
            session: session.into(),
            message: "decoder input already closed".into(),
        })?;
        writeln!(stdin, "{}", msg.to_line())
            .and_then(|_| stdin.flush())
            .map_err(|e| DecodeError::Transport {
                session: session.into(),
                message: format!("write failed: {e}"),
            })
    }

    fn receive(&mut self, session: &str) -> Result<Message, DecodeError> {
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| DecodeError::Transport {
                session: session.into(),
                message: format!("read failed: {e}"),
            })?;
        if n == 0 {
            return Err(DecodeError::Transport {
                session: session.into(),
                message: "decoder closed its output".into(),
            });
        }
        serde_json::from_str(line.trim_end()).map_err(|e| DecodeError::Protocol {
            session: session.into(),
            message: format!("unparseable line {:?}: {e}", line.trim_end()),
        })
    }

    /// Sends `shutdown` and waits briefly for the child to exit.
    pub fn shutdown(&mut self) {
        if self.stdin.is_some() {
            let _ = self.send("<shutdown>", &Message::Shutdown);
        }
        self.stdin = None;
        let deadline = Instant::now() + Duration::from_secs(2);
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) | Err(_) => return,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = self.child.kill();
                    let _ = self.child.wait();
                    return;
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            }
        }
    }
}

impl Drop for ExternalDecoder {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl Decoder for ExternalDecoder {
    fn identity(&self) -> String {
        format!("exec:{}", self.command)
    }

    fn decode(&mut self, request: &DecodeRequest) -> Result<DecodeResult, DecodeError> {
        let session = request.session.as_str();
        self.send(session, &Message::Decode(request.into()))?;
        match self.receive(session)? {
            Message::Result(res) if res.session == request.session => Ok(DecodeResult::from_streams(
                res.transcript,
                res.translation,
                &request.policy,
                &request.langs,
                res.score,
            )),
            Message::Result(res) => Err(DecodeError::Protocol {
                session: session.into(),
                message: format!("response belongs to session {:?}", res.session),
            }),
            Message::Error { message, .. } => Err(DecodeError::Decoder {
                session: session.into(),
                message,
            }),
            other => Err(DecodeError::Protocol {
                session: session.into(),
                message: format!("expected a result, got {other:?}"),
            }),
        }
    }
}

/// Serves `decoder` over the protocol until `shutdown` or end of input.
///
/// Malformed lines get an `error` reply and the loop continues.
pub fn serve<D, R, W>(decoder: &mut D, reader: R, mut writer: W) -> std::io::Result<()>
where
    D: Decoder + ?Sized,
    R: BufRead,
    W: Write,
{
    let langs = LanguagePair::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Message>(&line) {
            Ok(Message::Hello { .. }) => Message::Hello {
                protocol: PROTOCOL_VERSION,
            },
            Ok(Message::Shutdown) => return Ok(()),
            Ok(Message::Decode(req)) => {
                let session = req.session.clone();
                match req
                    .into_request(&langs)
                    .and_then(|r| decode(decoder, &r))
                {
                    Ok(res) => Message::Result(WireResult {
                        session,
                        transcript: res.transcript,
                        translation: res.translation,
                        score: res.score,
                    }),
                    Err(e) => Message::Error {
                        session: Some(session),
                        message: e.to_string(),
                    },
                }
            }
            Ok(other) => Message::Error {
                session: None,
                message: format!("unexpected message {other:?}"),
            },
            Err(e) => Message::Error {
                session: None,
                message: format!("malformed message: {e}"),
            },
        };
        writeln!(writer, "{}", reply.to_line())?;
        writer.flush()?;
    }
    Ok(())
}
