//! Re-translation sessions and what the user sees during them.
//!
//! For every incoming chunk the whole source prefix is decoded again. The new
//! hypothesis must keep all but the last `F` tokens of what was displayed
//! before, and all but the final update hide their last `K` tokens.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{chunk_by_duration, CorpusError, Utterance};
use crate::decode::{
    apply_mask, decode, DecodeError, DecodeRequest, Decoder, MaskPolicy, DEFAULT_BEAM_SIZE,
    DEFAULT_MAX_TOKENS,
};
use crate::schedule::{InterleavePolicy, LanguagePair, Stream};

/// Number of displayed tokens per stream the next decode may change.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeTokens {
    pub f_transcript: usize,
    pub f_translation: usize,
}

impl FreeTokens {
    pub fn uniform(f: usize) -> Self {
        Self {
            f_transcript: f,
            f_translation: f,
        }
    }

    pub fn f(&self, stream: Stream) -> usize {
        match stream {
            Stream::Transcript => self.f_transcript,
            Stream::Translation => self.f_translation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub mask: MaskPolicy,
    pub free_tokens: FreeTokens,
    pub chunk_ms: u32,
    #[serde(rename = "gamma")]
    pub policy: InterleavePolicy,
    pub beam_size: usize,
    pub max_tokens: usize,
    pub langs: LanguagePair,
}

impl SessionConfig {
    pub fn new(k: usize, f: usize, chunk_ms: u32, policy: InterleavePolicy) -> Self {
        Self {
            mask: MaskPolicy::uniform(k),
            free_tokens: FreeTokens::uniform(f),
            chunk_ms,
            policy,
            beam_size: DEFAULT_BEAM_SIZE,
            max_tokens: DEFAULT_MAX_TOKENS,
            langs: LanguagePair::default(),
        }
    }
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self::new(0, 0, 500, InterleavePolicy::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub utterance_id: String,
    pub duration_sec: f64,
    pub decoder: String,
    pub config: SessionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionUpdate {
    pub update_index: usize,
    pub source_consumed_sec: f64,
    pub displayed_transcript: Vec<String>,
    pub displayed_translation: Vec<String>,
    pub is_final: bool,
}

impl RevisionUpdate {
    pub fn displayed(&self, stream: Stream) -> &[String] {
        match stream {
            Stream::Transcript => &self.displayed_transcript,
            Stream::Translation => &self.displayed_translation,
        }
    }
}

/// Every hypothesis shown during one session, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct RevisionLog {
    pub header: SessionHeader,
    pub updates: Vec<RevisionUpdate>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid log: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Session(SessionHeader),
    Update(RevisionUpdate),
}

impl RevisionLog {
    pub fn final_update(&self) -> Option<&RevisionUpdate> {
        self.updates.last().filter(|u| u.is_final)
    }

    /// Final displayed output of a stream (empty when the log is unfinished).
    pub fn final_output(&self, stream: Stream) -> &[String] {
        self.final_update().map_or(&[], |u| u.displayed(stream))
    }

    /// Consumed time never decreases; exactly one final update, the last.
    pub fn validate(&self) -> Result<(), LogError> {
        let finals = self.updates.iter().filter(|u| u.is_final).count();
        if finals != 1 || !self.updates.last().is_some_and(|u| u.is_final) {
            return Err(LogError::Invalid(format!(
                "expected exactly one final update at the end, found {finals}"
            )));
        }
        if self
            .updates
            .windows(2)
            .any(|w| w[1].source_consumed_sec < w[0].source_consumed_sec)
        {
            return Err(LogError::Invalid("source_consumed_sec decreases".into()));
        }
        Ok(())
    }

    /// Writes the header line followed by one line per update.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<(), LogError> {
        let header = serde_json::to_string(&LogLine::Session(self.header.clone()))
            .map_err(std::io::Error::other)?;
        writeln!(writer, "{header}")?;
        for u in &self.updates {
            let line = serde_json::to_string(&LogLine::Update(u.clone()))
                .map_err(std::io::Error::other)?;
            writeln!(writer, "{line}")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, LogError> {
        let mut header = None;
        let mut updates = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line).map_err(|e| LogError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            match parsed {
                LogLine::Session(h) if header.is_none() && updates.is_empty() => header = Some(h),
                LogLine::Session(_) => {
                    return Err(LogError::Parse {
                        line: idx + 1,
                        message: "unexpected second session header".into(),
                    })
                }
                LogLine::Update(u) => updates.push(u),
            }
        }
        let header = header.ok_or_else(|| LogError::Invalid("missing session header".into()))?;
        Ok(Self { header, updates })
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("cannot prepare utterance: {0}")]
    Setup(#[from] CorpusError),
    #[error("session aborted after {} updates: {source}", partial.updates.len())]
    Decode {
        partial: Box<RevisionLog>,
        #[source]
        source: DecodeError,
    },
}

fn drop_tail(tokens: &[String], n: usize) -> Vec<String> {
    tokens[..tokens.len().saturating_sub(n)].to_vec()
}

/// Runs one re-translation session over `utterance`.
///
/// The source is re-chunked to `config.chunk_ms`; the update for the last
/// chunk is the final one and is shown unmasked.
pub fn run_session<D: Decoder + ?Sized>(
    utterance: &Utterance,
    decoder: &mut D,
    config: &SessionConfig,
) -> Result<RevisionLog, SessionError> {
    let chunked = chunk_by_duration(utterance, config.chunk_ms)?;
    let mut log = RevisionLog {
        header: SessionHeader {
            utterance_id: utterance.id.clone(),
            duration_sec: utterance.duration_sec,
            decoder: decoder.identity(),
            config: config.clone(),
        },
        updates: Vec::with_capacity(chunked.source_chunks.len().max(1)),
    };
    // (source chunks visible, consumed seconds) per update
    let steps: Vec<(usize, f64)> = if chunked.source_chunks.is_empty() {
        vec![(0, 0.0)]
    } else {
        chunked
            .source_chunks
            .iter()
            .enumerate()
            .map(|(i, c)| (i + 1, c.t_end))
            .collect()
    };
    let mut shown_st: Vec<String> = Vec::new();
    let mut shown_tt: Vec<String> = Vec::new();
    for (index, &(visible, consumed)) in steps.iter().enumerate() {
        let is_final = index + 1 == steps.len();
        let mut request = DecodeRequest::new(
            utterance.id.clone(),
            chunked.source_chunks[..visible].to_vec(),
            config.policy,
        )
        .with_forced(
            drop_tail(&shown_st, config.free_tokens.f_transcript),
            drop_tail(&shown_tt, config.free_tokens.f_translation),
        );
        request.beam_size = config.beam_size;
        request.max_tokens = config.max_tokens;
        request.langs = config.langs.clone();
        let result = match decode(decoder, &request) {
            Ok(r) => r,
            Err(source) => {
                return Err(SessionError::Decode {
                    partial: Box::new(log),
                    source,
                })
            }
        };
        let shown = apply_mask(&result, &config.mask, is_final);
        shown_st = shown.transcript;
        shown_tt = shown.translation;
        log.updates.push(RevisionUpdate {
            update_index: index,
            source_consumed_sec: consumed,
            displayed_transcript: shown_st.clone(),
            displayed_translation: shown_tt.clone(),
            is_final,
        });
    }
    Ok(log)
}

/// Seconds of source consumed when each final token was settled, per stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FinalizationTrace {
    pub transcript: Vec<f64>,
    pub translation: Vec<f64>,
}

impl FinalizationTrace {
    pub fn stream(&self, stream: Stream) -> &[f64] {
        match stream {
            Stream::Transcript => &self.transcript,
            Stream::Translation => &self.translation,
        }
    }
}

/// For each position of the final output, the consumed time of the earliest
/// update from which that position shows its final token in every later
/// update.
pub fn finalization_times(log: &RevisionLog) -> FinalizationTrace {
    let per_stream = |stream: Stream| -> Vec<f64> {
        let Some(last) = log.updates.last() else {
            return Vec::new();
        };
        let final_tokens = last.displayed(stream);
        (0..final_tokens.len())
            .map(|p| {
                let mut earliest = log.updates.len() - 1;
                while earliest > 0
                    && log.updates[earliest - 1].displayed(stream).get(p) == Some(&final_tokens[p])
                {
                    earliest -= 1;
                }
                log.updates[earliest].source_consumed_sec
            })
            .collect()
    };
    FinalizationTrace {
        transcript: per_stream(Stream::Transcript),
        translation: per_stream(Stream::Translation),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Erasure {
    /// Index of the update that replaced the previous display.
    pub update_index: usize,
    pub stream: Stream,
    pub erased: usize,
}

pub fn longest_common_prefix(a: &[String], b: &[String]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Tokens retracted at each transition between consecutive updates.
pub fn erasure_per_update(log: &RevisionLog) -> Vec<Erasure> {
    log.updates
        .windows(2)
        .flat_map(|w| {
            Stream::BOTH.into_iter().map(move |stream| {
                let prev = w[0].displayed(stream);
                let next = w[1].displayed(stream);
                Erasure {
                    update_index: w[1].update_index,
                    stream,
                    erased: prev.len() - longest_common_prefix(prev, next),
                }
            })
        })
        .collect()
}
