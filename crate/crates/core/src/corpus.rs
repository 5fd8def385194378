//! Parallel utterance data: loading, re-chunking and prefix augmentation.
//!
//! An [`Utterance`] is a timed source signal split into contiguous
//! [`TimedChunk`]s together with its reference transcript and translation.
//! Chunk payloads are the gold source tokens revealed during that span of
//! time; toy decoders read them as a stand-in for a speech front-end.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack for comparing chunk boundaries read from text files.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("utterance {id:?}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// A span of the source stream and the tokens revealed during it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedChunk {
    #[serde(rename = "t0")]
    pub t_start: f64,
    #[serde(rename = "t1")]
    pub t_end: f64,
    #[serde(default)]
    pub tokens: Vec<String>,
}

impl TimedChunk {
    pub fn new(t_start: f64, t_end: f64, tokens: Vec<String>) -> Self {
        Self {
            t_start,
            t_end,
            tokens,
        }
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Number of this chunk's tokens revealed by time `t`, assuming the
    /// tokens arrive evenly spread over the chunk.
    fn revealed_by(&self, t: f64) -> usize {
        let n = self.tokens.len();
        if t >= self.t_end - TIME_EPS {
            n
        } else if t <= self.t_start {
            0
        } else {
            let frac = (t - self.t_start) / (self.t_end - self.t_start);
            ((n as f64 * frac + TIME_EPS).floor() as usize).min(n)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub duration_sec: f64,
    #[serde(rename = "transcript")]
    pub transcript_ref: Vec<String>,
    #[serde(rename = "translation")]
    pub translation_ref: Vec<String>,
    #[serde(rename = "chunks", default)]
    pub source_chunks: Vec<TimedChunk>,
}

impl Utterance {
    /// Checks timing and token invariants.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: String| CorpusError::Invalid {
            id: self.id.clone(),
            reason,
        };
        if !self.duration_sec.is_finite() || self.duration_sec < 0.0 {
            return Err(invalid(format!("bad duration {}", self.duration_sec)));
        }
        if let (Some(first), Some(last)) = (self.source_chunks.first(), self.source_chunks.last()) {
            if self.duration_sec <= 0.0 {
                return Err(invalid("chunks present but duration is zero".into()));
            }
            if first.t_start.abs() > TIME_EPS {
                return Err(invalid(format!("first chunk starts at {}", first.t_start)));
            }
            if (last.t_end - self.duration_sec).abs() > TIME_EPS * self.duration_sec.max(1.0) {
                return Err(invalid(format!(
                    "last chunk ends at {} but duration is {}",
                    last.t_end, self.duration_sec
                )));
            }
        }
        for (i, chunk) in self.source_chunks.iter().enumerate() {
            // also rejects NaN bounds
            if chunk.t_end.partial_cmp(&chunk.t_start) != Some(std::cmp::Ordering::Greater) {
                return Err(invalid(format!(
                    "chunk {i} has t_end {} <= t_start {}",
                    chunk.t_end, chunk.t_start
                )));
            }
            if let Some(next) = self.source_chunks.get(i + 1) {
                if (next.t_start - chunk.t_end).abs() > TIME_EPS {
                    return Err(invalid(format!(
                        "chunk {} starts at {} but chunk {i} ends at {}",
                        i + 1,
                        next.t_start,
                        chunk.t_end
                    )));
                }
            }
            if chunk.tokens.iter().any(String::is_empty) {
                return Err(invalid(format!("chunk {i} contains an empty token")));
            }
        }
        if self.transcript_ref.iter().any(String::is_empty) {
            return Err(invalid("empty token in transcript".into()));
        }
        if self.translation_ref.iter().any(String::is_empty) {
            return Err(invalid("empty token in translation".into()));
        }
        Ok(())
    }

    /// All source tokens carried by the chunks, in order.
    pub fn source_tokens(&self) -> Vec<String> {
        self.source_chunks
            .iter()
            .flat_map(|c| c.tokens.iter().cloned())
            .collect()
    }
}

/// Number of source tokens revealed by time `t` across a chunk list.
pub fn revealed_count(chunks: &[TimedChunk], t: f64) -> usize {
    chunks.iter().map(|c| c.revealed_by(t)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Utterance>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    match format {
        CorpusFormat::Jsonl => read_jsonl(reader),
        CorpusFormat::Tsv => read_tsv(reader),
    }
}

/// Reads one utterance per non-blank line.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Utterance>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let utt: Utterance = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        utt.validate().map_err(|e| CorpusError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(utt);
    }
    Ok(out)
}

/// Reads `id \t duration_sec \t transcript \t translation` rows.
///
/// The whole transcript becomes a single chunk spanning the utterance; the
/// session loop re-slices it with [`chunk_by_duration`].
pub fn read_tsv<R: BufRead>(reader: R) -> Result<Vec<Utterance>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CorpusError::Parse {
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let duration_sec: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("bad duration {:?}: {e}", fields[1])))?;
        let split = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        let transcript_ref = split(fields[2]);
        let source_chunks = if duration_sec > 0.0 {
            vec![TimedChunk::new(0.0, duration_sec, transcript_ref.clone())]
        } else {
            Vec::new()
        };
        let utt = Utterance {
            id: fields[0].to_string(),
            duration_sec,
            transcript_ref,
            translation_ref: split(fields[3]),
            source_chunks,
        };
        utt.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(utt);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut writer: W, corpus: &[Utterance]) -> Result<(), CorpusError> {
    for utt in corpus {
        let line = serde_json::to_string(utt).map_err(std::io::Error::other)?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Re-slices the source into `ceil(duration / chunk)` chunks of `chunk_ms`
/// milliseconds; the last chunk ends exactly at the utterance duration.
/// Tokens are redistributed in proportion to time within each original chunk.
pub fn chunk_by_duration(utterance: &Utterance, chunk_ms: u32) -> Result<Utterance, CorpusError> {
    if chunk_ms == 0 {
        return Err(CorpusError::Argument("chunk_ms must be positive".into()));
    }
    let duration = utterance.duration_sec;
    let mut out = utterance.clone();
    if duration <= 0.0 {
        out.source_chunks.clear();
        return Ok(out);
    }
    let n = ((duration * 1000.0 / chunk_ms as f64) - TIME_EPS).ceil().max(1.0) as usize;
    let boundary = |i: usize| {
        if i >= n {
            duration
        } else {
            (i as f64 * chunk_ms as f64) / 1000.0
        }
    };
    let all = utterance.source_tokens();
    let mut chunks = Vec::with_capacity(n);
    let mut taken = 0;
    for i in 0..n {
        let (t0, t1) = (boundary(i), boundary(i + 1));
        let upto = if i + 1 == n {
            all.len()
        } else {
            revealed_count(&utterance.source_chunks, t1)
        };
        chunks.push(TimedChunk::new(t0, t1, all[taken..upto].to_vec()));
        taken = upto;
    }
    out.source_chunks = chunks;
    Ok(out)
}

/// Settings for prefix-sampling augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixAugmentConfig {
    pub seed: u64,
    /// Training epoch after which augmentation should be switched on.
    /// Carried as metadata only.
    pub recommended_start_epoch: u32,
}

impl PrefixAugmentConfig {
    /// Each instance is used once in full and once as a prefix.
    pub const COPIES_PER_INSTANCE: usize = 2;

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            recommended_start_epoch: 15,
        }
    }
}

impl Default for PrefixAugmentConfig {
    fn default() -> Self {
        Self::new(0)
    }
}

/// Truncates an utterance at `fraction` of its duration. Reference token
/// sequences keep `round(fraction * len)` tokens. The id is unchanged.
pub fn truncate_prefix(utterance: &Utterance, fraction: f64) -> Utterance {
    let fraction = fraction.clamp(0.0, 1.0);
    let cut = fraction * utterance.duration_sec;
    let mut chunks = Vec::new();
    for chunk in &utterance.source_chunks {
        if chunk.t_end <= cut + TIME_EPS {
            chunks.push(chunk.clone());
        } else if chunk.t_start < cut - TIME_EPS {
            let keep = chunk.revealed_by(cut);
            chunks.push(TimedChunk::new(chunk.t_start, cut, chunk.tokens[..keep].to_vec()));
            break;
        } else {
            break;
        }
    }
    let keep = |seq: &[String]| {
        let n = ((fraction * seq.len() as f64).round() as usize).min(seq.len());
        seq[..n].to_vec()
    };
    let duration_sec = chunks.last().map_or(0.0, |c| c.t_end);
    Utterance {
        id: utterance.id.clone(),
        duration_sec,
        transcript_ref: keep(&utterance.transcript_ref),
        translation_ref: keep(&utterance.translation_ref),
        source_chunks: chunks,
    }
}

/// Emits every utterance followed by a randomly truncated copy of it.
/// Fractions are drawn uniformly from `[0, 1]`.
pub fn augment_prefixes(corpus: &[Utterance], cfg: &PrefixAugmentConfig) -> Vec<Utterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(corpus.len() * PrefixAugmentConfig::COPIES_PER_INSTANCE);
    for utt in corpus {
        let fraction: f64 = rng.gen_range(0.0..=1.0);
        let mut prefix = truncate_prefix(utt, fraction);
        prefix.id = format!("{}.prefix", utt.id);
        out.push(utt.clone());
        out.push(prefix);
    }
    out
}
