//! Interleaving of transcript and translation tokens.
//!
//! A single decoder emits both streams. Before each token it decides which
//! stream the token belongs to: the next token is a transcript token when
//!
//! ```text
//! (1 - gamma) * (1 + count_translation) > gamma * (1 + count_transcript)
//! ```
//!
//! and a translation token otherwise. `gamma = 0` emits the whole transcript
//! first, `gamma = 1` the whole translation first. Once a stream has ended,
//! every remaining decision goes to the other one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative slack under which the two sides of the scheduling inequality are
/// treated as equal. Ties go to the translation stream.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("interleaving ratio must lie in [0, 1], got {0}")]
    InvalidGamma(f64),
    #[error("both streams are finished; no stream left to schedule")]
    BothStreamsDone,
}

/// Which output a token belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Transcript,
    Translation,
}

impl Stream {
    pub const BOTH: [Stream; 2] = [Stream::Transcript, Stream::Translation];

    pub fn other(self) -> Stream {
        match self {
            Stream::Transcript => Stream::Translation,
            Stream::Translation => Stream::Transcript,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Transcript => "transcript",
            Stream::Translation => "translation",
        }
    }
}

impl std::fmt::Display for Stream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The interleaving ratio `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct InterleavePolicy {
    gamma: f64,
}

impl InterleavePolicy {
    pub fn new(gamma: f64) -> Result<Self, ScheduleError> {
        if (0.0..=1.0).contains(&gamma) {
            Ok(Self { gamma })
        } else {
            Err(ScheduleError::InvalidGamma(gamma))
        }
    }

    /// Transcript first, then translation.
    pub fn transcript_first() -> Self {
        Self { gamma: 0.0 }
    }

    /// Translation first, then transcript.
    pub fn translation_first() -> Self {
        Self { gamma: 1.0 }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Evaluates the scheduling inequality alone, ignoring stream exhaustion.
    pub fn prefers_transcript(&self, count_transcript: usize, count_translation: usize) -> bool {
        let lhs = (1.0 - self.gamma) * (1.0 + count_translation as f64);
        let rhs = self.gamma * (1.0 + count_transcript as f64);
        lhs - rhs > TIE_EPS * (lhs.abs() + rhs.abs()).max(1.0)
    }
}

impl Default for InterleavePolicy {
    fn default() -> Self {
        Self::transcript_first()
    }
}

impl TryFrom<f64> for InterleavePolicy {
    type Error = ScheduleError;

    fn try_from(gamma: f64) -> Result<Self, Self::Error> {
        Self::new(gamma)
    }
}

impl From<InterleavePolicy> for f64 {
    fn from(p: InterleavePolicy) -> f64 {
        p.gamma
    }
}

/// Counts of content tokens emitted so far, plus end-of-stream flags.
///
/// Counts never decrease and a finished stream stays finished.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScheduleState {
    count_transcript: usize,
    count_translation: usize,
    transcript_done: bool,
    translation_done: bool,
}

impl ScheduleState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, stream: Stream) -> usize {
        match stream {
            Stream::Transcript => self.count_transcript,
            Stream::Translation => self.count_translation,
        }
    }

    pub fn is_done(&self, stream: Stream) -> bool {
        match stream {
            Stream::Transcript => self.transcript_done,
            Stream::Translation => self.translation_done,
        }
    }

    pub fn all_done(&self) -> bool {
        self.transcript_done && self.translation_done
    }

    /// Records one content token on `stream`.
    pub fn record(&mut self, stream: Stream) {
        match stream {
            Stream::Transcript => self.count_transcript += 1,
            Stream::Translation => self.count_translation += 1,
        }
    }

    /// Marks `stream` as ended.
    pub fn finish(&mut self, stream: Stream) {
        match stream {
            Stream::Transcript => self.transcript_done = true,
            Stream::Translation => self.translation_done = true,
        }
    }

    pub fn next_stream(&self, policy: &InterleavePolicy) -> Result<Stream, ScheduleError> {
        next_stream(self, policy)
    }
}

/// Picks the stream of the next generated token.
///
/// Never returns a finished stream; fails when both are finished.
pub fn next_stream(state: &ScheduleState, policy: &InterleavePolicy) -> Result<Stream, ScheduleError> {
    if state.all_done() {
        return Err(ScheduleError::BothStreamsDone);
    }
    let preferred =
        if policy.prefers_transcript(state.count_transcript, state.count_translation) {
            Stream::Transcript
        } else {
            Stream::Translation
        };
    if state.is_done(preferred) {
        Ok(preferred.other())
    } else {
        Ok(preferred)
    }
}

/// Language tags of the two streams.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguagePair {
    pub source: String,
    pub target: String,
}

impl LanguagePair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
        }
    }

    pub fn tag(&self, stream: Stream) -> &str {
        match stream {
            Stream::Transcript => &self.source,
            Stream::Translation => &self.target,
        }
    }
}

impl Default for LanguagePair {
    fn default() -> Self {
        Self::new("src", "tgt")
    }
}

/// A token of the joint output, tagged with its stream and language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedToken {
    pub text: String,
    pub stream: Stream,
    pub lang: String,
}

/// Yields the stream order for sequences of the given lengths.
pub fn stream_order(
    transcript_len: usize,
    translation_len: usize,
    policy: &InterleavePolicy,
) -> Vec<Stream> {
    let mut state = ScheduleState::new();
    let mut order = Vec::with_capacity(transcript_len + translation_len);
    loop {
        if state.count(Stream::Transcript) == transcript_len {
            state.finish(Stream::Transcript);
        }
        if state.count(Stream::Translation) == translation_len {
            state.finish(Stream::Translation);
        }
        match next_stream(&state, policy) {
            Ok(stream) => {
                order.push(stream);
                state.record(stream);
            }
            Err(_) => break,
        }
    }
    order
}

/// Merges two streams in the order the scheduler would generate them.
pub fn interleave(
    transcript: &[String],
    translation: &[String],
    policy: &InterleavePolicy,
    langs: &LanguagePair,
) -> Vec<TaggedToken> {
    let mut st = transcript.iter();
    let mut tt = translation.iter();
    stream_order(transcript.len(), translation.len(), policy)
        .into_iter()
        .map(|stream| {
            let text = match stream {
                Stream::Transcript => st.next(),
                Stream::Translation => tt.next(),
            }
            .expect("stream order never exceeds stream length")
            .clone();
            TaggedToken {
                text,
                stream,
                lang: langs.tag(stream).to_string(),
            }
        })
        .collect()
}

/// Splits a tagged sequence back into `(transcript, translation)`.
pub fn deinterleave(tokens: &[TaggedToken]) -> (Vec<String>, Vec<String>) {
    let mut transcript = Vec::new();
    let mut translation = Vec::new();
    for tok in tokens {
        match tok.stream {
            Stream::Transcript => transcript.push(tok.text.clone()),
            Stream::Translation => translation.push(tok.text.clone()),
        }
    }
    (transcript, translation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn first_decisions(gamma: f64, n: usize) -> String {
        let policy = InterleavePolicy::new(gamma).unwrap();
        let mut state = ScheduleState::new();
        let mut out = String::new();
        for _ in 0..n {
            let s = next_stream(&state, &policy).unwrap();
            out.push(match s {
                Stream::Transcript => 'S',
                Stream::Translation => 'T',
            });
            state.record(s);
        }
        out
    }

    #[test]
    fn gamma_point_three_pattern() {
        assert_eq!(first_decisions(0.3, 10), "SSTSSTSSTS");
    }

    #[test]
    fn gamma_half_tie_goes_to_translation() {
        assert_eq!(first_decisions(0.5, 4), "TSTS");
    }

    #[test]
    fn extremes() {
        assert_eq!(first_decisions(0.0, 5), "SSSSS");
        assert_eq!(first_decisions(1.0, 5), "TTTTT");
    }

    #[test]
    fn exhausted_stream_falls_back() {
        let policy = InterleavePolicy::transcript_first();
        let mut state = ScheduleState::new();
        state.finish(Stream::Transcript);
        assert_eq!(next_stream(&state, &policy).unwrap(), Stream::Translation);
        state.finish(Stream::Translation);
        assert_eq!(
            next_stream(&state, &policy),
            Err(ScheduleError::BothStreamsDone)
        );
    }

    #[test]
    fn rejects_out_of_range_gamma() {
        assert!(InterleavePolicy::new(-0.1).is_err());
        assert!(InterleavePolicy::new(1.5).is_err());
        assert!(InterleavePolicy::new(f64::NAN).is_err());
    }

    #[test]
    fn interleave_examples() {
        let langs = LanguagePair::default();
        let s = toks(&["a", "b"]);
        let t = toks(&["x", "y"]);
        let text = |g: f64| -> Vec<String> {
            interleave(&s, &t, &InterleavePolicy::new(g).unwrap(), &langs)
                .into_iter()
                .map(|t| t.text)
                .collect()
        };
        assert_eq!(text(0.0), toks(&["a", "b", "x", "y"]));
        assert_eq!(text(1.0), toks(&["x", "y", "a", "b"]));
        assert_eq!(text(0.5), toks(&["x", "a", "y", "b"]));
    }

    #[test]
    fn tags_follow_streams() {
        let langs = LanguagePair::new("en", "de");
        let merged = interleave(
            &toks(&["hello"]),
            &toks(&["hallo"]),
            &InterleavePolicy::new(0.5).unwrap(),
            &langs,
        );
        assert_eq!(merged[0].lang, "de");
        assert_eq!(merged[0].stream, Stream::Translation);
        assert_eq!(merged[1].lang, "en");
    }

    #[test]
    fn deinterleave_degenerate() {
        assert_eq!(deinterleave(&[]), (vec![], vec![]));
        let only = interleave(
            &toks(&["a", "b"]),
            &[],
            &InterleavePolicy::new(0.7).unwrap(),
            &LanguagePair::default(),
        );
        assert_eq!(deinterleave(&only), (toks(&["a", "b"]), vec![]));
    }

    #[test]
    fn policy_serializes_as_number() {
        let p = InterleavePolicy::new(0.3).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), "0.3");
        assert!(serde_json::from_str::<InterleavePolicy>("2.0").is_err());
    }
}
