//! The decoder contract used by the re-translation loop.
//!
//! Every call decodes the whole source seen so far from scratch. Decoders
//! must reproduce the forced prefixes of both streams verbatim; [`decode`]
//! checks that before handing a result back.

mod beam;
mod echo;
mod conformance;
pub mod ipc;

pub use beam::{beam_search, BeamHypothesis, CandidateTable, NoisyBeamDecoder};
pub use conformance::{conformance_suite, ConformanceCheck};
pub use echo::{EchoLexiconDecoder, ToyDictionary};
pub use ipc::{serve, ExternalDecoder, Message, PROTOCOL_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TimedChunk;
use crate::schedule::{
    deinterleave, interleave, stream_order, InterleavePolicy, LanguagePair, Stream, TaggedToken,
};

/// Beam width used for decoding and n-best generation.
pub const DEFAULT_BEAM_SIZE: usize = 5;
/// Exponent of the polynomial length normalization.
pub const DEFAULT_LENGTH_EXPONENT: f64 = 1.5;
pub const DEFAULT_MAX_TOKENS: usize = 512;
/// Reserved end-of-stream marker; never valid inside a forced prefix.
pub const END_OF_STREAM: &str = "</s>";

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("session {session}: transport failure: {message}")]
    Transport { session: String, message: String },
    #[error("session {session}: protocol violation: {message}")]
    Protocol { session: String, message: String },
    #[error("session {session}: decoder broke the forced-prefix contract: {message}")]
    Conformance { session: String, message: String },
    #[error("session {session}: decoder reported an error: {message}")]
    Decoder { session: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeRequest {
    /// Identifies the session in logs and in the subprocess protocol.
    pub session: String,
    /// Every chunk received so far.
    pub source_prefix: Vec<TimedChunk>,
    pub forced_transcript: Vec<String>,
    pub forced_translation: Vec<String>,
    pub policy: InterleavePolicy,
    pub beam_size: usize,
    pub max_tokens: usize,
    pub langs: LanguagePair,
}

impl DecodeRequest {
    pub fn new(session: impl Into<String>, source_prefix: Vec<TimedChunk>, policy: InterleavePolicy) -> Self {
        Self {
            session: session.into(),
            source_prefix,
            forced_transcript: Vec::new(),
            forced_translation: Vec::new(),
            policy,
            beam_size: DEFAULT_BEAM_SIZE,
            max_tokens: DEFAULT_MAX_TOKENS,
            langs: LanguagePair::default(),
        }
    }

    pub fn with_forced(mut self, transcript: Vec<String>, translation: Vec<String>) -> Self {
        self.forced_transcript = transcript;
        self.forced_translation = translation;
        self
    }

    pub fn forced(&self, stream: Stream) -> &[String] {
        match stream {
            Stream::Transcript => &self.forced_transcript,
            Stream::Translation => &self.forced_translation,
        }
    }

    /// Gold source tokens revealed by the chunks received so far.
    pub fn revealed_tokens(&self) -> Vec<String> {
        self.source_prefix
            .iter()
            .flat_map(|c| c.tokens.iter().cloned())
            .collect()
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.beam_size == 0 {
            return Err(DecodeError::Argument("beam size must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(DecodeError::Argument("max_tokens must be at least 1".into()));
        }
        let forced = self.forced_transcript.len() + self.forced_translation.len();
        if forced > self.max_tokens {
            return Err(DecodeError::Argument(format!(
                "forced prefixes hold {forced} tokens but max_tokens is {}",
                self.max_tokens
            )));
        }
        for stream in Stream::BOTH {
            if self
                .forced(stream)
                .iter()
                .any(|t| t.is_empty() || t == END_OF_STREAM)
            {
                return Err(DecodeError::Argument(format!(
                    "forced {stream} prefix contains an empty or end-of-stream token"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    /// Tokens in generation order.
    pub interleaved: Vec<TaggedToken>,
    pub transcript: Vec<String>,
    pub translation: Vec<String>,
    /// Model log-probability; toy decoders may report 0.
    pub score: f64,
    /// Mask already applied to this result. Masking again with the same
    /// policy is a no-op.
    #[serde(default)]
    pub withheld: MaskPolicy,
}

impl DecodeResult {
    /// Builds a result whose generation order follows the scheduler.
    pub fn from_streams(
        transcript: Vec<String>,
        translation: Vec<String>,
        policy: &InterleavePolicy,
        langs: &LanguagePair,
        score: f64,
    ) -> Self {
        let interleaved = interleave(&transcript, &translation, policy, langs);
        Self {
            interleaved,
            transcript,
            translation,
            score,
            withheld: MaskPolicy::default(),
        }
    }

    /// Like [`DecodeResult::from_streams`], but stops generation after
    /// `max_tokens` interleaved tokens.
    pub fn from_streams_capped(
        transcript: Vec<String>,
        translation: Vec<String>,
        policy: &InterleavePolicy,
        langs: &LanguagePair,
        score: f64,
        max_tokens: usize,
    ) -> Self {
        if transcript.len() + translation.len() <= max_tokens {
            return Self::from_streams(transcript, translation, policy, langs, score);
        }
        let order = stream_order(transcript.len(), translation.len(), policy);
        let kept = &order[..max_tokens];
        let n_st = kept.iter().filter(|s| **s == Stream::Transcript).count();
        let n_tt = kept.len() - n_st;
        Self::from_streams(
            transcript[..n_st].to_vec(),
            translation[..n_tt].to_vec(),
            policy,
            langs,
            score,
        )
    }

    pub fn stream(&self, stream: Stream) -> &[String] {
        match stream {
            Stream::Transcript => &self.transcript,
            Stream::Translation => &self.translation,
        }
    }
}

/// Number of trailing tokens withheld from display, per stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPolicy {
    pub k_transcript: usize,
    pub k_translation: usize,
}

impl MaskPolicy {
    pub fn uniform(k: usize) -> Self {
        Self {
            k_transcript: k,
            k_translation: k,
        }
    }

    pub fn k(&self, stream: Stream) -> usize {
        match stream {
            Stream::Transcript => self.k_transcript,
            Stream::Translation => self.k_translation,
        }
    }
}

/// A source of joint transcript/translation hypotheses.
pub trait Decoder {
    /// Short description recorded in session logs.
    fn identity(&self) -> String;

    /// Decodes `request` from scratch. Implementations should honor the
    /// forced prefixes; callers go through [`decode`], which enforces it.
    fn decode(&mut self, request: &DecodeRequest) -> Result<DecodeResult, DecodeError>;
}

impl<D: Decoder + ?Sized> Decoder for Box<D> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn decode(&mut self, request: &DecodeRequest) -> Result<DecodeResult, DecodeError> {
        (**self).decode(request)
    }
}

/// Validates `request`, runs the decoder and checks the result against the
/// forced prefixes and the interleaving schedule.
pub fn decode<D: Decoder + ?Sized>(
    decoder: &mut D,
    request: &DecodeRequest,
) -> Result<DecodeResult, DecodeError> {
    request.validate()?;
    let result = decoder.decode(request)?;
    check_conformance(request, &result)?;
    Ok(result)
}

fn check_conformance(request: &DecodeRequest, result: &DecodeResult) -> Result<(), DecodeError> {
    let fail = |message: String| DecodeError::Conformance {
        session: request.session.clone(),
        message,
    };
    for stream in Stream::BOTH {
        let forced = request.forced(stream);
        let produced = result.stream(stream);
        if !produced.starts_with(forced) {
            return Err(fail(format!(
                "{stream} {:?} does not start with forced prefix {:?}",
                produced, forced
            )));
        }
    }
    let (st, tt) = deinterleave(&result.interleaved);
    if st != result.transcript || tt != result.translation {
        return Err(fail("interleaved view disagrees with the stream views".into()));
    }
    let expected = stream_order(st.len(), tt.len(), &request.policy);
    if !result
        .interleaved
        .iter()
        .map(|t| t.stream)
        .eq(expected.iter().copied())
    {
        return Err(fail("generation order does not follow the interleaving schedule".into()));
    }
    Ok(())
}

/// Hides the last `K` tokens of each stream unless the update is final.
///
/// Tokens already withheld by an earlier mask count towards `K`.
pub fn apply_mask(result: &DecodeResult, mask: &MaskPolicy, is_final: bool) -> DecodeResult {
    if is_final {
        return result.clone();
    }
    let extra_st = mask.k_transcript.saturating_sub(result.withheld.k_transcript);
    let extra_tt = mask.k_translation.saturating_sub(result.withheld.k_translation);
    let keep_st = result.transcript.len().saturating_sub(extra_st);
    let keep_tt = result.translation.len().saturating_sub(extra_tt);
    let mut seen_st = 0;
    let mut seen_tt = 0;
    let interleaved = result
        .interleaved
        .iter()
        .filter(|tok| {
            let (seen, keep) = match tok.stream {
                Stream::Transcript => (&mut seen_st, keep_st),
                Stream::Translation => (&mut seen_tt, keep_tt),
            };
            *seen += 1;
            *seen <= keep
        })
        .cloned()
        .collect();
    DecodeResult {
        interleaved,
        transcript: result.transcript[..keep_st].to_vec(),
        translation: result.translation[..keep_tt].to_vec(),
        score: result.score,
        withheld: MaskPolicy {
            k_transcript: mask.k_transcript.max(result.withheld.k_transcript),
            k_translation: mask.k_translation.max(result.withheld.k_translation),
        },
    }
}

/// `logprob / length^exponent`.
pub fn length_normalized_score(logprob: f64, length: usize, exponent: f64) -> Result<f64, DecodeError> {
    if length == 0 {
        return Err(DecodeError::Argument("length must be at least 1".into()));
    }
    Ok(logprob / (length as f64).powf(exponent))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn result(st: &str, tt: &str) -> DecodeResult {
        DecodeResult::from_streams(
            toks(st),
            toks(tt),
            &InterleavePolicy::new(0.5).unwrap(),
            &LanguagePair::default(),
            0.0,
        )
    }

    #[test]
    fn mask_removes_suffix() {
        let r = result("a b c", "x y z w");
        let masked = apply_mask(&r, &MaskPolicy::uniform(2), false);
        assert_eq!(masked.transcript, toks("a"));
        assert_eq!(masked.translation, toks("x y"));
        assert_eq!(deinterleave(&masked.interleaved), (toks("a"), toks("x y")));

        let all = apply_mask(&r, &MaskPolicy::uniform(100), false);
        assert!(all.transcript.is_empty() && all.translation.is_empty());
        assert!(all.interleaved.is_empty());

        assert_eq!(apply_mask(&r, &MaskPolicy::uniform(100), true), r);
    }

    #[test]
    fn mask_is_idempotent_per_policy() {
        let r = result("a b c d", "x y");
        let m = MaskPolicy {
            k_transcript: 1,
            k_translation: 0,
        };
        let once = apply_mask(&r, &m, false);
        assert_eq!(once.transcript, toks("a b c"));
        assert_eq!(once.translation, toks("x y"));
        assert_eq!(apply_mask(&once, &m, false), once);
    }

    #[test]
    fn normalized_score() {
        assert_eq!(length_normalized_score(-6.0, 4, 1.5).unwrap(), -0.75);
        assert_eq!(length_normalized_score(-2.0, 1, 1.5).unwrap(), -2.0);
        assert_eq!(length_normalized_score(-3.5, 7, 0.0).unwrap(), -3.5);
        assert!(length_normalized_score(-1.0, 0, 1.5).is_err());
    }

    #[test]
    fn request_validation() {
        let policy = InterleavePolicy::default();
        let mut req = DecodeRequest::new("s", vec![], policy).with_forced(toks("a b"), toks("x"));
        req.max_tokens = 2;
        assert!(matches!(req.validate(), Err(DecodeError::Argument(_))));
        req.max_tokens = 3;
        req.validate().unwrap();
        req.beam_size = 0;
        assert!(req.validate().is_err());
        let req = DecodeRequest::new("s", vec![], policy).with_forced(toks("a </s>"), vec![]);
        assert!(req.validate().is_err());
    }

    struct Liar;

    impl Decoder for Liar {
        fn identity(&self) -> String {
            "liar".into()
        }
        fn decode(&mut self, r: &DecodeRequest) -> Result<DecodeResult, DecodeError> {
            Ok(DecodeResult::from_streams(
                toks("q"),
                toks("q"),
                &r.policy,
                &r.langs,
                0.0,
            ))
        }
    }

    #[test]
    fn conformance_violation_is_rejected() {
        let req = DecodeRequest::new("s1", vec![], InterleavePolicy::default())
            .with_forced(vec![], toks("x y"));
        match decode(&mut Liar, &req) {
            Err(DecodeError::Conformance { session, .. }) => assert_eq!(session, "s1"),
            other => panic!("expected conformance error, got {other:?}"),
        }
    }

    #[test]
    fn capped_result_follows_schedule() {
        let r = DecodeResult::from_streams_capped(
            toks("a b c"),
            toks("x y z"),
            &InterleavePolicy::new(0.5).unwrap(),
            &LanguagePair::default(),
            0.0,
            3,
        );
        assert_eq!(r.translation, toks("x y"));
        assert_eq!(r.transcript, toks("a"));
    }
}
