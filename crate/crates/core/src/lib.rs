//! Streaming re-translation for joint speech transcription and translation.
//!
//! The crate simulates a re-translation session: every time a new chunk of
//! source arrives, the whole prefix is decoded again, the new hypothesis is
//! constrained to agree with what was already shown (`F` free tokens) and its
//! tail is hidden (`K` masked tokens) until the utterance is complete.
//! Transcript and translation are produced by a single interleaved decoder
//! whose stream order is controlled by the ratio `gamma`.
//!
//! Modules:
//!
//! * [`corpus`]: utterances, timed chunks, loading and prefix augmentation.
//! * [`schedule`]: the interleaving rule and tagged token sequences.
//! * [`decode`]: the decoder contract, toy decoders, masking and the
//!   subprocess protocol for external decoders.
//! * [`stream`]: the session loop, revision logs, finalization and erasure.
//! * [`metrics`]: WER, BLEU, average lag, normalized erasure, lexical
//!   consistency and the paired significance test.
//! * [`synth`]: a deterministic synthetic corpus with a reordering toy
//!   language.

pub mod corpus;
pub mod decode;
pub mod metrics;
pub mod schedule;
pub mod stream;
pub mod synth;

pub use corpus::{TimedChunk, Utterance};
pub use decode::{DecodeRequest, DecodeResult, Decoder, MaskPolicy};
pub use schedule::{InterleavePolicy, LanguagePair, ScheduleState, Stream, TaggedToken};
pub use stream::{RevisionLog, SessionConfig};
