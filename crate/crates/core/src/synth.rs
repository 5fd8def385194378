//! Deterministic synthetic corpus over a small reordering toy language.
//!
//! Source sentences mix nouns (`s0`..`s59`, translated `t0`..`t59`) and
//! modifiers (`m0`..`m14`, translated `a0`..`a14`). A modifier always
//! precedes a noun in the source and follows it in the reference
//! translation, so any decoder that commits early has something to revise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TimedChunk, Utterance};
use crate::decode::ToyDictionary;

pub const NOUNS: usize = 60;
pub const MODIFIERS: usize = 15;

/// The dictionary of the toy language.
pub fn toy_dictionary() -> ToyDictionary {
    let mut dict = ToyDictionary::new();
    for i in 0..NOUNS {
        dict.insert(format!("s{i}"), format!("t{i}"));
    }
    for i in 0..MODIFIERS {
        dict.insert(format!("m{i}"), format!("a{i}"));
        dict.mark_reordering(format!("m{i}"));
    }
    dict
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub utterances: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Chance that a position starts a modifier-noun pair.
    pub modifier_rate: f64,
    /// Per-token speaking time range in milliseconds.
    pub word_ms: (u32, u32),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            utterances: 100,
            min_words: 4,
            max_words: 16,
            modifier_rate: 0.3,
            word_ms: (200, 600),
            seed: 0,
        }
    }
}

pub fn generate(cfg: &SynthConfig) -> Vec<Utterance> {
    let dict = toy_dictionary();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.utterances)
        .map(|i| {
            let target_len = rng.gen_range(cfg.min_words..=cfg.max_words.max(cfg.min_words));
            let mut words = Vec::with_capacity(target_len);
            while words.len() < target_len {
                if words.len() + 2 <= target_len && rng.gen_bool(cfg.modifier_rate) {
                    words.push(format!("m{}", rng.gen_range(0..MODIFIERS)));
                }
                words.push(format!("s{}", rng.gen_range(0..NOUNS)));
            }

            // group words into chunks of one to three, timed in whole ms
            let mut chunks = Vec::new();
            let mut start_ms = 0u32;
            let mut rest = &words[..];
            while !rest.is_empty() {
                let take = rng.gen_range(1..=3usize).min(rest.len());
                let span: u32 = (0..take)
                    .map(|_| rng.gen_range(cfg.word_ms.0..=cfg.word_ms.1))
                    .sum();
                let end_ms = start_ms + span;
                chunks.push(TimedChunk::new(
                    start_ms as f64 / 1000.0,
                    end_ms as f64 / 1000.0,
                    rest[..take].to_vec(),
                ));
                start_ms = end_ms;
                rest = &rest[take..];
            }
            Utterance {
                id: format!("synth-{i:04}"),
                duration_sec: start_ms as f64 / 1000.0,
                translation_ref: dict.reference_translation(&words),
                transcript_ref: words,
                source_chunks: chunks,
            }
        })
        .collect()
}
