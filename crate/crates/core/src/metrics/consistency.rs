//! Lexical consistency between a transcript and its translation.
//!
//! For every word on one side we take the best-supported word on the other
//! side under a word lexicon and score `-ln p`, floored by the lexicon's
//! floor probability. The two directions are averaged. Lower is better and
//! 0 means every word has a certain counterpart.

use super::lexicon::Lexicon;
use crate::stream::RevisionLog;

fn direction_score(words: &[String], other: &[String], lexicon: &Lexicon) -> Option<f64> {
    if words.is_empty() {
        return None;
    }
    let total: f64 = words
        .iter()
        .map(|w| {
            let best = other
                .iter()
                .map(|o| lexicon.prob(w, o))
                .fold(lexicon.floor_prob, f64::max);
            -best.ln()
        })
        .sum();
    Some(total / words.len() as f64)
}

/// Consistency of one transcript/translation pair.
///
/// `lex_st` gives `p(translation word | transcript word)` and `lex_ts` the
/// reverse. If one side is empty only the other direction counts; two empty
/// sides score 0.
pub fn consistency(transcript: &[String], translation: &[String], lex_st: &Lexicon, lex_ts: &Lexicon) -> f64 {
    let forward = direction_score(transcript, translation, lex_st);
    let backward = direction_score(translation, transcript, lex_ts);
    match (forward, backward) {
        (Some(a), Some(b)) => (a + b) / 2.0,
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => 0.0,
    }
}

/// Mean consistency over the updates of a session that display anything.
pub fn incremental_consistency(log: &RevisionLog, lex_st: &Lexicon, lex_ts: &Lexicon) -> f64 {
    let scores: Vec<f64> = log
        .updates
        .iter()
        .filter(|u| !u.displayed_transcript.is_empty() || !u.displayed_translation.is_empty())
        .map(|u| consistency(&u.displayed_transcript, &u.displayed_translation, lex_st, lex_ts))
        .collect();
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}
