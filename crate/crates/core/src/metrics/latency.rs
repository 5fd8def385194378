use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::schedule::Stream;
use crate::stream::{erasure_per_update, RevisionLog};

const TIME_EPS: f64 = 1e-9;

/// Average lag in seconds.
///
/// `finalize_sec[i]` is the source time at which output token `i` settled.
/// With `d = duration / final_len`, the lag of token `i` (1-based) is
/// `g(i) - (i - 1) * d`, averaged over the tokens up to and including the
/// first one settled at the end of the source.
pub fn average_lag(finalize_sec: &[f64], duration_sec: f64, final_len: usize) -> Result<f64, MetricsError> {
    if final_len == 0 {
        return Err(MetricsError::Argument("average lag needs at least one output token".into()));
    }
    if finalize_sec.len() < final_len {
        return Err(MetricsError::Argument(format!(
            "finalization trace has {} entries for {final_len} tokens",
            finalize_sec.len()
        )));
    }
    let rate = duration_sec / final_len as f64;
    let tau = finalize_sec[..final_len]
        .iter()
        .position(|&g| g >= duration_sec - TIME_EPS)
        .map_or(final_len, |i| i + 1);
    let total: f64 = finalize_sec[..tau]
        .iter()
        .enumerate()
        .map(|(i, &g)| g - i as f64 * rate)
        .sum();
    Ok(total / tau as f64)
}

/// Erased-token and final-length totals per stream; adds up across sessions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErasureTotals {
    pub erased_transcript: usize,
    pub erased_translation: usize,
    pub final_transcript: usize,
    pub final_translation: usize,
}

impl ErasureTotals {
    pub fn of_log(log: &RevisionLog) -> Self {
        let mut t = Self {
            final_transcript: log.final_output(Stream::Transcript).len(),
            final_translation: log.final_output(Stream::Translation).len(),
            ..Self::default()
        };
        for e in erasure_per_update(log) {
            match e.stream {
                Stream::Transcript => t.erased_transcript += e.erased,
                Stream::Translation => t.erased_translation += e.erased,
            }
        }
        t
    }

    pub fn add(&mut self, other: &Self) {
        self.erased_transcript += other.erased_transcript;
        self.erased_translation += other.erased_translation;
        self.final_transcript += other.final_transcript;
        self.final_translation += other.final_translation;
    }

    pub fn normalized(&self) -> NormalizedErasure {
        let ratio = |erased: usize, len: usize| (len > 0).then(|| erased as f64 / len as f64);
        NormalizedErasure {
            transcript: ratio(self.erased_transcript, self.final_transcript),
            translation: ratio(self.erased_translation, self.final_translation),
            combined: ratio(
                self.erased_transcript + self.erased_translation,
                self.final_transcript + self.final_translation,
            ),
        }
    }
}

/// Erased tokens divided by final output length. A stream with an empty
/// final output has no value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizedErasure {
    pub transcript: Option<f64>,
    pub translation: Option<f64>,
    pub combined: Option<f64>,
}

impl NormalizedErasure {
    pub fn stream(&self, stream: Stream) -> Option<f64> {
        match stream {
            Stream::Transcript => self.transcript,
            Stream::Translation => self.translation,
        }
    }
}

pub fn normalized_erasure(log: &RevisionLog) -> NormalizedErasure {
    ErasureTotals::of_log(log).normalized()
}
