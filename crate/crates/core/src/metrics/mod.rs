//! Quality, latency, flicker and consistency measurements.

mod bleu;
mod consistency;
mod latency;
mod lexicon;
mod significance;
mod wer;

pub use bleu::{corpus_bleu, BleuStats, MAX_NGRAM_ORDER};
pub use consistency::{consistency, incremental_consistency};
pub use latency::{average_lag, normalized_erasure, ErasureTotals, NormalizedErasure};
pub use lexicon::{
    train_lexicon, train_lexicon_pair, train_lexicon_with, Direction, Lexicon, DEFAULT_FLOOR_PROB,
};
pub use significance::{significance, SignificanceConfig, SignificanceResult};
pub use wer::{corpus_wer, edit_distance, wer};


use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Utterance;
use crate::schedule::Stream;
use crate::stream::{finalization_times, RevisionLog};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Corpus-level scores of one configuration.
///
/// `wer` is a fraction, `bleu` is on a 0–100 scale, lags are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub wer: f64,
    pub al_translation_sec: f64,
    pub al_transcript_sec: f64,
    pub ne: NormalizedErasure,
    pub consistency: f64,
    pub incremental_consistency: f64,
}

/// Average lag of one stream of a session, if its final output is nonempty.
pub fn session_lag(log: &RevisionLog, stream: Stream) -> Result<Option<f64>, MetricsError> {
    let final_len = log.final_output(stream).len();
    if final_len == 0 {
        return Ok(None);
    }
    let trace = finalization_times(log);
    average_lag(trace.stream(stream), log.header.duration_sec, final_len).map(Some)
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-session sufficient statistics; corpus scores are reduced from these.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionStats {
    pub bleu: BleuStats,
    pub edits: usize,
    pub ref_words: usize,
    pub lag_transcript: Option<f64>,
    pub lag_translation: Option<f64>,
    pub erasure: ErasureTotals,
    pub consistency: f64,
    pub incremental_consistency: f64,
}

impl SessionStats {
    pub fn of(
        utterance: &Utterance,
        log: &RevisionLog,
        lex_st: &Lexicon,
        lex_ts: &Lexicon,
    ) -> Result<Self, MetricsError> {
        if utterance.id != log.header.utterance_id {
            return Err(MetricsError::Argument(format!(
                "log for {:?} paired with utterance {:?}",
                log.header.utterance_id, utterance.id
            )));
        }
        let transcript = log.final_output(Stream::Transcript);
        let translation = log.final_output(Stream::Translation);
        Ok(Self {
            bleu: BleuStats::of_segment(translation, &utterance.translation_ref),
            edits: edit_distance(transcript, &utterance.transcript_ref),
            ref_words: utterance.transcript_ref.len(),
            lag_transcript: session_lag(log, Stream::Transcript)?,
            lag_translation: session_lag(log, Stream::Translation)?,
            erasure: ErasureTotals::of_log(log),
            consistency: consistency(transcript, translation, lex_st, lex_ts),
            incremental_consistency: incremental_consistency(log, lex_st, lex_ts),
        })
    }

    /// Corpus report: BLEU and WER pooled, erasure pooled, lags and
    /// consistency averaged over sessions.
    pub fn aggregate(sessions: &[SessionStats]) -> Result<MetricReport, MetricsError> {
        if sessions.is_empty() {
            return Err(MetricsError::Argument("no sessions to aggregate".into()));
        }
        let mut bleu = BleuStats::default();
        let mut erasure = ErasureTotals::default();
        let (mut edits, mut words) = (0, 0);
        for s in sessions {
            bleu.add(&s.bleu);
            erasure.add(&s.erasure);
            edits += s.edits;
            words += s.ref_words;
        }
        if words == 0 {
            return Err(MetricsError::Argument("WER needs at least one reference word".into()));
        }
        Ok(MetricReport {
            bleu: bleu.score(),
            wer: edits as f64 / words as f64,
            al_translation_sec: mean(sessions.iter().filter_map(|s| s.lag_translation)),
            al_transcript_sec: mean(sessions.iter().filter_map(|s| s.lag_transcript)),
            ne: erasure.normalized(),
            consistency: mean(sessions.iter().map(|s| s.consistency)),
            incremental_consistency: mean(sessions.iter().map(|s| s.incremental_consistency)),
        })
    }
}

/// Scores a set of sessions against their utterances' references.
///
/// `logs[i]` must belong to `utterances[i]`.
pub fn evaluate(
    utterances: &[Utterance],
    logs: &[RevisionLog],
    lex_st: &Lexicon,
    lex_ts: &Lexicon,
) -> Result<MetricReport, MetricsError> {
    if utterances.len() != logs.len() {
        return Err(MetricsError::Argument(format!(
            "{} utterances for {} session logs",
            utterances.len(),
            logs.len()
        )));
    }
    let stats = utterances
        .iter()
        .zip(logs)
        .map(|(u, l)| SessionStats::of(u, l, lex_st, lex_ts))
        .collect::<Result<Vec<_>, _>>()?;
    SessionStats::aggregate(&stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::decode::EchoLexiconDecoder;
    use crate::schedule::InterleavePolicy;
    use crate::stream::{run_session, SessionConfig};
    use crate::synth::{generate, toy_dictionary, SynthConfig};

    #[test]
    fn evaluate_matches_direct_metrics() {
        let corpus = generate(&SynthConfig { utterances: 6, seed: 3, ..SynthConfig::default() });
        let cfg = SessionConfig::new(1, 2, 300, InterleavePolicy::new(0.5).unwrap());
        let logs: Vec<RevisionLog> = corpus
            .iter()
            .map(|u| run_session(u, &mut EchoLexiconDecoder::new(toy_dictionary(), 1), &cfg).unwrap())
            .collect();
        let pairs: Vec<_> = corpus
            .iter()
            .map(|u| (u.transcript_ref.clone(), u.translation_ref.clone()))
            .collect();
        let (st, ts) = train_lexicon_pair(&pairs, 10).unwrap();
        let report = evaluate(&corpus, &logs, &st, &ts).unwrap();

        let finals = |s: Stream| logs.iter().map(|l| l.final_output(s).to_vec()).collect::<Vec<_>>();
        let refs_tt: Vec<_> = corpus.iter().map(|u| u.translation_ref.clone()).collect();
        let refs_st: Vec<_> = corpus.iter().map(|u| u.transcript_ref.clone()).collect();
        assert_eq!(report.bleu, corpus_bleu(&finals(Stream::Translation), &refs_tt).unwrap());
        assert_eq!(report.wer, corpus_wer(&finals(Stream::Transcript), &refs_st).unwrap());
        assert_eq!(report.wer, 0.0);
        assert!(report.al_translation_sec > 0.0);
        assert!(report.ne.combined.is_some());

        let mut swapped = logs.clone();
        swapped.swap(0, 1);
        assert!(evaluate(&corpus, &swapped, &st, &ts).is_err());
    }

    #[test]
    fn report_json_fields() {
        let r = MetricReport {
            bleu: 50.0,
            wer: 0.1,
            al_translation_sec: 1.0,
            al_transcript_sec: 0.5,
            ne: NormalizedErasure {
                transcript: Some(0.0),
                translation: Some(0.2),
                combined: Some(0.1),
            },
            consistency: 2.0,
            incremental_consistency: 3.0,
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "al_transcript_sec",
                "al_translation_sec",
                "bleu",
                "consistency",
                "incremental_consistency",
                "ne",
                "wer"
            ]
        );
    }
}
