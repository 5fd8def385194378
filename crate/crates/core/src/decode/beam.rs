use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::echo::ToyDictionary;
use super::{
    length_normalized_score, DecodeError, DecodeRequest, DecodeResult, Decoder,
    DEFAULT_LENGTH_EXPONENT,
};
use crate::schedule::{stream_order, InterleavePolicy, Stream};

/// Log-probability given to a forced token the model would not propose.
const FORCED_FLOOR_LOGPROB: f64 = -13.815510557964274; // ln(1e-6)

/// Candidate outputs per source word with their log-probabilities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateTable {
    entries: BTreeMap<String, Vec<(String, f64)>>,
}

impl CandidateTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, source: impl Into<String>, candidates: Vec<(String, f64)>) {
        self.entries.insert(source.into(), candidates);
    }

    /// Candidates for `word`; unknown words map to themselves with certainty.
    pub fn candidates(&self, word: &str) -> Vec<(String, f64)> {
        match self.entries.get(word) {
            Some(c) if !c.is_empty() => c.clone(),
            _ => vec![(word.to_string(), 0.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamHypothesis {
    pub transcript: Vec<String>,
    pub translation: Vec<String>,
    pub logprob: f64,
    /// `logprob` after length normalization.
    pub score: f64,
}

#[derive(Debug, Clone)]
struct Partial {
    transcript: Vec<String>,
    translation: Vec<String>,
    logprob: f64,
}

fn rank(a: &Partial, b: &Partial) -> Ordering {
    b.logprob
        .total_cmp(&a.logprob)
        .then_with(|| a.transcript.cmp(&b.transcript))
        .then_with(|| a.translation.cmp(&b.translation))
}

/// Beam search over the interleaved output.
///
/// `transcript_slots[p]` lists the candidates for transcript position `p`
/// (likewise for translation). At every step only the stream picked by the
/// interleaving schedule may be extended. Finished hypotheses are compared
/// by length-normalized score.
pub fn beam_search(
    transcript_slots: &[Vec<(String, f64)>],
    translation_slots: &[Vec<(String, f64)>],
    policy: &InterleavePolicy,
    beam_size: usize,
    max_tokens: usize,
    exponent: f64,
) -> Result<BeamHypothesis, DecodeError> {
    if beam_size == 0 {
        return Err(DecodeError::Argument("beam size must be at least 1".into()));
    }
    if transcript_slots
        .iter()
        .chain(translation_slots)
        .any(Vec::is_empty)
    {
        return Err(DecodeError::Argument("every position needs a candidate".into()));
    }
    let mut beam = vec![Partial {
        transcript: Vec::new(),
        translation: Vec::new(),
        logprob: 0.0,
    }];
    let order = stream_order(transcript_slots.len(), translation_slots.len(), policy);
    for stream in order.into_iter().take(max_tokens) {
        let mut next = Vec::with_capacity(beam.len() * 3);
        for hyp in &beam {
            let (slots, pos) = match stream {
                Stream::Transcript => (transcript_slots, hyp.transcript.len()),
                Stream::Translation => (translation_slots, hyp.translation.len()),
            };
            for (token, lp) in &slots[pos] {
                let mut ext = hyp.clone();
                match stream {
                    Stream::Transcript => ext.transcript.push(token.clone()),
                    Stream::Translation => ext.translation.push(token.clone()),
                }
                ext.logprob += lp;
                next.push(ext);
            }
        }
        next.sort_by(rank);
        next.truncate(beam_size);
        beam = next;
    }
    let mut best: Option<BeamHypothesis> = None;
    for hyp in beam {
        let len = hyp.transcript.len() + hyp.translation.len();
        let score = if len == 0 {
            hyp.logprob
        } else {
            length_normalized_score(hyp.logprob, len, exponent)?
        };
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(BeamHypothesis {
                transcript: hyp.transcript,
                translation: hyp.translation,
                logprob: hyp.logprob,
                score,
            });
        }
    }
    Ok(best.expect("beam is never empty"))
}

/// Beam-search decoder over a small candidate lexicon whose scores are
/// perturbed by seeded noise. Noise shrinks as right context accumulates,
/// so early guesses near the input frontier may be revised later.
#[derive(Debug, Clone)]
pub struct NoisyBeamDecoder {
    transcript: CandidateTable,
    translation: CandidateTable,
    noise: f64,
    seed: u64,
    length_exponent: f64,
}

impl NoisyBeamDecoder {
    pub fn new(transcript: CandidateTable, translation: CandidateTable, noise: f64, seed: u64) -> Self {
        Self {
            transcript,
            translation,
            noise,
            seed,
            length_exponent: DEFAULT_LENGTH_EXPONENT,
        }
    }

    /// Derives up to three translation candidates per word (the dictionary
    /// entry plus entries of its two neighbours) and two transcript
    /// candidates (the word and its neighbour).
    pub fn from_dictionary(dictionary: &ToyDictionary, noise: f64, seed: u64) -> Self {
        let entries: Vec<(&str, &str)> = dictionary.entries().collect();
        let n = entries.len();
        let mut transcript = CandidateTable::new();
        let mut translation = CandidateTable::new();
        for (i, (src, tgt)) in entries.iter().enumerate() {
            let mut tt = vec![(tgt.to_string(), 0.6f64.ln())];
            for (offset, p) in [(1, 0.25f64), (2, 0.15)] {
                if n > offset {
                    let alt = entries[(i + offset) % n].1;
                    if !tt.iter().any(|(t, _)| t == alt) {
                        tt.push((alt.to_string(), p.ln()));
                    }
                }
            }
            translation.insert(*src, tt);
            let mut st = vec![(src.to_string(), 0.8f64.ln())];
            if n > 1 {
                st.push((entries[(i + 1) % n].0.to_string(), 0.2f64.ln()));
            }
            transcript.insert(*src, st);
        }
        Self::new(transcript, translation, noise, seed)
    }

    fn table(&self, stream: Stream) -> &CandidateTable {
        match stream {
            Stream::Transcript => &self.transcript,
            Stream::Translation => &self.translation,
        }
    }

    fn noise_rng(&self, stream: Stream, position: usize, revealed: usize) -> ChaCha8Rng {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for v in [stream as u64, position as u64, revealed as u64] {
            h = (h ^ v).wrapping_mul(0x100_0000_01b3).rotate_left(29);
        }
        ChaCha8Rng::seed_from_u64(h)
    }

    fn slots(&self, stream: Stream, forced: &[String], revealed: &[String]) -> Vec<Vec<(String, f64)>> {
        let n = revealed.len();
        let len = n.max(forced.len());
        (0..len)
            .map(|p| {
                let proposed = revealed.get(p).map(|w| self.table(stream).candidates(w));
                if let Some(f) = forced.get(p) {
                    let lp = proposed
                        .and_then(|c| c.into_iter().find(|(t, _)| t == f).map(|(_, lp)| lp))
                        .unwrap_or(FORCED_FLOOR_LOGPROB);
                    return vec![(f.clone(), lp)];
                }
                let mut cands = proposed.expect("position lies within the revealed source");
                if self.noise > 0.0 {
                    let amplitude = self.noise / (1.0 + (n - 1 - p) as f64);
                    let mut rng = self.noise_rng(stream, p, n);
                    for (_, lp) in cands.iter_mut() {
                        *lp += amplitude * rng.gen_range(-1.0..1.0);
                    }
                }
                cands
            })
            .collect()
    }
}

impl Decoder for NoisyBeamDecoder {
    fn identity(&self) -> String {
        format!("noisy-beam(noise={},seed={})", self.noise, self.seed)
    }

    fn decode(&mut self, request: &DecodeRequest) -> Result<DecodeResult, DecodeError> {
        let revealed = request.revealed_tokens();
        let st = self.slots(Stream::Transcript, &request.forced_transcript, &revealed);
        let tt = self.slots(Stream::Translation, &request.forced_translation, &revealed);
        let best = beam_search(
            &st,
            &tt,
            &request.policy,
            request.beam_size,
            request.max_tokens,
            self.length_exponent,
        )?;
        Ok(DecodeResult::from_streams(
            best.transcript,
            best.translation,
            &request.policy,
            &request.langs,
            best.logprob,
        ))
    }
}
