//! Behavioural checks any decoder, built-in or external, should pass.

use serde::Serialize;

use super::{decode, DecodeRequest, DecodeResult, Decoder, END_OF_STREAM};
use crate::corpus::TimedChunk;
use crate::schedule::{InterleavePolicy, Stream};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformanceCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn probe_source(words: &[&str]) -> Vec<TimedChunk> {
    words
        .iter()
        .enumerate()
        .map(|(i, w)| TimedChunk::new(i as f64 * 0.5, (i + 1) as f64 * 0.5, vec![w.to_string()]))
        .collect()
}

fn probe(gamma: f64, words: &[&str]) -> DecodeRequest {
    let policy = InterleavePolicy::new(gamma).expect("probe gammas are valid");
    DecodeRequest::new("conformance", probe_source(words), policy)
}

fn check<D, F>(name: &'static str, decoder: &mut D, request: &DecodeRequest, verdict: F) -> ConformanceCheck
where
    D: Decoder + ?Sized,
    F: FnOnce(&DecodeResult) -> Result<(), String>,
{
    let outcome = decode(decoder, request).map_err(|e| e.to_string()).and_then(|r| {
        verdict(&r)?;
        Ok(format!("transcript={:?} translation={:?}", r.transcript, r.translation))
    });
    match outcome {
        Ok(detail) => ConformanceCheck { name, passed: true, detail },
        Err(detail) => ConformanceCheck { name, passed: false, detail },
    }
}

/// Runs the suite. The probe source uses the toy vocabulary but no check
/// depends on what the decoder translates words into.
pub fn conformance_suite<D: Decoder + ?Sized>(dec: &mut D) -> Vec<ConformanceCheck> {
    let words = ["s1", "m2", "s3", "s4"];
    let mut checks = Vec::new();

    checks.push(check("schema", dec, &probe(0.5, &words), |r| {
        if r.transcript.is_empty() && r.translation.is_empty() {
            return Err("empty hypothesis for a nonempty source".into());
        }
        if r.transcript.iter().chain(&r.translation).any(|t| t.is_empty() || t == END_OF_STREAM) {
            return Err("output contains an empty token or end-of-stream marker".into());
        }
        if !r.score.is_finite() {
            return Err(format!("score {} is not finite", r.score));
        }
        Ok(())
    }));

    let forced = probe(0.5, &words).with_forced(vec!["s1".into()], vec!["x".into(), "y".into()]);
    checks.push(check("forced_prefix", dec, &forced, |r| {
        if r.translation.starts_with(&["x".to_string(), "y".to_string()]) && r.transcript.starts_with(&["s1".to_string()]) {
            Ok(())
        } else {
            Err("forced prefixes not reproduced".into())
        }
    }));

    for (name, gamma, first) in [
        ("gamma_zero_order", 0.0, Stream::Transcript),
        ("gamma_one_order", 1.0, Stream::Translation),
    ] {
        let mut req = probe(gamma, &words);
        req.max_tokens = words.len();
        checks.push(check(name, dec, &req, |r| {
            let (lead, trail) = (r.stream(first).len(), r.stream(first.other()).len());
            if trail == 0 && lead > 0 {
                Ok(())
            } else {
                Err(format!("with a {}-token budget got {lead} {first} and {trail} {} tokens", words.len(), first.other()))
            }
        }));
    }

    let req = probe(0.3, &words);
    let first = decode(dec, &req);
    checks.push(check("determinism", dec, &req, |r| match &first {
        Ok(f) if f.transcript == r.transcript && f.translation == r.translation => Ok(()),
        Ok(f) => Err(format!("first call gave {:?} / {:?}", f.transcript, f.translation)),
        Err(e) => Err(format!("first call failed: {e}")),
    }));
    checks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::{EchoLexiconDecoder, NoisyBeamDecoder};
    use crate::synth::toy_dictionary;

    #[test]
    fn builtin_decoders_conform() {
        let mut echo = EchoLexiconDecoder::new(toy_dictionary(), 1);
        let mut beam = NoisyBeamDecoder::from_dictionary(&toy_dictionary(), 1.5, 4);
        for checks in [conformance_suite(&mut echo), conformance_suite(&mut beam)] {
            assert_eq!(checks.len(), 5);
            for c in checks {
                assert!(c.passed, "{}: {}", c.name, c.detail);
            }
        }
    }

    #[test]
    fn liar_fails_forced_prefix() {
        struct Liar;
        impl Decoder for Liar {
            fn identity(&self) -> String {
                "liar".into()
            }
            fn decode(&mut self, r: &DecodeRequest) -> Result<DecodeResult, super::super::DecodeError> {
                let src = r.revealed_tokens();
                Ok(DecodeResult::from_streams_capped(src.clone(), src, &r.policy, &r.langs, 0.0, r.max_tokens))
            }
        }
        let checks = conformance_suite(&mut Liar);
        let forced = checks.iter().find(|c| c.name == "forced_prefix").unwrap();
        assert!(!forced.passed);
        assert!(checks.iter().filter(|c| c.name != "forced_prefix").all(|c| c.passed));
    }
}
