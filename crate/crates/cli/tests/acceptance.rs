//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use retrans::decode::{decode, DecodeRequest, Decoder, EchoLexiconDecoder, NoisyBeamDecoder};
use retrans::metrics::{
    average_lag, corpus_bleu, edit_distance, normalized_erasure, significance, train_lexicon_with,
    wer, Direction, SignificanceConfig,
};
use retrans::schedule::{deinterleave, interleave, stream_order, InterleavePolicy, LanguagePair, Stream};
use retrans::stream::{erasure_per_update, run_session, RevisionUpdate, SessionConfig, SessionHeader};
use retrans::synth::{generate, toy_dictionary, SynthConfig};
use retrans::{RevisionLog, Utterance};
use retrans_cli::sweep::{run_sweep, SweepConfig, SweepReport, DEFAULT_F_VALUES, DEFAULT_K_VALUES};

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn synthetic_corpus() -> Vec<Utterance> {
    generate(&SynthConfig { utterances: 100, seed: 2024, ..SynthConfig::default() })
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(8)
}

/// Scheduling rule with gamma = num/den in exact integer arithmetic.
fn rational_order(num: u64, den: u64, st_len: usize, tt_len: usize) -> Vec<Stream> {
    let (mut st, mut tt) = (0u64, 0u64);
    let mut out = Vec::with_capacity(st_len + tt_len);
    while (st as usize) < st_len || (tt as usize) < tt_len {
        let prefer_st = (den - num) * (1 + tt) > num * (1 + st);
        let st_left = (st as usize) < st_len;
        let tt_left = (tt as usize) < tt_len;
        let pick = if (prefer_st && st_left) || !tt_left { Stream::Transcript } else { Stream::Translation };
        match pick {
            Stream::Transcript => st += 1,
            Stream::Translation => tt += 1,
        }
        out.push(pick);
    }
    out
}

fn scheduler_exactness() -> Verdict {
    let mut compared = 0;
    for (num, den) in [(0u64, 10u64), (3, 10), (5, 10), (10, 10)] {
        let policy = InterleavePolicy::new(num as f64 / den as f64).map_err(|e| e.to_string())?;
        for st_len in 0..=40 {
            for tt_len in 0..=40 {
                let got = stream_order(st_len, tt_len, &policy);
                ensure(got == rational_order(num, den, st_len, tt_len), || {
                    format!("gamma {num}/{den} lengths {st_len}/{tt_len} differ from the oracle")
                })?;
                compared += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let gamma: f64 = rng.gen_range(0.0..=1.0);
        let policy = InterleavePolicy::new(gamma).map_err(|e| e.to_string())?;
        let order = stream_order(200, 200, &policy);
        let mut st = 0usize;
        for (i, s) in order.iter().take(200).enumerate() {
            st += usize::from(*s == Stream::Transcript);
            let drift = (st as f64 - (1.0 - gamma) * (i + 1) as f64).abs();
            worst = worst.max(drift);
            ensure(drift <= 1.0, || format!("gamma {gamma}: drift {drift} after {} tokens", i + 1))?;
        }
    }
    Ok(format!("{compared} orders match the integer oracle; max drift {worst:.3} over 1000 gammas x 200 tokens"))
}

fn round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let langs = LanguagePair::default();
    let vocab = ["a", "b", "c", "</s>", "x y", ""];
    for trial in 0..10_000 {
        let seq = |rng: &mut ChaCha8Rng| -> Vec<String> {
            let n = rng.gen_range(0..30);
            (0..n).map(|_| vocab[rng.gen_range(0..vocab.len())].to_string()).collect()
        };
        let s = seq(&mut rng);
        let t = seq(&mut rng);
        let gamma: f64 = rng.gen_range(0.0..=1.0);
        let policy = InterleavePolicy::new(gamma).map_err(|e| e.to_string())?;
        let back = deinterleave(&interleave(&s, &t, &policy, &langs));
        ensure(back == (s.clone(), t.clone()), || format!("trial {trial}: gamma {gamma} lost tokens"))?;
    }
    Ok("10000 random triples restored exactly".into())
}

/// Strings over {0,1,2} up to length 6, indexed densely.
struct Strings {
    all: Vec<Vec<u8>>,
}

impl Strings {
    fn new(max_len: usize) -> Self {
        let mut all = vec![Vec::new()];
        let mut frontier = vec![Vec::new()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for s in &frontier {
                for c in 0..3u8 {
                    let mut t: Vec<u8> = s.clone();
                    t.push(c);
                    next.push(t);
                }
            }
            all.extend(next.iter().cloned());
            frontier = next;
        }
        Self { all }
    }

    fn index(&self, s: &[u8]) -> usize {
        // all strings of shorter length come first, then base-3 order
        let offset: usize = (0..s.len()).map(|l| 3usize.pow(l as u32)).sum();
        offset + s.iter().fold(0, |acc, &c| acc * 3 + c as usize)
    }

    /// Strings one insertion, deletion or substitution away.
    fn neighbours(&self, max_len: usize) -> Vec<Vec<usize>> {
        self.all
            .iter()
            .map(|s| {
                let mut out = Vec::new();
                for i in 0..s.len() {
                    let mut d = s.clone();
                    d.remove(i);
                    out.push(self.index(&d));
                    for c in 0..3u8 {
                        if c != s[i] {
                            let mut r = s.clone();
                            r[i] = c;
                            out.push(self.index(&r));
                        }
                    }
                }
                if s.len() < max_len {
                    for i in 0..=s.len() {
                        for c in 0..3u8 {
                            let mut a = s.clone();
                            a.insert(i, c);
                            out.push(self.index(&a));
                        }
                    }
                }
                out
            })
            .collect()
    }
}

fn wer_oracle() -> Verdict {
    const MAX_LEN: usize = 6;
    let start = Instant::now();
    let strings = Strings::new(MAX_LEN);
    let graph = strings.neighbours(MAX_LEN);
    let n = strings.all.len();
    let words: Vec<Vec<String>> = strings
        .all
        .iter()
        .map(|s| s.iter().map(|c| ["a", "b", "c"][*c as usize].to_string()).collect())
        .collect();
    let mut pairs = 0usize;
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for src in 0..n {
        // fewest single edits from src to every string, by breadth-first search
        dist.fill(usize::MAX);
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &v in &graph[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for (dst, &oracle) in dist.iter().enumerate() {
            let d = edit_distance(&words[src], &words[dst]);
            ensure(d == oracle, || format!("{:?} -> {:?}: {d} vs oracle {oracle}", words[src], words[dst]))?;
            if !words[dst].is_empty() {
                let w = wer(&words[src], &words[dst]).map_err(|e| e.to_string())?;
                ensure(w == oracle as f64 / words[dst].len() as f64, || format!("WER mismatch for {:?}", words[src]))?;
            }
            pairs += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{pairs} pairs agree with the edit-path oracle in {:.1}s", elapsed.as_secs_f64()))
}

fn bleu_examples() -> Verdict {
    let hyp = vec![toks("a b c d")];
    let refs = vec![toks("a b c d e")];
    let score = corpus_bleu(&hyp, &refs).map_err(|e| e.to_string())?;
    let expected = 100.0 * (-0.25f64).exp();
    ensure((score - 77.88).abs() <= 0.01, || format!("got {score}"))?;
    ensure((score - expected).abs() < 1e-9, || format!("got {score}, want {expected}"))?;
    let corpus = synthetic_corpus();
    let refs: Vec<Vec<String>> = corpus.iter().map(|u| u.translation_ref.clone()).collect();
    let same = corpus_bleu(&refs, &refs).map_err(|e| e.to_string())?;
    ensure(same == 100.0, || format!("identity scored {same}"))?;
    Ok(format!("hand example {score:.4}; identity {same}"))
}

fn average_lag_examples() -> Verdict {
    let hand = average_lag(&[2.0, 4.0, 6.0, 8.0, 10.0], 10.0, 5).map_err(|e| e.to_string())?;
    ensure(hand == 2.0, || format!("hand example gave {hand}"))?;
    let (duration, len) = (10.0, 5usize);
    let d = duration / len as f64;
    let ideal: Vec<f64> = (0..len).map(|i| i as f64 * d).collect();
    let ideal_al = average_lag(&ideal, duration, len).map_err(|e| e.to_string())?;
    ensure(ideal_al == 0.0, || format!("proportional trace gave {ideal_al}"))?;
    let waiting = average_lag(&[duration; 5], duration, len).map_err(|e| e.to_string())?;
    ensure(waiting == duration, || format!("wait-until-end gave {waiting}"))?;
    Ok(format!("hand {hand}; proportional {ideal_al}; wait-until-end {waiting}"))
}

fn hand_log() -> RevisionLog {
    let shown = ["a b", "a c", "a c d"];
    RevisionLog {
        header: SessionHeader {
            utterance_id: "hand".into(),
            duration_sec: 3.0,
            decoder: "hand".into(),
            config: SessionConfig::default(),
        },
        updates: shown
            .iter()
            .enumerate()
            .map(|(i, s)| RevisionUpdate {
                update_index: i,
                source_consumed_sec: (i + 1) as f64,
                displayed_transcript: toks(s),
                displayed_translation: toks(s),
                is_final: i + 1 == shown.len(),
            })
            .collect(),
    }
}

fn normalized_erasure_checks() -> Verdict {
    let corpus = synthetic_corpus();
    let policy = InterleavePolicy::new(0.5).map_err(|e| e.to_string())?;
    let mut sessions = 0;
    for &k in &DEFAULT_K_VALUES {
        let cfg = SessionConfig::new(k, 0, 500, policy);
        let mut decoders: [Box<dyn Decoder>; 2] = [
            Box::new(EchoLexiconDecoder::new(toy_dictionary(), 1)),
            Box::new(NoisyBeamDecoder::from_dictionary(&toy_dictionary(), 1.5, 7)),
        ];
        for utt in &corpus {
            for dec in decoders.iter_mut() {
                let log = run_session(utt, dec, &cfg).map_err(|e| e.to_string())?;
                let ne = normalized_erasure(&log);
                ensure(ne.combined.unwrap_or(0.0) == 0.0, || format!("{} K={k}: NE {:?}", utt.id, ne))?;
                sessions += 1;
            }
        }
    }

    let ne = normalized_erasure(&hand_log());
    ensure(ne.translation == Some(1.0 / 3.0) && ne.combined == Some(1.0 / 3.0), || format!("hand log gave {ne:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut random_sessions = 0;
    for utt in corpus.iter().take(60) {
        for _ in 0..5 {
            let (k, f) = (rng.gen_range(0..8), rng.gen_range(0..8));
            let gamma = rng.gen_range(0.0..=1.0);
            let chunk_ms = rng.gen_range(100..900);
            let cfg = SessionConfig::new(k, f, chunk_ms, InterleavePolicy::new(gamma).map_err(|e| e.to_string())?);
            let mut dec: Box<dyn Decoder> = if rng.gen_bool(0.5) {
                Box::new(EchoLexiconDecoder::new(toy_dictionary(), rng.gen_range(0..4)))
            } else {
                Box::new(NoisyBeamDecoder::from_dictionary(&toy_dictionary(), 2.0, rng.gen()))
            };
            let log = run_session(utt, &mut dec, &cfg).map_err(|e| e.to_string())?;
            for e in erasure_per_update(&log) {
                ensure(e.erased <= f + k, || format!("{} K={k} F={f}: erased {} at update {}", utt.id, e.erased, e.update_index))?;
            }
            random_sessions += 1;
        }
    }
    Ok(format!(
        "{sessions} F=0 sessions with NE 0; hand log 1/3; {random_sessions} random sessions within F+K"
    ))
}

fn consecutive_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let corpus = generate(&SynthConfig { utterances: 100, seed: rng.gen(), ..SynthConfig::default() });
    for utt in &corpus {
        let policy = InterleavePolicy::new(rng.gen_range(0.0..=1.0)).map_err(|e| e.to_string())?;
        let cfg = SessionConfig::new(0, 100, rng.gen_range(100..1000), policy);
        let seed = rng.gen();
        let mut decoders: [Box<dyn Decoder>; 2] = [
            Box::new(EchoLexiconDecoder::new(toy_dictionary(), 1)),
            Box::new(NoisyBeamDecoder::from_dictionary(&toy_dictionary(), 1.5, seed)),
        ];
        for dec in decoders.iter_mut() {
            let log = run_session(utt, dec, &cfg).map_err(|e| e.to_string())?;
            let full = decode(dec, &DecodeRequest::new(utt.id.clone(), utt.source_chunks.clone(), policy))
                .map_err(|e| e.to_string())?;
            ensure(
                log.final_output(Stream::Transcript) == full.transcript.as_slice()
                    && log.final_output(Stream::Translation) == full.translation.as_slice(),
                || format!("{} with {}: final output differs from the full decode", utt.id, dec.identity()),
            )?;
        }
    }
    Ok("100 utterances x 2 decoders match the unconstrained decode".into())
}

fn lexicon_em() -> Verdict {
    let toy = vec![(toks("hund"), toks("dog")), (toks("katze"), toks("cat"))];
    let synth: Vec<_> = synthetic_corpus()
        .into_iter()
        .map(|u| (u.transcript_ref, u.translation_ref))
        .collect();
    let mut worst_row = 0.0f64;
    let mut check_rows = |pairs: &[(Vec<String>, Vec<String>)]| {
        train_lexicon_with(pairs, 10, Direction::SourceToTarget, |_, lex| {
            for sum in lex.row_sums().values() {
                worst_row = worst_row.max((sum - 1.0).abs());
            }
        })
    };
    let lex = check_rows(&toy).map_err(|e| e.to_string())?;
    check_rows(&synth).map_err(|e| e.to_string())?;
    ensure(worst_row <= 1e-6, || format!("a row sums to 1 +- {worst_row}"))?;
    let (dog, cat) = (lex.prob("hund", "dog"), lex.prob("katze", "cat"));
    ensure(dog > 0.99 && cat > 0.99, || format!("p(dog|hund)={dog} p(cat|katze)={cat}"))?;
    Ok(format!("p(dog|hund)={dog}, p(cat|katze)={cat}; max row deviation {worst_row:.1e}"))
}

fn significance_checks() -> Verdict {
    let cfg = SignificanceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..100.0)).collect();
    let same = significance(&a, &a, &cfg).map_err(|e| e.to_string())?;
    ensure(same.p_value == 1.0 && same.statistically_same, || format!("identical inputs gave {same:?}"))?;
    let ones = vec![1.0; 30];
    let zeros = vec![0.0; 30];
    let apart = significance(&ones, &zeros, &cfg).map_err(|e| e.to_string())?;
    ensure(apart.p_value < 0.05 && !apart.statistically_same, || format!("constant gap gave {apart:?}"))?;
    let b: Vec<f64> = a.iter().map(|x| x + rng.gen_range(-5.0..6.0)).collect();
    let first = significance(&a, &b, &cfg).map_err(|e| e.to_string())?;
    let second = significance(&a, &b, &cfg).map_err(|e| e.to_string())?;
    ensure(first == second, || "same seed gave different results".into())?;
    Ok(format!("identical p={}; constant gap p={}; repeat p={} twice", same.p_value, apart.p_value, first.p_value))
}

fn sweep_shape(report: &SweepReport, elapsed: Duration, corpus: &[Utterance]) -> Verdict {
    ensure(report.rows.len() == 108, || format!("{} rows", report.rows.len()))?;
    let csv = report.to_csv();
    ensure(csv.lines().count() == 109, || "CSV is not header plus 108 rows".into())?;
    for line in csv.lines().skip(1) {
        for field in line.split(',') {
            let ok = field.parse::<f64>().is_ok_and(f64::is_finite);
            ensure(ok, || format!("non-finite field {field:?}"))?;
        }
    }
    ensure(elapsed < Duration::from_secs(300), || format!("sweep took {elapsed:?}"))?;
    let again = run_sweep(corpus, &SweepConfig { jobs: 1.max(jobs() / 2), ..SweepConfig::default() })
        .map_err(|e| e.to_string())?;
    ensure(again.to_csv() == csv, || "re-run produced different CSV bytes".into())?;
    ensure(again.to_json() == report.to_json(), || "re-run produced a different JSON mirror".into())?;
    Ok(format!("108 rows, byte-identical on re-run, {:.1}s for 10800 sessions", elapsed.as_secs_f64()))
}

fn lag_monotone_in_k(report: &SweepReport) -> Verdict {
    let mut checked = 0;
    for &f in &DEFAULT_F_VALUES {
        let mut rows: Vec<_> = report.rows.iter().filter(|r| r.f == f).collect();
        rows.sort_by_key(|r| r.k);
        for w in rows.windows(2) {
            for (name, lo, hi) in [
                ("translation", w[0].al_translation, w[1].al_translation),
                ("transcript", w[0].al_transcript, w[1].al_transcript),
            ] {
                ensure(hi >= lo, || format!("F={f}: {name} AL drops from {lo} (K={}) to {hi} (K={})", w[0].k, w[1].k))?;
                checked += 1;
            }
        }
    }
    let span = |f: usize| {
        let at = |k: usize| report.rows.iter().find(|r| r.k == k && r.f == f).map_or(f64::NAN, |r| r.al_translation);
        (at(0), at(100))
    };
    let (lo, hi) = span(0);
    Ok(format!("{checked} adjacent K steps non-decreasing; translation AL at F=0 goes {lo:.3}s -> {hi:.3}s"))
}

fn main() {
    let mut results: Vec<(&str, Verdict)> = vec![
        ("scheduler exactness and bounded drift", scheduler_exactness()),
        ("interleave round trip", round_trip()),
        ("WER against exhaustive edit oracle", wer_oracle()),
        ("corpus BLEU hand example and identity", bleu_examples()),
        ("average lag examples", average_lag_examples()),
        ("normalized erasure bounds", normalized_erasure_checks()),
        ("K=0 F=100 equals full decode", consecutive_equivalence()),
        ("lexicon EM convergence and normalization", lexicon_em()),
        ("significance test behaviour", significance_checks()),
    ];

    let corpus = synthetic_corpus();
    let start = Instant::now();
    match run_sweep(&corpus, &SweepConfig { jobs: jobs(), ..SweepConfig::default() }) {
        Ok(report) => {
            let elapsed = start.elapsed();
            results.push(("sweep shape and reproducibility", sweep_shape(&report, elapsed, &corpus)));
            results.push(("average lag non-decreasing in K", lag_monotone_in_k(&report)));
        }
        Err(e) => {
            results.push(("sweep shape and reproducibility", Err(e.to_string())));
            results.push(("average lag non-decreasing in K", Err("sweep failed".into())));
        }
    }

    let mut failed = 0;
    for (name, verdict) in &results {
        match verdict {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
