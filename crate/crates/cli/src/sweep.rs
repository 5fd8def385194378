//! Grid sweeps over the mask size K and the free-token budget F.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use retrans::metrics::{train_lexicon_pair, Lexicon, MetricReport, SessionStats};
use retrans::stream::{run_session, SessionConfig};
use retrans::{InterleavePolicy, Utterance};

use crate::decoders::DecoderSpec;
use crate::CliError;

pub const DEFAULT_K_VALUES: [usize; 9] = [0, 1, 2, 3, 4, 5, 7, 10, 100];
pub const DEFAULT_F_VALUES: [usize; 12] = [0, 1, 2, 3, 4, 5, 7, 10, 15, 20, 25, 100];
/// EM iterations for the consistency lexica.
pub const LEXICON_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub k_values: Vec<usize>,
    pub f_values: Vec<usize>,
    pub policy: InterleavePolicy,
    pub chunk_ms: u32,
    pub beam_size: usize,
    pub decoder: DecoderSpec,
    pub seed: u64,
    /// Worker threads; at least 1.
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_values: DEFAULT_K_VALUES.to_vec(),
            f_values: DEFAULT_F_VALUES.to_vec(),
            policy: InterleavePolicy::new(0.5).expect("0.5 is a valid gamma"),
            chunk_ms: 500,
            beam_size: retrans::decode::DEFAULT_BEAM_SIZE,
            decoder: DecoderSpec::Echo { dictionary: None, window: 1 },
            seed: 0,
            jobs: 1,
        }
    }
}

/// One CSV row. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub f: usize,
    pub bleu: f64,
    pub wer: f64,
    pub al_translation: f64,
    pub al_transcript: f64,
    /// Zero when nothing was output at all.
    pub ne_combined: f64,
    pub ne_transcript: f64,
    pub ne_translation: f64,
    pub consistency: f64,
    pub incremental_consistency: f64,
    pub utterances: usize,
}

impl SweepRow {
    fn new(k: usize, f: usize, utterances: usize, m: &MetricReport) -> Self {
        Self {
            k,
            f,
            bleu: m.bleu,
            wer: m.wer,
            al_translation: m.al_translation_sec,
            al_transcript: m.al_transcript_sec,
            ne_combined: m.ne.combined.unwrap_or(0.0),
            ne_transcript: m.ne.transcript.unwrap_or(0.0),
            ne_translation: m.ne.translation.unwrap_or(0.0),
            consistency: m.consistency,
            incremental_consistency: m.incremental_consistency,
            utterances,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub decoder: String,
    pub gamma: f64,
    pub chunk_ms: u32,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CliError> {
        let mut csv = csv::Writer::from_writer(writer);
        for row in &self.rows {
            csv.serialize(row).map_err(CliError::other)?;
        }
        csv.flush().map_err(CliError::other)
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report always serializes")
    }
}

fn sorted_unique(values: &[usize]) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Consistency lexica trained on the corpus references.
pub fn corpus_lexica(corpus: &[Utterance]) -> Result<(Lexicon, Lexicon), CliError> {
    let pairs: Vec<_> = corpus
        .iter()
        .map(|u| (u.transcript_ref.clone(), u.translation_ref.clone()))
        .collect();
    train_lexicon_pair(&pairs, LEXICON_ITERATIONS).map_err(CliError::other)
}

/// Runs every (K, F) configuration over `corpus`.
///
/// Sessions run in parallel; each worker owns its decoder instances. Rows
/// are reduced in grid order after all sessions finish, so the report does
/// not depend on scheduling.
pub fn run_sweep(corpus: &[Utterance], cfg: &SweepConfig) -> Result<SweepReport, CliError> {
    if cfg.k_values.is_empty() || cfg.f_values.is_empty() {
        return Err(CliError::other(anyhow::anyhow!("K and F grids must be nonempty")));
    }
    if corpus.is_empty() {
        return Err(CliError::corpus(anyhow::anyhow!("corpus is empty")));
    }
    let (lex_st, lex_ts) = corpus_lexica(corpus)?;
    let grid: Vec<(usize, usize)> = sorted_unique(&cfg.k_values)
        .into_iter()
        .flat_map(|k| sorted_unique(&cfg.f_values).into_iter().map(move |f| (k, f)))
        .collect();
    let n = corpus.len();
    let units: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..n).map(move |u| (g, u)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(CliError::other)?;
    let stats: Vec<Result<SessionStats, CliError>> = pool.install(|| {
        units
            .par_iter()
            .with_min_len(n.min(64))
            .map_init(
                || cfg.decoder.build(cfg.seed),
                |decoder, &(g, u)| {
                    let decoder = decoder
                        .as_mut()
                        .map_err(|e| CliError::decoder(anyhow::anyhow!("{e}")))?;
                    let (k, f) = grid[g];
                    let mut session = SessionConfig::new(k, f, cfg.chunk_ms, cfg.policy);
                    session.beam_size = cfg.beam_size;
                    let log = run_session(&corpus[u], decoder, &session).map_err(CliError::session)?;
                    SessionStats::of(&corpus[u], &log, &lex_st, &lex_ts).map_err(CliError::other)
                },
            )
            .collect()
    });
    let stats: Vec<SessionStats> = stats.into_iter().collect::<Result<_, _>>()?;

    let rows = grid
        .iter()
        .zip(stats.chunks(n))
        .map(|(&(k, f), cell)| {
            let report = SessionStats::aggregate(cell).map_err(CliError::other)?;
            Ok(SweepRow::new(k, f, n, &report))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(SweepReport {
        decoder: cfg.decoder.to_string(),
        gamma: cfg.policy.gamma(),
        chunk_ms: cfg.chunk_ms,
        rows,
    })
}
