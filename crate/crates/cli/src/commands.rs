use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use retrans::corpus::{augment_prefixes, load_corpus, write_jsonl, CorpusFormat, PrefixAugmentConfig};
use retrans::decode::{conformance_suite, serve, DEFAULT_BEAM_SIZE};
use retrans::metrics::{
    evaluate, significance, train_lexicon_with, Direction, SignificanceConfig,
};
use retrans::stream::{run_session, SessionConfig, SessionError};
use retrans::synth::{generate, SynthConfig};
use retrans::{InterleavePolicy, RevisionLog, Utterance};

use crate::decoders::{DecoderSpec, DECODER_ENV};
use crate::sweep::{corpus_lexica, run_sweep, SweepConfig, DEFAULT_F_VALUES, DEFAULT_K_VALUES, LEXICON_ITERATIONS};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "retrans", version, about = "Streaming re-translation simulator and evaluation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one re-translation session per utterance and write revision logs.
    Simulate(SimulateArgs),
    /// Run every (K, F) configuration over a corpus and write CSV and JSON.
    Sweep(SweepArgs),
    /// Score a directory of revision logs against a corpus.
    Metrics(MetricsArgs),
    /// Train a word translation lexicon on corpus references.
    Lexicon(LexiconArgs),
    /// Paired randomization test between two per-segment score files.
    Significance(SignificanceArgs),
    /// Add a randomly truncated prefix copy of every utterance.
    Augment(AugmentArgs),
    /// Write a synthetic corpus over the toy reordering language.
    Synth(SynthArgs),
    /// Serve a built-in decoder over the line protocol on stdin/stdout.
    Serve(ServeArgs),
    /// Check a decoder against the protocol contract.
    Conformance(ConformanceArgs),
}

#[derive(Debug, Args)]
pub struct DecoderArgs {
    /// echo, echo-monotone, noisy-beam (optionally `:<dict.tsv>`) or
    /// exec:<command>. Defaults to the command in RETRANS_DECODER_CMD, then echo.
    #[arg(long)]
    pub decoder: Option<String>,
    /// Seed for decoders with randomness.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl DecoderArgs {
    pub fn spec(&self) -> Result<DecoderSpec, CliError> {
        let env = std::env::var(DECODER_ENV).ok();
        DecoderSpec::resolve(self.decoder.as_deref(), env.as_deref()).map_err(CliError::decoder)
    }
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Interleaving rate: 0 emits the transcript first, 1 the translation.
    #[arg(long, default_value_t = 0.5, value_parser = parse_gamma)]
    pub gamma: f64,
    /// Source chunk length in milliseconds.
    #[arg(long = "chunk-ms", default_value_t = 500, value_parser = clap::value_parser!(u32).range(1..))]
    pub chunk_ms: u32,
    #[arg(long, default_value_t = DEFAULT_BEAM_SIZE, value_parser = parse_positive)]
    pub beam: usize,
}

impl ScheduleArgs {
    fn policy(&self) -> InterleavePolicy {
        InterleavePolicy::new(self.gamma).expect("validated by the parser")
    }
}

fn parse_gamma(s: &str) -> Result<f64, String> {
    let g: f64 = s.parse().map_err(|e| format!("{e}"))?;
    InterleavePolicy::new(g).map(|p| p.gamma()).map_err(|e| e.to_string())
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub decoder: DecoderArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Trailing tokens hidden on every non-final update.
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    /// Trailing displayed tokens the next update may revise.
    #[arg(long, default_value_t = 0)]
    pub f: usize,
    /// Directory receiving one `<utterance>.jsonl` log per utterance.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub decoder: DecoderArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Comma-separated K values.
    #[arg(long = "k-grid", value_delimiter = ',', default_values_t = DEFAULT_K_VALUES)]
    pub k_grid: Vec<usize>,
    /// Comma-separated F values.
    #[arg(long = "f-grid", value_delimiter = ',', default_values_t = DEFAULT_F_VALUES)]
    pub f_grid: Vec<usize>,
    /// Worker threads.
    #[arg(long, default_value_t = 1, value_parser = parse_positive)]
    pub jobs: usize,
    /// Directory receiving `sweep.csv` and `sweep.json`; CSV goes to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory of revision logs, one per utterance.
    #[arg(long)]
    pub logs: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LexiconArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = LEXICON_ITERATIONS)]
    pub iterations: usize,
    /// src-tgt models p(translation word | transcript word); tgt-src the reverse.
    #[arg(long, default_value = "src-tgt")]
    pub direction: Direction,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SignificanceArgs {
    /// Per-segment scores of the first system, one number per line.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub utterances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the toy dictionary as TSV.
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub decoder: DecoderArgs,
}

#[derive(Debug, Args)]
pub struct ConformanceArgs {
    #[command(flatten)]
    pub decoder: DecoderArgs,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Metrics(a) => metrics(&a),
        Command::Lexicon(a) => lexicon(&a),
        Command::Significance(a) => significance_cmd(&a),
        Command::Augment(a) => augment(&a),
        Command::Synth(a) => synth(&a),
        Command::Serve(a) => serve_cmd(&a),
        Command::Conformance(a) => conformance(&a),
    }
}

fn read_corpus(path: &Path) -> Result<Vec<Utterance>, CliError> {
    load_corpus(path, CorpusFormat::from_path(path))
        .with_context(|| format!("cannot load corpus {}", path.display()))
        .map_err(CliError::corpus)
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Maps an utterance id to a safe file stem.
pub fn log_file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

fn write_log(path: &Path, log: &RevisionLog) -> Result<(), CliError> {
    let mut w = create_file(path)?;
    log.write_jsonl(&mut w)
        .and_then(|_| w.flush().map_err(Into::into))
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let corpus = read_corpus(&args.corpus)?;
    let mut decoder = args.decoder.spec()?.build(args.decoder.seed).map_err(CliError::decoder)?;
    let mut config = SessionConfig::new(args.k, args.f, args.schedule.chunk_ms, args.schedule.policy());
    config.beam_size = args.schedule.beam;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    for utt in &corpus {
        let stem = log_file_stem(&utt.id);
        match run_session(utt, &mut decoder, &config) {
            Ok(log) => write_log(&args.out.join(format!("{stem}.jsonl")), &log)?,
            Err(SessionError::Decode { partial, source }) => {
                let path = args.out.join(format!("{stem}.partial.jsonl"));
                write_log(&path, &partial)?;
                return Err(CliError::other(anyhow!(source).context(format!(
                    "session {:?} failed after {} updates; partial log in {}",
                    utt.id,
                    partial.updates.len(),
                    path.display()
                ))));
            }
            Err(e) => return Err(CliError::session(e)),
        }
    }
    eprintln!("wrote {} logs to {}", corpus.len(), args.out.display());
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let corpus = read_corpus(&args.corpus)?;
    let cfg = SweepConfig {
        k_values: args.k_grid.clone(),
        f_values: args.f_grid.clone(),
        policy: args.schedule.policy(),
        chunk_ms: args.schedule.chunk_ms,
        beam_size: args.schedule.beam,
        decoder: args.decoder.spec()?,
        seed: args.decoder.seed,
        jobs: args.jobs,
    };
    // fail fast with the decoder exit code before spawning workers
    drop(cfg.decoder.build(cfg.seed).map_err(CliError::decoder)?);
    let report = run_sweep(&corpus, &cfg)?;
    match &args.out {
        Some(dir) => {
            let mut csv = create_file(&dir.join("sweep.csv"))?;
            report.write_csv(&mut csv)?;
            csv.flush().map_err(CliError::other)?;
            fs::write(dir.join("sweep.json"), report.to_json() + "\n").map_err(CliError::other)?;
            eprintln!("wrote {} rows to {}", report.rows.len(), dir.display());
        }
        None => report.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

/// Reads every `*.jsonl` log in `dir`, skipping partial logs.
fn read_logs(dir: &Path) -> Result<BTreeMap<String, RevisionLog>, CliError> {
    let mut logs = BTreeMap::new();
    let entries = fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))?;
    for entry in entries {
        let path = entry.map_err(CliError::other)?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if !name.ends_with(".jsonl") || name.ends_with(".partial.jsonl") {
            continue;
        }
        let file = File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
        let log = RevisionLog::read_jsonl(BufReader::new(file))
            .with_context(|| format!("bad log {}", path.display()))?;
        if let Some(previous) = logs.insert(log.header.utterance_id.clone(), log) {
            return Err(CliError::other(anyhow!(
                "two logs for utterance {:?}",
                previous.header.utterance_id
            )));
        }
    }
    Ok(logs)
}

fn metrics(args: &MetricsArgs) -> Result<(), CliError> {
    let corpus = read_corpus(&args.corpus)?;
    let mut logs = read_logs(&args.logs)?;
    let ordered = corpus
        .iter()
        .map(|u| {
            logs.remove(&u.id)
                .ok_or_else(|| CliError::other(anyhow!("no log for utterance {:?}", u.id)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (lex_st, lex_ts) = corpus_lexica(&corpus)?;
    let report = evaluate(&corpus, &ordered, &lex_st, &lex_ts).map_err(CliError::other)?;
    let json = serde_json::to_string_pretty(&report).map_err(CliError::other)? + "\n";
    match &args.out {
        Some(path) => fs::write(path, json).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{json}"),
    }
    Ok(())
}

fn lexicon(args: &LexiconArgs) -> Result<(), CliError> {
    let corpus = read_corpus(&args.corpus)?;
    let pairs: Vec<_> = corpus
        .iter()
        .map(|u| match args.direction {
            Direction::SourceToTarget => (u.transcript_ref.clone(), u.translation_ref.clone()),
            Direction::TargetToSource => (u.translation_ref.clone(), u.transcript_ref.clone()),
        })
        .collect();
    let lex = train_lexicon_with(&pairs, args.iterations, args.direction, |_, _| {}).map_err(CliError::other)?;
    let mut w = create_file(&args.out)?;
    lex.write_tsv(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(())
}

/// One number per line; blank lines and `#` comments are skipped.
pub fn read_scores(path: &Path) -> Result<Vec<f64>, CliError> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut scores = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(CliError::other)?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: f64 = t
            .parse()
            .with_context(|| format!("{}:{}: not a number: {t:?}", path.display(), idx + 1))?;
        if !v.is_finite() {
            return Err(CliError::other(anyhow!("{}:{}: score must be finite", path.display(), idx + 1)));
        }
        scores.push(v);
    }
    Ok(scores)
}

fn significance_cmd(args: &SignificanceArgs) -> Result<(), CliError> {
    let a = read_scores(&args.a)?;
    let b = read_scores(&args.b)?;
    let cfg = SignificanceConfig {
        alpha: args.alpha,
        resamples: args.resamples,
        seed: args.seed,
    };
    let res = significance(&a, &b, &cfg).map_err(CliError::other)?;
    println!("p={:?} statistically_same={}", res.p_value, res.statistically_same);
    Ok(())
}

fn augment(args: &AugmentArgs) -> Result<(), CliError> {
    let corpus = read_corpus(&args.corpus)?;
    let out = augment_prefixes(&corpus, &PrefixAugmentConfig::new(args.seed));
    let mut w = create_file(&args.out)?;
    write_jsonl(&mut w, &out).map_err(CliError::other)?;
    w.flush().map_err(CliError::other)?;
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let corpus = generate(&SynthConfig {
        utterances: args.utterances,
        seed: args.seed,
        ..SynthConfig::default()
    });
    let mut w = create_file(&args.out)?;
    write_jsonl(&mut w, &corpus).map_err(CliError::other)?;
    w.flush().map_err(CliError::other)?;
    if let Some(path) = &args.dictionary {
        fs::write(path, retrans::synth::toy_dictionary().to_tsv())
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn serve_cmd(args: &ServeArgs) -> Result<(), CliError> {
    let spec = args.decoder.spec()?;
    let mut decoder = spec.build(args.decoder.seed).map_err(CliError::decoder)?;
    let stdin = io::stdin();
    serve(&mut decoder, stdin.lock(), io::stdout().lock()).map_err(CliError::other)
}

fn conformance(args: &ConformanceArgs) -> Result<(), CliError> {
    let spec = args.decoder.spec()?;
    let mut decoder = spec.build(args.decoder.seed).map_err(CliError::decoder)?;
    println!("PASS handshake ({spec})");
    let checks = conformance_suite(&mut decoder);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::other(anyhow!("{failed} conformance checks failed")));
    }
    Ok(())
}
