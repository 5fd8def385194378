use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Probability returned for pairs the lexicon knows nothing about.
pub const DEFAULT_FLOOR_PROB: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "src-tgt")]
    SourceToTarget,
    #[serde(rename = "tgt-src")]
    TargetToSource,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::SourceToTarget => "src-tgt",
            Direction::TargetToSource => "tgt-src",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "src-tgt" => Ok(Direction::SourceToTarget),
            "tgt-src" => Ok(Direction::TargetToSource),
            other => Err(MetricsError::Argument(format!("unknown direction {other:?}"))),
        }
    }
}

/// Word translation table `p(output word | input word)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub direction: Direction,
    pub probs: BTreeMap<String, BTreeMap<String, f64>>,
    pub floor_prob: f64,
}

impl Lexicon {
    /// `p(to | from)`, never below the floor.
    pub fn prob(&self, from: &str, to: &str) -> f64 {
        self.probs
            .get(from)
            .and_then(|row| row.get(to))
            .copied()
            .unwrap_or(0.0)
            .max(self.floor_prob)
    }

    /// Sum of each row, keyed by input word.
    pub fn row_sums(&self) -> BTreeMap<&str, f64> {
        self.probs
            .iter()
            .map(|(w, row)| (w.as_str(), row.values().sum()))
            .collect()
    }

    /// Header `#direction=<dir>\tfloor_prob=<p>`, then `from\tto\tprob` rows.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#direction={}\tfloor_prob={}", self.direction.as_str(), self.floor_prob)?;
        for (from, row) in &self.probs {
            for (to, p) in row {
                writeln!(w, "{from}\t{to}\t{p}")?;
            }
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, MetricsError> {
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, message: String| MetricsError::Parse { line, message };
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header".into()))?;
        let header = header?;
        let mut direction = None;
        let mut floor_prob = None;
        for field in header.trim_start_matches('#').split('\t') {
            match field.split_once('=') {
                Some(("direction", d)) => direction = Some(d.parse()?),
                Some(("floor_prob", p)) => {
                    floor_prob = Some(
                        p.parse::<f64>()
                            .map_err(|e| parse_err(1, format!("bad floor_prob: {e}")))?,
                    )
                }
                _ => return Err(parse_err(1, format!("unexpected header field {field:?}"))),
            }
        }
        let mut probs: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(parse_err(idx + 1, "expected 3 tab-separated fields".into()));
            }
            let p: f64 = f[2]
                .parse()
                .map_err(|e| parse_err(idx + 1, format!("bad probability: {e}")))?;
            probs
                .entry(f[0].to_string())
                .or_default()
                .insert(f[1].to_string(), p);
        }
        Ok(Self {
            direction: direction.ok_or_else(|| parse_err(1, "header lacks direction".into()))?,
            floor_prob: floor_prob.ok_or_else(|| parse_err(1, "header lacks floor_prob".into()))?,
            probs,
        })
    }
}

/// Trains a source-to-target lexicon by EM over word co-occurrence.
pub fn train_lexicon(
    pairs: &[(Vec<String>, Vec<String>)],
    iterations: usize,
) -> Result<Lexicon, MetricsError> {
    train_lexicon_with(pairs, iterations, Direction::SourceToTarget, |_, _| {})
}

/// Trains `p(target | source)` with Model-1 style EM.
///
/// Each row starts uniform over the words it co-occurs with. Every iteration
/// collects expected alignment counts and renormalizes each row. `observe`
/// is called with the 1-based iteration number and the table after it.
pub fn train_lexicon_with<F>(
    pairs: &[(Vec<String>, Vec<String>)],
    iterations: usize,
    direction: Direction,
    mut observe: F,
) -> Result<Lexicon, MetricsError>
where
    F: FnMut(usize, &Lexicon),
{
    if pairs.is_empty() {
        return Err(MetricsError::Argument("lexicon training needs at least one pair".into()));
    }
    if iterations == 0 {
        return Err(MetricsError::Argument("iterations must be positive".into()));
    }
    fn intern<'a>(w: &'a str, ids: &mut HashMap<&'a str, usize>, words: &mut Vec<String>) -> usize {
        *ids.entry(w).or_insert_with(|| {
            words.push(w.to_string());
            words.len() - 1
        })
    }
    // intern words so the inner loops index vectors; ordered rows keep
    // floating-point sums reproducible
    let mut src_ids: HashMap<&str, usize> = HashMap::new();
    let mut tgt_ids: HashMap<&str, usize> = HashMap::new();
    let mut src_words = Vec::new();
    let mut tgt_words = Vec::new();
    let mut sentences = Vec::with_capacity(pairs.len());
    for (s, t) in pairs {
        if s.is_empty() || t.is_empty() {
            continue;
        }
        let s_idx: Vec<usize> = s
            .iter()
            .map(|w| intern(w, &mut src_ids, &mut src_words))
            .collect();
        let t_idx: Vec<usize> = t
            .iter()
            .map(|w| intern(w, &mut tgt_ids, &mut tgt_words))
            .collect();
        sentences.push((s_idx, t_idx));
    }
    let mut table: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); src_words.len()];
    for (s, t) in &sentences {
        for &si in s {
            for &ti in t {
                table[si].insert(ti, 0.0);
            }
        }
    }
    for row in table.iter_mut() {
        let uniform = 1.0 / row.len() as f64;
        row.values_mut().for_each(|p| *p = uniform);
    }

    let to_lexicon = |table: &[BTreeMap<usize, f64>]| Lexicon {
        direction,
        floor_prob: DEFAULT_FLOOR_PROB,
        probs: table
            .iter()
            .enumerate()
            .map(|(si, row)| {
                let row = row
                    .iter()
                    .map(|(&ti, &p)| (tgt_words[ti].clone(), p))
                    .collect();
                (src_words[si].clone(), row)
            })
            .collect(),
    };

    for iter in 1..=iterations {
        let mut counts: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); src_words.len()];
        for (s, t) in &sentences {
            for &ti in t {
                let z: f64 = s.iter().map(|&si| table[si][&ti]).sum();
                for &si in s {
                    *counts[si].entry(ti).or_insert(0.0) += table[si][&ti] / z;
                }
            }
        }
        for (row, count) in table.iter_mut().zip(counts) {
            let total: f64 = count.values().sum();
            for (ti, p) in row.iter_mut() {
                *p = count.get(ti).copied().unwrap_or(0.0) / total;
            }
        }
        observe(iter, &to_lexicon(&table));
    }
    Ok(to_lexicon(&table))
}

/// Trains both directions from `(transcript, translation)` pairs.
pub fn train_lexicon_pair(
    pairs: &[(Vec<String>, Vec<String>)],
    iterations: usize,
) -> Result<(Lexicon, Lexicon), MetricsError> {
    let forward = train_lexicon(pairs, iterations)?;
    let reversed: Vec<_> = pairs.iter().map(|(s, t)| (t.clone(), s.clone())).collect();
    let backward = train_lexicon_with(&reversed, iterations, Direction::TargetToSource, |_, _| {})?;
    Ok((forward, backward))
}
