use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use super::{DecodeError, DecodeRequest, DecodeResult, Decoder};

/// Word-for-word dictionary of a toy language pair.
///
/// Some source words are marked as reordering: when one is followed by an
/// ordinary word, the two translations swap places (think adjective after
/// noun). Unknown words translate to themselves.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToyDictionary {
    entries: BTreeMap<String, String>,
    reorder: BTreeSet<String>,
}

impl ToyDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, source: impl Into<String>, target: impl Into<String>) {
        self.entries.insert(source.into(), target.into());
    }

    pub fn mark_reordering(&mut self, source: impl Into<String>) {
        self.reorder.insert(source.into());
    }

    pub fn translate(&self, word: &str) -> String {
        self.entries
            .get(word)
            .cloned()
            .unwrap_or_else(|| word.to_string())
    }

    pub fn is_reordering(&self, word: &str) -> bool {
        self.reorder.contains(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in source-word order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(s, t)| (s.as_str(), t.as_str()))
    }

    /// Reads `source \t target [\t reorder]` lines; `#` starts a comment.
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, std::io::Error> {
        let mut dict = Self::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 || fields[0].is_empty() || fields[1].is_empty() {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("line {}: expected `source<TAB>target`", idx + 1),
                ));
            }
            dict.insert(fields[0], fields[1]);
            if fields.get(2).is_some_and(|f| f.trim() == "reorder") {
                dict.mark_reordering(fields[0]);
            }
        }
        Ok(dict)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (s, t) in &self.entries {
            out.push_str(s);
            out.push('\t');
            out.push_str(t);
            if self.reorder.contains(s) {
                out.push_str("\treorder");
            }
            out.push('\n');
        }
        out
    }

    /// Translates `source`, swapping a reordering word with its right
    /// neighbour only when at least `window` tokens follow it. `window == 0`
    /// disables reordering.
    pub fn translate_with_window(&self, source: &[String], window: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(source.len());
        let mut i = 0;
        while i < source.len() {
            let right_context = source.len() - i - 1;
            let swap = window > 0
                && right_context >= window
                && self.is_reordering(&source[i])
                && !self.is_reordering(&source[i + 1]);
            if swap {
                out.push(self.translate(&source[i + 1]));
                out.push(self.translate(&source[i]));
                i += 2;
            } else {
                out.push(self.translate(&source[i]));
                i += 1;
            }
        }
        out
    }

    /// The correct translation of a complete sentence.
    pub fn reference_translation(&self, source: &[String]) -> Vec<String> {
        self.translate_with_window(source, 1)
    }
}

/// Toy decoder that "recognizes" the revealed gold source tokens and
/// translates them word by word with a [`ToyDictionary`].
///
/// A reordering word is translated in place until `reorder_window` tokens of
/// right context have arrived, after which it swaps with its neighbour. This
/// is what produces flicker in re-translation.
#[derive(Debug, Clone)]
pub struct EchoLexiconDecoder {
    dictionary: ToyDictionary,
    reorder_window: usize,
}

impl EchoLexiconDecoder {
    pub fn new(dictionary: ToyDictionary, reorder_window: usize) -> Self {
        Self {
            dictionary,
            reorder_window,
        }
    }

    /// A decoder whose output only ever grows as input arrives.
    pub fn monotone(dictionary: ToyDictionary) -> Self {
        Self::new(dictionary, 0)
    }

    pub fn dictionary(&self) -> &ToyDictionary {
        &self.dictionary
    }

    /// The unconstrained hypothesis for the given revealed source.
    pub fn natural_output(&self, revealed: &[String]) -> (Vec<String>, Vec<String>) {
        (
            revealed.to_vec(),
            self.dictionary
                .translate_with_window(revealed, self.reorder_window),
        )
    }
}

/// Forced tokens followed by whatever the free hypothesis has past them.
pub(crate) fn continue_from(forced: &[String], natural: Vec<String>) -> Vec<String> {
    let mut out = forced.to_vec();
    out.extend(natural.into_iter().skip(forced.len()));
    out
}

impl Decoder for EchoLexiconDecoder {
    fn identity(&self) -> String {
        format!("echo(window={})", self.reorder_window)
    }

    fn decode(&mut self, request: &DecodeRequest) -> Result<DecodeResult, DecodeError> {
        let (st, tt) = self.natural_output(&request.revealed_tokens());
        Ok(DecodeResult::from_streams_capped(
            continue_from(&request.forced_transcript, st),
            continue_from(&request.forced_translation, tt),
            &request.policy,
            &request.langs,
            0.0,
            request.max_tokens,
        ))
    }
}
