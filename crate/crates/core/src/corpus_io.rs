//! Loaders for pre-tokenized parallel corpora, MUSE-style bilingual lexicons,
//! Pharaoh alignment files, and the word-pair TSV format.
//!
//! All inputs are UTF-8 with LF line endings. Line numbers in errors are 1-based.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Header row of a pair TSV file.
pub const PAIR_TSV_HEADER: &str = "pair_id\tsent\tsrc_idx\ttgt_idx\tsrc_word\ttgt_word";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line count mismatch: {0} vs {1}")]
    LineCountMismatch(usize, usize),
    #[error("line {0}: empty sentence")]
    EmptySentence(usize),
    #[error("line {0}: invalid UTF-8")]
    InvalidUtf8(usize),
    #[error("line {0}: expected exactly 2 fields")]
    MalformedLine(usize),
    #[error("line {0}: malformed link {1:?}")]
    MalformedLink(usize, String),
    #[error("line {0}: link {1}-{2} out of range")]
    IndexOutOfRange(usize, usize, usize),
    #[error("row {0}: duplicate pair_id {1}")]
    DuplicatePairId(usize, u32),
    #[error("row {row}: {reason}")]
    InvariantViolation { row: usize, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Splits a byte buffer into LF-terminated lines, decoding each as UTF-8.
/// A final newline does not produce a trailing empty line.
pub(crate) fn utf8_lines(bytes: &[u8]) -> Result<Vec<&str>, CorpusError> {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, line)| std::str::from_utf8(line).map_err(|_| CorpusError::InvalidUtf8(i + 1)))
        .collect()
}

fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(utf8_lines(&bytes)?.into_iter().map(str::to_owned).collect())
}

fn tokenize(line: &str, lowercase: bool) -> Vec<String> {
    line.split_ascii_whitespace()
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_owned() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub src_lang: String,
    pub tgt_lang: String,
    pub sentences: Vec<SentencePair>,
}

impl ParallelCorpus {
    /// Builds a corpus from already-split sentences, enforcing the same rules as the loader.
    pub fn new(
        src_lang: impl Into<String>,
        tgt_lang: impl Into<String>,
        sentences: Vec<SentencePair>,
    ) -> Result<Self, CorpusError> {
        for (i, s) in sentences.iter().enumerate() {
            if s.src.is_empty() || s.tgt.is_empty() {
                return Err(CorpusError::EmptySentence(i + 1));
            }
            let bad = s
                .src
                .iter()
                .chain(&s.tgt)
                .any(|t| t.is_empty() || t.chars().any(char::is_whitespace));
            if bad {
                return Err(CorpusError::InvariantViolation {
                    row: i + 1,
                    reason: "token is empty or contains whitespace".into(),
                });
            }
        }
        Ok(Self {
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            sentences,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Loads a sentence-aligned corpus from two tokenized files.
pub fn load_parallel_corpus(
    src_path: &Path,
    tgt_path: &Path,
    src_lang: &str,
    tgt_lang: &str,
    lowercase: bool,
) -> Result<ParallelCorpus, CorpusError> {
    let src = read_lines(src_path)?;
    let tgt = read_lines(tgt_path)?;
    if src.len() != tgt.len() {
        return Err(CorpusError::LineCountMismatch(src.len(), tgt.len()));
    }
    let mut sentences = Vec::with_capacity(src.len());
    for (i, (s, t)) in src.iter().zip(&tgt).enumerate() {
        let (s, t) = (tokenize(s, lowercase), tokenize(t, lowercase));
        if s.is_empty() || t.is_empty() {
            return Err(CorpusError::EmptySentence(i + 1));
        }
        sentences.push(SentencePair { src: s, tgt: t });
    }
    Ok(ParallelCorpus {
        src_lang: src_lang.to_owned(),
        tgt_lang: tgt_lang.to_owned(),
        sentences,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BilingualLexicon {
    pub src_lang: String,
    pub tgt_lang: String,
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl BilingualLexicon {
    pub fn new(src_lang: impl Into<String>, tgt_lang: impl Into<String>) -> Self {
        Self {
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, src: impl Into<String>, tgt: impl Into<String>) {
        self.entries.entry(src.into()).or_default().insert(tgt.into());
    }

    pub fn translations(&self, src: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(src)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.entries.iter()
    }
}

pub fn parse_lexicon(
    text: &str,
    src_lang: &str,
    tgt_lang: &str,
    lowercase: bool,
) -> Result<BilingualLexicon, CorpusError> {
    let mut lex = BilingualLexicon::new(src_lang, tgt_lang);
    for (i, line) in text.lines().enumerate() {
        let fields = tokenize(line, lowercase);
        let [src, tgt]: [String; 2] = fields.try_into().map_err(|_| CorpusError::MalformedLine(i + 1))?;
        lex.insert(src, tgt);
    }
    Ok(lex)
}

/// Loads a MUSE-layout dictionary (`src tgt` per line).
pub fn load_lexicon(
    path: &Path,
    src_lang: &str,
    tgt_lang: &str,
    lowercase: bool,
) -> Result<BilingualLexicon, CorpusError> {
    let lines = read_lines(path)?;
    parse_lexicon(&lines.join("\n"), src_lang, tgt_lang, lowercase)
}

/// Links of one sentence pair, as (source word index, target word index).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct AlignmentLinkSet(BTreeSet<(usize, usize)>);

impl AlignmentLinkSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, i: usize, j: usize) -> bool {
        self.0.insert((i, j))
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.0.contains(&(i, j))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Links in (i, j) lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().copied()
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self(self.0.intersection(&other.0).copied().collect())
    }

    pub fn union(&self, other: &Self) -> Self {
        Self(self.0.union(&other.0).copied().collect())
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl FromIterator<(usize, usize)> for AlignmentLinkSet {
    fn from_iter<T: IntoIterator<Item = (usize, usize)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl fmt::Display for AlignmentLinkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, j) in self.iter() {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{i}-{j}")?;
            first = false;
        }
        Ok(())
    }
}

fn parse_link(token: &str, line_no: usize) -> Result<(usize, usize), CorpusError> {
    let malformed = || CorpusError::MalformedLink(line_no, token.to_owned());
    let (i, j) = token.split_once('-').ok_or_else(malformed)?;
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(i) || !digits(j) {
        return Err(malformed());
    }
    Ok((i.parse().map_err(|_| malformed())?, j.parse().map_err(|_| malformed())?))
}

/// Parses Pharaoh text and validates every link against the corpus.
pub fn parse_pharaoh(text: &str, corpus: &ParallelCorpus) -> Result<Vec<AlignmentLinkSet>, CorpusError> {
    let lines: Vec<&str> = if text.is_empty() {
        Vec::new()
    } else {
        text.strip_suffix('\n').unwrap_or(text).split('\n').collect()
    };
    if lines.len() != corpus.len() {
        return Err(CorpusError::LineCountMismatch(lines.len(), corpus.len()));
    }
    lines
        .iter()
        .zip(&corpus.sentences)
        .enumerate()
        .map(|(n, (line, sent))| {
            let line_no = n + 1;
            let mut links = AlignmentLinkSet::new();
            for token in line.split_ascii_whitespace() {
                let (i, j) = parse_link(token, line_no)?;
                if i >= sent.src.len() || j >= sent.tgt.len() {
                    return Err(CorpusError::IndexOutOfRange(line_no, i, j));
                }
                links.insert(i, j);
            }
            Ok(links)
        })
        .collect()
}

pub fn load_pharaoh(path: &Path, corpus: &ParallelCorpus) -> Result<Vec<AlignmentLinkSet>, CorpusError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let lines = utf8_lines(&bytes)?;
    let mut text = lines.join("\n");
    if !lines.is_empty() {
        text.push('\n');
    }
    parse_pharaoh(&text, corpus)
}

/// Where a pair set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Lexicon,
    Aligner,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPair {
    pub pair_id: u32,
    pub sentence: usize,
    pub src_idx: usize,
    pub tgt_idx: usize,
    pub src_word: String,
    pub tgt_word: String,
}

/// Extracted contextualized word pairs.
///
/// Ids are dense from 0, the surface forms of each pair differ, and within a
/// sentence every source and every target position is used at most once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPairSet {
    pub provenance: Provenance,
    pairs: Vec<WordPair>,
}

impl WordPairSet {
    pub fn new(provenance: Provenance, pairs: Vec<WordPair>) -> Result<Self, CorpusError> {
        check_pairs(&pairs)?;
        Ok(Self { provenance, pairs })
    }

    pub fn empty(provenance: Provenance) -> Self {
        Self {
            provenance,
            pairs: Vec::new(),
        }
    }

    pub fn pairs(&self) -> &[WordPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.pairs.iter().map(|p| p.pair_id)
    }

    /// Checks that every pair's indices and words agree with `corpus`.
    pub fn check_against(&self, corpus: &ParallelCorpus) -> Result<(), CorpusError> {
        for (row, p) in self.pairs.iter().enumerate() {
            let bad = |reason: &str| CorpusError::InvariantViolation {
                row: row + 1,
                reason: reason.to_owned(),
            };
            let sent = corpus
                .sentences
                .get(p.sentence)
                .ok_or_else(|| bad("sentence index out of range"))?;
            match (sent.src.get(p.src_idx), sent.tgt.get(p.tgt_idx)) {
                (Some(s), Some(t)) if *s == p.src_word && *t == p.tgt_word => {}
                (Some(_), Some(_)) => return Err(bad("words differ from corpus")),
                _ => return Err(bad("word index out of range")),
            }
        }
        Ok(())
    }
}

fn check_pairs(pairs: &[WordPair]) -> Result<(), CorpusError> {
    let mut used_src = BTreeSet::new();
    let mut used_tgt = BTreeSet::new();
    for (n, p) in pairs.iter().enumerate() {
        let row = n + 1;
        let bad = |reason: String| CorpusError::InvariantViolation { row, reason };
        if p.pair_id as usize != n {
            if n > 0 && p.pair_id == pairs[n - 1].pair_id {
                return Err(CorpusError::DuplicatePairId(row, p.pair_id));
            }
            return Err(bad(format!(
                "pair_id {} breaks the dense sequence (expected {n})",
                p.pair_id
            )));
        }
        if p.src_word == p.tgt_word {
            return Err(bad("identical source and target words".into()));
        }
        for w in [&p.src_word, &p.tgt_word] {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(bad("word is empty or contains whitespace".into()));
            }
        }
        if !used_src.insert((p.sentence, p.src_idx)) {
            return Err(bad(format!(
                "source word {} of sentence {} paired twice",
                p.src_idx, p.sentence
            )));
        }
        if !used_tgt.insert((p.sentence, p.tgt_idx)) {
            return Err(bad(format!(
                "target word {} of sentence {} paired twice",
                p.tgt_idx, p.sentence
            )));
        }
    }
    Ok(())
}

pub fn format_pairs(pairs: &WordPairSet) -> String {
    let mut out = String::with_capacity(64 * (pairs.len() + 1));
    out.push_str(PAIR_TSV_HEADER);
    out.push('\n');
    for p in pairs.pairs() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            p.pair_id, p.sentence, p.src_idx, p.tgt_idx, p.src_word, p.tgt_word
        ));
    }
    out
}

pub fn parse_pairs(text: &str, provenance: Provenance) -> Result<WordPairSet, CorpusError> {
    let mut lines = text.lines();
    if lines.next() != Some(PAIR_TSV_HEADER) {
        return Err(CorpusError::InvariantViolation {
            row: 0,
            reason: "missing or unexpected header".into(),
        });
    }
    let mut pairs = Vec::new();
    for (n, line) in lines.enumerate() {
        let row = n + 1;
        let bad = |reason: &str| CorpusError::InvariantViolation {
            row,
            reason: reason.to_owned(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad("expected 6 tab-separated fields"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric index field"));
        pairs.push(WordPair {
            pair_id: f[0].parse().map_err(|_| bad("non-numeric pair_id"))?,
            sentence: num(f[1])?,
            src_idx: num(f[2])?,
            tgt_idx: num(f[3])?,
            src_word: f[4].to_owned(),
            tgt_word: f[5].to_owned(),
        });
    }
    WordPairSet::new(provenance, pairs)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_pairs(pairs: &WordPairSet, path: &Path) -> Result<(), CorpusError> {
    write_atomic(path, format_pairs(pairs).as_bytes()).map_err(io_err(path))
}

pub fn read_pairs(path: &Path, provenance: Provenance) -> Result<WordPairSet, CorpusError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let lines = utf8_lines(&bytes)?;
    parse_pairs(&lines.join("\n"), provenance)
}
