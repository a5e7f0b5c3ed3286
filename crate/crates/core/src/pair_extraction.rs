//! Word-pair extraction from a bilingual lexicon or from symmetrized
//! alignment links.

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus_io::{
    AlignmentLinkSet, BilingualLexicon, CorpusError, ParallelCorpus, Provenance, WordPair, WordPairSet,
};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("language mismatch: corpus {corpus:?}, lexicon {lexicon:?}")]
    LanguageMismatch {
        corpus: (String, String),
        lexicon: (String, String),
    },
    #[error("expected {expected} link sets, got {got}")]
    LinkCountMismatch { expected: usize, got: usize },
    #[error("link {0}-{1} out of bounds for a {2}x{3} sentence pair")]
    OutOfBounds(usize, usize, usize, usize),
    #[error("max_pairs_per_sentence must be at least 1")]
    InvalidCap,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractionOptions {
    /// Compare words case-insensitively. Emitted words keep their corpus form.
    pub lowercase: bool,
    pub max_pairs_per_sentence: Option<usize>,
}

fn normalize(word: &str, lowercase: bool) -> String {
    if lowercase {
        word.to_lowercase()
    } else {
        word.to_owned()
    }
}

fn counts<'a>(words: impl Iterator<Item = &'a String>) -> HashMap<&'a str, usize> {
    let mut m = HashMap::new();
    for w in words {
        *m.entry(w.as_str()).or_insert(0) += 1;
    }
    m
}

fn build_set(
    candidates: Vec<Vec<(usize, usize)>>,
    corpus: &ParallelCorpus,
    cap: Option<usize>,
    provenance: Provenance,
) -> Result<WordPairSet, ExtractionError> {
    let mut pairs = Vec::new();
    for (sentence, mut links) in candidates.into_iter().enumerate() {
        links.sort_unstable();
        if let Some(cap) = cap {
            links.truncate(cap);
        }
        let sent = &corpus.sentences[sentence];
        for (i, j) in links {
            pairs.push(WordPair {
                pair_id: pairs.len() as u32,
                sentence,
                src_idx: i,
                tgt_idx: j,
                src_word: sent.src[i].clone(),
                tgt_word: sent.tgt[j].clone(),
            });
        }
    }
    Ok(WordPairSet::new(provenance, pairs)?)
}

/// Extracts pairs whose correspondence is forced by the lexicon.
///
/// Source word `s` at `i` is paired with target word `t` at `j` when `s` is
/// unique in its sentence, `j` is the only target position holding a
/// translation of `s`, no other source word claims `j`, and `s != t`.
pub fn extract_pairs_lexicon(
    corpus: &ParallelCorpus,
    lexicon: &BilingualLexicon,
    opts: ExtractionOptions,
) -> Result<WordPairSet, ExtractionError> {
    if corpus.src_lang != lexicon.src_lang || corpus.tgt_lang != lexicon.tgt_lang {
        return Err(ExtractionError::LanguageMismatch {
            corpus: (corpus.src_lang.clone(), corpus.tgt_lang.clone()),
            lexicon: (lexicon.src_lang.clone(), lexicon.tgt_lang.clone()),
        });
    }
    if opts.max_pairs_per_sentence == Some(0) {
        return Err(ExtractionError::InvalidCap);
    }
    let lc = opts.lowercase;
    let candidates = corpus
        .sentences
        .iter()
        .map(|sent| {
            let src: Vec<String> = sent.src.iter().map(|w| normalize(w, lc)).collect();
            let tgt: Vec<String> = sent.tgt.iter().map(|w| normalize(w, lc)).collect();
            let src_counts = counts(src.iter());
            let mut links: Vec<(usize, usize)> = Vec::new();
            for (i, s) in src.iter().enumerate() {
                if src_counts[s.as_str()] != 1 {
                    continue;
                }
                let Some(translations) = lexicon.translations(s) else {
                    continue;
                };
                let mut hits = tgt.iter().enumerate().filter(|(_, t)| translations.contains(*t));
                if let (Some((j, t)), None) = (hits.next(), hits.next()) {
                    if t != s {
                        links.push((i, j));
                    }
                }
            }
            let mut per_j: HashMap<usize, usize> = HashMap::new();
            for &(_, j) in &links {
                *per_j.entry(j).or_insert(0) += 1;
            }
            links.retain(|(_, j)| per_j[j] == 1);
            links
        })
        .collect();
    build_set(candidates, corpus, opts.max_pairs_per_sentence, Provenance::Lexicon)
}

/// Keeps one-to-one links whose two words differ.
pub fn pairs_from_links(corpus: &ParallelCorpus, links: &[AlignmentLinkSet]) -> Result<WordPairSet, ExtractionError> {
    if links.len() != corpus.len() {
        return Err(ExtractionError::LinkCountMismatch {
            expected: corpus.len(),
            got: links.len(),
        });
    }
    let mut candidates = Vec::with_capacity(links.len());
    for (sent, set) in corpus.sentences.iter().zip(links) {
        let (n, m) = (sent.src.len(), sent.tgt.len());
        let mut src_deg = vec![0usize; n];
        let mut tgt_deg = vec![0usize; m];
        for (i, j) in set.iter() {
            if i >= n || j >= m {
                return Err(ExtractionError::OutOfBounds(i, j, n, m));
            }
            src_deg[i] += 1;
            tgt_deg[j] += 1;
        }
        candidates.push(
            set.iter()
                .filter(|&(i, j)| src_deg[i] == 1 && tgt_deg[j] == 1 && sent.src[i] != sent.tgt[j])
                .collect(),
        );
    }
    build_set(candidates, corpus, None, Provenance::Aligner)
}

const NEIGHBORS: [(isize, isize); 8] = [(-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)];

/// Symmetrizes two directional alignments of one sentence pair.
///
/// Both inputs are in (source, target) orientation.
pub fn grow_diag_final_and(
    forward: &AlignmentLinkSet,
    backward: &AlignmentLinkSet,
    src_len: usize,
    tgt_len: usize,
) -> Result<AlignmentLinkSet, ExtractionError> {
    for (i, j) in forward.iter().chain(backward.iter()) {
        if i >= src_len || j >= tgt_len {
            return Err(ExtractionError::OutOfBounds(i, j, src_len, tgt_len));
        }
    }
    let union = forward.union(backward);
    let mut out = forward.intersection(backward);
    let mut src_aligned = vec![false; src_len];
    let mut tgt_aligned = vec![false; tgt_len];
    for (i, j) in out.iter() {
        src_aligned[i] = true;
        tgt_aligned[j] = true;
    }

    // grow-diag: scan the grid in row-major order, adding as we go, until a pass adds nothing
    loop {
        let mut added = false;
        for i in 0..src_len {
            for j in 0..tgt_len {
                if !out.contains(i, j) {
                    continue;
                }
                for (di, dj) in NEIGHBORS {
                    let (Some(ni), Some(nj)) = (i.checked_add_signed(di), j.checked_add_signed(dj)) else {
                        continue;
                    };
                    if ni >= src_len || nj >= tgt_len || out.contains(ni, nj) || !union.contains(ni, nj) {
                        continue;
                    }
                    if !src_aligned[ni] || !tgt_aligned[nj] {
                        out.insert(ni, nj);
                        src_aligned[ni] = true;
                        tgt_aligned[nj] = true;
                        added = true;
                    }
                }
            }
        }
        if !added {
            break;
        }
    }

    // final-and: forward-only links first, then backward-only
    for direction in [forward, backward] {
        for (i, j) in direction.iter() {
            if !out.contains(i, j) && !src_aligned[i] && !tgt_aligned[j] {
                out.insert(i, j);
                src_aligned[i] = true;
                tgt_aligned[j] = true;
            }
        }
    }
    Ok(out)
}

/// Symmetrizes every sentence of a corpus.
pub fn symmetrize_corpus(
    corpus: &ParallelCorpus,
    forward: &[AlignmentLinkSet],
    backward: &[AlignmentLinkSet],
) -> Result<Vec<AlignmentLinkSet>, ExtractionError> {
    for got in [forward.len(), backward.len()] {
        if got != corpus.len() {
            return Err(ExtractionError::LinkCountMismatch {
                expected: corpus.len(),
                got,
            });
        }
    }
    corpus
        .sentences
        .iter()
        .zip(forward.iter().zip(backward))
        .map(|(s, (f, b))| grow_diag_final_and(f, b, s.src.len(), s.tgt.len()))
        .collect()
}
