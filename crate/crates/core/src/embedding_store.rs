//! EMBX: binary container for per-layer contextualized vectors of word pairs.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    b"EMBX"
//! version  u32 = 1
//! L        u32   layer count, layer 0 is the embedding layer
//! D        u32   vector dimension
//! N        u32   record count
//! src_lang, tgt_lang, model_name   u16 byte length + UTF-8 bytes each
//! N records sorted by (pair_id, side):
//!   pair_id u32, side u8 (0 = src, 1 = tgt), 3 zero bytes, L*D f32
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus_io::{write_atomic, WordPairSet};

pub const MAGIC: &[u8; 4] = b"EMBX";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EmbxError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated at byte offset {0}")]
    Truncated(usize),
    #[error("non-finite value in pair {pair_id}, layer {layer}, component {index}")]
    NonFiniteValue { pair_id: u32, layer: usize, index: usize },
    #[error("pair {0} lacks one of its sides")]
    IncompleteRecord(u32),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("malformed record at byte offset {offset}: {reason}")]
    MalformedRecord { offset: usize, reason: String },
    #[error("{0} trailing bytes after last record")]
    TrailingBytes(usize),
    #[error("payload for pair {pair_id} has {got} values, expected {expected}")]
    PayloadLength { pair_id: u32, got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Src = 0,
    Tgt = 1,
}

impl Side {
    pub fn other(self) -> Self {
        match self {
            Side::Src => Side::Tgt,
            Side::Tgt => Side::Src,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbxHeader {
    pub layers: usize,
    pub dim: usize,
    pub src_lang: String,
    pub tgt_lang: String,
    pub model_name: String,
}

impl EmbxHeader {
    pub fn new(layers: usize, dim: usize, src_lang: &str, tgt_lang: &str, model_name: &str) -> Result<Self, EmbxError> {
        if layers == 0 || dim == 0 {
            return Err(EmbxError::InvalidHeader(format!(
                "L={layers}, D={dim}; both must be >= 1"
            )));
        }
        if layers > u32::MAX as usize || dim > u32::MAX as usize {
            return Err(EmbxError::InvalidHeader("dimension exceeds u32".into()));
        }
        for s in [src_lang, tgt_lang, model_name] {
            if s.len() > u16::MAX as usize {
                return Err(EmbxError::InvalidHeader("string longer than 65535 bytes".into()));
            }
        }
        Ok(Self {
            layers,
            dim,
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            model_name: model_name.into(),
        })
    }

    /// Byte length of the encoded header.
    pub fn encoded_len(&self) -> usize {
        20 + 6 + self.src_lang.len() + self.tgt_lang.len() + self.model_name.len()
    }

    pub fn record_len(&self) -> usize {
        8 + 4 * self.layers * self.dim
    }
}

/// Vectors keyed by (pair_id, side); each payload holds `L * D` values, layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub header: EmbxHeader,
    records: BTreeMap<(u32, Side), Vec<f32>>,
}

impl EmbeddingSet {
    pub fn new(header: EmbxHeader) -> Self {
        Self {
            header,
            records: BTreeMap::new(),
        }
    }

    /// Adds or replaces the vectors of one side of a pair.
    pub fn insert(&mut self, pair_id: u32, side: Side, payload: Vec<f32>) -> Result<(), EmbxError> {
        let expected = self.header.layers * self.header.dim;
        if payload.len() != expected {
            return Err(EmbxError::PayloadLength {
                pair_id,
                got: payload.len(),
                expected,
            });
        }
        if let Some(k) = payload.iter().position(|v| !v.is_finite()) {
            return Err(EmbxError::NonFiniteValue {
                pair_id,
                layer: k / self.header.dim,
                index: k % self.header.dim,
            });
        }
        self.records.insert((pair_id, side), payload);
        Ok(())
    }

    pub fn vector(&self, pair_id: u32, side: Side, layer: usize) -> Option<&[f32]> {
        if layer >= self.header.layers {
            return None;
        }
        let d = self.header.dim;
        self.records
            .get(&(pair_id, side))
            .map(|p| &p[layer * d..(layer + 1) * d])
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    /// Pair ids with at least one side present.
    pub fn pair_ids(&self) -> BTreeSet<u32> {
        self.records.keys().map(|&(id, _)| id).collect()
    }

    fn check_complete(&self) -> Result<(), EmbxError> {
        for &(id, side) in self.records.keys() {
            if !self.records.contains_key(&(id, side.other())) {
                return Err(EmbxError::IncompleteRecord(id));
            }
        }
        Ok(())
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u16).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

pub fn encode_embx(set: &EmbeddingSet) -> Result<Vec<u8>, EmbxError> {
    set.check_complete()?;
    let h = &set.header;
    let n = set.record_count();
    if n > u32::MAX as usize {
        return Err(EmbxError::InvalidHeader("too many records".into()));
    }
    let mut buf = Vec::with_capacity(h.encoded_len() + n * h.record_len());
    buf.extend_from_slice(MAGIC);
    for v in [VERSION, h.layers as u32, h.dim as u32, n as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    put_str(&mut buf, &h.src_lang);
    put_str(&mut buf, &h.tgt_lang);
    put_str(&mut buf, &h.model_name);
    for (&(id, side), payload) in &set.records {
        buf.extend_from_slice(&id.to_le_bytes());
        buf.extend_from_slice(&[side as u8, 0, 0, 0]);
        for v in payload {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbxError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(EmbxError::Truncated(self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, EmbxError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, EmbxError> {
        let start = self.pos;
        let len = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| EmbxError::MalformedRecord {
            offset: start,
            reason: "header string is not UTF-8".into(),
        })
    }
}

pub fn decode_embx(bytes: &[u8]) -> Result<EmbeddingSet, EmbxError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4).map_err(|_| EmbxError::BadMagic)? != MAGIC {
        return Err(EmbxError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(EmbxError::UnsupportedVersion(version));
    }
    let layers = cur.u32()? as usize;
    let dim = cur.u32()? as usize;
    let n = cur.u32()? as usize;
    let src_lang = cur.string()?;
    let tgt_lang = cur.string()?;
    let model_name = cur.string()?;
    let header = EmbxHeader::new(layers, dim, &src_lang, &tgt_lang, &model_name)?;
    let values = layers
        .checked_mul(dim)
        .ok_or_else(|| EmbxError::InvalidHeader("L*D overflows".into()))?;

    let mut set = EmbeddingSet::new(header);
    let mut prev: Option<(u32, Side)> = None;
    for _ in 0..n {
        let offset = cur.pos;
        let id = cur.u32()?;
        let tag = cur.take(4)?;
        let side = match tag[0] {
            0 => Side::Src,
            1 => Side::Tgt,
            v => {
                return Err(EmbxError::MalformedRecord {
                    offset,
                    reason: format!("side byte {v}"),
                })
            }
        };
        if tag[1..] != [0, 0, 0] {
            return Err(EmbxError::MalformedRecord {
                offset,
                reason: "non-zero padding".into(),
            });
        }
        if prev.is_some_and(|p| p >= (id, side)) {
            return Err(EmbxError::MalformedRecord {
                offset,
                reason: "records not strictly sorted by (pair_id, side)".into(),
            });
        }
        prev = Some((id, side));
        let raw = cur.take(values.checked_mul(4).ok_or(EmbxError::Truncated(cur.pos))?)?;
        let payload: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        set.insert(id, side, payload)?;
    }
    if cur.pos != bytes.len() {
        return Err(EmbxError::TrailingBytes(bytes.len() - cur.pos));
    }
    set.check_complete()?;
    Ok(set)
}

pub fn write_embx(set: &EmbeddingSet, path: &Path) -> Result<(), EmbxError> {
    let bytes = encode_embx(set)?;
    write_atomic(path, &bytes).map_err(|source| EmbxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_embx(path: &Path) -> Result<EmbeddingSet, EmbxError> {
    let bytes = fs::read(path).map_err(|source| EmbxError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_embx(&bytes)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Ids in the pair set without vectors.
    pub missing: BTreeSet<u32>,
    /// Ids with vectors but absent from the pair set.
    pub extra: BTreeSet<u32>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty()
    }
}

pub fn validate_against(set: &EmbeddingSet, pairs: &WordPairSet) -> ValidationReport {
    let have = set.pair_ids();
    let want: BTreeSet<u32> = pairs.ids().collect();
    ValidationReport {
        missing: want.difference(&have).copied().collect(),
        extra: have.difference(&want).copied().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{Provenance, WordPair};
    use proptest::prelude::*;

    fn header(l: usize, d: usize) -> EmbxHeader {
        EmbxHeader::new(l, d, "en", "ar", "toy").unwrap()
    }

    fn pairs(ids: &[u32]) -> WordPairSet {
        let v = ids
            .iter()
            .map(|&id| WordPair {
                pair_id: id,
                sentence: id as usize,
                src_idx: 0,
                tgt_idx: 0,
                src_word: "a".into(),
                tgt_word: "b".into(),
            })
            .collect();
        WordPairSet::new(Provenance::Lexicon, v).unwrap()
    }

    #[test]
    fn empty_set_is_header_only() {
        let set = EmbeddingSet::new(header(3, 4));
        let bytes = encode_embx(&set).unwrap();
        assert_eq!(bytes.len(), 20 + 2 + 2 + 2 + 2 + 2 + 3);
        assert_eq!(bytes.len(), set.header.encoded_len());
        assert_eq!(decode_embx(&bytes).unwrap(), set);
    }

    #[test]
    fn record_size_arithmetic() {
        let mut set = EmbeddingSet::new(header(2, 3));
        set.insert(0, Side::Src, vec![1.0; 6]).unwrap();
        set.insert(0, Side::Tgt, vec![2.0; 6]).unwrap();
        let bytes = encode_embx(&set).unwrap();
        // 2 records, each 8 bytes of id/side/padding plus 2 layers x 3 f32
        assert_eq!(bytes.len(), set.header.encoded_len() + 2 * (8 + 2 * 3 * 4));
        assert_eq!(&bytes[16..20], &2u32.to_le_bytes());
        let back = decode_embx(&bytes).unwrap();
        assert_eq!(back.vector(0, Side::Tgt, 1).unwrap(), &[2.0; 3]);
    }

    #[test]
    fn incomplete_record_rejected() {
        let mut set = EmbeddingSet::new(header(1, 2));
        set.insert(0, Side::Src, vec![1.0, 0.0]).unwrap();
        assert!(matches!(encode_embx(&set), Err(EmbxError::IncompleteRecord(0))));
    }

    #[test]
    fn header_guards() {
        assert!(EmbxHeader::new(0, 3, "en", "fr", "m").is_err());
        assert!(EmbxHeader::new(1, 0, "en", "fr", "m").is_err());
        let mut set = EmbeddingSet::new(header(1, 2));
        assert!(matches!(
            set.insert(0, Side::Src, vec![1.0]),
            Err(EmbxError::PayloadLength { .. })
        ));
        assert!(matches!(
            set.insert(4, Side::Src, vec![1.0, f32::NAN]),
            Err(EmbxError::NonFiniteValue {
                pair_id: 4,
                layer: 0,
                index: 1
            })
        ));
    }

    fn sample_bytes() -> Vec<u8> {
        let mut set = EmbeddingSet::new(header(2, 2));
        for id in 0..3 {
            set.insert(id, Side::Src, vec![id as f32, 1.0, 2.0, 3.0]).unwrap();
            set.insert(id, Side::Tgt, vec![-1.0, id as f32, 0.5, 0.25]).unwrap();
        }
        encode_embx(&set).unwrap()
    }

    #[test]
    fn decode_errors() {
        let mut bytes = sample_bytes();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_embx(&bytes), Err(EmbxError::BadMagic)));

        let mut bytes = sample_bytes();
        bytes[4] = 2;
        assert!(matches!(decode_embx(&bytes), Err(EmbxError::UnsupportedVersion(2))));

        let bytes = sample_bytes();
        let h = header(2, 2).encoded_len();
        let cut = h + 24 + 10;
        match decode_embx(&bytes[..cut]) {
            Err(EmbxError::Truncated(off)) => assert_eq!(off, h + 24 + 8),
            other => panic!("{other:?}"),
        }

        let mut bytes = sample_bytes();
        bytes.push(0);
        assert!(matches!(decode_embx(&bytes), Err(EmbxError::TrailingBytes(1))));

        let mut bytes = sample_bytes();
        bytes[h + 5] = 1;
        assert!(matches!(decode_embx(&bytes), Err(EmbxError::MalformedRecord { .. })));

        let mut bytes = sample_bytes();
        bytes[h + 8..h + 12].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            decode_embx(&bytes),
            Err(EmbxError::NonFiniteValue {
                pair_id: 0,
                layer: 0,
                index: 0
            })
        ));
    }

    #[test]
    fn validation_report() {
        let mut set = EmbeddingSet::new(header(1, 1));
        for id in [0, 1, 2, 3] {
            set.insert(id, Side::Src, vec![1.0]).unwrap();
            set.insert(id, Side::Tgt, vec![1.0]).unwrap();
        }
        assert!(validate_against(&set, &pairs(&[0, 1, 2, 3])).is_ok());

        set.insert(5, Side::Src, vec![1.0]).unwrap();
        let r = validate_against(&set, &pairs(&[0, 1, 2, 3]));
        assert_eq!(r.extra, BTreeSet::from([5]));
        assert!(r.missing.is_empty());

        let mut set = EmbeddingSet::new(header(1, 1));
        for id in [0, 1, 3] {
            set.insert(id, Side::Src, vec![1.0]).unwrap();
            set.insert(id, Side::Tgt, vec![1.0]).unwrap();
        }
        let r = validate_against(&set, &pairs(&[0, 1, 2, 3]));
        assert_eq!(r.missing, BTreeSet::from([2]));
        assert!(!r.is_ok());
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            l in 1usize..4, d in 1usize..5,
            ids in prop::collection::btree_set(0u32..1000, 0..8),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut set = EmbeddingSet::new(EmbxHeader::new(l, d, "en", "zh", "model/ü").unwrap());
            for &id in &ids {
                for side in [Side::Src, Side::Tgt] {
                    let v: Vec<f32> = (0..l * d).map(|_| rng.random_range(-1e6f32..1e6)).collect();
                    set.insert(id, side, v).unwrap();
                }
            }
            let bytes = encode_embx(&set).unwrap();
            let back = decode_embx(&bytes).unwrap();
            prop_assert_eq!(encode_embx(&back).unwrap(), bytes);
            prop_assert_eq!(back, set);
        }

        #[test]
        fn bit_flips_never_admit_non_finite(byte in 0usize..1000, bit in 0u8..8) {
            let mut bytes = sample_bytes();
            let h = header(2, 2).encoded_len();
            let payload: Vec<usize> = (0..6).flat_map(|r| (0..16).map(move |k| h + r * 24 + 8 + k)).collect();
            let at = payload[byte % payload.len()];
            bytes[at] ^= 1 << bit;
            if let Ok(set) = decode_embx(&bytes) {
                for id in 0..3 {
                    for side in [Side::Src, Side::Tgt] {
                        for layer in 0..2 {
                            prop_assert!(set.vector(id, side, layer).unwrap().iter().all(|v| v.is_finite()));
                        }
                    }
                }
            }
        }
    }
}
