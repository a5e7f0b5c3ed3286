//! Measuring multilingual alignment of word representations, relating it to
//! cross-lingual transfer, and realigning embeddings with a contrastive loss.
//!
//! The pipeline: [`corpus_io`] loads corpora, lexicons and alignments;
//! [`pair_extraction`] turns them into word pairs; [`embedding_store`] holds
//! per-layer vectors of those pairs; [`alignment_eval`] scores weak and strong
//! nearest-neighbor alignment; [`transfer_metrics`] and [`stats`] correlate
//! alignment with transfer; [`realignment`] trains a desk-scale realigner.

pub mod alignment_eval;
pub mod cli;
pub mod corpus_io;
pub mod embedding_store;
pub mod pair_extraction;
pub mod realignment;
pub mod stats;
pub mod transfer_metrics;
