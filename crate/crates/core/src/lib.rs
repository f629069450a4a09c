//! Multi-hop dense sentence retrieval for claim verification: corpus
//! ingestion, BM25 and exact inner-product retrieval, a trainable dual
//! encoder, pairwise reranking, hybrid fusion of single- and multi-hop
//! evidence, and FEVER-style evaluation.

mod binio;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod eval;
pub mod hybrid;
pub mod learning;
pub mod negatives;
pub mod pipeline;
pub mod rank;
pub mod rerank;
pub mod sparse;
pub mod synthetic;
pub mod tuning;

pub use corpus::{Claim, Corpus, Label, SentenceAddress};
pub use error::{Error, Result};
