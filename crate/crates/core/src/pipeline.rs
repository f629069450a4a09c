//! Iterative retrieve-and-rerank over multiple hops.

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::corpus::{Corpus, SentenceAddress};
use crate::dense::DenseIndex;
use crate::error::{Error, Result};
use crate::hybrid::{hybrid_rank, sequence_score, EvidenceSequence, HybridParams, ScoreMap};
use crate::learning::encoder::{LinearDualEncoder, Side};
use crate::rerank::{rerank, PairQuery, PairScorer};
use crate::sparse::Bm25Index;

/// First-stage candidate generator.
pub trait Retriever: Sync {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<(SentenceAddress, f64)>>;
}

pub struct SparseRetriever<'a>(pub &'a Bm25Index);

impl Retriever for SparseRetriever<'_> {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<(SentenceAddress, f64)>> {
        Ok(self.0.search(query, k))
    }
}

/// Encodes the query with the dual encoder's query side and searches an
/// index whose ids are sentence addresses.
pub struct DenseRetriever<'a> {
    pub encoder: &'a LinearDualEncoder,
    pub index: &'a DenseIndex,
}

impl Retriever for DenseRetriever<'_> {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<(SentenceAddress, f64)>> {
        let q = self.encoder.encode_f32(Side::Query, query);
        self.index
            .search(&q, k)?
            .into_iter()
            .map(|(id, s)| {
                id.parse::<SentenceAddress>().map(|a| (a, s)).map_err(|_| {
                    Error::Format(format!("index id {id:?} is not a sentence address"))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieverKind {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HopConfig {
    /// Retriever per hop; the last entry covers deeper hops.
    pub retrievers: Vec<RetrieverKind>,
    /// Retrieval depth per hop; the last entry covers deeper hops.
    pub depths: Vec<usize>,
    pub rerank_depth: usize,
    pub beam: usize,
    pub fanout: usize,
    pub max_hops: usize,
    pub stop_k: usize,
}

impl Default for HopConfig {
    fn default() -> Self {
        Self {
            retrievers: vec![RetrieverKind::Dense],
            depths: vec![200],
            rerank_depth: 200,
            beam: 10,
            fanout: 10,
            max_hops: 2,
            stop_k: 5,
        }
    }
}

fn per_hop<T: Copy>(values: &[T], hop: usize) -> T {
    values[(hop - 1).min(values.len() - 1)]
}

impl HopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.retrievers.is_empty() || self.depths.is_empty() {
            return Err(Error::Config(
                "hop config needs at least one retriever and depth".into(),
            ));
        }
        let counts = [
            ("depth", self.depths.iter().copied().min().unwrap_or(0)),
            ("rerank depth", self.rerank_depth),
            ("beam", self.beam),
            ("fanout", self.fanout),
            ("max hops", self.max_hops),
            ("stop k", self.stop_k),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        Ok(())
    }

    pub fn retriever(&self, hop: usize) -> RetrieverKind {
        per_hop(&self.retrievers, hop)
    }

    pub fn depth(&self, hop: usize) -> usize {
        per_hop(&self.depths, hop)
    }
}

/// Everything a run needs. Either retriever may be absent if the config
/// never asks for it.
pub struct Components<'a> {
    pub corpus: &'a Corpus,
    pub sparse: Option<SparseRetriever<'a>>,
    pub dense: Option<DenseRetriever<'a>>,
    pub scorer: &'a dyn PairScorer,
}

impl Components<'_> {
    fn retriever(&self, kind: RetrieverKind) -> Result<&dyn Retriever> {
        match kind {
            RetrieverKind::Sparse => self.sparse.as_ref().map(|r| r as &dyn Retriever),
            RetrieverKind::Dense => self.dense.as_ref().map(|r| r as &dyn Retriever),
        }
        .ok_or_else(|| Error::Config(format!("{kind:?} retriever requested but not loaded")))
    }
}

pub fn compose_query(claim: &str, sentences: &[&str]) -> String {
    let mut q = claim.to_owned();
    for s in sentences {
        q.push(' ');
        q.push_str(s);
    }
    q
}

pub fn run_hop(
    query: &PairQuery<'_>,
    retriever: &dyn Retriever,
    corpus: &Corpus,
    scorer: &dyn PairScorer,
    depth: usize,
    rerank_depth: usize,
) -> Result<Vec<(SentenceAddress, f64)>> {
    let candidates = retriever.retrieve(query.text, depth)?;
    rerank(query, &candidates, corpus, scorer, rerank_depth)
}

/// Output of one claim's multi-hop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimRun {
    pub claim_id: u64,
    /// Hop-1 rerank output, ranked.
    pub single: Vec<(SentenceAddress, f64)>,
    pub sequences: Vec<EvidenceSequence>,
    pub hops: usize,
}

impl ClaimRun {
    pub fn single_map(&self) -> ScoreMap {
        self.single.iter().cloned().collect()
    }
}

fn top_addresses(ranked: &[(SentenceAddress, f64)], k: usize) -> Vec<SentenceAddress> {
    ranked.iter().take(k).map(|(a, _)| a.clone()).collect()
}

fn by_sequence_score(a: &EvidenceSequence, b: &EvidenceSequence) -> std::cmp::Ordering {
    sequence_score(b)
        .total_cmp(&sequence_score(a))
        .then_with(|| a.addresses().cmp(b.addresses()))
}

pub fn run_multihop(
    claim_id: u64,
    claim: &str,
    cfg: &HopConfig,
    params: &HybridParams,
    components: &Components<'_>,
) -> Result<ClaimRun> {
    cfg.validate()?;
    params.validate()?;
    let corpus = components.corpus;
    let scorer = components.scorer;
    let hop1_query = PairQuery {
        claim_id: Some(claim_id),
        text: claim,
    };
    let single = run_hop(
        &hop1_query,
        components.retriever(cfg.retriever(1))?,
        corpus,
        scorer,
        cfg.depth(1),
        cfg.rerank_depth,
    )?;
    let mut run = ClaimRun {
        claim_id,
        single,
        sequences: Vec::new(),
        hops: 1,
    };
    if cfg.max_hops == 1 {
        return Ok(run);
    }
    let single_map = run.single_map();
    let mut previous = top_addresses(&hybrid_rank(&single_map, &[], params), cfg.stop_k);
    let mut frontier: Vec<EvidenceSequence> = run
        .single
        .iter()
        .take(cfg.beam)
        .map(|p| EvidenceSequence(vec![p.clone()]))
        .collect();

    for hop in 2..=cfg.max_hops {
        if frontier.is_empty() {
            break;
        }
        let retriever = components.retriever(cfg.retriever(hop))?;
        let expanded: Vec<Vec<EvidenceSequence>> = frontier
            .par_iter()
            .map(|prefix| {
                let texts = prefix
                    .addresses()
                    .map(|a| corpus.get_sentence(a))
                    .collect::<Result<Vec<_>>>()?;
                let text = compose_query(claim, &texts);
                let query = PairQuery {
                    claim_id: Some(claim_id),
                    text: &text,
                };
                let ranked = run_hop(
                    &query,
                    retriever,
                    corpus,
                    scorer,
                    cfg.depth(hop),
                    cfg.rerank_depth,
                )?;
                Ok(ranked
                    .into_iter()
                    .filter(|(a, _)| !prefix.contains(a))
                    .take(cfg.fanout)
                    .map(|step| {
                        let mut seq = prefix.clone();
                        seq.0.push(step);
                        seq
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        let new: Vec<EvidenceSequence> = expanded.into_iter().flatten().collect();
        run.sequences.extend(new.iter().cloned());
        run.hops = hop;

        let top = top_addresses(
            &hybrid_rank(&single_map, &run.sequences, params),
            cfg.stop_k,
        );
        if top == previous {
            break;
        }
        previous = top;
        frontier = new;
        frontier.sort_by(by_sequence_score);
        frontier.truncate(cfg.beam);
    }
    Ok(run)
}
