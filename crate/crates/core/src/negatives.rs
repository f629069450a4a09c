//! Hard negatives for contrastive training: BM25 candidates minus gold,
//! with likely false negatives filtered by a similarity threshold.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Claim, Corpus, SentenceAddress};
use crate::error::{Error, Result};
use crate::learning::train::{write_training_records, TrainingExample};
use crate::rerank::{relevance_score, Candidate, PairQuery, PairScorer};
use crate::sparse::{tokenize, Bm25Index};

/// Similarity in `[0, 1]` between a claim and a candidate sentence.
pub trait SimilarityScorer: Sync {
    fn similarity(&self, claim: &str, address: &SentenceAddress, sentence: &str) -> f64;
}

impl<F> SimilarityScorer for F
where
    F: Fn(&str, &SentenceAddress, &str) -> f64 + Sync,
{
    fn similarity(&self, claim: &str, address: &SentenceAddress, sentence: &str) -> f64 {
        self(claim, address, sentence)
    }
}

/// Jaccard overlap of the distinct token sets.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenOverlap;

impl SimilarityScorer for TokenOverlap {
    fn similarity(&self, claim: &str, _: &SentenceAddress, sentence: &str) -> f64 {
        let a: BTreeSet<String> = tokenize(claim).into_iter().collect();
        let b: BTreeSet<String> = tokenize(sentence).into_iter().collect();
        let union = a.union(&b).count();
        if union == 0 {
            return 0.0;
        }
        a.intersection(&b).count() as f64 / union as f64
    }
}

/// Uses a pair scorer's relevance as the similarity.
#[derive(Debug, Clone, Copy)]
pub struct RerankerSimilarity<S>(pub S);

impl<S: PairScorer> SimilarityScorer for RerankerSimilarity<S> {
    fn similarity(&self, claim: &str, address: &SentenceAddress, sentence: &str) -> f64 {
        let query = PairQuery {
            claim_id: None,
            text: claim,
        };
        relevance_score(self.0.logits(
            &query,
            &Candidate {
                address,
                text: sentence,
            },
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NegativeSamplingConfig {
    pub pool: usize,
    pub threshold: f64,
    pub keep: usize,
}

impl Default for NegativeSamplingConfig {
    fn default() -> Self {
        Self {
            pool: 50,
            threshold: 0.999,
            keep: 2,
        }
    }
}

impl NegativeSamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.keep == 0 || self.pool < self.keep {
            return Err(Error::Config(format!(
                "negative sampling needs pool >= keep >= 1, got pool {} and keep {}",
                self.pool, self.keep
            )));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "similarity threshold {} outside (0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeShortfall {
    pub claim_id: u64,
    pub wanted: usize,
    pub got: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledNegatives {
    pub negatives: Vec<SentenceAddress>,
    pub shortfall: Option<NegativeShortfall>,
}

pub fn sample_negatives<S: SimilarityScorer + ?Sized>(
    claim: &Claim,
    corpus: &Corpus,
    index: &Bm25Index,
    scorer: &S,
    cfg: &NegativeSamplingConfig,
) -> Result<SampledNegatives> {
    cfg.validate()?;
    let mut negatives = Vec::with_capacity(cfg.keep);
    for (addr, _) in index.search(&claim.text, cfg.pool) {
        if negatives.len() == cfg.keep {
            break;
        }
        if claim.is_gold(&addr) {
            continue;
        }
        let text = corpus.get_sentence(&addr)?;
        if scorer.similarity(&claim.text, &addr, text) > cfg.threshold {
            continue;
        }
        negatives.push(addr);
    }
    let shortfall = (negatives.len() < cfg.keep).then(|| {
        log::warn!(
            "claim {}: {} of {} negatives survived",
            claim.id,
            negatives.len(),
            cfg.keep
        );
        NegativeShortfall {
            claim_id: claim.id,
            wanted: cfg.keep,
            got: negatives.len(),
        }
    });
    Ok(SampledNegatives {
        negatives,
        shortfall,
    })
}

/// One record per verifiable claim with at least one surviving negative,
/// in claim order. The positive is the first sentence of the first gold set.
pub fn contrastive_records<S: SimilarityScorer + ?Sized>(
    claims: &[Claim],
    corpus: &Corpus,
    index: &Bm25Index,
    scorer: &S,
    cfg: &NegativeSamplingConfig,
) -> Result<(Vec<TrainingExample>, Vec<NegativeShortfall>)> {
    cfg.validate()?;
    let per_claim: Vec<Option<(Option<TrainingExample>, Option<NegativeShortfall>)>> = claims
        .par_iter()
        .map(|claim| {
            let Some(positive) = claim.first_gold().filter(|_| claim.is_verifiable()) else {
                return Ok(None);
            };
            let sampled = sample_negatives(claim, corpus, index, scorer, cfg)?;
            let record = if sampled.negatives.is_empty() {
                None
            } else {
                Some(TrainingExample {
                    query: claim.text.clone(),
                    positive: corpus.get_sentence(positive)?.to_owned(),
                    negatives: sampled
                        .negatives
                        .iter()
                        .map(|a| corpus.get_sentence(a).map(str::to_owned))
                        .collect::<Result<_>>()?,
                    label: Some(claim.label),
                })
            };
            Ok(Some((record, sampled.shortfall)))
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (record, shortfall) in per_claim.into_iter().flatten() {
        records.extend(record);
        warnings.extend(shortfall);
    }
    Ok((records, warnings))
}

pub fn build_contrastive_file<S: SimilarityScorer + ?Sized>(
    claims: &[Claim],
    corpus: &Corpus,
    index: &Bm25Index,
    scorer: &S,
    cfg: &NegativeSamplingConfig,
    out: impl AsRef<Path>,
) -> Result<(usize, Vec<NegativeShortfall>)> {
    let out = out.as_ref();
    let (records, warnings) = contrastive_records(claims, corpus, index, scorer, cfg)?;
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(file);
    write_training_records(&mut w, &records).map_err(|e| Error::io(out, e))?;
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok((records.len(), warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Label, Sentence};
    use crate::sparse::Bm25Params;

    fn doc(id: &str, texts: &[&str]) -> Document {
        Document {
            doc_id: id.into(),
            sentences: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Sentence {
                    index: i as u32,
                    text: t.to_string(),
                })
                .collect(),
        }
    }

    fn setup() -> (Corpus, Bm25Index) {
        let corpus = Corpus::from_documents(vec![
            doc("A", &["alpha beta gamma delta"]),
            doc("B", &["zero", "alpha beta gamma"]),
            doc("C", &["zero", "one", "alpha beta"]),
            doc("D", &["alpha"]),
        ])
        .unwrap();
        let index = Bm25Index::build(&corpus, Bm25Params::default()).unwrap();
        (corpus, index)
    }

    fn claim(sets: Vec<Vec<SentenceAddress>>, label: Label) -> Claim {
        Claim {
            id: 1,
            text: "alpha beta gamma delta".into(),
            label,
            evidence_sets: sets,
        }
    }

    fn a(d: &str, i: u32) -> SentenceAddress {
        SentenceAddress::new(d, i)
    }

    #[test]
    fn gold_excluded_keep_two() {
        let (corpus, index) = setup();
        let c = claim(vec![vec![a("A", 0)]], Label::Supports);
        let zero = |_: &str, _: &SentenceAddress, _: &str| 0.0;
        let cfg = NegativeSamplingConfig {
            pool: 3,
            ..Default::default()
        };
        let out = sample_negatives(&c, &corpus, &index, &zero, &cfg).unwrap();
        assert_eq!(out.negatives, vec![a("B", 1), a("C", 2)]);
        assert!(out.shortfall.is_none());
    }

    #[test]
    fn threshold_filters_with_warning() {
        let (corpus, index) = setup();
        let c = claim(vec![vec![a("A", 0)]], Label::Supports);
        let scorer = |_: &str, addr: &SentenceAddress, _: &str| {
            if *addr == a("B", 1) {
                0.9995
            } else {
                0.5
            }
        };
        let cfg = NegativeSamplingConfig {
            pool: 3,
            ..Default::default()
        };
        let out = sample_negatives(&c, &corpus, &index, &scorer, &cfg).unwrap();
        assert_eq!(out.negatives, vec![a("C", 2)]);
        assert_eq!(
            out.shortfall,
            Some(NegativeShortfall {
                claim_id: 1,
                wanted: 2,
                got: 1
            })
        );
    }

    #[test]
    fn nei_claims_skipped() {
        let (corpus, index) = setup();
        let c = claim(vec![], Label::Nei);
        let (records, _) =
            contrastive_records(&[c], &corpus, &index, &TokenOverlap, &Default::default()).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn paraphrase_filtered_topical_kept() {
        let corpus = Corpus::from_documents(vec![
            doc("Kate_Bush", &["Kate Bush is an English singer."]),
            doc(
                "Kate_Bush_discography",
                &["Kate Bush is a singer from England."],
            ),
            doc(
                "Wuthering_Heights",
                &["Wuthering Heights was Kate Bush's debut single."],
            ),
        ])
        .unwrap();
        let index = Bm25Index::build(&corpus, Bm25Params::default()).unwrap();
        let c = Claim {
            id: 9,
            text: "Kate Bush is a singer from England.".into(),
            label: Label::Supports,
            evidence_sets: vec![vec![a("Kate_Bush", 0)]],
        };
        let cfg = NegativeSamplingConfig {
            pool: 10,
            threshold: 0.9,
            keep: 2,
        };
        let top = index.search(&c.text, 10);
        assert_eq!(top[0].0, a("Kate_Bush_discography", 0));
        let out = sample_negatives(&c, &corpus, &index, &TokenOverlap, &cfg).unwrap();
        assert_eq!(out.negatives, vec![a("Wuthering_Heights", 0)]);
    }

    #[test]
    fn config_validation() {
        assert!(NegativeSamplingConfig {
            pool: 1,
            keep: 2,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(NegativeSamplingConfig {
            threshold: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(NegativeSamplingConfig::default().validate().is_ok());
    }
}
