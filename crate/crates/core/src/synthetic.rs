//! Seeded synthetic corpora with planted evidence.
//!
//! Every document `i` is about a single entity token `entNNN` that appears
//! in all of its sentences. Three claim kinds are planted:
//!
//! * chain: the claim mentions entity X and three cue words; one sentence
//!   of X repeats them and names entity Y; one sentence of Y is the second
//!   gold sentence and shares no token with the claim, so only a query that
//!   includes X's sentence can reach it.
//! * single: one sentence of the claim's entity repeats the claim.
//! * NEI: the claim names an entity with no supporting sentence.
//!
//! The remaining sentences of a planted document each repeat one cue word,
//! which makes them topical distractors.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Claim, Corpus, Document, Label, Sentence, SentenceAddress};
use crate::error::{Error, Result};
use crate::learning::train::TrainingExample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub documents: usize,
    pub sentences_per_doc: usize,
    pub chain_claims: usize,
    pub single_claims: usize,
    pub nei_claims: usize,
    pub vocabulary: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self::fixture(0)
    }
}

impl SyntheticConfig {
    /// 40 documents, 200 sentences.
    pub fn fixture(seed: u64) -> Self {
        Self {
            documents: 40,
            sentences_per_doc: 5,
            chain_claims: 10,
            single_claims: 10,
            nei_claims: 5,
            vocabulary: 300,
            seed,
        }
    }

    /// 200 documents, 1000 sentences, 50 chain, 50 single and 20 NEI claims.
    pub fn planted(seed: u64) -> Self {
        Self {
            documents: 200,
            sentences_per_doc: 5,
            chain_claims: 50,
            single_claims: 50,
            nei_claims: 20,
            vocabulary: 400,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let needed = 2 * self.chain_claims + self.single_claims + self.nei_claims;
        if needed > self.documents {
            return Err(Error::Config(format!(
                "{needed} documents needed for the requested claims, only {} configured",
                self.documents
            )));
        }
        if self.sentences_per_doc < 2 {
            return Err(Error::Config(
                "need at least two sentences per document".into(),
            ));
        }
        if self.vocabulary < 20 {
            return Err(Error::Config(
                "vocabulary must hold at least 20 words".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimKind {
    Chain,
    Single,
    Nei,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub claims: Vec<Claim>,
    /// Parallel to `claims`.
    pub kinds: Vec<ClaimKind>,
}

pub fn entity(i: usize) -> String {
    format!("ent{i:03}")
}

pub fn doc_id(i: usize) -> String {
    format!("Entity_{i:03}")
}

struct Words<'a> {
    rng: &'a mut ChaCha8Rng,
    vocabulary: usize,
}

impl Words<'_> {
    fn pick(&mut self, n: usize, exclude: &BTreeSet<String>) -> Vec<String> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let w = format!("w{:03}", self.rng.gen_range(0..self.vocabulary));
            if !exclude.contains(&w) && !out.contains(&w) {
                out.push(w);
            }
        }
        out
    }
}

fn sentence(tokens: &[String]) -> String {
    format!("{}.", tokens.join(" "))
}

fn random_label(rng: &mut ChaCha8Rng) -> Label {
    if rng.gen_bool(0.5) {
        Label::Supports
    } else {
        Label::Refutes
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.sentences_per_doc;
    let none = BTreeSet::<String>::new();
    let mut texts: Vec<Vec<String>> = (0..cfg.documents)
        .map(|i| {
            (0..n)
                .map(|_| {
                    let mut toks = vec![entity(i)];
                    toks.extend(
                        Words {
                            rng: &mut rng,
                            vocabulary: cfg.vocabulary,
                        }
                        .pick(4, &none),
                    );
                    sentence(&toks)
                })
                .collect()
        })
        .collect();

    let mut order: Vec<usize> = (0..cfg.documents).collect();
    order.shuffle(&mut rng);
    let mut next = order.into_iter();
    let mut claims = Vec::new();
    let mut kinds = Vec::new();

    let plant = |rng: &mut ChaCha8Rng,
                 texts: &mut Vec<Vec<String>>,
                 d: usize,
                 cues: &[String],
                 extra: Option<String>| {
        let cue_set: BTreeSet<String> = cues.iter().cloned().collect();
        let gold = rng.gen_range(0..n);
        for j in 0..n {
            let mut toks = vec![entity(d)];
            if j == gold {
                toks.extend(cues.iter().cloned());
                toks.extend(extra.clone());
            } else {
                toks.push(cues[j % cues.len()].clone());
                toks.extend(
                    Words {
                        rng: &mut *rng,
                        vocabulary: cfg.vocabulary,
                    }
                    .pick(3, &cue_set),
                );
            }
            texts[d][j] = sentence(&toks);
        }
        SentenceAddress::new(doc_id(d), gold as u32)
    };

    for _ in 0..cfg.chain_claims {
        let (x, y) = (
            next.next().expect("validated"),
            next.next().expect("validated"),
        );
        let cues = Words {
            rng: &mut rng,
            vocabulary: cfg.vocabulary,
        }
        .pick(3, &none);
        let first = plant(&mut rng, &mut texts, x, &cues, Some(entity(y)));
        let cue_set: BTreeSet<String> = cues.iter().cloned().collect();
        let second_idx = rng.gen_range(0..n);
        let mut toks = vec![entity(y)];
        toks.extend(
            Words {
                rng: &mut rng,
                vocabulary: cfg.vocabulary,
            }
            .pick(4, &cue_set),
        );
        texts[y][second_idx] = sentence(&toks);
        // Other sentences of Y must not leak the claim's cues either.
        for j in (0..n).filter(|&j| j != second_idx) {
            let mut toks = vec![entity(y)];
            toks.extend(
                Words {
                    rng: &mut rng,
                    vocabulary: cfg.vocabulary,
                }
                .pick(4, &cue_set),
            );
            texts[y][j] = sentence(&toks);
        }
        let second = SentenceAddress::new(doc_id(y), second_idx as u32);
        let mut claim_toks = vec![entity(x)];
        claim_toks.extend(cues);
        let mut set = vec![first, second];
        set.sort();
        claims.push(Claim {
            id: claims.len() as u64,
            text: sentence(&claim_toks),
            label: random_label(&mut rng),
            evidence_sets: vec![set],
        });
        kinds.push(ClaimKind::Chain);
    }
    for _ in 0..cfg.single_claims {
        let z = next.next().expect("validated");
        let cues = Words {
            rng: &mut rng,
            vocabulary: cfg.vocabulary,
        }
        .pick(3, &none);
        let gold = plant(&mut rng, &mut texts, z, &cues, None);
        let mut claim_toks = vec![entity(z)];
        claim_toks.extend(cues);
        claims.push(Claim {
            id: claims.len() as u64,
            text: sentence(&claim_toks),
            label: random_label(&mut rng),
            evidence_sets: vec![vec![gold]],
        });
        kinds.push(ClaimKind::Single);
    }
    for _ in 0..cfg.nei_claims {
        let w = next.next().expect("validated");
        let mut claim_toks = vec![entity(w)];
        claim_toks.extend(
            Words {
                rng: &mut rng,
                vocabulary: cfg.vocabulary,
            }
            .pick(3, &none),
        );
        claims.push(Claim {
            id: claims.len() as u64,
            text: sentence(&claim_toks),
            label: Label::Nei,
            evidence_sets: Vec::new(),
        });
        kinds.push(ClaimKind::Nei);
    }

    let documents = texts
        .into_iter()
        .enumerate()
        .map(|(i, sents)| Document {
            doc_id: doc_id(i),
            sentences: sents
                .into_iter()
                .enumerate()
                .map(|(j, text)| Sentence {
                    index: j as u32,
                    text,
                })
                .collect(),
        })
        .collect();
    Ok(SyntheticData {
        corpus: Corpus::from_documents(documents)?,
        claims,
        kinds,
    })
}

/// Contrastive records where each query and its positive share a topic
/// token that no negative carries, and the label is signalled by a marker
/// word in the positive.
pub fn separable_training_set(n: usize, seed: u64) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topic = |i: usize| format!("topic{i}");
    (0..n)
        .map(|i| {
            let label = if rng.gen_bool(0.5) {
                Label::Supports
            } else {
                Label::Refutes
            };
            let marker = if label == Label::Supports {
                "affirmed"
            } else {
                "denied"
            };
            let negatives = (0..2)
                .map(|_| {
                    let mut j = rng.gen_range(0..n);
                    if j == i {
                        j = (j + 1) % n;
                    }
                    format!("{} background filler{}", topic(j + n), rng.gen_range(0..50))
                })
                .collect();
            TrainingExample {
                query: format!("{} claim about {}", topic(i), topic(i)),
                positive: format!("{} is {marker} here", topic(i)),
                negatives,
                label: Some(label),
            }
        })
        .collect()
}
