use std::collections::BTreeMap;

use evhop::corpus::{Claim, Corpus, Document, Label, Sentence, SentenceAddress};
use evhop::negatives::{sample_negatives, NegativeSamplingConfig};
use evhop::sparse::{Bm25Index, Bm25Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CLAIMS: usize = 500;

fn corpus(rng: &mut ChaCha8Rng) -> Corpus {
    let docs = (0..30)
        .map(|d| Document {
            doc_id: format!("D{d}"),
            sentences: (0..4)
                .map(|i| Sentence {
                    index: i,
                    text: (0..rng.gen_range(3..8))
                        .map(|_| format!("t{}", rng.gen_range(0..40)))
                        .collect::<Vec<_>>()
                        .join(" "),
                })
                .collect(),
        })
        .collect();
    Corpus::from_documents(docs).unwrap()
}

/// Deterministic pseudo-random similarity in [0, 1] keyed on the address.
fn similarity(salt: u64, addr: &SentenceAddress) -> f64 {
    let mut h = salt ^ 0x9e37_79b9_7f4a_7c15;
    for b in addr.to_string().bytes() {
        h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[test]
fn negatives_respect_gold_threshold_and_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let corpus = corpus(&mut rng);
    let index = Bm25Index::build(&corpus, Bm25Params::default()).unwrap();
    let all: Vec<SentenceAddress> = corpus.indexable().map(|(a, _)| a).collect();
    for id in 0..CLAIMS as u64 {
        let text = (0..rng.gen_range(1..6))
            .map(|_| format!("t{}", rng.gen_range(0..40)))
            .collect::<Vec<_>>()
            .join(" ");
        let gold: Vec<SentenceAddress> = (0..rng.gen_range(1..4))
            .map(|_| all[rng.gen_range(0..all.len())].clone())
            .collect();
        let claim = Claim {
            id,
            text,
            label: Label::Supports,
            evidence_sets: vec![gold],
        };
        let cfg = NegativeSamplingConfig {
            pool: rng.gen_range(2..60),
            threshold: rng.gen_range(0.05..=1.0),
            keep: 2,
        };
        let cfg = NegativeSamplingConfig {
            keep: rng.gen_range(1..=cfg.pool.min(5)),
            ..cfg
        };
        let salt = rng.gen::<u64>();
        let scorer = |_: &str, a: &SentenceAddress, _: &str| similarity(salt, a);
        let out = sample_negatives(&claim, &corpus, &index, &scorer, &cfg).unwrap();

        assert!(out.negatives.len() <= cfg.keep);
        assert_eq!(out.shortfall.is_some(), out.negatives.len() < cfg.keep);
        for a in &out.negatives {
            assert!(!claim.is_gold(a), "claim {id}: gold {a} sampled");
            assert!(similarity(salt, a) <= cfg.threshold);
        }
        // Survivors are exactly the first `keep` eligible BM25 candidates.
        let ranked: Vec<_> = index
            .search(&claim.text, cfg.pool)
            .into_iter()
            .map(|(a, _)| a)
            .collect();
        let expected: Vec<_> = ranked
            .iter()
            .filter(|a| !claim.is_gold(a) && similarity(salt, a) <= cfg.threshold)
            .take(cfg.keep)
            .cloned()
            .collect();
        assert_eq!(out.negatives, expected);
        let pos: BTreeMap<_, _> = ranked.iter().enumerate().map(|(i, a)| (a, i)).collect();
        assert!(out.negatives.windows(2).all(|w| pos[&w[0]] < pos[&w[1]]));
    }
}
