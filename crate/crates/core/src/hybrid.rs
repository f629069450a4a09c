//! Fusion of single-hop and multi-hop evidence into one ranked list, plus
//! the threshold and scale merge baselines.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::SentenceAddress;
use crate::error::{Error, Result};
use crate::rank::sort_ranked;

pub type ScoreMap = BTreeMap<SentenceAddress, f64>;

/// Ordered `(address, rerank score)` steps of one retrieval path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvidenceSequence(pub Vec<(SentenceAddress, f64)>);

impl EvidenceSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, addr: &SentenceAddress) -> bool {
        self.0.iter().any(|(a, _)| a == addr)
    }

    pub fn addresses(&self) -> impl Iterator<Item = &SentenceAddress> {
        self.0.iter().map(|(a, _)| a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridParams {
    pub mth: f64,
    pub gamma: f64,
}

impl HybridParams {
    pub fn new(mth: f64, gamma: f64) -> Result<Self> {
        let p = Self { mth, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mth", self.mth), ("gamma", self.gamma)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} = {v} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

pub fn sequence_score(seq: &EvidenceSequence) -> f64 {
    seq.0.iter().map(|(_, s)| s).product()
}

/// Min-max scaling to `[0, 1]`. A map whose values are all equal (including
/// a single entry) maps to 1.0 everywhere.
pub fn normalize_scores(map: &ScoreMap) -> ScoreMap {
    let (lo, hi) = map
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    map.iter()
        .map(|(k, &v)| (k.clone(), if span > 0.0 { (v - lo) / span } else { 1.0 }))
        .collect()
}

fn min_value(map: &ScoreMap) -> f64 {
    map.values().copied().reduce(f64::min).unwrap_or(0.0)
}

/// Best admitted sequence score per address; sequences scoring below `mth`
/// are skipped.
pub fn multi_score_map(sequences: &[EvidenceSequence], mth: f64) -> ScoreMap {
    let mut multi = ScoreMap::new();
    for seq in sequences {
        let s = sequence_score(seq);
        if s < mth {
            continue;
        }
        for addr in seq.addresses() {
            let slot = multi.entry(addr.clone()).or_insert(s);
            if s > *slot {
                *slot = s;
            }
        }
    }
    multi
}

pub fn hybrid_rank(
    single: &ScoreMap,
    sequences: &[EvidenceSequence],
    params: &HybridParams,
) -> Vec<(SentenceAddress, f64)> {
    let single = normalize_scores(single);
    let multi = normalize_scores(&multi_score_map(sequences, params.mth));
    let single_fill = min_value(&single);
    let multi_fill = min_value(&multi);
    let mut ids: Vec<&SentenceAddress> = single.keys().chain(multi.keys()).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut out: Vec<(SentenceAddress, f64)> = ids
        .into_iter()
        .map(|id| {
            let s = single.get(id).copied().unwrap_or(single_fill);
            let m = multi.get(id).copied().unwrap_or(multi_fill);
            (id.clone(), s + params.gamma * m)
        })
        .collect();
    sort_ranked(&mut out);
    out
}

fn pooled(
    single: &ScoreMap,
    members: impl IntoIterator<Item = (SentenceAddress, f64)>,
) -> Vec<(SentenceAddress, f64)> {
    let mut pool = single.clone();
    for (addr, s) in members {
        let slot = pool.entry(addr).or_insert(s);
        if s > *slot {
            *slot = s;
        }
    }
    let mut out: Vec<_> = pool.into_iter().collect();
    sort_ranked(&mut out);
    out
}

/// Raw single scores pooled with members of sequences scoring at least
/// `threshold`, each carrying its sequence score.
pub fn threshold_merge(
    single: &ScoreMap,
    sequences: &[EvidenceSequence],
    threshold: f64,
) -> Vec<(SentenceAddress, f64)> {
    let members = sequences.iter().flat_map(|seq| {
        let s = sequence_score(seq);
        let admitted = s >= threshold;
        seq.addresses()
            .filter(move |_| admitted)
            .map(move |a| (a.clone(), s))
    });
    pooled(single, members)
}

/// Raw single scores pooled with every sequence member carrying
/// `factor * sequence score`. A zero factor disables the multi side.
pub fn scale_merge(
    single: &ScoreMap,
    sequences: &[EvidenceSequence],
    factor: f64,
) -> Vec<(SentenceAddress, f64)> {
    let seqs = if factor > 0.0 { sequences } else { &[] };
    let members = seqs.iter().flat_map(|seq| {
        let s = factor * sequence_score(seq);
        seq.addresses().map(move |a| (a.clone(), s))
    });
    pooled(single, members)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum FusionStrategy {
    Hybrid { mth: f64, gamma: f64 },
    Threshold { threshold: f64 },
    Scale { factor: f64 },
}

impl FusionStrategy {
    pub fn fuse(
        &self,
        single: &ScoreMap,
        sequences: &[EvidenceSequence],
    ) -> Result<Vec<(SentenceAddress, f64)>> {
        Ok(match *self {
            FusionStrategy::Hybrid { mth, gamma } => {
                hybrid_rank(single, sequences, &HybridParams::new(mth, gamma)?)
            }
            FusionStrategy::Threshold { threshold } => {
                threshold_merge(single, sequences, threshold)
            }
            FusionStrategy::Scale { factor } => {
                if !(factor >= 0.0 && factor.is_finite()) {
                    return Err(Error::Config(format!(
                        "scale factor {factor} must be finite and non-negative"
                    )));
                }
                scale_merge(single, sequences, factor)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> SentenceAddress {
        SentenceAddress::new(s, 0)
    }

    fn map(pairs: &[(&str, f64)]) -> ScoreMap {
        pairs.iter().map(|(k, v)| (a(k), *v)).collect()
    }

    fn seq(pairs: &[(&str, f64)]) -> EvidenceSequence {
        EvidenceSequence(pairs.iter().map(|(k, v)| (a(k), *v)).collect())
    }

    #[test]
    fn sequence_products() {
        assert_eq!(sequence_score(&seq(&[("a", 0.5), ("b", 0.5)])), 0.25);
        assert_eq!(sequence_score(&seq(&[("a", 1.0), ("b", 1.0)])), 1.0);
        assert!((sequence_score(&seq(&[("a", 0.9), ("b", 0.8), ("c", 0.5)])) - 0.36).abs() < 1e-15);
    }

    #[test]
    fn normalization() {
        assert_eq!(
            normalize_scores(&map(&[("a", 2.0), ("b", 4.0), ("c", 6.0)])),
            map(&[("a", 0.0), ("b", 0.5), ("c", 1.0)])
        );
        assert_eq!(normalize_scores(&map(&[("a", 3.0)])), map(&[("a", 1.0)]));
        assert!(normalize_scores(&ScoreMap::new()).is_empty());
    }

    #[test]
    fn degenerate_multi_example() {
        let single = map(&[("a", 0.9), ("b", 0.6), ("c", 0.3)]);
        let out = hybrid_rank(
            &single,
            &[seq(&[("b", 0.8), ("d", 0.9)])],
            &HybridParams::new(0.5, 0.5).unwrap(),
        );
        let expect = [("a", 1.5), ("b", 1.0), ("c", 0.5), ("d", 0.5)];
        assert_eq!(out.len(), 4);
        for ((addr, s), (id, e)) in out.iter().zip(expect) {
            assert_eq!(addr, &a(id));
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn low_sequences_skipped() {
        let out = hybrid_rank(
            &map(&[("a", 1.0)]),
            &[seq(&[("b", 0.4), ("c", 0.4)])],
            &HybridParams::new(0.5, 1.0).unwrap(),
        );
        assert_eq!(out, vec![(a("a"), 1.0)]);
    }

    #[test]
    fn empty_sequences_keep_single_order() {
        let single = map(&[("a", 0.2), ("b", 0.7), ("c", 0.5)]);
        for gamma in [0.1, 1.0] {
            let out = hybrid_rank(&single, &[], &HybridParams::new(0.5, gamma).unwrap());
            let ids: Vec<_> = out.into_iter().map(|(x, _)| x).collect();
            assert_eq!(ids, vec![a("b"), a("c"), a("a")]);
        }
    }

    #[test]
    fn scale_merge_edges() {
        let single = map(&[("a", 0.9), ("b", 0.2)]);
        let seqs = [
            seq(&[("b", 0.8), ("d", 0.9)]),
            seq(&[("c", 0.1), ("a", 0.2)]),
        ];
        let single_only: Vec<_> = single.clone().into_iter().collect::<Vec<_>>();
        assert_eq!(scale_merge(&single, &seqs, 0.0), single_only);
        assert_eq!(
            scale_merge(&single, &seqs, 1.0),
            threshold_merge(&single, &seqs, 0.0)
        );
        let out = threshold_merge(&single, &seqs, 0.5);
        assert_eq!(out[0], (a("a"), 0.9));
        assert!((out[1].1 - 0.72).abs() < 1e-15);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn params_validated() {
        assert!(HybridParams::new(0.0, 0.5).is_err());
        assert!(HybridParams::new(0.5, 1.5).is_err());
        assert!(HybridParams::new(1.0, 1.0).is_ok());
    }
}
