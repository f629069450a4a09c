use std::collections::BTreeMap;

use evhop::hybrid::{
    hybrid_rank, scale_merge, threshold_merge, EvidenceSequence, HybridParams, ScoreMap,
};
use evhop::SentenceAddress;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight-line transcription of the fusion pseudocode, written without
/// reference to the library code.
fn reference(
    single: &ScoreMap,
    sequences: &[EvidenceSequence],
    mth: f64,
    gamma: f64,
) -> Vec<(SentenceAddress, f64)> {
    let mut multi: BTreeMap<SentenceAddress, f64> = BTreeMap::new();
    for seq in sequences {
        let mut seq_score = 1.0;
        for p in &seq.0 {
            seq_score *= p.1;
        }
        if seq_score < mth {
            continue;
        }
        for p in &seq.0 {
            if !multi.contains_key(&p.0) || seq_score > multi[&p.0] {
                multi.insert(p.0.clone(), seq_score);
            }
        }
    }
    let normalize = |m: &BTreeMap<SentenceAddress, f64>| -> BTreeMap<SentenceAddress, f64> {
        if m.is_empty() {
            return BTreeMap::new();
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in m.values() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        let mut out = BTreeMap::new();
        for (k, v) in m {
            out.insert(k.clone(), if hi == lo { 1.0 } else { (v - lo) / (hi - lo) });
        }
        out
    };
    let mut single = normalize(single);
    let mut multi = normalize(&multi);
    let min_value =
        |m: &BTreeMap<SentenceAddress, f64>| m.values().copied().fold(f64::INFINITY, f64::min);
    let ids: Vec<SentenceAddress> = single.keys().chain(multi.keys()).cloned().collect();
    for id in &ids {
        if !single.contains_key(id) {
            let v = if single.is_empty() {
                0.0
            } else {
                min_value(&single)
            };
            single.insert(id.clone(), v);
        }
        if !multi.contains_key(id) {
            let v = if multi.is_empty() {
                0.0
            } else {
                min_value(&multi)
            };
            multi.insert(id.clone(), v);
        }
    }
    let mut hybrid: Vec<(SentenceAddress, f64)> = single
        .keys()
        .map(|id| (id.clone(), single[id] + gamma * multi[id]))
        .collect();
    hybrid.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.to_string().cmp(&b.0.to_string()))
    });
    hybrid
}

fn addr(i: usize) -> SentenceAddress {
    SentenceAddress::new(format!("D{}", i % 7), (i / 7) as u32)
}

/// Scores drawn from a coarse grid so equal values and degenerate maps occur.
fn score(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.3) {
        f64::from(rng.gen_range(0..=4)) / 4.0
    } else {
        rng.gen_range(0.0..1.0)
    }
}

fn random_instance(rng: &mut ChaCha8Rng) -> (ScoreMap, Vec<EvidenceSequence>, f64, f64) {
    let pool = rng.gen_range(1..=20);
    let single: ScoreMap = (0..rng.gen_range(0..=pool))
        .map(|_| (addr(rng.gen_range(0..pool)), score(rng)))
        .collect();
    let sequences = (0..rng.gen_range(0..=10))
        .map(|_| {
            let len = rng.gen_range(1..=3).min(pool);
            let mut seen = Vec::new();
            while seen.len() < len {
                let a = addr(rng.gen_range(0..pool));
                if !seen.contains(&a) {
                    seen.push(a);
                }
            }
            EvidenceSequence(seen.into_iter().map(|a| (a, score(rng))).collect())
        })
        .collect();
    let grid = [0.001, 0.01, 0.1, 0.25, 0.5, 1.0];
    let mth = if rng.gen_bool(0.5) {
        grid[rng.gen_range(0..grid.len())]
    } else {
        rng.gen_range(0.0001..=1.0)
    };
    let gamma = if rng.gen_bool(0.5) {
        grid[rng.gen_range(0..grid.len())]
    } else {
        rng.gen_range(0.0001..=1.0)
    };
    (single, sequences, mth, gamma)
}

#[test]
fn thousand_random_instances_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..1000 {
        let (single, sequences, mth, gamma) = random_instance(&mut rng);
        let got = hybrid_rank(&single, &sequences, &HybridParams::new(mth, gamma).unwrap());
        let want = reference(&single, &sequences, mth, gamma);
        assert_eq!(got, want, "case {case}");
    }
}

#[test]
fn pinned_degenerate_example() {
    let a = |s: &str| SentenceAddress::new(s, 0);
    let single: ScoreMap = [(a("a"), 0.9), (a("b"), 0.6), (a("c"), 0.3)]
        .into_iter()
        .collect();
    let seqs = vec![EvidenceSequence(vec![(a("b"), 0.8), (a("d"), 0.9)])];
    let got = hybrid_rank(&single, &seqs, &HybridParams::new(0.5, 0.5).unwrap());
    assert_eq!(got, reference(&single, &seqs, 0.5, 0.5));
    let ids: Vec<_> = got.iter().map(|(x, _)| x.doc_id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c", "d"]);
    let scores: Vec<f64> = got.iter().map(|(_, s)| *s).collect();
    for (s, e) in scores.iter().zip([1.5, 1.0, 0.5, 0.5]) {
        assert!((s - e).abs() < 1e-12);
    }
}

#[test]
fn output_is_union_of_admitted_members() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let (single, sequences, mth, gamma) = random_instance(&mut rng);
        let got = hybrid_rank(&single, &sequences, &HybridParams::new(mth, gamma).unwrap());
        let mut expect: Vec<SentenceAddress> = single.keys().cloned().collect();
        for seq in &sequences {
            if seq.0.iter().map(|p| p.1).product::<f64>() >= mth {
                expect.extend(seq.addresses().cloned());
            }
        }
        expect.sort();
        expect.dedup();
        let mut ids: Vec<_> = got.into_iter().map(|(a, _)| a).collect();
        ids.sort();
        assert_eq!(ids, expect);
    }
}

#[test]
fn raising_mth_never_adds_multi_members() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..300 {
        let (single, sequences, mth, gamma) = random_instance(&mut rng);
        let higher = (mth + rng.gen_range(0.0..1.0)).min(1.0);
        let low = hybrid_rank(&single, &sequences, &HybridParams::new(mth, gamma).unwrap());
        let high = hybrid_rank(
            &single,
            &sequences,
            &HybridParams::new(higher, gamma).unwrap(),
        );
        let low_ids: Vec<_> = low.iter().map(|(a, _)| a).collect();
        assert!(high.iter().all(|(a, _)| low_ids.contains(&a)));
    }
}

/// Pools raw single scores and per-member sequence scores by hand.
fn reference_pool(
    single: &ScoreMap,
    members: &[(SentenceAddress, f64)],
) -> Vec<(SentenceAddress, f64)> {
    let mut pool = single.clone();
    for (a, s) in members {
        let cur = pool.get(a).copied();
        if cur.is_none() || *s > cur.unwrap() {
            pool.insert(a.clone(), *s);
        }
    }
    let mut out: Vec<_> = pool.into_iter().collect();
    out.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.to_string().cmp(&b.0.to_string()))
    });
    out
}

#[test]
fn baselines_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let (single, sequences, threshold, _) = random_instance(&mut rng);
        let factor = rng.gen_range(0.01..2.0);
        let product = |s: &EvidenceSequence| s.0.iter().map(|p| p.1).product::<f64>();
        let admitted: Vec<(SentenceAddress, f64)> = sequences
            .iter()
            .filter(|s| product(s) >= threshold)
            .flat_map(|s| {
                s.addresses()
                    .map(|a| (a.clone(), product(s)))
                    .collect::<Vec<_>>()
            })
            .collect();
        assert_eq!(
            threshold_merge(&single, &sequences, threshold),
            reference_pool(&single, &admitted)
        );
        let scaled: Vec<(SentenceAddress, f64)> = sequences
            .iter()
            .flat_map(|s| {
                s.addresses()
                    .map(|a| (a.clone(), factor * product(s)))
                    .collect::<Vec<_>>()
            })
            .collect();
        assert_eq!(
            scale_merge(&single, &sequences, factor),
            reference_pool(&single, &scaled)
        );
        assert_eq!(
            scale_merge(&single, &sequences, 1.0),
            threshold_merge(&single, &sequences, 0.0)
        );
        assert_eq!(
            scale_merge(&single, &sequences, 0.0),
            reference_pool(&single, &[])
        );
    }
}
