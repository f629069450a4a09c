//! FEVER-style metrics over retrieval runs.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Claim, Label, SentenceAddress};
use crate::error::{Error, Result};
use crate::rerank::read_jsonl;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunEntry {
    /// Ranked, distinct.
    pub evidence: Vec<SentenceAddress>,
    pub predicted: Option<Label>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RetrievalRun {
    pub entries: BTreeMap<u64, RunEntry>,
}

/// Ranked evidence line: `{claim_id, evidence: [[addr, score], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedEvidence {
    pub claim_id: u64,
    pub evidence: Vec<(SentenceAddress, f64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub claim_id: u64,
    pub label: Label,
}

impl RetrievalRun {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds ranked evidence for a claim; repeated addresses keep their first
    /// position.
    pub fn set_evidence(
        &mut self,
        claim_id: u64,
        evidence: impl IntoIterator<Item = SentenceAddress>,
    ) {
        let mut seen = HashSet::new();
        let ranked = evidence
            .into_iter()
            .filter(|a| seen.insert(a.clone()))
            .collect();
        self.entries.entry(claim_id).or_default().evidence = ranked;
    }

    pub fn set_prediction(&mut self, claim_id: u64, label: Label) {
        self.entries.entry(claim_id).or_default().predicted = Some(label);
    }

    pub fn from_parts(evidence: &[RankedEvidence], predictions: &[Prediction]) -> Self {
        let mut run = Self::new();
        for e in evidence {
            run.set_evidence(e.claim_id, e.evidence.iter().map(|(a, _)| a.clone()));
        }
        for p in predictions {
            run.set_prediction(p.claim_id, p.label);
        }
        run
    }

    pub fn load(evidence: impl AsRef<Path>, predictions: Option<&Path>) -> Result<Self> {
        let ev: Vec<RankedEvidence> = read_jsonl(evidence.as_ref())?;
        let preds: Vec<Prediction> = match predictions {
            Some(p) => read_jsonl(p)?,
            None => Vec::new(),
        };
        Ok(Self::from_parts(&ev, &preds))
    }

    fn top_k(&self, claim_id: u64, k: usize) -> &[SentenceAddress] {
        self.entries
            .get(&claim_id)
            .map(|e| &e.evidence[..e.evidence.len().min(k)])
            .unwrap_or(&[])
    }

    fn has_predictions(&self) -> bool {
        self.entries.values().any(|e| e.predicted.is_some())
    }

    fn prediction(&self, claim_id: u64) -> Result<Label> {
        self.entries
            .get(&claim_id)
            .and_then(|e| e.predicted)
            .ok_or_else(|| Error::Validation {
                claim_id,
                message: "no predicted label".into(),
            })
    }
}

/// Which verifiable claims count as multi-hop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiHopRule {
    /// Every evidence set spans at least two documents.
    #[default]
    Every,
    /// Some evidence set does.
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    All,
    MultiHop(MultiHopRule),
}

fn set_docs(set: &[SentenceAddress]) -> BTreeSet<&str> {
    set.iter().map(|a| a.doc_id.as_str()).collect()
}

pub fn is_multihop(claim: &Claim, rule: MultiHopRule) -> bool {
    let spans = |set: &Vec<SentenceAddress>| set_docs(set).len() >= 2;
    !claim.evidence_sets.is_empty()
        && match rule {
            MultiHopRule::Every => claim.evidence_sets.iter().all(spans),
            MultiHopRule::Any => claim.evidence_sets.iter().any(spans),
        }
}

fn in_subset(claim: &Claim, subset: Subset) -> bool {
    claim.is_verifiable()
        && match subset {
            Subset::All => true,
            Subset::MultiHop(rule) => is_multihop(claim, rule),
        }
}

/// Some complete gold set is contained in `top`.
pub fn sentence_covered(claim: &Claim, top: &[SentenceAddress]) -> bool {
    let top: HashSet<&SentenceAddress> = top.iter().collect();
    claim
        .evidence_sets
        .iter()
        .any(|set| set.iter().all(|a| top.contains(a)))
}

pub fn document_covered(claim: &Claim, top: &[SentenceAddress]) -> bool {
    let docs: HashSet<&str> = top.iter().map(|a| a.doc_id.as_str()).collect();
    claim
        .evidence_sets
        .iter()
        .any(|set| set.iter().all(|a| docs.contains(a.doc_id.as_str())))
}

/// Some gold document, from any set, appears in `top`.
pub fn document_hit(claim: &Claim, top: &[SentenceAddress]) -> bool {
    let docs: HashSet<&str> = top.iter().map(|a| a.doc_id.as_str()).collect();
    claim
        .evidence_sets
        .iter()
        .flatten()
        .any(|a| docs.contains(a.doc_id.as_str()))
}

fn rate<F>(
    run: &RetrievalRun,
    claims: &[Claim],
    k: usize,
    subset: Subset,
    covered: F,
) -> Option<f64>
where
    F: Fn(&Claim, &[SentenceAddress]) -> bool,
{
    let (mut hit, mut n) = (0usize, 0usize);
    for c in claims.iter().filter(|c| in_subset(c, subset)) {
        n += 1;
        hit += usize::from(covered(c, run.top_k(c.id, k)));
    }
    (n > 0).then(|| hit as f64 / n as f64)
}

pub fn sentence_recall_at_k(
    run: &RetrievalRun,
    claims: &[Claim],
    k: usize,
    subset: Subset,
) -> Option<f64> {
    rate(run, claims, k, subset, sentence_covered)
}

pub fn document_recall_at_k(
    run: &RetrievalRun,
    claims: &[Claim],
    k: usize,
    subset: Subset,
) -> Option<f64> {
    rate(run, claims, k, subset, document_covered)
}

pub fn document_hit_at_k(
    run: &RetrievalRun,
    claims: &[Claim],
    k: usize,
    subset: Subset,
) -> Option<f64> {
    rate(run, claims, k, subset, document_hit)
}

/// Mean number of distinct documents among each claim's top-k sentences,
/// over all claims.
pub fn mean_distinct_docs(run: &RetrievalRun, claims: &[Claim], k: usize) -> Option<f64> {
    if claims.is_empty() {
        return None;
    }
    let total: usize = claims
        .iter()
        .map(|c| set_docs(run.top_k(c.id, k)).len())
        .sum();
    Some(total as f64 / claims.len() as f64)
}

pub fn label_accuracy(run: &RetrievalRun, claims: &[Claim]) -> Result<Option<f64>> {
    if claims.is_empty() {
        return Ok(None);
    }
    let mut correct = 0;
    for c in claims {
        correct += usize::from(run.prediction(c.id)? == c.label);
    }
    Ok(Some(correct as f64 / claims.len() as f64))
}

pub fn fever_score(run: &RetrievalRun, claims: &[Claim], k: usize) -> Result<Option<f64>> {
    if claims.is_empty() {
        return Ok(None);
    }
    let mut hits = 0;
    for c in claims {
        let correct = run.prediction(c.id)? == c.label;
        let ok = correct && (!c.is_verifiable() || sentence_covered(c, run.top_k(c.id, k)));
        hits += usize::from(ok);
    }
    Ok(Some(hits as f64 / claims.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub k: usize,
    pub multihop_rule: MultiHopRule,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 5,
            multihop_rule: MultiHopRule::Every,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub claims: usize,
    pub verifiable: usize,
    pub multihop: usize,
    pub with_evidence: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub sentence_recall: Option<f64>,
    pub sentence_recall_multihop: Option<f64>,
    pub document_recall: Option<f64>,
    pub document_recall_multihop: Option<f64>,
    pub document_hit: Option<f64>,
    pub document_hit_multihop: Option<f64>,
    pub label_accuracy: Option<f64>,
    pub fever_score: Option<f64>,
    pub mean_distinct_docs: Option<f64>,
    pub counts: EvalCounts,
}

/// Label metrics are absent when the run carries no predictions at all; a
/// run with only some predictions is an error.
pub fn evaluate(run: &RetrievalRun, claims: &[Claim], cfg: &EvalConfig) -> Result<MetricsReport> {
    if cfg.k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let k = cfg.k;
    let multi = Subset::MultiHop(cfg.multihop_rule);
    let (la, fever) = if run.has_predictions() {
        (label_accuracy(run, claims)?, fever_score(run, claims, k)?)
    } else {
        (None, None)
    };
    Ok(MetricsReport {
        k,
        sentence_recall: sentence_recall_at_k(run, claims, k, Subset::All),
        sentence_recall_multihop: sentence_recall_at_k(run, claims, k, multi),
        document_recall: document_recall_at_k(run, claims, k, Subset::All),
        document_recall_multihop: document_recall_at_k(run, claims, k, multi),
        document_hit: document_hit_at_k(run, claims, k, Subset::All),
        document_hit_multihop: document_hit_at_k(run, claims, k, multi),
        label_accuracy: la,
        fever_score: fever,
        mean_distinct_docs: mean_distinct_docs(run, claims, k),
        counts: EvalCounts {
            claims: claims.len(),
            verifiable: claims.iter().filter(|c| c.is_verifiable()).count(),
            multihop: claims.iter().filter(|c| in_subset(c, multi)).count(),
            with_evidence: claims
                .iter()
                .filter(|c| !run.top_k(c.id, k).is_empty())
                .count(),
        },
    })
}

impl MetricsReport {
    /// Aligned plain-text table: document and sentence recall (all and
    /// multi-hop), then label metrics.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.4}"));
        let rows = [
            (
                format!("Doc Rec@{}", self.k),
                self.document_recall,
                self.document_recall_multihop,
            ),
            (
                format!("Doc hit@{}", self.k),
                self.document_hit,
                self.document_hit_multihop,
            ),
            (
                format!("Sent Rec@{}", self.k),
                self.sentence_recall,
                self.sentence_recall_multihop,
            ),
        ];
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>10} {:>10}", "metric", "all", "multi-hop");
        for (name, all, multi) in rows {
            let _ = writeln!(out, "{:<12} {:>10} {:>10}", name, fmt(all), fmt(multi));
        }
        let _ = writeln!(out, "{:<12} {:>10}", "LA", fmt(self.label_accuracy));
        let _ = writeln!(out, "{:<12} {:>10}", "FEVER", fmt(self.fever_score));
        let _ = writeln!(out, "{:<12} {:>10}", "docs@k", fmt(self.mean_distinct_docs));
        let c = &self.counts;
        let _ = writeln!(
            out,
            "claims {} (verifiable {}, multi-hop {}, with evidence {})",
            c.claims, c.verifiable, c.multihop, c.with_evidence
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(d: &str, i: u32) -> SentenceAddress {
        SentenceAddress::new(d, i)
    }

    fn claim(id: u64, label: Label, sets: Vec<Vec<SentenceAddress>>) -> Claim {
        Claim {
            id,
            text: String::new(),
            label,
            evidence_sets: sets,
        }
    }

    #[test]
    fn complete_set_coverage() {
        let c = claim(
            1,
            Label::Supports,
            vec![vec![a("A", 0)], vec![a("B", 1), a("C", 2)]],
        );
        assert!(sentence_covered(&c, &[a("B", 1), a("C", 2), a("Z", 0)]));
        let c2 = claim(2, Label::Supports, vec![vec![a("B", 1), a("C", 2)]]);
        assert!(!sentence_covered(&c2, &[a("B", 1), a("Z", 0)]));
    }

    #[test]
    fn document_coverage() {
        let c = claim(1, Label::Supports, vec![vec![a("X", 0), a("Y", 0)]]);
        assert!(document_covered(&c, &[a("X", 3), a("Y", 9), a("Z", 0)]));
        assert!(!document_covered(&c, &[a("X", 3), a("X", 4)]));
        assert!(document_hit(&c, &[a("X", 3)]));
    }

    #[test]
    fn all_nei_is_absent() {
        let claims = vec![claim(1, Label::Nei, vec![])];
        assert_eq!(
            sentence_recall_at_k(&RetrievalRun::new(), &claims, 5, Subset::All),
            None
        );
    }

    #[test]
    fn label_metrics() {
        let claims: Vec<_> = [Label::Supports, Label::Refutes, Label::Nei]
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                claim(
                    i as u64,
                    l,
                    if l == Label::Nei {
                        vec![]
                    } else {
                        vec![vec![a("A", i as u32)]]
                    },
                )
            })
            .collect();
        let mut run = RetrievalRun::new();
        for c in &claims {
            run.set_prediction(c.id, Label::from_index((c.label.index() + 1) % 3).unwrap());
        }
        assert_eq!(label_accuracy(&run, &claims).unwrap(), Some(0.0));
        for c in &claims {
            run.set_prediction(c.id, c.label);
        }
        assert_eq!(label_accuracy(&run, &claims).unwrap(), Some(1.0));
        // Claim 0 has its evidence, claim 1 does not; NEI needs none.
        run.set_evidence(0, [a("A", 0)]);
        assert!((fever_score(&run, &claims, 5).unwrap().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let mut partial = RetrievalRun::new();
        partial.set_prediction(0, Label::Supports);
        assert!(label_accuracy(&partial, &claims).is_err());
        assert!(evaluate(&partial, &claims, &EvalConfig::default()).is_err());
    }

    #[test]
    fn multihop_rules() {
        let mixed = claim(
            1,
            Label::Supports,
            vec![vec![a("A", 0)], vec![a("B", 0), a("C", 0)]],
        );
        assert!(!is_multihop(&mixed, MultiHopRule::Every));
        assert!(is_multihop(&mixed, MultiHopRule::Any));
    }

    #[test]
    fn duplicates_dropped_and_table_renders() {
        let mut run = RetrievalRun::new();
        run.set_evidence(1, [a("A", 0), a("A", 0), a("B", 0)]);
        assert_eq!(run.entries[&1].evidence, vec![a("A", 0), a("B", 0)]);
        let claims = vec![claim(1, Label::Supports, vec![vec![a("A", 0), a("B", 0)]])];
        let report = evaluate(&run, &claims, &EvalConfig::default()).unwrap();
        assert_eq!(report.sentence_recall, Some(1.0));
        assert_eq!(report.sentence_recall_multihop, Some(1.0));
        assert_eq!(report.label_accuracy, None);
        assert_eq!(report.mean_distinct_docs, Some(2.0));
        assert!(report.to_table().contains("Sent Rec@5"));
    }
}
