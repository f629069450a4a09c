//! Sentence-segmented document collection and claim annotations.
//!
//! The corpus reader accepts the Wikipedia-dump JSONL layout: one object per
//! line with a document `id`, a free-form `text` and a `lines` field holding
//! `N<TAB>sentence<TAB>...` entries separated by newlines. Claims follow the
//! claim JSONL layout with `id`, `claim`, `label` and `evidence` groups of
//! `[annotation_id, evidence_id, page, sent_index]`.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Separator between document id and sentence index in the string form.
pub const ADDRESS_SEPARATOR: &str = "::";

/// Global address of one sentence: `(document id, sentence index)`.
///
/// Ordering follows the string form `doc_id::sent_index`, so `A::10 < A::2`.
/// Every tie-break in the crate uses this ordering.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SentenceAddress {
    pub doc_id: String,
    pub sent_index: u32,
}

impl SentenceAddress {
    pub fn new(doc_id: impl Into<String>, sent_index: u32) -> Self {
        Self {
            doc_id: doc_id.into(),
            sent_index,
        }
    }

    fn key_bytes<'a>(&'a self, digits: &'a mut [u8; 10]) -> impl Iterator<Item = u8> + 'a {
        let mut n = self.sent_index;
        let mut start = digits.len();
        loop {
            start -= 1;
            digits[start] = b'0' + (n % 10) as u8;
            n /= 10;
            if n == 0 {
                break;
            }
        }
        self.doc_id
            .bytes()
            .chain(ADDRESS_SEPARATOR.bytes())
            .chain(digits[start..].iter().copied())
    }
}

impl Ord for SentenceAddress {
    fn cmp(&self, other: &Self) -> Ordering {
        let (mut a, mut b) = ([0u8; 10], [0u8; 10]);
        self.key_bytes(&mut a).cmp(other.key_bytes(&mut b))
    }
}

impl PartialOrd for SentenceAddress {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SentenceAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.doc_id, ADDRESS_SEPARATOR, self.sent_index)
    }
}

impl FromStr for SentenceAddress {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (doc, idx) = s
            .rsplit_once(ADDRESS_SEPARATOR)
            .ok_or_else(|| Error::Format(format!("sentence address {s:?} lacks '::'")))?;
        if doc.is_empty() {
            return Err(Error::Format(format!(
                "sentence address {s:?} has empty doc id"
            )));
        }
        let sent_index = idx
            .parse()
            .map_err(|_| Error::Format(format!("sentence address {s:?} has bad index")))?;
        Ok(Self::new(doc, sent_index))
    }
}

impl Serialize for SentenceAddress {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SentenceAddress {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Verdict label, also the class space of the pair reranker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Supports,
    Refutes,
    Nei,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Supports, Label::Refutes, Label::Nei];

    /// Class index in logit/probability vectors.
    pub fn index(self) -> usize {
        match self {
            Label::Supports => 0,
            Label::Refutes => 1,
            Label::Nei => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Supports => "SUPPORTS",
            Label::Refutes => "REFUTES",
            Label::Nei => "NOT ENOUGH INFO",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SUPPORTS" => Ok(Label::Supports),
            "REFUTES" => Ok(Label::Refutes),
            "NOT ENOUGH INFO" | "NEI" => Ok(Label::Nei),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub index: u32,
    pub text: String,
}

impl Sentence {
    /// Blank sentences keep their index but never enter an index.
    pub fn is_blank(&self) -> bool {
        self.text.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn sentence(&self, index: u32) -> Option<&Sentence> {
        self.sentences
            .binary_search_by_key(&index, |s| s.index)
            .ok()
            .map(|i| &self.sentences[i])
    }

    /// Display title: underscores of the dump's page id become spaces.
    pub fn title(&self) -> String {
        title_of(&self.doc_id)
    }
}

pub fn title_of(doc_id: &str) -> String {
    doc_id.replace('_', " ")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    /// All addressed sentences, blanks included.
    pub sentences: usize,
    pub nonblank_sentences: usize,
}

/// Immutable in-memory corpus; documents keep input order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    by_id: HashMap<String, usize>,
    stats: CorpusStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestOptions {
    /// NFC-normalize sentence text and ids.
    pub normalize: bool,
    /// Skip records whose id is empty instead of failing.
    pub skip_empty_ids: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            normalize: true,
            skip_empty_ids: false,
        }
    }
}

impl Corpus {
    pub fn from_documents(documents: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(documents.len());
        let mut stats = CorpusStats::default();
        for (i, doc) in documents.iter().enumerate() {
            if doc.doc_id.is_empty() {
                return Err(Error::Format("empty document id".into()));
            }
            if by_id.insert(doc.doc_id.clone(), i).is_some() {
                return Err(Error::DuplicateDocument(doc.doc_id.clone()));
            }
            if doc.sentences.windows(2).any(|w| w[0].index >= w[1].index) {
                return Err(Error::Format(format!(
                    "document {:?}: sentence indices not strictly increasing",
                    doc.doc_id
                )));
            }
            stats.documents += 1;
            stats.sentences += doc.sentences.len();
            stats.nonblank_sentences += doc.sentences.iter().filter(|s| !s.is_blank()).count();
        }
        Ok(Self {
            documents,
            by_id,
            stats,
        })
    }

    pub fn stats(&self) -> CorpusStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn get_sentence(&self, addr: &SentenceAddress) -> Result<&str> {
        self.document(&addr.doc_id)
            .and_then(|d| d.sentence(addr.sent_index))
            .map(|s| s.text.as_str())
            .ok_or_else(|| Error::NotFound(addr.clone()))
    }

    pub fn contains(&self, addr: &SentenceAddress) -> bool {
        self.get_sentence(addr).is_ok()
    }

    /// Every addressed sentence in corpus order, blanks included.
    pub fn sentences(&self) -> impl Iterator<Item = (&Document, &Sentence)> {
        self.documents
            .iter()
            .flat_map(|d| d.sentences.iter().map(move |s| (d, s)))
    }

    /// Non-blank sentences in corpus order: the content of every index.
    pub fn indexable(&self) -> impl Iterator<Item = (SentenceAddress, &str)> {
        self.sentences()
            .filter(|(_, s)| !s.is_blank())
            .map(|(d, s)| {
                (
                    SentenceAddress::new(d.doc_id.clone(), s.index),
                    s.text.as_str(),
                )
            })
    }

    /// Writes the corpus back in the ingestion layout.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for doc in &self.documents {
            let text = doc
                .sentences
                .iter()
                .filter(|s| !s.is_blank())
                .map(|s| s.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let lines = doc
                .sentences
                .iter()
                .map(|s| format!("{}\t{}", s.index, s.text))
                .collect::<Vec<_>>()
                .join("\n");
            let record = serde_json::json!({ "id": doc.doc_id, "text": text, "lines": lines });
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn nfc(s: &str, normalize: bool) -> String {
    if normalize {
        s.nfc().collect()
    } else {
        s.to_string()
    }
}

fn parse_lines_field(lines: &str, normalize: bool) -> std::result::Result<Vec<Sentence>, String> {
    let mut out: Vec<Sentence> = Vec::new();
    for entry in lines.split('\n') {
        if entry.is_empty() {
            continue;
        }
        let mut fields = entry.split('\t');
        let idx_field = fields.next().unwrap_or_default();
        let index: u32 = idx_field
            .trim()
            .parse()
            .map_err(|_| format!("non-integer sentence index {idx_field:?}"))?;
        let text = fields.next().unwrap_or_default();
        if let Some(prev) = out.last() {
            if index <= prev.index {
                return Err(format!("sentence index {index} follows {}", prev.index));
            }
        }
        out.push(Sentence {
            index,
            text: nfc(text, normalize),
        });
    }
    Ok(out)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: impl AsRef<Path>, options: IngestOptions) -> Result<Corpus> {
    let path = path.as_ref();
    let reader = open(path)?;
    let mut documents = Vec::new();
    let mut seen = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let id = value
            .get("id")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(path, lineno, "missing string field \"id\""))?;
        let lines = value
            .get("lines")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(path, lineno, "missing string field \"lines\""))?;
        let doc_id = nfc(id, options.normalize);
        if doc_id.is_empty() {
            if options.skip_empty_ids {
                continue;
            }
            return Err(Error::parse(path, lineno, "empty document id"));
        }
        if seen.insert(doc_id.clone(), lineno).is_some() {
            return Err(Error::DuplicateDocument(doc_id));
        }
        let sentences = parse_lines_field(lines, options.normalize)
            .map_err(|m| Error::parse(path, lineno, m))?;
        documents.push(Document { doc_id, sentences });
    }
    Corpus::from_documents(documents)
}

/// One annotated claim. `evidence_sets` is empty iff the label is NEI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Claim {
    pub id: u64,
    pub text: String,
    pub label: Label,
    /// Each set is sorted and deduplicated; sets keep file order.
    pub evidence_sets: Vec<Vec<SentenceAddress>>,
}

impl Claim {
    pub fn is_verifiable(&self) -> bool {
        self.label != Label::Nei
    }

    /// Distinct gold addresses across all evidence sets, sorted.
    pub fn gold_addresses(&self) -> BTreeSet<&SentenceAddress> {
        self.evidence_sets.iter().flatten().collect()
    }

    pub fn is_gold(&self, addr: &SentenceAddress) -> bool {
        self.evidence_sets
            .iter()
            .any(|set| set.binary_search(addr).is_ok())
    }

    /// Positive paired with the claim for training: first sentence of the
    /// first evidence set.
    pub fn first_gold(&self) -> Option<&SentenceAddress> {
        self.evidence_sets.first().and_then(|s| s.first())
    }
}

/// Writes claims in the FEVER annotation layout read by [`load_claims`].
pub fn write_claims_jsonl<W: Write>(claims: &[Claim], mut out: W) -> std::io::Result<()> {
    for claim in claims {
        let evidence: Vec<Vec<Value>> = claim
            .evidence_sets
            .iter()
            .map(|set| {
                set.iter()
                    .map(|a| serde_json::json!([null, null, a.doc_id, a.sent_index]))
                    .collect()
            })
            .collect();
        let record = serde_json::json!({
            "id": claim.id,
            "claim": claim.text,
            "label": claim.label,
            "evidence": evidence,
        });
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnresolvedAddress {
    pub claim_id: u64,
    pub address: SentenceAddress,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub unresolved: Vec<UnresolvedAddress>,
    /// Evidence sets dropped because one of their addresses did not resolve.
    pub dropped_sets: usize,
    pub corpus: Option<CorpusStats>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedClaims {
    pub claims: Vec<Claim>,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub supports: usize,
    pub refutes: usize,
    pub nei: usize,
}

impl ClassCounts {
    pub fn of(claims: &[Claim]) -> Self {
        let mut c = Self::default();
        for claim in claims {
            match claim.label {
                Label::Supports => c.supports += 1,
                Label::Refutes => c.refutes += 1,
                Label::Nei => c.nei += 1,
            }
        }
        c
    }
}

fn parse_evidence(value: Option<&Value>) -> std::result::Result<Vec<Vec<SentenceAddress>>, String> {
    let Some(groups) = value else {
        return Ok(Vec::new());
    };
    let groups = groups.as_array().ok_or("\"evidence\" is not an array")?;
    let mut sets: Vec<Vec<SentenceAddress>> = Vec::new();
    for group in groups {
        let items = group.as_array().ok_or("evidence group is not an array")?;
        let mut set = BTreeSet::new();
        for item in items {
            let item = item.as_array().ok_or("evidence entry is not an array")?;
            if item.len() < 4 {
                return Err("evidence entry needs 4 fields".into());
            }
            match (&item[2], &item[3]) {
                (Value::Null, _) | (_, Value::Null) => continue,
                (Value::String(page), idx) => {
                    let idx = idx
                        .as_u64()
                        .and_then(|i| u32::try_from(i).ok())
                        .ok_or("evidence sentence index is not a non-negative integer")?;
                    set.insert(SentenceAddress::new(page.nfc().collect::<String>(), idx));
                }
                _ => return Err("evidence page is not a string".into()),
            }
        }
        if !set.is_empty() {
            let set: Vec<_> = set.into_iter().collect();
            if !sets.contains(&set) {
                sets.push(set);
            }
        }
    }
    Ok(sets)
}

/// Reads claim JSONL. With a corpus, evidence sets holding an unresolvable
/// address are dropped and reported; a verifiable claim left with no set is
/// an error.
pub fn load_claims(path: impl AsRef<Path>, corpus: Option<&Corpus>) -> Result<LoadedClaims> {
    let path = path.as_ref();
    let reader = open(path)?;
    let mut out = LoadedClaims::default();
    out.report.corpus = corpus.map(Corpus::stats);
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let id = value
            .get("id")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::parse(path, lineno, "missing integer field \"id\""))?;
        let text = value
            .get("claim")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(path, lineno, "missing string field \"claim\""))?;
        let label: Label = value
            .get("label")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(path, lineno, "missing string field \"label\""))?
            .parse()?;
        let mut evidence_sets = if label == Label::Nei {
            Vec::new()
        } else {
            parse_evidence(value.get("evidence")).map_err(|m| Error::parse(path, lineno, m))?
        };
        if let Some(corpus) = corpus {
            let before = evidence_sets.len();
            evidence_sets.retain(|set| {
                let mut ok = true;
                for addr in set {
                    if !corpus.contains(addr) {
                        ok = false;
                        out.report.unresolved.push(UnresolvedAddress {
                            claim_id: id,
                            address: addr.clone(),
                        });
                    }
                }
                ok
            });
            out.report.dropped_sets += before - evidence_sets.len();
        }
        if label != Label::Nei && evidence_sets.is_empty() {
            return Err(Error::Validation {
                claim_id: id,
                message: format!("{label} claim has no resolvable evidence set"),
            });
        }
        out.claims.push(Claim {
            id,
            text: nfc(text, true),
            label,
            evidence_sets,
        });
    }
    Ok(out)
}
