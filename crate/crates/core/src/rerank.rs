//! Sentence reranking as 3-way pair classification.
//!
//! Relevance of a sentence is `1 - P(NEI)` under the pair scorer's logits.
//! Pair inputs put the document title in front of the sentence text as
//! `"title . sentence"`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::corpus::{title_of, Claim, Corpus, Label, SentenceAddress};
use crate::error::{Error, Result};
use crate::learning::encoder::{bucket, Features};
use crate::learning::loss::{nli_loss, softmax3};
use crate::rank::sort_ranked;
use crate::sparse::tokenize;

/// Logits are clamped to this magnitude before the softmax.
pub const LOGIT_CAP: f64 = 50.0;

pub const PAIR_SCORER_MAGIC: &[u8; 4] = b"M3PS";
pub const PAIR_SCORER_VERSION: u32 = 1;

/// The query side of a pair. `claim_id` lets per-claim scorers (logit files,
/// planted oracles) look their answers up.
#[derive(Debug, Clone, Copy)]
pub struct PairQuery<'a> {
    pub claim_id: Option<u64>,
    pub text: &'a str,
}

#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub address: &'a SentenceAddress,
    pub text: &'a str,
}

/// Scores a (query, sentence) pair as logits over SUPPORTS, REFUTES, NEI.
pub trait PairScorer: Send + Sync {
    fn logits(&self, query: &PairQuery<'_>, sentence: &Candidate<'_>) -> [f64; 3];
}

impl<T: PairScorer + ?Sized> PairScorer for &T {
    fn logits(&self, query: &PairQuery<'_>, sentence: &Candidate<'_>) -> [f64; 3] {
        (**self).logits(query, sentence)
    }
}

impl<T: PairScorer + ?Sized> PairScorer for Box<T> {
    fn logits(&self, query: &PairQuery<'_>, sentence: &Candidate<'_>) -> [f64; 3] {
        (**self).logits(query, sentence)
    }
}

pub fn relevance_score(logits: [f64; 3]) -> f64 {
    let capped = logits.map(|l| l.clamp(-LOGIT_CAP, LOGIT_CAP));
    1.0 - softmax3(capped)[Label::Nei.index()]
}

pub fn pair_text(address: &SentenceAddress, text: &str) -> String {
    format!("{} . {}", title_of(&address.doc_id), text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RerankConfig {
    /// Incoming candidates scored; deeper ones are dropped.
    pub depth: usize,
    /// Final output size for ranked evidence.
    pub k: usize,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self { depth: 200, k: 5 }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.depth < self.k {
            return Err(Error::Config(format!(
                "rerank needs depth >= k >= 1, got depth {} and k {}",
                self.depth, self.k
            )));
        }
        Ok(())
    }
}

/// Rescores the first `depth` candidates and sorts them by relevance.
/// Incoming retrieval scores are discarded.
pub fn rerank<S: PairScorer + ?Sized>(
    query: &PairQuery<'_>,
    candidates: &[(SentenceAddress, f64)],
    corpus: &Corpus,
    scorer: &S,
    depth: usize,
) -> Result<Vec<(SentenceAddress, f64)>> {
    let top = &candidates[..candidates.len().min(depth)];
    let mut scored: Vec<(SentenceAddress, f64)> = top
        .par_iter()
        .map(|(addr, _)| {
            let text = corpus.get_sentence(addr)?;
            let logits = scorer.logits(
                query,
                &Candidate {
                    address: addr,
                    text,
                },
            );
            Ok((addr.clone(), relevance_score(logits)))
        })
        .collect::<Result<_>>()?;
    sort_ranked(&mut scored);
    Ok(scored)
}

fn unique_tokens(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// Fraction of the query's distinct tokens present in the sentence.
pub fn query_overlap(query: &str, sentence: &str) -> f64 {
    let q = unique_tokens(query);
    if q.is_empty() {
        return 0.0;
    }
    let s = unique_tokens(sentence);
    q.intersection(&s).count() as f64 / q.len() as f64
}

/// Linear model over hashed pair features: query tokens, sentence tokens
/// and shared tokens in separate namespaces, plus two dense overlap
/// features (query coverage and Jaccard).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPairScorer {
    feature_dim: usize,
    seed: u64,
    /// `(feature_dim + 2) x 3`, row-major.
    weights: Vec<f64>,
    bias: [f64; 3],
}

impl LinearPairScorer {
    pub fn zeros(feature_dim: usize, seed: u64) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        Ok(Self {
            feature_dim,
            seed,
            weights: vec![0.0; (feature_dim + 2) * 3],
            bias: [0.0; 3],
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// `sentence` is the full pair text (title already prepended).
    pub fn features(&self, query: &str, sentence: &str) -> Features {
        let q = unique_tokens(query);
        let s = unique_tokens(sentence);
        let mut counts = BTreeMap::<usize, f64>::new();
        let mut add = |tok: String| {
            *counts
                .entry(bucket(self.seed, &tok, self.feature_dim))
                .or_default() += 1.0
        };
        for t in &q {
            add(format!("q:{t}"));
        }
        for t in &s {
            add(format!("s:{t}"));
        }
        let shared: Vec<&String> = q.intersection(&s).collect();
        for t in &shared {
            add(format!("x:{t}"));
        }
        let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
        let mut feats: Features = counts.into_iter().map(|(b, c)| (b, c / norm)).collect();
        if !q.is_empty() {
            feats.push((self.feature_dim, shared.len() as f64 / q.len() as f64));
        }
        let union = q.union(&s).count();
        if union > 0 {
            feats.push((self.feature_dim + 1, shared.len() as f64 / union as f64));
        }
        feats
    }

    fn logits_of(&self, feats: &Features) -> [f64; 3] {
        let mut out = self.bias;
        for &(f, x) in feats {
            for (y, o) in out.iter_mut().enumerate() {
                *o += x * self.weights[f * 3 + y];
            }
        }
        out
    }

    pub fn text_logits(&self, query: &str, sentence: &str) -> [f64; 3] {
        self.logits_of(&self.features(query, sentence))
    }

    /// `"M3PS" | version u32 | feature_dim u32 | seed u64 |
    /// weights f64[(F+2)*3] | bias f64[3]`.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(PAIR_SCORER_MAGIC)?;
        w.write_u32::<LittleEndian>(PAIR_SCORER_VERSION)?;
        w.write_u32::<LittleEndian>(self.feature_dim as u32)?;
        w.write_u64::<LittleEndian>(self.seed)?;
        for v in self.weights.iter().chain(&self.bias) {
            w.write_f64::<LittleEndian>(*v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        binio::expect_magic(&mut r, PAIR_SCORER_MAGIC)?;
        let version = binio::read_u32(&mut r)?;
        if version != PAIR_SCORER_VERSION {
            return Err(Error::Format(format!("unsupported M3PS version {version}")));
        }
        let feature_dim = binio::read_u32(&mut r)? as usize;
        let seed = binio::read_u64(&mut r)?;
        let mut model = Self::zeros(feature_dim, seed).map_err(|e| Error::Format(e.to_string()))?;
        for w in model.weights.iter_mut().chain(model.bias.iter_mut()) {
            *w = binio::read_f64(&mut r)?;
        }
        binio::expect_eof(&mut r)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

impl PairScorer for LinearPairScorer {
    fn logits(&self, query: &PairQuery<'_>, sentence: &Candidate<'_>) -> [f64; 3] {
        self.text_logits(query.text, &pair_text(sentence.address, sentence.text))
    }
}

/// Reranker training record: `sentence` already carries the title prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub query: String,
    pub sentence: String,
    pub label: Label,
}

pub fn read_pair_records(path: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    read_jsonl(path.as_ref())
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::parse(path, n + 1, e.to_string()))?,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairTrainConfig {
    pub feature_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PairTrainConfig {
    fn default() -> Self {
        Self {
            feature_dim: 4096,
            epochs: 20,
            learning_rate: 0.5,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Mean cross entropy of `records` and its gradient (weights, bias).
pub fn pair_loss_and_gradient(
    model: &LinearPairScorer,
    feats: &[(Features, usize)],
) -> (f64, Vec<f64>, [f64; 3]) {
    let n = feats.len() as f64;
    let mut gw = vec![0.0; model.weights.len()];
    let mut gb = [0.0; 3];
    let mut loss = 0.0;
    for (f, gold) in feats {
        let p = softmax3(model.logits_of(f));
        loss += nli_loss(&p, *gold).unwrap_or(f64::INFINITY);
        let mut d = p;
        d[*gold] -= 1.0;
        for (y, dy) in d.iter().enumerate() {
            gb[y] += dy / n;
            for &(i, x) in f {
                gw[i * 3 + y] += x * dy / n;
            }
        }
    }
    (loss / n, gw, gb)
}

/// Minibatch gradient descent with 3-way cross entropy. Returns the model
/// and the mean loss of each epoch.
pub fn train_pair_scorer(
    records: &[PairRecord],
    cfg: &PairTrainConfig,
) -> Result<(LinearPairScorer, Vec<f64>)> {
    if records.is_empty() {
        return Err(Error::Config("no reranker training records".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut model = LinearPairScorer::zeros(cfg.feature_dim, cfg.seed)?;
    let feats: Vec<(Features, usize)> = records
        .iter()
        .map(|r| (model.features(&r.query, &r.sentence), r.label.index()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..feats.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Features, usize)> = chunk.iter().map(|&i| feats[i].clone()).collect();
            let (loss, gw, gb) = pair_loss_and_gradient(&model, &batch);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "reranker loss {loss} in epoch {epoch}"
                )));
            }
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= cfg.learning_rate * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&gb) {
                *b -= cfg.learning_rate * g;
            }
            sum += loss;
            batches += 1;
        }
        history.push(sum / batches as f64);
    }
    Ok((model, history))
}

/// Logits supplied by an external model, keyed by claim and sentence.
/// Pairs absent from the file are treated as confidently irrelevant.
#[derive(Debug, Clone, Default)]
pub struct LogitsFileScorer {
    logits: HashMap<(u64, SentenceAddress), [f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogitsRecord {
    pub claim_id: u64,
    pub sentence: SentenceAddress,
    pub logits: [f64; 3],
}

pub const MISSING_PAIR_LOGITS: [f64; 3] = [0.0, 0.0, LOGIT_CAP];

impl LogitsFileScorer {
    pub fn from_records(records: impl IntoIterator<Item = LogitsRecord>) -> Result<Self> {
        let mut logits = HashMap::new();
        for r in records {
            if r.logits.iter().any(|l| !l.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "logits for claim {} / {}",
                    r.claim_id, r.sentence
                )));
            }
            logits.insert((r.claim_id, r.sentence), r.logits);
        }
        Ok(Self { logits })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_records(read_jsonl::<LogitsRecord>(path.as_ref())?)
    }
}

impl PairScorer for LogitsFileScorer {
    fn logits(&self, query: &PairQuery<'_>, sentence: &Candidate<'_>) -> [f64; 3] {
        query
            .claim_id
            .and_then(|id| self.logits.get(&(id, sentence.address.clone())))
            .copied()
            .unwrap_or(MISSING_PAIR_LOGITS)
    }
}

/// How a planted oracle scores sentences outside the claim's gold evidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonGoldScore {
    /// Fixed NEI logit.
    Constant(f64),
    /// Relevance `floor + span * query_overlap`, expressed as logits.
    Graded { floor: f64, span: f64 },
}

/// Test oracle that knows every claim's gold sentences.
#[derive(Debug, Clone)]
pub struct PlantedOracle {
    gold: HashMap<u64, HashSet<SentenceAddress>>,
    gold_nei_logit: f64,
    non_gold: NonGoldScore,
}

/// Logits `[0, 0, l]` whose relevance score equals `r`.
pub fn logits_for_relevance(r: f64) -> [f64; 3] {
    let r = r.clamp(1e-12, 1.0 - 1e-12);
    [0.0, 0.0, (2.0 * (1.0 - r) / r).ln()]
}

impl PlantedOracle {
    pub fn new(claims: &[Claim], non_gold: NonGoldScore) -> Self {
        let gold = claims
            .iter()
            .map(|c| (c.id, c.gold_addresses().into_iter().cloned().collect()))
            .collect();
        Self {
            gold,
            gold_nei_logit: -10.0,
            non_gold,
        }
    }

    /// Gold gets NEI logit -10, everything else +10.
    pub fn binary(claims: &[Claim]) -> Self {
        Self::new(claims, NonGoldScore::Constant(10.0))
    }
}

impl PairScorer for PlantedOracle {
    fn logits(&self, query: &PairQuery<'_>, sentence: &Candidate<'_>) -> [f64; 3] {
        let is_gold = query
            .claim_id
            .and_then(|id| self.gold.get(&id))
            .is_some_and(|g| g.contains(sentence.address));
        if is_gold {
            return [0.0, 0.0, self.gold_nei_logit];
        }
        match self.non_gold {
            NonGoldScore::Constant(l) => [0.0, 0.0, l],
            NonGoldScore::Graded { floor, span } => {
                logits_for_relevance(floor + span * query_overlap(query.text, sentence.text))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RerankerDataConfig {
    pub negatives: usize,
    pub pool: usize,
}

impl Default for RerankerDataConfig {
    fn default() -> Self {
        Self {
            negatives: 10,
            pool: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub claim_id: u64,
    pub wanted: usize,
    pub got: usize,
}

/// Per claim: every gold sentence labeled with the claim's label, then the
/// first `negatives` non-gold sentences among the top `pool` retrievals
/// labeled NEI.
pub fn reranker_training_records(
    claims: &[Claim],
    corpus: &Corpus,
    retrievals: &BTreeMap<u64, Vec<SentenceAddress>>,
    cfg: &RerankerDataConfig,
) -> Result<(Vec<PairRecord>, Vec<Shortfall>)> {
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for claim in claims {
        for addr in claim.gold_addresses() {
            records.push(PairRecord {
                query: claim.text.clone(),
                sentence: pair_text(addr, corpus.get_sentence(addr)?),
                label: claim.label,
            });
        }
        let retrieved = retrievals.get(&claim.id).map(Vec::as_slice).unwrap_or(&[]);
        let mut got = 0;
        for addr in retrieved.iter().take(cfg.pool) {
            if got == cfg.negatives {
                break;
            }
            if claim.is_gold(addr) {
                continue;
            }
            records.push(PairRecord {
                query: claim.text.clone(),
                sentence: pair_text(addr, corpus.get_sentence(addr)?),
                label: Label::Nei,
            });
            got += 1;
        }
        if got < cfg.negatives {
            log::warn!(
                "claim {}: only {got} of {} NEI pairs available",
                claim.id,
                cfg.negatives
            );
            warnings.push(Shortfall {
                claim_id: claim.id,
                wanted: cfg.negatives,
                got,
            });
        }
    }
    Ok((records, warnings))
}

pub fn build_reranker_training_data(
    claims: &[Claim],
    corpus: &Corpus,
    retrievals: &BTreeMap<u64, Vec<SentenceAddress>>,
    cfg: &RerankerDataConfig,
    out: impl AsRef<Path>,
) -> Result<(usize, Vec<Shortfall>)> {
    let out = out.as_ref();
    let (records, warnings) = reranker_training_records(claims, corpus, retrievals, cfg)?;
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(file);
    for r in &records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::io(out, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok((records.len(), warnings))
}
