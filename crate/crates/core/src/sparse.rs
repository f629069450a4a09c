//! Tokenization and a sentence-level BM25 inverted index.
//!
//! Per-term score of sentence `s` for query term `t`:
//!
//! ```text
//! idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avgdl))
//! idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
//! ```
//!
//! Query terms are deduplicated before scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::corpus::{Corpus, SentenceAddress};
use crate::error::{Error, Result};
use crate::rank::sort_ranked;

pub const BM25_MAGIC: &[u8; 4] = b"M3BM";
pub const BM25_VERSION: u32 = 1;

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::Config(format!(
                "bm25 k1 must be > 0, got {}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!(
                "bm25 b must be in [0, 1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub ordinal: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    params: Bm25Params,
    ids: Vec<SentenceAddress>,
    lengths: Vec<u32>,
    avgdl: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

impl Bm25Index {
    /// Indexes every non-blank sentence of `corpus` in corpus order.
    pub fn build(corpus: &Corpus, params: Bm25Params) -> Result<Self> {
        Self::from_sentences(corpus.indexable(), params)
    }

    pub fn from_sentences<'a, I>(sentences: I, params: Bm25Params) -> Result<Self>
    where
        I: IntoIterator<Item = (SentenceAddress, &'a str)>,
    {
        params.validate()?;
        let mut ids = Vec::new();
        let mut lengths = Vec::new();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (addr, text) in sentences {
            let ordinal = u32::try_from(ids.len())
                .map_err(|_| Error::Build("more than u32::MAX sentences".into()))?;
            let tokens = tokenize(text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for tok in &tokens {
                *tf.entry(tok.clone()).or_default() += 1;
            }
            for (tok, count) in tf {
                postings
                    .entry(tok)
                    .or_default()
                    .push(Posting { ordinal, tf: count });
            }
            ids.push(addr);
            lengths.push(tokens.len() as u32);
        }
        if ids.is_empty() {
            return Err(Error::Build("no indexable sentences".into()));
        }
        let avgdl = mean_length(&lengths);
        Ok(Self {
            params,
            ids,
            lengths,
            avgdl,
            postings,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn ids(&self) -> &[SentenceAddress] {
        &self.ids
    }

    pub fn length(&self, ordinal: usize) -> u32 {
        self.lengths[ordinal]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.ids.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top-`k` sentences by BM25 score; zero-score sentences are omitted.
    pub fn search(&self, query: &str, k: usize) -> Vec<(SentenceAddress, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let Bm25Params { k1, b } = self.params;
        let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
        for term in &terms {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(list.len());
            for p in list {
                let tf = f64::from(p.tf);
                let len = f64::from(self.lengths[p.ordinal as usize]);
                let norm = tf + k1 * (1.0 - b + b * len / self.avgdl);
                *scores.entry(p.ordinal).or_default() += idf * tf * (k1 + 1.0) / norm;
            }
        }
        let mut ranked: Vec<(SentenceAddress, f64)> = scores
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(o, s)| (self.ids[o as usize].clone(), s))
            .collect();
        sort_ranked(&mut ranked);
        ranked.truncate(k);
        ranked
    }

    /// Binary layout (all integers little-endian):
    ///
    /// ```text
    /// magic "M3BM" | version u32 | k1 f64 | b f64 | N u64
    /// N x (doc_id: u32 len + UTF-8, sent_index u32, length u32)
    /// T u64 | T x (term: u32 len + UTF-8, P u32, P x (ordinal u32, tf u32))
    /// ```
    ///
    /// Terms are written in byte order; postings in ordinal order.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(BM25_MAGIC)?;
        w.write_u32::<LittleEndian>(BM25_VERSION)?;
        w.write_f64::<LittleEndian>(self.params.k1)?;
        w.write_f64::<LittleEndian>(self.params.b)?;
        w.write_u64::<LittleEndian>(self.ids.len() as u64)?;
        for (addr, &len) in self.ids.iter().zip(&self.lengths) {
            binio::write_str(&mut w, &addr.doc_id)?;
            w.write_u32::<LittleEndian>(addr.sent_index)?;
            w.write_u32::<LittleEndian>(len)?;
        }
        w.write_u64::<LittleEndian>(self.postings.len() as u64)?;
        for (term, list) in &self.postings {
            binio::write_str(&mut w, term)?;
            w.write_u32::<LittleEndian>(list.len() as u32)?;
            for p in list {
                w.write_u32::<LittleEndian>(p.ordinal)?;
                w.write_u32::<LittleEndian>(p.tf)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        binio::expect_magic(&mut r, BM25_MAGIC)?;
        let version = binio::read_u32(&mut r)?;
        if version != BM25_VERSION {
            return Err(Error::Format(format!("unsupported M3BM version {version}")));
        }
        let params = Bm25Params {
            k1: binio::read_f64(&mut r)?,
            b: binio::read_f64(&mut r)?,
        };
        params
            .validate()
            .map_err(|e| Error::Format(e.to_string()))?;
        let n = binio::read_len(&mut r)?;
        if n == 0 {
            return Err(Error::Format("index holds no sentences".into()));
        }
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        let mut lengths = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let doc = binio::read_string(&mut r)?;
            let sent = binio::read_u32(&mut r)?;
            ids.push(SentenceAddress::new(doc, sent));
            lengths.push(binio::read_u32(&mut r)?);
        }
        let terms = binio::read_len(&mut r)?;
        let mut postings = BTreeMap::new();
        let mut prev: Option<String> = None;
        for _ in 0..terms {
            let term = binio::read_string(&mut r)?;
            if prev.as_ref().is_some_and(|p| *p >= term) {
                return Err(Error::Format("terms out of order".into()));
            }
            let count = binio::read_u32(&mut r)? as usize;
            let mut list = Vec::with_capacity(count.min(1 << 20));
            for _ in 0..count {
                let ordinal = binio::read_u32(&mut r)?;
                let tf = binio::read_u32(&mut r)?;
                if ordinal as usize >= n
                    || list.last().is_some_and(|p: &Posting| p.ordinal >= ordinal)
                {
                    return Err(Error::Format(format!("bad posting for term {term:?}")));
                }
                list.push(Posting { ordinal, tf });
            }
            prev = Some(term.clone());
            postings.insert(term, list);
        }
        binio::expect_eof(&mut r)?;
        let avgdl = mean_length(&lengths);
        Ok(Self {
            params,
            ids,
            lengths,
            avgdl,
            postings,
        })
    }
}

fn mean_length(lengths: &[u32]) -> f64 {
    let total: u64 = lengths.iter().map(|&l| u64::from(l)).sum();
    total as f64 / lengths.len() as f64
}

pub fn save_index(index: &Bm25Index, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    index.write_to(&mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<Bm25Index> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Bm25Index::read_from(BufReader::new(file))
}
