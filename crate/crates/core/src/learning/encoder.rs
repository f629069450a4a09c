use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::binio;
use crate::error::{Error, Result};
use crate::learning::loss::ClassificationHead;
use crate::sparse::tokenize;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"M3EW";
pub const WEIGHTS_VERSION: u32 = 1;

pub const DEFAULT_FEATURE_DIM: usize = 4096;
pub const DEFAULT_EMBED_DIM: usize = 64;

/// Sparse feature vector: `(bucket, value)` sorted by bucket.
pub type Features = Vec<(usize, f64)>;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn bucket(seed: u64, token: &str, buckets: usize) -> usize {
    (fnv1a(seed, token.as_bytes()) % buckets as u64) as usize
}

/// Hashed bag of tokens, L2-normalized. Empty input gives no features.
pub fn hashed_features<'a, I>(tokens: I, seed: u64, buckets: usize) -> Features
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts = std::collections::BTreeMap::<usize, f64>::new();
    for tok in tokens {
        *counts.entry(bucket(seed, tok, buckets)).or_default() += 1.0;
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    counts.into_iter().map(|(b, c)| (b, c / norm)).collect()
}

pub fn text_features(text: &str, seed: u64, buckets: usize) -> Features {
    let tokens = tokenize(text);
    hashed_features(tokens.iter().map(String::as_str), seed, buckets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Query,
    Sentence,
}

/// Dual encoder: separate linear projections of hashed token features for
/// queries and sentences. Matrices are `feature_dim x embed_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDualEncoder {
    feature_dim: usize,
    embed_dim: usize,
    seed: u64,
    pub(crate) query: Vec<f64>,
    pub(crate) sentence: Vec<f64>,
}

impl LinearDualEncoder {
    /// Gaussian init with std `1/sqrt(embed_dim)`; `seed` also keys the hash.
    pub fn random(feature_dim: usize, embed_dim: usize, seed: u64) -> Result<Self> {
        check_dims(feature_dim, embed_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (embed_dim as f64).sqrt()).expect("valid std");
        let n = feature_dim * embed_dim;
        let query = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let sentence = (0..n).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self {
            feature_dim,
            embed_dim,
            seed,
            query,
            sentence,
        })
    }

    /// Both sides are the identity: embeddings equal the hashed features.
    pub fn identity(dim: usize, seed: u64) -> Result<Self> {
        check_dims(dim, dim)?;
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        Ok(Self {
            feature_dim: dim,
            embed_dim: dim,
            seed,
            query: eye.clone(),
            sentence: eye,
        })
    }

    pub fn from_parts(
        feature_dim: usize,
        embed_dim: usize,
        seed: u64,
        query: Vec<f64>,
        sentence: Vec<f64>,
    ) -> Result<Self> {
        check_dims(feature_dim, embed_dim)?;
        let n = feature_dim * embed_dim;
        if query.len() != n || sentence.len() != n {
            return Err(Error::Config(
                "weight matrices do not match dimensions".into(),
            ));
        }
        if query.iter().chain(&sentence).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder weight".into()));
        }
        Ok(Self {
            feature_dim,
            embed_dim,
            seed,
            query,
            sentence,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self, side: Side) -> &[f64] {
        match side {
            Side::Query => &self.query,
            Side::Sentence => &self.sentence,
        }
    }

    pub(crate) fn weights_mut(&mut self, side: Side) -> &mut [f64] {
        match side {
            Side::Query => &mut self.query,
            Side::Sentence => &mut self.sentence,
        }
    }

    pub fn features(&self, text: &str) -> Features {
        text_features(text, self.seed, self.feature_dim)
    }

    pub fn project(&self, side: Side, features: &Features) -> Vec<f64> {
        let w = self.weights(side);
        let d = self.embed_dim;
        let mut h = vec![0.0; d];
        for &(f, x) in features {
            for (hk, wk) in h.iter_mut().zip(&w[f * d..(f + 1) * d]) {
                *hk += x * wk;
            }
        }
        h
    }

    pub fn encode(&self, side: Side, text: &str) -> Vec<f64> {
        self.project(side, &self.features(text))
    }

    pub fn encode_f32(&self, side: Side, text: &str) -> Vec<f32> {
        self.encode(side, text)
            .into_iter()
            .map(|v| v as f32)
            .collect()
    }
}

fn check_dims(feature_dim: usize, embed_dim: usize) -> Result<()> {
    if feature_dim == 0 || embed_dim == 0 {
        return Err(Error::Config("encoder dimensions must be positive".into()));
    }
    Ok(())
}

/// Trainable parameters: the dual encoder plus the claim classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoderModel {
    pub encoder: LinearDualEncoder,
    pub head: ClassificationHead,
}

impl DualEncoderModel {
    pub fn new(encoder: LinearDualEncoder) -> Self {
        let head = ClassificationHead::zeros(encoder.embed_dim());
        Self { encoder, head }
    }

    /// `"M3EW" | version u32 | feature_dim u32 | embed_dim u32 | seed u64 |
    /// query f64[F*E] | sentence f64[F*E] | head f64[2E*3] | bias f64[3]`.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let e = &self.encoder;
        w.write_all(WEIGHTS_MAGIC)?;
        w.write_u32::<LittleEndian>(WEIGHTS_VERSION)?;
        w.write_u32::<LittleEndian>(e.feature_dim as u32)?;
        w.write_u32::<LittleEndian>(e.embed_dim as u32)?;
        w.write_u64::<LittleEndian>(e.seed)?;
        for v in e
            .query
            .iter()
            .chain(&e.sentence)
            .chain(&self.head.weights)
            .chain(&self.head.bias)
        {
            w.write_f64::<LittleEndian>(*v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        binio::expect_magic(&mut r, WEIGHTS_MAGIC)?;
        let version = binio::read_u32(&mut r)?;
        if version != WEIGHTS_VERSION {
            return Err(Error::Format(format!("unsupported M3EW version {version}")));
        }
        let feature_dim = binio::read_u32(&mut r)? as usize;
        let embed_dim = binio::read_u32(&mut r)? as usize;
        let seed = binio::read_u64(&mut r)?;
        let mut read_n =
            |n: usize| -> Result<Vec<f64>> { (0..n).map(|_| binio::read_f64(&mut r)).collect() };
        let query = read_n(feature_dim * embed_dim)?;
        let sentence = read_n(feature_dim * embed_dim)?;
        let weights = read_n(2 * embed_dim * 3)?;
        let bias = read_n(3)?;
        binio::expect_eof(&mut r)?;
        let encoder = LinearDualEncoder::from_parts(feature_dim, embed_dim, seed, query, sentence)
            .map_err(|e| Error::Format(e.to_string()))?;
        let head = ClassificationHead::from_parts(embed_dim, weights, [bias[0], bias[1], bias[2]])?;
        Ok(Self { encoder, head })
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
