//! Embedding storage and exact maximum-inner-product search.
//!
//! Vectors are stored as `f32`; dot products accumulate in `f64`. Ranking is
//! descending score with ties broken by ascending id, independent of how the
//! scan is split across threads.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use rayon::prelude::*;

use crate::binio;
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"M3EB";
pub const EMBEDDING_VERSION: u32 = 1;

/// Stores above this many scalars are scored in parallel.
const PARALLEL_SCAN: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    positions: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            positions: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.positions.get(id).map(|&i| self.vector(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), self.vector(i)))
    }

    pub fn push(&mut self, id: impl Into<String>, vector: &[f32]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::Dimension {
                index: None,
                expected: self.dim,
                got: vector.len(),
            });
        }
        if let Some(bad) = vector.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "component {bad} of embedding {id:?}"
            )));
        }
        if self.positions.contains_key(&id) {
            return Err(Error::Format(format!("duplicate embedding id {id:?}")));
        }
        self.positions.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    /// `"M3EB" | version u32 | dim u32 | count u64 | ids (u32 len + UTF-8)
    /// | count x dim f32`, all little-endian, rows in insertion order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let dim =
            u32::try_from(self.dim).map_err(|_| Error::Config("dimension exceeds u32".into()))?;
        let io = |e| Error::Format(format!("write failed: {e}"));
        w.write_all(EMBEDDING_MAGIC).map_err(io)?;
        w.write_u32::<LittleEndian>(EMBEDDING_VERSION).map_err(io)?;
        w.write_u32::<LittleEndian>(dim).map_err(io)?;
        w.write_u64::<LittleEndian>(self.ids.len() as u64)
            .map_err(io)?;
        for id in &self.ids {
            binio::write_str(&mut w, id).map_err(io)?;
        }
        for &v in &self.data {
            w.write_f32::<LittleEndian>(v).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        binio::expect_magic(&mut r, EMBEDDING_MAGIC)?;
        let version = binio::read_u32(&mut r)?;
        if version != EMBEDDING_VERSION {
            return Err(Error::Format(format!("unsupported M3EB version {version}")));
        }
        let dim = binio::read_u32(&mut r)? as usize;
        if dim == 0 {
            return Err(Error::Format("embedding dimension is zero".into()));
        }
        let count = binio::read_len(&mut r)?;
        let mut ids = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            ids.push(binio::read_string(&mut r)?);
        }
        let mut store = Self::new(dim);
        let mut row = vec![0f32; dim];
        for id in ids {
            for v in row.iter_mut() {
                *v = binio::read_f32(&mut r)?;
            }
            store
                .push(id, &row)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        binio::expect_eof(&mut r)?;
        Ok(store)
    }
}

pub fn save_embeddings(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    store.write_to(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::read_from(BufReader::new(file))
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Exact flat inner-product index over an [`EmbeddingStore`].
#[derive(Debug, Clone)]
pub struct DenseIndex {
    store: EmbeddingStore,
}

impl DenseIndex {
    pub fn new(store: EmbeddingStore) -> Result<Self> {
        if store.is_empty() || store.dim() == 0 {
            return Err(Error::Build("dense index needs a non-empty store".into()));
        }
        Ok(Self { store })
    }

    pub fn store(&self) -> &EmbeddingStore {
        &self.store
    }

    fn scores(&self, query: &[f32]) -> Vec<f64> {
        let dim = self.store.dim;
        if self.store.data.len() >= PARALLEL_SCAN {
            self.store
                .data
                .par_chunks(dim)
                .map(|row| dot(row, query))
                .collect()
        } else {
            self.store
                .data
                .chunks(dim)
                .map(|row| dot(row, query))
                .collect()
        }
    }

    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<(String, f64)>> {
        if query.len() != self.store.dim {
            return Err(Error::Dimension {
                index: None,
                expected: self.store.dim,
                got: query.len(),
            });
        }
        let scores = self.scores(query);
        let ids = &self.store.ids;
        let order = |&a: &usize, &b: &usize| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| ids[a].cmp(&ids[b]))
        };
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        let k = k.min(idx.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < idx.len() {
            idx.select_nth_unstable_by(k - 1, order);
            idx.truncate(k);
        }
        idx.sort_unstable_by(order);
        Ok(idx
            .into_iter()
            .map(|i| (ids[i].clone(), scores[i]))
            .collect())
    }

    /// One ranked list per query, in query order.
    pub fn batch_search(&self, queries: &[Vec<f32>], k: usize) -> Result<Vec<Vec<(String, f64)>>> {
        if let Some((i, q)) = queries
            .iter()
            .enumerate()
            .find(|(_, q)| q.len() != self.store.dim)
        {
            return Err(Error::Dimension {
                index: Some(i),
                expected: self.store.dim,
                got: q.len(),
            });
        }
        queries.par_iter().map(|q| self.search(q, k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis() -> DenseIndex {
        let mut s = EmbeddingStore::new(3);
        s.push("a", &[1.0, 0.0, 0.0]).unwrap();
        s.push("b", &[0.0, 1.0, 0.0]).unwrap();
        s.push("c", &[0.0, 0.0, 1.0]).unwrap();
        DenseIndex::new(s).unwrap()
    }

    #[test]
    fn basis_query() {
        let idx = basis();
        assert_eq!(
            idx.search(&[0.0, 1.0, 0.0], 1).unwrap(),
            vec![("b".to_string(), 1.0)]
        );
    }

    #[test]
    fn identical_vectors_tie_by_id() {
        let mut s = EmbeddingStore::new(2);
        s.push("y", &[0.5, 0.5]).unwrap();
        s.push("x", &[0.5, 0.5]).unwrap();
        let idx = DenseIndex::new(s).unwrap();
        let ids: Vec<_> = idx
            .search(&[1.0, 1.0], 2)
            .unwrap()
            .into_iter()
            .map(|h| h.0)
            .collect();
        assert_eq!(ids, ["x", "y"]);
    }

    #[test]
    fn batch_matches_single_and_names_bad_query() {
        let idx = basis();
        let qs = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.2, 0.1]];
        let batch = idx.batch_search(&qs, 2).unwrap();
        assert_eq!(batch[0], idx.search(&qs[0], 2).unwrap());
        assert_eq!(batch[1], idx.search(&qs[1], 2).unwrap());
        assert!(idx.batch_search(&[], 2).unwrap().is_empty());
        let bad = vec![vec![0.0, 1.0, 0.0], vec![1.0]];
        assert!(matches!(
            idx.batch_search(&bad, 1),
            Err(Error::Dimension { index: Some(1), .. })
        ));
        assert!(matches!(
            idx.search(&[1.0], 1),
            Err(Error::Dimension { index: None, .. })
        ));
    }

    #[test]
    fn k_larger_than_store() {
        assert_eq!(basis().search(&[1.0, 1.0, 1.0], 10).unwrap().len(), 3);
    }

    #[test]
    fn store_round_trip_and_errors() {
        let idx = basis();
        let mut buf = Vec::new();
        idx.store().write_to(&mut buf).unwrap();
        let back = EmbeddingStore::read_from(buf.as_slice()).unwrap();
        assert_eq!(&back, idx.store());

        let mut bad = buf.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            EmbeddingStore::read_from(bad.as_slice()),
            Err(Error::Format(_))
        ));
        assert!(EmbeddingStore::read_from(&buf[..buf.len() - 2]).is_err());
        assert!(EmbeddingStore::new(0).write_to(Vec::new()).is_err());

        let mut s = EmbeddingStore::new(1);
        s.push("a", &[1.0]).unwrap();
        assert!(s.push("a", &[2.0]).is_err());
        assert!(s.push("b", &[f32::NAN]).is_err());
        assert!(DenseIndex::new(EmbeddingStore::new(4)).is_err());
    }
}
