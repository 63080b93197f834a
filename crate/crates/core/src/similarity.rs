//! Phrase similarity kernels.
//!
//! Two kernels are provided: the mean of per-order n-gram Jaccard scores over
//! normalized tokens, and cosine similarity over precomputed sentence
//! embeddings. [`sim`] dispatches between them.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Query;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NGramConfig {
    pub max_order: usize,
}

impl NGramConfig {
    pub fn new(max_order: usize) -> Result<Self> {
        if max_order == 0 {
            return Err(Error::Config("n-gram max order must be at least 1".into()));
        }
        Ok(Self { max_order })
    }
}

impl Default for NGramConfig {
    fn default() -> Self {
        Self { max_order: 3 }
    }
}

/// Set of contiguous `order`-token windows.
///
/// Each gram is stored as its tokens joined by a single space. Tokens come
/// from normalized text and never contain spaces, so the encoding is
/// injective for a fixed order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramSet {
    order: usize,
    grams: HashSet<String>,
}

impl NGramSet {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn contains(&self, gram: &[&str]) -> bool {
        gram.len() == self.order && self.grams.contains(&gram.join(" "))
    }

    pub fn insert(&mut self, gram: &[&str]) -> bool {
        assert_eq!(gram.len(), self.order, "gram length must equal set order");
        self.grams.insert(gram.join(" "))
    }

    /// Grams as token vectors, in unspecified order.
    pub fn grams(&self) -> impl Iterator<Item = Vec<&str>> {
        self.grams.iter().map(|g| g.split(' ').collect())
    }

    fn intersection_len(&self, other: &NGramSet) -> usize {
        let (small, large) = if self.grams.len() <= other.grams.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.grams.iter().filter(|g| large.grams.contains(*g)).count()
    }
}

/// Splits normalized text on single spaces.
pub fn tokenize(norm_text: &str) -> Vec<&str> {
    norm_text.split(' ').filter(|t| !t.is_empty()).collect()
}

pub fn ngram_set(tokens: &[&str], n: usize) -> NGramSet {
    assert!(n >= 1, "n-gram order must be at least 1");
    let grams = if tokens.len() < n {
        HashSet::new()
    } else {
        tokens.windows(n).map(|w| w.join(" ")).collect()
    };
    NGramSet { order: n, grams }
}

/// |s1 ∩ s2| / |s1 ∪ s2|, with two empty sets scoring 0.
pub fn jaccard(s1: &NGramSet, s2: &NGramSet) -> Result<f64> {
    if s1.order != s2.order {
        return Err(Error::OrderMismatch(s1.order, s2.order));
    }
    Ok(jaccard_unchecked(s1, s2))
}

fn jaccard_unchecked(s1: &NGramSet, s2: &NGramSet) -> f64 {
    let inter = s1.intersection_len(s2);
    let union = s1.len() + s2.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// N-gram sets of orders `1..=max_order` for one text.
#[derive(Debug, Clone)]
pub struct NGramProfile {
    sets: Vec<NGramSet>,
}

impl NGramProfile {
    pub fn new(norm_text: &str, cfg: NGramConfig) -> Self {
        let tokens = tokenize(norm_text);
        Self {
            sets: (1..=cfg.max_order).map(|n| ngram_set(&tokens, n)).collect(),
        }
    }

    /// Mean per-order Jaccard. Orders are summed from 1 upwards and the sum is
    /// divided by the fixed order count, empty orders included.
    pub fn similarity(&self, other: &NGramProfile) -> f64 {
        debug_assert_eq!(self.sets.len(), other.sets.len());
        let total: f64 = self
            .sets
            .iter()
            .zip(&other.sets)
            .map(|(a, b)| jaccard_unchecked(a, b))
            .sum();
        total / self.sets.len() as f64
    }
}

pub fn ngram_similarity(a: &Query, b: &Query, cfg: NGramConfig) -> f64 {
    let (a, b) = canonical(a, b);
    NGramProfile::new(&a.norm_text, cfg).similarity(&NGramProfile::new(&b.norm_text, cfg))
}

fn canonical<'q>(a: &'q Query, b: &'q Query) -> (&'q Query, &'q Query) {
    if b.id < a.id {
        (b, a)
    } else {
        (a, b)
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

fn cosine_with_norms(u: &[f32], nu: f64, v: &[f32], nv: f64) -> f64 {
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Cosine similarity, accumulated in f64.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(cosine_with_norms(u, nu, v, nv))
}

/// Dense vectors keyed by query id.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    matrix: Matrix,
    ids: Vec<String>,
    rows: HashMap<String, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    row: usize,
    id: String,
}

impl EmbeddingStore {
    /// Builds a store from a matrix and its row ids (in row order).
    pub fn new(matrix: Matrix, ids: Vec<String>) -> Result<Self> {
        if ids.len() != matrix.rows {
            return Err(Error::Index(format!(
                "index has {} ids but matrix header count is {}",
                ids.len(),
                matrix.rows
            )));
        }
        if let Some(v) = matrix.data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Matrix(format!("non-finite value {v}")));
        }
        let mut rows = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if rows.insert(id.clone(), i).is_some() {
                return Err(Error::Index(format!("duplicate id `{id}`")));
            }
        }
        Ok(Self { matrix, ids, rows })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim
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

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.rows.get(id).map(|&r| self.matrix.row(r))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn write_matrix<W: Write>(&self, out: W) -> std::io::Result<()> {
        self.matrix.write(out)
    }

    pub fn write_index<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (row, id) in self.ids.iter().enumerate() {
            serde_json::to_writer(
                &mut out,
                &IndexEntry {
                    row,
                    id: id.clone(),
                },
            )?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Loads an embedding matrix and its JSONL row index.
pub fn load_embeddings(matrix_path: &Path, index_path: &Path) -> Result<EmbeddingStore> {
    let file = File::open(matrix_path).map_err(|e| Error::io(matrix_path, e))?;
    let matrix = Matrix::read(BufReader::new(file))?;

    let file = File::open(index_path).map_err(|e| Error::io(index_path, e))?;
    let mut ids = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(index_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: IndexEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: index_path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        if entry.row != ids.len() {
            return Err(Error::Parse {
                path: index_path.to_path_buf(),
                line: idx + 1,
                message: format!("expected row {} but found {}", ids.len(), entry.row),
            });
        }
        ids.push(entry.id);
    }
    EmbeddingStore::new(matrix, ids)
}

#[derive(Debug, Clone, Copy)]
pub enum SimilarityKind<'a> {
    NGram(NGramConfig),
    EmbeddingCosine(&'a EmbeddingStore),
}

impl SimilarityKind<'_> {
    pub fn name(&self) -> String {
        match self {
            SimilarityKind::NGram(cfg) => format!("ngram(N={})", cfg.max_order),
            SimilarityKind::EmbeddingCosine(store) => format!("embedding_cosine(dim={})", store.dim()),
        }
    }
}

/// Similarity between two queries under `kind`.
pub fn sim(a: &Query, b: &Query, kind: &SimilarityKind<'_>) -> Result<f64> {
    let (a, b) = canonical(a, b);
    match kind {
        SimilarityKind::NGram(cfg) => Ok(ngram_similarity(a, b, *cfg)),
        SimilarityKind::EmbeddingCosine(store) => {
            let u = store
                .get(&a.id)
                .ok_or_else(|| Error::MissingEmbedding(a.id.clone()))?;
            let v = store
                .get(&b.id)
                .ok_or_else(|| Error::MissingEmbedding(b.id.clone()))?;
            cosine(u, v)
        }
    }
}

/// A query with its similarity features precomputed, so repeated pairwise
/// scoring does not re-tokenize or re-normalize.
#[derive(Debug, Clone)]
pub enum Prepared<'a> {
    NGram(NGramProfile),
    Vector { v: &'a [f32], norm: f64 },
}

impl<'a> Prepared<'a> {
    pub fn new(q: &Query, kind: &SimilarityKind<'a>) -> Result<Self> {
        match kind {
            SimilarityKind::NGram(cfg) => Ok(Prepared::NGram(NGramProfile::new(&q.norm_text, *cfg))),
            SimilarityKind::EmbeddingCosine(store) => {
                let v = store
                    .get(&q.id)
                    .ok_or_else(|| Error::MissingEmbedding(q.id.clone()))?;
                let n = norm(v);
                if n == 0.0 {
                    return Err(Error::ZeroNorm);
                }
                Ok(Prepared::Vector { v, norm: n })
            }
        }
    }

    /// Same value as [`sim`] on the underlying queries.
    pub fn similarity(&self, other: &Prepared<'_>) -> f64 {
        match (self, other) {
            (Prepared::NGram(a), Prepared::NGram(b)) => a.similarity(b),
            (Prepared::Vector { v: u, norm: nu }, Prepared::Vector { v, norm: nv }) => {
                cosine_with_norms(u, *nu, v, *nv)
            }
            _ => panic!("prepared queries of different kinds"),
        }
    }
}
