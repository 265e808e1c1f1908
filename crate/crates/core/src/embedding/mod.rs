//! Fixed-dimension embeddings, cosine similarity and exact maximum inner
//! product search.
//!
//! Storage is `f32`; every similarity is accumulated in `f64` in index order,
//! so the same pair of vectors always produces the same score bits no matter
//! which search path computed it.

mod format;
mod provider;

use indexmap::IndexMap;

pub use format::{EmbFormat, load_embeddings, read_emb_binary, read_emb_jsonl, write_emb_binary, write_emb_jsonl, write_embeddings};
pub use provider::{
    EmbedRequest, EmbedResponse, HashingEncoder, HttpEncoder, TextEncoder, TextRecord,
    read_texts, write_texts,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f32>);

impl Vector {
    /// Rejects empty input and non-finite components. Zero vectors are allowed
    /// here; stores and similarity reject them.
    pub fn new(components: Vec<f32>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyVector);
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { id: None });
        }
        Ok(Self(components))
    }

    pub fn from_f64(components: &[f64]) -> Result<Self> {
        Self::new(components.iter().map(|&c| c as f32).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(self.0.iter().map(|&c| f64::from(c)))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| f64::from(c)).collect()
    }
}

impl TryFrom<Vec<f32>> for Vector {
    type Error = Error;

    fn try_from(value: Vec<f32>) -> Result<Self> {
        Self::new(value)
    }
}

fn norm(components: impl Iterator<Item = f64>) -> f64 {
    components.map(|c| c * c).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cosine_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    (dot / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64> {
    let a = Prepared::from_vector(a)?;
    let b = Prepared::from_vector(b)?;
    a.cosine(&b)
}

/// A vector widened to `f64` with its norm cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    components: Vec<f64>,
    norm: f64,
}

impl Prepared {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyVector);
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { id: None });
        }
        let norm = norm(components.iter().copied());
        if norm == 0.0 {
            return Err(Error::ZeroNorm { id: None });
        }
        Ok(Self { components, norm })
    }

    pub fn from_vector(v: &Vector) -> Result<Self> {
        Self::new(v.to_f64())
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn cosine(&self, other: &Prepared) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(self.cosine_unchecked(other))
    }

    pub(crate) fn cosine_unchecked(&self, other: &Prepared) -> f64 {
        cosine_from_parts(dot(&self.components, &other.components), self.norm, other.norm)
    }
}

/// Vectors of one namespace. Insertion order is kept so files roundtrip.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    namespace: String,
    dim: usize,
    entries: IndexMap<String, Vector>,
}

impl EmbeddingStore {
    pub fn new(namespace: impl Into<String>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyVector);
        }
        Ok(Self {
            namespace: namespace.into(),
            dim,
            entries: IndexMap::new(),
        })
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Vector> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Vector)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Adds a vector. Fails on wrong length, duplicate id or zero norm.
    pub fn insert(&mut self, id: impl Into<String>, vector: Vector) -> Result<()> {
        let id = id.into();
        if vector.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.dim(),
            });
        }
        if vector.norm() == 0.0 {
            return Err(Error::ZeroNorm { id: Some(id) });
        }
        if self.entries.contains_key(&id) {
            return Err(Error::InvalidArgument(format!(
                "duplicate id `{id}` in namespace `{}`",
                self.namespace
            )));
        }
        self.entries.insert(id, vector);
        Ok(())
    }

    /// Widens every entry, optionally through a transform (e.g. an adapter).
    pub fn prepare_with<F>(&self, mut transform: F) -> Result<PreparedSpace>
    where
        F: FnMut(&Vector) -> Result<Vec<f64>>,
    {
        let mut entries = IndexMap::with_capacity(self.entries.len());
        for (id, v) in &self.entries {
            let p = Prepared::new(transform(v)?).map_err(|e| match e {
                Error::ZeroNorm { .. } => Error::ZeroNorm {
                    id: Some(id.clone()),
                },
                other => other,
            })?;
            entries.insert(id.clone(), p);
        }
        Ok(PreparedSpace {
            namespace: self.namespace.clone(),
            entries,
        })
    }

    pub fn prepare(&self) -> Result<PreparedSpace> {
        self.prepare_with(|v| Ok(v.to_f64()))
    }
}

#[derive(Debug, Clone)]
pub struct PreparedSpace {
    namespace: String,
    entries: IndexMap<String, Prepared>,
}

impl PreparedSpace {
    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn get(&self, id: &str) -> Option<&Prepared> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.values().next().map(Prepared::dim)
    }

    /// Exhaustive search: top `k` ids by descending cosine, ties by ascending id.
    pub fn search(&self, query: &Prepared, k: usize) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if self.entries.is_empty() {
            return Err(Error::Empty("embedding store"));
        }
        let mut scored = Vec::with_capacity(self.entries.len());
        for (id, v) in &self.entries {
            scored.push((id.clone(), query.cosine(v)?));
        }
        rank(&mut scored);
        scored.truncate(k);
        Ok(scored)
    }
}

/// Sorts by descending score, then ascending id.
pub fn rank(scored: &mut [(String, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// Exact maximum inner product search over a store under cosine similarity.
pub fn flat_mips(query: &Vector, store: &EmbeddingStore, k: usize) -> Result<Vec<(String, f64)>> {
    if store.is_empty() {
        return Err(Error::Empty("embedding store"));
    }
    if query.dim() != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: store.dim(),
            actual: query.dim(),
        });
    }
    let q = Prepared::from_vector(query)?;
    store.prepare()?.search(&q, k)
}
