//! Sources of text embeddings.
//!
//! The engine never runs a transformer itself. Vectors come from files written
//! by an external exporter, from an HTTP service speaking the `/embed`
//! protocol, or from [`HashingEncoder`], a deterministic bag-of-words encoder
//! used for fixtures and offline experiments.
//!
//! Wire protocol: `POST {base}/embed` with `{"texts": [...]}`, answered by
//! `{"dim": n, "vectors": [[...], ...]}` in request order.

use std::io::{BufRead, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::Vector;
use crate::error::{Error, Result};
use crate::rng::{fnv1a, splitmix64_mix};

pub trait TextEncoder {
    /// Output dimension, if known before the first call.
    fn dim(&self) -> Option<usize>;

    fn encode(&self, texts: &[String]) -> Result<Vec<Vector>>;
}

/// Signed feature hashing over whitespace tokens, two buckets per token.
#[derive(Debug, Clone)]
pub struct HashingEncoder {
    dim: usize,
    seed: u64,
}

impl HashingEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("encoder dim must be positive".into()));
        }
        Ok(Self { dim, seed })
    }

    pub fn encode_one(&self, text: &str) -> Result<Vector> {
        let mut acc = vec![0f32; self.dim];
        for token in text.split_whitespace() {
            let h = fnv1a(token.as_bytes()) ^ self.seed;
            for round in 0..2u64 {
                let mixed = splitmix64_mix(h.wrapping_add(round));
                let bucket = (mixed % self.dim as u64) as usize;
                let sign = if mixed >> 63 == 0 { 1.0 } else { -1.0 };
                acc[bucket] += sign;
            }
        }
        Vector::new(acc)
    }
}

impl TextEncoder for HashingEncoder {
    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn encode(&self, texts: &[String]) -> Result<Vec<Vector>> {
        texts.iter().map(|t| self.encode_one(t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

impl EmbedResponse {
    /// Checks the response against the request it answers.
    pub fn into_vectors(self, expected: usize) -> Result<Vec<Vector>> {
        if self.vectors.len() != expected {
            return Err(Error::Provider(format!(
                "asked for {expected} vectors, got {}",
                self.vectors.len()
            )));
        }
        self.vectors
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                if v.len() != self.dim {
                    return Err(Error::RecordDimension {
                        index: i,
                        expected: self.dim,
                        actual: v.len(),
                    });
                }
                Vector::new(v)
            })
            .collect()
    }
}

/// Client for an embedding service speaking the `/embed` protocol.
#[derive(Debug, Clone)]
pub struct HttpEncoder {
    endpoint: String,
    client: reqwest::blocking::Client,
    batch_size: usize,
}

impl HttpEncoder {
    /// `base_url` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base_url: &str) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| Error::Provider(e.to_string()))?;
        Ok(Self {
            endpoint: format!("{}/embed", base_url.trim_end_matches('/')),
            client,
            batch_size: 256,
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn call(&self, texts: &[String]) -> Result<Vec<Vector>> {
        let request = EmbedRequest {
            texts: texts.to_vec(),
        };
        let response = self
            .client
            .post(&self.endpoint)
            .json(&request)
            .send()
            .map_err(|e| Error::Provider(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(Error::Provider(format!("HTTP {status}: {body}")));
        }
        let body: EmbedResponse = response
            .json()
            .map_err(|e| Error::Provider(format!("bad response body: {e}")))?;
        body.into_vectors(texts.len())
    }
}

impl TextEncoder for HttpEncoder {
    fn dim(&self) -> Option<usize> {
        None
    }

    fn encode(&self, texts: &[String]) -> Result<Vec<Vector>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            out.extend(self.call(chunk)?);
        }
        if let Some(first) = out.first() {
            let dim = first.dim();
            if let Some(bad) = out.iter().position(|v| v.dim() != dim) {
                return Err(Error::RecordDimension {
                    index: bad,
                    expected: dim,
                    actual: out[bad].dim(),
                });
            }
        }
        Ok(out)
    }
}

/// Input line for an embedding export job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
}

pub fn write_texts<W: Write>(mut w: W, records: &[TextRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_texts<R: BufRead>(r: R) -> Result<Vec<TextRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine;

    #[test]
    fn hashing_is_deterministic_and_order_free() {
        let enc = HashingEncoder::new(32, 3).unwrap();
        let a = enc.encode_one("steel mill products").unwrap();
        let b = enc.encode_one("products steel mill").unwrap();
        assert_eq!(a, b);
        assert!((cosine(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let other = HashingEncoder::new(32, 4).unwrap();
        assert_ne!(other.encode_one("steel mill products").unwrap(), a);
    }

    #[test]
    fn response_validation() {
        let ok = EmbedResponse {
            dim: 2,
            vectors: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        assert_eq!(ok.clone().into_vectors(2).unwrap().len(), 2);
        assert!(ok.into_vectors(3).is_err());
        let ragged = EmbedResponse {
            dim: 2,
            vectors: vec![vec![1.0, 0.0], vec![0.0]],
        };
        assert!(matches!(
            ragged.into_vectors(2),
            Err(Error::RecordDimension { index: 1, .. })
        ));
    }

    #[test]
    fn texts_roundtrip() {
        let recs = vec![
            TextRecord {
                id: "311".into(),
                text: "Food manufacturing".into(),
            },
            TextRecord {
                id: "e1".into(),
                text: "We bake bread".into(),
            },
        ];
        let mut buf = Vec::new();
        write_texts(&mut buf, &recs).unwrap();
        assert_eq!(read_texts(buf.as_slice()).unwrap(), recs);
    }
}
