//! Trainable linear adapters over frozen embeddings.
//!
//! An adapter is a square matrix `W` applied to both queries and class
//! documents (a shared, siamese map). Training minimises the multiple
//! negatives ranking loss, see [`loss`].
//!
//! File layout (`ADP1`, little-endian):
//!
//! ```text
//! "ADP1" | version u8 = 1 | dim u32 | dim*dim x f32 (row-major) | ns_len u16 | namespace utf-8
//! ```

pub mod gradcheck;
pub mod loss;
pub mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::embedding::{Prepared, Vector};
use crate::error::{Error, Result};

pub use gradcheck::{GradCheckReport, finite_diff_check};
pub use loss::{LossGradient, LossReport, mnr_gradient, mnr_loss, mnr_loss_report};
pub use train::{TrainConfig, TrainOutcome, train};

const ADP_MAGIC: &[u8; 4] = b"ADP1";
const ADP_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Adapter {
    dim: usize,
    weights: Vec<f64>,
    namespace: String,
}

impl Adapter {
    pub fn identity(dim: usize, namespace: impl Into<String>) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Self {
            dim,
            weights,
            namespace: namespace.into(),
        }
    }

    /// Builds from a row-major `dim x dim` buffer.
    pub fn from_weights(dim: usize, weights: Vec<f64>, namespace: impl Into<String>) -> Result<Self> {
        if dim == 0 || weights.len() != dim * dim {
            return Err(Error::SizeMismatch(format!(
                "{} weights for a {dim}x{dim} adapter",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite { id: None });
        }
        Ok(Self {
            dim,
            weights,
            namespace: namespace.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Direct access for optimisers and tests. Nothing re-validates finiteness.
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    /// `W * v` in `f64`.
    pub fn apply_slice(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        Ok(self.apply_unchecked(v))
    }

    pub(crate) fn apply_unchecked(&self, v: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(v).map(|(w, x)| w * x).sum())
            .collect()
    }

    pub fn apply(&self, v: &Vector) -> Result<Vector> {
        Vector::from_f64(&self.apply_slice(&v.to_f64())?)
    }

    /// Applies the adapter and widens, keeping full precision for scoring.
    pub fn prepare(&self, v: &Vector) -> Result<Prepared> {
        Prepared::new(self.apply_slice(&v.to_f64())?)
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let eof = |what: &'static str| {
            move |e: std::io::Error| {
                if e.kind() == ErrorKind::UnexpectedEof {
                    Error::Truncated(what.into())
                } else {
                    Error::IoBare(e)
                }
            }
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(eof("adapter header"))?;
        if &magic != ADP_MAGIC {
            return Err(Error::BadHeader(format!("magic {magic:02x?}, expected \"ADP1\"")));
        }
        let version = r.read_u8().map_err(eof("adapter header"))?;
        if version != ADP_VERSION {
            return Err(Error::BadHeader(format!("unsupported adapter version {version}")));
        }
        let dim = r.read_u32::<LittleEndian>().map_err(eof("adapter header"))? as usize;
        let mut raw = vec![0f32; dim * dim];
        r.read_f32_into::<LittleEndian>(&mut raw)
            .map_err(eof("adapter weights"))?;
        let ns_len = r.read_u16::<LittleEndian>().map_err(eof("adapter namespace"))?;
        let mut ns = vec![0u8; ns_len as usize];
        r.read_exact(&mut ns).map_err(eof("adapter namespace"))?;
        let namespace = String::from_utf8(ns)
            .map_err(|_| Error::BadHeader("adapter namespace is not UTF-8".into()))?;
        Self::from_weights(dim, raw.into_iter().map(f64::from).collect(), namespace)
    }

    /// Weights are narrowed to `f32` on disk.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(ADP_MAGIC)?;
        w.write_u8(ADP_VERSION)?;
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        for &x in &self.weights {
            w.write_f32::<LittleEndian>(x as f32)?;
        }
        let ns = self.namespace.as_bytes();
        let len = u16::try_from(ns.len())
            .map_err(|_| Error::InvalidArgument("adapter namespace too long".into()))?;
        w.write_u16::<LittleEndian>(len)?;
        w.write_all(ns)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}
