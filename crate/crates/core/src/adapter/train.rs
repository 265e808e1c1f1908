//! Plain gradient descent on the MNR loss.
//!
//! Batches are formed once from a seeded shuffle of the pairs. A pair whose
//! document already sits in the batch being filled is deferred to the next
//! batch, so no batch carries a duplicate document and no pair is dropped.
//! Each epoch visits every batch once, in a freshly shuffled order, and the
//! recorded epoch loss is the pair-weighted mean of the batch losses, summed in
//! batch-index order.

use std::collections::{HashSet, VecDeque};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Adapter;
use super::loss::loss_and_gradient;
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Multiplier on cosine similarities before the softmax.
    pub scale: f64,
    pub seed: u64,
    /// Standard deviation of the Gaussian noise added to the identity at init.
    pub init_noise: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: 32,
            scale: 1.0,
            seed: 0,
            init_noise: 0.01,
        }
    }
}

impl TrainConfig {
    /// Learning rate used for full encoder fine-tuning (2e-5, 100 epochs).
    /// Far too small for a linear adapter; kept for reference runs.
    pub fn encoder_finetune_preset() -> Self {
        Self {
            learning_rate: 2e-5,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale {} must be positive", self.scale)));
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return Err(Error::InvalidArgument("init noise must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub adapter: Adapter,
    /// One mean loss per epoch.
    pub history: Vec<f64>,
    pub batches: usize,
    /// Pairs pushed to a later batch because their document was already present.
    pub deferred_duplicates: usize,
}

fn form_batches(docs: &[&str], batch_size: usize, seed: u64) -> (Vec<Vec<usize>>, usize) {
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut shuffle_rng = rng::seeded(rng::derive_seed(seed, "adapter-batches"));
    rng::shuffle(&mut shuffle_rng, &mut order);

    let mut queue: VecDeque<usize> = order.into();
    let mut batches = Vec::new();
    let mut deferred = 0;
    while !queue.is_empty() {
        let mut batch = Vec::with_capacity(batch_size);
        let mut seen = HashSet::new();
        let mut skipped = Vec::new();
        while batch.len() < batch_size {
            let Some(i) = queue.pop_front() else { break };
            if seen.insert(docs[i]) {
                batch.push(i);
            } else {
                skipped.push(i);
            }
        }
        deferred += skipped.len();
        for i in skipped.into_iter().rev() {
            queue.push_front(i);
        }
        batches.push(batch);
    }
    (batches, deferred)
}

/// Trains one adapter on `(query_id, doc_id)` pairs. Both stores must share
/// a dimension; the adapter takes the document store's namespace.
pub fn train(
    pairs: &[(String, String)],
    query_store: &EmbeddingStore,
    doc_store: &EmbeddingStore,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("training pairs"));
    }
    if query_store.dim() != doc_store.dim() {
        return Err(Error::DimensionMismatch {
            expected: doc_store.dim(),
            actual: query_store.dim(),
        });
    }
    if config.batch_size < 2 {
        log::warn!("batch size {} leaves no in-batch negatives", config.batch_size);
    }
    let dim = doc_store.dim();

    let lookup = |store: &EmbeddingStore, id: &str| -> Result<Vec<f64>> {
        store
            .get(id)
            .map(|v| v.to_f64())
            .ok_or_else(|| Error::MissingEmbedding {
                code: id.to_string(),
                namespace: store.namespace().to_string(),
            })
    };
    let queries = pairs
        .iter()
        .map(|(q, _)| lookup(query_store, q))
        .collect::<Result<Vec<_>>>()?;
    let documents = pairs
        .iter()
        .map(|(_, d)| lookup(doc_store, d))
        .collect::<Result<Vec<_>>>()?;
    let doc_ids: Vec<&str> = pairs.iter().map(|(_, d)| d.as_str()).collect();

    let (batches, deferred_duplicates) = form_batches(&doc_ids, config.batch_size, config.seed);
    if deferred_duplicates > 0 {
        log::warn!("{deferred_duplicates} pair(s) deferred to avoid duplicate documents in a batch");
    }

    let mut init_rng = rng::seeded(rng::derive_seed(config.seed, "adapter-init"));
    let noise = Normal::new(0.0, config.init_noise)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut adapter = Adapter::identity(dim, doc_store.namespace());
    for w in adapter.weights_mut() {
        *w += noise.sample(&mut init_rng);
    }

    let mut order_rng = rng::seeded(rng::derive_seed(config.seed, "adapter-epochs"));
    let mut batch_order: Vec<usize> = (0..batches.len()).collect();
    let mut batch_loss = vec![0.0; batches.len()];
    let mut history = Vec::with_capacity(config.epochs);
    let mut q_buf = Vec::with_capacity(config.batch_size);
    let mut d_buf = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        rng::shuffle(&mut order_rng, &mut batch_order);
        for &b in &batch_order {
            q_buf.clear();
            d_buf.clear();
            for &i in &batches[b] {
                q_buf.push(queries[i].clone());
                d_buf.push(documents[i].clone());
            }
            let step = loss_and_gradient(&q_buf, &d_buf, &adapter, config.scale)?;
            if !step.loss.is_finite() || step.gradient.iter().any(|g| !g.is_finite()) {
                let max_w = adapter.weights().iter().fold(0.0f64, |m, w| m.max(w.abs()));
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: format!("loss {}, max |W| {max_w:e}", step.loss),
                });
            }
            batch_loss[b] = step.loss;
            if config.learning_rate != 0.0 {
                for (w, g) in adapter.weights_mut().iter_mut().zip(&step.gradient) {
                    *w -= config.learning_rate * g;
                }
            }
        }
        let weighted: f64 = batches
            .iter()
            .zip(&batch_loss)
            .map(|(batch, l)| l * batch.len() as f64)
            .sum();
        history.push(weighted / pairs.len() as f64);
    }

    Ok(TrainOutcome {
        adapter,
        history,
        batches: batches.len(),
        deferred_duplicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_never_repeat_a_document() {
        let docs: Vec<String> = (0..60).map(|i| format!("d{}", i % 7)).collect();
        let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
        let (batches, deferred) = form_batches(&refs, 8, 3);
        let mut covered: Vec<usize> = batches.iter().flatten().copied().collect();
        covered.sort_unstable();
        assert_eq!(covered, (0..60).collect::<Vec<_>>());
        for b in &batches {
            let set: HashSet<&str> = b.iter().map(|&i| refs[i]).collect();
            assert_eq!(set.len(), b.len());
            assert!(b.len() <= 8);
        }
        assert!(deferred > 0);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig::encoder_finetune_preset().validate().is_ok());
    }
}
