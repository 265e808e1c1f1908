//! Glue between text, encoders, stores and adapters.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::adapter::{self, Adapter, TrainConfig};
use crate::corpus::{EnterpriseRecord, Preprocessor};
use crate::embedding::{EmbeddingStore, TextEncoder};
use crate::error::{Error, Result};
use crate::reasoning::QueryInput;
use crate::taxonomy::{Taxonomy, TaxonomyNode};

pub const QUERY_NAMESPACE: &str = "queries";

pub fn level_namespace(level: u32) -> String {
    format!("level{level}")
}

/// Text embedded for a class document: title followed by description.
pub fn node_text(node: &TaxonomyNode) -> String {
    if node.description.is_empty() {
        node.title.clone()
    } else {
        format!("{} {}", node.title, node.description)
    }
}

/// Optional preprocessing applied before encoding.
pub fn prepare_text(text: &str, pre: Option<&Preprocessor>) -> String {
    match pre {
        Some(p) => p.apply(text),
        None => text.to_string(),
    }
}

fn build_store(
    namespace: &str,
    ids: Vec<String>,
    texts: Vec<String>,
    encoder: &dyn TextEncoder,
) -> Result<EmbeddingStore> {
    let vectors = encoder.encode(&texts)?;
    let Some(first) = vectors.first() else {
        return Err(Error::Empty("encoded texts"));
    };
    let mut store = EmbeddingStore::new(namespace, first.dim())?;
    for (id, v) in ids.into_iter().zip(vectors) {
        store.insert(id, v)?;
    }
    Ok(store)
}

/// One store per level, named by [`level_namespace`].
pub fn encode_taxonomy(
    tax: &Taxonomy,
    encoder: &dyn TextEncoder,
    pre: Option<&Preprocessor>,
) -> Result<HashMap<String, EmbeddingStore>> {
    let mut stores = HashMap::new();
    for &level in tax.levels() {
        let nodes: Vec<&TaxonomyNode> = tax.nodes_at_level(level).collect();
        let ids = nodes.iter().map(|n| n.code.clone()).collect();
        let texts = nodes
            .iter()
            .map(|n| prepare_text(&node_text(n), pre))
            .collect();
        let ns = level_namespace(level);
        stores.insert(ns.clone(), build_store(&ns, ids, texts, encoder)?);
    }
    Ok(stores)
}

/// Enterprise descriptions under [`QUERY_NAMESPACE`].
pub fn encode_enterprises(
    records: &[EnterpriseRecord],
    encoder: &dyn TextEncoder,
    pre: Option<&Preprocessor>,
) -> Result<EmbeddingStore> {
    build_store(
        QUERY_NAMESPACE,
        records.iter().map(|r| r.id.clone()).collect(),
        records
            .iter()
            .map(|r| prepare_text(&r.description, pre))
            .collect(),
        encoder,
    )
}

/// `(query id, ancestor code on level)` for every label of every record.
pub fn level_pairs(
    records: &[&EnterpriseRecord],
    tax: &Taxonomy,
    level: u32,
) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for r in records {
        let mut seen = BTreeSet::new();
        for label in &r.naics_codes {
            if let Some(code) = tax.ancestor_at_level(label, level)?
                && seen.insert(code.clone()) {
                    pairs.push((r.id.clone(), code));
                }
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone)]
pub struct NamespaceTraining {
    pub namespace: String,
    pub levels: Vec<u32>,
    pub adapter: Adapter,
    pub history: Vec<f64>,
    pub pairs: usize,
    pub deferred_duplicates: usize,
}

/// Trains one adapter per namespace. Levels sharing a namespace pool their
/// pairs into one adapter; each namespace gets its own derived seed.
pub fn train_adapters(
    tax: &Taxonomy,
    records: &[&EnterpriseRecord],
    query_store: &EmbeddingStore,
    stores: &HashMap<String, EmbeddingStore>,
    level_namespaces: &BTreeMap<u32, String>,
    config: &TrainConfig,
) -> Result<Vec<NamespaceTraining>> {
    let mut grouped: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for &level in tax.levels() {
        let ns = level_namespaces.get(&level).ok_or(Error::MissingLevel(level))?;
        grouped.entry(ns.as_str()).or_default().push(level);
    }
    let mut out = Vec::new();
    for (ns, levels) in grouped {
        let store = stores
            .get(ns)
            .ok_or_else(|| Error::Config(format!("namespace `{ns}` is not loaded")))?;
        let mut pairs = Vec::new();
        for &level in &levels {
            pairs.extend(level_pairs(records, tax, level)?);
        }
        if pairs.is_empty() {
            log::warn!("no training pairs for namespace `{ns}`; skipping its adapter");
            continue;
        }
        let cfg = TrainConfig {
            seed: crate::rng::derive_seed(config.seed, ns),
            ..*config
        };
        let outcome = adapter::train(&pairs, query_store, store, &cfg)?;
        out.push(NamespaceTraining {
            namespace: ns.to_string(),
            levels,
            adapter: outcome.adapter,
            history: outcome.history,
            pairs: pairs.len(),
            deferred_duplicates: outcome.deferred_duplicates,
        });
    }
    Ok(out)
}

/// Shared-vector query inputs for the given ids.
pub fn queries_from_store(store: &EmbeddingStore, ids: &[&str]) -> Result<Vec<(String, QueryInput)>> {
    ids.iter()
        .map(|id| {
            store
                .get(id)
                .map(|v| (id.to_string(), QueryInput::Shared(v.clone())))
                .ok_or_else(|| Error::MissingEmbedding {
                    code: id.to_string(),
                    namespace: store.namespace().to_string(),
                })
        })
        .collect()
}
