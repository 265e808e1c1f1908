//! Seeded synthetic taxonomies, embeddings and labelled query sets.
//!
//! Codes are built NAICS style: each level appends a fixed-width decimal
//! segment to the parent code, so the prefix rule recovers every parent.

use std::collections::{BTreeSet, HashMap};

use rand_distr::{Distribution, StandardNormal};

use crate::embedding::{EmbeddingStore, Vector};
use crate::error::{Error, Result};
use crate::pipeline::level_namespace;
use crate::rng::{self, DetRng};
use crate::taxonomy::{Taxonomy, TaxonomyNode};

fn digits(max_index: usize) -> usize {
    max_index.max(1).to_string().len()
}

fn node(code: String, level: u32) -> TaxonomyNode {
    TaxonomyNode {
        title: format!("class {code}"),
        description: String::new(),
        code,
        level,
        parent_code: None,
    }
}

/// Builds a tree level by level. `children(depth, parent)` returns the number
/// of children; `max_branching[depth]` fixes the segment width.
fn build_tree(max_branching: &[usize], mut children: impl FnMut(usize, &str) -> usize) -> Result<Taxonomy> {
    if max_branching.is_empty() || max_branching.contains(&0) {
        return Err(Error::InvalidArgument("branching factors must be positive".into()));
    }
    let mut nodes = Vec::new();
    let mut frontier = vec![String::new()];
    let mut level = 0u32;
    for (depth, &max_b) in max_branching.iter().enumerate() {
        let width = digits(max_b - 1);
        level += width as u32;
        let mut next = Vec::new();
        for parent in &frontier {
            let n = children(depth, parent).min(max_b);
            for i in 0..n {
                let code = format!("{parent}{i:0width$}");
                nodes.push(node(code.clone(), level));
                next.push(code);
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Taxonomy::from_nodes(nodes)
}

/// Every node on depth `i` has exactly `branching[i]` children.
pub fn uniform_tree(branching: &[usize]) -> Result<Taxonomy> {
    build_tree(branching, |d, _| branching[d])
}

/// Random branching in `1..=max_branching` per node. A non-root node stops
/// early (becomes a leaf above the last level) with probability `stop`.
pub fn random_tree(rng: &mut DetRng, depth: usize, max_branching: usize, stop: f64) -> Result<Taxonomy> {
    if !(0.0..1.0).contains(&stop) {
        return Err(Error::InvalidArgument(format!("stop probability {stop} outside [0, 1)")));
    }
    let shape = vec![max_branching; depth];
    build_tree(&shape, |_, parent| {
        if !parent.is_empty() && rng::unit(rng) < stop {
            0
        } else {
            1 + rng::below(rng, max_branching)
        }
    })
}

pub fn gaussian(rng: &mut DetRng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Uniform random direction.
pub fn random_unit(rng: &mut DetRng, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, dim);
        if v.iter().any(|x| *x != 0.0) {
            return normalize(v);
        }
    }
}

/// Node vectors where each child is its parent's direction plus `spread`
/// times a random direction, renormalised. `spread = 0` is not allowed since
/// siblings would coincide. Vectors are produced in code order.
pub fn hierarchical_vectors(tax: &Taxonomy, dim: usize, spread: f64, rng: &mut DetRng) -> Result<HashMap<String, Vec<f64>>> {
    if dim == 0 || !(spread > 0.0) {
        return Err(Error::InvalidArgument("need dim > 0 and spread > 0".into()));
    }
    let mut out: HashMap<String, Vec<f64>> = HashMap::new();
    for &level in tax.levels() {
        for n in tax.nodes_at_level(level) {
            let noise = random_unit(rng, dim);
            let v = match n.parent_code.as_deref().and_then(|p| out.get(p)) {
                Some(parent) => normalize(parent.iter().zip(&noise).map(|(p, e)| p + spread * e).collect()),
                None => noise,
            };
            out.insert(n.code.clone(), v);
        }
    }
    Ok(out)
}

/// Splits node vectors into one store per level (`level{l}`).
pub fn per_level_stores(tax: &Taxonomy, vectors: &HashMap<String, Vec<f64>>) -> Result<HashMap<String, EmbeddingStore>> {
    let mut stores = HashMap::new();
    for &level in tax.levels() {
        let ns = level_namespace(level);
        let mut store = EmbeddingStore::new(&ns, vectors.values().next().map_or(0, Vec::len))?;
        for n in tax.nodes_at_level(level) {
            let v = vectors.get(&n.code).ok_or_else(|| Error::MissingEmbedding {
                code: n.code.clone(),
                namespace: ns.clone(),
            })?;
            store.insert(n.code.clone(), Vector::from_f64(v)?)?;
        }
        stores.insert(ns, store);
    }
    Ok(stores)
}

/// All node vectors in one store.
pub fn shared_store(tax: &Taxonomy, vectors: &HashMap<String, Vec<f64>>, namespace: &str) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new(namespace, vectors.values().next().map_or(0, Vec::len))?;
    for n in tax.nodes() {
        store.insert(n.code.clone(), Vector::from_f64(&vectors[&n.code])?)?;
    }
    Ok(store)
}

/// Parameters of a query set whose queries are leaf documents displaced
/// along a few shared nuisance directions, plus small isotropic noise.
/// Cosine similarity alone is misled by the nuisance component; a linear map
/// that suppresses those directions recovers the leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSpec {
    pub branching: Vec<usize>,
    pub dim: usize,
    pub nuisance_dim: usize,
    pub queries_per_leaf: usize,
    /// Standard deviation of each nuisance coordinate.
    pub nuisance_scale: f64,
    /// Standard deviation of each isotropic coordinate.
    pub noise_scale: f64,
    pub child_spread: f64,
    pub seed: u64,
}

impl Default for NuisanceSpec {
    fn default() -> Self {
        Self {
            branching: vec![20, 3, 3],
            dim: 32,
            nuisance_dim: 8,
            queries_per_leaf: 5,
            nuisance_scale: 0.8,
            noise_scale: 0.05,
            child_spread: 0.8,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NuisanceTask {
    pub taxonomy: Taxonomy,
    /// One store per level, `level{l}`.
    pub stores: HashMap<String, EmbeddingStore>,
    pub queries: EmbeddingStore,
    /// `(query id, leaf code)` in generation order.
    pub labels: Vec<(String, String)>,
}

impl NuisanceTask {
    pub fn generate(spec: &NuisanceSpec) -> Result<Self> {
        if spec.nuisance_dim >= spec.dim {
            return Err(Error::InvalidArgument("nuisance subspace must be smaller than dim".into()));
        }
        let taxonomy = uniform_tree(&spec.branching)?;
        let mut tree_rng = rng::seeded(rng::derive_seed(spec.seed, "tree"));
        let vectors = hierarchical_vectors(&taxonomy, spec.dim, spec.child_spread, &mut tree_rng)?;
        let stores = per_level_stores(&taxonomy, &vectors)?;

        let mut q_rng = rng::seeded(rng::derive_seed(spec.seed, "queries"));
        let basis = orthonormal(&mut q_rng, spec.nuisance_dim, spec.dim);
        let mut queries = EmbeddingStore::new("queries", spec.dim)?;
        let mut labels = Vec::new();
        for leaf in taxonomy.leaves() {
            let doc = &vectors[&leaf.code];
            for i in 0..spec.queries_per_leaf {
                let mut q = doc.clone();
                for b in &basis {
                    let z: f64 = StandardNormal.sample(&mut q_rng);
                    q.iter_mut().zip(b).for_each(|(x, u)| *x += spec.nuisance_scale * z * u);
                }
                for x in q.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut q_rng);
                    *x += spec.noise_scale * z;
                }
                let id = format!("q{}_{i}", leaf.code);
                queries.insert(id.clone(), Vector::from_f64(&q)?)?;
                labels.push((id, leaf.code.clone()));
            }
        }
        Ok(Self {
            taxonomy,
            stores,
            queries,
            labels,
        })
    }

    pub fn truths(&self) -> HashMap<String, BTreeSet<String>> {
        self.labels
            .iter()
            .map(|(q, c)| (q.clone(), BTreeSet::from([c.clone()])))
            .collect()
    }

    /// Training pairs against the ancestor on `level`.
    pub fn level_pairs(&self, ids: &BTreeSet<&str>, level: u32) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for (q, leaf) in &self.labels {
            if ids.contains(q.as_str())
                && let Some(code) = self.taxonomy.ancestor_at_level(leaf, level)? {
                    out.push((q.clone(), code));
                }
        }
        Ok(out)
    }
}

/// Gram-Schmidt on Gaussian draws.
fn orthonormal(rng: &mut DetRng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian(rng, dim);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}
