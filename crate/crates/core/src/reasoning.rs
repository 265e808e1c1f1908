//! Hierarchical beam search over the taxonomy ("group reasoning").
//!
//! The beam starts at the synthetic root. On each declared level every child
//! of every beam node is scored against the query in that level's embedding
//! space, and the `k` best (ties by ascending code) become the next beam. A
//! beam node without children is carried forward as its own candidate, so
//! shallow leaves still compete on the final level. Scores are not summed
//! across levels: the final ranking is the last level's candidate list.
//!
//! Every node is scored in the space of its own level (namespace plus optional
//! adapter), which lets levels use different encoders and dimensions.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::Adapter;
use crate::embedding::{EmbeddingStore, Prepared, Vector, rank};
use crate::error::{Error, Result};
use crate::taxonomy::{ROOT, Taxonomy};

pub const DEFAULT_FINAL_LIST_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub k: usize,
    /// Taxonomy level -> embedding namespace.
    pub level_namespaces: BTreeMap<u32, String>,
    pub final_list_size: usize,
}

impl BeamConfig {
    /// Every level of `tax` mapped to the same namespace.
    pub fn shared(tax: &Taxonomy, namespace: &str, k: usize) -> Self {
        Self {
            k,
            level_namespaces: tax
                .levels()
                .iter()
                .map(|&l| (l, namespace.to_string()))
                .collect(),
            final_list_size: DEFAULT_FINAL_LIST_SIZE,
        }
    }

    /// Level `l` mapped to namespace `level{l}`.
    pub fn per_level(tax: &Taxonomy, k: usize) -> Self {
        Self {
            k,
            level_namespaces: tax
                .levels()
                .iter()
                .map(|&l| (l, format!("level{l}")))
                .collect(),
            final_list_size: DEFAULT_FINAL_LIST_SIZE,
        }
    }

    pub fn with_final_list_size(mut self, n: usize) -> Self {
        self.final_list_size = n;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// Exhaustive search over every leaf.
    Flat,
    /// Level-by-level beam search.
    Group,
}

/// Query embedding: one base vector for all levels, or one per level.
#[derive(Debug, Clone)]
pub enum QueryInput {
    Shared(Vector),
    PerLevel(BTreeMap<u32, Vector>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCode {
    pub code: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub id: String,
    pub ranked_leaves: Vec<ScoredCode>,
    pub similarity_count: usize,
    pub visited_per_level: Vec<usize>,
    pub beam_trace: Vec<Vec<String>>,
}

impl ClassificationResult {
    pub fn top(&self) -> Option<&ScoredCode> {
        self.ranked_leaves.first()
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.ranked_leaves.iter().map(|s| s.code.as_str())
    }
}

#[derive(Debug)]
struct LevelSpace {
    namespace: String,
    dim: usize,
    adapter: Option<Adapter>,
    nodes: HashMap<String, Prepared>,
}

impl LevelSpace {
    fn prepare_query(&self, v: &Vector) -> Result<Prepared> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.dim(),
            });
        }
        match &self.adapter {
            Some(a) => a.prepare(v),
            None => Prepared::from_vector(v),
        }
    }
}

/// Scoring state for one taxonomy: every node widened (and adapted) once.
#[derive(Debug)]
pub struct GroupReasoner<'a> {
    tax: &'a Taxonomy,
    config: BeamConfig,
    spaces: Vec<LevelSpace>,
    level_pos: HashMap<u32, usize>,
}

impl<'a> GroupReasoner<'a> {
    /// `adapters` is keyed by namespace; a level uses the adapter of its
    /// namespace when one is present.
    pub fn new(
        tax: &'a Taxonomy,
        stores: &HashMap<String, EmbeddingStore>,
        adapters: &HashMap<String, Adapter>,
        config: BeamConfig,
    ) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::InvalidArgument("beam width k must be at least 1".into()));
        }
        if config.final_list_size == 0 {
            return Err(Error::InvalidArgument("final list size must be at least 1".into()));
        }
        let mut spaces = Vec::with_capacity(tax.depth());
        let mut level_pos = HashMap::new();
        for (pos, &level) in tax.levels().iter().enumerate() {
            let namespace = config
                .level_namespaces
                .get(&level)
                .ok_or(Error::MissingLevel(level))?;
            let store = stores.get(namespace).ok_or_else(|| {
                Error::Config(format!("namespace `{namespace}` for level {level} is not loaded"))
            })?;
            let adapter = adapters.get(namespace).cloned();
            if let Some(a) = &adapter
                && a.dim() != store.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: store.dim(),
                        actual: a.dim(),
                    });
                }
            let mut nodes = HashMap::new();
            for node in tax.nodes_at_level(level) {
                let v = store.get(&node.code).ok_or_else(|| Error::MissingEmbedding {
                    code: node.code.clone(),
                    namespace: namespace.clone(),
                })?;
                let p = match &adapter {
                    Some(a) => a.prepare(v),
                    None => Prepared::from_vector(v),
                }
                .map_err(|e| match e {
                    Error::ZeroNorm { .. } => Error::ZeroNorm {
                        id: Some(node.code.clone()),
                    },
                    other => other,
                })?;
                nodes.insert(node.code.clone(), p);
            }
            spaces.push(LevelSpace {
                namespace: namespace.clone(),
                dim: store.dim(),
                adapter,
                nodes,
            });
            level_pos.insert(level, pos);
        }
        Ok(Self {
            tax,
            config,
            spaces,
            level_pos,
        })
    }

    pub fn config(&self) -> &BeamConfig {
        &self.config
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        self.tax
    }

    /// Changes the beam width without re-preparing the node vectors.
    pub fn set_k(&mut self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::InvalidArgument("beam width k must be at least 1".into()));
        }
        self.config.k = k;
        Ok(())
    }

    pub fn namespaces(&self) -> impl Iterator<Item = &str> {
        self.spaces.iter().map(|s| s.namespace.as_str())
    }

    fn prepare_query(&self, query: &QueryInput) -> Result<Vec<Prepared>> {
        self.tax
            .levels()
            .iter()
            .zip(&self.spaces)
            .map(|(level, space)| match query {
                QueryInput::Shared(v) => space.prepare_query(v),
                QueryInput::PerLevel(map) => {
                    space.prepare_query(map.get(level).ok_or(Error::MissingLevel(*level))?)
                }
            })
            .collect()
    }

    fn score(&self, queries: &[Prepared], code: &str) -> Result<f64> {
        let level = self.tax.node(code)?.level;
        let pos = self.level_pos[&level];
        let node = self.spaces[pos]
            .nodes
            .get(code)
            .expect("every node is prepared at construction");
        Ok(queries[pos].cosine_unchecked(node))
    }

    pub fn classify(&self, id: &str, query: &QueryInput, mode: SearchMode) -> Result<ClassificationResult> {
        match mode {
            SearchMode::Flat => self.flat(id, query),
            SearchMode::Group => self.group(id, query),
        }
    }

    /// Beam search with the configured `k`.
    pub fn group(&self, id: &str, query: &QueryInput) -> Result<ClassificationResult> {
        let queries = self.prepare_query(query)?;
        let mut beam = vec![ROOT.to_string()];
        let mut similarity_count = 0;
        let mut visited_per_level = Vec::with_capacity(self.spaces.len());
        let mut beam_trace = Vec::with_capacity(self.spaces.len());
        let mut last = Vec::new();

        for _ in 0..self.tax.depth() {
            let mut candidates: Vec<(String, f64)> = Vec::new();
            for node in &beam {
                let children = self.tax.child_codes(node)?;
                if children.is_empty() {
                    if node != ROOT {
                        candidates.push((node.clone(), 0.0));
                    }
                } else {
                    candidates.extend(children.iter().map(|c| (c.clone(), 0.0)));
                }
            }
            for (code, score) in &mut candidates {
                *score = self.score(&queries, code)?;
            }
            similarity_count += candidates.len();
            visited_per_level.push(candidates.len());
            rank(&mut candidates);
            beam = candidates
                .iter()
                .take(self.config.k)
                .map(|(c, _)| c.clone())
                .collect();
            beam_trace.push(beam.clone());
            last = candidates;
        }

        last.truncate(self.config.final_list_size);
        Ok(ClassificationResult {
            id: id.to_string(),
            ranked_leaves: last
                .into_iter()
                .map(|(code, score)| ScoredCode { code, score })
                .collect(),
            similarity_count,
            visited_per_level,
            beam_trace,
        })
    }

    /// Scores every leaf, each in its own level's space.
    pub fn flat(&self, id: &str, query: &QueryInput) -> Result<ClassificationResult> {
        let queries = self.prepare_query(query)?;
        let mut scored = self
            .tax
            .leaves()
            .map(|n| Ok((n.code.clone(), self.score(&queries, &n.code)?)))
            .collect::<Result<Vec<_>>>()?;
        let similarity_count = scored.len();
        rank(&mut scored);
        scored.truncate(self.config.final_list_size);
        Ok(ClassificationResult {
            id: id.to_string(),
            ranked_leaves: scored
                .into_iter()
                .map(|(code, score)| ScoredCode { code, score })
                .collect(),
            similarity_count,
            visited_per_level: vec![similarity_count],
            beam_trace: Vec::new(),
        })
    }

    /// Classifies independently per query, in parallel, keeping input order.
    /// Failures are collected with the query id attached.
    pub fn classify_batch(&self, queries: &[(String, QueryInput)], mode: SearchMode) -> BatchOutcome {
        let outcomes: Vec<Result<ClassificationResult>> = queries
            .par_iter()
            .map(|(id, q)| {
                self.classify(id, q, mode).map_err(|e| Error::Query {
                    id: id.clone(),
                    source: Box::new(e),
                })
            })
            .collect();
        let mut batch = BatchOutcome::default();
        for o in outcomes {
            match o {
                Ok(r) => {
                    batch.total_similarity_count += r.similarity_count;
                    batch.results.push(r);
                }
                Err(e) => batch.errors.push(e),
            }
        }
        batch
    }
}

#[derive(Debug, Default)]
pub struct BatchOutcome {
    pub results: Vec<ClassificationResult>,
    pub errors: Vec<Error>,
    pub total_similarity_count: usize,
}

/// One-shot beam search. Builds a [`GroupReasoner`] and runs a single query.
pub fn group_reason(
    query: &QueryInput,
    tax: &Taxonomy,
    stores: &HashMap<String, EmbeddingStore>,
    adapters: &HashMap<String, Adapter>,
    config: &BeamConfig,
) -> Result<ClassificationResult> {
    GroupReasoner::new(tax, stores, adapters, config.clone())?.group("query", query)
}

/// Line format of the results export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: String,
    pub leaves: Vec<ScoredCode>,
    pub similarity_count: usize,
    pub beam: Vec<Vec<String>>,
}

impl From<&ClassificationResult> for ResultRecord {
    fn from(r: &ClassificationResult) -> Self {
        Self {
            id: r.id.clone(),
            leaves: r.ranked_leaves.clone(),
            similarity_count: r.similarity_count,
            beam: r.beam_trace.clone(),
        }
    }
}

pub fn write_results<W: Write>(mut w: W, results: &[ClassificationResult]) -> Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, &ResultRecord::from(r))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_results<R: BufRead>(r: R) -> Result<Vec<ResultRecord>> {
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
    use crate::taxonomy::TaxonomyNode;

    fn node(code: &str, level: u32) -> TaxonomyNode {
        TaxonomyNode {
            code: code.into(),
            level,
            title: code.into(),
            description: code.into(),
            parent_code: None,
        }
    }

    fn v(c: &[f32]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    /// b = 3, d = 2. Parents and leaves placed on the unit circle by angle.
    fn greedy_fixture() -> (Taxonomy, HashMap<String, EmbeddingStore>) {
        let mut nodes = vec![node("1", 1), node("2", 1), node("3", 1)];
        for p in ["1", "2", "3"] {
            for c in ["1", "2", "3"] {
                nodes.push(node(&format!("{p}{c}"), 2));
            }
        }
        let tax = Taxonomy::from_nodes(nodes).unwrap();
        let angle = |deg: f32| {
            let r = deg.to_radians();
            v(&[r.cos(), r.sin()])
        };
        let mut store = EmbeddingStore::new("s", 2).unwrap();
        for (code, deg) in [("1", 0.0), ("2", 60.0), ("3", 120.0)] {
            store.insert(code, angle(deg)).unwrap();
        }
        // leaf 31 sits closest to the query overall but under a weak parent
        let leaves = [
            ("11", 40.0),
            ("12", -30.0),
            ("13", 70.0),
            ("21", 45.0),
            ("22", 90.0),
            ("23", 100.0),
            ("31", 21.0),
            ("32", 150.0),
            ("33", 170.0),
        ];
        for (code, deg) in leaves {
            store.insert(code, angle(deg)).unwrap();
        }
        let mut stores = HashMap::new();
        stores.insert("s".to_string(), store);
        (tax, stores)
    }

    #[test]
    fn greedy_path_with_k1() {
        let (tax, stores) = greedy_fixture();
        // query at 20 degrees: level-1 winner is "1" (20 deg away); under it
        // "11" (20 deg away) beats "12" (50) and "13" (50). Global best leaf "31"
        // (1 deg) is pruned.
        let q = QueryInput::Shared(v(&[20f32.to_radians().cos(), 20f32.to_radians().sin()]));
        let cfg = BeamConfig::shared(&tax, "s", 1);
        let r = group_reason(&q, &tax, &stores, &HashMap::new(), &cfg).unwrap();
        assert_eq!(r.top().unwrap().code, "11");
        assert_eq!(r.beam_trace, vec![vec!["1".to_string()], vec!["11".to_string()]]);
        assert_eq!(r.similarity_count, 6);
        assert_eq!(r.visited_per_level, vec![3, 3]);

        let wide = cfg.with_k(9);
        let r = group_reason(&q, &tax, &stores, &HashMap::new(), &wide).unwrap();
        assert_eq!(r.top().unwrap().code, "31");
        assert_eq!(r.similarity_count, 12);
    }

    #[test]
    fn shallow_leaf_is_carried_forward() {
        let tax = Taxonomy::from_nodes(vec![node("1", 1), node("2", 1), node("21", 2)]).unwrap();
        let mut store = EmbeddingStore::new("s", 2).unwrap();
        store.insert("1", v(&[1.0, 0.0])).unwrap();
        store.insert("2", v(&[0.0, 1.0])).unwrap();
        store.insert("21", v(&[0.6, 0.8])).unwrap();
        let stores = HashMap::from([("s".to_string(), store)]);
        let cfg = BeamConfig::shared(&tax, "s", 2);
        let r = group_reason(&QueryInput::Shared(v(&[1.0, 0.1])), &tax, &stores, &HashMap::new(), &cfg)
            .unwrap();
        let codes: Vec<&str> = r.codes().collect();
        assert_eq!(codes, ["1", "21"]);
        assert_eq!(r.visited_per_level, vec![2, 2]);
    }

    #[test]
    fn missing_embedding_and_level_are_reported() {
        let (tax, mut stores) = greedy_fixture();
        let cfg = BeamConfig::shared(&tax, "s", 1);
        let mut partial = EmbeddingStore::new("s", 2).unwrap();
        for (id, vec) in stores["s"].iter().filter(|(id, _)| *id != "22") {
            partial.insert(id, vec.clone()).unwrap();
        }
        stores.insert("s".into(), partial);
        match GroupReasoner::new(&tax, &stores, &HashMap::new(), cfg.clone()) {
            Err(Error::MissingEmbedding { code, namespace }) => {
                assert_eq!(code, "22");
                assert_eq!(namespace, "s");
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut no_level = cfg;
        no_level.level_namespaces.remove(&2);
        assert!(matches!(
            GroupReasoner::new(&tax, &stores, &HashMap::new(), no_level),
            Err(Error::MissingLevel(2))
        ));
    }

    #[test]
    fn batch_preserves_order_and_collects_errors() {
        let (tax, stores) = greedy_fixture();
        let cfg = BeamConfig::shared(&tax, "s", 1);
        let reasoner = GroupReasoner::new(&tax, &stores, &HashMap::new(), cfg).unwrap();
        let queries = vec![
            ("a".to_string(), QueryInput::Shared(v(&[1.0, 0.0]))),
            ("bad".to_string(), QueryInput::Shared(v(&[1.0, 0.0, 0.0]))),
            ("c".to_string(), QueryInput::Shared(v(&[0.0, 1.0]))),
        ];
        let out = reasoner.classify_batch(&queries, SearchMode::Group);
        assert_eq!(out.results.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["a", "c"]);
        assert_eq!(out.errors.len(), 1);
        assert!(matches!(&out.errors[0], Error::Query { id, .. } if id == "bad"));
        assert_eq!(out.total_similarity_count, 12);

        let single = reasoner.group("a", &queries[0].1).unwrap();
        assert_eq!(out.results[0], single);
        assert!(reasoner.classify_batch(&[], SearchMode::Group).results.is_empty());
    }

    #[test]
    fn results_roundtrip() {
        let (tax, stores) = greedy_fixture();
        let reasoner =
            GroupReasoner::new(&tax, &stores, &HashMap::new(), BeamConfig::shared(&tax, "s", 2)).unwrap();
        let r = reasoner.group("q1", &QueryInput::Shared(v(&[0.3, 0.7]))).unwrap();
        let mut buf = Vec::new();
        write_results(&mut buf, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"id\":\"q1\",\"leaves\":[{\"code\":"));
        let back = read_results(buf.as_slice()).unwrap();
        assert_eq!(back[0], ResultRecord::from(&r));
    }
}
