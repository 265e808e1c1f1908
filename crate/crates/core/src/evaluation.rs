//! Top-k accuracy, beam-width sweeps and ablation runs.
//!
//! Acc@k is a hit rate: a query counts when any of its ground-truth labels is
//! among its first `k` returned codes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::time::Instant;

use crate::adapter::{Adapter, TrainConfig};
use crate::corpus::{EnterpriseRecord, Preprocessor};
use crate::embedding::TextEncoder;
use crate::error::{Error, Result};
use crate::pipeline;
use crate::reasoning::{BeamConfig, ClassificationResult, GroupReasoner, QueryInput, SearchMode};
use crate::taxonomy::Taxonomy;

pub const REPORT_KS: [usize; 4] = [1, 3, 5, 10];

pub type Truths = HashMap<String, BTreeSet<String>>;

/// 1-based rank of the first truth label in the result, if any.
pub fn hit_rank(result: &ClassificationResult, truth: &BTreeSet<String>) -> Option<usize> {
    result.codes().position(|c| truth.contains(c)).map(|p| p + 1)
}

fn truth_of<'t>(truths: &'t Truths, id: &str) -> Result<&'t BTreeSet<String>> {
    truths
        .get(id)
        .ok_or_else(|| Error::InvalidArgument(format!("no ground truth for `{id}`")))
}

pub fn acc_at_k(results: &[ClassificationResult], truths: &Truths, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if results.is_empty() {
        return Err(Error::Empty("result list"));
    }
    let mut hits = 0usize;
    for r in results {
        if hit_rank(r, truth_of(truths, &r.id)?).is_some_and(|rank| rank <= k) {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / results.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub acc_at: BTreeMap<usize, f64>,
    pub hit_ranks: Vec<Option<usize>>,
    pub mean_similarity_count: f64,
    /// Wall time of classification; informational only.
    pub seconds: f64,
}

impl EvalOutcome {
    pub fn acc(&self, k: usize) -> f64 {
        self.acc_at.get(&k).copied().unwrap_or(f64::NAN)
    }
}

pub fn evaluate(results: &[ClassificationResult], truths: &Truths, ks: &[usize], seconds: f64) -> Result<EvalOutcome> {
    let mut hit_ranks = Vec::with_capacity(results.len());
    for r in results {
        hit_ranks.push(hit_rank(r, truth_of(truths, &r.id)?));
    }
    let acc_at = ks
        .iter()
        .map(|&k| Ok((k, acc_at_k(results, truths, k)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let mean_similarity_count = if results.is_empty() {
        0.0
    } else {
        results.iter().map(|r| r.similarity_count as f64).sum::<f64>() / results.len() as f64
    };
    Ok(EvalOutcome {
        acc_at,
        hit_ranks,
        mean_similarity_count,
        seconds,
    })
}

/// A labelled query ready for classification.
#[derive(Debug, Clone)]
pub struct LabeledQuery {
    pub id: String,
    pub query: QueryInput,
    pub truths: BTreeSet<String>,
}

fn run(reasoner: &GroupReasoner<'_>, queries: &[LabeledQuery], mode: SearchMode) -> Result<EvalOutcome> {
    let batch: Vec<(String, QueryInput)> = queries.iter().map(|q| (q.id.clone(), q.query.clone())).collect();
    let truths: Truths = queries.iter().map(|q| (q.id.clone(), q.truths.clone())).collect();
    let start = Instant::now();
    let outcome = reasoner.classify_batch(&batch, mode);
    let seconds = start.elapsed().as_secs_f64();
    if let Some(e) = outcome.errors.into_iter().next() {
        return Err(e);
    }
    evaluate(&outcome.results, &truths, &REPORT_KS, seconds)
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub config: String,
    /// Beam width; `None` for exhaustive flat search.
    pub k: Option<usize>,
    pub outcome: EvalOutcome,
}

pub fn evaluate_flat(reasoner: &GroupReasoner<'_>, queries: &[LabeledQuery], label: &str) -> Result<EvalRow> {
    Ok(EvalRow {
        config: label.to_string(),
        k: None,
        outcome: run(reasoner, queries, SearchMode::Flat)?,
    })
}

/// Group reasoning at each beam width in `ks`.
pub fn k_sweep(reasoner: &mut GroupReasoner<'_>, queries: &[LabeledQuery], ks: &[usize], label: &str) -> Result<Vec<EvalRow>> {
    let original = reasoner.config().k;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        reasoner.set_k(k)?;
        let outcome = run(reasoner, queries, SearchMode::Group);
        if outcome.is_err() {
            reasoner.set_k(original)?;
        }
        rows.push(EvalRow {
            config: label.to_string(),
            k: Some(k),
            outcome: outcome?,
        });
    }
    reasoner.set_k(original)?;
    Ok(rows)
}

/// CSV `config,k,acc1,acc3,acc5,acc10,mean_sims,seconds`. `k` is empty for
/// flat rows. With `timed = false` the seconds column is left empty so the
/// file is reproducible byte for byte.
pub fn write_eval_csv<W: Write>(w: W, rows: &[EvalRow], timed: bool) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["config", "k", "acc1", "acc3", "acc5", "acc10", "mean_sims", "seconds"])?;
    for r in rows {
        let o = &r.outcome;
        csv.write_record([
            r.config.clone(),
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            format!("{:.4}", o.acc(1)),
            format!("{:.4}", o.acc(3)),
            format!("{:.4}", o.acc(5)),
            format!("{:.4}", o.acc(10)),
            format!("{:.4}", o.mean_similarity_count),
            if timed { format!("{:.6}", o.seconds) } else { String::new() },
        ])?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdapterChoice {
    /// No adapter: base embeddings as exported.
    ZeroShot,
    /// Per-level adapters trained on the training records.
    Trained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub name: String,
    pub adapter: AdapterChoice,
    pub preprocess: bool,
    pub search: SearchMode,
}

/// Rows in fixed order: zero-shot, + preprocessing, + trained adapter,
/// + group reasoning.
pub fn standard_ablation() -> Vec<AblationConfig> {
    vec![
        AblationConfig {
            name: "zero-shot".into(),
            adapter: AdapterChoice::ZeroShot,
            preprocess: false,
            search: SearchMode::Flat,
        },
        AblationConfig {
            name: "+ preprocess".into(),
            adapter: AdapterChoice::ZeroShot,
            preprocess: true,
            search: SearchMode::Flat,
        },
        AblationConfig {
            name: "+ trained adapter".into(),
            adapter: AdapterChoice::Trained,
            preprocess: true,
            search: SearchMode::Flat,
        },
        AblationConfig {
            name: "+ group reasoning".into(),
            adapter: AdapterChoice::Trained,
            preprocess: true,
            search: SearchMode::Group,
        },
    ]
}

/// Everything an ablation needs: text, an encoder and training settings.
pub struct AblationData<'a> {
    pub taxonomy: &'a Taxonomy,
    pub train: Vec<&'a EnterpriseRecord>,
    pub test: Vec<&'a EnterpriseRecord>,
    pub encoder: &'a dyn TextEncoder,
    pub preprocessor: &'a Preprocessor,
    pub train_config: TrainConfig,
    /// Beam width for group rows.
    pub k: usize,
}

/// Runs every configuration, re-encoding and retraining as needed. Adapters
/// are trained once per preprocessing setting and reused.
pub fn ablation_run(data: &AblationData<'_>, configs: &[AblationConfig]) -> Result<Vec<EvalRow>> {
    let tax = data.taxonomy;
    let mut trained: HashMap<bool, HashMap<String, Adapter>> = HashMap::new();
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let pre = cfg.preprocess.then_some(data.preprocessor);
        let stores = pipeline::encode_taxonomy(tax, data.encoder, pre)?;
        let all: Vec<EnterpriseRecord> = data.train.iter().chain(&data.test).map(|r| (*r).clone()).collect();
        let queries = pipeline::encode_enterprises(&all, data.encoder, pre)?;

        let adapters = match cfg.adapter {
            AdapterChoice::ZeroShot => HashMap::new(),
            AdapterChoice::Trained => match trained.get(&cfg.preprocess) {
                Some(a) => a.clone(),
                None => {
                    let namespaces = BeamConfig::per_level(tax, data.k).level_namespaces;
                    let trained_ns = pipeline::train_adapters(
                        tax,
                        &data.train,
                        &queries,
                        &stores,
                        &namespaces,
                        &data.train_config,
                    )?;
                    let map: HashMap<String, Adapter> =
                        trained_ns.into_iter().map(|t| (t.namespace, t.adapter)).collect();
                    trained.insert(cfg.preprocess, map.clone());
                    map
                }
            },
        };

        let beam = BeamConfig::per_level(tax, data.k);
        let reasoner = GroupReasoner::new(tax, &stores, &adapters, beam)?;
        let labeled: Vec<LabeledQuery> = data
            .test
            .iter()
            .map(|r| {
                let v = queries.get(&r.id).expect("encoded above").clone();
                LabeledQuery {
                    id: r.id.clone(),
                    query: QueryInput::Shared(v),
                    truths: r.naics_codes.iter().cloned().collect(),
                }
            })
            .collect();
        let outcome = run(&reasoner, &labeled, cfg.search)?;
        rows.push(EvalRow {
            config: cfg.name.clone(),
            k: (cfg.search == SearchMode::Group).then_some(data.k),
            outcome,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reasoning::ScoredCode;

    fn result(id: &str, codes: &[&str]) -> ClassificationResult {
        ClassificationResult {
            id: id.into(),
            ranked_leaves: codes
                .iter()
                .enumerate()
                .map(|(i, c)| ScoredCode {
                    code: c.to_string(),
                    score: 1.0 - i as f64 * 0.01,
                })
                .collect(),
            similarity_count: 10,
            visited_per_level: vec![10],
            beam_trace: vec![],
        }
    }

    fn truths(items: &[(&str, &[&str])]) -> Truths {
        items
            .iter()
            .map(|(id, ls)| (id.to_string(), ls.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    #[test]
    fn hand_counted_ranks() {
        let ranked: Vec<&str> = vec!["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
        let results = vec![
            result("q1", &ranked),
            result("q2", &ranked),
            result("q3", &ranked),
            result("q4", &ranked),
        ];
        let t = truths(&[("q1", &["a"]), ("q2", &["b"]), ("q3", &["d"]), ("q4", &["zz"])]);
        assert_eq!(acc_at_k(&results, &t, 1).unwrap(), 25.0);
        assert_eq!(acc_at_k(&results, &t, 3).unwrap(), 50.0);
        assert_eq!(acc_at_k(&results, &t, 5).unwrap(), 75.0);
        assert_eq!(acc_at_k(&results, &t, 10).unwrap(), 75.0);
        let o = evaluate(&results, &t, &REPORT_KS, 0.0).unwrap();
        assert_eq!(o.hit_ranks, vec![Some(1), Some(2), Some(4), None]);
        assert_eq!(o.mean_similarity_count, 10.0);
    }

    #[test]
    fn any_label_counts() {
        let results = vec![result("q", &["B", "A"])];
        let t = truths(&[("q", &["A", "B"])]);
        assert_eq!(acc_at_k(&results, &t, 1).unwrap(), 100.0);
    }

    #[test]
    fn errors() {
        let results = vec![result("q", &["a"])];
        assert!(acc_at_k(&results, &truths(&[]), 1).is_err());
        assert!(acc_at_k(&results, &truths(&[("q", &["a"])]), 0).is_err());
    }

    #[test]
    fn csv_layout() {
        let results = vec![result("q", &["a"])];
        let o = evaluate(&results, &truths(&[("q", &["a"])]), &REPORT_KS, 0.5).unwrap();
        let rows = vec![EvalRow {
            config: "flat".into(),
            k: None,
            outcome: o,
        }];
        let mut buf = Vec::new();
        write_eval_csv(&mut buf, &rows, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "config,k,acc1,acc3,acc5,acc10,mean_sims,seconds\nflat,,100.0000,100.0000,100.0000,100.0000,10.0000,0.500000\n"
        );
    }
}
