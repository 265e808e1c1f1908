//! Command implementations behind the `sector` binary.
//!
//! Each command reads a [`RunConfig`], writes its outputs under `config.out`
//! and returns a short summary. Files are written to a temporary sibling and
//! renamed into place, so a failed run never leaves a half-written output.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::config::RunConfig;
use crate::corpus::{self, EnterpriseRecord, Partition};
use crate::embedding::EmbeddingStore;
use crate::emission::{self, CaseStudyAudit, EmissionReport};
use crate::error::{Error, Result};
use crate::evaluation::{self, AblationData, EvalRow, LabeledQuery};
use crate::pipeline::{self, QUERY_NAMESPACE};
use crate::reasoning::{self, ClassificationResult, GroupReasoner, QueryInput, SearchMode};
use crate::taxonomy::Taxonomy;
use crate::theory::{self, TheoremReport};

/// Writes `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

struct Inputs {
    tax: Taxonomy,
    enterprises: Vec<EnterpriseRecord>,
    stores: HashMap<String, EmbeddingStore>,
}

impl Inputs {
    fn load(cfg: &RunConfig) -> Result<Self> {
        let tax = cfg.load_taxonomy()?;
        let enterprises = cfg.load_enterprises()?;
        corpus::validate_labels(&enterprises, &tax)?;
        let stores = cfg.load_stores(&tax, &enterprises)?;
        let queries = &stores[QUERY_NAMESPACE];
        for e in &enterprises {
            if !queries.contains(&e.id) {
                return Err(Error::MissingEmbedding {
                    code: e.id.clone(),
                    namespace: QUERY_NAMESPACE.into(),
                });
            }
        }
        Ok(Self {
            tax,
            enterprises,
            stores,
        })
    }

    fn queries(&self) -> &EmbeddingStore {
        &self.stores[QUERY_NAMESPACE]
    }

    fn query_inputs(&self, ids: &[&str]) -> Result<Vec<(String, QueryInput)>> {
        pipeline::queries_from_store(self.queries(), ids)
    }

    fn split(&self, cfg: &RunConfig) -> Result<corpus::SplitAssignment> {
        let ids: Vec<&str> = self.enterprises.iter().map(|e| e.id.as_str()).collect();
        corpus::split(&ids, cfg.split, cfg.split_seed())
    }

    fn records_in(&self, split: &corpus::SplitAssignment, part: Partition) -> Vec<&EnterpriseRecord> {
        self.enterprises
            .iter()
            .filter(|e| split.get(&e.id) == Some(part))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateReport {
    pub nodes: usize,
    pub levels: Vec<u32>,
    pub leaves: usize,
    pub enterprises: usize,
    /// `(namespace, entries, dim)` in namespace order.
    pub stores: Vec<(String, usize, usize)>,
    pub intensities: Option<usize>,
    pub adapters: usize,
    pub case_study_rows: Option<usize>,
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidateReport> {
    let inputs = Inputs::load(cfg)?;
    let adapters = cfg.load_adapters()?;
    // builds every prepared node vector, so missing or degenerate embeddings surface here
    GroupReasoner::new(&inputs.tax, &inputs.stores, &adapters, cfg.beam_config(&inputs.tax)?)?;
    let intensities = match cfg.paths.intensities {
        Some(_) => Some(cfg.load_intensities()?.len()),
        None => None,
    };
    let case_study_rows = match &cfg.paths.case_study {
        Some(p) => Some(load_case_study(&cfg.resolve(p))?.len()),
        None => None,
    };
    let mut stores: Vec<(String, usize, usize)> = inputs
        .stores
        .values()
        .map(|s| (s.namespace().to_string(), s.len(), s.dim()))
        .collect();
    stores.sort();
    Ok(ValidateReport {
        nodes: inputs.tax.len(),
        levels: inputs.tax.levels().to_vec(),
        leaves: inputs.tax.leaves().count(),
        enterprises: inputs.enterprises.len(),
        stores,
        intensities,
        adapters: adapters.len(),
        case_study_rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    /// `(namespace, pairs, first-epoch loss, last-epoch loss)`.
    pub namespaces: Vec<(String, usize, f64, f64)>,
    pub train_records: usize,
    pub adapter_dir: PathBuf,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let inputs = Inputs::load(cfg)?;
    let split = inputs.split(cfg)?;
    let train = inputs.records_in(&split, Partition::Train);
    let beam = cfg.beam_config(&inputs.tax)?;
    let trained = pipeline::train_adapters(
        &inputs.tax,
        &train,
        inputs.queries(),
        &inputs.stores,
        &beam.level_namespaces,
        &cfg.train_config(),
    )?;

    let adapter_dir = cfg.out.join("adapters");
    for t in &trained {
        write_atomic(&adapter_dir.join(format!("{}.adp", t.namespace)), |w| t.adapter.write(w))?;
    }
    write_atomic(&cfg.out.join("loss_history.csv"), |w| {
        writeln!(w, "namespace,epoch,loss")?;
        for t in &trained {
            for (epoch, loss) in t.history.iter().enumerate() {
                writeln!(w, "{},{},{loss:.12}", t.namespace, epoch + 1)?;
            }
        }
        Ok(())
    })?;
    write_split(&cfg.out.join("split.csv"), &split)?;

    Ok(TrainSummary {
        namespaces: trained
            .iter()
            .map(|t| {
                let first = t.history.first().copied().unwrap_or(f64::NAN);
                let last = t.history.last().copied().unwrap_or(f64::NAN);
                (t.namespace.clone(), t.pairs, first, last)
            })
            .collect(),
        train_records: train.len(),
        adapter_dir,
    })
}

fn write_split(path: &Path, split: &corpus::SplitAssignment) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "id,partition")?;
        for (id, part) in &split.assignment {
            let name = match part {
                Partition::Train => "train",
                Partition::Validation => "validation",
                Partition::Test => "test",
            };
            writeln!(w, "{id},{name}")?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifySummary {
    pub queries: usize,
    pub mode: SearchMode,
    pub total_similarity_count: usize,
    pub output: PathBuf,
}

fn classify_all(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<ClassificationResult>> {
    let adapters = cfg.load_adapters()?;
    let reasoner = GroupReasoner::new(&inputs.tax, &inputs.stores, &adapters, cfg.beam_config(&inputs.tax)?)?;
    let ids: Vec<&str> = inputs.enterprises.iter().map(|e| e.id.as_str()).collect();
    let outcome = reasoner.classify_batch(&inputs.query_inputs(&ids)?, cfg.beam.mode);
    if let Some(e) = outcome.errors.into_iter().next() {
        return Err(e);
    }
    Ok(outcome.results)
}

pub fn cmd_classify(cfg: &RunConfig) -> Result<ClassifySummary> {
    let inputs = Inputs::load(cfg)?;
    let results = classify_all(cfg, &inputs)?;
    let output = cfg.out.join("results.jsonl");
    write_atomic(&output, |w| reasoning::write_results(w, &results))?;
    Ok(ClassifySummary {
        queries: results.len(),
        mode: cfg.beam.mode,
        total_similarity_count: results.iter().map(|r| r.similarity_count).sum(),
        output,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub test_queries: usize,
    pub accuracy: Vec<EvalRow>,
    pub sweep: Vec<EvalRow>,
    pub ablation: Option<Vec<EvalRow>>,
}

/// Evaluates on the test partition. Ablation rows need a text encoder and
/// are skipped for pre-computed embeddings.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalSummary> {
    let inputs = Inputs::load(cfg)?;
    let split = inputs.split(cfg)?;
    let test = inputs.records_in(&split, Partition::Test);
    if test.is_empty() {
        return Err(Error::Empty("test partition"));
    }
    let labeled: Vec<LabeledQuery> = test
        .iter()
        .map(|r| LabeledQuery {
            id: r.id.clone(),
            query: QueryInput::Shared(inputs.queries().get(&r.id).expect("checked on load").clone()),
            truths: r.naics_codes.iter().cloned().collect(),
        })
        .collect();

    let adapters = cfg.load_adapters()?;
    let mut reasoner = GroupReasoner::new(&inputs.tax, &inputs.stores, &adapters, cfg.beam_config(&inputs.tax)?)?;
    let mut accuracy = vec![evaluation::evaluate_flat(&reasoner, &labeled, "flat")?];
    accuracy.extend(evaluation::k_sweep(&mut reasoner, &labeled, &[cfg.beam.k], "group")?);
    let sweep = evaluation::k_sweep(&mut reasoner, &labeled, &cfg.eval.ks, "group")?;

    let ablation = match cfg.text_encoder()? {
        Some(encoder) => {
            let pre = cfg.load_preprocessor()?;
            let data = AblationData {
                taxonomy: &inputs.tax,
                train: inputs.records_in(&split, Partition::Train),
                test: test.clone(),
                encoder: encoder.as_ref(),
                preprocessor: &pre,
                train_config: cfg.train_config(),
                k: cfg.beam.k,
            };
            Some(evaluation::ablation_run(&data, &evaluation::standard_ablation())?)
        }
        None => {
            log::info!("ablation skipped: it needs a text encoder");
            None
        }
    };

    for rows in [&accuracy, &sweep].into_iter().chain(ablation.as_ref()) {
        for r in rows {
            log::info!("{} k={:?}: {:.3}s", r.config, r.k, r.outcome.seconds);
        }
    }
    write_atomic(&cfg.out.join("eval_accuracy.csv"), |w| evaluation::write_eval_csv(w, &accuracy, false))?;
    write_atomic(&cfg.out.join("eval_k_sweep.csv"), |w| evaluation::write_eval_csv(w, &sweep, false))?;
    if let Some(rows) = &ablation {
        write_atomic(&cfg.out.join("eval_ablation.csv"), |w| evaluation::write_eval_csv(w, rows, false))?;
    }
    Ok(EvalSummary {
        test_queries: labeled.len(),
        accuracy,
        sweep,
        ablation,
    })
}

#[derive(Debug, Clone)]
pub struct EstimateSummary {
    pub report: EmissionReport,
    pub audit: Option<CaseStudyAudit>,
}

fn load_case_study(path: &Path) -> Result<Vec<emission::CaseStudyRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    emission::load_case_study(file)
}

/// Classifies every enterprise, estimates from the top code and audits the
/// configured case study.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<EstimateSummary> {
    let inputs = Inputs::load(cfg)?;
    let table = cfg.load_intensities()?;
    let results = classify_all(cfg, &inputs)?;
    let predicted: HashMap<String, String> = results
        .iter()
        .filter_map(|r| r.top().map(|t| (r.id.clone(), t.code.clone())))
        .collect();
    let report = emission::estimate_enterprises(
        &inputs.enterprises,
        &predicted,
        &table,
        &inputs.tax,
        cfg.estimate.region.as_deref(),
    )?;
    for (id, reason) in &report.skipped {
        log::warn!("no estimate for `{id}`: {reason}");
    }
    write_atomic(&cfg.out.join("emissions.csv"), |w| emission::write_emission_csv(w, &report))?;

    let audit = match &cfg.paths.case_study {
        Some(p) => {
            let rows = load_case_study(&cfg.resolve(p))?;
            let audit = emission::audit_case_study(&rows, cfg.estimate.printed_average)?;
            write_atomic(&cfg.out.join("case_study_audit.csv"), |w| emission::write_audit_csv(w, &audit))?;
            Some(audit)
        }
        None => None,
    };
    Ok(EstimateSummary { report, audit })
}

/// Entropy and cost report over the standard grid.
pub fn cmd_theorem_check(out: &Path) -> Result<TheoremReport> {
    let report = theory::entropy_bound_check(&theory::standard_grid())?;
    write_atomic(&out.join("theorem_check.csv"), |w| theory::write_report_csv(w, &report))?;
    Ok(report)
}
