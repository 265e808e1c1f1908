//! Run configuration: one TOML file, overridden by command-line flags.
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::adapter::{Adapter, TrainConfig};
use crate::corpus::{self, EnterpriseRecord, Preprocessor, SplitRatios};
use crate::embedding::{EmbFormat, EmbeddingStore, HashingEncoder, HttpEncoder, TextEncoder, load_embeddings};
use crate::emission::IntensityTable;
use crate::error::{Error, Result};
use crate::pipeline::{self, QUERY_NAMESPACE};
use crate::reasoning::{BeamConfig, DEFAULT_FINAL_LIST_SIZE, SearchMode};
use crate::rng::derive_seed;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub taxonomy: Option<PathBuf>,
    pub enterprises: Option<PathBuf>,
    pub intensities: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    /// Directory of `<namespace>.adp` files.
    pub adapters: Option<PathBuf>,
    /// Published comparison table to audit.
    pub case_study: Option<PathBuf>,
    /// Namespace -> embedding file, used by the `files` encoder.
    #[serde(default)]
    pub embeddings: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// Pre-computed vectors from `paths.embeddings`.
    #[default]
    Files,
    Hashing,
    Http,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub kind: EncoderKind,
    pub dim: usize,
    pub url: Option<String>,
    pub batch_size: usize,
    /// Preprocess texts before encoding (text encoders only).
    pub preprocess: bool,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Files,
            dim: 256,
            url: None,
            batch_size: 256,
            preprocess: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamSection {
    pub k: usize,
    pub final_list_size: usize,
    pub mode: SearchMode,
    /// Level -> namespace; defaults to `level{l}` for every level.
    pub level_namespaces: BTreeMap<String, String>,
}

impl Default for BeamSection {
    fn default() -> Self {
        Self {
            k: 5,
            final_list_size: DEFAULT_FINAL_LIST_SIZE,
            mode: SearchMode::Group,
            level_namespaces: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ks: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { ks: vec![1, 3, 5, 10] }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub region: Option<String>,
    /// Published average to compare the audited case study against.
    pub printed_average: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub paths: Paths,
    pub encoder: EncoderSection,
    pub beam: BeamSection,
    pub train: TrainConfig,
    pub split: SplitRatios,
    pub eval: EvalSection,
    pub estimate: EstimateSection,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            paths: Paths::default(),
            encoder: EncoderSection::default(),
            beam: BeamSection::default(),
            train: TrainConfig::default(),
            split: SplitRatios::STANDARD,
            eval: EvalSection::default(),
            estimate: EstimateSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<SearchMode>,
    pub k: Option<usize>,
    pub topn: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.out = cfg.resolve(&cfg.out);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(m) = o.mode {
            self.beam.mode = m;
        }
        if let Some(k) = o.k {
            self.beam.k = k;
        }
        if let Some(n) = o.topn {
            self.beam.final_list_size = n;
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn required(&self, p: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        p.as_ref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::Config(format!("`paths.{name}` is required")))
    }

    /// Seed of one stochastic component.
    pub fn component_seed(&self, component: &str) -> u64 {
        derive_seed(self.seed, component)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.component_seed("train"),
            ..self.train
        }
    }

    pub fn load_taxonomy(&self) -> Result<Taxonomy> {
        let path = self.required(&self.paths.taxonomy, "taxonomy")?;
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        Taxonomy::parse(std::io::BufReader::new(file))
    }

    pub fn load_enterprises(&self) -> Result<Vec<EnterpriseRecord>> {
        let path = self.required(&self.paths.enterprises, "enterprises")?;
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        corpus::load_enterprises(std::io::BufReader::new(file))
    }

    pub fn load_intensities(&self) -> Result<IntensityTable> {
        let path = self.required(&self.paths.intensities, "intensities")?;
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        IntensityTable::load(file)
    }

    /// Preprocessor with the configured stopword list, or none at all.
    pub fn load_preprocessor(&self) -> Result<Preprocessor> {
        let words = match &self.paths.stopwords {
            Some(p) => {
                let path = self.resolve(p);
                let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
                corpus::load_stopwords(std::io::BufReader::new(file))?
            }
            None => Default::default(),
        };
        Ok(Preprocessor::new(words))
    }

    pub fn beam_config(&self, tax: &Taxonomy) -> Result<BeamConfig> {
        let mut beam = BeamConfig::per_level(tax, self.beam.k).with_final_list_size(self.beam.final_list_size);
        for (level, ns) in &self.beam.level_namespaces {
            let level: u32 = level
                .parse()
                .map_err(|_| Error::Config(format!("bad level key `{level}` in beam.level_namespaces")))?;
            beam.level_namespaces.insert(level, ns.clone());
        }
        Ok(beam)
    }

    pub fn text_encoder(&self) -> Result<Option<Box<dyn TextEncoder>>> {
        Ok(match self.encoder.kind {
            EncoderKind::Files => None,
            EncoderKind::Hashing => Some(Box::new(HashingEncoder::new(
                self.encoder.dim,
                self.component_seed("encoder"),
            )?)),
            EncoderKind::Http => {
                let url = self
                    .encoder
                    .url
                    .as_deref()
                    .ok_or_else(|| Error::Config("`encoder.url` is required for the http encoder".into()))?;
                Some(Box::new(HttpEncoder::new(url)?.with_batch_size(self.encoder.batch_size)))
            }
        })
    }

    /// Taxonomy and query stores, from files or from the text encoder.
    /// Query vectors live under [`QUERY_NAMESPACE`].
    pub fn load_stores(&self, tax: &Taxonomy, enterprises: &[EnterpriseRecord]) -> Result<HashMap<String, EmbeddingStore>> {
        match self.text_encoder()? {
            None => {
                if self.paths.embeddings.is_empty() {
                    return Err(Error::Config("`paths.embeddings` is required for the files encoder".into()));
                }
                let mut stores = HashMap::new();
                for (ns, p) in &self.paths.embeddings {
                    let path = self.resolve(p);
                    stores.insert(ns.clone(), load_embeddings(&path, EmbFormat::from_path(&path), ns)?);
                }
                if !stores.contains_key(QUERY_NAMESPACE) {
                    return Err(Error::Config(format!("`paths.embeddings.{QUERY_NAMESPACE}` is required")));
                }
                Ok(stores)
            }
            Some(encoder) => {
                let pre = self.load_preprocessor()?;
                let pre = self.encoder.preprocess.then_some(&pre);
                let mut stores = pipeline::encode_taxonomy(tax, encoder.as_ref(), pre)?;
                stores.insert(
                    QUERY_NAMESPACE.to_string(),
                    pipeline::encode_enterprises(enterprises, encoder.as_ref(), pre)?,
                );
                Ok(stores)
            }
        }
    }

    /// Adapters from `paths.adapters`, keyed by namespace. Missing directory
    /// setting means no adapters.
    pub fn load_adapters(&self) -> Result<HashMap<String, Adapter>> {
        let Some(dir) = &self.paths.adapters else {
            return Ok(HashMap::new());
        };
        let dir = self.resolve(dir);
        let mut out = HashMap::new();
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "adp"))
            .collect();
        paths.sort();
        for p in paths {
            let a = Adapter::load(&p)?;
            out.insert(a.namespace().to_string(), a);
        }
        Ok(out)
    }

    pub fn split_seed(&self) -> u64 {
        self.component_seed("split")
    }
}
