//! Enterprise records, text preprocessing, augmentation and splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnterpriseRecord {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub description: String,
    #[serde(rename = "naics", default, skip_serializing_if = "Vec::is_empty")]
    pub naics_codes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revenue_busd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_emissions_mt: Option<f64>,
}

/// Reads one record per line, preserving input order.
pub fn load_enterprises<R: BufRead>(reader: R) -> Result<Vec<EnterpriseRecord>> {
    let mut out = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec: EnterpriseRecord =
            serde_json::from_str(trimmed).map_err(|e| Error::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        if rec.description.trim().is_empty() {
            return Err(Error::MalformedRecord {
                line: line_no,
                reason: format!("record `{}` has an empty description", rec.id),
            });
        }
        if let Some(&first) = seen.get(&rec.id) {
            return Err(Error::DuplicateId {
                id: rec.id,
                first,
                second: line_no,
            });
        }
        seen.insert(rec.id.clone(), line_no);
        out.push(rec);
    }
    Ok(out)
}

/// Every ground-truth label must name a taxonomy node.
pub fn validate_labels(records: &[EnterpriseRecord], tax: &Taxonomy) -> Result<()> {
    for r in records {
        for code in &r.naics_codes {
            if !tax.contains(code) {
                return Err(Error::UnknownLabel {
                    id: r.id.clone(),
                    label: code.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Stopword list, one token per line. Blank lines and `#` comments are ignored.
pub fn load_stopwords<R: BufRead>(reader: R) -> Result<BTreeSet<String>> {
    let mut words = BTreeSet::new();
    for line in reader.lines() {
        let line = line?;
        let w = line.trim();
        if !w.is_empty() && !w.starts_with('#') {
            words.insert(w.to_lowercase());
        }
    }
    Ok(words)
}

/// Lowercase, punctuation to spaces, collapse whitespace, drop stopwords.
#[derive(Debug, Default)]
pub struct Preprocessor {
    stopwords: BTreeSet<String>,
    empty_outputs: AtomicUsize,
}

impl Preprocessor {
    pub fn new(stopwords: BTreeSet<String>) -> Self {
        Self {
            stopwords: stopwords.into_iter().map(|w| w.to_lowercase()).collect(),
            empty_outputs: AtomicUsize::new(0),
        }
    }

    pub fn apply(&self, text: &str) -> String {
        let lowered = text.to_lowercase();
        let cleaned: String = lowered
            .chars()
            .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
            .collect();
        let out = cleaned
            .split_whitespace()
            .filter(|t| !self.stopwords.contains(*t))
            .collect::<Vec<_>>()
            .join(" ");
        if out.is_empty() && !text.trim().is_empty() {
            self.empty_outputs.fetch_add(1, Ordering::Relaxed);
            log::warn!("preprocessing removed every token of {text:?}");
        }
        out
    }

    /// How many non-empty inputs came out empty so far.
    pub fn empty_outputs(&self) -> usize {
        self.empty_outputs.load(Ordering::Relaxed)
    }
}

pub fn preprocess(text: &str, stopwords: &BTreeSet<String>) -> String {
    Preprocessor::new(stopwords.clone()).apply(text)
}

/// Replaces each whitespace token with a uniform vocabulary word with
/// probability `p`. Tokens are rejoined with single spaces.
pub fn augment_random_replace(text: &str, p: f64, vocabulary: &[String], seed: u64) -> Result<String> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("replacement probability {p} outside [0, 1]")));
    }
    if p > 0.0 && vocabulary.is_empty() {
        return Err(Error::InvalidArgument("empty replacement vocabulary".into()));
    }
    let mut rng = rng::seeded(seed);
    let tokens: Vec<&str> = text
        .split_whitespace()
        .map(|tok| {
            // one uniform draw per token keeps the stream aligned across p values
            if rng::unit(&mut rng) < p {
                vocabulary[rng::below(&mut rng, vocabulary.len())].as_str()
            } else {
                tok
            }
        })
        .collect();
    Ok(tokens.join(" "))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const STANDARD: SplitRatios = SplitRatios {
        train: 0.8,
        validation: 0.1,
        test: 0.1,
    };

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::InvalidArgument(format!("split ratios must be positive: {self:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split ratios must sum to 1: {self:?}")));
        }
        Ok(())
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self::STANDARD
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub assignment: BTreeMap<String, Partition>,
    pub seed: u64,
    pub ratios: SplitRatios,
}

impl SplitAssignment {
    pub fn get(&self, id: &str) -> Option<Partition> {
        self.assignment.get(id).copied()
    }

    /// Ids of one partition in ascending order.
    pub fn ids(&self, part: Partition) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, p)| **p == part)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        let count = |p| self.assignment.values().filter(|x| **x == p).count();
        (
            count(Partition::Train),
            count(Partition::Validation),
            count(Partition::Test),
        )
    }
}

/// Sorts ids, shuffles them with the seeded generator and cuts: the first
/// `floor(N * validation)` go to validation, the next `floor(N * test)` to
/// test, the remainder to train.
pub fn split<S: AsRef<str>>(ids: &[S], ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    if ids.is_empty() {
        return Err(Error::Empty("id list"));
    }
    ratios.validate()?;
    let mut sorted: Vec<&str> = ids.iter().map(AsRef::as_ref).collect();
    sorted.sort_unstable();
    let before = sorted.len();
    sorted.dedup();
    if sorted.len() != before {
        return Err(Error::InvalidArgument("duplicate ids in split input".into()));
    }
    let mut rng = rng::seeded(seed);
    rng::shuffle(&mut rng, &mut sorted);

    let n = sorted.len() as f64;
    // tolerance absorbs products like 0.7 * 10 = 6.999...
    let n_val = (n * ratios.validation + 1e-9).floor() as usize;
    let n_test = (n * ratios.test + 1e-9).floor() as usize;

    let assignment = sorted
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let part = if i < n_val {
                Partition::Validation
            } else if i < n_val + n_test {
                Partition::Test
            } else {
                Partition::Train
            };
            (id.to_string(), part)
        })
        .collect();
    Ok(SplitAssignment {
        assignment,
        seed,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(ws: &[&str]) -> BTreeSet<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn preprocess_examples() {
        let sw = words(&["the", "inc"]);
        assert_eq!(preprocess("The Company, Inc. sells Shoes!", &sw), "company sells shoes");
        assert_eq!(preprocess("", &sw), "");
        let once = preprocess("  Mixed-CASE   text; with (punctuation) ", &sw);
        assert_eq!(once, "mixed case text with punctuation");
        assert_eq!(preprocess(&once, &sw), once);
    }

    #[test]
    fn empty_output_is_counted() {
        let p = Preprocessor::new(words(&["the"]));
        assert_eq!(p.apply("The!"), "");
        assert_eq!(p.apply(""), "");
        assert_eq!(p.empty_outputs(), 1);
    }

    #[test]
    fn load_records_and_duplicates() {
        let text = r#"{"id":"a","name":"A","description":"makes shoes","naics":["316210"]}
{"id":"b","name":"B","description":"bakes bread","revenue_busd":1.5}
{"id":"c","name":"C","description":"sells cars","reported_emissions_mt":0.2}"#;
        let recs = load_enterprises(text.as_bytes()).unwrap();
        assert_eq!(recs.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(recs[1].revenue_busd, Some(1.5));

        let dup = [
            r#"{"id":"x","description":"d"}"#,
            r#"{"id":"y","description":"d"}"#,
            r#"{"id":"z","description":"d"}"#,
            r#"{"id":"w","description":"d"}"#,
            r#"{"id":"y","description":"d"}"#,
        ]
        .join("\n");
        assert!(matches!(
            load_enterprises(dup.as_bytes()),
            Err(Error::DuplicateId { first: 2, second: 5, .. })
        ));
        assert!(matches!(
            load_enterprises(r#"{"id":"e","description":"  "}"#.as_bytes()),
            Err(Error::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn labels_are_checked_against_taxonomy() {
        let tax = Taxonomy::parse_str(
            r#"{"code":"31","level":2,"title":"t","description":"d"}"#,
        )
        .unwrap();
        let recs = load_enterprises(
            r#"{"id":"a","description":"x","naics":["999999"]}"#.as_bytes(),
        )
        .unwrap();
        assert!(matches!(
            validate_labels(&recs, &tax),
            Err(Error::UnknownLabel { .. })
        ));
    }

    #[test]
    fn augmentation_extremes() {
        let vocab = vec!["x".to_string()];
        let text = "one two  three four";
        assert_eq!(augment_random_replace(text, 0.0, &[], 1).unwrap(), "one two three four");
        assert_eq!(augment_random_replace(text, 1.0, &vocab, 1).unwrap(), "x x x x");
        assert!(augment_random_replace(text, 1.5, &vocab, 1).is_err());
        assert!(augment_random_replace(text, 0.5, &[], 1).is_err());
    }

    #[test]
    fn augmentation_rate_concentrates() {
        let text = vec!["tok"; 10_000].join(" ");
        let vocab = vec!["new".to_string()];
        let out = augment_random_replace(&text, 0.5, &vocab, 11).unwrap();
        let toks: Vec<&str> = out.split(' ').collect();
        assert_eq!(toks.len(), 10_000);
        let frac = toks.iter().filter(|t| **t == "new").count() as f64 / 10_000.0;
        // binomial sd is 0.005, so 0.02 is four sigma
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn split_sizes_and_errors() {
        let ids: Vec<String> = (0..10).map(|i| format!("id{i}")).collect();
        let s = split(&ids, SplitRatios::STANDARD, 1).unwrap();
        assert_eq!(s.sizes(), (8, 1, 1));
        let one = split(&["only"], SplitRatios::STANDARD, 1).unwrap();
        assert_eq!(one.sizes(), (1, 0, 0));
        assert!(split::<&str>(&[], SplitRatios::STANDARD, 1).is_err());
        let bad = SplitRatios {
            train: 0.5,
            validation: 0.1,
            test: 0.1,
        };
        assert!(split(&ids, bad, 1).is_err());
    }

    #[test]
    fn split_is_seed_deterministic() {
        let ids: Vec<String> = (0..50).map(|i| format!("id{i:02}")).collect();
        let mut reversed = ids.clone();
        reversed.reverse();
        let a = split(&ids, SplitRatios::STANDARD, 5).unwrap();
        let b = split(&reversed, SplitRatios::STANDARD, 5).unwrap();
        assert_eq!(a, b);
        let c = split(&ids, SplitRatios::STANDARD, 6).unwrap();
        assert_ne!(a.assignment, c.assignment);
    }
}
