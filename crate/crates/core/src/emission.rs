//! Revenue-based emission estimates and their error against disclosures.
//!
//! Units: revenue in billions of USD, intensity in MtCO2e per billion USD
//! (equivalently tCO2e per thousand USD), emissions in MtCO2e.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::EnterpriseRecord;
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityEntry {
    pub code: String,
    pub region: Option<String>,
    pub intensity: f64,
}

#[derive(Debug, Clone, Default)]
pub struct IntensityTable {
    entries: BTreeMap<(String, Option<String>), IntensityEntry>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
}

fn parse_number(raw: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::MalformedRecord {
        line,
        reason: format!("{what} `{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::MalformedRecord {
            line,
            reason: format!("{what} `{raw}` is not finite"),
        });
    }
    Ok(v)
}

impl IntensityTable {
    /// CSV with header `code,intensity[,region]`; extra columns are ignored.
    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() || headers.iter().all(str::is_empty) {
            return Err(Error::Empty("intensity table"));
        }
        let code_col = column(&headers, "code")
            .ok_or_else(|| Error::BadHeader("intensity CSV needs a `code` column".into()))?;
        let int_col = column(&headers, "intensity")
            .ok_or_else(|| Error::BadHeader("intensity CSV needs an `intensity` column".into()))?;
        let region_col = column(&headers, "region");

        let mut table = IntensityTable::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map_or(i + 2, |p| p.line() as usize);
            let code = rec.get(code_col).unwrap_or_default().to_string();
            if code.is_empty() {
                return Err(Error::MalformedRecord {
                    line,
                    reason: "empty code".into(),
                });
            }
            let intensity = parse_number(rec.get(int_col).unwrap_or_default(), "intensity", line)?;
            if intensity < 0.0 {
                return Err(Error::Negative {
                    what: format!("intensity of `{code}`"),
                    value: intensity,
                });
            }
            let region = region_col
                .and_then(|c| rec.get(c))
                .filter(|r| !r.is_empty())
                .map(str::to_string);
            table.insert(IntensityEntry {
                code,
                region,
                intensity,
            })?;
        }
        if table.is_empty() {
            return Err(Error::Empty("intensity table"));
        }
        Ok(table)
    }

    pub fn insert(&mut self, entry: IntensityEntry) -> Result<()> {
        let key = (entry.code.clone(), entry.region.clone());
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicateIntensity {
                code: entry.code,
                region: entry.region,
            });
        }
        self.entries.insert(key, entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact region first, then the region-free entry.
    pub fn get(&self, code: &str, region: Option<&str>) -> Option<f64> {
        let exact = region.and_then(|r| {
            self.entries
                .get(&(code.to_string(), Some(r.to_string())))
        });
        exact
            .or_else(|| self.entries.get(&(code.to_string(), None)))
            .map(|e| e.intensity)
    }

    /// Intensity for `code` or its nearest ancestor that has one.
    pub fn resolve(&self, code: &str, tax: &Taxonomy, region: Option<&str>) -> Option<Resolved> {
        let chain = tax
            .path_to_root(code)
            .unwrap_or_else(|_| vec![code.to_string()]);
        chain.into_iter().enumerate().find_map(|(steps, c)| {
            self.get(&c, region).map(|intensity| Resolved {
                code: c,
                intensity,
                fallback_level: steps,
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub code: String,
    pub intensity: f64,
    /// Ancestor steps taken; 0 when the code itself is in the table.
    pub fallback_level: usize,
}

pub fn estimate(revenue_busd: f64, intensity: f64) -> Result<f64> {
    for (what, v) in [("revenue", revenue_busd), ("intensity", intensity)] {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{what} {v} is not finite")));
        }
        if v < 0.0 {
            return Err(Error::Negative {
                what: what.into(),
                value: v,
            });
        }
    }
    Ok(revenue_busd * intensity)
}

/// Absolute percentage error `100 * |R - E| / R`.
pub fn ape(reported: f64, estimated: f64) -> Result<f64> {
    if !(reported > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "reported emissions {reported} must be positive"
        )));
    }
    Ok(100.0 * ((reported - estimated) / reported).abs())
}

/// Mean absolute percentage error over `(reported, estimated)` pairs.
pub fn mape(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("MAPE input"));
    }
    let total: f64 = pairs
        .iter()
        .map(|&(r, e)| ape(r, e))
        .sum::<Result<f64>>()?;
    Ok(total / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmissionRecord {
    pub id: String,
    pub revenue_busd: f64,
    pub code: String,
    pub intensity: f64,
    pub estimated_mt: f64,
    pub reported_mt: Option<f64>,
    pub ape: Option<f64>,
    pub fallback_level: usize,
}

#[derive(Debug, Clone, Default)]
pub struct EmissionReport {
    pub records: Vec<EmissionRecord>,
    /// `(id, reason)` for enterprises that could not be estimated.
    pub skipped: Vec<(String, String)>,
    pub fallback_events: usize,
    /// Over records with a positive disclosure; `None` when there are none.
    pub mape: Option<f64>,
}

/// Joins each enterprise's predicted code to an intensity and estimates.
pub fn estimate_enterprises(
    enterprises: &[EnterpriseRecord],
    predicted: &HashMap<String, String>,
    table: &IntensityTable,
    tax: &Taxonomy,
    region: Option<&str>,
) -> Result<EmissionReport> {
    let mut report = EmissionReport::default();
    for e in enterprises {
        let Some(code) = predicted.get(&e.id) else {
            report.skipped.push((e.id.clone(), "no predicted code".into()));
            continue;
        };
        let Some(revenue) = e.revenue_busd else {
            report.skipped.push((e.id.clone(), "no revenue".into()));
            continue;
        };
        let Some(resolved) = table.resolve(code, tax, region) else {
            report
                .skipped
                .push((e.id.clone(), format!("no intensity for `{code}` or its ancestors")));
            continue;
        };
        if resolved.fallback_level > 0 {
            report.fallback_events += 1;
        }
        let estimated = estimate(revenue, resolved.intensity)?;
        let ape = match e.reported_emissions_mt {
            Some(r) if r > 0.0 => Some(ape(r, estimated)?),
            _ => None,
        };
        report.records.push(EmissionRecord {
            id: e.id.clone(),
            revenue_busd: revenue,
            code: resolved.code,
            intensity: resolved.intensity,
            estimated_mt: estimated,
            reported_mt: e.reported_emissions_mt,
            ape,
            fallback_level: resolved.fallback_level,
        });
    }
    let pairs: Vec<(f64, f64)> = report
        .records
        .iter()
        .filter_map(|r| r.reported_mt.filter(|x| *x > 0.0).map(|x| (x, r.estimated_mt)))
        .collect();
    report.mape = if pairs.is_empty() { None } else { Some(mape(&pairs)?) };
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// CSV `id,revenue_busd,code,intensity,estimated_mt,reported_mt,ape,fallback_level`.
pub fn write_emission_csv<W: Write>(w: W, report: &EmissionReport) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "id",
        "revenue_busd",
        "code",
        "intensity",
        "estimated_mt",
        "reported_mt",
        "ape",
        "fallback_level",
    ])?;
    for r in &report.records {
        csv.write_record([
            r.id.clone(),
            format!("{:.6}", r.revenue_busd),
            r.code.clone(),
            format!("{:.6}", r.intensity),
            format!("{:.6}", r.estimated_mt),
            opt(r.reported_mt),
            opt(r.ape),
            r.fallback_level.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// A published comparison row: inputs, the printed estimate and the printed
/// per-row error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyRow {
    pub company: String,
    pub revenue_busd: f64,
    pub intensity: f64,
    pub estimated_mt: f64,
    pub reported_mt: f64,
    pub ape: f64,
    #[serde(default)]
    pub error_type: Option<String>,
}

pub fn load_case_study<R: Read>(reader: R) -> Result<Vec<CaseStudyRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let rows = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<CaseStudyRow>, _>>()?;
    if rows.is_empty() {
        return Err(Error::Empty("case study"));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseStudyCheck {
    pub company: String,
    /// `revenue * intensity`.
    pub recomputed_estimate: f64,
    /// Relative gap between the printed and the recomputed estimate, percent.
    pub estimate_gap_pct: f64,
    /// APE of the printed estimate against the disclosure.
    pub ape_from_printed_estimate: f64,
    /// APE of the recomputed estimate against the disclosure.
    pub ape_from_recomputed: f64,
    pub printed_ape: f64,
    /// Printed APE agrees with the printed columns within [`APE_TOLERANCE`].
    pub printed_ape_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseStudyAudit {
    pub rows: Vec<CaseStudyCheck>,
    /// Mean of the printed per-row APE column.
    pub mean_printed_ape: f64,
    /// MAPE of the printed estimates against the disclosures.
    pub mape_from_printed_estimates: f64,
    /// MAPE of `revenue * intensity` against the disclosures.
    pub mape_from_recomputed: f64,
    pub printed_average: Option<f64>,
    /// Printed average differs from the mean of the printed column.
    pub average_diverges: bool,
}

/// Printed APEs carry two decimals and are computed from rounded columns.
pub const APE_TOLERANCE: f64 = 0.05;
/// Averages are compared at the printed precision.
pub const AVERAGE_TOLERANCE: f64 = 0.01;

/// Re-derives every number of a published comparison table.
pub fn audit_case_study(rows: &[CaseStudyRow], printed_average: Option<f64>) -> Result<CaseStudyAudit> {
    if rows.is_empty() {
        return Err(Error::Empty("case study"));
    }
    let mut checks = Vec::with_capacity(rows.len());
    for r in rows {
        let recomputed = estimate(r.revenue_busd, r.intensity)?;
        let from_printed = ape(r.reported_mt, r.estimated_mt)?;
        checks.push(CaseStudyCheck {
            company: r.company.clone(),
            recomputed_estimate: recomputed,
            estimate_gap_pct: if recomputed > 0.0 {
                100.0 * (r.estimated_mt - recomputed) / recomputed
            } else {
                0.0
            },
            ape_from_printed_estimate: from_printed,
            ape_from_recomputed: ape(r.reported_mt, recomputed)?,
            printed_ape: r.ape,
            printed_ape_consistent: (from_printed - r.ape).abs() <= APE_TOLERANCE,
        });
    }
    let n = rows.len() as f64;
    let mean_printed_ape = rows.iter().map(|r| r.ape).sum::<f64>() / n;
    let mape_from_printed_estimates = mape(
        &rows
            .iter()
            .map(|r| (r.reported_mt, r.estimated_mt))
            .collect::<Vec<_>>(),
    )?;
    let mape_from_recomputed = checks.iter().map(|c| c.ape_from_recomputed).sum::<f64>() / n;
    let average_diverges =
        printed_average.is_some_and(|avg| (avg - mean_printed_ape).abs() > AVERAGE_TOLERANCE);
    if average_diverges {
        log::warn!(
            "printed average {:.2} differs from the mean of the printed column {:.2}",
            printed_average.unwrap_or_default(),
            mean_printed_ape
        );
    }
    Ok(CaseStudyAudit {
        rows: checks,
        mean_printed_ape,
        mape_from_printed_estimates,
        mape_from_recomputed,
        printed_average,
        average_diverges,
    })
}

/// Per-row audit CSV followed by `# key,value` summary lines.
pub fn write_audit_csv<W: Write>(mut w: W, audit: &CaseStudyAudit) -> Result<()> {
    {
        let mut csv = csv::Writer::from_writer(&mut w);
        csv.write_record([
            "company",
            "recomputed_estimate",
            "estimate_gap_pct",
            "ape_from_printed_estimate",
            "ape_from_recomputed",
            "printed_ape",
            "printed_ape_consistent",
        ])?;
        for c in &audit.rows {
            csv.write_record([
                c.company.clone(),
                format!("{:.4}", c.recomputed_estimate),
                format!("{:.4}", c.estimate_gap_pct),
                format!("{:.4}", c.ape_from_printed_estimate),
                format!("{:.4}", c.ape_from_recomputed),
                format!("{:.2}", c.printed_ape),
                c.printed_ape_consistent.to_string(),
            ])?;
        }
        csv.flush()?;
    }
    writeln!(w, "# mean_printed_ape,{:.4}", audit.mean_printed_ape)?;
    writeln!(w, "# mape_from_printed_estimates,{:.4}", audit.mape_from_printed_estimates)?;
    writeln!(w, "# mape_from_recomputed,{:.4}", audit.mape_from_recomputed)?;
    if let Some(avg) = audit.printed_average {
        writeln!(w, "# printed_average,{avg:.2}")?;
        writeln!(w, "# average_diverges,{}", audit.average_diverges)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_examples() {
        assert!((estimate(86.0, 0.0588).unwrap() - 5.0568).abs() < 1e-12);
        assert_eq!(estimate(0.0, 3.2).unwrap(), 0.0);
        assert!((estimate(12.74, 1.6340).unwrap() - 20.817_16).abs() < 1e-9);
        assert!(matches!(estimate(-1.0, 1.0), Err(Error::Negative { .. })));
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[(3.0, 3.0), (1.5, 1.5)]).unwrap(), 0.0);
        assert!((mape(&[(97.00, 91.25)]).unwrap() - 5.927_835).abs() < 1e-6);
        assert!((mape(&[(19.63, 21.44)]).unwrap() - 9.220_581).abs() < 1e-6);
        assert!(mape(&[]).is_err());
        assert!(mape(&[(0.0, 1.0)]).is_err());
    }

    #[test]
    fn table_loading() {
        let t = IntensityTable::load("code,intensity\n311,0.5\n31-33,1.25\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("31-33", None), Some(1.25));
        assert!(matches!(IntensityTable::load("".as_bytes()), Err(Error::Empty(_))));
        assert!(matches!(
            IntensityTable::load("code,intensity\n".as_bytes()),
            Err(Error::Empty(_))
        ));
        match IntensityTable::load("code,intensity\n311,0.5\n311,0.7\n".as_bytes()) {
            Err(Error::DuplicateIntensity { code, .. }) => assert_eq!(code, "311"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(IntensityTable::load("code,intensity\n311,-0.5\n".as_bytes()).is_err());
        assert!(IntensityTable::load("code,intensity\n311,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn regions_fall_back_to_global_entry() {
        let t = IntensityTable::load(
            "code,intensity,region\n311,0.5,\n311,0.9,EU\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(t.get("311", Some("EU")), Some(0.9));
        assert_eq!(t.get("311", Some("US")), Some(0.5));
        assert_eq!(t.get("311", None), Some(0.5));
    }

    #[test]
    fn ancestor_fallback() {
        let tax = Taxonomy::parse_str(
            r#"{"code":"31","level":2,"title":"m","description":"m"}
{"code":"311","level":3,"title":"f","description":"f"}
{"code":"311111","level":6,"title":"d","description":"d"}"#,
        )
        .unwrap();
        let t = IntensityTable::load("code,intensity\n31,2.0\n".as_bytes()).unwrap();
        let r = t.resolve("311111", &tax, None).unwrap();
        assert_eq!(r.code, "31");
        assert_eq!(r.fallback_level, 2);
        assert!(IntensityTable::load("code,intensity\n99,2.0\n".as_bytes())
            .unwrap()
            .resolve("311111", &tax, None)
            .is_none());
    }
}
