//! Numerical checks of the entropy and cost claims for hierarchical search.
//!
//! Error model: a classifier over `K` classes with accuracy `p` puts mass `p`
//! on the true class and spreads `1 - p` uniformly over the other `K - 1`.
//! Its output entropy is
//!
//! ```text
//! H(p, K) = -p log2 p - (1 - p) log2((1 - p) / (K - 1))
//! ```
//!
//! A hierarchy of depth `d` and branching `b` with level accuracies `p_i` has
//! `H_G = sum_i H(p_i, b)`; the flat classifier over `b^d` classes with
//! accuracy `prod_i p_i` has `H_D = H(prod p_i, b^d)`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// `H(p, K)` in bits.
pub fn entropy_single(p: f64, classes: u64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("accuracy {p} outside (0, 1]")));
    }
    if classes == 0 {
        return Err(Error::InvalidArgument("class count must be at least 1".into()));
    }
    if p == 1.0 || classes == 1 {
        // with one class the only admissible accuracy is 1; treat any p as certain
        return Ok(0.0);
    }
    let wrong = 1.0 - p;
    let h = -p * p.log2() - wrong * (wrong / (classes - 1) as f64).log2();
    Ok(h.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyModel {
    pub branching: u64,
    pub depth: u32,
    /// One accuracy per level.
    pub accuracies: Vec<f64>,
}

impl EntropyModel {
    pub fn uniform(branching: u64, depth: u32, p: f64) -> Self {
        Self {
            branching,
            depth,
            accuracies: vec![p; depth as usize],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.branching < 2 || self.depth < 1 {
            return Err(Error::InvalidArgument(format!(
                "need branching >= 2 and depth >= 1, got b={} d={}",
                self.branching, self.depth
            )));
        }
        if self.accuracies.len() != self.depth as usize {
            return Err(Error::SizeMismatch(format!(
                "{} accuracies for depth {}",
                self.accuracies.len(),
                self.depth
            )));
        }
        Ok(())
    }

    pub fn flat_accuracy(&self) -> f64 {
        self.accuracies.iter().product()
    }
}

/// `H_G`: sum of per-level entropies over `b` classes.
pub fn entropy_hierarchical(model: &EntropyModel) -> Result<f64> {
    model.validate()?;
    model
        .accuracies
        .iter()
        .map(|&p| entropy_single(p, model.branching))
        .sum()
}

/// `H_D`: the flat classifier over `b^d` classes.
pub fn entropy_flat(model: &EntropyModel) -> Result<f64> {
    model.validate()?;
    entropy_single(model.flat_accuracy(), cost_flat(model.branching, model.depth)?)
}

/// One similarity per leaf: `b^d`.
pub fn cost_flat(branching: u64, depth: u32) -> Result<u64> {
    if branching < 2 || depth < 1 {
        return Err(Error::InvalidArgument(format!(
            "need b >= 2 and d >= 1, got b={branching} d={depth}"
        )));
    }
    branching
        .checked_pow(depth)
        .ok_or_else(|| Error::Overflow(format!("{branching}^{depth}")))
}

/// Similarities evaluated by the beam on a uniform tree: level 1 scores `b`
/// nodes; each later level scores `b` children of each node retained on the
/// previous level, and `min(k, candidates)` nodes are retained. With `k = 1`
/// this is `b * d`.
pub fn cost_hierarchical(branching: u64, depth: u32, k: u64) -> Result<u64> {
    if branching < 2 || depth < 1 || k < 1 {
        return Err(Error::InvalidArgument(format!(
            "need b >= 2, d >= 1, k >= 1, got b={branching} d={depth} k={k}"
        )));
    }
    let overflow = || Error::Overflow(format!("hierarchical cost b={branching} d={depth} k={k}"));
    let mut candidates = branching;
    let mut total = branching;
    for _ in 1..depth {
        let retained = k.min(candidates);
        candidates = retained.checked_mul(branching).ok_or_else(overflow)?;
        total = total.checked_add(candidates).ok_or_else(overflow)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremCell {
    pub branching: u64,
    pub depth: u32,
    pub p: f64,
    pub h_hierarchical: f64,
    pub h_flat: f64,
    pub cost_hierarchical: u64,
    pub cost_flat: u64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TheoremReport {
    pub cells: Vec<TheoremCell>,
    pub violations: Vec<TheoremCell>,
}

/// Slack for `H_G <= H_D`; the two sides agree to ~1e-15 at the uniform point.
pub const ENTROPY_TOLERANCE: f64 = 1e-12;

/// The standard grid: `b` in 2..=10, `d` in 1..=4, `p` in {0.50, 0.55, ..., 0.95, 0.99}
/// restricted to `p >= 1/b`.
pub fn standard_grid() -> Vec<EntropyModel> {
    let ps: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * f64::from(i)).chain([0.99]).collect();
    let mut grid = Vec::new();
    for b in 2..=10u64 {
        for d in 1..=4u32 {
            for &p in &ps {
                if p >= 1.0 / b as f64 {
                    grid.push(EntropyModel::uniform(b, d, p));
                }
            }
        }
    }
    grid
}

/// Evaluates `H_G <= H_D` on every model (costs use `k = 1`). Models must be
/// above chance: every `p_i >= 1/b`.
pub fn entropy_bound_check(grid: &[EntropyModel]) -> Result<TheoremReport> {
    let cells = grid
        .par_iter()
        .map(|m| {
            m.validate()?;
            let chance = 1.0 / m.branching as f64;
            if m.accuracies.iter().any(|&p| p < chance) {
                return Err(Error::InvalidArgument(format!(
                    "grid cell b={} has an accuracy below chance",
                    m.branching
                )));
            }
            let h_g = entropy_hierarchical(m)?;
            let h_d = entropy_flat(m)?;
            Ok(TheoremCell {
                branching: m.branching,
                depth: m.depth,
                p: m.accuracies[0],
                h_hierarchical: h_g,
                h_flat: h_d,
                cost_hierarchical: cost_hierarchical(m.branching, m.depth, 1)?,
                cost_flat: cost_flat(m.branching, m.depth)?,
                violation: h_g > h_d + ENTROPY_TOLERANCE,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = cells.iter().filter(|c| c.violation).cloned().collect();
    Ok(TheoremReport { cells, violations })
}

/// CSV with header `b,d,p,H_G,H_D,cost_hier,cost_flat,violation`.
pub fn write_report_csv<W: Write>(w: W, report: &TheoremReport) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["b", "d", "p", "H_G", "H_D", "cost_hier", "cost_flat", "violation"])?;
    for c in &report.cells {
        csv.write_record([
            c.branching.to_string(),
            c.depth.to_string(),
            format!("{:.2}", c.p),
            format!("{:.12}", c.h_hierarchical),
            format!("{:.12}", c.h_flat),
            c.cost_hierarchical.to_string(),
            c.cost_flat.to_string(),
            c.violation.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_single_examples() {
        assert_eq!(entropy_single(1.0, 1114).unwrap(), 0.0);
        assert!((entropy_single(0.25, 4).unwrap() - 2.0).abs() < 1e-12);
        // -0.9 log2 0.9 - 0.1 log2(0.1 / 9)
        assert!((entropy_single(0.9, 10).unwrap() - 0.785_988_093_7).abs() < 1e-9);
        assert!(entropy_single(0.0, 4).is_err());
        assert!(entropy_single(1.1, 4).is_err());
        assert!(entropy_single(0.5, 0).is_err());
    }

    #[test]
    fn hierarchical_examples() {
        let certain = EntropyModel::uniform(5, 3, 1.0);
        assert_eq!(entropy_hierarchical(&certain).unwrap(), 0.0);

        let half = EntropyModel::uniform(2, 2, 0.5);
        assert!((entropy_hierarchical(&half).unwrap() - 2.0).abs() < 1e-12);
        assert!((entropy_flat(&half).unwrap() - 2.0).abs() < 1e-12);

        let sharp = EntropyModel::uniform(2, 2, 0.99);
        let h_g = entropy_hierarchical(&sharp).unwrap();
        let h_d = entropy_flat(&sharp).unwrap();
        assert!((h_g - 0.161_586_271_8).abs() < 1e-9);
        assert!((h_d - 0.172_419_456_7).abs() < 1e-9);
        assert!(h_g < h_d);
    }

    #[test]
    fn degenerate_and_certain_cells() {
        let r = entropy_bound_check(&[EntropyModel::uniform(2, 1, 0.7)]).unwrap();
        assert_eq!(r.cells[0].h_hierarchical, r.cells[0].h_flat);
        assert!(r.violations.is_empty());
        let r = entropy_bound_check(&[EntropyModel::uniform(7, 3, 1.0)]).unwrap();
        assert_eq!(r.cells[0].h_hierarchical, 0.0);
        assert_eq!(r.cells[0].h_flat, 0.0);
        assert!(entropy_bound_check(&[EntropyModel::uniform(10, 2, 0.05)]).is_err());
    }

    #[test]
    fn cost_examples() {
        assert_eq!(cost_flat(10, 3).unwrap(), 1000);
        assert_eq!(cost_hierarchical(10, 3, 1).unwrap(), 30);
        // full beam: 3 + 9 + 27
        assert_eq!(cost_hierarchical(3, 3, 9).unwrap(), 39);
        assert_eq!(cost_hierarchical(3, 3, 1000).unwrap(), 39);
        assert!(matches!(cost_flat(10, 40), Err(Error::Overflow(_))));
        assert!(cost_hierarchical(1, 3, 1).is_err());
    }

    #[test]
    fn csv_header() {
        let r = entropy_bound_check(&[EntropyModel::uniform(2, 1, 0.5)]).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("b,d,p,H_G,H_D,cost_hier,cost_flat,violation\n2,1,0.50,"));
    }
}
