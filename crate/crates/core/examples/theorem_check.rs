//! Entropy of hierarchical vs flat classification under a uniform error
//! model, plus the similarity budget of each search strategy.

use sector_engine::theory::{
    EntropyModel, cost_flat, cost_hierarchical, entropy_flat, entropy_hierarchical, standard_grid, entropy_bound_check,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let report = entropy_bound_check(&standard_grid())?;
    println!("{} grid cells, {} with H_G > H_D", report.cells.len(), report.violations.len());

    println!("\n b  d     p    H_G      H_D");
    for (b, d, p) in [(2, 2, 0.99), (10, 3, 0.9), (6, 4, 0.7), (4, 2, 0.25)] {
        let m = EntropyModel::uniform(b, d, p);
        println!("{b:>2} {d:>2} {p:>5.2} {:>8.5} {:>8.5}", entropy_hierarchical(&m)?, entropy_flat(&m)?);
    }

    println!("\nsimilarities on a b=10, d=3 tree");
    let flat = cost_flat(10, 3)?;
    for k in [1, 3, 10, 100] {
        let h = cost_hierarchical(10, 3, k)?;
        println!("  k={k:<3} beam {h:>5}  flat {flat}  ratio {:.1}x", flat as f64 / h as f64);
    }
    Ok(())
}
