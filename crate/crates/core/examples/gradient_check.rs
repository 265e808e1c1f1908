//! Compares the analytic loss gradient with central finite differences.

use rand_distr::{Distribution, StandardNormal};
use sector_engine::adapter::{finite_diff_check, mnr_loss_report};
use sector_engine::{Adapter, Vector, rng};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dim = 16;
    let mut r = rng::seeded(3);
    let mut draw = |n: usize| -> Result<Vec<Vector>, sector_engine::Error> {
        (0..n)
            .map(|_| Vector::from_f64(&(0..dim).map(|_| StandardNormal.sample(&mut r)).collect::<Vec<f64>>()))
            .collect()
    };
    let queries = draw(8)?;
    let docs = draw(8)?;
    let weights: Vec<f64> = (0..dim * dim)
        .map(|i| if i % (dim + 1) == 0 { 1.0 } else { 0.05 * ((i * 7 % 11) as f64 - 5.0) / 5.0 })
        .collect();
    let adapter = Adapter::from_weights(dim, weights, "demo")?;

    let report = mnr_loss_report(&queries, &docs, 1.0)?;
    println!("loss at identity: {:.6}", report.loss);
    for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
        let g = finite_diff_check(&queries, &docs, &adapter, 1.0, eps)?;
        println!(
            "eps {eps:e}: max relative error {:.3e}, max absolute {:.3e} (entry {})",
            g.max_relative_error, g.max_absolute_error, g.worst_entry
        );
    }
    Ok(())
}
