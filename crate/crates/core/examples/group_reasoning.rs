//! Level-by-level beam search on a synthetic tree: how the beam width trades
//! similarity evaluations against agreement with exhaustive search.

use std::collections::HashMap;

use sector_engine::rng;
use sector_engine::synthetic::{hierarchical_vectors, per_level_stores, uniform_tree};
use sector_engine::{BeamConfig, GroupReasoner, QueryInput, SearchMode, Vector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tax = uniform_tree(&[10, 10, 10])?;
    let mut r = rng::seeded(5);
    let vectors = hierarchical_vectors(&tax, 48, 0.6, &mut r)?;
    let stores = per_level_stores(&tax, &vectors)?;

    // a query near leaf 472, pulled slightly towards 471
    let target = &vectors["472"];
    let other = &vectors["471"];
    let q: Vec<f64> = target.iter().zip(other).map(|(a, b)| a + 0.4 * b).collect();
    let query = QueryInput::Shared(Vector::from_f64(&q)?);

    let mut reasoner = GroupReasoner::new(&tax, &stores, &HashMap::new(), BeamConfig::per_level(&tax, 1))?;
    let flat = reasoner.classify("q", &query, SearchMode::Flat)?;
    println!("flat: top {:?} after {} similarities", flat.top().map(|t| &t.code), flat.similarity_count);

    for k in [1, 2, 5, 10, 100] {
        reasoner.set_k(k)?;
        let r = reasoner.group("q", &query)?;
        let agree = r.codes().zip(flat.codes()).take_while(|(a, b)| a == b).count();
        println!(
            "k={k:<3} top {:?}  sims {:<4} per level {:?}  prefix agreeing with flat: {agree}",
            r.top().map(|t| &t.code),
            r.similarity_count,
            r.visited_per_level,
        );
        if k == 2 {
            println!("       beam trace {:?}", r.beam_trace);
        }
    }
    Ok(())
}
