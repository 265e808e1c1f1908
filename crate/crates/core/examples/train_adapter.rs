//! Trains a leaf-level adapter on queries corrupted along shared nuisance
//! directions and compares held-out Acc@1 before and after.

use std::collections::{BTreeSet, HashMap};

use sector_engine::adapter::{self, TrainConfig};
use sector_engine::corpus::{Partition, SplitRatios, split};
use sector_engine::evaluation::{LabeledQuery, evaluate_flat};
use sector_engine::synthetic::{NuisanceSpec, NuisanceTask};
use sector_engine::{Adapter, BeamConfig, GroupReasoner, QueryInput};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = NuisanceTask::generate(&NuisanceSpec::default())?;
    let ids: Vec<&str> = task.labels.iter().map(|(q, _)| q.as_str()).collect();
    let parts = split(&ids, SplitRatios::STANDARD, 11)?;
    let train_ids: BTreeSet<&str> = parts.ids(Partition::Train).into_iter().collect();

    let leaf_level = *task.taxonomy.levels().last().expect("non-empty");
    let ns = format!("level{leaf_level}");
    let pairs = task.level_pairs(&train_ids, leaf_level)?;
    let cfg = TrainConfig { seed: 1, ..TrainConfig::default() };
    let outcome = adapter::train(&pairs, &task.queries, &task.stores[&ns], &cfg)?;
    println!(
        "{} pairs in {} batches, loss {:.4} -> {:.4}",
        pairs.len(),
        outcome.batches,
        outcome.history[0],
        outcome.history.last().copied().unwrap_or(f64::NAN)
    );

    let truths = task.truths();
    let held_out: Vec<LabeledQuery> = parts
        .ids(Partition::Test)
        .into_iter()
        .map(|id| LabeledQuery {
            id: id.to_string(),
            query: QueryInput::Shared(task.queries.get(id).expect("generated").clone()),
            truths: truths[id].clone(),
        })
        .collect();

    let beam = BeamConfig::per_level(&task.taxonomy, 3);
    let base = GroupReasoner::new(&task.taxonomy, &task.stores, &HashMap::new(), beam.clone())?;
    let adapters: HashMap<String, Adapter> = [(ns, outcome.adapter)].into();
    let tuned = GroupReasoner::new(&task.taxonomy, &task.stores, &adapters, beam)?;
    let before = evaluate_flat(&base, &held_out, "identity")?;
    let after = evaluate_flat(&tuned, &held_out, "trained")?;
    println!("held-out Acc@1: identity {:.1}%, trained {:.1}%", before.outcome.acc(1), after.outcome.acc(1));
    Ok(())
}
