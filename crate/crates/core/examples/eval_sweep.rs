//! Accuracy and cost as the beam widens, against the exhaustive baseline.

use std::collections::HashMap;

use sector_engine::evaluation::{LabeledQuery, evaluate_flat, k_sweep, write_eval_csv};
use sector_engine::synthetic::{NuisanceSpec, NuisanceTask};
use sector_engine::{BeamConfig, GroupReasoner, QueryInput};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = NuisanceSpec {
        nuisance_scale: 0.3,
        noise_scale: 0.12,
        ..NuisanceSpec::default()
    };
    let task = NuisanceTask::generate(&spec)?;
    let truths = task.truths();
    let queries: Vec<LabeledQuery> = task
        .labels
        .iter()
        .map(|(id, _)| LabeledQuery {
            id: id.clone(),
            query: QueryInput::Shared(task.queries.get(id).expect("generated").clone()),
            truths: truths[id].clone(),
        })
        .collect();

    let mut reasoner =
        GroupReasoner::new(&task.taxonomy, &task.stores, &HashMap::new(), BeamConfig::per_level(&task.taxonomy, 1))?;
    let mut rows = vec![evaluate_flat(&reasoner, &queries, "flat")?];
    rows.extend(k_sweep(&mut reasoner, &queries, &[1, 2, 3, 5, 10, 20, 60], "group")?);
    write_eval_csv(std::io::stdout().lock(), &rows, true)?;
    Ok(())
}
