//! Revenue x intensity estimates and an audit of a published comparison
//! table: every row is recomputed from its own columns.

use std::fs::File;
use std::io::BufReader;

use sector_engine::Taxonomy;
use sector_engine::emission::{IntensityTable, audit_case_study, estimate, load_case_study};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let tax = Taxonomy::parse(BufReader::new(File::open(format!("{dir}/taxonomy.jsonl"))?))?;
    let table = IntensityTable::load(File::open(format!("{dir}/intensities.csv"))?)?;

    // 481111 has no own factor; lookup climbs to the subsector
    for code in ["336111", "481111", "484121"] {
        match table.resolve(code, &tax, None) {
            Some(r) => println!("{code}: {} from {} ({} levels up)", r.intensity, r.code, r.fallback_level),
            None => println!("{code}: no factor"),
        }
    }
    println!("86.00 bn USD x 0.0588 = {:.4} Mt", estimate(86.0, 0.0588)?);

    let rows = load_case_study(File::open(format!("{dir}/case_study.csv"))?)?;
    let audit = audit_case_study(&rows, Some(45.88))?;
    println!("\nmean of the printed APE column   {:.2}", audit.mean_printed_ape);
    println!("MAPE from printed estimates      {:.2}", audit.mape_from_printed_estimates);
    println!("MAPE from revenue x intensity    {:.2}", audit.mape_from_recomputed);
    println!("printed average diverges: {}", audit.average_diverges);
    for c in audit.rows.iter().filter(|c| !c.printed_ape_consistent) {
        println!("  {:<10} printed {:>6.2}, columns give {:>6.2}", c.company, c.printed_ape, c.ape_from_printed_estimate);
    }
    Ok(())
}
