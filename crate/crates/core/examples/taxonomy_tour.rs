//! Loads the shipped NAICS subset and walks it.
//!
//! Run with `cargo run --example taxonomy_tour`.

use std::fs::File;
use std::io::BufReader;

use sector_engine::Taxonomy;
use sector_engine::taxonomy::ROOT;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/taxonomy.jsonl");
    let tax = Taxonomy::parse(BufReader::new(File::open(path)?))?;

    println!("{} nodes on levels {:?}", tax.len(), tax.levels());
    for &level in tax.levels() {
        println!("  level {level}: {} nodes", tax.nodes_at_level(level).count());
    }
    println!("widest level: {}, widest family: {}", tax.max_level_width(), tax.max_branching());

    // range sectors have no numeric prefix, so their subsectors name them explicitly
    for code in tax.child_codes(ROOT)? {
        let node = tax.node(code)?;
        println!("{code:>6}  {}", node.title);
    }

    let leaf = "481111";
    println!("\npath of {leaf}: {:?}", tax.path_to_root(leaf)?);
    println!("sector of {leaf}: {:?}", tax.ancestor_at_level(leaf, 2)?);
    println!("siblings: {:?}", tax.child_codes(tax.parent(leaf)?.unwrap_or(ROOT))?);
    Ok(())
}
