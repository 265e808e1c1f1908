//! Exhaustive cosine search of enterprise descriptions against leaf classes.
//!
//! Uses the hashing encoder so it runs without any model files.

use std::fs::File;
use std::io::BufReader;

use sector_engine::corpus::{self, Preprocessor};
use sector_engine::embedding::{EmbeddingStore, HashingEncoder, TextEncoder, flat_mips};
use sector_engine::pipeline::{node_text, prepare_text};
use sector_engine::Taxonomy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let tax = Taxonomy::parse(BufReader::new(File::open(format!("{dir}/taxonomy.jsonl"))?))?;
    let firms = corpus::load_enterprises(BufReader::new(File::open(format!("{dir}/enterprises.jsonl"))?))?;
    let stop = corpus::load_stopwords(BufReader::new(File::open(format!("{dir}/stopwords.txt"))?))?;
    let pre = Preprocessor::new(stop);
    let encoder = HashingEncoder::new(512, 1)?;

    let leaves: Vec<_> = tax.leaves().collect();
    let texts: Vec<String> = leaves.iter().map(|n| prepare_text(&node_text(n), Some(&pre))).collect();
    let mut store = EmbeddingStore::new("leaves", 512)?;
    for (n, v) in leaves.iter().zip(encoder.encode(&texts)?) {
        store.insert(n.code.clone(), v)?;
    }

    for firm in firms.iter().take(6) {
        let q = encoder.encode_one(&pre.apply(&firm.description))?;
        let top = flat_mips(&q, &store, 3)?;
        let shown: Vec<String> = top.iter().map(|(c, s)| format!("{c} ({s:.3})")).collect();
        println!("{:<12} truth {:?}  top-3 {}", firm.name, firm.naics_codes, shown.join(", "));
    }
    Ok(())
}
