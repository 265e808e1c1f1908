//! Text cleaning, random-replacement augmentation and the seeded split.

use std::fs::File;
use std::io::BufReader;

use sector_engine::corpus::{self, Partition, Preprocessor, SplitRatios, augment_random_replace, split};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let firms = corpus::load_enterprises(BufReader::new(File::open(format!("{dir}/enterprises.jsonl"))?))?;
    let pre = Preprocessor::new(corpus::load_stopwords(BufReader::new(File::open(format!("{dir}/stopwords.txt"))?))?);

    let vocab: Vec<String> = ["logistics", "retail", "mining", "software", "farming"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for f in firms.iter().take(3) {
        let clean = pre.apply(&f.description);
        println!("{}\n  raw:       {}\n  clean:     {clean}", f.name, f.description);
        println!("  augmented: {}", augment_random_replace(&clean, 0.2, &vocab, sector_engine::rng::derive_seed(9, &f.id))?);
    }

    let ids: Vec<&str> = firms.iter().map(|f| f.id.as_str()).collect();
    let parts = split(&ids, SplitRatios::STANDARD, 42)?;
    println!("\nsplit sizes (train, validation, test): {:?}", parts.sizes());
    println!("test ids: {:?}", parts.ids(Partition::Test));
    Ok(())
}
