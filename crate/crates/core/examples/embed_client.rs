//! Encodes texts through a running `/embed` service.
//!
//! `cargo run --example embed_client -- http://127.0.0.1:8080 "some text" ...`

use sector_engine::embedding::{HttpEncoder, TextEncoder, cosine};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let Some(url) = args.next() else {
        eprintln!("usage: embed_client <base-url> <text>...");
        std::process::exit(1);
    };
    let texts: Vec<String> = args.collect();
    let encoder = HttpEncoder::new(&url)?;
    let vectors = encoder.encode(&texts)?;
    println!("{} vectors of dim {} from {}", vectors.len(), vectors.first().map_or(0, |v| v.dim()), encoder.endpoint());
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate().skip(i + 1) {
            println!("cos({i}, {j}) = {:.4}", cosine(a, b)?);
        }
    }
    Ok(())
}
