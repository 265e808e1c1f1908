//! Writes and reads both embedding file formats, and prepares the text file
//! an external exporter turns into vectors.

use sector_engine::embedding::{
    EmbFormat, EmbeddingStore, HashingEncoder, TextRecord, load_embeddings, write_embeddings, write_texts,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let encoder = HashingEncoder::new(64, 0)?;
    let texts = [
        ("a", "scheduled passenger airline"),
        ("b", "express parcel delivery"),
        ("c", "crude oil extraction"),
    ];

    let mut store = EmbeddingStore::new("demo", 64)?;
    for (id, text) in texts {
        store.insert(id, encoder.encode_one(text)?)?;
    }
    for name in ["demo.emb", "demo.jsonl"] {
        let path = dir.path().join(name);
        let format = EmbFormat::from_path(&path);
        write_embeddings(&path, format, &store)?;
        let back = load_embeddings(&path, format, "demo")?;
        let same = store.iter().all(|(id, v)| back.get(id) == Some(v));
        println!("{name}: {:?}, {} bytes, {} vectors, identical: {same}", format, std::fs::metadata(&path)?.len(), back.len());
    }

    let records: Vec<TextRecord> = texts
        .iter()
        .map(|(id, text)| TextRecord { id: id.to_string(), text: text.to_string() })
        .collect();
    let mut buf = Vec::new();
    write_texts(&mut buf, &records)?;
    print!("exporter input:\n{}", String::from_utf8(buf)?);
    Ok(())
}
