//! On-disk embedding formats.
//!
//! `EMB1` (little-endian):
//!
//! ```text
//! "EMB1" | version u8 = 1 | dim u32 | count u64 |
//! count x ( id_len u16 | id utf-8 | dim x f32 )
//! ```
//!
//! `emb-jsonl`: one `{"id": "...", "vector": [...]}` per line, the first line
//! fixing the dimension.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{EmbeddingStore, Vector};
use crate::error::{Error, Result};

pub(crate) const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub(crate) const EMB_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbFormat {
    Binary,
    Jsonl,
}

impl EmbFormat {
    /// `.jsonl`/`.json` means JSON lines, anything else the binary container.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json") => EmbFormat::Jsonl,
            _ => EmbFormat::Binary,
        }
    }
}

pub fn load_embeddings(path: &Path, format: EmbFormat, namespace: &str) -> Result<EmbeddingStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        EmbFormat::Binary => read_emb_binary(reader, namespace),
        EmbFormat::Jsonl => read_emb_jsonl(reader, namespace),
    }
}

pub fn write_embeddings(path: &Path, format: EmbFormat, store: &EmbeddingStore) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        EmbFormat::Binary => write_emb_binary(&mut w, store)?,
        EmbFormat::Jsonl => write_emb_jsonl(&mut w, store)?,
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn truncated(what: impl Into<String>) -> impl FnOnce(std::io::Error) -> Error {
    let what = what.into();
    move |e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::Truncated(what)
        } else {
            Error::IoBare(e)
        }
    }
}

pub fn read_emb_binary<R: Read>(mut r: R, namespace: &str) -> Result<EmbeddingStore> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated("header"))?;
    if &magic != EMB_MAGIC {
        return Err(Error::BadHeader(format!("magic {magic:02x?}, expected \"EMB1\"")));
    }
    let version = r.read_u8().map_err(truncated("header"))?;
    if version != EMB_VERSION {
        return Err(Error::BadHeader(format!("unsupported version {version}")));
    }
    let dim = r.read_u32::<LittleEndian>().map_err(truncated("header"))? as usize;
    let count = r.read_u64::<LittleEndian>().map_err(truncated("header"))?;

    let mut store = EmbeddingStore::new(namespace, dim)?;
    for index in 0..count {
        let at = || format!("record {index}");
        let id_len = r.read_u16::<LittleEndian>().map_err(truncated(at()))?;
        let mut id = vec![0u8; id_len as usize];
        r.read_exact(&mut id).map_err(truncated(at()))?;
        let id = String::from_utf8(id)
            .map_err(|_| Error::BadHeader(format!("record {index}: id is not UTF-8")))?;
        let mut components = vec![0f32; dim];
        r.read_f32_into::<LittleEndian>(&mut components)
            .map_err(truncated(at()))?;
        let vector = Vector::new(components).map_err(|_| Error::NonFinite {
            id: Some(id.clone()),
        })?;
        store.insert(id, vector)?;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::BadHeader(format!(
            "trailing bytes after {count} declared records"
        )));
    }
    Ok(store)
}

pub fn write_emb_binary<W: Write>(mut w: W, store: &EmbeddingStore) -> Result<()> {
    w.write_all(EMB_MAGIC)?;
    w.write_u8(EMB_VERSION)?;
    w.write_u32::<LittleEndian>(store.dim() as u32)?;
    w.write_u64::<LittleEndian>(store.len() as u64)?;
    for (id, v) in store.iter() {
        let len = u16::try_from(id.len())
            .map_err(|_| Error::InvalidArgument(format!("id `{id}` longer than 65535 bytes")))?;
        w.write_u16::<LittleEndian>(len)?;
        w.write_all(id.as_bytes())?;
        for &c in v.as_slice() {
            w.write_f32::<LittleEndian>(c)?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    vector: Vec<f32>,
}

pub fn read_emb_jsonl<R: BufRead>(r: R, namespace: &str) -> Result<EmbeddingStore> {
    let mut store: Option<EmbeddingStore> = None;
    let mut index = 0usize;
    for (line_idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: line_idx + 1,
                reason: e.to_string(),
            })?;
        let store = match &mut store {
            Some(s) => s,
            None => store.insert(EmbeddingStore::new(namespace, rec.vector.len())?),
        };
        if rec.vector.len() != store.dim() {
            return Err(Error::RecordDimension {
                index,
                expected: store.dim(),
                actual: rec.vector.len(),
            });
        }
        let vector = Vector::new(rec.vector).map_err(|_| Error::NonFinite {
            id: Some(rec.id.clone()),
        })?;
        store.insert(rec.id, vector)?;
        index += 1;
    }
    store.ok_or(Error::Empty("embedding file"))
}

pub fn write_emb_jsonl<W: Write>(mut w: W, store: &EmbeddingStore) -> Result<()> {
    for (id, v) in store.iter() {
        let rec = JsonRecord {
            id: id.to_string(),
            vector: v.as_slice().to_vec(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(dim: u32, count: u64) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"EMB1");
        buf.push(1);
        buf.extend_from_slice(&dim.to_le_bytes());
        buf.extend_from_slice(&count.to_le_bytes());
        buf
    }

    fn record(buf: &mut Vec<u8>, id: &str, comps: &[f32]) {
        buf.extend_from_slice(&(id.len() as u16).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        for c in comps {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }

    #[test]
    fn reads_handwritten_binary() {
        let mut buf = header(4, 2);
        record(&mut buf, "a", &[1.0, 2.0, 3.0, 4.0]);
        record(&mut buf, "bb", &[0.5, 0.0, 0.0, -1.0]);
        let store = read_emb_binary(buf.as_slice(), "level6").unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.dim(), 4);
        assert_eq!(store.get("bb").unwrap().as_slice(), &[0.5, 0.0, 0.0, -1.0]);

        let mut out = Vec::new();
        write_emb_binary(&mut out, &store).unwrap();
        assert_eq!(out, buf);
    }

    #[test]
    fn short_record_is_truncation_with_index() {
        let mut buf = header(4, 2);
        record(&mut buf, "a", &[1.0, 2.0, 3.0, 4.0]);
        record(&mut buf, "b", &[1.0, 2.0, 3.0]);
        match read_emb_binary(buf.as_slice(), "x") {
            Err(Error::Truncated(what)) => assert_eq!(what, "record 1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_and_count_checks() {
        let mut bad = header(2, 0);
        bad[3] = b'2';
        assert!(matches!(read_emb_binary(bad.as_slice(), "x"), Err(Error::BadHeader(_))));
        let mut v2 = header(2, 0);
        v2[4] = 2;
        assert!(matches!(read_emb_binary(v2.as_slice(), "x"), Err(Error::BadHeader(_))));

        let mut extra = header(2, 1);
        record(&mut extra, "a", &[1.0, 0.0]);
        record(&mut extra, "b", &[1.0, 0.0]);
        assert!(read_emb_binary(extra.as_slice(), "x").is_err());

        let mut zero = header(2, 1);
        record(&mut zero, "z", &[0.0, 0.0]);
        assert!(matches!(read_emb_binary(zero.as_slice(), "x"), Err(Error::ZeroNorm { .. })));

        let mut dup = header(2, 2);
        record(&mut dup, "a", &[1.0, 0.0]);
        record(&mut dup, "a", &[0.0, 1.0]);
        assert!(read_emb_binary(dup.as_slice(), "x").is_err());
    }

    #[test]
    fn jsonl_dimension_fixed_by_first_line() {
        let text = "{\"id\":\"a\",\"vector\":[1,2,3,4]}\n{\"id\":\"b\",\"vector\":[1,2,3]}\n";
        assert!(matches!(
            read_emb_jsonl(text.as_bytes(), "x"),
            Err(Error::RecordDimension { index: 1, expected: 4, actual: 3 })
        ));
        let ok = "{\"id\":\"a\",\"vector\":[1,2]}\n\n{\"id\":\"b\",\"vector\":[0,1]}\n";
        assert_eq!(read_emb_jsonl(ok.as_bytes(), "x").unwrap().len(), 2);
    }
}
