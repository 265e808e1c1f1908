//! Round trips of the on-disk formats and invariants of the scoring math.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use approx::assert_relative_eq;
use proptest::prelude::*;
use sector_engine::adapter::mnr_loss;
use sector_engine::embedding::{
    HttpEncoder, TextEncoder, cosine, flat_mips, read_emb_binary, read_emb_jsonl, write_emb_binary, write_emb_jsonl,
};
use sector_engine::evaluation::{Truths, acc_at_k};
use sector_engine::reasoning::ScoredCode;
use sector_engine::{Adapter, ClassificationResult, EmbeddingStore, Taxonomy, Vector, rng, synthetic};

fn vector(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-10.0f32..10.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn store(max_dim: usize, max_len: usize) -> impl Strategy<Value = EmbeddingStore> {
    (1..=max_dim, 1..=max_len).prop_flat_map(|(dim, n)| {
        prop::collection::vec(vector(dim), n).prop_map(move |vs| {
            let mut s = EmbeddingStore::new("p", dim).unwrap();
            for (i, v) in vs.into_iter().enumerate() {
                s.insert(format!("id{i}"), Vector::new(v).unwrap()).unwrap();
            }
            s
        })
    })
}

fn same_store(a: &EmbeddingStore, b: &EmbeddingStore) -> bool {
    a.dim() == b.dim() && a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x == y)
}

proptest! {
    #[test]
    fn binary_container_roundtrips(s in store(12, 20)) {
        let mut buf = Vec::new();
        write_emb_binary(&mut buf, &s).unwrap();
        let back = read_emb_binary(buf.as_slice(), "p").unwrap();
        prop_assert!(same_store(&s, &back));
    }

    #[test]
    fn jsonl_roundtrips(s in store(12, 20)) {
        let mut buf = Vec::new();
        write_emb_jsonl(&mut buf, &s).unwrap();
        let back = read_emb_jsonl(buf.as_slice(), "p").unwrap();
        prop_assert!(same_store(&s, &back));
    }

    #[test]
    fn truncated_binary_is_rejected(s in store(6, 6), cut in 1usize..64) {
        let mut buf = Vec::new();
        write_emb_binary(&mut buf, &s).unwrap();
        let keep = buf.len().saturating_sub(cut);
        prop_assert!(read_emb_binary(&buf[..keep], "p").is_err());
    }

    #[test]
    fn taxonomy_write_parse_roundtrips(seed in any::<u64>(), depth in 1usize..4, branching in 1usize..5) {
        let mut r = rng::seeded(seed);
        let tax = synthetic::random_tree(&mut r, depth, branching, 0.2).unwrap();
        let mut buf = Vec::new();
        tax.write(&mut buf).unwrap();
        let back = Taxonomy::parse(buf.as_slice()).unwrap();
        prop_assert!(tax.nodes().eq(back.nodes()));
        prop_assert_eq!(tax.levels(), back.levels());
    }

    #[test]
    fn adapter_roundtrips(dim in 1usize..6, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let weights = synthetic::gaussian(&mut r, dim * dim);
        let a = Adapter::from_weights(dim, weights, "level3").unwrap();
        let mut buf = Vec::new();
        a.write(&mut buf).unwrap();
        let back = Adapter::read(buf.as_slice()).unwrap();
        let narrowed: Vec<f64> = a.weights().iter().map(|&w| f64::from(w as f32)).collect();
        prop_assert_eq!(narrowed.as_slice(), back.weights());
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        prop_assert_eq!(buf, again);
        prop_assert_eq!(back.namespace(), "level3");
    }

    #[test]
    fn cosine_is_symmetric_and_scale_invariant(
        (a, b) in (1usize..10).prop_flat_map(|d| (vector(d), vector(d))),
        scale in 0.1f32..10.0,
    ) {
        let va = Vector::new(a.clone()).unwrap();
        let vb = Vector::new(b).unwrap();
        let scaled = Vector::new(a.iter().map(|x| x * scale).collect()).unwrap();
        let ab = cosine(&va, &vb).unwrap();
        prop_assert_eq!(ab, cosine(&vb, &va).unwrap());
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
        assert_relative_eq!(ab, cosine(&scaled, &vb).unwrap(), epsilon = 1e-5);
    }

    #[test]
    fn flat_search_is_sorted_and_bounded(s in store(6, 30), k in 1usize..40) {
        let q = s.iter().next().unwrap().1.clone();
        let hits = flat_mips(&q, &s, k).unwrap();
        prop_assert_eq!(hits.len(), k.min(s.len()));
        prop_assert!(hits.windows(2).all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)));
    }

    #[test]
    fn loss_ignores_batch_order(
        pairs in (1usize..6).prop_flat_map(|d| prop::collection::vec((vector(d), vector(d)), 1..8)),
        seed in any::<u64>(),
    ) {
        let q: Vec<Vector> = pairs.iter().map(|(a, _)| Vector::new(a.clone()).unwrap()).collect();
        let d: Vec<Vector> = pairs.iter().map(|(_, b)| Vector::new(b.clone()).unwrap()).collect();
        let mut order: Vec<usize> = (0..q.len()).collect();
        rng::shuffle(&mut rng::seeded(seed), &mut order);
        let qp: Vec<Vector> = order.iter().map(|&i| q[i].clone()).collect();
        let dp: Vec<Vector> = order.iter().map(|&i| d[i].clone()).collect();
        let base = mnr_loss(&q, &d, 1.0).unwrap();
        prop_assert!(base >= 0.0);
        assert_relative_eq!(base, mnr_loss(&qp, &dp, 1.0).unwrap(), epsilon = 1e-12, max_relative = 1e-12);
    }

    #[test]
    fn acc_at_k_is_monotone(
        rankings in prop::collection::vec((prop::collection::vec(0usize..15, 1..15), 0usize..15), 1..20),
    ) {
        let mut results = Vec::new();
        let mut truths = Truths::new();
        for (i, (codes, truth)) in rankings.iter().enumerate() {
            let id = format!("q{i}");
            let mut seen = BTreeSet::new();
            let leaves = codes
                .iter()
                .filter(|c| seen.insert(**c))
                .map(|c| ScoredCode { code: format!("c{c}"), score: 0.0 })
                .collect::<Vec<_>>();
            results.push(ClassificationResult {
                id: id.clone(),
                similarity_count: leaves.len(),
                visited_per_level: vec![leaves.len()],
                ranked_leaves: leaves,
                beam_trace: vec![],
            });
            truths.insert(id, [format!("c{truth}")].into());
        }
        let accs: Vec<f64> = (1..=16).map(|k| acc_at_k(&results, &truths, k).unwrap()).collect();
        prop_assert!(accs.windows(2).all(|w| w[0] <= w[1]));
    }
}

/// One-shot `/embed` server: answers a single request with two fixed vectors.
fn mock_server(status: &'static str) -> (String, thread::JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        reader.read_line(&mut request_line).unwrap();
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line.trim().is_empty() {
                break;
            }
            if let Some((name, value)) = line.split_once(':')
                && name.eq_ignore_ascii_case("content-length") {
                    length = value.trim().parse().unwrap();
                }
        }
        let mut body = vec![0u8; length];
        reader.read_exact(&mut body).unwrap();
        let payload = r#"{"dim": 3, "vectors": [[1.0, 0.0, 0.0], [0.0, 0.5, 0.5]]}"#;
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
            payload.len()
        )
        .unwrap();
        format!("{}{}", request_line.trim(), String::from_utf8(body).unwrap())
    });
    (url, handle)
}

#[test]
fn http_encoder_speaks_embed_protocol() {
    let (url, server) = mock_server("200 OK");
    let encoder = HttpEncoder::new(&url).unwrap();
    let vectors = encoder.encode(&["alpha".to_string(), "beta".to_string()]).unwrap();
    let seen = server.join().unwrap();
    assert!(seen.starts_with("POST /embed"), "{seen}");
    assert!(seen.ends_with(r#"{"texts":["alpha","beta"]}"#), "{seen}");
    assert_eq!(vectors.len(), 2);
    assert_eq!(vectors[1].as_slice(), &[0.0, 0.5, 0.5]);
}

#[test]
fn http_encoder_rejects_wrong_count_and_errors() {
    let (url, server) = mock_server("200 OK");
    let err = HttpEncoder::new(&url).unwrap().encode(&["only one".to_string()]);
    server.join().unwrap();
    assert!(err.is_err());

    let (url, server) = mock_server("500 Internal Server Error");
    let err = HttpEncoder::new(&url).unwrap().encode(&["x".to_string(), "y".to_string()]);
    server.join().unwrap();
    assert!(err.unwrap_err().to_string().contains("500"));
}
