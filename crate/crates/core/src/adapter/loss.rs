//! Multiple negatives ranking loss and its gradient.
//!
//! For a batch of positive pairs `(Q_i, D_i)`, every other document in the
//! batch is a negative for `Q_i`:
//!
//! ```text
//! L = -(1/n) * sum_i log( exp(s * cos(Q_i, D_i)) / sum_j exp(s * cos(Q_i, D_j)) )
//! ```
//!
//! `s` is the similarity scale; `s = 1` is the plain cosine softmax. With an
//! adapter, `Q_i = W q_i` and `D_j = W d_j` (the same `W` on both sides).
//!
//! All arithmetic is `f64` with reductions in fixed index order.

use crate::embedding::Vector;
use crate::error::{Error, Result};

use super::Adapter;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    /// Documents that equal an earlier document of the same batch. They act
    /// as false negatives.
    pub duplicate_documents: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    /// `dL/dW`, row-major, same shape as the adapter.
    pub gradient: Vec<f64>,
}

/// Normalised batch after the adapter.
struct Forward {
    n: usize,
    q_hat: Vec<Vec<f64>>,
    d_hat: Vec<Vec<f64>>,
    q_norm: Vec<f64>,
    d_norm: Vec<f64>,
    cos: Vec<f64>,
    prob: Vec<f64>,
    loss: f64,
}

fn check_batch(queries: usize, documents: usize) -> Result<()> {
    if queries != documents {
        return Err(Error::SizeMismatch(format!(
            "{queries} queries but {documents} documents"
        )));
    }
    if queries == 0 {
        return Err(Error::Empty("batch"));
    }
    Ok(())
}

fn normalise(v: Vec<f64>) -> Result<(Vec<f64>, f64)> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(if norm == 0.0 {
            Error::ZeroNorm { id: None }
        } else {
            Error::NonFinite { id: None }
        });
    }
    Ok((v.into_iter().map(|x| x / norm).collect(), norm))
}

fn forward(queries: &[Vec<f64>], documents: &[Vec<f64>], scale: f64) -> Result<Forward> {
    check_batch(queries.len(), documents.len())?;
    let n = queries.len();
    let dim = queries[0].len();
    if let Some(bad) = queries.iter().chain(documents).find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    let (q_hat, q_norm): (Vec<_>, Vec<_>) = queries
        .iter()
        .map(|q| normalise(q.clone()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let (d_hat, d_norm): (Vec<_>, Vec<_>) = documents
        .iter()
        .map(|d| normalise(d.clone()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();

    let mut cos = vec![0.0; n * n];
    let mut prob = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            cos[i * n + j] = q_hat[i].iter().zip(&d_hat[j]).map(|(a, b)| a * b).sum();
        }
        let row = &cos[i * n..(i + 1) * n];
        let max = row.iter().map(|c| scale * c).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|c| (scale * c - max).exp()).sum();
        let log_denom = max + denom.ln();
        for j in 0..n {
            prob[i * n + j] = (scale * row[j] - log_denom).exp();
        }
        total += log_denom - scale * row[i];
    }
    Ok(Forward {
        n,
        q_hat,
        d_hat,
        q_norm,
        d_norm,
        cos,
        prob,
        loss: total / n as f64,
    })
}

fn count_duplicates(documents: &[Vec<f64>]) -> usize {
    (0..documents.len())
        .filter(|&j| documents[..j].contains(&documents[j]))
        .count()
}

pub(crate) fn loss_f64(queries: &[Vec<f64>], documents: &[Vec<f64>], scale: f64) -> Result<f64> {
    Ok(forward(queries, documents, scale)?.loss)
}

/// Loss on raw embeddings plus duplicate-document diagnostics.
pub fn mnr_loss_report(queries: &[Vector], documents: &[Vector], scale: f64) -> Result<LossReport> {
    check_batch(queries.len(), documents.len())?;
    let q: Vec<Vec<f64>> = queries.iter().map(Vector::to_f64).collect();
    let d: Vec<Vec<f64>> = documents.iter().map(Vector::to_f64).collect();
    let duplicate_documents = count_duplicates(&d);
    if duplicate_documents > 0 {
        log::warn!("{duplicate_documents} duplicate document(s) in batch act as false negatives");
    }
    Ok(LossReport {
        loss: loss_f64(&q, &d, scale)?,
        duplicate_documents,
    })
}

pub fn mnr_loss(queries: &[Vector], documents: &[Vector], scale: f64) -> Result<f64> {
    Ok(mnr_loss_report(queries, documents, scale)?.loss)
}

/// Loss after applying `adapter` to both sides, on pre-widened base vectors.
pub(crate) fn adapted_loss(
    queries: &[Vec<f64>],
    documents: &[Vec<f64>],
    adapter: &Adapter,
    scale: f64,
) -> Result<f64> {
    let (q, d) = adapt(queries, documents, adapter)?;
    loss_f64(&q, &d, scale)
}

fn adapt(
    queries: &[Vec<f64>],
    documents: &[Vec<f64>],
    adapter: &Adapter,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let q = queries
        .iter()
        .map(|v| adapter.apply_slice(v))
        .collect::<Result<Vec<_>>>()?;
    let d = documents
        .iter()
        .map(|v| adapter.apply_slice(v))
        .collect::<Result<Vec<_>>>()?;
    Ok((q, d))
}

pub(crate) fn loss_and_gradient(
    queries: &[Vec<f64>],
    documents: &[Vec<f64>],
    adapter: &Adapter,
    scale: f64,
) -> Result<LossGradient> {
    check_batch(queries.len(), documents.len())?;
    let (uq, ud) = adapt(queries, documents, adapter)?;
    let fw = forward(&uq, &ud, scale)?;
    let n = fw.n;
    let dim = adapter.dim();

    // dL/dcos_ij = (s/n) * (P_ij - [i == j])
    let coef = scale / n as f64;
    let mut g_q = vec![vec![0.0; dim]; n];
    let mut g_d = vec![vec![0.0; dim]; n];
    for i in 0..n {
        for j in 0..n {
            let g = coef * (fw.prob[i * n + j] - if i == j { 1.0 } else { 0.0 });
            if g == 0.0 {
                continue;
            }
            let c = fw.cos[i * n + j];
            // d cos / d u = (v_hat - c * u_hat) / |u|, symmetric for v
            let gq = g / fw.q_norm[i];
            let gd = g / fw.d_norm[j];
            for r in 0..dim {
                g_q[i][r] += gq * (fw.d_hat[j][r] - c * fw.q_hat[i][r]);
                g_d[j][r] += gd * (fw.q_hat[i][r] - c * fw.d_hat[j][r]);
            }
        }
    }

    // u = W x  =>  dL/dW += (dL/du) x^T
    let mut gradient = vec![0.0; dim * dim];
    for (g, x) in g_q.iter().zip(queries).chain(g_d.iter().zip(documents)) {
        for r in 0..dim {
            let gr = g[r];
            if gr == 0.0 {
                continue;
            }
            let row = &mut gradient[r * dim..(r + 1) * dim];
            for (w, xc) in row.iter_mut().zip(x) {
                *w += gr * xc;
            }
        }
    }
    Ok(LossGradient {
        loss: fw.loss,
        gradient,
    })
}

/// `dL/dW` for a batch of base embeddings pushed through `adapter`.
pub fn mnr_gradient(
    queries: &[Vector],
    documents: &[Vector],
    adapter: &Adapter,
    scale: f64,
) -> Result<LossGradient> {
    let q: Vec<Vec<f64>> = queries.iter().map(Vector::to_f64).collect();
    let d: Vec<Vec<f64>> = documents.iter().map(Vector::to_f64).collect();
    loss_and_gradient(&q, &d, adapter, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f32]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn single_pair_has_zero_loss() {
        let l = mnr_loss(&[v(&[0.3, -1.0])], &[v(&[2.0, 5.0])], 1.0).unwrap();
        assert_eq!(l, 0.0);
        let l = mnr_loss(&[v(&[0.3, -1.0])], &[v(&[2.0, 5.0])], 20.0).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn orthogonal_pair_closed_form() {
        let q = [v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let l = mnr_loss(&q, &q, 1.0).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 0.313_262).abs() < 1e-6);
    }

    #[test]
    fn duplicate_documents_are_reported() {
        let q = [v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let d = [v(&[1.0, 0.0]), v(&[1.0, 0.0])];
        let r = mnr_loss_report(&q, &d, 1.0).unwrap();
        assert_eq!(r.duplicate_documents, 1);
        assert!(r.loss > 0.0);
    }

    #[test]
    fn batch_errors() {
        assert!(matches!(mnr_loss(&[], &[], 1.0), Err(Error::Empty(_))));
        assert!(matches!(
            mnr_loss(&[v(&[1.0])], &[v(&[1.0]), v(&[2.0])], 1.0),
            Err(Error::SizeMismatch(_))
        ));
        assert!(matches!(
            mnr_loss(&[v(&[0.0, 0.0])], &[v(&[1.0, 2.0])], 1.0),
            Err(Error::ZeroNorm { .. })
        ));
    }

    #[test]
    fn single_pair_gradient_is_zero() {
        let a = Adapter::from_weights(2, vec![1.0, 0.2, -0.3, 0.9], "x").unwrap();
        let g = mnr_gradient(&[v(&[1.0, 2.0])], &[v(&[-1.0, 0.5])], &a, 1.0).unwrap();
        assert_eq!(g.loss, 0.0);
        assert!(g.gradient.iter().all(|x| *x == 0.0));
    }
}
