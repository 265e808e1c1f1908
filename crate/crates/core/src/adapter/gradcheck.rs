//! Central finite differences against the analytic adapter gradient.

use crate::embedding::Vector;
use crate::error::{Error, Result};

use super::Adapter;
use super::loss::{adapted_loss, loss_and_gradient};

/// Denominator floor for the entry-wise relative error, so entries whose true
/// value is ~0 are judged on absolute error instead.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Steps below this lose most significant digits to cancellation in `f64`.
pub const CANCELLATION_WARN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max |a - f| / max(|a|, |f|, RELATIVE_ERROR_FLOOR)` over all entries.
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// Row-major index of the worst relative entry.
    pub worst_entry: usize,
}

/// Compares `dL/dW` with `(L(W + eps E_rc) - L(W - eps E_rc)) / (2 eps)` for
/// every entry `(r, c)`.
pub fn finite_diff_check(
    queries: &[Vector],
    documents: &[Vector],
    adapter: &Adapter,
    scale: f64,
    eps: f64,
) -> Result<GradCheckReport> {
    if !adapter.is_finite() {
        return Err(Error::InvalidArgument(
            "finite-difference check needs a finite adapter".into(),
        ));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("step {eps} must be positive")));
    }
    if eps < CANCELLATION_WARN_EPS {
        log::warn!(
            "finite-difference step {eps:e} is below {CANCELLATION_WARN_EPS:e}; \
             cancellation will dominate the estimate"
        );
    }
    let q: Vec<Vec<f64>> = queries.iter().map(Vector::to_f64).collect();
    let d: Vec<Vec<f64>> = documents.iter().map(Vector::to_f64).collect();
    let analytic = loss_and_gradient(&q, &d, adapter, scale)?.gradient;

    let mut probe = adapter.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        worst_entry: 0,
    };
    for (idx, &a) in analytic.iter().enumerate() {
        let original = probe.weights()[idx];
        probe.weights_mut()[idx] = original + eps;
        let plus = adapted_loss(&q, &d, &probe, scale)?;
        probe.weights_mut()[idx] = original - eps;
        let minus = adapted_loss(&q, &d, &probe, scale)?;
        probe.weights_mut()[idx] = original;

        let numeric = (plus - minus) / (2.0 * eps);
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
        report.max_absolute_error = report.max_absolute_error.max(abs);
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_entry = idx;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn random_batch(n: usize, dim: usize, seed: u64) -> (Vec<Vector>, Vec<Vector>, Adapter) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
        };
        let q = (0..n).map(|_| Vector::from_f64(&draw(dim)).unwrap()).collect();
        let d = (0..n).map(|_| Vector::from_f64(&draw(dim)).unwrap()).collect();
        let mut w = draw(dim * dim);
        for (i, x) in w.iter_mut().enumerate() {
            *x *= 0.1;
            if i % (dim + 1) == 0 {
                *x += 1.0;
            }
        }
        (q, d, Adapter::from_weights(dim, w, "t").unwrap())
    }

    #[test]
    fn small_batch_matches() {
        let (q, d, a) = random_batch(3, 4, 1);
        let r = finite_diff_check(&q, &d, &a, 1.0, 1e-4).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn scaled_loss_matches() {
        let (q, d, a) = random_batch(5, 6, 2);
        for scale in [1.0, 20.0] {
            let r = finite_diff_check(&q, &d, &a, scale, 1e-5).unwrap();
            assert!(r.max_relative_error < 1e-4, "scale {scale}: {r:?}");
        }
    }

    #[test]
    fn non_finite_adapter_is_rejected() {
        let (q, d, mut a) = random_batch(2, 3, 3);
        a.weights_mut()[4] = f64::INFINITY;
        assert!(finite_diff_check(&q, &d, &a, 1.0, 1e-4).is_err());
    }

    #[test]
    fn tiny_step_still_runs() {
        // result not asserted: cancellation makes it meaningless
        let (q, d, a) = random_batch(2, 3, 4);
        assert!(finite_diff_check(&q, &d, &a, 1.0, 1e-12).is_ok());
        assert!(finite_diff_check(&q, &d, &a, 1.0, 0.0).is_err());
    }
}
