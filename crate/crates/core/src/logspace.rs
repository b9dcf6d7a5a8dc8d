//! Log-space weight arithmetic.
//!
//! Raw particle weights underflow f64 well before realistic series lengths
//! (a product of 71 observation densities is routinely below 1e-308), so all
//! weight bookkeeping in this crate stores logarithms and exponentiates only
//! normalised quantities.

use crate::error::{Error, Result};

/// Numerically stable `log(sum(exp(x_i)))` via the usual max shift.
///
/// Returns `-inf` when every element is `-inf`. Errors on empty input.
pub fn log_sum_exp(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("log_sum_exp"));
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Normalises log-weights to probabilities and reports the per-step
/// evidence increment `log((1/N) * sum(exp(logw)))`.
///
/// Errors with [`Error::DegenerateWeights`] when no weight is finite.
pub fn normalize_logweights(logw: &[f64]) -> Result<(Vec<f64>, f64)> {
    let lse = log_sum_exp(logw)?;
    if lse == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights);
    }
    let weights: Vec<f64> = logw.iter().map(|&lw| (lw - lse).exp()).collect();
    let logmean = lse - (logw.len() as f64).ln();
    Ok((weights, logmean))
}

/// Checks that `w` is a normalised probability vector (sum within `tol` of 1).
pub fn check_normalised(w: &[f64], tol: f64) -> Result<()> {
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::UnnormalisedWeights { sum });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_2: f64 = std::f64::consts::LN_2;

    #[test]
    fn lse_two_equal_terms() {
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn lse_absorbs_neg_infinity() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 3.0]).unwrap(), 3.0);
    }

    #[test]
    fn lse_large_shifted_inputs() {
        // 1001 + ln(1 + e^{-1}), evaluated via ln_1p as an independent route.
        let expected = 1001.0 + (-1.0f64).exp().ln_1p();
        let got = log_sum_exp(&[1000.0, 1001.0]).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
    }

    #[test]
    fn lse_all_neg_infinity() {
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn lse_empty_errors() {
        assert!(log_sum_exp(&[]).is_err());
    }

    #[test]
    fn lse_at_least_max() {
        let xs = [-4.0, 1.5, 0.3, -20.0];
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(log_sum_exp(&xs).unwrap() >= max);
        // Equality iff exactly one finite element.
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, 2.5]).unwrap(),
            2.5
        );
    }

    #[test]
    fn normalize_equal_weights() {
        let (w, logmean) = normalize_logweights(&[LN_2, LN_2]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15);
        assert!((w[1] - 0.5).abs() < 1e-15);
        assert!((logmean - LN_2).abs() < 1e-15);
    }

    #[test]
    fn normalize_with_zero_weight() {
        let (w, logmean) = normalize_logweights(&[0.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
        assert!((logmean - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn normalize_one_three() {
        let (w, logmean) = normalize_logweights(&[1.0f64.ln(), 3.0f64.ln()]).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15);
        assert!((w[1] - 0.75).abs() < 1e-15);
        assert!((logmean - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn normalize_all_degenerate() {
        assert!(matches!(
            normalize_logweights(&[f64::NEG_INFINITY; 3]),
            Err(Error::DegenerateWeights)
        ));
    }

    #[test]
    fn normalize_shift_invariant() {
        let logw = [0.3, -1.2, 4.0, 2.2];
        let shifted: Vec<f64> = logw.iter().map(|x| x + 123.456).collect();
        let (w0, _) = normalize_logweights(&logw).unwrap();
        let (w1, _) = normalize_logweights(&shifted).unwrap();
        for (a, b) in w0.iter().zip(&w1) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
