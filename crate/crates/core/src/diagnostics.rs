//! Chain diagnostics: autocorrelation, integrated autocorrelation time and
//! the cost-adjusted efficiency comparison.

use crate::error::{Error, Result};

/// Sample autocorrelation function with the biased (1/n) normaliser, lags
/// `0..=max_lag`. Errors on constant input (undefined variance) and when the
/// chain is not longer than `max_lag`.
pub fn autocorrelation(chain: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if chain.len() <= max_lag {
        return Err(Error::InvalidArgument(format!(
            "autocorrelation: chain length {} must exceed max_lag {max_lag}",
            chain.len()
        )));
    }
    let n = chain.len();
    let mean = chain.iter().sum::<f64>() / n as f64;
    let var: f64 = chain.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return Err(Error::InvalidArgument(
            "autocorrelation: constant chain has undefined autocorrelation".into(),
        ));
    }
    let mut acf = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let cov: f64 = (0..n - lag)
            .map(|t| (chain[t] - mean) * (chain[t + lag] - mean))
            .sum::<f64>()
            / n as f64;
        acf.push(cov / var);
    }
    Ok(acf)
}

/// Rescales the lag axis by seconds-per-iteration so chains with different
/// per-iteration costs are comparable: returns `(lag * sec_per_iter, acf[lag])`.
pub fn time_rescaled_acf(acf: &[f64], sec_per_iter: f64) -> Vec<(f64, f64)> {
    acf.iter()
        .enumerate()
        .map(|(lag, &a)| (lag as f64 * sec_per_iter, a))
        .collect()
}

/// Integrated autocorrelation time `1 + 2 sum_k acf(k)`, truncating the sum
/// at the first non-positive autocorrelation.
pub fn integrated_autocorr_time(acf: &[f64]) -> f64 {
    let mut iact = 1.0;
    for &a in &acf[1..] {
        if a <= 0.0 {
            break;
        }
        iact += 2.0 * a;
    }
    iact
}

/// Cost-adjusted efficiency ratio `(mse_a * time_a) / (mse_b * time_b)`;
/// values above 1 mean method `b` is more efficient.
pub fn efficiency_gain(mse_a: f64, time_a: f64, mse_b: f64, time_b: f64) -> Result<f64> {
    for (name, v) in [
        ("mse_a", mse_a),
        ("time_a", time_a),
        ("mse_b", mse_b),
        ("time_b", time_b),
    ] {
        if v <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "efficiency_gain: {name} must be positive, got {v}"
            )));
        }
    }
    Ok((mse_a * time_a) / (mse_b * time_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream_rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn iid_chain_has_negligible_acf() {
        let mut rng = stream_rng(31, &[1]);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 20_000;
        let chain: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let acf = autocorrelation(&chain, 10).unwrap();
        assert!((acf[0] - 1.0).abs() < 1e-12);
        let bound = 4.0 / (n as f64).sqrt();
        for &a in &acf[1..] {
            assert!(a.abs() < bound, "lag acf {a} exceeds {bound}");
        }
    }

    #[test]
    fn ar1_chain_matches_geometric_decay() {
        let mut rng = stream_rng(32, &[2]);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let phi = 0.9f64;
        let n = 200_000;
        let mut chain = Vec::with_capacity(n);
        let mut x = 0.0;
        for _ in 0..n {
            x = phi * x + normal.sample(&mut rng);
            chain.push(x);
        }
        let acf = autocorrelation(&chain, 8).unwrap();
        for (k, &a) in acf.iter().enumerate() {
            let expect = phi.powi(k as i32);
            assert!(
                (a - expect).abs() < 0.03,
                "lag {k}: acf {a} vs {expect}"
            );
        }
    }

    #[test]
    fn constant_chain_errors() {
        assert!(autocorrelation(&[2.0; 100], 5).is_err());
    }

    #[test]
    fn iact_truncates_at_first_nonpositive() {
        let acf = [1.0, 0.5, 0.25, -0.1, 0.4];
        let iact = integrated_autocorr_time(&acf);
        assert!((iact - (1.0 + 2.0 * 0.75)).abs() < 1e-12);
    }

    #[test]
    fn rescaled_acf_scales_lags() {
        let pairs = time_rescaled_acf(&[1.0, 0.5], 0.25);
        assert_eq!(pairs, vec![(0.0, 1.0), (0.25, 0.5)]);
    }

    #[test]
    fn efficiency_gain_identities() {
        assert_eq!(efficiency_gain(1.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(efficiency_gain(2.0, 1.0, 1.0, 1.0).unwrap(), 2.0);
        let ab = efficiency_gain(0.3, 2.0, 0.7, 1.1).unwrap();
        let ba = efficiency_gain(0.7, 1.1, 0.3, 2.0).unwrap();
        assert!((ab * ba - 1.0).abs() < 1e-12);
        assert!(efficiency_gain(0.0, 1.0, 1.0, 1.0).is_err());
    }
}
