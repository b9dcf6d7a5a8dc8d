//! Resampling schemes and the ESS/CESS machinery driving adaptive resampling
//! and adaptive tempering.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::logspace::{check_normalised, log_sum_exp};

const NORMALISATION_TOL: f64 = 1e-8;

/// Effective sample size as a fraction of the particle count, `1/(N * sum(W^2))`.
///
/// Equals 1 iff the weights are uniform; `1/N` for a single atom.
pub fn ess_fraction(w: &[f64]) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::EmptyInput("ess_fraction"));
    }
    check_normalised(w, NORMALISATION_TOL)?;
    let sum_sq: f64 = w.iter().map(|x| x * x).sum();
    Ok(1.0 / (w.len() as f64 * sum_sq))
}

/// Conditional ESS fraction of reweighting `w` by `u^delta`:
/// `[sum(W u^delta)]^2 / sum(W u^{2 delta})`, in `(0, 1]`.
///
/// `log_u` carries `log(u)`; incremental weights are likelihood-scale
/// quantities that would over/underflow as raw values. Entries with zero
/// weight are skipped, so `log_u = -inf` is admissible there.
pub fn cess_fraction(w: &[f64], log_u: &[f64], delta: f64) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::EmptyInput("cess_fraction"));
    }
    if w.len() != log_u.len() {
        return Err(Error::InvalidArgument(
            "cess_fraction: weight/increment length mismatch".into(),
        ));
    }
    check_normalised(w, NORMALISATION_TOL)?;
    if delta < 0.0 {
        return Err(Error::InvalidArgument("cess_fraction: delta < 0".into()));
    }
    if delta == 0.0 {
        return Ok(1.0); // u^0 == 1 exactly
    }
    let mut num_terms = Vec::with_capacity(w.len());
    let mut den_terms = Vec::with_capacity(w.len());
    let mut any_mass = false;
    for (&wi, &lu) in w.iter().zip(log_u) {
        if wi <= 0.0 {
            continue;
        }
        any_mass = true;
        num_terms.push(wi.ln() + delta * lu);
        den_terms.push(wi.ln() + 2.0 * delta * lu);
    }
    if !any_mass {
        return Err(Error::DegenerateWeights);
    }
    let log_num = log_sum_exp(&num_terms)?;
    if log_num == f64::NEG_INFINITY {
        // all carried mass sits on u = 0 entries
        return Err(Error::DegenerateWeights);
    }
    let log_den = log_sum_exp(&den_terms)?;
    Ok((2.0 * log_num - log_den).exp())
}

/// Solves for the next temperature: `min(cap, prev + delta*)` where `delta*`
/// brings the CESS fraction down to `cess_star`, by bisection on
/// `[0, cap - prev]` to absolute tolerance 1e-10. Returns `cap` when the CESS
/// at the full remaining step still exceeds the target.
pub fn solve_temperature(
    w: &[f64],
    log_u: &[f64],
    prev: f64,
    cess_star: f64,
    cap: f64,
) -> Result<f64> {
    if !(cess_star > 0.0 && cess_star < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "solve_temperature: cess_star must lie in (0,1), got {cess_star}"
        )));
    }
    if !(0.0..=1.0).contains(&prev) || !(prev < cap && cap <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "solve_temperature: need 0 <= prev < cap <= 1, got prev={prev}, cap={cap}"
        )));
    }
    let delta_max = cap - prev;
    if cess_fraction(w, log_u, delta_max)? >= cess_star {
        return Ok(cap);
    }
    // CESS(0) = 1 > cess_star and CESS(delta_max) < cess_star: bisect the
    // single crossing assumed on this interval.
    let mut lo = 0.0f64;
    let mut hi = delta_max;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if cess_fraction(w, log_u, mid)? >= cess_star {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(prev + 0.5 * (lo + hi))
}

/// Systematic resampling: `n_out` ancestors chosen by the stratified points
/// `(u0 + k) / n_out` against the cumulative weights. Output is sorted
/// ascending (the points are increasing by construction).
pub fn systematic_resample(w: &[f64], n_out: usize, u0: f64) -> Result<Vec<usize>> {
    if w.is_empty() || n_out == 0 {
        return Err(Error::EmptyInput("systematic_resample"));
    }
    if !(0.0..1.0).contains(&u0) {
        return Err(Error::InvalidArgument(format!(
            "systematic_resample: u0 must lie in [0,1), got {u0}"
        )));
    }
    check_normalised(w, NORMALISATION_TOL)?;
    let mut ancestors = Vec::with_capacity(n_out);
    let mut cum = w[0];
    let mut i = 0usize;
    for k in 0..n_out {
        let point = (u0 + k as f64) / n_out as f64;
        while point > cum && i + 1 < w.len() {
            i += 1;
            cum += w[i];
        }
        ancestors.push(i);
    }
    Ok(ancestors)
}

/// Multinomial resampling: `n_out` i.i.d. categorical draws, returned sorted.
pub fn multinomial_resample(w: &[f64], n_out: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
    if w.is_empty() || n_out == 0 {
        return Err(Error::EmptyInput("multinomial_resample"));
    }
    check_normalised(w, NORMALISATION_TOL)?;
    let mut cum = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for &wi in w {
        acc += wi;
        cum.push(acc);
    }
    let last = cum.len() - 1;
    cum[last] = 1.0;
    let mut ancestors: Vec<usize> = (0..n_out)
        .map(|_| {
            let u: f64 = rng.random();
            cum.partition_point(|&c| c < u).min(last)
        })
        .collect();
    ancestors.sort_unstable();
    Ok(ancestors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream_rng;

    #[test]
    fn ess_uniform_is_one() {
        for n in [1usize, 4, 100] {
            let w = vec![1.0 / n as f64; n];
            assert!((ess_fraction(&w).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ess_single_atom() {
        assert!((ess_fraction(&[1.0, 0.0, 0.0, 0.0]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ess_half_mass_split() {
        assert!((ess_fraction(&[0.5, 0.5, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ess_rejects_unnormalised() {
        assert!(ess_fraction(&[0.5, 0.4]).is_err());
    }

    #[test]
    fn cess_delta_zero_is_exactly_one() {
        let w = [0.3, 0.7];
        let log_u = [0.0, 5.0];
        assert_eq!(cess_fraction(&w, &log_u, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn cess_uniform_two_particles() {
        // w uniform, u = (1, e), delta = 1: [(1+e)/2]^2 / [(1+e^2)/2],
        // evaluated directly as the independent route.
        let e = std::f64::consts::E;
        let expected = ((1.0 + e) / 2.0).powi(2) / ((1.0 + e * e) / 2.0);
        let got = cess_fraction(&[0.5, 0.5], &[0.0, 1.0], 1.0).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
    }

    #[test]
    fn cess_constant_increment_is_one() {
        for delta in [0.1, 0.5, 1.0] {
            let got = cess_fraction(&[0.2, 0.3, 0.5], &[2.5, 2.5, 2.5], delta).unwrap();
            assert!((got - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_constant_increment_returns_cap() {
        let got = solve_temperature(&[0.5, 0.5], &[1.0, 1.0], 0.2, 0.9, 1.0).unwrap();
        assert_eq!(got, 1.0);
    }

    #[test]
    fn solve_respects_cap_near_one() {
        let got = solve_temperature(&[0.5, 0.5], &[0.0, 40.0], 0.99, 0.9, 1.0).unwrap();
        assert!(got <= 1.0 && got > 0.99);
    }

    #[test]
    fn solve_matches_independent_bisection() {
        // Two particles, uniform weights, u = (1, e^2), cess_star = 0.9.
        let w = [0.5, 0.5];
        let log_u = [0.0, 2.0];
        let cess = |d: f64| {
            let num = (0.5 + 0.5 * (2.0 * d).exp()).powi(2);
            let den = 0.5 + 0.5 * (4.0 * d).exp();
            num / den
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if cess(mid) >= 0.9 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let got = solve_temperature(&w, &log_u, 0.0, 0.9, 1.0).unwrap();
        assert!((got - oracle).abs() < 1e-9, "got {got}, oracle {oracle}");
        assert!((got - 0.23).abs() < 0.01);
    }

    #[test]
    fn solve_rejects_bad_cess_star() {
        assert!(solve_temperature(&[1.0], &[0.0], 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn systematic_single_atom() {
        let a = systematic_resample(&[1.0, 0.0, 0.0], 3, 0.4).unwrap();
        assert_eq!(a, vec![0, 0, 0]);
    }

    #[test]
    fn systematic_uniform_is_permutation() {
        for &u0 in &[0.0, 0.37, 0.999] {
            let n = 6;
            let w = vec![1.0 / n as f64; n];
            let a = systematic_resample(&w, n, u0).unwrap();
            assert_eq!(a, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn systematic_hand_example() {
        // W = (0.5, 0.25, 0.25), 4 points from u0 = 0.1:
        // (0.025, 0.275, 0.525, 0.775) against cumsum (0.5, 0.75, 1.0).
        let a = systematic_resample(&[0.5, 0.25, 0.25], 4, 0.1).unwrap();
        assert_eq!(a, vec![0, 0, 1, 2]);
    }

    #[test]
    fn systematic_offspring_bound() {
        let mut rng = stream_rng(7, &[99]);
        for _ in 0..200 {
            let n = 1 + (rng.next_u32() as usize % 12);
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let u0: f64 = rng.random::<f64>() * 0.999_999;
            let a = systematic_resample(&w, n, u0).unwrap();
            let mut offspring = vec![0usize; n];
            for &i in &a {
                offspring[i] += 1;
            }
            for (i, &o) in offspring.iter().enumerate() {
                assert!(
                    (o as f64 - n as f64 * w[i]).abs() < 1.0,
                    "offspring bound violated: o={o}, N*W={}",
                    n as f64 * w[i]
                );
            }
        }
    }

    #[test]
    fn systematic_unbiased_over_u0() {
        // E over u0 ~ U[0,1) of the offspring count of particle i is N*W_i.
        let w = [0.37, 0.22, 0.41];
        let n = 5;
        let reps = 100_000;
        let mut rng = stream_rng(11, &[1]);
        let mut mean = vec![0.0f64; 3];
        for _ in 0..reps {
            let u0: f64 = rng.random();
            for &i in &systematic_resample(&w, n, u0).unwrap() {
                mean[i] += 1.0;
            }
        }
        for (i, m) in mean.iter().enumerate() {
            let avg = m / reps as f64;
            let expect = n as f64 * w[i];
            // offspring counts vary by < 1, so the SE is < 1/sqrt(reps)
            assert!(
                (avg - expect).abs() < 4.0 / (reps as f64).sqrt() + 1e-3,
                "particle {i}: avg {avg} vs {expect}"
            );
        }
    }

    #[test]
    fn multinomial_single_atom() {
        let mut rng = stream_rng(3, &[2]);
        let a = multinomial_resample(&[1.0, 0.0], 4, &mut rng).unwrap();
        assert_eq!(a, vec![0, 0, 0, 0]);
    }

    #[test]
    fn multinomial_frequencies_match_weights() {
        let w = [0.1, 0.55, 0.35];
        let reps = 100_000;
        let mut rng = stream_rng(5, &[8]);
        let a = multinomial_resample(&w, reps, &mut rng).unwrap();
        let mut counts = vec![0usize; 3];
        for &i in &a {
            counts[i] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let p_hat = c as f64 / reps as f64;
            let se = (w[i] * (1.0 - w[i]) / reps as f64).sqrt();
            assert!(
                (p_hat - w[i]).abs() < 4.0 * se,
                "particle {i}: {p_hat} vs {} (se {se})",
                w[i]
            );
        }
    }

    #[test]
    fn multinomial_seeded_is_reproducible() {
        let w = [0.3, 0.7];
        let a = multinomial_resample(&w, 32, &mut stream_rng(9, &[1])).unwrap();
        let b = multinomial_resample(&w, 32, &mut stream_rng(9, &[1])).unwrap();
        assert_eq!(a, b);
    }
}
