//! Discrete distributions used by the ecological models: log-pmfs evaluated
//! by hand (with edge cases resolved to 0 / -inf rather than NaN) and
//! samplers backed by `rand_distr`.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

/// Inverse logit, stable for large |x|.
pub fn logit_inv(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Poisson log-mass; a zero rate is the point mass at zero.
pub fn poisson_ln_pmf(rate: f64, k: u64) -> f64 {
    debug_assert!(rate >= 0.0);
    if rate == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * rate.ln() - rate - ln_gamma(k as f64 + 1.0)
}

pub fn poisson_sample(rate: f64, rng: &mut dyn RngCore) -> u64 {
    debug_assert!(rate.is_finite() && rate >= 0.0);
    if rate <= 0.0 {
        return 0;
    }
    rand_distr::Poisson::new(rate).expect("positive finite rate").sample(rng) as u64
}

/// Binomial log-mass with degenerate p handled exactly.
pub fn binomial_ln_pmf(n: u64, p: f64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if p <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let (nf, kf) = (n as f64, k as f64);
    ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0)
        + kf * p.ln()
        + (nf - kf) * (1.0 - p).ln()
}

pub fn binomial_sample(n: u64, p: f64, rng: &mut dyn RngCore) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    rand_distr::Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Negative-binomial log-mass over k failures with `size` successes and
/// success probability `prob`: mean `size (1-prob)/prob`.
///
/// For very large `size` the difference `lnG(k+size) - lnG(size)` loses all
/// precision to cancellation, so it is evaluated as `sum_j ln(size + j)` when
/// the count is small enough for that to be cheap.
pub fn neg_binomial_ln_pmf(size: f64, prob: f64, k: u64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&prob));
    if size == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if prob >= 1.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if prob <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let kf = k as f64;
    let binom = if size > 1e8 && k <= 100_000 {
        (0..k).map(|j| (size + j as f64).ln()).sum::<f64>() - ln_gamma(kf + 1.0)
    } else {
        ln_gamma(kf + size) - ln_gamma(size) - ln_gamma(kf + 1.0)
    };
    binom + size * prob.ln() + kf * (1.0 - prob).ln()
}

/// Negative-binomial draw via the gamma-Poisson mixture.
pub fn neg_binomial_sample(size: f64, prob: f64, rng: &mut dyn RngCore) -> u64 {
    if size <= 0.0 || prob >= 1.0 {
        return 0;
    }
    let scale = (1.0 - prob) / prob;
    let lambda = Gamma::new(size, scale).expect("valid gamma").sample(rng);
    poisson_sample(lambda, rng)
}

/// Multinomial log-mass. Cells with zero probability force -inf when observed.
pub fn multinomial_ln_pmf(probs: &[f64], counts: &[u64]) -> f64 {
    debug_assert_eq!(probs.len(), counts.len());
    let total: u64 = counts.iter().sum();
    let mut ll = ln_gamma(total as f64 + 1.0);
    for (&p, &k) in probs.iter().zip(counts) {
        if k == 0 {
            continue;
        }
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += k as f64 * p.ln() - ln_gamma(k as f64 + 1.0);
    }
    ll
}

/// One categorical draw; probabilities need not be exactly normalised.
pub fn categorical_sample(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

/// Uniform draw on `{lo, .., hi}` inclusive.
pub fn discrete_uniform_sample(lo: u64, hi: u64, rng: &mut dyn RngCore) -> u64 {
    rng.random_range(lo..=hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream_rng;

    #[test]
    fn logit_inv_values() {
        assert!((logit_inv(0.0) - 0.5).abs() < 1e-15);
        assert!((logit_inv(1.0) - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((logit_inv(-2.0) - 0.119_202_922_022_117_55).abs() < 1e-12);
        assert!(logit_inv(-800.0) >= 0.0);
        assert!(logit_inv(800.0) <= 1.0);
    }

    #[test]
    fn poisson_pmf_values() {
        // ln Pois(20; 20) computed from the definition as an independent route.
        let want = 20.0 * 20.0f64.ln() - 20.0 - (2..=20).map(|i| (i as f64).ln()).sum::<f64>();
        assert!((poisson_ln_pmf(20.0, 20) - want).abs() < 1e-10);
        assert_eq!(poisson_ln_pmf(0.0, 0), 0.0);
        assert_eq!(poisson_ln_pmf(0.0, 3), f64::NEG_INFINITY);
    }

    #[test]
    fn binomial_pmf_edges() {
        assert_eq!(binomial_ln_pmf(5, 0.0, 0), 0.0);
        assert_eq!(binomial_ln_pmf(5, 0.0, 1), f64::NEG_INFINITY);
        assert_eq!(binomial_ln_pmf(5, 1.0, 5), 0.0);
        assert_eq!(binomial_ln_pmf(5, 1.0, 4), f64::NEG_INFINITY);
        assert_eq!(binomial_ln_pmf(5, 0.3, 6), f64::NEG_INFINITY);
        // Bin(2, 0.5) at 1 = 0.5
        assert!((binomial_ln_pmf(2, 0.5, 1) - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn neg_binomial_pmf_against_direct_formula() {
        // size 3, prob 0.4, k = 5: C(7,5) 0.4^3 0.6^5
        let direct = (21.0f64).ln() + 3.0 * 0.4f64.ln() + 5.0 * 0.6f64.ln();
        assert!((neg_binomial_ln_pmf(3.0, 0.4, 5) - direct).abs() < 1e-10);
    }

    #[test]
    fn neg_binomial_large_size_is_stable() {
        // size = 1e14, prob -> 1 limit used by the point-mass check; the
        // rising-factorial path avoids the lnGamma cancellation.
        let kappa = 1.0 - 1e-12;
        let s_total = 100.0;
        let size = kappa / (1.0 - kappa) * s_total;
        let at_mean = neg_binomial_ln_pmf(size, kappa, 100);
        let off_mean = neg_binomial_ln_pmf(size, kappa, 101);
        assert!(at_mean > off_mean, "pmf must peak sharply at the mean");
        assert!(at_mean > -30.0 && at_mean <= 0.0);
    }

    #[test]
    fn neg_binomial_sampler_moments() {
        // mean n(1-p)/p, variance n(1-p)/p^2
        let (size, prob) = (10.0, 0.25);
        let mut rng = stream_rng(41, &[1]);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let k = neg_binomial_sample(size, prob, &mut rng) as f64;
            sum += k;
            sumsq += k * k;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let want_mean = size * (1.0 - prob) / prob;
        let want_var = want_mean / prob;
        let se_mean = (want_var / n as f64).sqrt();
        assert!((mean - want_mean).abs() < 4.0 * se_mean, "{mean} vs {want_mean}");
        assert!((var - want_var).abs() < 0.05 * want_var, "{var} vs {want_var}");
    }

    #[test]
    fn multinomial_pmf_simple() {
        // Mult(2; 0.5, 0.5) at (1,1): 2 * 0.25 = 0.5
        let got = multinomial_ln_pmf(&[0.5, 0.5], &[1, 1]);
        assert!((got - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(multinomial_ln_pmf(&[1.0, 0.0], &[1, 1]), f64::NEG_INFINITY);
    }

    #[test]
    fn categorical_respects_weights() {
        let mut rng = stream_rng(42, &[2]);
        let probs = [0.2, 0.0, 0.8];
        let mut counts = [0usize; 3];
        for _ in 0..50_000 {
            counts[categorical_sample(&probs, &mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        let f0 = counts[0] as f64 / 50_000.0;
        assert!((f0 - 0.2).abs() < 0.01);
    }
}
