//! Exact reference computations used to verify the Monte Carlo machinery:
//! Kalman-filter and HMM-forward log-likelihoods, and the conjugate-Gaussian
//! model evidence.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;

const LN_2PI: f64 = 1.8378770664093453;

/// Linear-Gaussian state-space model
/// `x_t = A x_{t-1} + N(0, Q)`, `y_t = C x_t + N(0, R)`, `x_1 ~ N(m0, P0)`.
#[derive(Debug, Clone)]
pub struct LgssmSpec {
    pub transition: DMatrix<f64>,
    pub state_noise: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub obs_noise: DMatrix<f64>,
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
}

impl LgssmSpec {
    /// Scalar model with transition coefficient `a`, state-noise variance `q`,
    /// observation coefficient `c`, observation-noise variance `r`.
    pub fn scalar(a: f64, q: f64, c: f64, r: f64, m0: f64, p0: f64) -> Self {
        Self {
            transition: DMatrix::from_element(1, 1, a),
            state_noise: DMatrix::from_element(1, 1, q),
            observation: DMatrix::from_element(1, 1, c),
            obs_noise: DMatrix::from_element(1, 1, r),
            initial_mean: DVector::from_element(1, m0),
            initial_cov: DMatrix::from_element(1, 1, p0),
        }
    }
}

/// Exact log-likelihood of a linear-Gaussian state-space model via the
/// Kalman prediction/update recursions (prediction-error decomposition).
pub fn kalman_loglik(spec: &LgssmSpec, y: &[DVector<f64>]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptyInput("kalman_loglik"));
    }
    let dx = spec.transition.nrows();
    let dy = spec.observation.nrows();
    if spec.transition.ncols() != dx
        || spec.state_noise.shape() != (dx, dx)
        || spec.observation.ncols() != dx
        || spec.obs_noise.shape() != (dy, dy)
        || spec.initial_mean.len() != dx
        || spec.initial_cov.shape() != (dx, dx)
    {
        return Err(Error::InvalidArgument("kalman_loglik: inconsistent dimensions".into()));
    }

    let mut mean = spec.initial_mean.clone();
    let mut cov = spec.initial_cov.clone();
    let mut loglik = 0.0;
    for (t, obs) in y.iter().enumerate() {
        if obs.len() != dy {
            return Err(Error::InvalidArgument(format!(
                "kalman_loglik: observation {t} has dimension {}, expected {dy}",
                obs.len()
            )));
        }
        if t > 0 {
            mean = &spec.transition * mean;
            cov = &spec.transition * cov * spec.transition.transpose() + &spec.state_noise;
        }
        let innovation = obs - &spec.observation * &mean;
        let s = &spec.observation * &cov * spec.observation.transpose() + &spec.obs_noise;
        let chol = s
            .clone()
            .cholesky()
            .ok_or_else(|| Error::LinAlg(format!("singular innovation covariance at step {t}")))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let solved = chol.solve(&innovation);
        loglik += -0.5 * (dy as f64 * LN_2PI + log_det + innovation.dot(&solved));

        let gain = &cov * spec.observation.transpose() * chol.inverse();
        mean += &gain * &innovation;
        cov = &cov - &gain * &spec.observation * &cov;
    }
    Ok(loglik)
}

/// Exact log-likelihood of a finite-state HMM by the forward recursion in log
/// space. `emission_ll[t][s]` is the log observation density of `y_{t+1}`
/// given state `s`; transition rows must sum to one.
pub fn hmm_forward_loglik(
    init_probs: &[f64],
    transition: &[Vec<f64>],
    emission_ll: &[Vec<f64>],
) -> Result<f64> {
    let n_states = init_probs.len();
    if n_states == 0 || emission_ll.is_empty() {
        return Err(Error::EmptyInput("hmm_forward_loglik"));
    }
    if transition.len() != n_states {
        return Err(Error::InvalidArgument("hmm: transition shape mismatch".into()));
    }
    for row in transition {
        if row.len() != n_states {
            return Err(Error::InvalidArgument("hmm: transition shape mismatch".into()));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-8 {
            return Err(Error::UnnormalisedWeights { sum });
        }
    }

    let ln = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
    let mut alpha: Vec<f64> = (0..n_states)
        .map(|s| ln(init_probs[s]) + emission_ll[0][s])
        .collect();
    let mut scratch = vec![0.0f64; n_states];
    for obs_ll in &emission_ll[1..] {
        if obs_ll.len() != n_states {
            return Err(Error::InvalidArgument("hmm: emission shape mismatch".into()));
        }
        let mut next = vec![f64::NEG_INFINITY; n_states];
        for (s, next_s) in next.iter_mut().enumerate() {
            for prev in 0..n_states {
                scratch[prev] = alpha[prev] + ln(transition[prev][s]);
            }
            *next_s = log_sum_exp(&scratch)? + obs_ll[s];
        }
        alpha = next;
    }
    log_sum_exp(&alpha)
}

/// Exact log marginal likelihood of i.i.d. `N(mu, obs_var)` data under a
/// `N(prior_mean, prior_var)` prior on `mu`, by sequential one-step
/// predictives. Zero observations give 0.
pub fn conjugate_gaussian_evidence(
    prior_mean: f64,
    prior_var: f64,
    obs_var: f64,
    data: &[f64],
) -> Result<f64> {
    if prior_var <= 0.0 || obs_var <= 0.0 {
        return Err(Error::InvalidArgument(
            "conjugate_gaussian_evidence: variances must be positive".into(),
        ));
    }
    let mut mean = prior_mean;
    let mut var = prior_var;
    let mut loglik = 0.0;
    for &y in data {
        let pred_var = var + obs_var;
        loglik += -0.5 * (LN_2PI + pred_var.ln() + (y - mean).powi(2) / pred_var);
        // posterior update for the mean parameter
        let k = var / pred_var;
        mean += k * (y - mean);
        var *= 1.0 - k;
    }
    Ok(loglik)
}

/// Posterior mean and variance of the conjugate-Gaussian mean parameter.
pub fn conjugate_gaussian_posterior(
    prior_mean: f64,
    prior_var: f64,
    obs_var: f64,
    data: &[f64],
) -> (f64, f64) {
    let n = data.len() as f64;
    let sum: f64 = data.iter().sum();
    let precision = 1.0 / prior_var + n / obs_var;
    let var = 1.0 / precision;
    let mean = var * (prior_mean / prior_var + sum / obs_var);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream_rng;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
        -0.5 * (LN_2PI + var.ln() + (x - mean).powi(2) / var)
    }

    /// Independent scalar Kalman filter used to cross-check the matrix one.
    fn kalman_loglik_scalar(a: f64, q: f64, c: f64, r: f64, m0: f64, p0: f64, y: &[f64]) -> f64 {
        let (mut m, mut p) = (m0, p0);
        let mut ll = 0.0;
        for (t, &obs) in y.iter().enumerate() {
            if t > 0 {
                m = a * m;
                p = a * p * a + q;
            }
            let s = c * p * c + r;
            ll += normal_logpdf(obs, c * m, s);
            let k = p * c / s;
            m += k * (obs - c * m);
            p -= k * c * p;
        }
        ll
    }

    #[test]
    fn kalman_random_walk_zero_obs_noise_constant_data() {
        // a=1, c=1, r -> 0: with constant observations each post-update state
        // is pinned at y, so the predictive of step t>=2 is N(y, q) evaluated
        // at y, and step 1 contributes N(y; m0, p0 + r).
        let q = 0.3;
        let (m0, p0) = (0.7, 2.0);
        let r = 1e-12;
        let yv = 0.7;
        let t_len = 6;
        let spec = LgssmSpec::scalar(1.0, q, 1.0, r, m0, p0);
        let y: Vec<_> = (0..t_len).map(|_| DVector::from_element(1, yv)).collect();
        let got = kalman_loglik(&spec, &y).unwrap();
        let expected = normal_logpdf(yv, m0, p0 + r)
            + (t_len - 1) as f64 * normal_logpdf(0.0, 0.0, q + r);
        assert!((got - expected).abs() < 1e-6, "got {got}, want {expected}");
    }

    #[test]
    fn kalman_single_step_marginal() {
        let spec = LgssmSpec::scalar(0.9, 0.4, 1.3, 0.2, -0.5, 1.1);
        let y = vec![DVector::from_element(1, 0.8)];
        let got = kalman_loglik(&spec, &y).unwrap();
        let expected = normal_logpdf(0.8, 1.3 * -0.5, 1.3 * 1.1 * 1.3 + 0.2);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn kalman_matches_independent_scalar_implementation() {
        let mut rng = stream_rng(21, &[1]);
        for _ in 0..25 {
            let a = rng.random::<f64>() * 1.6 - 0.8;
            let q = rng.random::<f64>() + 0.05;
            let c = rng.random::<f64>() + 0.2;
            let r = rng.random::<f64>() + 0.05;
            let m0 = rng.random::<f64>() * 2.0 - 1.0;
            let p0 = rng.random::<f64>() + 0.1;
            let y: Vec<f64> = (0..20)
                .map(|_| Normal::new(0.0, 1.5).unwrap().sample(&mut rng))
                .collect();
            let spec = LgssmSpec::scalar(a, q, c, r, m0, p0);
            let yv: Vec<_> = y.iter().map(|&v| DVector::from_element(1, v)).collect();
            let got = kalman_loglik(&spec, &yv).unwrap();
            let want = kalman_loglik_scalar(a, q, c, r, m0, p0, &y);
            assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
        }
    }

    #[test]
    fn hmm_single_state_sums_emissions() {
        let emissions = vec![vec![-0.3], vec![-1.2], vec![-0.7]];
        let got = hmm_forward_loglik(&[1.0], &[vec![1.0]], &emissions).unwrap();
        assert!((got - (-2.2)).abs() < 1e-12);
    }

    #[test]
    fn hmm_uniform_two_state_hand_value() {
        // Uniform init and transitions: p(y_{1:2}) = prod_t mean_s(exp(e[t][s])).
        let e = [[-0.1f64, -2.0], [-0.5, -0.4]];
        let emissions: Vec<Vec<f64>> = e.iter().map(|row| row.to_vec()).collect();
        let got = hmm_forward_loglik(
            &[0.5, 0.5],
            &[vec![0.5, 0.5], vec![0.5, 0.5]],
            &emissions,
        )
        .unwrap();
        let want = (0.5 * ((-0.1f64).exp() + (-2.0f64).exp())).ln()
            + (0.5 * ((-0.5f64).exp() + (-0.4f64).exp())).ln();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn hmm_matches_exhaustive_path_enumeration() {
        let mut rng = stream_rng(22, &[4]);
        for &(n_states, t_len) in &[(2usize, 6usize), (3, 5), (3, 6)] {
            let init: Vec<f64> = random_simplex(n_states, &mut rng);
            let transition: Vec<Vec<f64>> =
                (0..n_states).map(|_| random_simplex(n_states, &mut rng)).collect();
            let emissions: Vec<Vec<f64>> = (0..t_len)
                .map(|_| (0..n_states).map(|_| -3.0 * rng.random::<f64>()).collect())
                .collect();

            // Brute-force sum over all S^T state paths.
            let mut total = 0.0f64;
            let n_paths = n_states.pow(t_len as u32);
            for code in 0..n_paths {
                let mut c = code;
                let mut prob;
                let mut prev;
                let s0 = c % n_states;
                c /= n_states;
                prob = init[s0] * emissions[0][s0].exp();
                prev = s0;
                for e_t in emissions.iter().skip(1) {
                    let s = c % n_states;
                    c /= n_states;
                    prob *= transition[prev][s] * e_t[s].exp();
                    prev = s;
                }
                total += prob;
            }
            let got = hmm_forward_loglik(&init, &transition, &emissions).unwrap();
            assert!(
                (got - total.ln()).abs() < 1e-10,
                "forward {got} vs enumeration {}",
                total.ln()
            );
        }
    }

    fn random_simplex(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / sum).collect()
    }

    #[test]
    fn conjugate_zero_observations() {
        assert_eq!(conjugate_gaussian_evidence(0.3, 1.2, 0.8, &[]).unwrap(), 0.0);
    }

    #[test]
    fn conjugate_single_observation_marginal() {
        let got = conjugate_gaussian_evidence(0.3, 1.2, 0.8, &[1.1]).unwrap();
        let want = normal_logpdf(1.1, 0.3, 2.0);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn conjugate_matches_quadrature() {
        let (m0, v0, s2) = (0.5, 1.5, 0.7);
        let mut rng = stream_rng(23, &[9]);
        let data: Vec<f64> = (0..10)
            .map(|_| Normal::new(0.4, 0.9).unwrap().sample(&mut rng))
            .collect();
        // Simpson quadrature of integral N(mu; m0, v0) prod_i N(y_i; mu, s2) dmu
        // over +-12 prior standard deviations.
        let lo = m0 - 12.0 * v0.sqrt();
        let hi = m0 + 12.0 * v0.sqrt();
        let n_panels = 20_000usize;
        let h = (hi - lo) / n_panels as f64;
        let log_integrand = |mu: f64| {
            normal_logpdf(mu, m0, v0)
                + data.iter().map(|&y| normal_logpdf(y, mu, s2)).sum::<f64>()
        };
        let mut sum = log_integrand(lo).exp() + log_integrand(hi).exp();
        for i in 1..n_panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * log_integrand(lo + i as f64 * h).exp();
        }
        let quad = (sum * h / 3.0).ln();
        let got = conjugate_gaussian_evidence(m0, v0, s2, &data).unwrap();
        assert!((got - quad).abs() < 1e-8, "got {got}, quadrature {quad}");
    }
}
