//! Pseudo-marginal Metropolis-Hastings updates on the parameter posterior,
//! with and without delayed acceptance, plus a chain runner.
//!
//! The chain state carries the particle-filter estimate of the count-data
//! log-likelihood alongside the parameters; pseudo-marginal validity requires
//! that this estimate is refreshed only when a proposal is accepted, never
//! for the incumbent state.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::ParamVector;
use crate::pf::{run_pf_adaptive, PfConfig};

/// Current point of a pseudo-marginal chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub theta: ParamVector,
    /// Particle-filter estimate of the count-data log-likelihood.
    pub loghat_count: f64,
    /// Additional-data log-likelihood `log p(m | theta)`.
    pub logadd: f64,
    pub logprior: f64,
}

/// Random-walk proposal: a two-component Gaussian mixture with covariance
/// `2.38^2 d^-1 lambda Sigma` (weight 0.95) and `0.1^2 d^-1 I` (weight 0.05).
#[derive(Debug, Clone)]
pub struct ProposalConfig {
    dim: usize,
    lambda: f64,
    weight_main: f64,
    small_scale: f64,
    /// Per-column scaled factor of Sigma (Cholesky, or sqrt-diagonal fallback).
    factor: DMatrix<f64>,
}

impl ProposalConfig {
    pub const MAIN_WEIGHT: f64 = 0.95;
    pub const SMALL_SCALE: f64 = 0.1;

    /// Builds the proposal around covariance `sigma` at scale `lambda`.
    /// Falls back to the diagonal of `sigma` when Cholesky fails.
    pub fn new(sigma: DMatrix<f64>, lambda: f64) -> Result<Self> {
        let dim = sigma.nrows();
        if dim == 0 || sigma.ncols() != dim {
            return Err(Error::InvalidArgument("proposal: sigma must be square and non-empty".into()));
        }
        if lambda <= 0.0 {
            return Err(Error::InvalidArgument("proposal: lambda must be positive".into()));
        }
        let factor = match sigma.clone().cholesky() {
            Some(chol) => chol.l(),
            None => {
                log::warn!("proposal covariance not factorisable; falling back to its diagonal");
                DMatrix::from_diagonal(&DVector::from_iterator(
                    dim,
                    sigma.diagonal().iter().map(|&v| v.max(0.0).sqrt()),
                ))
            }
        };
        Ok(Self {
            dim,
            lambda,
            weight_main: Self::MAIN_WEIGHT,
            small_scale: Self::SMALL_SCALE,
            factor,
        })
    }

    /// Identity-covariance proposal.
    pub fn identity(dim: usize, lambda: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim), lambda)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        self.lambda = lambda;
    }

    /// Test hook: mixture weight of the main component.
    pub fn with_main_weight(mut self, weight_main: f64) -> Self {
        self.weight_main = weight_main;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Draws a proposal from the two-component random-walk mixture.
pub fn mixture_propose<R: Rng>(
    theta: &ParamVector,
    cfg: &ProposalConfig,
    rng: &mut R,
) -> Result<ParamVector> {
    if theta.len() != cfg.dim {
        return Err(Error::InvalidArgument(format!(
            "proposal dimension {} does not match parameter dimension {}",
            cfg.dim,
            theta.len()
        )));
    }
    let d = cfg.dim as f64;
    let z = DVector::from_iterator(cfg.dim, (0..cfg.dim).map(|_| standard_normal(rng)));
    let step = if rng.random::<f64>() < cfg.weight_main {
        let scale = (2.38f64.powi(2) * cfg.lambda / d).sqrt();
        &cfg.factor * z * scale
    } else {
        let scale = cfg.small_scale / d.sqrt();
        z * scale
    };
    let values: Vec<f64> = theta
        .values()
        .iter()
        .zip(step.iter())
        .map(|(v, s)| v + s)
        .collect();
    theta.with_values(values)
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

use rand_distr::Distribution;

/// Tempered log-likelihood-ratio term `alpha * (proposed - current)`.
///
/// At `alpha = 0` the likelihood does not enter the target, so the term is 0
/// even when the proposed log-likelihood is `-inf`. A `-inf` vs `-inf` ratio
/// is undefined; we resolve it as rejection.
fn temper(alpha: f64, proposed: f64, current: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    if proposed == f64::NEG_INFINITY && current == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    alpha * (proposed - current)
}

/// Log acceptance ratio of the one-stage pseudo-marginal update. The proposal
/// here is symmetric so `logq_ratio` is zero, but the term is kept for
/// non-symmetric kernels.
pub fn pmcmc_log_ratio(
    logq_ratio: f64,
    logprior_prop: f64,
    logprior_cur: f64,
    alpha: f64,
    logjoint_prop: f64,
    logjoint_cur: f64,
) -> f64 {
    logq_ratio + (logprior_prop - logprior_cur) + temper(alpha, logjoint_prop, logjoint_cur)
}

/// Log acceptance ratio of the delayed-acceptance screening stage, which uses
/// only the cheap additional-data likelihood.
pub fn da_stage1_log_ratio(
    logq_ratio: f64,
    logprior_prop: f64,
    logprior_cur: f64,
    alpha_add: f64,
    logadd_prop: f64,
    logadd_cur: f64,
) -> f64 {
    logq_ratio + (logprior_prop - logprior_cur) + temper(alpha_add, logadd_prop, logadd_cur)
}

/// Log acceptance ratio of the delayed-acceptance second stage (count-data
/// likelihood estimate only).
pub fn da_stage2_log_ratio(alpha_count: f64, loghat_prop: f64, loghat_cur: f64) -> f64 {
    temper(alpha_count, loghat_prop, loghat_cur)
}

/// Metropolis accept/reject on a log ratio; NaN rejects.
pub fn metropolis_accept<R: Rng>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

/// One pseudo-marginal MH update: propose, run the particle filter for the
/// proposal, accept with probability `min(1, r)` where
/// `log r = dlog q + dlog prior + alpha * (dlog count + dlog add)`.
///
/// The filter is invoked for every proposal (there is no screening stage);
/// filter degeneracy yields `-inf` and automatic rejection.
pub fn pmcmc_update<M, R>(
    state: &ChainState,
    model: &M,
    y: &[M::Obs],
    alpha: f64,
    prop: &ProposalConfig,
    pfcfg: &PfConfig,
    rng: &mut R,
) -> Result<(ChainState, bool)>
where
    M: Model + ?Sized,
    R: Rng,
{
    let theta_prop = mixture_propose(&state.theta, prop, rng)?;
    let logprior_prop = model.prior_logpdf(&theta_prop);
    let logadd_prop = model.additional_loglik(&theta_prop);
    let pf_seed: u64 = rng.random();
    let loghat_prop = run_pf_adaptive(model, &theta_prop, y, pfcfg, pf_seed)?.loglik;

    let logjoint_prop = add_loglik(loghat_prop, logadd_prop);
    let logjoint_cur = add_loglik(state.loghat_count, state.logadd);
    let log_r = pmcmc_log_ratio(
        0.0,
        logprior_prop,
        state.logprior,
        alpha,
        logjoint_prop,
        logjoint_cur,
    );
    if metropolis_accept(log_r, rng) {
        Ok((
            ChainState {
                theta: theta_prop,
                loghat_count: loghat_prop,
                logadd: logadd_prop,
                logprior: logprior_prop,
            },
            true,
        ))
    } else {
        Ok((state.clone(), false))
    }
}

fn add_loglik(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        a + b
    }
}

/// One delayed-acceptance update with separate tempering exponents for the
/// additional-data ratio (screening stage) and the count-data ratio (filter
/// stage). The particle filter runs only when the screening stage passes.
///
/// Returns `(state, stage1_pass, accepted)`.
pub fn da_pmcmc_update_tempered<M, R>(
    state: &ChainState,
    model: &M,
    y: &[M::Obs],
    alpha_add: f64,
    alpha_count: f64,
    prop: &ProposalConfig,
    pfcfg: &PfConfig,
    rng: &mut R,
) -> Result<(ChainState, bool, bool)>
where
    M: Model + ?Sized,
    R: Rng,
{
    let theta_prop = mixture_propose(&state.theta, prop, rng)?;
    let logprior_prop = model.prior_logpdf(&theta_prop);
    let logadd_prop = model.additional_loglik(&theta_prop);
    let log_r1 = da_stage1_log_ratio(
        0.0,
        logprior_prop,
        state.logprior,
        alpha_add,
        logadd_prop,
        state.logadd,
    );
    if !metropolis_accept(log_r1, rng) {
        return Ok((state.clone(), false, false));
    }
    let pf_seed: u64 = rng.random();
    let loghat_prop = run_pf_adaptive(model, &theta_prop, y, pfcfg, pf_seed)?.loglik;
    let log_r2 = da_stage2_log_ratio(alpha_count, loghat_prop, state.loghat_count);
    if metropolis_accept(log_r2, rng) {
        Ok((
            ChainState {
                theta: theta_prop,
                loghat_count: loghat_prop,
                logadd: logadd_prop,
                logprior: logprior_prop,
            },
            true,
            true,
        ))
    } else {
        Ok((state.clone(), true, false))
    }
}

/// Delayed-acceptance update with a single tempering exponent on both
/// likelihood ratios.
pub fn da_pmcmc_update<M, R>(
    state: &ChainState,
    model: &M,
    y: &[M::Obs],
    alpha: f64,
    prop: &ProposalConfig,
    pfcfg: &PfConfig,
    rng: &mut R,
) -> Result<(ChainState, bool, bool)>
where
    M: Model + ?Sized,
    R: Rng,
{
    da_pmcmc_update_tempered(state, model, y, alpha, alpha, prop, pfcfg, rng)
}

/// Per-iteration record of a chain run, one JSON object per line on disk.
#[derive(Debug, Clone, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub theta: Vec<f64>,
    pub log_count_lik: f64,
    pub log_add_lik: f64,
    pub accepted: bool,
    /// `None` for plain (non-delayed-acceptance) chains.
    pub stage1_pass: Option<bool>,
    pub pf_calls_cum: u64,
    pub seconds_cum: f64,
}

/// Full output of [`run_chain`].
#[derive(Debug, Clone)]
pub struct ChainRecord {
    pub param_names: Vec<String>,
    pub iterations: Vec<IterRecord>,
    pub acceptance_rate: f64,
    pub stage1_pass_rate: Option<f64>,
    pub pf_calls: u64,
    pub seconds: f64,
}

impl ChainRecord {
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for rec in &self.iterations {
            serde_json::to_writer(&mut w, rec)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Column of one parameter across iterations.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.param_names.iter().position(|n| n == name)?;
        Some(self.iterations.iter().map(|r| r.theta[idx]).collect())
    }
}

/// Draws an initial chain state from the prior, retrying (up to 100 times)
/// until both likelihood terms are finite.
pub fn init_chain_state<M, R>(
    model: &M,
    y: &[M::Obs],
    pfcfg: &PfConfig,
    rng: &mut R,
) -> Result<ChainState>
where
    M: Model + ?Sized,
    R: Rng,
{
    for _ in 0..100 {
        let theta = model.prior_sample(rng);
        let logprior = model.prior_logpdf(&theta);
        let logadd = model.additional_loglik(&theta);
        if logprior == f64::NEG_INFINITY || logadd == f64::NEG_INFINITY {
            continue;
        }
        let pf_seed: u64 = rng.random();
        let loghat = run_pf_adaptive(model, &theta, y, pfcfg, pf_seed)?.loglik;
        if loghat == f64::NEG_INFINITY {
            continue;
        }
        return Ok(ChainState { theta, loghat_count: loghat, logadd, logprior });
    }
    Err(Error::InvalidArgument(
        "could not initialise chain: no prior draw with finite likelihood in 100 attempts".into(),
    ))
}

/// Runs a (delayed-acceptance) pseudo-marginal chain for `n_iters` updates.
///
/// `init`: starting point, or `None` to draw from the prior via
/// [`init_chain_state`]. All randomness derives from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_chain<M: Model + ?Sized>(
    model: &M,
    y: &[M::Obs],
    n_iters: usize,
    init: Option<ChainState>,
    alpha: f64,
    prop: &ProposalConfig,
    pfcfg: &PfConfig,
    da: bool,
    seed: u64,
) -> Result<ChainRecord> {
    if n_iters == 0 {
        return Err(Error::InvalidArgument("run_chain: n_iters must be >= 1".into()));
    }
    let mut rng = crate::seed::stream_rng(seed, &[crate::seed::domain::CHAIN]);
    let mut state = match init {
        Some(s) => s,
        None => init_chain_state(model, y, pfcfg, &mut rng)?,
    };
    let start = Instant::now();
    let mut pf_calls: u64 = 0;
    let mut accepted_total = 0usize;
    let mut stage1_total = 0usize;
    let mut iterations = Vec::with_capacity(n_iters);
    for iter in 1..=n_iters {
        let (next, stage1_pass, accepted) = if da {
            let (next, s1, acc) =
                da_pmcmc_update(&state, model, y, alpha, prop, pfcfg, &mut rng)?;
            if s1 {
                pf_calls += 1;
                stage1_total += 1;
            }
            (next, Some(s1), acc)
        } else {
            let (next, acc) = pmcmc_update(&state, model, y, alpha, prop, pfcfg, &mut rng)?;
            pf_calls += 1;
            (next, None, acc)
        };
        if accepted {
            accepted_total += 1;
        }
        state = next;
        iterations.push(IterRecord {
            iter,
            theta: state.theta.values().to_vec(),
            log_count_lik: state.loghat_count,
            log_add_lik: state.logadd,
            accepted,
            stage1_pass,
            pf_calls_cum: pf_calls,
            seconds_cum: start.elapsed().as_secs_f64(),
        });
    }
    Ok(ChainRecord {
        param_names: state.theta.names().to_vec(),
        iterations,
        acceptance_rate: accepted_total as f64 / n_iters as f64,
        stage1_pass_rate: da.then(|| stage1_total as f64 / n_iters as f64),
        pf_calls,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Keeps the incumbent's parameter layout shareable across chains.
pub fn share_layout(theta: &ParamVector) -> Arc<crate::params::ParamLayout> {
    Arc::clone(theta.layout())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream_rng;

    #[test]
    fn degenerate_proposal_is_identity() {
        // lambda -> 0 with the small component switched off reproduces theta.
        let theta = ParamVector::from_pairs([("a", 1.5), ("b", -0.5)]).unwrap();
        let cfg = ProposalConfig::identity(2, 1e-300).unwrap().with_main_weight(1.0);
        let mut rng = stream_rng(1, &[1]);
        let prop = mixture_propose(&theta, &cfg, &mut rng).unwrap();
        for (a, b) in theta.values().iter().zip(prop.values()) {
            assert!((a - b).abs() < 1e-140);
        }
    }

    #[test]
    fn mixture_moment_check_1d() {
        // d=1, Sigma=1, lambda=1: Var(theta' - theta) =
        // 0.95 * 2.38^2 + 0.05 * 0.1^2 = 5.38168.
        let theta = ParamVector::from_pairs([("a", 0.0)]).unwrap();
        let cfg = ProposalConfig::identity(1, 1.0).unwrap();
        let mut rng = stream_rng(2, &[7]);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let step = mixture_propose(&theta, &cfg, &mut rng).unwrap().values()[0];
            sum += step;
            sumsq += step * step;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let expect = 0.95 * 2.38f64.powi(2) + 0.05 * 0.01;
        // 4 SE of the sample variance; kurtosis of the mixture inflates the
        // plain-normal SE, so use the empirical fourth-moment bound ~3x.
        let se = expect * (2.0f64 / n as f64).sqrt() * 3.0;
        assert!((var - expect).abs() < 4.0 * se, "var {var}, expect {expect}");
        assert!(mean.abs() < 4.0 * (expect / n as f64).sqrt());
    }

    #[test]
    fn ratio_shift_invariance() {
        // Adding a constant to every log-likelihood leaves ratios unchanged.
        let r0 = pmcmc_log_ratio(0.0, -1.0, -2.0, 0.7, -10.0, -12.0);
        let r1 = pmcmc_log_ratio(0.0, -1.0, -2.0, 0.7, -10.0 + 55.5, -12.0 + 55.5);
        assert!((r0 - r1).abs() < 1e-12);
    }

    #[test]
    fn da_ratios_compose_to_plain_ratio() {
        // With alpha = 1, stage-1 times stage-2 equals the one-stage ratio.
        let (lp_p, lp_c) = (-0.4, -0.9);
        let (la_p, la_c) = (-33.0, -31.5);
        let (lh_p, lh_c) = (-120.0, -118.0);
        let plain = pmcmc_log_ratio(0.0, lp_p, lp_c, 1.0, lh_p + la_p, lh_c + la_c);
        let staged = da_stage1_log_ratio(0.0, lp_p, lp_c, 1.0, la_p, la_c)
            + da_stage2_log_ratio(1.0, lh_p, lh_c);
        assert!((plain - staged).abs() < 1e-12);
    }

    #[test]
    fn alpha_zero_ignores_likelihood() {
        let r = pmcmc_log_ratio(0.0, -1.0, -1.0, 0.0, f64::NEG_INFINITY, -5.0);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn fallback_on_non_factorisable_sigma() {
        // Negative-definite sigma cannot be Cholesky-factorised.
        let sigma = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let cfg = ProposalConfig::new(sigma, 1.0).unwrap();
        let theta = ParamVector::from_pairs([("a", 0.0), ("b", 0.0)]).unwrap();
        let mut rng = stream_rng(3, &[3]);
        // Diagonal fallback clamps negative variances to zero: main component
        // degenerates, but the small component still moves.
        let prop = mixture_propose(&theta, &cfg, &mut rng).unwrap();
        assert_eq!(prop.len(), 2);
    }
}
