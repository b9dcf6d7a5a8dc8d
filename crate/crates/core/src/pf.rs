//! Particle filters producing unbiased likelihood estimates.
//!
//! Two entry points share one engine: [`run_pf_simple`] resamples
//! multinomially at every step and returns the classic estimator
//! `sum_t log((1/N) sum_n w_t^n)`, while [`run_pf_adaptive`] resamples
//! (systematically by default) only when the ESS fraction drops below a
//! threshold, carrying unnormalised weights across non-resampling steps and
//! accumulating the estimator over resampling steps plus the final step.
//! Optionally the adaptive filter propagates through model-supplied proposal
//! kernels, weighting by the full transition/observation/proposal ratio.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;
use crate::model::Model;
use crate::params::ParamVector;
use crate::resampling::{ess_fraction, multinomial_resample, systematic_resample};
use crate::seed::{domain, stream_rng};

/// Resampling discipline of a particle-filter run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleScheme {
    /// Systematic resampling when the ESS fraction falls below the threshold.
    Systematic,
    /// Multinomial resampling when the ESS fraction falls below the threshold.
    Multinomial,
    /// Multinomial resampling at every step regardless of ESS.
    AlwaysMultinomial,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PfConfig {
    pub n_particles: usize,
    /// Resample when the ESS fraction is below this value (in (0, 1]).
    pub ess_threshold: f64,
    pub scheme: ResampleScheme,
    /// Propagate through the model's proposal kernel instead of its transition.
    pub use_proposal: bool,
}

impl PfConfig {
    pub fn new(n_particles: usize) -> Self {
        Self {
            n_particles,
            ess_threshold: 0.9,
            scheme: ResampleScheme::Systematic,
            use_proposal: false,
        }
    }

    pub fn with_ess_threshold(mut self, ess_threshold: f64) -> Self {
        self.ess_threshold = ess_threshold;
        self
    }

    pub fn with_scheme(mut self, scheme: ResampleScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_proposal(mut self, use_proposal: bool) -> Self {
        self.use_proposal = use_proposal;
        self
    }
}

/// Weighted particle population after a filter pass.
///
/// `logw` are the running unnormalised log-weights, `weights` their
/// normalisation at the last completed step. `resampled[t-1]` records whether
/// resampling occurred between steps `t` and `t+1` (length `T - 1` for a full
/// pass). On weight degeneracy the pass stops early and `loglik` is `-inf`.
#[derive(Debug, Clone)]
pub struct ParticleCloud<S> {
    pub states: Vec<S>,
    pub logw: Vec<f64>,
    pub weights: Vec<f64>,
    pub ancestors: Vec<Vec<usize>>,
    pub resampled: Vec<bool>,
    pub ess_path: Vec<f64>,
    pub loglik: f64,
    /// Number of steps completed (equals `T` unless the pass degenerated).
    pub steps_completed: usize,
}

/// Algorithm-1 filter: bootstrap proposal, multinomial resampling at every
/// step, `exp(loglik)` unbiased for the count-data likelihood.
pub fn run_pf_simple<M: Model + ?Sized>(
    model: &M,
    theta: &ParamVector,
    y: &[M::Obs],
    n_particles: usize,
    seed: u64,
) -> Result<ParticleCloud<M::State>> {
    let cfg = PfConfig {
        n_particles,
        ess_threshold: 1.0,
        scheme: ResampleScheme::AlwaysMultinomial,
        use_proposal: false,
    };
    run_pf_adaptive(model, theta, y, &cfg, seed)
}

/// Adaptive filter: ESS-triggered resampling, carried weights, optional
/// proposal kernels.
pub fn run_pf_adaptive<M: Model + ?Sized>(
    model: &M,
    theta: &ParamVector,
    y: &[M::Obs],
    cfg: &PfConfig,
    seed: u64,
) -> Result<ParticleCloud<M::State>> {
    let n = cfg.n_particles;
    if n == 0 {
        return Err(Error::InvalidArgument("pf: n_particles must be >= 1".into()));
    }
    if y.is_empty() {
        return Err(Error::EmptyInput("pf: observation series"));
    }
    if cfg.use_proposal && !model.has_proposal() {
        return Err(Error::InvalidArgument(
            "pf: use_proposal set but the model supplies no proposal kernel".into(),
        ));
    }
    let t_len = y.len();
    let log_n = (n as f64).ln();

    let mut cloud = ParticleCloud {
        states: Vec::with_capacity(n),
        logw: vec![0.0; n],
        weights: vec![0.0; n],
        ancestors: Vec::new(),
        resampled: Vec::new(),
        ess_path: Vec::new(),
        loglik: 0.0,
        steps_completed: 0,
    };

    // Step 1: initialise and weight.
    let init: Vec<(M::State, f64)> = maybe_par(n, |p| {
        let mut rng = stream_rng(seed, &[domain::PF_INIT, p as u64]);
        if cfg.use_proposal {
            let state = model.proposal_sample(theta, 1, None, &mut rng);
            let lw = model.initial_logpdf(theta, &state)
                + model.obs_logpdf(theta, 1, &state, y[0])
                - model.proposal_logpdf(theta, 1, None, &state);
            (state, lw)
        } else {
            let state = model.initial_sample(theta, &mut rng);
            let lw = model.obs_logpdf(theta, 1, &state, y[0]);
            (state, lw)
        }
    });
    for (p, (state, lw)) in init.into_iter().enumerate() {
        cloud.states.push(state);
        cloud.logw[p] = lw;
    }
    cloud.steps_completed = 1;

    for t in 2..=t_len {
        let lse = log_sum_exp(&cloud.logw)?;
        if lse == f64::NEG_INFINITY {
            return Ok(degenerate(cloud));
        }
        let weights: Vec<f64> = cloud.logw.iter().map(|&lw| (lw - lse).exp()).collect();
        let ess = ess_fraction(&weights)?;
        cloud.ess_path.push(ess);
        cloud.weights = weights;

        let resample = match cfg.scheme {
            ResampleScheme::AlwaysMultinomial => true,
            _ => ess < cfg.ess_threshold,
        };
        let ancestors = if resample {
            // Cash the accumulated mean weight into the estimator and reset.
            cloud.loglik += lse - log_n;
            let mut rng = stream_rng(seed, &[domain::PF_RESAMPLE, t as u64]);
            match cfg.scheme {
                ResampleScheme::Systematic => {
                    let u0: f64 = rng.random();
                    systematic_resample(&cloud.weights, n, u0)?
                }
                _ => multinomial_resample(&cloud.weights, n, &mut rng)?,
            }
        } else {
            (0..n).collect()
        };
        cloud.resampled.push(resample);

        let carried: Vec<f64> = if resample {
            vec![0.0; n]
        } else {
            cloud.logw.clone()
        };
        let next: Vec<(M::State, f64)> = maybe_par(n, |p| {
            let mut rng = stream_rng(seed, &[domain::PF_PROPAGATE, t as u64, p as u64]);
            let parent = &cloud.states[ancestors[p]];
            if cfg.use_proposal {
                let state = model.proposal_sample(theta, t, Some(parent), &mut rng);
                let incr = model.transition_logpdf(theta, t, parent, &state)
                    + model.obs_logpdf(theta, t, &state, y[t - 1])
                    - model.proposal_logpdf(theta, t, Some(parent), &state);
                (state, carried[p] + incr)
            } else {
                let state = model.transition_sample(theta, t, parent, &mut rng);
                let incr = model.obs_logpdf(theta, t, &state, y[t - 1]);
                (state, carried[p] + incr)
            }
        });
        cloud.ancestors.push(ancestors);
        for (p, (state, lw)) in next.into_iter().enumerate() {
            cloud.states[p] = state;
            cloud.logw[p] = lw;
        }
        cloud.steps_completed = t;
    }

    // Final step always contributes to the estimator.
    let lse = log_sum_exp(&cloud.logw)?;
    if lse == f64::NEG_INFINITY {
        return Ok(degenerate(cloud));
    }
    cloud.loglik += lse - log_n;
    cloud.weights = cloud.logw.iter().map(|&lw| (lw - lse).exp()).collect();
    cloud.ess_path.push(ess_fraction(&cloud.weights)?);
    Ok(cloud)
}

fn degenerate<S>(mut cloud: ParticleCloud<S>) -> ParticleCloud<S> {
    cloud.loglik = f64::NEG_INFINITY;
    cloud.weights = vec![0.0; cloud.logw.len()];
    cloud
}

/// Parallelise across particles above a size cutoff; results are identical to
/// the serial path because every particle draws from its own derived stream.
fn maybe_par<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if n >= 512 {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}
