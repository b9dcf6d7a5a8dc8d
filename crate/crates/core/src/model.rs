//! The state-space model abstraction consumed by every inference algorithm.
//!
//! A model bundles a prior over parameters, a pointwise-evaluable
//! additional-data log-likelihood (capture-recapture, ring-recovery,
//! fecundity, ...), and the state-space components for the count data:
//! initial sampler, transition sampler and observation density. The overall
//! likelihood factorises as the product of the count-data likelihood
//! (estimated by a particle filter) and the additional-data likelihood.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;

/// Latent population state for the ecological models: one non-negative count
/// per age/class, plus a regime indicator for regime-switching variants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentState {
    pub counts: Vec<u64>,
    /// 1-based regime index in `{1..K}`; present only for regime-switching models.
    pub regime: Option<usize>,
}

impl LatentState {
    pub fn counts(counts: Vec<u64>) -> Self {
        Self { counts, regime: None }
    }

    pub fn with_regime(counts: Vec<u64>, regime: usize) -> Self {
        Self { counts, regime: Some(regime) }
    }
}

/// Observed count series `y_1..y_T`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountSeries {
    values: Vec<u64>,
}

impl CountSeries {
    pub fn new(values: Vec<u64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("CountSeries"));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    /// 1-based access mirroring the `y_t` convention used throughout.
    pub fn at(&self, t: usize) -> u64 {
        self.values[t - 1]
    }
}

/// Behavioural interface of one candidate model.
///
/// Densities return `-inf` (never NaN) outside their support so that
/// Metropolis-Hastings rejection handles out-of-support proposals uniformly.
/// All methods take `&self`; implementations must be freely shareable across
/// threads, with randomness supplied exclusively through the `rng` arguments.
///
/// Time indices are 1-based: `transition_sample(theta, t, ..)` produces the
/// state at time `t` from the state at `t - 1` (so `t >= 2`), and
/// `obs_logpdf(theta, t, ..)` evaluates the observation density of `y_t`.
pub trait Model: Send + Sync {
    type State: Clone + Send + Sync;
    type Obs: Copy + Send + Sync;

    fn model_id(&self) -> &str;

    /// Template parameter vector (layout plus a representative point).
    fn param_template(&self) -> ParamVector;

    fn prior_logpdf(&self, theta: &ParamVector) -> f64;
    fn prior_sample(&self, rng: &mut dyn RngCore) -> ParamVector;

    /// Log-likelihood of the additional data, `log p(m | theta)`.
    fn additional_loglik(&self, theta: &ParamVector) -> f64;

    fn initial_sample(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> Self::State;
    fn transition_sample(
        &self,
        theta: &ParamVector,
        t: usize,
        state: &Self::State,
        rng: &mut dyn RngCore,
    ) -> Self::State;
    fn obs_logpdf(&self, theta: &ParamVector, t: usize, state: &Self::State, y: Self::Obs) -> f64;

    /// Whether the model supplies a proposal kernel (and the pointwise
    /// densities it requires) for the proposal-kernel particle filter.
    fn has_proposal(&self) -> bool {
        false
    }

    /// Proposal draw for time `t`; `prev` is `None` at `t = 1`.
    fn proposal_sample(
        &self,
        _theta: &ParamVector,
        _t: usize,
        _prev: Option<&Self::State>,
        _rng: &mut dyn RngCore,
    ) -> Self::State {
        unimplemented!("model does not provide a proposal kernel")
    }

    fn proposal_logpdf(
        &self,
        _theta: &ParamVector,
        _t: usize,
        _prev: Option<&Self::State>,
        _state: &Self::State,
    ) -> f64 {
        unimplemented!("model does not provide a proposal kernel")
    }

    /// Pointwise transition density; required only when `has_proposal()`.
    fn transition_logpdf(
        &self,
        _theta: &ParamVector,
        _t: usize,
        _prev: &Self::State,
        _state: &Self::State,
    ) -> f64 {
        unimplemented!("model does not provide pointwise transition densities")
    }

    /// Pointwise initial density; required only when `has_proposal()`.
    fn initial_logpdf(&self, _theta: &ParamVector, _state: &Self::State) -> f64 {
        unimplemented!("model does not provide a pointwise initial density")
    }
}

/// Combines a particle-filter estimate of the count-data log-likelihood with
/// the additional-data log-likelihood; `-inf` propagates.
pub fn joint_loglik<M: Model + ?Sized>(
    model: &M,
    theta: &ParamVector,
    loghat_count: f64,
) -> f64 {
    loghat_count + model.additional_loglik(theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_series_rejects_empty() {
        assert!(CountSeries::new(vec![]).is_err());
        let y = CountSeries::new(vec![5, 0, 2]).unwrap();
        assert_eq!(y.len(), 3);
        assert_eq!(y.at(1), 5);
        assert_eq!(y.at(3), 2);
    }
}
