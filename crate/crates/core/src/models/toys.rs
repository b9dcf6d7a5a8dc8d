//! Reference models with tractable likelihoods, used to verify the particle
//! filter, the MCMC kernels and the SMC samplers against exact computations.

use std::sync::Arc;

use nalgebra::DVector;
use rand::RngCore;

use crate::model::Model;
use crate::models::dist::{categorical_sample, poisson_ln_pmf};
use crate::models::{normal_ln_pdf, standard_normal};
use crate::oracles::LgssmSpec;
use crate::params::{ParamLayout, ParamVector};
use crate::seed::{domain, stream_rng};

fn single_param_layout(name: &str) -> Arc<ParamLayout> {
    Arc::new(ParamLayout::new([name]).expect("valid layout"))
}

/// Scalar linear-Gaussian state-space model; the Kalman filter gives its
/// exact likelihood. Parameters are fixed inside the struct (the trait's
/// theta is a placeholder), since this model exists to test the filter at a
/// known parameter value. With `proposal_inflation` set, the model offers a
/// variance-inflated transition proposal exercising the proposal-kernel
/// filter path.
#[derive(Debug, Clone)]
pub struct LgssmModel {
    pub a: f64,
    pub q: f64,
    pub c: f64,
    pub r: f64,
    pub m0: f64,
    pub p0: f64,
    pub proposal_inflation: Option<f64>,
    layout: Arc<ParamLayout>,
}

impl LgssmModel {
    pub fn new(a: f64, q: f64, c: f64, r: f64, m0: f64, p0: f64) -> Self {
        Self { a, q, c, r, m0, p0, proposal_inflation: None, layout: single_param_layout("theta") }
    }

    pub fn with_proposal(mut self, inflation: f64) -> Self {
        self.proposal_inflation = Some(inflation);
        self
    }

    pub fn spec(&self) -> LgssmSpec {
        LgssmSpec::scalar(self.a, self.q, self.c, self.r, self.m0, self.p0)
    }

    /// Forward-simulates an observation series.
    pub fn simulate(&self, t_len: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, &[domain::SIMULATE]);
        let mut x = self.m0 + self.p0.sqrt() * standard_normal(&mut rng);
        let mut y = Vec::with_capacity(t_len);
        for t in 0..t_len {
            if t > 0 {
                x = self.a * x + self.q.sqrt() * standard_normal(&mut rng);
            }
            y.push(self.c * x + self.r.sqrt() * standard_normal(&mut rng));
        }
        y
    }

    pub fn exact_loglik(&self, y: &[f64]) -> f64 {
        let obs: Vec<DVector<f64>> = y.iter().map(|&v| DVector::from_element(1, v)).collect();
        crate::oracles::kalman_loglik(&self.spec(), &obs).expect("valid spec")
    }
}

impl Model for LgssmModel {
    type State = f64;
    type Obs = f64;

    fn model_id(&self) -> &str {
        "toy-lgssm"
    }

    fn param_template(&self) -> ParamVector {
        ParamVector::new(Arc::clone(&self.layout), vec![0.0]).unwrap()
    }

    fn prior_logpdf(&self, theta: &ParamVector) -> f64 {
        normal_ln_pdf(theta.values()[0], 0.0, 1.0)
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> ParamVector {
        ParamVector::new(Arc::clone(&self.layout), vec![standard_normal(rng)]).unwrap()
    }

    fn additional_loglik(&self, _theta: &ParamVector) -> f64 {
        0.0
    }

    fn initial_sample(&self, _theta: &ParamVector, rng: &mut dyn RngCore) -> f64 {
        self.m0 + self.p0.sqrt() * standard_normal(rng)
    }

    fn transition_sample(
        &self,
        _theta: &ParamVector,
        _t: usize,
        state: &f64,
        rng: &mut dyn RngCore,
    ) -> f64 {
        self.a * state + self.q.sqrt() * standard_normal(rng)
    }

    fn obs_logpdf(&self, _theta: &ParamVector, _t: usize, state: &f64, y: f64) -> f64 {
        normal_ln_pdf(y, self.c * state, self.r.sqrt())
    }

    fn has_proposal(&self) -> bool {
        self.proposal_inflation.is_some()
    }

    fn proposal_sample(
        &self,
        _theta: &ParamVector,
        _t: usize,
        prev: Option<&f64>,
        rng: &mut dyn RngCore,
    ) -> f64 {
        let infl = self.proposal_inflation.expect("proposal enabled");
        match prev {
            None => self.m0 + (infl * self.p0).sqrt() * standard_normal(rng),
            Some(&x) => self.a * x + (infl * self.q).sqrt() * standard_normal(rng),
        }
    }

    fn proposal_logpdf(
        &self,
        _theta: &ParamVector,
        _t: usize,
        prev: Option<&f64>,
        state: &f64,
    ) -> f64 {
        let infl = self.proposal_inflation.expect("proposal enabled");
        match prev {
            None => normal_ln_pdf(*state, self.m0, (infl * self.p0).sqrt()),
            Some(&x) => normal_ln_pdf(*state, self.a * x, (infl * self.q).sqrt()),
        }
    }

    fn transition_logpdf(&self, _theta: &ParamVector, _t: usize, prev: &f64, state: &f64) -> f64 {
        normal_ln_pdf(*state, self.a * prev, self.q.sqrt())
    }

    fn initial_logpdf(&self, _theta: &ParamVector, state: &f64) -> f64 {
        normal_ln_pdf(*state, self.m0, self.p0.sqrt())
    }
}

/// Finite-state HMM with categorical emissions at a fixed parameter value;
/// the forward recursion gives its exact likelihood. An optional perturbed
/// transition matrix serves as a proposal kernel.
#[derive(Debug, Clone)]
pub struct FiniteHmm {
    pub init: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    /// emission[state][symbol]
    pub emission: Vec<Vec<f64>>,
    pub proposal_transition: Option<Vec<Vec<f64>>>,
    layout: Arc<ParamLayout>,
}

impl FiniteHmm {
    pub fn new(init: Vec<f64>, transition: Vec<Vec<f64>>, emission: Vec<Vec<f64>>) -> Self {
        Self {
            init,
            transition,
            emission,
            proposal_transition: None,
            layout: single_param_layout("theta"),
        }
    }

    pub fn with_proposal(mut self, transition: Vec<Vec<f64>>) -> Self {
        self.proposal_transition = Some(transition);
        self
    }

    pub fn n_states(&self) -> usize {
        self.init.len()
    }

    /// Emission log-likelihood matrix for the forward oracle.
    pub fn emission_loglik_matrix(&self, y: &[usize]) -> Vec<Vec<f64>> {
        y.iter()
            .map(|&obs| {
                (0..self.n_states())
                    .map(|s| ln_or_neg_inf(self.emission[s][obs]))
                    .collect()
            })
            .collect()
    }

    pub fn exact_loglik(&self, y: &[usize]) -> f64 {
        crate::oracles::hmm_forward_loglik(
            &self.init,
            &self.transition,
            &self.emission_loglik_matrix(y),
        )
        .expect("valid hmm")
    }

    pub fn simulate(&self, t_len: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut rng = stream_rng(seed, &[domain::SIMULATE]);
        let mut states = Vec::with_capacity(t_len);
        let mut obs = Vec::with_capacity(t_len);
        let mut s = categorical_sample(&self.init, &mut rng);
        for t in 0..t_len {
            if t > 0 {
                s = categorical_sample(&self.transition[s], &mut rng);
            }
            states.push(s);
            obs.push(categorical_sample(&self.emission[s], &mut rng));
        }
        (states, obs)
    }
}

fn ln_or_neg_inf(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

impl Model for FiniteHmm {
    type State = usize;
    type Obs = usize;

    fn model_id(&self) -> &str {
        "toy-hmm"
    }

    fn param_template(&self) -> ParamVector {
        ParamVector::new(Arc::clone(&self.layout), vec![0.0]).unwrap()
    }

    fn prior_logpdf(&self, theta: &ParamVector) -> f64 {
        normal_ln_pdf(theta.values()[0], 0.0, 1.0)
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> ParamVector {
        ParamVector::new(Arc::clone(&self.layout), vec![standard_normal(rng)]).unwrap()
    }

    fn additional_loglik(&self, _theta: &ParamVector) -> f64 {
        0.0
    }

    fn initial_sample(&self, _theta: &ParamVector, rng: &mut dyn RngCore) -> usize {
        categorical_sample(&self.init, rng)
    }

    fn transition_sample(
        &self,
        _theta: &ParamVector,
        _t: usize,
        state: &usize,
        rng: &mut dyn RngCore,
    ) -> usize {
        categorical_sample(&self.transition[*state], rng)
    }

    fn obs_logpdf(&self, _theta: &ParamVector, _t: usize, state: &usize, y: usize) -> f64 {
        ln_or_neg_inf(self.emission[*state][y])
    }

    fn has_proposal(&self) -> bool {
        self.proposal_transition.is_some()
    }

    fn proposal_sample(
        &self,
        _theta: &ParamVector,
        _t: usize,
        prev: Option<&usize>,
        rng: &mut dyn RngCore,
    ) -> usize {
        let prop = self.proposal_transition.as_ref().expect("proposal enabled");
        match prev {
            None => categorical_sample(&self.init, rng),
            Some(&s) => categorical_sample(&prop[s], rng),
        }
    }

    fn proposal_logpdf(
        &self,
        _theta: &ParamVector,
        _t: usize,
        prev: Option<&usize>,
        state: &usize,
    ) -> f64 {
        let prop = self.proposal_transition.as_ref().expect("proposal enabled");
        match prev {
            None => ln_or_neg_inf(self.init[*state]),
            Some(&s) => ln_or_neg_inf(prop[s][*state]),
        }
    }

    fn transition_logpdf(
        &self,
        _theta: &ParamVector,
        _t: usize,
        prev: &usize,
        state: &usize,
    ) -> f64 {
        ln_or_neg_inf(self.transition[*prev][*state])
    }

    fn initial_logpdf(&self, _theta: &ParamVector, state: &usize) -> f64 {
        ln_or_neg_inf(self.init[*state])
    }
}

/// Two-state HMM with Poisson emissions whose rates are scaled by a single
/// unknown parameter restricted to a finite grid with a uniform prior. The
/// model evidence is an exact finite sum, which exercises the SMC samplers
/// end to end against enumeration.
#[derive(Debug, Clone)]
pub struct GridHmm {
    pub grid: Vec<f64>,
    pub init: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    /// Base Poisson emission rate per state, scaled by theta.
    pub base_rates: Vec<f64>,
    layout: Arc<ParamLayout>,
}

impl GridHmm {
    pub fn new(grid: Vec<f64>, init: Vec<f64>, transition: Vec<Vec<f64>>, base_rates: Vec<f64>) -> Self {
        Self { grid, init, transition, base_rates, layout: single_param_layout("scale") }
    }

    pub fn theta(&self, value: f64) -> ParamVector {
        ParamVector::new(Arc::clone(&self.layout), vec![value]).unwrap()
    }

    /// Exact log-evidence by enumerating the grid with the forward oracle.
    pub fn exact_log_evidence(&self, y: &[u64]) -> f64 {
        let terms: Vec<f64> = self
            .grid
            .iter()
            .map(|&g| {
                let emissions: Vec<Vec<f64>> = y
                    .iter()
                    .map(|&obs| {
                        self.base_rates
                            .iter()
                            .map(|&r| poisson_ln_pmf(r * g, obs))
                            .collect()
                    })
                    .collect();
                crate::oracles::hmm_forward_loglik(&self.init, &self.transition, &emissions)
                    .expect("valid hmm")
                    - (self.grid.len() as f64).ln()
            })
            .collect();
        crate::logspace::log_sum_exp(&terms).expect("non-empty grid")
    }

    pub fn simulate(&self, scale: f64, t_len: usize, seed: u64) -> Vec<u64> {
        let mut rng = stream_rng(seed, &[domain::SIMULATE]);
        let mut s = categorical_sample(&self.init, &mut rng);
        let mut y = Vec::with_capacity(t_len);
        for t in 0..t_len {
            if t > 0 {
                s = categorical_sample(&self.transition[s], &mut rng);
            }
            y.push(crate::models::dist::poisson_sample(self.base_rates[s] * scale, &mut rng));
        }
        y
    }
}

impl Model for GridHmm {
    type State = usize;
    type Obs = u64;

    fn model_id(&self) -> &str {
        "toy-grid-hmm"
    }

    fn param_template(&self) -> ParamVector {
        self.theta(self.grid[0])
    }

    fn prior_logpdf(&self, theta: &ParamVector) -> f64 {
        let v = theta.values()[0];
        if self.grid.iter().any(|&g| (g - v).abs() < 1e-9) {
            -(self.grid.len() as f64).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> ParamVector {
        let i = (rng.next_u64() % self.grid.len() as u64) as usize;
        self.theta(self.grid[i])
    }

    fn additional_loglik(&self, _theta: &ParamVector) -> f64 {
        0.0
    }

    fn initial_sample(&self, _theta: &ParamVector, rng: &mut dyn RngCore) -> usize {
        categorical_sample(&self.init, rng)
    }

    fn transition_sample(
        &self,
        _theta: &ParamVector,
        _t: usize,
        state: &usize,
        rng: &mut dyn RngCore,
    ) -> usize {
        categorical_sample(&self.transition[*state], rng)
    }

    fn obs_logpdf(&self, theta: &ParamVector, _t: usize, state: &usize, y: u64) -> f64 {
        poisson_ln_pmf(self.base_rates[*state] * theta.values()[0], y)
    }
}

/// Gaussian-mean conjugate model split into a "count" factor (routed through
/// the particle filter, which is exact here because the latent state is
/// trivial) and an "additional" factor evaluated pointwise. Posterior and
/// evidence are available in closed form over the combined data.
#[derive(Debug, Clone)]
pub struct ConjugateGaussianModel {
    pub prior_mean: f64,
    pub prior_var: f64,
    pub obs_var: f64,
    /// Data entering through `additional_loglik`.
    pub additional_data: Vec<f64>,
    layout: Arc<ParamLayout>,
}

impl ConjugateGaussianModel {
    pub fn new(prior_mean: f64, prior_var: f64, obs_var: f64, additional_data: Vec<f64>) -> Self {
        Self { prior_mean, prior_var, obs_var, additional_data, layout: single_param_layout("mu") }
    }

    /// Closed-form posterior (mean, var) of mu given count data `y` plus the
    /// additional data.
    pub fn exact_posterior(&self, y: &[f64]) -> (f64, f64) {
        let all: Vec<f64> = y.iter().chain(&self.additional_data).copied().collect();
        crate::oracles::conjugate_gaussian_posterior(
            self.prior_mean,
            self.prior_var,
            self.obs_var,
            &all,
        )
    }

    /// Closed-form log evidence of count data `y` plus the additional data.
    pub fn exact_log_evidence(&self, y: &[f64]) -> f64 {
        let all: Vec<f64> = y.iter().chain(&self.additional_data).copied().collect();
        crate::oracles::conjugate_gaussian_evidence(
            self.prior_mean,
            self.prior_var,
            self.obs_var,
            &all,
        )
        .expect("positive variances")
    }
}

impl Model for ConjugateGaussianModel {
    type State = ();
    type Obs = f64;

    fn model_id(&self) -> &str {
        "toy-conjugate-gaussian"
    }

    fn param_template(&self) -> ParamVector {
        ParamVector::new(Arc::clone(&self.layout), vec![self.prior_mean]).unwrap()
    }

    fn prior_logpdf(&self, theta: &ParamVector) -> f64 {
        normal_ln_pdf(theta.values()[0], self.prior_mean, self.prior_var.sqrt())
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> ParamVector {
        let v = self.prior_mean + self.prior_var.sqrt() * standard_normal(rng);
        ParamVector::new(Arc::clone(&self.layout), vec![v]).unwrap()
    }

    fn additional_loglik(&self, theta: &ParamVector) -> f64 {
        let mu = theta.values()[0];
        self.additional_data
            .iter()
            .map(|&d| normal_ln_pdf(d, mu, self.obs_var.sqrt()))
            .sum()
    }

    fn initial_sample(&self, _theta: &ParamVector, _rng: &mut dyn RngCore) {}

    fn transition_sample(
        &self,
        _theta: &ParamVector,
        _t: usize,
        _state: &(),
        _rng: &mut dyn RngCore,
    ) {
    }

    fn obs_logpdf(&self, theta: &ParamVector, _t: usize, _state: &(), y: f64) -> f64 {
        normal_ln_pdf(y, theta.values()[0], self.obs_var.sqrt())
    }
}
