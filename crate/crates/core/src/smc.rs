//! Evidence-estimating SMC samplers.
//!
//! [`run_smc_single_stage`] tempers the whole likelihood
//! `(p_hat(y|theta) p(m|theta))^alpha_s` from prior to posterior;
//! [`run_smc_two_stage`] first tempers only the cheap additional-data
//! likelihood `p(m|theta)^alpha_s` with filter-free MH moves, then brings in
//! the count-data estimate `p_hat(y|theta)^beta_s` with delayed-acceptance
//! moves. Temperatures are chosen adaptively so the conditional ESS drops to
//! a target at every step; resampling is systematic and ESS-triggered; the
//! proposal covariance is the weighted covariance of the current particles
//! with a scale factor adapted from the realised acceptance rate.
//!
//! The evidence estimate multiplies mean carried weights over resampling
//! steps plus the final step. In the second stage only the count-data
//! estimate is tempered (exponent `beta_s - beta_{s-1}` on `p_hat` alone) so
//! that each step targets
//! `prior * p(m|theta) * p_hat(y|theta)^beta_s`; correspondingly the
//! delayed-acceptance moves keep exponent 1 on the additional-data ratio.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;
use crate::model::Model;
use crate::params::ParamVector;
use crate::pf::{run_pf_adaptive, PfConfig};
use crate::pmcmc::{
    da_pmcmc_update_tempered, da_stage1_log_ratio, metropolis_accept, mixture_propose,
    pmcmc_update, ChainState, ProposalConfig,
};
use crate::resampling::{ess_fraction, solve_temperature, systematic_resample};
use crate::seed::{domain, stream_rng};

/// Configuration of both SMC samplers.
#[derive(Debug, Clone, Serialize)]
pub struct SamplerConfig {
    /// Number of parameter particles M.
    pub n_outer: usize,
    /// Inner particle-filter configuration (N particles per likelihood estimate).
    pub pf: PfConfig,
    /// Resample when the ESS fraction drops below this value.
    pub ess_star: f64,
    /// CESS target for the additional-data stage (and the single-stage sampler).
    pub cess_star_alpha: f64,
    /// CESS target for the count-data stage.
    pub cess_star_beta: f64,
    /// Initial proposal scale.
    pub lambda0: f64,
    /// MH moves applied to each particle at every tempering step.
    pub mcmc_moves_per_step: usize,
    /// Abort if a stage exceeds this many tempering steps.
    pub max_steps: usize,
}

impl SamplerConfig {
    pub fn new(n_outer: usize, pf: PfConfig) -> Self {
        Self {
            n_outer,
            pf,
            ess_star: 0.9,
            cess_star_alpha: 0.99,
            cess_star_beta: 0.99,
            lambda0: 1.0,
            mcmc_moves_per_step: 1,
            max_steps: 10_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_outer < 2 {
            return Err(Error::InvalidArgument("smc: n_outer must be >= 2".into()));
        }
        for (name, v) in [
            ("ess_star", self.ess_star),
            ("cess_star_alpha", self.cess_star_alpha),
            ("cess_star_beta", self.cess_star_beta),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "smc: {name} must lie in (0,1), got {v}"
                )));
            }
        }
        if self.lambda0 <= 0.0 {
            return Err(Error::InvalidArgument("smc: lambda0 must be positive".into()));
        }
        Ok(())
    }
}

/// Fixed or CESS-adaptive temperature placement (single-stage sampler).
#[derive(Debug, Clone)]
pub enum ScheduleMode {
    Adaptive,
    Fixed(Vec<f64>),
}

/// Realised tempering schedule with per-step bookkeeping.
#[derive(Debug, Clone, Default, Serialize)]
pub struct TemperSchedule {
    pub temperatures: Vec<f64>,
    /// Stage label per step (1 = additional-data / single stage, 2 = count-data).
    pub stage: Vec<u8>,
    /// Systematic-resampling indicator per step.
    pub resampled: Vec<bool>,
    /// `log((1/M) sum_m v_s^m)` of the carried weights at each step.
    pub log_mean_weight: Vec<f64>,
    /// Whether the step's mean weight entered the evidence product.
    pub cashed: Vec<bool>,
}

impl TemperSchedule {
    pub fn len(&self) -> usize {
        self.temperatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temperatures.is_empty()
    }

    /// Number of stage-1 steps, or `None` when single-stage.
    pub fn stage_boundary(&self) -> Option<usize> {
        if self.stage.iter().any(|&s| s == 2) {
            Some(self.stage.iter().filter(|&&s| s == 1).count())
        } else {
            None
        }
    }
}

/// Output of an SMC-sampler run.
#[derive(Debug, Clone)]
pub struct EvidenceEstimate {
    pub model_id: String,
    pub log_evidence: f64,
    pub schedule: TemperSchedule,
    /// Final particles with their normalised weights.
    pub particles: Vec<ParamVector>,
    pub weights: Vec<f64>,
    /// Mean move-acceptance fraction per step.
    pub acceptance: Vec<f64>,
    /// Mean stage-1 pass fraction per step (1.0 where no screening applies).
    pub stage1_pass: Vec<f64>,
    /// Proposal scale used at each step.
    pub lambda_path: Vec<f64>,
    pub pf_calls: u64,
    pub seconds: f64,
}

impl EvidenceEstimate {
    /// Weighted posterior expectation of `h` over the final particles.
    pub fn posterior_estimate(&self, h: impl Fn(&ParamVector) -> f64) -> Result<f64> {
        weighted_posterior_estimate(&self.particles, &self.weights, h)
    }

    /// JSON summary; `particles_file` names the CSV written alongside.
    pub fn summary_json(&self, particles_file: &str) -> serde_json::Value {
        serde_json::json!({
            "model_id": self.model_id,
            "log_evidence": self.log_evidence,
            "temperatures": self.schedule.temperatures,
            "stage_boundary": self.schedule.stage_boundary(),
            "resampled": self.schedule.resampled,
            "acceptance": self.acceptance,
            "stage1_pass": self.stage1_pass,
            "lambda": self.lambda_path,
            "pf_calls": self.pf_calls,
            "seconds": self.seconds,
            "particles_file": particles_file,
        })
    }

    /// One row per particle: weight, then the named parameters.
    pub fn write_particles_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        let mut header = vec!["weight".to_string()];
        if let Some(first) = self.particles.first() {
            header.extend(first.names().iter().cloned());
        }
        writer.write_record(&header)?;
        for (theta, weight) in self.particles.iter().zip(&self.weights) {
            let mut row = vec![format!("{weight:.17e}")];
            row.extend(theta.values().iter().map(|v| format!("{v:.17e}")));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Proposal-scale adaptation: double above 0.5 acceptance, halve below 0.2.
pub fn adapt_lambda(lambda: f64, acc_rate: f64) -> f64 {
    if acc_rate > 0.5 {
        lambda * 2.0
    } else if acc_rate < 0.2 {
        lambda * 0.5
    } else {
        lambda
    }
}

/// Weighted mean of `h` over particles.
pub fn weighted_posterior_estimate(
    particles: &[ParamVector],
    weights: &[f64],
    h: impl Fn(&ParamVector) -> f64,
) -> Result<f64> {
    if particles.is_empty() || particles.len() != weights.len() {
        return Err(Error::InvalidArgument(
            "weighted_posterior_estimate: empty or mismatched inputs".into(),
        ));
    }
    crate::logspace::check_normalised(weights, 1e-8)?;
    Ok(particles.iter().zip(weights).map(|(p, &w)| w * h(p)).sum())
}

/// Posterior model probabilities: softmax of `log prior + log evidence` over
/// a shared model set.
pub fn posterior_model_probabilities(
    log_evidences: &BTreeMap<String, f64>,
    log_priors: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>> {
    if log_evidences.is_empty() {
        return Err(Error::EmptyInput("posterior_model_probabilities"));
    }
    if log_evidences.len() != log_priors.len()
        || !log_evidences.keys().all(|k| log_priors.contains_key(k))
    {
        return Err(Error::InvalidArgument(
            "posterior_model_probabilities: evidence/prior model sets differ".into(),
        ));
    }
    let keys: Vec<&String> = log_evidences.keys().collect();
    let scores: Vec<f64> = keys
        .iter()
        .map(|k| {
            let (le, lp) = (log_evidences[*k], log_priors[*k]);
            if le == f64::NEG_INFINITY || lp == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                le + lp
            }
        })
        .collect();
    let lse = log_sum_exp(&scores)?;
    if lse == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights);
    }
    Ok(keys
        .into_iter()
        .zip(scores)
        .map(|(k, s)| (k.clone(), (s - lse).exp()))
        .collect())
}

#[derive(Clone)]
struct SmcParticle {
    theta: ParamVector,
    logprior: f64,
    logadd: f64,
    loghat: f64,
}

impl SmcParticle {
    fn log_joint(&self) -> f64 {
        if self.loghat == f64::NEG_INFINITY || self.logadd == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.loghat + self.logadd
        }
    }
}

enum StageKind {
    /// Single-stage tempering of the whole likelihood with full PMCMC moves.
    WholeLikelihood,
    /// Additional-data likelihood only; filter-free MH moves.
    AdditionalOnly,
    /// Count-data estimate only; delayed-acceptance moves with exponent 1 on
    /// the additional-data ratio.
    CountOnly,
}

struct Engine<'a, M: Model + ?Sized> {
    model: &'a M,
    y: &'a [M::Obs],
    cfg: &'a SamplerConfig,
    seed: u64,
    particles: Vec<SmcParticle>,
    /// Carried unnormalised log-weights (log v-tilde).
    log_vtilde: Vec<f64>,
    lambda: f64,
    log_evidence: f64,
    schedule: TemperSchedule,
    acceptance: Vec<f64>,
    stage1_pass: Vec<f64>,
    lambda_path: Vec<f64>,
    pf_calls: u64,
    /// Global step counter across stages (1-based in RNG paths).
    step: usize,
    /// Whether the most recent step resampled (its weight was already cashed).
    last_cashed: bool,
    last_log_mean: f64,
}

impl<'a, M: Model + ?Sized> Engine<'a, M> {
    fn new(model: &'a M, y: &'a [M::Obs], cfg: &'a SamplerConfig, seed: u64) -> Self {
        Self {
            model,
            y,
            cfg,
            seed,
            particles: Vec::new(),
            log_vtilde: vec![0.0; cfg.n_outer],
            lambda: cfg.lambda0,
            log_evidence: 0.0,
            schedule: TemperSchedule::default(),
            acceptance: Vec::new(),
            stage1_pass: Vec::new(),
            lambda_path: Vec::new(),
            pf_calls: 0,
            step: 0,
            last_cashed: false,
            last_log_mean: 0.0,
        }
    }

    /// Draws the initial particle population from the prior; `with_pf` runs
    /// one filter per particle to attach the count-data estimate.
    fn init_particles(&mut self, with_pf: bool) -> Result<()> {
        let m_count = self.cfg.n_outer;
        let model = self.model;
        let y = self.y;
        let pfcfg = &self.cfg.pf;
        let seed = self.seed;
        let particles: Vec<Result<SmcParticle>> = (0..m_count)
            .into_par_iter()
            .map(|m| {
                let mut rng = stream_rng(seed, &[domain::SMC_INIT, m as u64]);
                let theta = model.prior_sample(&mut rng);
                let logprior = model.prior_logpdf(&theta);
                let logadd = model.additional_loglik(&theta);
                let loghat = if with_pf {
                    let pf_seed: u64 = rng.random();
                    run_pf_adaptive(model, &theta, y, pfcfg, pf_seed)?.loglik
                } else {
                    f64::NAN
                };
                Ok(SmcParticle { theta, logprior, logadd, loghat })
            })
            .collect();
        self.particles = particles.into_iter().collect::<Result<Vec<_>>>()?;
        if with_pf {
            self.pf_calls += m_count as u64;
        }
        Ok(())
    }

    /// Runs one filter per particle at the stage-1/stage-2 boundary.
    fn attach_pf_estimates(&mut self) -> Result<()> {
        let model = self.model;
        let y = self.y;
        let pfcfg = &self.cfg.pf;
        let seed = self.seed;
        let loghats: Vec<Result<f64>> = self
            .particles
            .par_iter()
            .enumerate()
            .map(|(m, p)| {
                let mut rng = stream_rng(seed, &[domain::SMC_PF, m as u64]);
                let pf_seed: u64 = rng.random();
                Ok(run_pf_adaptive(model, &p.theta, y, pfcfg, pf_seed)?.loglik)
            })
            .collect();
        for (p, lh) in self.particles.iter_mut().zip(loghats) {
            p.loghat = lh?;
        }
        self.pf_calls += self.cfg.n_outer as u64;
        Ok(())
    }

    fn log_u(&self, kind: &StageKind) -> Vec<f64> {
        self.particles
            .iter()
            .map(|p| match kind {
                StageKind::WholeLikelihood => p.log_joint(),
                StageKind::AdditionalOnly => p.logadd,
                StageKind::CountOnly => p.loghat,
            })
            .collect()
    }

    /// Runs one tempering stage from temperature 0 to 1.
    fn run_stage(
        &mut self,
        kind: StageKind,
        cess_star: f64,
        fixed: Option<&[f64]>,
        stage_label: u8,
    ) -> Result<()> {
        if let Some(temps) = fixed {
            validate_fixed_schedule(temps)?;
        }
        let m_count = self.cfg.n_outer;
        let log_m = (m_count as f64).ln();
        let mut temp_prev = 0.0f64;
        let mut stage_step = 0usize;

        while temp_prev < 1.0 {
            stage_step += 1;
            self.step += 1;
            if stage_step > self.cfg.max_steps {
                return Err(Error::InvalidArgument(format!(
                    "smc: stage {stage_label} exceeded max_steps = {}",
                    self.cfg.max_steps
                )));
            }
            let log_u = self.log_u(&kind);

            // Carried normalised weights drive the CESS-based temperature choice.
            let wtilde = normalise_or_degenerate(&self.log_vtilde, self.step, temp_prev, &log_u)?;
            let temp = match fixed {
                Some(temps) => temps[stage_step - 1],
                None => solve_temperature(&wtilde, &log_u, temp_prev, cess_star, 1.0)?,
            };
            let delta = temp - temp_prev;

            // Incremental weights v_s = vtilde * u^delta.
            let log_v: Vec<f64> = self
                .log_vtilde
                .iter()
                .zip(&log_u)
                .map(|(&lv, &lu)| {
                    if lu == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        lv + delta * lu
                    }
                })
                .collect();
            let w = normalise_or_degenerate(&log_v, self.step, temp, &log_u)?;
            let log_mean_v = log_sum_exp(&log_v)? - log_m;

            // Proposal covariance from the current weighted population.
            let sigma = weighted_covariance(&self.particles, &w);
            let prop = ProposalConfig::new(sigma, self.lambda)?;

            // ESS-triggered systematic resampling; resampling cashes the
            // accumulated mean weight into the evidence.
            let resample = ess_fraction(&w)? < self.cfg.ess_star;
            if resample {
                self.log_evidence += log_mean_v;
                let mut rng = stream_rng(self.seed, &[domain::SMC_RESAMPLE, self.step as u64]);
                let u0: f64 = rng.random();
                let ancestors = systematic_resample(&w, m_count, u0)?;
                self.particles = ancestors
                    .iter()
                    .map(|&a| self.particles[a].clone())
                    .collect();
                self.log_vtilde = vec![0.0; m_count];
            } else {
                self.log_vtilde = log_v;
            }

            // Rejuvenation moves at the new temperature.
            let (acc_rate, s1_rate) = self.apply_moves(&kind, temp, &prop)?;

            self.schedule.temperatures.push(temp);
            self.schedule.stage.push(stage_label);
            self.schedule.resampled.push(resample);
            self.schedule.log_mean_weight.push(log_mean_v);
            self.schedule.cashed.push(resample);
            self.acceptance.push(acc_rate);
            self.stage1_pass.push(s1_rate);
            self.lambda_path.push(self.lambda);
            if self.cfg.mcmc_moves_per_step > 0 {
                self.lambda = adapt_lambda(self.lambda, acc_rate);
            }
            self.last_cashed = resample;
            self.last_log_mean = log_mean_v;
            temp_prev = temp;
        }
        Ok(())
    }

    /// Applies the per-step MH moves; returns (acceptance rate, stage-1 pass rate).
    fn apply_moves(&mut self, kind: &StageKind, temp: f64, prop: &ProposalConfig) -> Result<(f64, f64)> {
        let moves = self.cfg.mcmc_moves_per_step;
        if moves == 0 {
            return Ok((0.0, 1.0));
        }
        let model = self.model;
        let y = self.y;
        let pfcfg = &self.cfg.pf;
        let seed = self.seed;
        let step = self.step;

        struct MoveOut {
            particle: SmcParticle,
            accepted: usize,
            stage1: usize,
            pf_calls: u64,
        }

        let outcomes: Vec<Result<MoveOut>> = self
            .particles
            .par_iter()
            .enumerate()
            .map(|(m, start)| {
                let mut rng = stream_rng(seed, &[domain::SMC_MOVE, step as u64, m as u64]);
                let mut particle = start.clone();
                let mut accepted = 0usize;
                let mut stage1 = 0usize;
                let mut pf_calls = 0u64;
                for _ in 0..moves {
                    match kind {
                        StageKind::AdditionalOnly => {
                            let theta_prop = mixture_propose(&particle.theta, prop, &mut rng)?;
                            let logprior_prop = model.prior_logpdf(&theta_prop);
                            let logadd_prop = model.additional_loglik(&theta_prop);
                            let log_r = da_stage1_log_ratio(
                                0.0,
                                logprior_prop,
                                particle.logprior,
                                temp,
                                logadd_prop,
                                particle.logadd,
                            );
                            stage1 += 1;
                            if metropolis_accept(log_r, &mut rng) {
                                particle.theta = theta_prop;
                                particle.logprior = logprior_prop;
                                particle.logadd = logadd_prop;
                                accepted += 1;
                            }
                        }
                        StageKind::WholeLikelihood => {
                            let state = ChainState {
                                theta: particle.theta.clone(),
                                loghat_count: particle.loghat,
                                logadd: particle.logadd,
                                logprior: particle.logprior,
                            };
                            let (next, acc) =
                                pmcmc_update(&state, model, y, temp, prop, pfcfg, &mut rng)?;
                            pf_calls += 1;
                            stage1 += 1;
                            if acc {
                                accepted += 1;
                            }
                            particle = SmcParticle {
                                theta: next.theta,
                                logprior: next.logprior,
                                logadd: next.logadd,
                                loghat: next.loghat_count,
                            };
                        }
                        StageKind::CountOnly => {
                            let state = ChainState {
                                theta: particle.theta.clone(),
                                loghat_count: particle.loghat,
                                logadd: particle.logadd,
                                logprior: particle.logprior,
                            };
                            // Exponent 1 on the additional-data ratio: stage 2
                            // targets prior * p(m|theta) * p_hat^beta.
                            let (next, s1, acc) = da_pmcmc_update_tempered(
                                &state, model, y, 1.0, temp, prop, pfcfg, &mut rng,
                            )?;
                            if s1 {
                                stage1 += 1;
                                pf_calls += 1;
                            }
                            if acc {
                                accepted += 1;
                            }
                            particle = SmcParticle {
                                theta: next.theta,
                                logprior: next.logprior,
                                logadd: next.logadd,
                                loghat: next.loghat_count,
                            };
                        }
                    }
                }
                Ok(MoveOut { particle, accepted, stage1, pf_calls })
            })
            .collect();

        let mut accepted_total = 0usize;
        let mut stage1_total = 0usize;
        for (m, out) in outcomes.into_iter().enumerate() {
            let out = out?;
            self.particles[m] = out.particle;
            accepted_total += out.accepted;
            stage1_total += out.stage1;
            self.pf_calls += out.pf_calls;
        }
        let total_moves = (self.cfg.n_outer * moves) as f64;
        Ok((accepted_total as f64 / total_moves, stage1_total as f64 / total_moves))
    }

    fn finish(mut self, start: Instant) -> Result<EvidenceEstimate> {
        // The final step always contributes to the evidence product; it was
        // already cashed if the last step resampled.
        if !self.last_cashed {
            self.log_evidence += self.last_log_mean;
            if let Some(c) = self.schedule.cashed.last_mut() {
                *c = true;
            }
        }
        let weights = normalise_or_degenerate(
            &self.log_vtilde,
            self.step,
            1.0,
            &vec![0.0; self.cfg.n_outer],
        )?;
        Ok(EvidenceEstimate {
            model_id: self.model.model_id().to_string(),
            log_evidence: self.log_evidence,
            schedule: self.schedule,
            particles: self.particles.into_iter().map(|p| p.theta).collect(),
            weights,
            acceptance: self.acceptance,
            stage1_pass: self.stage1_pass,
            lambda_path: self.lambda_path,
            pf_calls: self.pf_calls,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Single-stage sampler: tempers `(p_hat(y|theta) p(m|theta))^alpha` with
/// full PMCMC rejuvenation moves.
pub fn run_smc_single_stage<M: Model + ?Sized>(
    model: &M,
    y: &[M::Obs],
    cfg: &SamplerConfig,
    mode: &ScheduleMode,
    seed: u64,
) -> Result<EvidenceEstimate> {
    cfg.validate()?;
    let start = Instant::now();
    let mut engine = Engine::new(model, y, cfg, seed);
    engine.init_particles(true)?;
    let fixed = match mode {
        ScheduleMode::Adaptive => None,
        ScheduleMode::Fixed(temps) => Some(temps.as_slice()),
    };
    engine.run_stage(StageKind::WholeLikelihood, cfg.cess_star_alpha, fixed, 1)?;
    engine.finish(start)
}

/// Two-stage sampler: additional-data tempering with cheap MH moves, then
/// count-data tempering with delayed-acceptance PMCMC moves.
pub fn run_smc_two_stage<M: Model + ?Sized>(
    model: &M,
    y: &[M::Obs],
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<EvidenceEstimate> {
    cfg.validate()?;
    let start = Instant::now();
    let mut engine = Engine::new(model, y, cfg, seed);
    engine.init_particles(false)?;
    engine.run_stage(StageKind::AdditionalOnly, cfg.cess_star_alpha, None, 1)?;
    engine.attach_pf_estimates()?;
    engine.run_stage(StageKind::CountOnly, cfg.cess_star_beta, None, 2)?;
    engine.finish(start)
}

fn validate_fixed_schedule(temps: &[f64]) -> Result<()> {
    if temps.is_empty() {
        return Err(Error::EmptyInput("smc: fixed schedule"));
    }
    let mut prev = 0.0;
    for &t in temps {
        if !(t > prev && t <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "smc: fixed schedule must be strictly increasing in (0,1], got {t} after {prev}"
            )));
        }
        prev = t;
    }
    if temps[temps.len() - 1] != 1.0 {
        return Err(Error::InvalidArgument(
            "smc: fixed schedule must end at exactly 1".into(),
        ));
    }
    Ok(())
}

fn normalise_or_degenerate(
    logw: &[f64],
    step: usize,
    temperature: f64,
    log_u: &[f64],
) -> Result<Vec<f64>> {
    match crate::logspace::normalize_logweights(logw) {
        Ok((w, _)) => Ok(w),
        Err(Error::DegenerateWeights) => {
            let n_neg = log_u.iter().filter(|&&x| x == f64::NEG_INFINITY).count();
            let max_u = log_u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Err(Error::SmcDegenerate {
                step,
                temperature,
                diagnostics: format!(
                    "{n_neg}/{} particles with zero incremental weight; max log u = {max_u}",
                    log_u.len()
                ),
            })
        }
        Err(e) => Err(e),
    }
}

/// Weighted covariance of the particle parameters with a small ridge for
/// factorisation stability.
fn weighted_covariance(particles: &[SmcParticle], w: &[f64]) -> DMatrix<f64> {
    let d = particles[0].theta.len();
    let mut mean = vec![0.0f64; d];
    for (p, &wi) in particles.iter().zip(w) {
        for (mj, &v) in mean.iter_mut().zip(p.theta.values()) {
            *mj += wi * v;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for (p, &wi) in particles.iter().zip(w) {
        let vals = p.theta.values();
        for r in 0..d {
            let dr = vals[r] - mean[r];
            for c in 0..=r {
                cov[(r, c)] += wi * dr * (vals[c] - mean[c]);
            }
        }
    }
    for r in 0..d {
        for c in 0..r {
            cov[(c, r)] = cov[(r, c)];
        }
        cov[(r, r)] += 1e-9;
    }
    cov
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adapt_lambda_rules() {
        assert_eq!(adapt_lambda(1.0, 0.6), 2.0);
        assert_eq!(adapt_lambda(1.0, 0.35), 1.0);
        assert_eq!(adapt_lambda(4.0, 0.1), 2.0);
        assert_eq!(adapt_lambda(2.0, 0.5), 2.0);
        assert_eq!(adapt_lambda(2.0, 0.2), 2.0);
    }

    #[test]
    fn posterior_probs_equal_models() {
        let le: BTreeMap<String, f64> =
            (1..=4).map(|i| (format!("m{i}"), -12.3)).collect();
        let lp: BTreeMap<String, f64> =
            (1..=4).map(|i| (format!("m{i}"), (0.25f64).ln())).collect();
        let probs = posterior_model_probabilities(&le, &lp).unwrap();
        for p in probs.values() {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_probs_log9_gap() {
        let mut le = BTreeMap::new();
        le.insert("a".to_string(), -5.0 + 9.0f64.ln());
        le.insert("b".to_string(), -5.0);
        let mut lp = BTreeMap::new();
        lp.insert("a".to_string(), 0.5f64.ln());
        lp.insert("b".to_string(), 0.5f64.ln());
        let probs = posterior_model_probabilities(&le, &lp).unwrap();
        assert!((probs["a"] - 0.9).abs() < 1e-12);
        assert!((probs["b"] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn posterior_probs_zero_prior() {
        let mut le = BTreeMap::new();
        le.insert("a".to_string(), 0.0);
        le.insert("b".to_string(), 0.0);
        let mut lp = BTreeMap::new();
        lp.insert("a".to_string(), 0.0);
        lp.insert("b".to_string(), f64::NEG_INFINITY);
        let probs = posterior_model_probabilities(&le, &lp).unwrap();
        assert_eq!(probs["b"], 0.0);
        assert!((probs["a"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_probs_mismatched_keys() {
        let mut le = BTreeMap::new();
        le.insert("a".to_string(), 0.0);
        let mut lp = BTreeMap::new();
        lp.insert("b".to_string(), 0.0);
        assert!(posterior_model_probabilities(&le, &lp).is_err());
    }

    #[test]
    fn weighted_estimate_trivials() {
        let p1 = ParamVector::from_pairs([("x", 2.0)]).unwrap();
        let p2 = ParamVector::from_pairs([("x", 6.0)]).unwrap();
        let particles = vec![p1, p2];
        let got = weighted_posterior_estimate(&particles, &[0.5, 0.5], |_| 1.0).unwrap();
        assert_eq!(got, 1.0);
        let got =
            weighted_posterior_estimate(&particles, &[0.5, 0.5], |p| p.values()[0]).unwrap();
        assert_eq!(got, 4.0);
        let got =
            weighted_posterior_estimate(&particles, &[0.25, 0.75], |p| p.values()[0]).unwrap();
        assert_eq!(got, 5.0);
    }

    #[test]
    fn fixed_schedule_validation() {
        assert!(validate_fixed_schedule(&[0.5, 1.0]).is_ok());
        assert!(validate_fixed_schedule(&[0.5, 0.4, 1.0]).is_err());
        assert!(validate_fixed_schedule(&[0.5, 0.9]).is_err());
        assert!(validate_fixed_schedule(&[]).is_err());
    }
}
