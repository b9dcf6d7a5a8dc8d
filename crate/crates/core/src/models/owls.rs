//! Little-owl integrated model family: a two-class (juvenile/adult female)
//! count state-space model with Poisson observations, capture-recapture
//! m-arrays spanning both genders and age groups, and Poisson nest-record
//! (fecundity) data. Eight variants pin subsets of the parameters; each can
//! additionally let immigration depend on the vole-abundance indicator.

use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::model::{LatentState, Model};
use crate::models::data::{MArray, OwlsData};
use crate::models::dist::{
    discrete_uniform_sample, logit_inv, multinomial_ln_pmf, poisson_ln_pmf, poisson_sample,
};
use crate::models::normal_ln_pdf;
use crate::params::{ParamLayout, ParamVector};

pub const INITIAL_COUNT_MAX: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Age {
    Juvenile,
    Adult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gender {
    Female,
    Male,
}

/// One of the eight owl model variants, with or without vole-dependent
/// immigration.
///
/// 1. fully time-varying recapture and productivity;
/// 2. as 1 with recapture constant over time;
/// 3. as 1 with productivity constant over time;
/// 4. as 3 without the survival year trend;
/// 5. as 4 without the survival gender effect;
/// 6. as 2 with productivity constant over time;
/// 7. as 6 without the survival year trend;
/// 8. as 7 without the survival gender effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OwlsVariant {
    pub index: u8,
    pub voles: bool,
}

impl OwlsVariant {
    pub fn new(index: u8, voles: bool) -> Result<Self> {
        if !(1..=8).contains(&index) {
            return Err(Error::ModelSpec(format!(
                "owls variant index must lie in 1..8, got {index}"
            )));
        }
        Ok(Self { index, voles })
    }

    pub fn time_varying_recapture(&self) -> bool {
        matches!(self.index, 1 | 3 | 4 | 5)
    }

    pub fn time_varying_productivity(&self) -> bool {
        matches!(self.index, 1 | 2)
    }

    /// Survival year trend (alpha3) present.
    pub fn has_year_trend(&self) -> bool {
        matches!(self.index, 1 | 2 | 3 | 6)
    }

    /// Survival gender effect (alpha1) present.
    pub fn has_gender_effect(&self) -> bool {
        matches!(self.index, 1 | 2 | 3 | 4 | 6 | 7)
    }
}

#[derive(Debug, Clone)]
struct ParamIdx {
    alpha0: usize,
    alpha1: Option<usize>,
    alpha2: usize,
    alpha3: Option<usize>,
    delta0: usize,
    delta1: Option<usize>,
    beta1: usize,
    beta_start: usize,
    gamma_start: usize,
}

/// Owls model bound to a dataset.
pub struct OwlsModel {
    variant: OwlsVariant,
    t_len: usize,
    data: OwlsData,
    layout: Arc<ParamLayout>,
    /// (mean, sd) per parameter, aligned with the layout.
    priors: Vec<(f64, f64)>,
    idx: ParamIdx,
    /// Normalised year, indexed by t - 1 for t = 1..T.
    norm_year: Vec<f64>,
    /// Vole indicator, indexed by t - 1 for t = 1..T.
    voles_ind: Vec<f64>,
    id: String,
}

impl OwlsModel {
    pub fn new(variant: OwlsVariant, data: OwlsData) -> Result<Self> {
        let t_len = data.counts.len();
        if t_len < 2 {
            return Err(Error::ModelSpec("owls: need at least two observations".into()));
        }
        data.covariates.require_years(1, t_len as i64)?;
        for (name, marray) in data.marrays.iter() {
            marray.validate()?;
            check_marray_window(name, marray, t_len)?;
        }
        for rec in &data.fecundity {
            if rec.year < 1 || rec.year > t_len {
                return Err(Error::ModelSpec(format!(
                    "owls: fecundity year {} outside 1..{t_len}",
                    rec.year
                )));
            }
            if rec.surviving > 0 && rec.chicks == 0 {
                // n_t ~ Pois(N_t rho_t) has zero mass here for any theta
                return Err(Error::ModelSpec(format!(
                    "owls: fecundity year {} has survivors but no chicks",
                    rec.year
                )));
            }
        }

        let mut names: Vec<String> = Vec::new();
        let mut priors: Vec<(f64, f64)> = Vec::new();
        let sd = 2.0f64.sqrt(); // N(0, 2) priors, N(-2, 2) for delta0
        let push = |names: &mut Vec<String>, priors: &mut Vec<(f64, f64)>, n: &str, m: f64| {
            names.push(n.to_string());
            priors.push((m, sd));
            names.len() - 1
        };

        let alpha0 = push(&mut names, &mut priors, "alpha0", 0.0);
        let alpha1 = variant
            .has_gender_effect()
            .then(|| push(&mut names, &mut priors, "alpha1", 0.0));
        let alpha2 = push(&mut names, &mut priors, "alpha2", 0.0);
        let alpha3 = variant
            .has_year_trend()
            .then(|| push(&mut names, &mut priors, "alpha3", 0.0));
        let delta0 = push(&mut names, &mut priors, "delta0", -2.0);
        let delta1 = variant
            .voles
            .then(|| push(&mut names, &mut priors, "delta1", 0.0));
        let beta1 = push(&mut names, &mut priors, "beta1", 0.0);
        let beta_start = if variant.time_varying_recapture() {
            let start = names.len();
            for s in 2..=t_len {
                push(&mut names, &mut priors, &format!("beta_{s}"), 0.0);
            }
            start
        } else {
            push(&mut names, &mut priors, "beta", 0.0)
        };
        let gamma_start = if variant.time_varying_productivity() {
            let start = names.len();
            for t in 1..=t_len {
                push(&mut names, &mut priors, &format!("gamma_{t}"), 0.0);
            }
            start
        } else {
            push(&mut names, &mut priors, "gamma", 0.0)
        };

        let layout = Arc::new(ParamLayout::new(names)?);
        let norm_year: Vec<f64> = (1..=t_len)
            .map(|t| data.covariates.norm_year(t as i64))
            .collect::<Result<_>>()?;
        let voles_ind: Vec<f64> = (1..=t_len)
            .map(|t| data.covariates.voles(t as i64))
            .collect::<Result<_>>()?;
        let id = if variant.voles {
            format!("owls-m{}-voles", variant.index)
        } else {
            format!("owls-m{}", variant.index)
        };
        Ok(Self {
            variant,
            t_len,
            data,
            layout,
            priors,
            idx: ParamIdx { alpha0, alpha1, alpha2, alpha3, delta0, delta1, beta1, beta_start, gamma_start },
            norm_year,
            voles_ind,
            id,
        })
    }

    pub fn variant(&self) -> OwlsVariant {
        self.variant
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn data(&self) -> &OwlsData {
        &self.data
    }

    /// Survival probability phi_{a,g,t} for t = 1..T-1.
    pub fn phi(&self, theta: &ParamVector, t: usize, age: Age, gender: Gender) -> f64 {
        let v = theta.values();
        let mut x = v[self.idx.alpha0];
        if gender == Gender::Male {
            if let Some(i) = self.idx.alpha1 {
                x += v[i];
            }
        }
        if age == Age::Adult {
            x += v[self.idx.alpha2];
        }
        if let Some(i) = self.idx.alpha3 {
            x += v[i] * self.norm_year[t - 1];
        }
        logit_inv(x)
    }

    /// Recapture probability p_{g,s} for occasions s = 2..T.
    pub fn recapture_p(&self, theta: &ParamVector, s: usize, gender: Gender) -> f64 {
        let v = theta.values();
        let mut x = if self.variant.time_varying_recapture() {
            v[self.idx.beta_start + (s - 2)]
        } else {
            v[self.idx.beta_start]
        };
        if gender == Gender::Male {
            x += v[self.idx.beta1];
        }
        logit_inv(x)
    }

    /// Productivity rate rho_t for t = 1..T.
    pub fn rho(&self, theta: &ParamVector, t: usize) -> f64 {
        let v = theta.values();
        if self.variant.time_varying_productivity() {
            v[self.idx.gamma_start + (t - 1)].exp()
        } else {
            v[self.idx.gamma_start].exp()
        }
    }

    /// Immigration rate eta_t for t = 1..T-1.
    pub fn eta(&self, theta: &ParamVector, t: usize) -> f64 {
        let v = theta.values();
        let mut x = v[self.idx.delta0];
        if let Some(i) = self.idx.delta1 {
            x += v[i] * self.voles_ind[t - 1];
        }
        x.exp()
    }

    /// All four link values at (t, a, g): `(phi_{a,g,t}, p_{g,t+1}, rho_t, eta_t)`.
    pub fn link_at(
        &self,
        theta: &ParamVector,
        t: usize,
        age: Age,
        gender: Gender,
    ) -> Result<(f64, f64, f64, f64)> {
        if t < 1 || t >= self.t_len {
            return Err(Error::InvalidArgument(format!(
                "owls link: t must lie in 1..{}, got {t}",
                self.t_len - 1
            )));
        }
        Ok((
            self.phi(theta, t, age, gender),
            self.recapture_p(theta, t + 1, gender),
            self.rho(theta, t),
            self.eta(theta, t),
        ))
    }

    fn recapture_loglik(&self, theta: &ParamVector) -> f64 {
        let mut ll = 0.0;
        for (name, marray) in self.data.marrays.iter() {
            let (age, gender) = match name {
                "juv_female" => (Age::Juvenile, Gender::Female),
                "juv_male" => (Age::Juvenile, Gender::Male),
                "adult_female" => (Age::Adult, Gender::Female),
                _ => (Age::Adult, Gender::Male),
            };
            ll += self.recapture_loglik_one(theta, marray, age, gender);
            if ll == f64::NEG_INFINITY {
                return ll;
            }
        }
        ll
    }

    fn recapture_loglik_one(
        &self,
        theta: &ParamVector,
        marray: &MArray,
        age: Age,
        gender: Gender,
    ) -> f64 {
        let mut ll = 0.0;
        for (row, &release_t) in marray.release_times.iter().enumerate() {
            let q = recapture_cell_probs(
                release_t,
                self.t_len,
                self.phi(theta, release_t, age, gender),
                |r| self.phi(theta, r, Age::Adult, gender),
                |s| self.recapture_p(theta, s, gender),
            );
            // Align with the m-array columns (occasions 2..=T then never).
            let mut probs = vec![0.0; marray.n_columns()];
            for (k, s) in (release_t + 1..=self.t_len).enumerate() {
                probs[s - 2] = q[k];
            }
            probs[marray.n_columns() - 1] = q[q.len() - 1];
            ll += multinomial_ln_pmf(&probs, &marray.cells[row]);
            if ll == f64::NEG_INFINITY {
                return ll;
            }
        }
        ll
    }

    fn fecundity_loglik(&self, theta: &ParamVector) -> f64 {
        let mut ll = 0.0;
        for rec in &self.data.fecundity {
            let rate = rec.chicks as f64 * self.rho(theta, rec.year);
            ll += poisson_ln_pmf(rate, rec.surviving);
            if ll == f64::NEG_INFINITY {
                return ll;
            }
        }
        ll
    }
}

fn check_marray_window(name: &str, marray: &MArray, t_len: usize) -> Result<()> {
    let expected: Vec<usize> = (2..=t_len).collect();
    if marray.recapture_times != expected {
        return Err(Error::ModelSpec(format!(
            "owls m-array {name}: recapture occasions must span 2..={t_len}"
        )));
    }
    for &t in &marray.release_times {
        if t < 1 || t >= t_len {
            return Err(Error::ModelSpec(format!(
                "owls m-array {name}: release year {t} outside 1..{}",
                t_len - 1
            )));
        }
    }
    Ok(())
}

/// Multinomial cell probabilities for a release at `release_t`: probability
/// of first recapture at each `s` in `release_t+1..=t_len`, then never-seen.
///
/// `phi_release` is survival over the first interval at the age/gender of
/// release; later intervals use adult survival `phi_adult(r)`; `p(s)` is the
/// recapture probability at occasion `s`.
pub fn recapture_cell_probs(
    release_t: usize,
    t_len: usize,
    phi_release: f64,
    phi_adult: impl Fn(usize) -> f64,
    p: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let mut probs = Vec::with_capacity(t_len - release_t + 1);
    let mut alive_unseen = phi_release;
    let mut total = 0.0;
    for s in release_t + 1..=t_len {
        let q = alive_unseen * p(s);
        probs.push(q);
        total += q;
        alive_unseen *= (1.0 - p(s)) * phi_adult(s);
    }
    probs.push((1.0 - total).max(0.0));
    probs
}

/// One system-process step: `(juveniles, adults) -> (juveniles', adults')`.
///
/// Juveniles are Poisson with rate `(N1+NA) rho phi_juv / 2`; adults are the
/// binomial survivors plus Poisson immigrants with rate `(N1+NA) eta`.
pub fn owls_step(
    juveniles: u64,
    adults: u64,
    rho: f64,
    phi_juv_female: f64,
    phi_adult_female: f64,
    eta: f64,
    rng: &mut dyn RngCore,
) -> (u64, u64) {
    let total = juveniles + adults;
    let next_juv = poisson_sample(total as f64 * rho * phi_juv_female / 2.0, rng);
    let survivors = crate::models::dist::binomial_sample(total, phi_adult_female, rng);
    let immigrants = poisson_sample(total as f64 * eta, rng);
    (next_juv, survivors + immigrants)
}

impl Model for OwlsModel {
    type State = LatentState;
    type Obs = u64;

    fn model_id(&self) -> &str {
        &self.id
    }

    fn param_template(&self) -> ParamVector {
        let values: Vec<f64> = self.priors.iter().map(|&(m, _)| m).collect();
        ParamVector::new(Arc::clone(&self.layout), values).expect("layout-aligned template")
    }

    fn prior_logpdf(&self, theta: &ParamVector) -> f64 {
        theta
            .values()
            .iter()
            .zip(&self.priors)
            .map(|(&v, &(m, sd))| normal_ln_pdf(v, m, sd))
            .sum()
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> ParamVector {
        let values: Vec<f64> = self
            .priors
            .iter()
            .map(|&(m, sd)| m + sd * crate::models::standard_normal(rng))
            .collect();
        ParamVector::new(Arc::clone(&self.layout), values).expect("finite draws")
    }

    fn additional_loglik(&self, theta: &ParamVector) -> f64 {
        let recapture = self.recapture_loglik(theta);
        if recapture == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let fecundity = self.fecundity_loglik(theta);
        if fecundity == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        recapture + fecundity
    }

    fn initial_sample(&self, _theta: &ParamVector, rng: &mut dyn RngCore) -> LatentState {
        let juv = discrete_uniform_sample(0, INITIAL_COUNT_MAX, rng);
        let adult = discrete_uniform_sample(0, INITIAL_COUNT_MAX, rng);
        LatentState::counts(vec![juv, adult])
    }

    fn transition_sample(
        &self,
        theta: &ParamVector,
        t: usize,
        state: &LatentState,
        rng: &mut dyn RngCore,
    ) -> LatentState {
        // State at time t from time t-1: all rates indexed at t-1.
        let s = t - 1;
        let (juv, adult) = (state.counts[0], state.counts[1]);
        let (next_juv, next_adult) = owls_step(
            juv,
            adult,
            self.rho(theta, s),
            self.phi(theta, s, Age::Juvenile, Gender::Female),
            self.phi(theta, s, Age::Adult, Gender::Female),
            self.eta(theta, s),
            rng,
        );
        LatentState::counts(vec![next_juv, next_adult])
    }

    fn obs_logpdf(&self, _theta: &ParamVector, _t: usize, state: &LatentState, y: u64) -> f64 {
        let total = state.counts[0] + state.counts[1];
        poisson_ln_pmf(total as f64, y)
    }
}
