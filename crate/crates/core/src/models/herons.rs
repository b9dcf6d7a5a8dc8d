//! Grey-heron integrated model family: an age-structured count state-space
//! model with negative-binomial observations, ring-recovery m-arrays, and
//! five alternative models for the productivity rate (constant, frost-day
//! regression, density dependence, threshold dependence, regime switching).

use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::model::{LatentState, Model};
use crate::models::data::HeronsData;
use crate::models::dist::{
    binomial_sample, categorical_sample, logit_inv, multinomial_ln_pmf, neg_binomial_ln_pmf,
    neg_binomial_sample, poisson_sample,
};
use crate::models::normal_ln_pdf;
use crate::params::{ParamLayout, ParamVector};

/// Negative-binomial success probability of the initial state distribution.
pub const INITIAL_NB_PROB: f64 = 0.01;
/// Prior expected total initial population.
pub const INITIAL_TOTAL_MEAN: f64 = 5000.0;
/// Prior mean of each non-adult age class.
pub const INITIAL_CLASS_MEAN: f64 = INITIAL_TOTAL_MEAN / 5.0;

/// Productivity-rate submodel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeronsProductivity {
    Constant,
    /// Log-productivity regressed on the previous year's normalised frost days.
    Frost,
    /// Log-productivity linear in the normalised observed count.
    Density,
    /// Decreasing step function of the observed count with `k` levels.
    Threshold { k: usize },
    /// Latent Markov regime selecting among `k` levels.
    Regime { k: usize },
}

impl HeronsProductivity {
    pub fn label(&self) -> String {
        match self {
            Self::Constant => "constant".into(),
            Self::Frost => "frost".into(),
            Self::Density => "density".into(),
            Self::Threshold { k } => format!("threshold-K{k}"),
            Self::Regime { k } => format!("regime-K{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeronsVariant {
    pub productivity: HeronsProductivity,
    /// Number of distinctly modelled age classes, 2..=4.
    pub a_classes: usize,
}

impl HeronsVariant {
    pub fn new(productivity: HeronsProductivity, a_classes: usize) -> Result<Self> {
        if !(2..=4).contains(&a_classes) {
            return Err(Error::ModelSpec(format!(
                "herons: age classes must lie in 2..4, got {a_classes}"
            )));
        }
        if let HeronsProductivity::Threshold { k } | HeronsProductivity::Regime { k } =
            productivity
        {
            if k < 1 {
                return Err(Error::ModelSpec("herons: K must be >= 1".into()));
            }
        }
        Ok(Self { productivity, a_classes })
    }
}

#[derive(Debug, Clone)]
struct ParamIdx {
    omega: usize,
    alpha_rec: usize,
    beta_rec: usize,
    /// alpha_a at surv_start + 2(a-1), beta_a at surv_start + 2(a-1) + 1.
    surv_start: usize,
    prod_start: usize,
}

pub struct HeronsModel {
    variant: HeronsVariant,
    t_len: usize,
    data: HeronsData,
    layout: Arc<ParamLayout>,
    priors: Vec<(f64, f64)>,
    idx: ParamIdx,
    /// First and last release occasions of the ring-recovery data.
    t1: usize,
    t2: usize,
    /// Normalised year and frost day covariates, indexed by year 0..=T-1.
    norm_year: Vec<f64>,
    norm_frost: Vec<f64>,
    /// Normalised observed counts and their range (threshold/density models).
    norm_obs: Vec<f64>,
    y_min: f64,
    y_max: f64,
    id: String,
}

impl HeronsModel {
    pub fn new(variant: HeronsVariant, data: HeronsData) -> Result<Self> {
        let variant = HeronsVariant::new(variant.productivity, variant.a_classes)?;
        let t_len = data.counts.len();
        if t_len < 2 {
            return Err(Error::ModelSpec("herons: need at least two observations".into()));
        }
        data.covariates.require_years(0, t_len as i64 - 1)?;
        data.marray.validate()?;
        let t1 = *data.marray.release_times.first().ok_or_else(|| {
            Error::ModelSpec("herons: m-array has no release rows".into())
        })?;
        let t2 = *data.marray.release_times.last().unwrap();
        for (i, &t) in data.marray.release_times.iter().enumerate() {
            if t != t1 + i {
                return Err(Error::ModelSpec(
                    "herons: m-array release years must be contiguous".into(),
                ));
            }
        }
        if t1 < 1 || t2 + 1 > t_len {
            return Err(Error::ModelSpec(format!(
                "herons: release window {t1}..{t2} incompatible with T = {t_len}"
            )));
        }
        let expected: Vec<usize> = (t1 + 1..=t2 + 1).collect();
        if data.marray.recapture_times != expected {
            return Err(Error::ModelSpec(format!(
                "herons: recovery occasions must span {}..={}",
                t1 + 1,
                t2 + 1
            )));
        }

        let a = variant.a_classes;
        let mut names: Vec<String> = vec!["omega".into(), "alpha0".into(), "beta0".into()];
        let mut priors: Vec<(f64, f64)> = vec![(-2.0, 2.0), (0.0, 1.0), (0.0, 1.0)];
        let surv_start = names.len();
        for age in 1..=a {
            names.push(format!("alpha{age}"));
            priors.push((0.0, 1.0));
            names.push(format!("beta{age}"));
            priors.push((0.0, 1.0));
        }
        let prod_start = names.len();
        match variant.productivity {
            HeronsProductivity::Constant => {
                names.push("psi".into());
                priors.push((0.0, 1.0));
            }
            HeronsProductivity::Frost => {
                for n in ["gamma0", "gamma1"] {
                    names.push(n.into());
                    priors.push((0.0, 1.0));
                }
            }
            HeronsProductivity::Density => {
                for n in ["epsilon0", "epsilon1"] {
                    names.push(n.into());
                    priors.push((0.0, 1.0));
                }
            }
            HeronsProductivity::Threshold { k } => {
                for i in 1..=k {
                    names.push(format!("zeta{i}"));
                    priors.push((0.0, 1.0));
                }
                for i in 1..=k {
                    names.push(format!("eta{i}"));
                    priors.push((0.0, 1.0));
                }
            }
            HeronsProductivity::Regime { k } => {
                for i in 1..=k {
                    names.push(format!("zeta{i}"));
                    priors.push((0.0, 1.0));
                }
                for row in 1..=k {
                    for col in 1..=k {
                        names.push(format!("varpi{row}_{col}"));
                        priors.push((0.0, 1.0));
                    }
                }
            }
        }
        let layout = Arc::new(ParamLayout::new(names)?);

        let norm_year: Vec<f64> = (0..t_len as i64)
            .map(|y| data.covariates.norm_year(y))
            .collect::<Result<_>>()?;
        let norm_frost: Vec<f64> = (0..t_len as i64)
            .map(|y| data.covariates.norm_frost(y))
            .collect::<Result<_>>()?;
        let counts_f: Vec<f64> = data.counts.values().iter().map(|&c| c as f64).collect();
        let mean = counts_f.iter().sum::<f64>() / counts_f.len() as f64;
        let var = counts_f.iter().map(|c| (c - mean).powi(2)).sum::<f64>()
            / (counts_f.len() as f64 - 1.0).max(1.0);
        let sd = var.sqrt();
        let norm_obs: Vec<f64> = if sd == 0.0 {
            vec![0.0; counts_f.len()]
        } else {
            counts_f.iter().map(|c| (c - mean) / sd).collect()
        };
        let y_min = counts_f.iter().copied().fold(f64::INFINITY, f64::min);
        let y_max = counts_f.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let id = format!("herons-{}-A{a}", variant.productivity.label());
        Ok(Self {
            variant,
            t_len,
            data,
            layout,
            priors,
            idx: ParamIdx { omega: 0, alpha_rec: 1, beta_rec: 2, surv_start, prod_start },
            t1,
            t2,
            norm_year,
            norm_frost,
            norm_obs,
            y_min,
            y_max,
            id,
        })
    }

    pub fn variant(&self) -> HeronsVariant {
        self.variant
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn data(&self) -> &HeronsData {
        &self.data
    }

    pub fn release_window(&self) -> (usize, usize) {
        (self.t1, self.t2)
    }

    /// Observation overdispersion parameter `kappa` in (0,1).
    pub fn kappa(&self, theta: &ParamVector) -> f64 {
        logit_inv(theta.values()[self.idx.omega])
    }

    /// Survival probability phi_{a,t} for age class a in 1..=A, t in 1..T-1.
    pub fn phi(&self, theta: &ParamVector, age: usize, t: usize) -> f64 {
        let v = theta.values();
        let base = self.idx.surv_start + 2 * (age - 1);
        logit_inv(v[base] + v[base + 1] * self.norm_frost[t])
    }

    /// Recovery probability lambda_t for t in t1..=t2.
    pub fn lambda(&self, theta: &ParamVector, t: usize) -> f64 {
        let v = theta.values();
        logit_inv(v[self.idx.alpha_rec] + v[self.idx.beta_rec] * self.norm_year[t])
    }

    fn prod_params<'a>(&self, theta: &'a ParamVector) -> &'a [f64] {
        &theta.values()[self.idx.prod_start..]
    }

    /// Productivity rate rho_t for t = 1..T-1. For the regime-switching
    /// variant, `regime` is the (already advanced) regime governing rho_t.
    pub fn rho(&self, theta: &ParamVector, t: usize, regime: Option<usize>) -> f64 {
        let params = self.prod_params(theta);
        match self.variant.productivity {
            HeronsProductivity::Constant => params[0].exp(),
            HeronsProductivity::Frost => (params[0] + params[1] * self.norm_frost[t - 1]).exp(),
            HeronsProductivity::Density => (params[0] + params[1] * self.norm_obs[t - 1]).exp(),
            HeronsProductivity::Threshold { k } => {
                let levels = threshold_levels(&params[..k]);
                let cuts = threshold_cutpoints(&params[k..2 * k], self.y_min, self.y_max);
                let y = self.data.counts.at(t) as f64;
                levels[threshold_level_index(y, &cuts)]
            }
            HeronsProductivity::Regime { k } => {
                let levels = threshold_levels(&params[..k]);
                levels[regime.expect("regime variant requires a regime index") - 1]
            }
        }
    }

    /// Row-stochastic regime transition matrix (regime-switching variant).
    pub fn regime_matrix(&self, theta: &ParamVector) -> Vec<Vec<f64>> {
        match self.variant.productivity {
            HeronsProductivity::Regime { k } => {
                regime_transition_matrix(&self.prod_params(theta)[k..], k)
            }
            _ => Vec::new(),
        }
    }

    fn recovery_loglik(&self, theta: &ParamVector) -> f64 {
        let marray = &self.data.marray;
        let n_cols = marray.n_columns();
        let a = self.variant.a_classes;
        let mut ll = 0.0;
        for (row, &release_t) in marray.release_times.iter().enumerate() {
            let q = recovery_cell_probs(
                release_t,
                self.t2 + 1,
                a,
                |age, time| self.phi(theta, age, time),
                |time| self.lambda(theta, time),
            );
            let mut probs = vec![0.0; n_cols];
            for (k, s) in (release_t + 1..=self.t2 + 1).enumerate() {
                probs[s - (self.t1 + 1)] = q[k];
            }
            probs[n_cols - 1] = q[q.len() - 1];
            ll += multinomial_ln_pmf(&probs, &marray.cells[row]);
            if ll == f64::NEG_INFINITY {
                return ll;
            }
        }
        ll
    }
}

/// Decreasing productivity levels `nu_k = sum_{l>=k} exp(zeta_l)`.
pub fn threshold_levels(zeta: &[f64]) -> Vec<f64> {
    let mut levels = vec![0.0; zeta.len()];
    let mut acc = 0.0;
    for (i, &z) in zeta.iter().enumerate().rev() {
        acc += z.exp();
        levels[i] = acc;
    }
    levels
}

/// Increasing cut points `tau_k` spreading `(y_min, y_max)` by the softmax
/// cumulative sums of `eta`; returns `K - 1` values.
pub fn threshold_cutpoints(eta: &[f64], y_min: f64, y_max: f64) -> Vec<f64> {
    let total: f64 = eta.iter().map(|e| e.exp()).sum();
    let mut cuts = Vec::with_capacity(eta.len().saturating_sub(1));
    let mut acc = 0.0;
    for &e in &eta[..eta.len().saturating_sub(1)] {
        acc += e.exp();
        cuts.push(y_min + (y_max - y_min) * acc / total);
    }
    cuts
}

/// 0-based level index for observation `y`: counts of cut points `<= y`, so
/// an observation equal to a cut point falls in the upper level.
pub fn threshold_level_index(y: f64, cuts: &[f64]) -> usize {
    cuts.partition_point(|&tau| tau <= y)
}

/// Row-wise softmax of the K*K regime score matrix (row-major `varpi`).
pub fn regime_transition_matrix(varpi: &[f64], k: usize) -> Vec<Vec<f64>> {
    debug_assert_eq!(varpi.len(), k * k);
    (0..k)
        .map(|row| {
            let scores = &varpi[row * k..(row + 1) * k];
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / total).collect()
        })
        .collect()
}

/// Ring-recovery cell probabilities for a release at `release_t`: probability
/// of recovery in each interval ending at `s` for `s` in
/// `release_t+1..=last_occasion`, then never-seen. Ages are capped at
/// `a_classes`; `phi(age, time)` and `lambda(time)` supply the rates.
pub fn recovery_cell_probs(
    release_t: usize,
    last_occasion: usize,
    a_classes: usize,
    phi: impl Fn(usize, usize) -> f64,
    lambda: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let mut probs = Vec::with_capacity(last_occasion - release_t + 1);
    let mut alive = 1.0;
    let mut total = 0.0;
    for s in release_t + 1..=last_occasion {
        let age = (s - release_t).min(a_classes);
        let surv = phi(age, s - 1);
        let q = (1.0 - surv) * lambda(s - 1) * alive;
        probs.push(q);
        total += q;
        alive *= surv;
    }
    probs.push((1.0 - total).max(0.0));
    probs
}

/// One system-process step for `a_classes` age classes: first-years are
/// Poisson recruits from the adult classes, intermediate classes are binomial
/// survivors of the class below, and the top class merges its own survivors
/// with those of the class below.
pub fn herons_step(counts: &[u64], rho: f64, phi: &[f64], rng: &mut dyn RngCore) -> Vec<u64> {
    let a = counts.len();
    debug_assert!(a >= 2 && phi.len() == a);
    let adults: u64 = counts[1..].iter().sum();
    let mut next = vec![0u64; a];
    next[0] = poisson_sample(rho * phi[0] * adults as f64, rng);
    for age in 2..a {
        next[age - 1] = binomial_sample(counts[age - 2], phi[age - 1], rng);
    }
    next[a - 1] = binomial_sample(counts[a - 2] + counts[a - 1], phi[a - 1], rng);
    next
}

impl Model for HeronsModel {
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
        self.recovery_loglik(theta)
    }

    fn initial_sample(&self, _theta: &ParamVector, rng: &mut dyn RngCore) -> LatentState {
        let a = self.variant.a_classes;
        let p = INITIAL_NB_PROB;
        let mu_adult = INITIAL_TOTAL_MEAN - (a as f64 - 1.0) * INITIAL_CLASS_MEAN;
        let mut counts = Vec::with_capacity(a);
        for age in 1..=a {
            let mu = if age < a { INITIAL_CLASS_MEAN } else { mu_adult };
            let size = mu * p / (1.0 - p);
            counts.push(neg_binomial_sample(size, p, rng));
        }
        match self.variant.productivity {
            HeronsProductivity::Regime { k } => {
                let regime = 1 + (rng.next_u64() % k as u64) as usize;
                LatentState::with_regime(counts, regime)
            }
            _ => LatentState::counts(counts),
        }
    }

    fn transition_sample(
        &self,
        theta: &ParamVector,
        t: usize,
        state: &LatentState,
        rng: &mut dyn RngCore,
    ) -> LatentState {
        let a = self.variant.a_classes;
        let s = t - 1;
        let phi: Vec<f64> = (1..=a).map(|age| self.phi(theta, age, s)).collect();
        let (rho, regime) = match self.variant.productivity {
            HeronsProductivity::Regime { .. } => {
                let matrix = self.regime_matrix(theta);
                let prev = state.regime.expect("regime state required");
                let next = 1 + categorical_sample(&matrix[prev - 1], rng);
                (self.rho(theta, s, Some(next)), Some(next))
            }
            _ => (self.rho(theta, s, None), None),
        };
        let counts = herons_step(&state.counts, rho, &phi, rng);
        LatentState { counts, regime }
    }

    fn obs_logpdf(&self, theta: &ParamVector, _t: usize, state: &LatentState, y: u64) -> f64 {
        let total_adults: u64 = state.counts[1..].iter().sum();
        let kappa = self.kappa(theta);
        let size = kappa / (1.0 - kappa) * total_adults as f64;
        neg_binomial_ln_pmf(size, kappa, y)
    }
}
