//! Synthetic-data simulator for both ecological model families.
//!
//! Latent trajectories, counts, capture-recapture/ring-recovery histories
//! (simulated individual by individual and aggregated into m-arrays) and
//! nest-record data are generated forward from a supplied parameter vector,
//! together with the ground-truth latents for diagnostics.
//!
//! The density-dependent and threshold productivity variants define the rate
//! through normalisation constants of the *complete* observed series, which
//! does not exist while simulating; generating from those variants is
//! therefore rejected. They remain fully supported for fitting.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::model::{CountSeries, Model};
use crate::models::data::{
    CovariateTable, FecundityRecord, HeronsData, MArray, OwlsData, OwlsMArrays,
};
use crate::models::dist::{neg_binomial_sample, poisson_sample};
use crate::models::herons::{HeronsModel, HeronsProductivity, HeronsVariant};
use crate::models::owls::{Age, Gender, OwlsModel, OwlsVariant};
use crate::params::ParamVector;
use crate::seed::{domain, stream_rng};

const MAX_POPULATION: u64 = 1_000_000_000;

#[derive(Debug, Clone)]
pub struct OwlsSimConfig {
    pub t_len: usize,
    /// Individuals released per (age, gender, year) m-array row.
    pub releases_per_year: u64,
    /// Expected chicks recorded per year in the nest-record data.
    pub fecundity_broods_mean: f64,
}

impl Default for OwlsSimConfig {
    fn default() -> Self {
        Self { t_len: 26, releases_per_year: 30, fecundity_broods_mean: 40.0 }
    }
}

#[derive(Debug, Clone)]
pub struct HeronsSimConfig {
    pub t_len: usize,
    /// First and last release occasions of the ring-recovery study.
    pub release_start: usize,
    pub release_end: usize,
    pub releases_per_year: u64,
}

impl Default for HeronsSimConfig {
    fn default() -> Self {
        Self { t_len: 71, release_start: 28, release_end: 70, releases_per_year: 100 }
    }
}

/// Ground truth retained alongside a simulated dataset.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SimTruth {
    pub param_names: Vec<String>,
    pub param_values: Vec<f64>,
    /// Latent counts per time step.
    pub latents: Vec<Vec<u64>>,
    /// Latent regimes per time step (regime-switching herons only).
    pub regimes: Option<Vec<usize>>,
}

pub fn simulate_owls(
    variant: OwlsVariant,
    theta: &ParamVector,
    cfg: &OwlsSimConfig,
    seed: u64,
) -> Result<(OwlsData, SimTruth)> {
    let t_len = cfg.t_len;
    if t_len < 2 {
        return Err(Error::InvalidArgument("simulate: t_len must be >= 2".into()));
    }
    // Covariates first: the link functions close over them.
    let mut cov_rng = stream_rng(seed, &[domain::SIMULATE, 1]);
    let years: Vec<i64> = (1..=t_len as i64).collect();
    let voles: Vec<u8> = years.iter().map(|_| cov_rng.random_range(0..=1)).collect();
    let frost: Vec<f64> = vec![0.0; years.len()];
    let covariates = CovariateTable::new(years, voles, frost)?;

    // A placeholder model carries the link machinery; the real dataset
    // replaces the placeholder pieces below.
    let model = OwlsModel::new(
        variant,
        OwlsData {
            counts: CountSeries::new(vec![0; t_len])?,
            covariates: covariates.clone(),
            marrays: empty_owls_marrays(t_len),
            fecundity: Vec::new(),
        },
    )?;
    if theta.names() != model.param_template().names() {
        return Err(Error::Param(format!(
            "simulate: parameter layout does not match variant {:?}",
            variant
        )));
    }

    // Latent states and counts.
    let mut latents = Vec::with_capacity(t_len);
    let mut counts = Vec::with_capacity(t_len);
    {
        let mut rng = stream_rng(seed, &[domain::SIMULATE, 2]);
        let mut state = model.initial_sample(theta, &mut rng);
        for t in 1..=t_len {
            if t > 1 {
                state = model.transition_sample(theta, t, &state, &mut rng);
            }
            let total = state.counts[0] + state.counts[1];
            if total > MAX_POPULATION {
                return Err(Error::InvalidArgument(format!(
                    "simulate: owl population exploded to {total} at t = {t}; choose tamer parameters"
                )));
            }
            counts.push(poisson_sample(total as f64, &mut rng));
            latents.push(state.counts.clone());
        }
    }

    // Capture-recapture m-arrays, one individual at a time.
    let groups = [
        (Age::Juvenile, Gender::Female, 3u64),
        (Age::Juvenile, Gender::Male, 4),
        (Age::Adult, Gender::Female, 5),
        (Age::Adult, Gender::Male, 6),
    ];
    let mut arrays = Vec::with_capacity(4);
    for (age, gender, tag) in groups {
        let mut rng = stream_rng(seed, &[domain::SIMULATE, tag]);
        let mut rows = Vec::with_capacity(t_len - 1);
        for release_t in 1..t_len {
            rows.push(simulate_recapture_row(
                release_t,
                t_len,
                cfg.releases_per_year,
                model.phi(theta, release_t, age, gender),
                |r| model.phi(theta, r, Age::Adult, gender),
                |s| model.recapture_p(theta, s, gender),
                &mut rng,
            ));
        }
        arrays.push(MArray {
            release_times: (1..t_len).collect(),
            recapture_times: (2..=t_len).collect(),
            released: vec![cfg.releases_per_year; t_len - 1],
            cells: rows,
        });
    }
    let adult_male = arrays.pop().unwrap();
    let adult_female = arrays.pop().unwrap();
    let juv_male = arrays.pop().unwrap();
    let juv_female = arrays.pop().unwrap();

    // Nest-record data: chicks per year, survivors Poisson at rate N_t rho_t.
    let mut fec_rng = stream_rng(seed, &[domain::SIMULATE, 7]);
    let fecundity: Vec<FecundityRecord> = (1..=t_len)
        .map(|year| {
            let chicks = poisson_sample(cfg.fecundity_broods_mean, &mut fec_rng);
            let surviving =
                poisson_sample(chicks as f64 * model.rho(theta, year), &mut fec_rng);
            FecundityRecord { year, chicks, surviving }
        })
        .collect();

    let data = OwlsData {
        counts: CountSeries::new(counts)?,
        covariates,
        marrays: OwlsMArrays { juv_female, juv_male, adult_female, adult_male },
        fecundity,
    };
    let truth = SimTruth {
        param_names: theta.names().to_vec(),
        param_values: theta.values().to_vec(),
        latents,
        regimes: None,
    };
    Ok((data, truth))
}

pub fn simulate_herons(
    variant: HeronsVariant,
    theta: &ParamVector,
    cfg: &HeronsSimConfig,
    seed: u64,
) -> Result<(HeronsData, SimTruth)> {
    match variant.productivity {
        HeronsProductivity::Density | HeronsProductivity::Threshold { .. } => {
            return Err(Error::InvalidArgument(
                "simulate: observation-driven productivity (density/threshold) cannot be \
                 forward-simulated; its normalisation constants depend on the complete series"
                    .into(),
            ));
        }
        _ => {}
    }
    let t_len = cfg.t_len;
    if t_len < 2 {
        return Err(Error::InvalidArgument("simulate: t_len must be >= 2".into()));
    }
    if !(1 <= cfg.release_start && cfg.release_start <= cfg.release_end && cfg.release_end < t_len)
    {
        return Err(Error::InvalidArgument(format!(
            "simulate: release window {}..{} incompatible with T = {t_len}",
            cfg.release_start, cfg.release_end
        )));
    }

    let mut cov_rng = stream_rng(seed, &[domain::SIMULATE, 1]);
    let years: Vec<i64> = (0..=t_len as i64).collect();
    let voles = vec![0u8; years.len()];
    let frost: Vec<f64> = years.iter().map(|_| poisson_sample(10.0, &mut cov_rng) as f64).collect();
    let covariates = CovariateTable::new(years, voles, frost)?;

    let model = HeronsModel::new(
        variant,
        HeronsData {
            counts: CountSeries::new(vec![0; t_len])?,
            covariates: covariates.clone(),
            marray: empty_herons_marray(cfg.release_start, cfg.release_end),
        },
    )?;
    if theta.names() != model.param_template().names() {
        return Err(Error::Param(format!(
            "simulate: parameter layout does not match variant {:?}",
            variant
        )));
    }

    let kappa = model.kappa(theta);
    let mut latents = Vec::with_capacity(t_len);
    let mut regimes = Vec::with_capacity(t_len);
    let mut counts = Vec::with_capacity(t_len);
    {
        let mut rng = stream_rng(seed, &[domain::SIMULATE, 2]);
        let mut state = model.initial_sample(theta, &mut rng);
        for t in 1..=t_len {
            if t > 1 {
                state = model.transition_sample(theta, t, &state, &mut rng);
            }
            let total: u64 = state.counts.iter().sum();
            if total > MAX_POPULATION {
                return Err(Error::InvalidArgument(format!(
                    "simulate: heron population exploded to {total} at t = {t}; choose tamer parameters"
                )));
            }
            let adults: u64 = state.counts[1..].iter().sum();
            let size = kappa / (1.0 - kappa) * adults as f64;
            counts.push(neg_binomial_sample(size, kappa, &mut rng));
            latents.push(state.counts.clone());
            if let Some(r) = state.regime {
                regimes.push(r);
            }
        }
    }

    let mut rec_rng = stream_rng(seed, &[domain::SIMULATE, 3]);
    let mut rows = Vec::new();
    for release_t in cfg.release_start..=cfg.release_end {
        rows.push(simulate_recovery_row(
            release_t,
            cfg.release_start + 1,
            cfg.release_end + 1,
            variant.a_classes,
            cfg.releases_per_year,
            |age, time| model.phi(theta, age, time),
            |time| model.lambda(theta, time),
            &mut rec_rng,
        ));
    }
    let marray = MArray {
        release_times: (cfg.release_start..=cfg.release_end).collect(),
        recapture_times: (cfg.release_start + 1..=cfg.release_end + 1).collect(),
        released: vec![cfg.releases_per_year; cfg.release_end - cfg.release_start + 1],
        cells: rows,
    };

    let data = HeronsData { counts: CountSeries::new(counts)?, covariates, marray };
    let truth = SimTruth {
        param_names: theta.names().to_vec(),
        param_values: theta.values().to_vec(),
        latents,
        regimes: (!regimes.is_empty()).then_some(regimes),
    };
    Ok((data, truth))
}

/// Simulates one m-array row of first recaptures: each individual survives
/// its release interval at the release-age rate, is recaptured at each later
/// occasion with probability `p`, and survives subsequent intervals at the
/// adult rate. The returned row spans the global columns `2..=t_len` plus
/// the never-seen cell, with structural zeros before the release year.
pub fn simulate_recapture_row(
    release_t: usize,
    t_len: usize,
    released: u64,
    phi_release: f64,
    phi_adult: impl Fn(usize) -> f64,
    p: impl Fn(usize) -> f64,
    rng: &mut dyn RngCore,
) -> Vec<u64> {
    let width = t_len; // occasions 2..=t_len plus never
    let mut cells = vec![0u64; width];
    let never = width - 1;
    for _ in 0..released {
        let mut alive = rng.random::<f64>() < phi_release;
        let mut recaptured = None;
        let mut s = release_t + 1;
        while alive && s <= t_len {
            if rng.random::<f64>() < p(s) {
                recaptured = Some(s);
                break;
            }
            alive = rng.random::<f64>() < phi_adult(s);
            s += 1;
        }
        match recaptured {
            Some(s) => cells[s - 2] += 1,
            None => cells[never] += 1,
        }
    }
    cells
}

/// Simulates one ring-recovery row: each individual ages through the classes,
/// dies in some interval with the age-specific rate, and a death in interval
/// `(s-1, s]` is recovered with probability `lambda(s-1)`. The returned row
/// spans the global columns `first_occasion..=last_occasion` plus never-seen.
#[allow(clippy::too_many_arguments)]
pub fn simulate_recovery_row(
    release_t: usize,
    first_occasion: usize,
    last_occasion: usize,
    a_classes: usize,
    released: u64,
    phi: impl Fn(usize, usize) -> f64,
    lambda: impl Fn(usize) -> f64,
    rng: &mut dyn RngCore,
) -> Vec<u64> {
    let width = last_occasion - first_occasion + 2;
    let mut cells = vec![0u64; width];
    let never = width - 1;
    for _ in 0..released {
        let mut cell = never;
        for s in release_t + 1..=last_occasion {
            let age = (s - release_t).min(a_classes);
            if rng.random::<f64>() >= phi(age, s - 1) {
                // died in (s-1, s]
                if rng.random::<f64>() < lambda(s - 1) {
                    cell = s - first_occasion;
                }
                break;
            }
        }
        cells[cell] += 1;
    }
    cells
}

fn empty_owls_marrays(t_len: usize) -> OwlsMArrays {
    let make = || MArray {
        release_times: (1..t_len).collect(),
        recapture_times: (2..=t_len).collect(),
        released: vec![0; t_len - 1],
        cells: vec![vec![0; t_len]; t_len - 1],
    };
    OwlsMArrays {
        juv_female: make(),
        juv_male: make(),
        adult_female: make(),
        adult_male: make(),
    }
}

fn empty_herons_marray(t1: usize, t2: usize) -> MArray {
    let n_rows = t2 - t1 + 1;
    MArray {
        release_times: (t1..=t2).collect(),
        recapture_times: (t1 + 1..=t2 + 1).collect(),
        released: vec![0; n_rows],
        cells: vec![vec![0; n_rows + 1]; n_rows],
    }
}
