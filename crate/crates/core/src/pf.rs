//! Sequential Monte Carlo fusion of the Paris-law move function with
//! neural crack-length observations.
//!
//! Particles carry crack lengths. Propagation integrates each particle
//! along the selected growth curve's parameters and adds cycle-scaled
//! process noise; updates reweight by a Gaussian likelihood centered on
//! the observed estimate and resample systematically when the effective
//! sample size degenerates. Noise is drawn from per-particle counter
//! substreams, so results do not depend on evaluation order.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::fracture::{
    advance_crack, fit_paris, select_growth_curve, CrackGrowthCurve, FractureError, GeometrySpec,
    GrowthCurveChoice, GrowthPathDistribution, ParisParams, A_MIN_MM,
};
use crate::loading::LoadingSpec;
use crate::scalar::{cvt, Real};

#[derive(Debug, Error, PartialEq)]
pub enum PfError {
    #[error("invalid filter config: {0}")]
    InvalidConfig(&'static str),
    #[error("cycle {0} outside the growth-path distribution's range")]
    CycleOutOfRange(f64),
    #[error("propagation must move forward (from {from} to {to})")]
    NotForward { from: f64, to: f64 },
    #[error("observation at cycle {observation} does not match ensemble cycle {ensemble}")]
    CycleMismatch { ensemble: f64, observation: f64 },
    #[error("observation update requires obs_noise_std > 0")]
    NonPositiveObsNoise,
    #[error("observation incompatible with ensemble: all likelihoods underflow")]
    ObservationIncompatible,
    #[error("crack estimates must be non-negative")]
    NegativeEstimate,
    #[error("observations must be sorted by strictly increasing cycle")]
    UnsortedObservations,
    #[error("prediction cycles must be sorted and lie after the last observation")]
    BadPredictionCycles,
    #[error("nothing to do: no observations and no prediction cycles")]
    NoCycles,
    #[error("move-function refit requires constant-amplitude loading")]
    RefitNeedsConstantAmplitude,
    #[error("noise tuning grid is empty")]
    EmptyGrid,
    #[error("noise tuning needs curves with at least one held-out point beyond the observations")]
    NothingHeldOut,
    #[error(transparent)]
    Fracture(#[from] FractureError),
}

/// Filter configuration; noise levels are in mm (process noise per
/// 1000-cycle step).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfConfig<T> {
    pub n_particles: usize,
    pub process_noise_std: T,
    pub obs_noise_std: T,
    /// Resample when ESS drops below this fraction of the particle count.
    pub resample_threshold: T,
    pub seed: u64,
}

impl<T: Real> Default for PfConfig<T> {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            process_noise_std: cvt(0.02),
            obs_noise_std: cvt(0.2),
            resample_threshold: cvt(0.5),
            seed: 0,
        }
    }
}

impl<T: Real> PfConfig<T> {
    pub fn validate(&self) -> Result<(), PfError> {
        if self.n_particles < 10 {
            return Err(PfError::InvalidConfig("n_particles must be >= 10"));
        }
        if self.process_noise_std < T::zero() || self.obs_noise_std < T::zero() {
            return Err(PfError::InvalidConfig("noise stds must be >= 0"));
        }
        if !(self.resample_threshold > T::zero() && self.resample_threshold <= T::one()) {
            return Err(PfError::InvalidConfig(
                "resample threshold must lie in (0, 1]",
            ));
        }
        Ok(())
    }
}

/// Weighted crack-length samples at a common cycle count.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble<T> {
    cycle: f64,
    states: Vec<T>,
    weights: Vec<T>,
    clamped: Vec<bool>,
    // Monotone counter feeding the noise substreams.
    step: u64,
}

impl<T: Real> ParticleEnsemble<T> {
    /// Ensemble with uniform weights; used by tests and direct drivers.
    pub fn from_states(cycle: f64, states: Vec<T>) -> Self {
        let n = states.len();
        let w = T::one() / cvt(n as f64);
        Self {
            cycle,
            clamped: vec![false; n],
            weights: vec![w; n],
            states,
            step: 0,
        }
    }

    pub fn cycle(&self) -> f64 {
        self.cycle
    }

    pub fn states(&self) -> &[T] {
        &self.states
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Particles pinned at the geometry truncation limit.
    pub fn clamped_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }
}

// Decorrelated per-(step, unit) generator from the master seed.
fn substream(seed: u64, step: u64, unit: u64) -> ChaCha8Rng {
    let mut x = seed
        ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ unit.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    ChaCha8Rng::seed_from_u64(x)
}

fn normal_draw<T: Real>(rng: &mut ChaCha8Rng) -> T {
    cvt(rng.sample::<f64, _>(StandardNormal))
}

/// A neural crack-length estimate acting as the filter observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T> {
    pub cycle: f64,
    pub crack_estimate_mm: T,
}

impl<T: Real> Observation<T> {
    pub fn new(cycle: f64, crack_estimate_mm: T) -> Result<Self, PfError> {
        if crack_estimate_mm < T::zero() {
            return Err(PfError::NegativeEstimate);
        }
        Ok(Self {
            cycle,
            crack_estimate_mm,
        })
    }
}

/// Gaussian initialization from the growth-path band at `at_cycle`: mean
/// on the central curve, standard deviation from the 5%-95% spread, and
/// samples truncated at the working minimum crack length.
pub fn init_particles<T: Real>(
    dist: &GrowthPathDistribution<T>,
    at_cycle: f64,
    config: &PfConfig<T>,
) -> Result<ParticleEnsemble<T>, PfError> {
    config.validate()?;
    let mean = dist
        .curve(GrowthCurveChoice::Mean)
        .crack_at(at_cycle)
        .ok_or(PfError::CycleOutOfRange(at_cycle))?;
    let fast = dist
        .curve(GrowthCurveChoice::Lower5)
        .crack_at(at_cycle)
        .ok_or(PfError::CycleOutOfRange(at_cycle))?;
    let slow = dist
        .curve(GrowthCurveChoice::Upper95)
        .crack_at(at_cycle)
        .ok_or(PfError::CycleOutOfRange(at_cycle))?;
    let std = (fast - slow).abs() / cvt(2.0 * 1.645);
    let a_min = cvt::<T>(A_MIN_MM);
    let states: Vec<T> = (0..config.n_particles)
        .map(|i| {
            let mut rng = substream(config.seed, 0, i as u64);
            (mean + std * normal_draw(&mut rng)).max(a_min)
        })
        .collect();
    let mut ens = ParticleEnsemble::from_states(at_cycle, states);
    ens.step = 1;
    Ok(ens)
}

/// Advance every particle along the Paris move function to `to_cycle`
/// and add truncated process noise scaled by sqrt(elapsed/1000). Weights
/// are unchanged; particles hitting the geometry limit are clamped there
/// and flagged.
pub fn propagate<T: Real>(
    ens: &ParticleEnsemble<T>,
    params: &ParisParams<T>,
    loading: &LoadingSpec<T>,
    geom: &GeometrySpec<T>,
    to_cycle: f64,
    config: &PfConfig<T>,
) -> Result<ParticleEnsemble<T>, PfError> {
    if to_cycle <= ens.cycle {
        return Err(PfError::NotForward {
            from: ens.cycle,
            to: to_cycle,
        });
    }
    let elapsed = to_cycle - ens.cycle;
    let rk_step = (elapsed / 64.0).max(1.0);
    let noise_scale = config.process_noise_std * cvt((elapsed / 1000.0).sqrt());
    let a_min = cvt::<T>(A_MIN_MM);
    let limit = geom.truncation_limit();

    let mut states = Vec::with_capacity(ens.len());
    let mut clamped = Vec::with_capacity(ens.len());
    for (i, &state) in ens.states.iter().enumerate() {
        let (moved, hit) = advance_crack(
            state.max(a_min),
            ens.cycle,
            to_cycle,
            params,
            loading,
            geom,
            rk_step,
        )?;
        let mut rng = substream(config.seed, ens.step, i as u64);
        let noisy = moved + noise_scale * normal_draw(&mut rng);
        // Cracks do not shrink: floor at the pre-propagation state.
        let mut next = noisy.max(state);
        let mut is_clamped = hit || ens.clamped[i];
        if next >= limit {
            next = limit;
            is_clamped = true;
        }
        states.push(next);
        clamped.push(is_clamped);
    }
    Ok(ParticleEnsemble {
        cycle: to_cycle,
        states,
        weights: ens.weights.clone(),
        clamped,
        step: ens.step + 1,
    })
}

/// Effective sample size 1 / sum(w^2).
pub fn effective_sample_size<T: Real>(ens: &ParticleEnsemble<T>) -> T {
    let ss: T = ens.weights.iter().map(|&w| w * w).sum();
    T::one() / ss
}

/// Reweight by the Gaussian likelihood of the observation (identity
/// measurement model), renormalize, then systematically resample if the
/// effective sample size fell below the configured fraction.
pub fn update<T: Real>(
    ens: &ParticleEnsemble<T>,
    obs: &Observation<T>,
    config: &PfConfig<T>,
) -> Result<ParticleEnsemble<T>, PfError> {
    if obs.cycle != ens.cycle {
        return Err(PfError::CycleMismatch {
            ensemble: ens.cycle,
            observation: obs.cycle,
        });
    }
    let sigma = config.obs_noise_std;
    if sigma <= T::zero() {
        return Err(PfError::NonPositiveObsNoise);
    }
    let half = cvt::<T>(0.5);
    let log_lik: Vec<T> = ens
        .states
        .iter()
        .map(|&x| {
            let r = (obs.crack_estimate_mm - x) / sigma;
            -half * r * r
        })
        .collect();
    // If even the best particle's likelihood underflows, the observation
    // is irreconcilable at this noise level.
    let best = log_lik.iter().cloned().fold(T::neg_infinity(), T::max);
    if best < cvt(f64::MIN_POSITIVE.ln()) {
        return Err(PfError::ObservationIncompatible);
    }
    let mut log_w: Vec<T> = ens
        .weights
        .iter()
        .zip(&log_lik)
        .map(|(&w, &l)| w.ln() + l)
        .collect();
    let shift = log_w.iter().cloned().fold(T::neg_infinity(), T::max);
    if shift == T::neg_infinity() {
        return Err(PfError::ObservationIncompatible);
    }
    for lw in log_w.iter_mut() {
        *lw = (*lw - shift).exp();
    }
    let total: T = log_w.iter().copied().sum();
    let weights: Vec<T> = log_w.into_iter().map(|w| w / total).collect();

    let mut out = ParticleEnsemble {
        cycle: ens.cycle,
        states: ens.states.clone(),
        weights,
        clamped: ens.clamped.clone(),
        step: ens.step + 1,
    };
    let n = cvt::<T>(out.len() as f64);
    if effective_sample_size(&out) < config.resample_threshold * n {
        systematic_resample(&mut out, config);
    }
    Ok(out)
}

// Low-variance systematic resampling; resets weights to 1/n.
fn systematic_resample<T: Real>(ens: &mut ParticleEnsemble<T>, config: &PfConfig<T>) {
    let n = ens.len();
    let mut rng = substream(config.seed, ens.step, u64::MAX);
    let start: f64 = rng.gen::<f64>() / n as f64;
    let mut cumulative = T::zero();
    let mut idx = 0usize;
    let mut new_states = Vec::with_capacity(n);
    let mut new_clamped = Vec::with_capacity(n);
    for j in 0..n {
        let u = cvt::<T>(start + j as f64 / n as f64);
        while cumulative + ens.weights[idx] < u && idx + 1 < n {
            cumulative += ens.weights[idx];
            idx += 1;
        }
        new_states.push(ens.states[idx]);
        new_clamped.push(ens.clamped[idx]);
    }
    ens.states = new_states;
    ens.clamped = new_clamped;
    ens.weights = vec![T::one() / cvt(n as f64); n];
    ens.step += 1;
}

/// Weighted posterior summary: mean and the empirical 5%/95% quantiles.
pub fn estimate<T: Real>(ens: &ParticleEnsemble<T>) -> (T, T, T) {
    let mean = ens
        .states
        .iter()
        .zip(&ens.weights)
        .map(|(&x, &w)| x * w)
        .sum::<T>();
    let mut order: Vec<usize> = (0..ens.len()).collect();
    order.sort_by(|&i, &j| ens.states[i].partial_cmp(&ens.states[j]).unwrap());
    let quantile = |q: f64| -> T {
        let target = cvt::<T>(q);
        let mut acc = T::zero();
        for &i in &order {
            acc += ens.weights[i];
            if acc >= target {
                return ens.states[i];
            }
        }
        ens.states[*order.last().unwrap()]
    };
    (mean, quantile(0.05), quantile(0.95))
}

/// Full filter output: filtered states at observation cycles and
/// open-loop prognoses at prediction cycles.
#[derive(Debug, Clone)]
pub struct FilterRun<T> {
    /// Quantile curve backing the move function; `None` without
    /// observations (central curve is used).
    pub selected: Option<GrowthCurveChoice>,
    /// Move-function parameters actually used for prognosis (after the
    /// optional refit).
    pub move_params: ParisParams<T>,
    /// (cycle, mean, lower_90, upper_90) after each observation update.
    pub filtered: Vec<(f64, T, T, T)>,
    /// (cycle, mean, lower_90, upper_90) at each prediction cycle.
    pub predicted: Vec<(f64, T, T, T)>,
}

/// Run the filter: pick the quantile curve matching the observations,
/// initialize at the first observation cycle, alternate propagate and
/// update through the observations, optionally refit the move function
/// on the filtered means, then forecast open loop through the
/// prediction cycles. Without observations this degenerates to a pure
/// physics forecast along the central curve.
pub fn run_filter<T: Real>(
    dist: &GrowthPathDistribution<T>,
    observations: &[Observation<T>],
    prediction_cycles: &[f64],
    loading: &LoadingSpec<T>,
    geom: &GeometrySpec<T>,
    config: &PfConfig<T>,
    refit: bool,
) -> Result<FilterRun<T>, PfError> {
    config.validate()?;
    if observations.windows(2).any(|w| w[1].cycle <= w[0].cycle) {
        return Err(PfError::UnsortedObservations);
    }
    if prediction_cycles.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PfError::BadPredictionCycles);
    }
    if let (Some(last_obs), Some(&first_pred)) = (observations.last(), prediction_cycles.first()) {
        if first_pred <= last_obs.cycle {
            return Err(PfError::BadPredictionCycles);
        }
    }

    let (selected, mut params, mut ens, filtered) = if observations.is_empty() {
        let &first = prediction_cycles.first().ok_or(PfError::NoCycles)?;
        let ens = init_particles(dist, first, config)?;
        (
            None,
            *dist.params(GrowthCurveChoice::Mean),
            ens,
            Vec::new(),
        )
    } else {
        let ests: Vec<(f64, T)> = observations
            .iter()
            .map(|o| (o.cycle, o.crack_estimate_mm))
            .collect();
        let (choice, params) = select_growth_curve(dist, &ests)?;
        let mut ens = init_particles(dist, observations[0].cycle, config)?;
        let mut filtered = Vec::with_capacity(observations.len());
        for (i, obs) in observations.iter().enumerate() {
            if i > 0 {
                ens = propagate(&ens, &params, loading, geom, obs.cycle, config)?;
            }
            ens = update(&ens, obs, config)?;
            let (mean, lo, hi) = estimate(&ens);
            filtered.push((obs.cycle, mean, lo, hi));
        }
        (Some(choice), params, ens, filtered)
    };

    if refit && !filtered.is_empty() {
        if !loading.is_constant_amplitude() {
            return Err(PfError::RefitNeedsConstantAmplitude);
        }
        // Filtered means become pseudo-measurements; enforce the
        // monotone-growth invariant before fitting.
        let mut pts: Vec<(f64, T)> = filtered.iter().map(|&(n, m, _, _)| (n, m)).collect();
        for i in 1..pts.len() {
            pts[i].1 = pts[i].1.max(pts[i - 1].1);
        }
        let pseudo = CrackGrowthCurve::new(pts)?;
        params = fit_paris(&pseudo, loading.delta_sigma_at(0.0), geom)?;
    }

    let mut predicted = Vec::with_capacity(prediction_cycles.len());
    for (i, &cycle) in prediction_cycles.iter().enumerate() {
        if observations.is_empty() && i == 0 {
            // The ensemble was initialized at this cycle.
        } else if cycle > ens.cycle() {
            ens = propagate(&ens, &params, loading, geom, cycle, config)?;
        }
        let (mean, lo, hi) = estimate(&ens);
        predicted.push((cycle, mean, lo, hi));
    }

    Ok(FilterRun {
        selected,
        move_params: params,
        filtered,
        predicted,
    })
}

/// Grid-search the process and observation noise levels: run the
/// refit protocol on each training curve using only its first
/// `k_observations` points, score RMSE on the held-out tail, and return
/// the best pair (ties prefer smaller process, then observation noise).
#[allow(clippy::too_many_arguments)]
pub fn tune_noise<T: Real>(
    dist: &GrowthPathDistribution<T>,
    training_curves: &[CrackGrowthCurve<T>],
    grid: &[(T, T)],
    loading: &LoadingSpec<T>,
    geom: &GeometrySpec<T>,
    config: &PfConfig<T>,
    k_observations: usize,
) -> Result<(T, T), PfError> {
    if grid.is_empty() {
        return Err(PfError::EmptyGrid);
    }
    let mut best: Option<((T, T), f64)> = None;
    for &(sigma_process, sigma_obs) in grid {
        let cfg = PfConfig {
            process_noise_std: sigma_process,
            obs_noise_std: sigma_obs,
            ..*config
        };
        let mut sse = 0.0;
        let mut count = 0usize;
        for curve in training_curves {
            let pts = curve.points();
            if pts.len() <= k_observations {
                continue;
            }
            let obs: Vec<Observation<T>> = pts[..k_observations]
                .iter()
                .map(|&(n, a)| Observation::new(n, a.max(T::zero())))
                .collect::<Result<_, _>>()?;
            let heldout = &pts[k_observations..];
            let cycles: Vec<f64> = heldout.iter().map(|&(n, _)| n).collect();
            let run = run_filter(dist, &obs, &cycles, loading, geom, &cfg, true)?;
            for ((_, mean, _, _), &(_, truth)) in run.predicted.iter().zip(heldout) {
                let d = (*mean - truth).to_f64().unwrap();
                sse += d * d;
                count += 1;
            }
        }
        if count == 0 {
            return Err(PfError::NothingHeldOut);
        }
        let rmse = (sse / count as f64).sqrt();
        let better = match &best {
            None => true,
            Some((pair, best_rmse)) => {
                rmse < *best_rmse
                    || (rmse == *best_rmse
                        && (sigma_process, sigma_obs) < (pair.0, pair.1))
            }
        };
        if better {
            best = Some(((sigma_process, sigma_obs), rmse));
        }
    }
    Ok(best.unwrap().0)
}
