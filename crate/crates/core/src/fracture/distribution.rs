//! Pooled growth-path distribution: Weibull fits of cycle counts at each
//! crack-grid point, quantile curves, and quantile-level Paris
//! parameters for use as particle-filter move functions.

use super::fit::fit_paris;
use super::weibull::{weibull_mle, WeibullFit};
use super::{CrackGrowthCurve, FractureError, GeometrySpec, ParisParams};
use crate::scalar::Real;

/// Which quantile curve a caller selected or wants to address.
///
/// `Lower5` is the 5% cycle quantile: the fast-growth edge of the band
/// (fewest cycles to reach a given crack length). `Upper95` is the slow
/// edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthCurveChoice {
    Lower5,
    Mean,
    Upper95,
}

impl GrowthCurveChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Lower5 => "lower5",
            Self::Mean => "mean",
            Self::Upper95 => "upper95",
        }
    }

    pub const ALL: [GrowthCurveChoice; 3] = [Self::Mean, Self::Lower5, Self::Upper95];
}

/// Per-crack-length Weibull fits over cycles with the three quantile
/// curves and their refitted Paris parameters. The central curve is the
/// Weibull median.
#[derive(Debug, Clone)]
pub struct GrowthPathDistribution<T> {
    crack_grid: Vec<T>,
    weibull_fits: Vec<WeibullFit>,
    mean_params: ParisParams<T>,
    lower5_params: ParisParams<T>,
    upper95_params: ParisParams<T>,
    mean_curve: CrackGrowthCurve<T>,
    lower5_curve: CrackGrowthCurve<T>,
    upper95_curve: CrackGrowthCurve<T>,
}

impl<T: Real> GrowthPathDistribution<T> {
    pub fn crack_grid(&self) -> &[T] {
        &self.crack_grid
    }

    pub fn weibull_fits(&self) -> &[WeibullFit] {
        &self.weibull_fits
    }

    pub fn params(&self, choice: GrowthCurveChoice) -> &ParisParams<T> {
        match choice {
            GrowthCurveChoice::Lower5 => &self.lower5_params,
            GrowthCurveChoice::Mean => &self.mean_params,
            GrowthCurveChoice::Upper95 => &self.upper95_params,
        }
    }

    pub fn curve(&self, choice: GrowthCurveChoice) -> &CrackGrowthCurve<T> {
        match choice {
            GrowthCurveChoice::Lower5 => &self.lower5_curve,
            GrowthCurveChoice::Mean => &self.mean_curve,
            GrowthCurveChoice::Upper95 => &self.upper95_curve,
        }
    }

    /// Rebuild a distribution from its serialized parts; quantile curves
    /// are reconstructed from the Weibull fits.
    pub fn from_parts(
        crack_grid: Vec<T>,
        weibull_fits: Vec<WeibullFit>,
        mean_params: ParisParams<T>,
        lower5_params: ParisParams<T>,
        upper95_params: ParisParams<T>,
    ) -> Result<Self, FractureError> {
        validate_grid(&crack_grid)?;
        if weibull_fits.len() != crack_grid.len() {
            return Err(FractureError::BadGrid);
        }
        let mean_curve = quantile_curve(&crack_grid, &weibull_fits, 0.5)?;
        let lower5_curve = quantile_curve(&crack_grid, &weibull_fits, 0.05)?;
        let upper95_curve = quantile_curve(&crack_grid, &weibull_fits, 0.95)?;
        Ok(Self {
            crack_grid,
            weibull_fits,
            mean_params,
            lower5_params,
            upper95_params,
            mean_curve,
            lower5_curve,
            upper95_curve,
        })
    }
}

fn validate_grid<T: Real>(grid: &[T]) -> Result<(), FractureError> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FractureError::BadGrid);
    }
    Ok(())
}

// Quantile curve over the grid: (N_q(a_i), a_i). Grid points whose
// quantile cycles fail to increase (possible with jittery small-sample
// shape estimates) are dropped rather than repaired.
fn quantile_curve<T: Real>(
    grid: &[T],
    fits: &[WeibullFit],
    q: f64,
) -> Result<CrackGrowthCurve<T>, FractureError> {
    let mut points: Vec<(f64, T)> = Vec::with_capacity(grid.len());
    for (&a, fit) in grid.iter().zip(fits) {
        let n = fit.quantile(q);
        if points.last().map_or(true, |&(n_prev, _)| n > n_prev) {
            points.push((n, a));
        }
    }
    if points.len() < 3 {
        return Err(FractureError::DegenerateQuantileCurve { q });
    }
    CrackGrowthCurve::new(points)
}

/// Fit the growth-path distribution: Weibull MLE over the interpolated
/// cycle counts at each grid crack length, then Paris parameters refit
/// to the 5%/median/95% quantile curves.
pub fn fit_growth_distribution<T: Real>(
    curves: &[CrackGrowthCurve<T>],
    delta_sigma: T,
    geom: &GeometrySpec<T>,
    crack_grid: &[T],
) -> Result<GrowthPathDistribution<T>, FractureError> {
    if curves.len() < 3 {
        return Err(FractureError::FewerThanThreeCurves(curves.len()));
    }
    validate_grid(crack_grid)?;
    let mut fits = Vec::with_capacity(crack_grid.len());
    for (gi, &a) in crack_grid.iter().enumerate() {
        let mut cycles = Vec::with_capacity(curves.len());
        for (ci, curve) in curves.iter().enumerate() {
            let n = curve
                .cycles_at(a)
                .ok_or(FractureError::GridOutsideCurve {
                    grid_index: gi,
                    curve_index: ci,
                    a_mm: a.to_f64().unwrap_or(f64::NAN),
                })?;
            cycles.push(n.max(1e-9)); // Weibull support is strictly positive
        }
        fits.push(weibull_mle(&cycles)?);
    }
    let mean_curve = quantile_curve(crack_grid, &fits, 0.5)?;
    let lower5_curve = quantile_curve(crack_grid, &fits, 0.05)?;
    let upper95_curve = quantile_curve(crack_grid, &fits, 0.95)?;
    let mean_params = fit_paris(&mean_curve, delta_sigma, geom)?;
    let lower5_params = fit_paris(&lower5_curve, delta_sigma, geom)?;
    let upper95_params = fit_paris(&upper95_curve, delta_sigma, geom)?;
    Ok(GrowthPathDistribution {
        crack_grid: crack_grid.to_vec(),
        weibull_fits: fits,
        mean_params,
        lower5_params,
        upper95_params,
        mean_curve,
        lower5_curve,
        upper95_curve,
    })
}

/// Pick the quantile curve whose crack lengths best match the estimates:
/// smallest absolute mean signed residual, ties resolved to the central
/// curve. Estimates outside a curve's cycle range are skipped for that
/// curve; if every curve skips every estimate the selection fails.
pub fn select_growth_curve<T: Real>(
    dist: &GrowthPathDistribution<T>,
    estimates: &[(f64, T)],
) -> Result<(GrowthCurveChoice, ParisParams<T>), FractureError> {
    if estimates.is_empty() {
        return Err(FractureError::NoEstimates);
    }
    let tie = 1e-9;
    let mut best: Option<(GrowthCurveChoice, f64)> = None;
    for choice in GrowthCurveChoice::ALL {
        let curve = dist.curve(choice);
        let mut sum = 0.0;
        let mut count = 0usize;
        for &(cycle, a_est) in estimates {
            if let Some(a_curve) = curve.crack_at(cycle) {
                sum += (a_est - a_curve).to_f64().unwrap();
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        let score = (sum / count as f64).abs();
        let better = match best {
            None => true,
            Some((_, s)) => score < s - tie,
        };
        if better {
            best = Some((choice, score));
        }
    }
    let (choice, _) = best.ok_or(FractureError::EstimatesOutOfRange)?;
    Ok((choice, *dist.params(choice)))
}
