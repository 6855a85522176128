//! Paris-law crack-growth physics: geometry factor, growth integration,
//! parameter fitting, and the Weibull growth-path distribution.
//!
//! Crack length `a` is in mm and is plugged directly into the
//! center-cracked-plate geometry factor sqrt(sec(pi*a/(2*b))); the
//! equivalent half-width `b` is fitted from data and absorbs any scale
//! mismatch with the real (unknown) specimen geometry. Stress ranges are
//! in MPa, so the stress intensity range carries MPa*sqrt(mm).

mod distribution;
mod fit;
pub mod optim;
pub mod weibull;

pub use distribution::{fit_growth_distribution, select_growth_curve, GrowthCurveChoice, GrowthPathDistribution};
pub use fit::{fit_paris, fit_width, WidthFit};

use thiserror::Error;

use crate::loading::LoadingSpec;
use crate::scalar::{cvt, Real};

/// Smallest crack length fed to the stress-intensity formula; estimates
/// below this are clamped by callers.
pub const A_MIN_MM: f64 = 0.1;

/// Fraction of the half-width at which growth integration truncates.
pub const TRUNCATION_FRACTION: f64 = 0.99;

#[derive(Debug, Error, PartialEq)]
pub enum FractureError {
    #[error("half-width b must be positive")]
    NonPositiveGeometry,
    #[error("crack exceeds geometry validity: a = {a_mm} mm, b = {b_mm} mm")]
    CrackExceedsGeometry { a_mm: f64, b_mm: f64 },
    #[error("crack length {a_mm} mm below working minimum {A_MIN_MM} mm")]
    CrackBelowMinimum { a_mm: f64 },
    #[error("Paris parameters must satisfy C > 0, m > 0")]
    InvalidParams,
    #[error("integration step must be >= 1 cycle")]
    InvalidStep,
    #[error("crack range must satisfy 0 < a1 <= a2 < b")]
    InvalidCrackRange,
    #[error("growth curve point {index}: cycles must strictly increase and crack length must not decrease")]
    NonMonotoneCurve { index: usize },
    #[error("growth curve needs at least {needed} points (got {got})")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("fit did not converge within {evals} objective evaluations")]
    FitDidNotConverge { evals: usize },
    #[error("growth-path distribution needs at least 3 curves (got {0})")]
    FewerThanThreeCurves(usize),
    #[error("crack grid must be non-empty and strictly increasing")]
    BadGrid,
    #[error("grid point {grid_index} ({a_mm} mm) lies outside curve {curve_index}")]
    GridOutsideCurve {
        grid_index: usize,
        curve_index: usize,
        a_mm: f64,
    },
    #[error(transparent)]
    Weibull(#[from] weibull::WeibullError),
    #[error("growth-curve selection needs at least one estimate")]
    NoEstimates,
    #[error("all estimate cycles lie outside the quantile curves' ranges")]
    EstimatesOutOfRange,
    #[error("quantile curve for q={q} degenerated to fewer than 3 usable points")]
    DegenerateQuantileCurve { q: f64 },
}

/// Equivalent center-cracked-plate geometry; `b` is the half-width of
/// Paris-law validity, possibly infinite for the wide-plate limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometrySpec<T> {
    half_width_b_mm: T,
}

impl<T: Real> GeometrySpec<T> {
    pub fn new(half_width_b_mm: T) -> Result<Self, FractureError> {
        if !(half_width_b_mm > T::zero()) {
            return Err(FractureError::NonPositiveGeometry);
        }
        Ok(Self { half_width_b_mm })
    }

    /// Wide-plate limit: geometry factor is identically 1.
    pub fn infinite() -> Self {
        Self {
            half_width_b_mm: T::infinity(),
        }
    }

    pub fn half_width_b_mm(&self) -> T {
        self.half_width_b_mm
    }

    pub fn is_infinite(&self) -> bool {
        self.half_width_b_mm.is_infinite()
    }

    /// Largest crack length the integrator will carry before truncating.
    pub fn truncation_limit(&self) -> T {
        self.half_width_b_mm * cvt(TRUNCATION_FRACTION)
    }
}

/// Paris-law material constants: da/dN = C * (dK)^m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParisParams<T> {
    pub c: T,
    pub m: T,
}

impl<T: Real> ParisParams<T> {
    pub fn new(c: T, m: T) -> Result<Self, FractureError> {
        if !(c > T::zero()) || !(m > T::zero()) {
            return Err(FractureError::InvalidParams);
        }
        Ok(Self { c, m })
    }
}

/// Crack length versus cycles; cycles strictly increase and crack length
/// never decreases. `truncated` marks runs stopped at the geometry limit.
#[derive(Debug, Clone, PartialEq)]
pub struct CrackGrowthCurve<T> {
    points: Vec<(f64, T)>,
    truncated: bool,
}

impl<T: Real> CrackGrowthCurve<T> {
    pub fn new(points: Vec<(f64, T)>) -> Result<Self, FractureError> {
        Self::with_truncation(points, false)
    }

    pub fn with_truncation(points: Vec<(f64, T)>, truncated: bool) -> Result<Self, FractureError> {
        if points.is_empty() {
            return Err(FractureError::InsufficientPoints { needed: 1, got: 0 });
        }
        for i in 1..points.len() {
            if points[i].0 <= points[i - 1].0 || points[i].1 < points[i - 1].1 {
                return Err(FractureError::NonMonotoneCurve { index: i });
            }
        }
        Ok(Self { points, truncated })
    }

    pub fn points(&self) -> &[(f64, T)] {
        &self.points
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn first(&self) -> (f64, T) {
        self.points[0]
    }

    pub fn last(&self) -> (f64, T) {
        *self.points.last().unwrap()
    }

    pub fn min_cycle(&self) -> f64 {
        self.points[0].0
    }

    pub fn max_cycle(&self) -> f64 {
        self.points.last().unwrap().0
    }

    /// Crack length at cycle `n` by linear interpolation; `None` outside
    /// the covered range (no extrapolation).
    pub fn crack_at(&self, n: f64) -> Option<T> {
        if n < self.min_cycle() || n > self.max_cycle() {
            return None;
        }
        if self.points.len() == 1 {
            return Some(self.points[0].1);
        }
        let idx = self
            .points
            .partition_point(|&(cycle, _)| cycle < n)
            .min(self.points.len() - 1)
            .max(1);
        let (n0, a0) = self.points[idx - 1];
        let (n1, a1) = self.points[idx];
        let t = cvt::<T>((n - n0) / (n1 - n0));
        Some(a0 + (a1 - a0) * t)
    }

    /// Cycles at crack length `a` by linear interpolation of N against a;
    /// `None` outside the covered range.
    pub fn cycles_at(&self, a: T) -> Option<f64> {
        let first = self.points.first()?;
        let last = self.points.last()?;
        if a < first.1 || a > last.1 {
            return None;
        }
        if a == first.1 {
            return Some(first.0);
        }
        let idx = self.points.partition_point(|&(_, ai)| ai < a);
        let idx = idx.min(self.points.len() - 1).max(1);
        let (n0, a0) = self.points[idx - 1];
        let (n1, a1) = self.points[idx];
        if a1 == a0 {
            return Some(n0);
        }
        let t = ((a - a0) / (a1 - a0)).to_f64().unwrap();
        Some(n0 + (n1 - n0) * t)
    }
}

/// Center-cracked-plate correction sqrt(sec(pi*a/(2*b))); 1 at a = 0 and
/// strictly increasing toward the half-width.
pub fn geometry_factor<T: Real>(a_mm: T, geom: &GeometrySpec<T>) -> Result<T, FractureError> {
    let b = geom.half_width_b_mm();
    if a_mm < T::zero() || a_mm >= b {
        return Err(FractureError::CrackExceedsGeometry {
            a_mm: a_mm.to_f64().unwrap_or(f64::NAN),
            b_mm: b.to_f64().unwrap_or(f64::NAN),
        });
    }
    if geom.is_infinite() {
        return Ok(T::one());
    }
    let arg = T::PI() * a_mm / (b + b);
    Ok((T::one() / arg.cos()).sqrt())
}

/// Stress intensity factor range f(g) * delta_sigma * sqrt(pi * a).
pub fn delta_k<T: Real>(
    a_mm: T,
    delta_sigma_mpa: T,
    geom: &GeometrySpec<T>,
) -> Result<T, FractureError> {
    if a_mm < cvt(A_MIN_MM) {
        return Err(FractureError::CrackBelowMinimum {
            a_mm: a_mm.to_f64().unwrap_or(f64::NAN),
        });
    }
    let f = geometry_factor(a_mm, geom)?;
    Ok(f * delta_sigma_mpa * (T::PI() * a_mm).sqrt())
}

/// Paris growth rate C * (dK)^m in mm/cycle.
pub fn growth_rate<T: Real>(
    a_mm: T,
    params: &ParisParams<T>,
    delta_sigma_mpa: T,
    geom: &GeometrySpec<T>,
) -> Result<T, FractureError> {
    if params.c == T::zero() {
        return Ok(T::zero());
    }
    let dk = delta_k(a_mm, delta_sigma_mpa, geom)?;
    Ok(params.c * dk.powf(params.m))
}

// Growth rate with the crack clamped inside the validity region, for use
// as an ODE right-hand side whose intermediate stage values may overshoot
// the truncation limit.
fn clamped_rate<T: Real>(
    a_mm: T,
    params: &ParisParams<T>,
    delta_sigma: T,
    geom: &GeometrySpec<T>,
) -> T {
    let limit = if geom.is_infinite() {
        a_mm
    } else {
        geom.half_width_b_mm() * cvt(0.995)
    };
    let a = a_mm.min(limit).max(cvt(A_MIN_MM));
    let f = if geom.is_infinite() {
        T::one()
    } else {
        let arg = T::PI() * a / (geom.half_width_b_mm() + geom.half_width_b_mm());
        (T::one() / arg.cos()).sqrt()
    };
    let dk = f * delta_sigma * (T::PI() * a).sqrt();
    params.c * dk.powf(params.m)
}

// One classical Runge-Kutta step of width h on da/dN = rate(a).
fn rk4_step<T: Real>(
    a: T,
    h: f64,
    params: &ParisParams<T>,
    delta_sigma: T,
    geom: &GeometrySpec<T>,
) -> T {
    let h_t = cvt::<T>(h);
    let half = h_t / cvt(2.0);
    let k1 = clamped_rate(a, params, delta_sigma, geom);
    let k2 = clamped_rate(a + half * k1, params, delta_sigma, geom);
    let k3 = clamped_rate(a + half * k2, params, delta_sigma, geom);
    let k4 = clamped_rate(a + h_t * k3, params, delta_sigma, geom);
    let six = cvt::<T>(6.0);
    a + h_t * (k1 + k2 + k2 + k3 + k3 + k4) / six
}

/// Advance a crack from `from_cycle` to `to_cycle` under the loading
/// program, resolving stress blocks and using RK4 steps no wider than
/// `step` cycles. Returns the final crack length, or the truncation limit
/// if it was reached (flagged by the bool).
pub fn advance_crack<T: Real>(
    a0_mm: T,
    from_cycle: f64,
    to_cycle: f64,
    params: &ParisParams<T>,
    loading: &LoadingSpec<T>,
    geom: &GeometrySpec<T>,
    step: f64,
) -> Result<(T, bool), FractureError> {
    if step < 1.0 {
        return Err(FractureError::InvalidStep);
    }
    if a0_mm < cvt(A_MIN_MM) {
        return Err(FractureError::CrackBelowMinimum {
            a_mm: a0_mm.to_f64().unwrap_or(f64::NAN),
        });
    }
    let limit = geom.truncation_limit();
    if a0_mm >= limit {
        return Ok((limit, true));
    }
    let mut a = a0_mm;
    for (seg_from, seg_to, ds) in loading.segments_between(from_cycle, to_cycle) {
        let span = seg_to - seg_from;
        let n_steps = (span / step).ceil().max(1.0) as usize;
        let h = span / n_steps as f64;
        for _ in 0..n_steps {
            a = rk4_step(a, h, params, ds, geom);
            if a >= limit {
                return Ok((limit, true));
            }
        }
    }
    Ok((a, false))
}

/// Integrate crack growth from cycle 0 to `n_cycles`, emitting points
/// every `step` cycles. Stops early with the truncation flag set if the
/// crack reaches the geometry limit.
pub fn integrate_growth<T: Real>(
    a0_mm: T,
    params: &ParisParams<T>,
    loading: &LoadingSpec<T>,
    geom: &GeometrySpec<T>,
    n_cycles: f64,
    step: f64,
) -> Result<CrackGrowthCurve<T>, FractureError> {
    if step < 1.0 || n_cycles <= 0.0 {
        return Err(FractureError::InvalidStep);
    }
    let b = geom.half_width_b_mm();
    if a0_mm >= b {
        return Err(FractureError::CrackExceedsGeometry {
            a_mm: a0_mm.to_f64().unwrap_or(f64::NAN),
            b_mm: b.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut points = vec![(0.0, a0_mm)];
    let mut truncated = false;
    let mut n = 0.0;
    let mut a = a0_mm;
    while n < n_cycles {
        let next = (n + step).min(n_cycles);
        let (a_next, hit) = advance_crack(a, n, next, params, loading, geom, step)?;
        // Guard against rounding drift in the monotone invariant.
        a = a_next.max(a);
        n = next;
        points.push((n, a));
        if hit {
            truncated = true;
            break;
        }
    }
    CrackGrowthCurve::with_truncation(points, truncated)
}

/// Cycles needed to grow from `a1` to `a2` under a constant stress range:
/// adaptive Simpson quadrature of 1/(C * dK(a)^m) to 1e-8 relative.
pub fn cycles_between<T: Real>(
    a1_mm: T,
    a2_mm: T,
    params: &ParisParams<T>,
    delta_sigma_mpa: T,
    geom: &GeometrySpec<T>,
) -> Result<f64, FractureError> {
    if a1_mm == a2_mm {
        return Ok(0.0);
    }
    if !(a1_mm > T::zero()) || a1_mm > a2_mm || a2_mm >= geom.half_width_b_mm() {
        return Err(FractureError::InvalidCrackRange);
    }
    if a1_mm < cvt(A_MIN_MM) {
        return Err(FractureError::CrackBelowMinimum {
            a_mm: a1_mm.to_f64().unwrap_or(f64::NAN),
        });
    }
    let integrand = |a: T| -> Result<T, FractureError> {
        let dk = delta_k(a, delta_sigma_mpa, geom)?;
        Ok(T::one() / (params.c * dk.powf(params.m)))
    };
    let tol = cvt::<T>(1e-8).max(T::epsilon() * cvt(64.0));
    let n = adaptive_simpson(&integrand, a1_mm, a2_mm, tol)?;
    Ok(n.to_f64().unwrap())
}

fn simpson<T: Real>(fa: T, fm: T, fb: T, h: T) -> T {
    let four = cvt::<T>(4.0);
    h / cvt(6.0) * (fa + four * fm + fb)
}

fn adaptive_simpson<T: Real>(
    f: &impl Fn(T) -> Result<T, FractureError>,
    a: T,
    b: T,
    rel_tol: T,
) -> Result<T, FractureError> {
    let two = cvt::<T>(2.0);
    let m = (a + b) / two;
    let fa = f(a)?;
    let fm = f(m)?;
    let fb = f(b)?;
    let whole = simpson(fa, fm, fb, b - a);
    fn recurse<T: Real>(
        f: &impl Fn(T) -> Result<T, FractureError>,
        a: T,
        b: T,
        fa: T,
        fm: T,
        fb: T,
        whole: T,
        eps: T,
        depth: usize,
    ) -> Result<T, FractureError> {
        let two = cvt::<T>(2.0);
        let m = (a + b) / two;
        let lm = (a + m) / two;
        let rm = (m + b) / two;
        let flm = f(lm)?;
        let frm = f(rm)?;
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= cvt::<T>(15.0) * eps {
            return Ok(left + right + delta / cvt(15.0));
        }
        let half_eps = eps / two;
        Ok(recurse(f, a, m, fa, flm, fm, left, half_eps, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, half_eps, depth - 1)?)
    }
    recurse(f, a, b, fa, fm, fb, whole, rel_tol * whole.abs(), 48)
}
