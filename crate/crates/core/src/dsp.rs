//! Signal denoising and window location for ultrasonic measurement pairs.
//!
//! Denoising is a hard spectral mask: the pass band is derived from the
//! power spectrum (the contiguous range around the dominant peak holding a
//! configured fraction of total power) and everything outside it is zeroed
//! in the frequency domain. Window location slides an actuation-length
//! window across the received signal and keeps the two most correlated
//! non-overlapping positions.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::scalar::{cvt, Real};

/// Minimum sample count for an ingested signal.
pub const MIN_SIGNAL_LEN: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("signal too short: {0} samples (minimum {MIN_SIGNAL_LEN})")]
    SignalTooShort(usize),
    #[error("sampling rate must be positive")]
    NonPositiveRate,
    #[error("signal contains a non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("invalid frequency band: require 0 <= low < high")]
    InvalidBand,
    #[error("band upper edge {high_hz} Hz exceeds Nyquist {nyquist_hz} Hz")]
    BandAboveNyquist { high_hz: f64, nyquist_hz: f64 },
    #[error("no dominant band: spectrum has zero total power")]
    NoDominantBand,
    #[error("energy fraction must lie strictly between 0 and 1")]
    InvalidEnergyFraction,
    #[error("degenerate correlation: an input has zero variance")]
    DegenerateCorrelation,
    #[error("correlation inputs must have equal lengths >= 2 (got {0} and {1})")]
    CorrelationLength(usize, usize),
    #[error("received signal ({received} samples) must be at least twice the actuation length ({actuation})")]
    ReceivedTooShort { received: usize, actuation: usize },
    #[error("fewer than two admissible non-overlapping window lags")]
    NoSecondWindow,
    #[error("window [{start}, {start}+{length}) out of range for signal of {signal_len} samples")]
    WindowOutOfRange {
        start: usize,
        length: usize,
        signal_len: usize,
    },
    #[error("pooled band selection requires signals of equal length and rate")]
    MismatchedSignals,
}

/// A uniformly sampled voltage trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T> {
    samples: Vec<T>,
    sampling_rate_hz: T,
}

impl<T: Real> Signal<T> {
    /// Build a full-length signal; enforces the ingest minimum of
    /// [`MIN_SIGNAL_LEN`] samples.
    pub fn new(samples: Vec<T>, sampling_rate_hz: T) -> Result<Self, DspError> {
        if samples.len() < MIN_SIGNAL_LEN {
            return Err(DspError::SignalTooShort(samples.len()));
        }
        Self::from_window(samples, sampling_rate_hz)
    }

    /// Build a signal slice without the ingest length minimum (windows may
    /// be shorter than loaded records).
    pub fn from_window(samples: Vec<T>, sampling_rate_hz: T) -> Result<Self, DspError> {
        if sampling_rate_hz <= T::zero() {
            return Err(DspError::NonPositiveRate);
        }
        if samples.is_empty() {
            return Err(DspError::SignalTooShort(0));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(DspError::NonFiniteSample(i));
        }
        Ok(Self {
            samples,
            sampling_rate_hz,
        })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sampling_rate_hz(&self) -> T {
        self.sampling_rate_hz
    }

    pub fn nyquist_hz(&self) -> T {
        self.sampling_rate_hz / cvt(2.0)
    }

    pub fn duration_s(&self) -> T {
        cvt::<T>(self.len() as f64) / self.sampling_rate_hz
    }
}

/// Contiguous frequency interval used as a pass band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBand<T> {
    pub low_hz: T,
    pub high_hz: T,
}

impl<T: Real> FrequencyBand<T> {
    pub fn new(low_hz: T, high_hz: T) -> Result<Self, DspError> {
        if low_hz < T::zero() || low_hz >= high_hz {
            return Err(DspError::InvalidBand);
        }
        Ok(Self { low_hz, high_hz })
    }

    pub fn contains(&self, f_hz: T) -> bool {
        f_hz >= self.low_hz && f_hz <= self.high_hz
    }
}

/// The two most actuation-correlated window positions in a received
/// signal, ordered in time. Correlations are signed Pearson values at the
/// selected lags; selection ranks by absolute value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowPair<T> {
    pub first_start: usize,
    pub second_start: usize,
    pub length: usize,
    pub first_corr: T,
    pub second_corr: T,
}

fn fft_forward<T: Real>(samples: &[T]) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = samples
        .iter()
        .map(|&x| Complex::new(x, T::zero()))
        .collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// One-sided periodogram. Total power over all bins equals the mean
/// square of the samples (Parseval).
pub fn power_spectrum<T: Real>(s: &Signal<T>) -> Vec<(T, T)> {
    let n = s.len();
    let spec = fft_forward(s.samples());
    let df = s.sampling_rate_hz() / cvt(n as f64);
    let norm = cvt::<T>((n as f64) * (n as f64));
    let half = n / 2;
    let mut out = Vec::with_capacity(half + 1);
    for k in 0..=half {
        let mut p = spec[k].norm_sqr();
        // Fold the mirrored bin onto the positive-frequency side.
        if k != 0 && !(n % 2 == 0 && k == half) {
            p = p + spec[n - k].norm_sqr();
        }
        out.push((cvt::<T>(k as f64) * df, p / norm));
    }
    out
}

fn band_from_powers<T: Real>(
    powers: &[T],
    df: T,
    nyquist: T,
    energy_fraction: T,
) -> Result<FrequencyBand<T>, DspError> {
    if energy_fraction <= T::zero() || energy_fraction >= T::one() {
        return Err(DspError::InvalidEnergyFraction);
    }
    let total: T = powers.iter().copied().sum();
    if total <= T::zero() {
        return Err(DspError::NoDominantBand);
    }
    // Peak bin; ties go to the lower frequency.
    let mut peak = 0;
    for (k, &p) in powers.iter().enumerate() {
        if p > powers[peak] {
            peak = k;
        }
    }
    let target = energy_fraction * total;
    let (mut lo, mut hi) = (peak, peak);
    let mut acc = powers[peak];
    while acc < target && (lo > 0 || hi + 1 < powers.len()) {
        let left = if lo > 0 { Some(powers[lo - 1]) } else { None };
        let right = if hi + 1 < powers.len() {
            Some(powers[hi + 1])
        } else {
            None
        };
        match (left, right) {
            (Some(l), Some(r)) if r > l => {
                hi += 1;
                acc += r;
            }
            (Some(l), _) => {
                lo -= 1;
                acc += l;
            }
            (None, Some(r)) => {
                hi += 1;
                acc += r;
            }
            (None, None) => break,
        }
    }
    let half = df / cvt(2.0);
    let low = (cvt::<T>(lo as f64) * df - half).max(T::zero());
    let high = (cvt::<T>(hi as f64) * df + half).min(nyquist);
    FrequencyBand::new(low, high)
}

/// Smallest contiguous band around the spectral peak holding at least
/// `energy_fraction` of total power.
pub fn select_band<T: Real>(
    s: &Signal<T>,
    energy_fraction: T,
) -> Result<FrequencyBand<T>, DspError> {
    let spec = power_spectrum(s);
    let powers: Vec<T> = spec.iter().map(|&(_, p)| p).collect();
    let df = s.sampling_rate_hz() / cvt(s.len() as f64);
    band_from_powers(&powers, df, s.nyquist_hz(), energy_fraction)
}

/// Band selection over the average periodogram of several equal-shape
/// signals; used to derive one global pass band from all zero-crack
/// actuation records.
pub fn select_band_pooled<T: Real>(
    signals: &[&Signal<T>],
    energy_fraction: T,
) -> Result<FrequencyBand<T>, DspError> {
    let first = signals.first().ok_or(DspError::NoDominantBand)?;
    let n = first.len();
    let rate = first.sampling_rate_hz();
    if signals
        .iter()
        .any(|s| s.len() != n || s.sampling_rate_hz() != rate)
    {
        return Err(DspError::MismatchedSignals);
    }
    let mut powers = vec![T::zero(); n / 2 + 1];
    for s in signals {
        for (k, (_, p)) in power_spectrum(s).into_iter().enumerate() {
            powers[k] += p;
        }
    }
    let df = rate / cvt(n as f64);
    band_from_powers(&powers, df, first.nyquist_hz(), energy_fraction)
}

/// Hard spectral mask: zero every bin outside `band` (both spectral
/// halves symmetrically) and transform back.
pub fn bandpass_filter<T: Real>(
    s: &Signal<T>,
    band: &FrequencyBand<T>,
) -> Result<Signal<T>, DspError> {
    let nyq = s.nyquist_hz();
    if band.high_hz > nyq {
        return Err(DspError::BandAboveNyquist {
            high_hz: band.high_hz.to_f64().unwrap_or(f64::NAN),
            nyquist_hz: nyq.to_f64().unwrap_or(f64::NAN),
        });
    }
    let n = s.len();
    let df = s.sampling_rate_hz() / cvt(n as f64);
    let mut spec = fft_forward(s.samples());
    for (k, bin) in spec.iter_mut().enumerate() {
        let folded = k.min(n - k.min(n)); // min(k, n - k), safe at k = 0
        let f = cvt::<T>(folded as f64) * df;
        if !band.contains(f) {
            *bin = Complex::new(T::zero(), T::zero());
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let scale = cvt::<T>(n as f64);
    let samples: Vec<T> = spec.into_iter().map(|c| c.re / scale).collect();
    Signal::from_window(samples, s.sampling_rate_hz())
}

/// Sample Pearson correlation in [-1, 1].
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> Result<T, DspError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(DspError::CorrelationLength(a.len(), b.len()));
    }
    let n = cvt::<T>(a.len() as f64);
    let mean_a = a.iter().copied().sum::<T>() / n;
    let mean_b = b.iter().copied().sum::<T>() / n;
    let mut cov = T::zero();
    let mut var_a = T::zero();
    let mut var_b = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a <= T::zero() || var_b <= T::zero() {
        return Err(DspError::DegenerateCorrelation);
    }
    let r = cov / (var_a * var_b).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// Slide an actuation-length window across the received signal at step 1
/// and return the two highest-|rho| non-overlapping lags, ordered in time.
/// Zero-variance windows score zero; equal scores resolve to the earlier
/// lag.
pub fn locate_windows<T: Real>(
    actuation: &Signal<T>,
    received: &Signal<T>,
) -> Result<WindowPair<T>, DspError> {
    let len = actuation.len();
    if received.len() < 2 * len {
        return Err(DspError::ReceivedTooShort {
            received: received.len(),
            actuation: len,
        });
    }
    let act = actuation.samples();
    let rec = received.samples();
    let n_lags = rec.len() - len + 1;
    let mut scores = Vec::with_capacity(n_lags);
    for lag in 0..n_lags {
        let rho = match pearson(act, &rec[lag..lag + len]) {
            Ok(r) => r,
            Err(DspError::DegenerateCorrelation) => T::zero(),
            Err(e) => return Err(e),
        };
        scores.push(rho);
    }
    let best = |exclude: Option<usize>| -> Option<(usize, T)> {
        let mut found: Option<(usize, T)> = None;
        for (lag, &rho) in scores.iter().enumerate() {
            if let Some(cut) = exclude {
                // Non-overlap with the window starting at `cut`.
                if lag + len > cut && lag < cut + len {
                    continue;
                }
            }
            let better = match found {
                None => true,
                Some((_, b)) => rho.abs() > b.abs(),
            };
            if better {
                found = Some((lag, rho));
            }
        }
        found
    };
    let (lag1, rho1) = best(None).ok_or(DspError::NoSecondWindow)?;
    let (lag2, rho2) = best(Some(lag1)).ok_or(DspError::NoSecondWindow)?;
    let ((first_start, first_corr), (second_start, second_corr)) = if lag1 <= lag2 {
        ((lag1, rho1), (lag2, rho2))
    } else {
        ((lag2, rho2), (lag1, rho1))
    };
    Ok(WindowPair {
        first_start,
        second_start,
        length: len,
        first_corr,
        second_corr,
    })
}

/// Contiguous slice of a signal with the same sampling rate.
pub fn extract_window<T: Real>(
    s: &Signal<T>,
    start: usize,
    length: usize,
) -> Result<Signal<T>, DspError> {
    if length == 0 || start + length > s.len() {
        return Err(DspError::WindowOutOfRange {
            start,
            length,
            signal_len: s.len(),
        });
    }
    Signal::from_window(
        s.samples()[start..start + length].to_vec(),
        s.sampling_rate_hz(),
    )
}
