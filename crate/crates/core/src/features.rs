//! Damage-sensitive features from windowed received signals.
//!
//! Every measurement is reduced to four numbers relative to the test's
//! zero-crack baseline: Pearson correlation against the baseline window,
//! carrier phase change, received-to-actuation energy ratio, and the
//! Shannon entropy of the window's voltage histogram.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::dsp::{
    bandpass_filter, extract_window, locate_windows, pearson, power_spectrum, DspError,
    FrequencyBand, Signal, WindowPair,
};
use crate::scalar::{cvt, Real};

/// Histogram bin count used for the entropy feature.
pub const ENTROPY_BINS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("no carrier content: zero magnitude at carrier bin {0}")]
    NoCarrierContent(usize),
    #[error("entropy histogram needs at least 2 bins (got {0})")]
    TooFewBins(usize),
    #[error("carrier bin {bin} outside spectrum of {len}-sample window")]
    CarrierBinOutOfRange { bin: usize, len: usize },
    #[error("baseline actuation energy must be positive")]
    NonPositiveEnergy,
}

/// Zero-crack reference state for one test.
#[derive(Debug, Clone)]
pub struct Baseline<T> {
    /// Denoised second window of the zero-crack received signal.
    pub reference_window: Signal<T>,
    /// Energy of the denoised actuation signal (volt^2 * s).
    pub actuation_energy: T,
    /// Carrier phase of the reference window, radians.
    pub reference_phase: T,
    /// DFT bin of the actuation carrier within an actuation-length window.
    pub carrier_bin: usize,
}

/// Regressor input, in fixed order (rho, delta_phase, energy_ratio, entropy).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector<T> {
    pub rho: T,
    pub delta_phase: T,
    pub energy_ratio: T,
    pub entropy: T,
}

impl<T: Real> FeatureVector<T> {
    pub fn as_array(&self) -> [T; 4] {
        [self.rho, self.delta_phase, self.energy_ratio, self.entropy]
    }

    pub fn from_array(v: [T; 4]) -> Self {
        Self {
            rho: v[0],
            delta_phase: v[1],
            energy_ratio: v[2],
            entropy: v[3],
        }
    }
}

/// Discrete signal energy: sum of squared samples times the sample period.
pub fn energy<T: Real>(s: &Signal<T>) -> T {
    let dt = T::one() / s.sampling_rate_hz();
    s.samples().iter().map(|&x| x * x).sum::<T>() * dt
}

/// Window energy as a fraction of the baseline actuation energy.
pub fn energy_ratio<T: Real>(received_window: &Signal<T>, baseline: &Baseline<T>) -> T {
    energy(received_window) / baseline.actuation_energy
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_phase<T: Real>(x: T) -> T {
    let tau = T::PI() + T::PI();
    let r = x - tau * (x / tau).floor(); // rem_euclid, in [0, tau)
    if r > T::PI() {
        r - tau
    } else {
        r
    }
}

fn dft_bin<T: Real>(samples: &[T], bin: usize) -> Complex<T> {
    let mut buf: Vec<Complex<T>> = samples
        .iter()
        .map(|&x| Complex::new(x, T::zero()))
        .collect();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf[bin]
}

/// Carrier phase of a window relative to the baseline, wrapped to
/// (-pi, pi]. A delay shows up as a negative phase change.
pub fn phase_change<T: Real>(window: &Signal<T>, baseline: &Baseline<T>) -> Result<T, FeatureError> {
    let bin = baseline.carrier_bin;
    if bin >= window.len() {
        return Err(FeatureError::CarrierBinOutOfRange {
            bin,
            len: window.len(),
        });
    }
    let coeff = dft_bin(window.samples(), bin);
    if coeff.norm_sqr() <= T::zero() {
        return Err(FeatureError::NoCarrierContent(bin));
    }
    let phase = coeff.im.atan2(coeff.re);
    Ok(wrap_phase(phase - baseline.reference_phase))
}

/// Shannon entropy (nats) of the voltage histogram over [min, max] with
/// equal-width bins. A constant signal occupies one bin and scores zero.
pub fn information_entropy<T: Real>(s: &Signal<T>, bins: usize) -> Result<T, FeatureError> {
    if bins < 2 {
        return Err(FeatureError::TooFewBins(bins));
    }
    let samples = s.samples();
    let mut lo = samples[0];
    let mut hi = samples[0];
    for &x in samples {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if hi == lo {
        return Ok(T::zero());
    }
    let width = hi - lo;
    let bins_t = cvt::<T>(bins as f64);
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let idx = ((x - lo) / width * bins_t).to_f64().unwrap() as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    let n = cvt::<T>(samples.len() as f64);
    let mut ent = T::zero();
    for &c in &counts {
        if c > 0 {
            let p = cvt::<T>(c as f64) / n;
            ent = ent - p * p.ln();
        }
    }
    Ok(ent.max(T::zero()))
}

/// Build the zero-crack reference state from a measurement pair: denoise
/// both signals, locate the two actuation-correlated windows, and keep
/// the second one as the reference.
pub fn build_baseline<T: Real>(
    actuation: &Signal<T>,
    received: &Signal<T>,
    band: &FrequencyBand<T>,
) -> Result<Baseline<T>, FeatureError> {
    let act = bandpass_filter(actuation, band)?;
    let rec = bandpass_filter(received, band)?;
    let windows = locate_windows(&act, &rec)?;
    let reference_window = extract_window(&rec, windows.second_start, windows.length)?;
    let spectrum = power_spectrum(&act);
    // Carrier = strongest non-DC bin of the actuation spectrum.
    let carrier_bin = spectrum
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
        .map(|(k, _)| k)
        .unwrap_or(1);
    let coeff = dft_bin(reference_window.samples(), carrier_bin);
    if coeff.norm_sqr() <= T::zero() {
        return Err(FeatureError::NoCarrierContent(carrier_bin));
    }
    let reference_phase = coeff.im.atan2(coeff.re);
    let actuation_energy = energy(&act);
    if actuation_energy <= T::zero() {
        return Err(FeatureError::NonPositiveEnergy);
    }
    Ok(Baseline {
        reference_window,
        actuation_energy,
        reference_phase,
        carrier_bin,
    })
}

/// Denoise a measurement pair, take the second actuation-correlated
/// window of the received signal, and compute the four features against
/// the baseline. Also returns the located windows for diagnostics.
pub fn extract_features<T: Real>(
    actuation: &Signal<T>,
    received: &Signal<T>,
    baseline: &Baseline<T>,
    band: &FrequencyBand<T>,
    bins: usize,
) -> Result<(FeatureVector<T>, WindowPair<T>), FeatureError> {
    let act = bandpass_filter(actuation, band)?;
    let rec = bandpass_filter(received, band)?;
    let windows = locate_windows(&act, &rec)?;
    let window = extract_window(&rec, windows.second_start, windows.length)?;
    let rho = pearson(window.samples(), baseline.reference_window.samples())?;
    let delta_phase = phase_change(&window, baseline)?;
    let energy_ratio = energy_ratio(&window, baseline);
    let entropy = information_entropy(&window, bins)?;
    Ok((
        FeatureVector {
            rho,
            delta_phase,
            energy_ratio,
            entropy,
        },
        windows,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn const_signal(v: f64, n: usize, rate: f64) -> Signal<f64> {
        Signal::new(vec![v; n], rate).unwrap()
    }

    #[test]
    fn energy_of_zero_and_constant_signals() {
        assert_eq!(energy(&const_signal(0.0, 100, 10.0)), 0.0);
        // 1 V over 10 s at 10 Hz: 100 samples * 1 V^2 * 0.1 s.
        let e = energy(&const_signal(1.0, 100, 10.0));
        assert!((e - 10.0).abs() < 1e-12);
    }

    #[test]
    fn energy_of_sine_matches_closed_form() {
        // A^2 T / 2 for whole periods.
        let rate = 1000.0;
        let n = 1000; // 1 s
        let amp = 3.0;
        let samples: Vec<f64> = (0..n)
            .map(|i| amp * (2.0 * PI * 50.0 * i as f64 / rate).sin())
            .collect();
        let s = Signal::new(samples, rate).unwrap();
        let expect = amp * amp * 1.0 / 2.0;
        assert!((energy(&s) - expect).abs() < 0.01 * expect);
    }

    fn dummy_baseline(reference: Signal<f64>, carrier_bin: usize) -> Baseline<f64> {
        let coeff = dft_bin(reference.samples(), carrier_bin);
        let reference_phase = coeff.im.atan2(coeff.re);
        Baseline {
            actuation_energy: energy(&reference),
            reference_window: reference,
            reference_phase,
            carrier_bin,
        }
    }

    #[test]
    fn energy_ratio_scales_quadratically() {
        let rate = 1000.0;
        let samples: Vec<f64> = (0..256)
            .map(|i| (2.0 * PI * 50.0 * i as f64 / rate).sin())
            .collect();
        let s = Signal::new(samples.clone(), rate).unwrap();
        let b = dummy_baseline(s.clone(), 13);
        assert!((energy_ratio(&s, &b) - 1.0).abs() < 1e-12);
        let half = Signal::new(samples.iter().map(|x| 0.5 * x).collect(), rate).unwrap();
        assert!((energy_ratio(&half, &b) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn phase_change_of_reference_is_zero() {
        let rate = 1024.0;
        let n = 256;
        let k = 16; // carrier bin
        let samples: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * k as f64 * i as f64 / n as f64).cos())
            .collect();
        let s = Signal::new(samples, rate).unwrap();
        let b = dummy_baseline(s.clone(), k);
        assert!(phase_change(&s, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn quarter_period_delay_gives_minus_half_pi() {
        let rate = 1024.0;
        let n = 256;
        let k = 16usize;
        let period = n / k; // samples per carrier period
        let delay = period / 4;
        let mk = |d: usize| {
            let samples: Vec<f64> = (0..n)
                .map(|i| (2.0 * PI * k as f64 * (i as f64 - d as f64) / n as f64).cos())
                .collect();
            Signal::new(samples, rate).unwrap()
        };
        let b = dummy_baseline(mk(0), k);
        let dp = phase_change(&mk(delay), &b).unwrap();
        assert!((dp + PI / 2.0).abs() < 1e-9, "got {dp}");
    }

    #[test]
    fn phase_wraps_into_half_open_interval() {
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_phase(PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(5.0 * PI) - PI).abs() < 1e-12);
    }

    #[test]
    fn phase_change_errors_without_carrier_content() {
        let s = const_signal(0.0, 64, 100.0);
        let mut b = dummy_baseline(const_signal(1.0, 64, 100.0), 5);
        b.reference_phase = 0.0;
        assert_eq!(
            phase_change(&s, &b).unwrap_err(),
            FeatureError::NoCarrierContent(5)
        );
    }

    #[test]
    fn entropy_of_constant_signal_is_zero() {
        let s = const_signal(4.2, 64, 100.0);
        assert_eq!(information_entropy(&s, 64).unwrap(), 0.0);
    }

    #[test]
    fn entropy_of_uniform_fill_hits_ln_bins() {
        let bins = 64;
        // Four samples per bin, placed at bin centers.
        let samples: Vec<f64> = (0..bins)
            .flat_map(|i| std::iter::repeat((i as f64 + 0.5) / bins as f64).take(4))
            .collect();
        let s = Signal::new(samples, 100.0).unwrap();
        let h = information_entropy(&s, bins).unwrap();
        assert!((h - (bins as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_matches_independent_histogram_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let samples: Vec<f64> = (0..4096).map(|_| normal.sample(&mut rng)).collect();
        let s = Signal::new(samples.clone(), 1.0).unwrap();
        let h = information_entropy(&s, 64).unwrap();

        // Brute-force oracle, written independently of the implementation.
        let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = [0u32; 64];
        for &x in &samples {
            let mut idx = ((x - lo) / (hi - lo) * 64.0).floor() as usize;
            if idx > 63 {
                idx = 63;
            }
            counts[idx] += 1;
        }
        let n = samples.len() as f64;
        let oracle: f64 = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * (1.0 / p).ln()
            })
            .sum();
        assert!((h - oracle).abs() < 1e-12, "{h} vs {oracle}");
        assert!(h >= 0.0 && h <= 64f64.ln());
    }

    #[test]
    fn entropy_exactly_invariant_under_dyadic_affine_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // Dyadic samples so a power-of-two scale and dyadic offset stay exact.
        let samples: Vec<f64> = (0..512)
            .map(|_| (rng.gen_range(-2048i32..2048) as f64) / 256.0)
            .collect();
        let s = Signal::new(samples.clone(), 1.0).unwrap();
        let h = information_entropy(&s, 64).unwrap();
        for &(a, b) in &[(4.0, 1.5), (0.25, -3.0), (-8.0, 0.625), (2.0, 0.0)] {
            let t = Signal::new(samples.iter().map(|x| a * x + b).collect(), 1.0).unwrap();
            let ht = information_entropy(&t, 64).unwrap();
            assert_eq!(h, ht, "a={a} b={b}");
        }
    }

    #[test]
    fn entropy_invariant_under_general_affine_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let samples: Vec<f64> = (0..1024).map(|_| normal.sample(&mut rng)).collect();
        let s = Signal::new(samples.clone(), 1.0).unwrap();
        let h = information_entropy(&s, 64).unwrap();
        for &(a, b) in &[(3.7, 11.1), (0.013, -5.0), (-1.9, 2.2)] {
            let t = Signal::new(samples.iter().map(|x| a * x + b).collect(), 1.0).unwrap();
            assert_eq!(h, information_entropy(&t, 64).unwrap(), "a={a} b={b}");
        }
    }

    fn tone_burst_pair(
        phase: f64,
        scale: f64,
        noise_std: f64,
        seed: u64,
    ) -> (Signal<f64>, Signal<f64>) {
        let rate = 1.0e6;
        let n = 4096;
        let len = 256;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let burst: Vec<f64> = (0..len)
            .map(|i| {
                let w = 0.5 * (1.0 - (2.0 * PI * i as f64 / len as f64).cos());
                w * (2.0 * PI * 200e3 * i as f64 / rate - phase).sin()
            })
            .collect();
        let mut rec: Vec<f64> = (0..n).map(|_| noise_std * normal.sample(&mut rng)).collect();
        for (i, &v) in burst.iter().enumerate() {
            rec[600 + i] += scale * v;
            rec[2000 + i] += 0.6 * scale * v;
        }
        let act: Vec<f64> = (0..len)
            .map(|i| {
                let w = 0.5 * (1.0 - (2.0 * PI * i as f64 / len as f64).cos());
                w * (2.0 * PI * 200e3 * i as f64 / rate).sin()
            })
            .collect();
        (
            Signal::new(act, rate).unwrap(),
            Signal::new(rec, rate).unwrap(),
        )
    }

    #[test]
    fn self_comparison_yields_unit_rho_and_zero_phase() {
        let (act, rec) = tone_burst_pair(0.0, 1.0, 1e-6, 1);
        let band = crate::dsp::select_band(&act, 0.95).unwrap();
        let baseline = build_baseline(&act, &rec, &band).unwrap();
        let (fv, windows) = extract_features(&act, &rec, &baseline, &band, 64).unwrap();
        assert!((fv.rho - 1.0).abs() < 1e-9, "{fv:?}");
        assert!(fv.delta_phase.abs() < 1e-9);
        assert!(fv.energy_ratio > 0.0);
        assert!(fv.entropy > 0.0 && fv.entropy <= 64f64.ln());
        assert!(windows.second_start > windows.first_start);
    }

    #[test]
    fn extraction_is_deterministic() {
        let (act, rec) = tone_burst_pair(0.3, 0.8, 0.01, 5);
        let band = crate::dsp::select_band(&act, 0.95).unwrap();
        let baseline = build_baseline(&act, &rec, &band).unwrap();
        let (a, _) = extract_features(&act, &rec, &baseline, &band, 64).unwrap();
        let (b, _) = extract_features(&act, &rec, &baseline, &band, 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn features_shift_away_from_baseline_values() {
        let (act, rec0) = tone_burst_pair(0.0, 1.0, 1e-4, 2);
        let band = crate::dsp::select_band(&act, 0.95).unwrap();
        let baseline = build_baseline(&act, &rec0, &band).unwrap();
        let (_, rec1) = tone_burst_pair(0.8, 0.7, 1e-4, 3);
        let (fv, _) = extract_features(&act, &rec1, &baseline, &band, 64).unwrap();
        assert!(fv.rho < 0.999);
        assert!(fv.delta_phase.abs() > 0.1);
        let (fv0, _) = extract_features(&act, &rec0, &baseline, &band, 64).unwrap();
        assert!(fv.energy_ratio < fv0.energy_ratio);
    }
}
