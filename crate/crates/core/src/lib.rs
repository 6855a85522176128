//! Crack-growth prognostics from ultrasonic measurements.
//!
//! The crate combines three estimation routes for fatigue crack length:
//!
//! - **Physics**: Paris-law growth integration with an equivalent
//!   center-cracked-plate geometry, parameters fitted per test and pooled
//!   into a Weibull growth-path distribution ([`fracture`]).
//! - **Data**: damage-sensitive features extracted from denoised Lamb-wave
//!   signal pairs ([`dsp`], [`features`]) feeding a small neural regressor
//!   ([`mlp`]).
//! - **Fusion**: a particle filter that uses the fitted growth path as its
//!   move function and neural crack estimates as observations ([`pf`]).
//!
//! [`dataio`] defines the on-disk dataset schema and a synthetic fatigue-test
//! generator used as the ground-truth oracle in tests.
//!
//! All numeric kernels are generic over the scalar type through [`Real`]
//! (`f32` or `f64`); cycle counts are plain `f64` on the time axis.
//! Concrete `f64` aliases for the main types live at the crate root.

pub mod dataio;
pub mod dsp;
pub mod features;
pub mod fracture;
pub mod loading;
pub mod mlp;
pub mod pf;
mod scalar;

pub use scalar::{cvt, Real};

/// `f64` aliases for the main domain types.
pub type Signal64 = dsp::Signal<f64>;
pub type FrequencyBand64 = dsp::FrequencyBand<f64>;
pub type Baseline64 = features::Baseline<f64>;
pub type FeatureVector64 = features::FeatureVector<f64>;
pub type LoadingSpec64 = loading::LoadingSpec<f64>;
pub type GeometrySpec64 = fracture::GeometrySpec<f64>;
pub type ParisParams64 = fracture::ParisParams<f64>;
pub type CrackGrowthCurve64 = fracture::CrackGrowthCurve<f64>;
pub type GrowthPathDistribution64 = fracture::GrowthPathDistribution<f64>;
pub type MlpParams64 = mlp::MlpParams<f64>;
pub type PfConfig64 = pf::PfConfig<f64>;
pub type ParticleEnsemble64 = pf::ParticleEnsemble<f64>;

/// `f32` aliases for the numeric kernels.
pub type Signal32 = dsp::Signal<f32>;
pub type FrequencyBand32 = dsp::FrequencyBand<f32>;
pub type FeatureVector32 = features::FeatureVector<f32>;
pub type ParisParams32 = fracture::ParisParams<f32>;
pub type MlpParams32 = mlp::MlpParams<f32>;
