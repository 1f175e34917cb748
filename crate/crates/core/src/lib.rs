//! Simulation and analytic evaluation of photon-number-resolving
//! Hanbury Brown-Twiss experiments.
//!
//! The analytic modules ([`source`], [`detector`], [`analytics`]) are generic
//! over the scalar type through [`Real`]; the aliases below fix it to `f64`,
//! which is what the Monte Carlo [`engine`] runs on.

// `!(x > 0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod detector;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod presets;
pub mod quadrature;
pub mod scalar;
pub mod source;

pub use analytics::CurveMode;
pub use engine::{estimate_gamma, run, run_split_mode, CoincidenceHistogram, ExperimentConfig, GammaResult};
pub use error::{Error, Result};
pub use quadrature::QuadratureSettings;
pub use scalar::Real;

pub type SourceSpec = source::SourceSpec<f64>;
pub type PhotonPmf = source::PhotonPmf<f64>;
pub type DetectorParams = detector::DetectorParams<f64>;
pub type Discriminator = detector::Discriminator<f64>;
pub type Quench = detector::Quench<f64>;
pub type ClickProbabilities = analytics::ClickProbabilities<f64>;
pub type GammaCurve = analytics::GammaCurve<f64>;
pub type Sweep = analytics::Sweep<f64>;

/// Single-precision aliases for the analytic types.
pub mod single {
    pub type SourceSpec = crate::source::SourceSpec<f32>;
    pub type PhotonPmf = crate::source::PhotonPmf<f32>;
    pub type DetectorParams = crate::detector::DetectorParams<f32>;
    pub type Discriminator = crate::detector::Discriminator<f32>;
    pub type GammaCurve = crate::analytics::GammaCurve<f32>;
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
