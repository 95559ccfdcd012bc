//! Wideband direction-of-arrival estimation for uniform linear microphone
//! arrays.
//!
//! The core estimator rotates each frequency bin's signal subspace to a common
//! reference frequency, reconstructs and accumulates the bin covariances, and
//! runs ESPRIT once on the wideband result. Histogram-ESPRIT and coherent
//! signal subspace (CSS) estimators are included for comparison, together with
//! a scenario simulator and an MAE/SDE evaluation harness.

pub mod audio;
pub mod baselines;
pub mod error;
pub mod esprit;
pub mod eval;
pub mod geometry;
pub mod linalg;
pub mod presets;
pub mod spectral;
pub mod subspace;
pub mod synth;

pub use error::{DoaError, Result};
pub use eval::{Algorithm, ExperimentConfig, RunReport};
pub use geometry::{AliasingLimit, ArrayGeometry, SteeringMatrix};
pub use spectral::{BinCovariance, MultichannelSpectrum, StftConfig, Window};
pub use synth::{MultichannelSignal, ScenarioConfig, SourceSpec};
