//! Penalized regression spline smoothers with REML smoothing parameter
//! selection, posterior simulation and Gibbs sampling.

pub mod assembly;
pub mod basis;
pub mod dataset;
pub mod error;
pub mod fit;
pub mod gibbs;
pub mod linalg;
pub mod posterior;
pub mod simdata;

pub use assembly::{build_design, DesignMatrices, ModelSpec, SmoothMode, SmoothSpec};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use fit::{fit_gam, Family, FittedModel, RemlOptions};
pub use posterior::{corrected_cov, credible_band, posterior_cov, simulate_posterior, PosteriorCov};
