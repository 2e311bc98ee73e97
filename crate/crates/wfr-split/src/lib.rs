//! Closed-form Gaussian dynamics of the Wasserstein–Fisher–Rao flow and its W-FR / FR-W operator
//! splittings, KL decay analysis, log-concavity constants, and a 1D grid solver for general targets.

pub mod decay;
pub mod divergences;
pub mod error;
pub mod flows;
pub mod lab;
pub mod linalg;
pub mod logconcavity;
pub mod pde1d;

pub use error::{Error, Result};
pub use linalg::{GaussianDist, SpdMatrix, SymMatrix};
