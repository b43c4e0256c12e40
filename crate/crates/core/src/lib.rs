//! Monte Carlo toolkit for multivariate normal approximation of Poisson
//! functionals: difference operators, bound ingredients, explicit bounds,
//! smoothed Stein solutions and empirical distance estimates.

pub mod boolean;
pub mod bounds;
pub mod distance;
pub mod error;
pub mod gamma;
pub mod linalg;
pub mod malliavin;
pub mod model;
pub mod report;
pub mod sampler;
pub mod special;
pub mod stats;
pub mod stein;
pub mod testfn;
pub mod zoo;

pub use error::{Error, Result};
pub use linalg::{GaussianTarget, Mat};
pub use model::{EstimateWithError, FunctionalModel, Point, PointConfiguration, PoissonSpace};
pub use testfn::TestFunction;
