//! Fisher-Rao geometry of non-centered mixtures of scaled Gaussians,
//! Riemannian gradient descent for regularized maximum likelihood and
//! KL barycenters, and a nearest-centroid classifier built on top.

pub mod error;
pub mod linalg;
pub mod manifold;
pub mod model;
pub mod optim;
pub mod datagen;
pub mod estimators;
pub mod divergence;
pub mod ml;
pub mod io;
pub mod bench;

pub use error::{Error, Result};
pub use manifold::{AmbientVector, ParameterPoint, TangentVector};
pub use model::{BatchDataset, Penalty, RegularizationSpec};
pub use optim::{Metric, OptimizerConfig, OptimizerReport};
