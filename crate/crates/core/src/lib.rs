//! Learning multivariate CDFs from one-bit threshold feedback, and using the
//! learned trade probabilities to price small markets.

pub mod baselines;
pub mod distributions;
pub mod error;
pub mod estimate;
pub mod geometry;
pub mod levels;
pub mod markets;
pub mod partition;
pub mod rhi;

pub use distributions::{BitFeedbackOracle, DistributionSpec, ExactOracle};
pub use error::{Error, Result};
pub use estimate::{
    learn_cdf_density, learn_cdf_grid, CdfEstimator, FullDomainEstimator, LearnMode,
};
pub use geometry::{GridEndpoint, GridSpec, Hyperrectangle, Interval, OrderedPartition};
pub use markets::{MarketSpec, Objective, Role};
pub use rhi::{rhi, RepFamily, RhiConfig};
