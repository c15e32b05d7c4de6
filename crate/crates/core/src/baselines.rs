//! Reference estimators: the full-feedback empirical CDF and a per-point one-bit estimator.

use serde::Serialize;

use crate::distributions::{BitFeedbackOracle, DistributionSpec};
use crate::error::{Error, Result};
use crate::geometry::{GridEndpoint, GridSpec};

/// `x -> (1/T) #{t : X_t <= x}` over full samples.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    dim: usize,
    samples: Vec<Vec<f64>>,
}

impl EmpiricalCdf {
    pub fn from_samples(dim: usize, samples: Vec<Vec<f64>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter(
                "the empirical CDF needs at least one sample".into(),
            ));
        }
        if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
            return Err(Error::InvalidParameter(format!(
                "sample of length {} in a {dim}-dimensional empirical CDF",
                bad.len()
            )));
        }
        Ok(Self { dim, samples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `T`.
    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let hits = self
            .samples
            .iter()
            .filter(|s| s.iter().zip(x).all(|(si, xi)| si <= xi))
            .count();
        hits as f64 / self.samples.len() as f64
    }
}

/// Draws `t` full samples from the `spec` and returns their empirical CDF.
///
/// Sample `i` is the same draw a one-bit oracle with this seed would use for its `i`-th query.
pub fn empirical_cdf_full_feedback(
    spec: &DistributionSpec,
    t: usize,
    seed: u64,
) -> Result<EmpiricalCdf> {
    if t == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be at least 1".into(),
        ));
    }
    let mut oracle = BitFeedbackOracle::new(spec.clone(), seed);
    let samples = (0..t).map(|_| oracle.draw_full_sample()).collect();
    EmpiricalCdf::from_samples(spec.n, samples)
}

/// `ceil(ln(2 (K+1)^n / delta) / (2 eps^2))`: Hoeffding per point, union bound over the grid.
pub fn naive_budget_per_point(grid: &GridSpec, eps: f64, delta: f64) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} and delta = {delta} must lie in (0,1)"
        )));
    }
    let points = grid.point_count() as f64;
    Ok(((2.0 * points / delta).ln() / (2.0 * eps * eps)).ceil() as u64)
}

/// Independent Bernoulli means at every grid point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NaiveGridEstimate {
    #[serde(skip)]
    grid: GridSpec,
    per_point: u64,
    total_queries: u64,
    means: Vec<f64>,
}

/// Spends the per-point budget at each grid point in lexicographic order.
pub fn naive_grid_estimator(
    oracle: &mut BitFeedbackOracle,
    grid: &GridSpec,
    eps: f64,
    delta: f64,
) -> Result<NaiveGridEstimate> {
    if oracle.dim() != grid.dim() {
        return Err(Error::InvalidParameter(format!(
            "grid has dimension {} but the distribution has {}",
            grid.dim(),
            oracle.dim()
        )));
    }
    let per_point = naive_budget_per_point(grid, eps, delta)?;
    let start = oracle.query_count();
    let mut means = Vec::with_capacity(grid.point_count());
    for p in grid.points() {
        let x = grid.to_real(&p);
        let mut hits = 0u64;
        for _ in 0..per_point {
            hits += u64::from(oracle.query(&x)?);
        }
        means.push(hits as f64 / per_point as f64);
    }
    Ok(NaiveGridEstimate {
        grid: *grid,
        per_point,
        total_queries: oracle.query_count() - start,
        means,
    })
}

impl NaiveGridEstimate {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn per_point_budget(&self) -> u64 {
        self.per_point
    }

    pub fn total_queries(&self) -> u64 {
        self.total_queries
    }

    pub fn evaluate(&self, x: &[GridEndpoint]) -> Result<f64> {
        let k = self.grid.resolution();
        if x.len() != self.grid.dim() || x.iter().any(|e| e.0 > k) {
            return Err(Error::ContractViolation(format!(
                "{x:?} is not a point of the grid"
            )));
        }
        let index = x
            .iter()
            .fold(0usize, |acc, e| acc * (k as usize + 1) + e.0 as usize);
        Ok(self.means[index])
    }
}
