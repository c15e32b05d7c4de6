//! Prefix-probability estimation and adaptive binary subdivision.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{rng_stream, streams, BitFeedbackOracle, ExactOracle};
use crate::error::{Error, Result};
use crate::geometry::{
    GridEndpoint, GridSpec, Hyperrectangle, Interval, IntervalKind, OrderedPartition, RealInterval,
};

/// `ceil(1 / eps^2)`, the number of one-bit queries behind each Monte Carlo estimate.
pub fn samples_per_estimate(eps: f64) -> u64 {
    let raw = (1.0 / eps).powi(2);
    // Absorb the last-ulp error of the division so that e.g. eps = 0.1 gives exactly 100.
    (raw * (1.0 - 1e-12)).ceil().max(1.0) as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    MonteCarlo,
    ExactInjection,
}

/// Source of the raw estimates `P(X in A x [0, w])`.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum ProbabilityEstimator {
    /// One-bit queries combined by inclusion-exclusion over the corners of `A`.
    MonteCarlo {
        oracle: BitFeedbackOracle,
        corners: ChaCha8Rng,
    },
    /// Exact box probabilities; makes the combinatorial pipeline deterministic.
    ExactInjection(ExactOracle),
}

impl ProbabilityEstimator {
    pub fn monte_carlo(oracle: BitFeedbackOracle) -> Self {
        let corners = rng_stream(oracle.seed(), streams::LEARNER);
        Self::MonteCarlo { oracle, corners }
    }

    pub fn exact(oracle: ExactOracle) -> Self {
        Self::ExactInjection(oracle)
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            Self::MonteCarlo { .. } => EstimatorKind::MonteCarlo,
            Self::ExactInjection(_) => EstimatorKind::ExactInjection,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Self::ExactInjection(_))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::MonteCarlo { oracle, .. } => oracle.dim(),
            Self::ExactInjection(o) => o.dim(),
        }
    }

    pub fn queries(&self) -> u64 {
        match self {
            Self::MonteCarlo { oracle, .. } => oracle.query_count(),
            Self::ExactInjection(_) => 0,
        }
    }

    pub fn oracle(&self) -> Option<&BitFeedbackOracle> {
        match self {
            Self::MonteCarlo { oracle, .. } => Some(oracle),
            Self::ExactInjection(_) => None,
        }
    }

    pub fn into_oracle(self) -> Option<BitFeedbackOracle> {
        match self {
            Self::MonteCarlo { oracle, .. } => Some(oracle),
            Self::ExactInjection(_) => None,
        }
    }

    fn estimate(
        &mut self,
        a: &Hyperrectangle,
        w: GridEndpoint,
        eps: f64,
        grid: &GridSpec,
    ) -> Result<f64> {
        match self {
            Self::ExactInjection(oracle) => {
                let mut rect = a.to_real(grid);
                rect.push(RealInterval::prefix(grid.value(w)));
                oracle.real_box_probability(&rect)
            }
            Self::MonteCarlo { oracle, corners } => {
                monte_carlo_estimate(oracle, corners, a, w, eps, grid)
            }
        }
    }
}

fn monte_carlo_estimate(
    oracle: &mut BitFeedbackOracle,
    corners: &mut ChaCha8Rng,
    a: &Hyperrectangle,
    w: GridEndpoint,
    eps: f64,
    grid: &GridSpec,
) -> Result<f64> {
    let n = oracle.dim();
    let mut point = vec![1.0; n];
    // (coordinate, lower corner, upper corner) for every half-open dimension.
    let mut branching = Vec::new();
    for (i, interval) in a.intervals().iter().enumerate() {
        match interval.kind() {
            IntervalKind::DegenerateZero => point[i] = 0.0,
            IntervalKind::ClosedFromZero => point[i] = grid.value(interval.hi()),
            IntervalKind::HalfOpen => {
                branching.push((i, grid.value(interval.lo()), grid.value(interval.hi())));
            }
        }
    }
    point[a.dim()] = grid.value(w);

    let samples = samples_per_estimate(eps);
    let mut signed_hits: i64 = 0;
    for _ in 0..samples {
        let mut parity = false;
        if !branching.is_empty() {
            let y: u32 = corners.gen();
            for (bit, &(i, lo, hi)) in branching.iter().enumerate() {
                let take_lower = (y >> bit) & 1 == 1;
                point[i] = if take_lower { lo } else { hi };
                parity ^= take_lower;
            }
        }
        if oracle.query(&point)? {
            signed_hits += if parity { -1 } else { 1 };
        }
    }
    let scale = f64::from(1u32 << branching.len());
    Ok(scale * signed_hits as f64 / samples as f64)
}

/// Write-once store of raw estimates keyed by `(A, w)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EstimateTable {
    entries: BTreeMap<Hyperrectangle, BTreeMap<GridEndpoint, f64>>,
    len: usize,
}

impl EstimateTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, a: &Hyperrectangle, w: GridEndpoint) -> Option<f64> {
        self.entries.get(a).and_then(|row| row.get(&w)).copied()
    }

    /// Stores `value` unless the key is already present; returns the stored value.
    pub fn insert(&mut self, a: &Hyperrectangle, w: GridEndpoint, value: f64) -> f64 {
        let row = self.entries.entry(a.clone()).or_default();
        *row.entry(w).or_insert_with(|| {
            self.len += 1;
            value
        })
    }

    pub fn row(&self, a: &Hyperrectangle) -> Option<&BTreeMap<GridEndpoint, f64>> {
        self.entries.get(a)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&Hyperrectangle, &BTreeMap<GridEndpoint, f64>)> {
        self.entries.iter()
    }

    /// Number of filled keys.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Estimates `P(X in A x [0, w])` and caches it; a cached key issues no queries.
pub fn mce(
    est: &mut ProbabilityEstimator,
    table: &mut EstimateTable,
    a: &Hyperrectangle,
    w: GridEndpoint,
    eps: f64,
    grid: &GridSpec,
) -> Result<f64> {
    if let Some(v) = table.get(a, w) {
        return Ok(v);
    }
    if a.dim() >= est.dim() {
        return Err(Error::ContractViolation(format!(
            "prefix estimate needs dim(A) <= n - 1, got {} for n = {}",
            a.dim(),
            est.dim()
        )));
    }
    if w > grid.top() {
        return Err(Error::ContractViolation(format!(
            "threshold {w} is off the grid"
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "accuracy {eps} must be positive"
        )));
    }
    let value = est.estimate(a, w, eps, grid)?;
    Ok(table.insert(a, w, value))
}

/// Stop-rule slack `2^n eps sqrt(ln(4K / delta) / 2)` for Monte Carlo subdivision.
pub fn confidence_margin(eps: f64, delta: f64, grid: &GridSpec) -> f64 {
    let k = f64::from(grid.resolution());
    2f64.powi(grid.dim() as i32) * eps * ((4.0 * k / delta).ln() / 2.0).sqrt()
}

/// Binary subdivision of `[0,1]` above `A`; returns the leaves plus `{0}`.
///
/// A cell `(w1, w2]` is split while its estimated mass, less `margin`, is at least
/// `eps` and it is wider than one grid cell.
pub fn bins(
    est: &mut ProbabilityEstimator,
    table: &mut EstimateTable,
    a: &Hyperrectangle,
    eps: f64,
    margin: f64,
    grid: &GridSpec,
) -> Result<OrderedPartition> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "accuracy {eps} must lie in (0,1)"
        )));
    }
    let top = grid.top();
    mce(est, table, a, GridEndpoint::ZERO, eps, grid)?;
    mce(est, table, a, top, eps, grid)?;

    let mut leaves = vec![Interval::degenerate_zero()];
    let mut pending = vec![(GridEndpoint::ZERO, top)];
    while let Some((lo, hi)) = pending.pop() {
        let lo_value = table.get(a, lo).expect("left end estimated");
        let hi_value = table.get(a, hi).expect("right end estimated");
        if hi_value - lo_value - margin < eps || hi.0 - lo.0 <= 1 {
            leaves.push(Interval::half_open(lo, hi)?);
            continue;
        }
        let mid = lo.midpoint(hi);
        mce(est, table, a, mid, eps, grid)?;
        // Right half first so the left half is processed next.
        pending.push((mid, hi));
        pending.push((lo, mid));
    }
    OrderedPartition::new(leaves, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;

    fn e(n: u32) -> GridEndpoint {
        GridEndpoint(n)
    }

    fn exact(spec: DistributionSpec) -> ProbabilityEstimator {
        ProbabilityEstimator::exact(ExactOracle::new(spec))
    }

    #[test]
    fn sample_counts() {
        assert_eq!(samples_per_estimate(0.1), 100);
        assert_eq!(samples_per_estimate(0.05), 400);
        assert_eq!(samples_per_estimate(0.02), 2500);
        assert_eq!(samples_per_estimate(0.01), 10_000);
        assert_eq!(samples_per_estimate(1.0), 1);
        assert_eq!(samples_per_estimate(0.3), 12);
    }

    #[test]
    fn full_prefix_of_unit_is_one() {
        let grid = GridSpec::new(2, 4).unwrap();
        let mut est = ProbabilityEstimator::monte_carlo(BitFeedbackOracle::new(
            DistributionSpec::uniform(2),
            3,
        ));
        let mut table = EstimateTable::new();
        let v = mce(
            &mut est,
            &mut table,
            &Hyperrectangle::unit(),
            grid.top(),
            0.1,
            &grid,
        )
        .unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(est.queries(), 100);
    }

    #[test]
    fn zero_measure_prefix_is_zero() {
        let grid = GridSpec::new(2, 2).unwrap();
        let a = Hyperrectangle::unit().extend(Interval::half_open(e(0), e(1)).unwrap());
        let mut est = ProbabilityEstimator::monte_carlo(BitFeedbackOracle::new(
            DistributionSpec::uniform(2),
            5,
        ));
        let mut table = EstimateTable::new();
        assert_eq!(
            mce(&mut est, &mut table, &a, e(0), 0.1, &grid).unwrap(),
            0.0
        );
    }

    #[test]
    fn cached_key_issues_no_queries() {
        let grid = GridSpec::new(1, 4).unwrap();
        let mut est = ProbabilityEstimator::monte_carlo(BitFeedbackOracle::new(
            DistributionSpec::uniform(1),
            1,
        ));
        let mut table = EstimateTable::new();
        let first = mce(
            &mut est,
            &mut table,
            &Hyperrectangle::unit(),
            e(2),
            0.2,
            &grid,
        )
        .unwrap();
        let spent = est.queries();
        let second = mce(
            &mut est,
            &mut table,
            &Hyperrectangle::unit(),
            e(2),
            0.2,
            &grid,
        )
        .unwrap();
        assert_eq!(first, second);
        assert_eq!(est.queries(), spent);
        assert_eq!(table.len(), 1);
    }

    #[test]
    fn mce_rejects_full_dimensional_rectangles() {
        let grid = GridSpec::new(1, 4).unwrap();
        let a = Hyperrectangle::unit().extend(Interval::half_open(e(0), e(1)).unwrap());
        let mut est = exact(DistributionSpec::uniform(1));
        let err = mce(&mut est, &mut EstimateTable::new(), &a, e(1), 0.1, &grid).unwrap_err();
        assert!(matches!(err, Error::ContractViolation(_)));
    }

    #[test]
    fn exact_mce_handles_closed_from_zero_components() {
        // Atom at 0 in the first coordinate: [0, 1/2] must keep it, (0, 1/2] must not.
        let spec =
            DistributionSpec::atoms(2, vec![(0.5, vec![0.0, 0.25]), (0.5, vec![0.75, 0.25])])
                .unwrap();
        let grid = GridSpec::new(2, 4).unwrap();
        let closed = Hyperrectangle::unit().extend(Interval::closed_from_zero(e(2)).unwrap());
        let open = Hyperrectangle::unit().extend(Interval::half_open(e(0), e(2)).unwrap());
        let mut est = exact(spec.clone());
        let mut t = EstimateTable::new();
        assert_eq!(
            mce(&mut est, &mut t, &closed, e(1), 0.1, &grid).unwrap(),
            0.5
        );
        assert_eq!(mce(&mut est, &mut t, &open, e(1), 0.1, &grid).unwrap(), 0.0);

        // The Monte Carlo path agrees exactly on atoms: no branching on [0, b].
        let mut mc = ProbabilityEstimator::monte_carlo(BitFeedbackOracle::new(spec, 11));
        let mut t = EstimateTable::new();
        let v = mce(&mut mc, &mut t, &closed, e(1), 0.05, &grid).unwrap();
        assert!((v - 0.5).abs() < 0.1, "{v}");
    }

    #[test]
    fn bins_coarsest_when_mass_sits_at_zero() {
        let grid = GridSpec::new(1, 8).unwrap();
        let mut est = exact(DistributionSpec::atoms(1, vec![(1.0, vec![0.0])]).unwrap());
        let p = bins(
            &mut est,
            &mut EstimateTable::new(),
            &Hyperrectangle::unit(),
            0.5,
            0.0,
            &grid,
        )
        .unwrap();
        assert_eq!(p, OrderedPartition::coarsest(&grid));
    }

    #[test]
    fn bins_uniform_stops_once_halves_are_light() {
        let grid = GridSpec::new(1, 8).unwrap();
        let mut est = exact(DistributionSpec::uniform(1));
        let p = bins(
            &mut est,
            &mut EstimateTable::new(),
            &Hyperrectangle::unit(),
            0.6,
            0.0,
            &grid,
        )
        .unwrap();
        assert_eq!(p.extremes(), vec![e(0), e(4), e(8)]);
    }

    #[test]
    fn bins_empty_mass_is_coarsest() {
        let spec = DistributionSpec::boxes(2, vec![(1.0, vec![0.5, 0.0], vec![1.0, 1.0])]).unwrap();
        let grid = GridSpec::new(2, 8).unwrap();
        let a = Hyperrectangle::unit().extend(Interval::half_open(e(0), e(4)).unwrap());
        let mut est = exact(spec);
        let p = bins(&mut est, &mut EstimateTable::new(), &a, 0.1, 0.0, &grid).unwrap();
        assert_eq!(p, OrderedPartition::coarsest(&grid));
    }

    #[test]
    fn bins_point_mass_splits_one_chain() {
        let spec = DistributionSpec::atoms(1, vec![(1.0, vec![0.3])]).unwrap();
        let grid = GridSpec::new(1, 8).unwrap();
        let mut est = exact(spec);
        let mut table = EstimateTable::new();
        let p = bins(
            &mut est,
            &mut table,
            &Hyperrectangle::unit(),
            0.1,
            0.0,
            &grid,
        )
        .unwrap();
        let expected = vec![
            Interval::degenerate_zero(),
            Interval::half_open(e(0), e(2)).unwrap(),
            Interval::half_open(e(2), e(3)).unwrap(),
            Interval::half_open(e(3), e(4)).unwrap(),
            Interval::half_open(e(4), e(8)).unwrap(),
        ];
        assert_eq!(p.intervals(), expected.as_slice());
        // 0, 1, and the three midpoints 1/2, 1/4, 3/8.
        assert_eq!(table.len(), 5);
        assert!(p.len() as f64 <= 2.0 / 0.1 * 3.0 + 2.0);
    }

    #[test]
    fn margin_matches_formula() {
        let grid = GridSpec::new(2, 8).unwrap();
        let m = confidence_margin(0.1, 0.5, &grid);
        let expected = 4.0 * 0.1 * ((64.0f64).ln() / 2.0).sqrt();
        assert!((m - expected).abs() < 1e-15);
    }
}
