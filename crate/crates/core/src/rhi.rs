//! Representative hyperrectangle identification.
//!
//! Builds `R^1..R^n` one coordinate at a time: every `A in R^j` is subdivided
//! along coordinate `j+1`, the subdivision is lifted into its level family,
//! and `A × I` joins `R^{j+1}` for every block `I` of that family.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridEndpoint, GridSpec, Hyperrectangle, OrderedPartition};
use crate::levels::{build_levels, LevelFamily};
use crate::partition::{
    bins, confidence_margin, samples_per_estimate, EstimateTable, EstimatorKind,
    ProbabilityEstimator,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhiConfig {
    pub eps_prime: f64,
    pub delta: f64,
    pub grid: GridSpec,
    /// Keep the confidence slack in the subdivision stop rule. Ignored under exact injection.
    pub confidence_margin: bool,
}

impl RhiConfig {
    pub fn new(eps_prime: f64, delta: f64, grid: GridSpec) -> Self {
        Self {
            eps_prime,
            delta,
            grid,
            confidence_margin: true,
        }
    }

    pub fn without_margin(mut self) -> Self {
        self.confidence_margin = false;
        self
    }

    /// Confidence handed to each subdivision, `delta / (4K)^n`.
    pub fn per_call_delta(&self) -> f64 {
        let k = f64::from(self.grid.resolution());
        self.delta / (4.0 * k).powi(self.grid.dim() as i32)
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps_prime > 0.0 && self.eps_prime < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eps' = {} must lie in (0,1)",
                self.eps_prime
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta = {} must lie in (0,1)",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Everything the grid estimator needs: `R^0..R^n`, level families, raw estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct RepFamily {
    config: RhiConfig,
    estimator: EstimatorKind,
    layers: Vec<Vec<Hyperrectangle>>,
    families: BTreeMap<Hyperrectangle, LevelFamily>,
    estimates: EstimateTable,
    total_queries: u64,
}

/// Runs the identification with the given estimator.
pub fn rhi(est: &mut ProbabilityEstimator, config: &RhiConfig) -> Result<RepFamily> {
    config.validate()?;
    let grid = config.grid;
    let n = grid.dim();
    if est.dim() != n {
        return Err(Error::InvalidParameter(format!(
            "grid has dimension {n} but the distribution has {}",
            est.dim()
        )));
    }
    let margin = if config.confidence_margin && !est.is_exact() {
        confidence_margin(config.eps_prime, config.per_call_delta(), &grid)
    } else {
        0.0
    };
    let start_queries = est.queries();

    let mut estimates = EstimateTable::new();
    let mut families = BTreeMap::new();
    let mut layers = vec![vec![Hyperrectangle::unit()]];
    for j in 0..n {
        let mut next = Vec::new();
        for a in &layers[j] {
            let base = bins(est, &mut estimates, a, config.eps_prime, margin, &grid)?;
            let family = build_levels(&base);
            next.extend(family.star().map(|b| a.extend(b.interval)));
            families.insert(a.clone(), family);
        }
        layers.push(next);
    }

    Ok(RepFamily {
        config: *config,
        estimator: est.kind(),
        layers,
        families,
        estimates,
        total_queries: est.queries() - start_queries,
    })
}

impl RepFamily {
    pub fn config(&self) -> &RhiConfig {
        &self.config
    }

    pub fn grid(&self) -> &GridSpec {
        &self.config.grid
    }

    pub fn eps_prime(&self) -> f64 {
        self.config.eps_prime
    }

    pub fn delta(&self) -> f64 {
        self.config.delta
    }

    pub fn estimator_kind(&self) -> EstimatorKind {
        self.estimator
    }

    /// `R^j`.
    pub fn layer(&self, j: usize) -> &[Hyperrectangle] {
        &self.layers[j]
    }

    pub fn layers(&self) -> &[Vec<Hyperrectangle>] {
        &self.layers
    }

    /// `sum_{j=1..n} |R^j|`.
    pub fn total_rectangles(&self) -> usize {
        self.layers.iter().skip(1).map(Vec::len).sum()
    }

    pub fn family(&self, a: &Hyperrectangle) -> Option<&LevelFamily> {
        self.families.get(a)
    }

    pub fn families(&self) -> impl Iterator<Item = (&Hyperrectangle, &LevelFamily)> {
        self.families.iter()
    }

    pub fn estimates(&self) -> &EstimateTable {
        &self.estimates
    }

    pub fn total_queries(&self) -> u64 {
        self.total_queries
    }

    /// `ceil(1/eps'^2)` for Monte Carlo families, zero under exact injection.
    pub fn samples_per_estimate(&self) -> u64 {
        match self.estimator {
            EstimatorKind::MonteCarlo => samples_per_estimate(self.config.eps_prime),
            EstimatorKind::ExactInjection => 0,
        }
    }

    /// Worst-case family size bound `(1/eps') 2^{n-1} (4 log2 K)^{n+2}`.
    pub fn size_bound(&self) -> f64 {
        let n = self.config.grid.dim() as i32;
        let log_k = f64::from(self.config.grid.log2_resolution());
        2f64.powi(n - 1) * (4.0 * log_k).powi(n + 2) / self.config.eps_prime
    }

    pub fn to_dump(&self) -> FamilyDump {
        let nodes = self.layers[..self.layers.len() - 1]
            .iter()
            .enumerate()
            .flat_map(|(j, layer)| layer.iter().map(move |a| (j, a)))
            .map(|(j, a)| {
                let family = &self.families[a];
                let estimates = self
                    .estimates
                    .row(a)
                    .map(|row| {
                        row.iter()
                            .map(|(&w, &value)| EstimateEntry { w, value })
                            .collect()
                    })
                    .unwrap_or_default();
                NodeDump {
                    dim: j,
                    rect: a.clone(),
                    partition: family.base().clone(),
                    estimates,
                }
            })
            .collect();
        FamilyDump {
            n: self.config.grid.dim(),
            resolution: self.config.grid.resolution(),
            requested_resolution: self.config.grid.requested_resolution(),
            eps_prime: self.config.eps_prime,
            delta: self.config.delta,
            confidence_margin: self.config.confidence_margin,
            estimator: self.estimator,
            total_queries: self.total_queries,
            samples_per_estimate: self.samples_per_estimate(),
            layer_sizes: self.layers.iter().map(Vec::len).collect(),
            nodes,
        }
    }

    pub fn from_dump(dump: &FamilyDump) -> Result<Self> {
        let grid = GridSpec::new(dump.n, dump.requested_resolution)?;
        if grid.resolution() != dump.resolution {
            return Err(Error::CorruptFamily(format!(
                "resolution {} does not match requested {}",
                dump.resolution, dump.requested_resolution
            )));
        }
        let config = RhiConfig {
            eps_prime: dump.eps_prime,
            delta: dump.delta,
            grid,
            confidence_margin: dump.confidence_margin,
        };
        config.validate()?;

        let mut bases = BTreeMap::new();
        let mut estimates = EstimateTable::new();
        for node in &dump.nodes {
            let base = OrderedPartition::new(node.partition.intervals().to_vec(), &grid)
                .map_err(|e| Error::CorruptFamily(format!("partition of {}: {e}", node.rect)))?;
            for entry in &node.estimates {
                if entry.w > grid.top() {
                    return Err(Error::CorruptFamily(format!(
                        "estimate at {} is off the grid",
                        entry.w
                    )));
                }
                estimates.insert(&node.rect, entry.w, entry.value);
            }
            if bases.insert(node.rect.clone(), base).is_some() {
                return Err(Error::CorruptFamily(format!(
                    "duplicate node {}",
                    node.rect
                )));
            }
        }

        let mut families = BTreeMap::new();
        let mut layers = vec![vec![Hyperrectangle::unit()]];
        for j in 0..dump.n {
            let mut next = Vec::new();
            for a in &layers[j] {
                let base = bases
                    .remove(a)
                    .ok_or_else(|| Error::CorruptFamily(format!("missing partition for {a}")))?;
                if let Some(w) = base
                    .extremes()
                    .into_iter()
                    .find(|&w| estimates.get(a, w).is_none())
                {
                    return Err(Error::CorruptFamily(format!(
                        "missing estimate for ({a}, {w})"
                    )));
                }
                let family = build_levels(&base);
                next.extend(family.star().map(|b| a.extend(b.interval)));
                families.insert(a.clone(), family);
            }
            layers.push(next);
        }
        if let Some(extra) = bases.keys().next() {
            return Err(Error::CorruptFamily(format!(
                "node {extra} is not reachable from the root"
            )));
        }
        let sizes: Vec<usize> = layers.iter().map(Vec::len).collect();
        if sizes != dump.layer_sizes {
            return Err(Error::CorruptFamily(format!(
                "layer sizes {sizes:?} do not match recorded {:?}",
                dump.layer_sizes
            )));
        }
        Ok(Self {
            config,
            estimator: dump.estimator,
            layers,
            families,
            estimates,
            total_queries: dump.total_queries,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_dump()).expect("family serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_dump(&serde_json::from_str(text)?)
    }
}

/// On-disk form of a [`RepFamily`]. Intervals and thresholds are grid numerators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyDump {
    pub n: usize,
    pub resolution: u32,
    pub requested_resolution: u32,
    pub eps_prime: f64,
    pub delta: f64,
    pub confidence_margin: bool,
    pub estimator: EstimatorKind,
    pub total_queries: u64,
    pub samples_per_estimate: u64,
    pub layer_sizes: Vec<usize>,
    pub nodes: Vec<NodeDump>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub dim: usize,
    pub rect: Hyperrectangle,
    pub partition: OrderedPartition,
    pub estimates: Vec<EstimateEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateEntry {
    pub w: GridEndpoint,
    pub value: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{BitFeedbackOracle, DistributionSpec, ExactOracle};
    use crate::geometry::Interval;

    fn exact_family(spec: DistributionSpec, eps: f64, k: u32) -> RepFamily {
        let grid = GridSpec::new(spec.n, k).unwrap();
        let mut est = ProbabilityEstimator::exact(ExactOracle::new(spec));
        rhi(&mut est, &RhiConfig::new(eps, 0.1, grid)).unwrap()
    }

    #[test]
    fn coarsest_one_dimensional_run() {
        let fam = exact_family(
            DistributionSpec::atoms(1, vec![(1.0, vec![0.0])]).unwrap(),
            0.5,
            8,
        );
        // Base {{0}, (0,1]} and its single level-1 block [0,1].
        assert_eq!(fam.layer(0), &[Hyperrectangle::unit()]);
        let r1: Vec<_> = fam.layer(1).iter().map(|a| a.intervals()[0]).collect();
        assert_eq!(
            r1,
            vec![
                Interval::degenerate_zero(),
                Interval::half_open(GridEndpoint(0), GridEndpoint(8)).unwrap(),
                Interval::closed_from_zero(GridEndpoint(8)).unwrap(),
            ]
        );
        assert_eq!(fam.total_queries(), 0);
    }

    #[test]
    fn layers_extend_parents_with_family_blocks() {
        let fam = exact_family(DistributionSpec::uniform(2), 0.25, 8);
        for j in 0..2 {
            for b in fam.layer(j + 1) {
                let (parent, last) = b.intervals().split_at(j);
                let parent = Hyperrectangle::from_intervals(parent.to_vec());
                let family = fam.family(&parent).expect("parent has a family");
                assert!(family.star().any(|blk| blk.interval == last[0]));
            }
        }
        assert!((fam.total_rectangles() as f64) <= fam.size_bound());
    }

    #[test]
    fn monte_carlo_query_accounting() {
        let spec = DistributionSpec::uniform(2);
        let grid = GridSpec::new(2, 4).unwrap();
        let mut est = ProbabilityEstimator::monte_carlo(BitFeedbackOracle::new(spec, 17));
        let fam = rhi(&mut est, &RhiConfig::new(0.2, 0.1, grid).without_margin()).unwrap();
        assert_eq!(fam.total_queries(), fam.estimates().len() as u64 * 25);
        assert_eq!(fam.samples_per_estimate(), 25);
    }

    #[test]
    fn budget_exceeded_propagates() {
        let grid = GridSpec::new(1, 64).unwrap();
        let oracle = BitFeedbackOracle::new(DistributionSpec::uniform(1), 1).with_query_cap(1000);
        let mut est = ProbabilityEstimator::monte_carlo(oracle);
        let err = rhi(&mut est, &RhiConfig::new(0.01, 0.1, grid)).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { cap: 1000 }));
    }

    #[test]
    fn rejects_bad_parameters() {
        let grid = GridSpec::new(1, 4).unwrap();
        let mut est = ProbabilityEstimator::exact(ExactOracle::new(DistributionSpec::uniform(1)));
        assert!(rhi(&mut est, &RhiConfig::new(1.0, 0.1, grid)).is_err());
        assert!(rhi(&mut est, &RhiConfig::new(0.1, 0.0, grid)).is_err());
        let grid2 = GridSpec::new(2, 4).unwrap();
        assert!(rhi(&mut est, &RhiConfig::new(0.1, 0.1, grid2)).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let spec = DistributionSpec::uniform(2);
        let grid = GridSpec::new(2, 8).unwrap();
        let mut est = ProbabilityEstimator::monte_carlo(BitFeedbackOracle::new(spec, 5));
        let fam = rhi(&mut est, &RhiConfig::new(0.2, 0.1, grid).without_margin()).unwrap();
        let back = RepFamily::from_json(&fam.to_json()).unwrap();
        assert_eq!(back, fam);
    }

    #[test]
    fn corrupt_dump_is_rejected() {
        let fam = exact_family(DistributionSpec::uniform(2), 0.25, 8);
        let mut dump = fam.to_dump();
        dump.nodes[1].estimates.clear();
        assert!(matches!(
            RepFamily::from_dump(&dump),
            Err(Error::CorruptFamily(_))
        ));
        let mut dump = fam.to_dump();
        dump.nodes.pop();
        assert!(matches!(
            RepFamily::from_dump(&dump),
            Err(Error::CorruptFamily(_))
        ));
    }
}
